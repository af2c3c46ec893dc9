#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace switchgen {

// Misconfiguration (bad config file, unknown backend, malformed gold, ...).
// Never retried.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Pool size outside [1, 10]: switcher labels must be single decimal digits.
struct PoolSizeError : ConfigError {
    using ConfigError::ConfigError;
};

// A segment claims a model index that does not exist in the pool.
struct AttributionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A switcher prompt that does not follow the rendering grammar.
struct MalformedTraceError : std::runtime_error {
    size_t offset;
    MalformedTraceError(const std::string& what, size_t byte_offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
};

// Transport-level backend failure after the retry budget is spent.
struct BackendError : std::runtime_error {
    int attempts;
    BackendError(const std::string& what, int attempts_made)
        : std::runtime_error(what + " (after " + std::to_string(attempts_made) + " attempt(s))"),
          attempts(attempts_made) {}
};

// A backend cannot serve the requested facility (e.g. no logprobs).
struct CapabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The remote replied, but not in the shape the wire protocol promises.
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// None of the n label tokens appeared in the provider's logprobs.
struct DegenerateLogitsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidDistributionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidInstanceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScorerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace switchgen
