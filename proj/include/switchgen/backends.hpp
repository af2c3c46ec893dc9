#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "switchgen/core.hpp"

namespace switchgen {

struct GenerationRequest {
    std::string prompt;
    int max_tokens = 1;
    double top_p = 1.0;
    double temperature = 1.0;
    std::optional<uint64_t> seed;
    bool stop_on_eos = true;
};

struct GenerationResult {
    std::string text;
    int token_count = 0;
    // True iff the model emitted end-of-sequence before hitting max_tokens;
    // the generation loop must stop appending for this query.
    bool finished = false;
};

// Uniform interface to text generators and label-logit providers.
class Backend {
  public:
    explicit Backend(std::string name) : name_(std::move(name)) {}
    virtual ~Backend() = default;

    const std::string& name() const { return name_; }

    virtual GenerationResult generate(const GenerationRequest& request) = 0;

    // One log-score per label digit "0".."n-1" for the next token position.
    // Default: the backend has no logprob facility.
    virtual std::vector<double> next_label_logits(const std::string& prompt, int n);

  private:
    std::string name_;
};

using BackendPtr = std::shared_ptr<Backend>;

// Deterministic test double standing in for a model with a skill profile.
// First matching rule wins; emissions should be pre-sanitized.
struct MockRule {
    enum class Match { Contains, EndsWith, Equals };
    Match match = Match::Contains;
    std::string pattern;
    std::string emit;
    int tokens = 0;  // clamped to request.max_tokens
    bool finished = false;
};

struct MockLogitRule {
    std::string contains;  // empty matches everything
    std::vector<double> logits;
};

class MockBackend : public Backend {
  public:
    MockBackend(std::string name, std::vector<MockRule> rules, MockRule default_rule)
        : Backend(std::move(name)),
          rules_(std::move(rules)),
          default_rule_(std::move(default_rule)) {}

    void set_logit_rules(std::vector<MockLogitRule> rules,
                         std::optional<std::vector<double>> default_logits) {
        logit_rules_ = std::move(rules);
        default_logits_ = std::move(default_logits);
    }

    GenerationResult generate(const GenerationRequest& request) override;
    std::vector<double> next_label_logits(const std::string& prompt, int n) override;

  private:
    std::vector<MockRule> rules_;
    MockRule default_rule_;
    std::vector<MockLogitRule> logit_rules_;
    std::optional<std::vector<double>> default_logits_;
};

struct HttpBackendOptions {
    std::string url;         // e.g. http://host:port (path /v1/completions is appended)
    std::string model;
    std::string auth_token;  // sent as Bearer token when nonempty
    double timeout_s = 60.0;
    int max_retries = 3;
    int initial_backoff_ms = 100;
    int concurrency = 4;     // per-backend in-flight request cap
};

struct HttpBackendStats {
    std::atomic<int> requests{0};
    std::atomic<int> retries{0};
};

// Client for OpenAI-compatible /v1/completions servers. 4xx responses are
// config errors and are not retried; 5xx and transport faults are retried
// with exponential backoff up to max_retries.
class HttpBackend : public Backend {
  public:
    HttpBackend(std::string name, HttpBackendOptions options);
    ~HttpBackend() override;

    GenerationResult generate(const GenerationRequest& request) override;
    std::vector<double> next_label_logits(const std::string& prompt, int n) override;

    const HttpBackendStats& stats() const { return stats_; }

  private:
    json post_completion(const json& body);

    HttpBackendOptions options_;
    HttpBackendStats stats_;
    struct Gate;
    std::unique_ptr<Gate> gate_;
};

// Ordered generator backends with a designated "final" (aligned) model. The
// order is stable for the life of a run: the index IS the model's identity
// in prompts and dataset files.
struct CandidatePool {
    std::vector<BackendPtr> members;
    int final_index = 0;

    int size() const { return static_cast<int>(members.size()); }
    void validate() const;
};

// Applies the floor rule to a provider's partial label logprobs: labels
// absent from `found` get (min found) - 10.
std::vector<double> apply_label_floor(const std::vector<std::optional<double>>& found);

}  // namespace switchgen
