#pragma once

#include <random>
#include <vector>

#include "switchgen/backends.hpp"
#include "switchgen/core.hpp"

namespace switchgen {

// Probability vector over pool members.
struct SwitchDistribution {
    std::vector<double> probs;

    int size() const { return static_cast<int>(probs.size()); }
    // Throws InvalidDistributionError unless finite, nonnegative, sum == 1 +/- 1e-9.
    void validate() const;
};

struct SwitchDecision {
    int chosen_index = 0;
    SwitchDistribution distribution;
    std::vector<int> nucleus;  // kept indices, ascending
    bool forced = false;       // first/last-patch forcing, policy not consulted
};

// Softmax over the raw label scores (restricted to the n labels, then
// normalized).
std::vector<double> softmax(const std::vector<double>& logits);

SwitchDistribution uniform_distribution(int n);

// Nucleus selection over the model distribution: sort by probability
// descending (ties by ascending index), keep the shortest prefix with
// cumulative probability >= p, renormalize over the kept set, sample.
SwitchDecision select_top_p(const SwitchDistribution& dist, double p, std::mt19937_64& rng);

// A switching policy answers: given the query, the trace so far and the
// candidate pool, who should speak next?
class SwitchPolicy {
  public:
    virtual ~SwitchPolicy() = default;
    virtual SwitchDistribution distribution(const Query& query, const Trace& trace,
                                            const CandidatePool& pool) = 0;
    virtual const char* kind() const = 0;
};

class RandomPolicy : public SwitchPolicy {
  public:
    SwitchDistribution distribution(const Query&, const Trace&, const CandidatePool& pool) override;
    const char* kind() const override { return "random"; }
};

// Probability 1 on the sequence entry for the current patch, cycling when
// exhausted. Position is read off the trace length so the policy itself
// stays stateless; `offset` subtracts patches that precede the sequence
// (used when continuing from a pre-existing trace).
class FixedSequencePolicy : public SwitchPolicy {
  public:
    explicit FixedSequencePolicy(std::vector<int> sequence, int offset = 0);
    SwitchDistribution distribution(const Query&, const Trace& trace,
                                    const CandidatePool& pool) override;
    const char* kind() const override { return "fixed"; }

  private:
    std::vector<int> sequence_;
    int offset_;
};

// The trained switcher: render the attributed prompt, read label logits from
// the switcher backend, softmax over the n labels.
class LmPolicy : public SwitchPolicy {
  public:
    explicit LmPolicy(BackendPtr switcher_backend);
    SwitchDistribution distribution(const Query& query, const Trace& trace,
                                    const CandidatePool& pool) override;
    const char* kind() const override { return "lm"; }

  private:
    BackendPtr switcher_;
};

// Parses "012" style index strings from run configs.
std::vector<int> parse_sequence_string(const std::string& s);

}  // namespace switchgen
