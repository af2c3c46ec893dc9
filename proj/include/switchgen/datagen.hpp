#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "switchgen/backends.hpp"
#include "switchgen/core.hpp"
#include "switchgen/eval.hpp"

namespace switchgen {

// One (query, trace, pool) -> best-next-model training record for the
// switcher, with the rollout utilities that produced the label.
struct SftInstance {
    std::string query_id;
    std::string prompt;  // rendered switcher prompt, ends with "The answer is model "
    int label = 0;       // lowest index attaining max(utilities)
    std::vector<double> utilities;
    int k = 0;
    Trace trace_snapshot;
    double cap_fraction = 0.0;
    std::vector<std::vector<double>> branch_scores;  // n x k, persisted for re-labeling
};

json sft_instance_to_json(const SftInstance& inst);
SftInstance sft_instance_from_json(const json& j);

struct SampledTrace {
    Trace trace;
    double cap_fraction = 0.0;
    bool finished = false;  // generation ended before the cap; no next segment exists
};

// Random-switching trace capped at cap_fraction * budget: uniform model
// choice per patch (full sampling, no nucleus truncation), forcing disabled,
// stop at the first patch boundary where total tokens >= the cap.
SampledTrace sample_random_trace(const Query& query, const CandidatePool& pool,
                                 const GenerationConfig& config, double cap_min, double cap_max,
                                 uint64_t attempt_substream);

struct DivergentBranch {
    Trace trace;     // shared trace plus one patch by candidate i
    bool finished = false;
};

// One divergent step: every candidate generates one patch from the shared
// trace. Throws on any branch failure (utilities must be comparable).
std::vector<DivergentBranch> divergent_step(const Query& query, const Trace& trace,
                                            const CandidatePool& pool,
                                            const GenerationConfig& config,
                                            uint64_t attempt_substream);

enum class RolloutMode {
    Random,      // k continuations under uniform random switching
    Stratified,  // continuation j follows the base-n digits of j: with
                 // k = n^depth this enumerates every continuation path with
                 // multiplicity matching its probability under random
                 // switching, making the utility an exact expectation
};

// Mean task score over k completions of the extended trace. Per-continuation
// scores are appended to *out_scores when provided.
double rollout_utility(const Query& query, const DivergentBranch& branch,
                       const CandidatePool& pool, int k, const Scorer& scorer,
                       const GenerationConfig& config, RolloutMode mode,
                       uint64_t branch_substream, std::vector<double>* out_scores = nullptr,
                       int concurrency = 1);

// Lowest index attaining the maximum utility. Non-finite utilities are an
// invalid instance.
int label_instance(const std::vector<double>& utilities);

struct CollectOptions {
    int k = 32;
    int instances_per_task = 10000;
    double cap_min = 0.1;
    double cap_max = 0.9;
    RolloutMode mode = RolloutMode::Random;
    int concurrency = 1;  // rollout parallelism within one instance
};

struct CollectManifest {
    int target = 0;
    int emitted = 0;
    int attempts = 0;
    std::map<std::string, int> discards;
    std::vector<int> label_histogram;

    json to_json() const;
};

using ScorerResolver = std::function<Scorer(const Query&)>;

// Repeats sample -> diverge -> rollout -> label over the queries (cycling)
// until `instances_per_task` instances were emitted. Aborts when more than
// half of at least 20 attempts were discarded.
CollectManifest collect_sft_dataset(const std::vector<Query>& queries, const CandidatePool& pool,
                                    const CollectOptions& options, const ScorerResolver& scorers,
                                    const GenerationConfig& config,
                                    const std::function<void(const SftInstance&)>& emit);

}  // namespace switchgen
