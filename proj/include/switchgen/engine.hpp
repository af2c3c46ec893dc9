#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "switchgen/backends.hpp"
#include "switchgen/core.hpp"
#include "switchgen/switcher.hpp"

namespace switchgen {

// A finished response with per-patch model attribution; the input to every
// analysis pass.
struct GenerationRecord {
    std::string query_id;
    std::string task;
    std::string instruction;
    Trace trace;
    std::string final_text;
    std::vector<int> model_sequence;       // one entry per patch
    std::vector<SwitchDecision> decisions; // one entry per patch
    std::optional<double> score;
    bool failed = false;
    std::string error;
    GenerationConfig config_snapshot;
};

json record_to_json(const GenerationRecord& record);
GenerationRecord record_from_json(const json& j);

// One patch from one backend: prompt is the undelimited concatenation, the
// token budget is min(patch_size, remaining), output text is sanitized.
GenerationResult generate_patch(Backend& backend, const Query& query, const Trace& trace,
                                const GenerationConfig& config, int remaining_budget,
                                std::optional<uint64_t> request_seed);

// The switch-generation loop, generalized so the data pipeline can reuse it:
// start from `start` (already counted against the budget), optionally stop at
// the first patch boundary where total tokens >= *token_cap. Backend and
// policy failures abort the query and return a partial record flagged failed.
GenerationRecord run_generation(const Query& query, const CandidatePool& pool,
                                SwitchPolicy& policy, const GenerationConfig& config,
                                Trace start = {}, std::optional<double> token_cap = {});

// Alternate (switch decision -> one patch) until the backend reports
// end-of-sequence or the token budget runs out. With force_final_first_last,
// the first patch and the prospective last patch (remaining <= patch_size)
// go to pool.final_index without consulting the policy.
GenerationRecord switch_generate(const Query& query, const CandidatePool& pool,
                                 SwitchPolicy& policy, const GenerationConfig& config);

// Runs queries concurrently up to the limit; emit is called in input order
// regardless of completion order. Individual query failures are recorded in
// the emitted record, not fatal to the batch.
void batch_generate(const std::vector<Query>& queries, const CandidatePool& pool,
                    SwitchPolicy& policy, const GenerationConfig& config, int concurrency_limit,
                    const std::function<void(size_t, GenerationRecord&&)>& emit);

std::vector<GenerationRecord> batch_generate(const std::vector<Query>& queries,
                                             const CandidatePool& pool, SwitchPolicy& policy,
                                             const GenerationConfig& config,
                                             int concurrency_limit);

// Test-only policy: puts probability 1 on the candidate that maximizes the
// exhaustively enumerated downstream score (ties to the lowest index).
// Only usable with deterministic backends and small enumerable environments.
class OraclePolicy : public SwitchPolicy {
  public:
    using ScoreFn = std::function<double(const Query&, const std::string& response)>;

    OraclePolicy(ScoreFn score_fn, GenerationConfig config, size_t max_paths = 200000);
    SwitchDistribution distribution(const Query& query, const Trace& trace,
                                    const CandidatePool& pool) override;
    const char* kind() const override { return "oracle"; }

  private:
    double best_downstream(const Query& query, const CandidatePool& pool, const Trace& trace,
                           bool finished, size_t* paths);

    ScoreFn score_fn_;
    GenerationConfig config_;
    size_t max_paths_;
};

}  // namespace switchgen
