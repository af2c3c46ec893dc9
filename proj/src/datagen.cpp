#include "switchgen/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "switchgen/engine.hpp"
#include "switchgen/errors.hpp"
#include "switchgen/rng.hpp"
#include "switchgen/util.hpp"

namespace switchgen {

namespace {

// Rollouts and trace sampling follow f_random = Uniform(n): full sampling
// (top_p = 1) so no candidate is truncated away, and no first/last forcing.
GenerationConfig rollout_config(const GenerationConfig& config, uint64_t substream_seed) {
    GenerationConfig c = config;
    c.top_p = 1.0;
    c.force_final_first_last = false;
    c.seed = substream_seed;
    return c;
}

std::string response_text(const Trace& trace) {
    std::string out;
    for (const Segment& seg : trace.segments) out += seg.text;
    return out;
}

}  // namespace

json sft_instance_to_json(const SftInstance& inst) {
    return json{{"prompt", inst.prompt},
                {"completion", std::to_string(inst.label)},
                {"query_id", inst.query_id},
                {"label", inst.label},
                {"utilities", inst.utilities},
                {"k", inst.k},
                {"cap_fraction", inst.cap_fraction},
                {"trace", trace_to_json(inst.trace_snapshot)},
                {"branch_scores", inst.branch_scores}};
}

SftInstance sft_instance_from_json(const json& j) {
    SftInstance inst;
    inst.prompt = j.at("prompt").get<std::string>();
    inst.query_id = j.at("query_id").get<std::string>();
    inst.label = j.at("label").get<int>();
    inst.utilities = j.at("utilities").get<std::vector<double>>();
    inst.k = j.at("k").get<int>();
    inst.cap_fraction = j.at("cap_fraction").get<double>();
    inst.trace_snapshot = trace_from_json(j.at("trace"));
    inst.branch_scores = j.value("branch_scores", std::vector<std::vector<double>>{});
    return inst;
}

SampledTrace sample_random_trace(const Query& query, const CandidatePool& pool,
                                 const GenerationConfig& config, double cap_min, double cap_max,
                                 uint64_t attempt_substream) {
    if (!(cap_min >= 0.0 && cap_min <= cap_max && cap_max <= 1.0))
        throw ConfigError("cap range must satisfy 0 <= min <= max <= 1");

    const int budget = query.max_new_tokens > 0 ? query.max_new_tokens : config.max_new_tokens;
    auto cap_rng = make_rng({config.seed, fnv1a64(query.id), substream::kCapFraction,
                             attempt_substream});
    double cap_fraction = cap_min + next_unit(cap_rng) * (cap_max - cap_min);
    double cap_tokens = cap_fraction * budget;

    uint64_t stream = seed_chain({config.seed, fnv1a64(query.id), substream::kTraceSample,
                                  attempt_substream});
    RandomPolicy random_policy;
    GenerationRecord record = run_generation(query, pool, random_policy,
                                             rollout_config(config, stream), Trace{}, cap_tokens);
    if (record.failed) throw BackendError("trace sampling failed: " + record.error, 1);

    SampledTrace out;
    out.cap_fraction = cap_fraction;
    out.trace = std::move(record.trace);
    // Stopping below the cap means the generation ended on its own: there is
    // no next-segment decision left to label. (A trace that merely exhausted
    // the budget surfaces later as a no-budget divergent step.)
    out.finished = static_cast<double>(out.trace.total_tokens) < cap_tokens;
    return out;
}

std::vector<DivergentBranch> divergent_step(const Query& query, const Trace& trace,
                                            const CandidatePool& pool,
                                            const GenerationConfig& config,
                                            uint64_t attempt_substream) {
    pool.validate();
    const int budget = query.max_new_tokens > 0 ? query.max_new_tokens : config.max_new_tokens;
    const int remaining = budget - trace.total_tokens;
    if (remaining <= 0)
        throw InvalidInstanceError("no token budget left for a divergent step");

    std::vector<DivergentBranch> branches;
    branches.reserve(pool.size());
    for (int i = 0; i < pool.size(); ++i) {
        uint64_t request_seed = seed_chain({config.seed, fnv1a64(query.id),
                                            substream::kRequestSeed, attempt_substream,
                                            static_cast<uint64_t>(i)});
        GenerationResult result = generate_patch(*pool.members[i], query, trace, config,
                                                 remaining, request_seed);
        DivergentBranch branch;
        branch.trace = trace;
        branch.trace.append(Segment{i, result.text, result.token_count});
        branch.finished = result.finished || branch.trace.total_tokens >= budget;
        branches.push_back(std::move(branch));
    }
    return branches;
}

double rollout_utility(const Query& query, const DivergentBranch& branch,
                       const CandidatePool& pool, int k, const Scorer& scorer,
                       const GenerationConfig& config, RolloutMode mode,
                       uint64_t branch_substream, std::vector<double>* out_scores,
                       int concurrency) {
    if (k < 1) throw ConfigError("rollout k must be >= 1");
    pool.validate();

    const int budget = query.max_new_tokens > 0 ? query.max_new_tokens : config.max_new_tokens;
    const int remaining = budget - branch.trace.total_tokens;
    const int n = pool.size();

    // Depth of the continuation path space, for stratified enumeration.
    int depth = 0;
    if (!branch.finished && remaining > 0)
        depth = (remaining + config.patch_size - 1) / config.patch_size;
    uint64_t path_space = 1;
    for (int d = 0; d < depth && path_space <= (1ULL << 40); ++d) path_space *= n;

    std::vector<double> scores(k);
    auto run_one = [&](size_t j) -> double {
        if (branch.finished || remaining <= 0)
            return scorer.score(response_text(branch.trace), query.gold);

        uint64_t stream = seed_chain({config.seed, fnv1a64(query.id), substream::kRollout,
                                      branch_substream, static_cast<uint64_t>(j)});
        GenerationRecord record;
        if (mode == RolloutMode::Stratified) {
            uint64_t path = static_cast<uint64_t>(j) % path_space;
            std::vector<int> digits(depth, 0);
            for (int d = depth - 1; d >= 0; --d) {
                digits[d] = static_cast<int>(path % n);
                path /= n;
            }
            FixedSequencePolicy policy(digits, static_cast<int>(branch.trace.segments.size()));
            record = run_generation(query, pool, policy, rollout_config(config, stream),
                                    branch.trace);
        } else {
            RandomPolicy policy;
            record = run_generation(query, pool, policy, rollout_config(config, stream),
                                    branch.trace);
        }
        if (record.failed) throw BackendError("rollout failed: " + record.error, 1);
        return scorer.score(record.final_text, query.gold);
    };

    parallel_ordered<double>(
        static_cast<size_t>(k), concurrency, run_one,
        [&](size_t j, double&& s) { scores[j] = s; });

    double sum = 0.0;
    for (double s : scores) sum += s;
    if (out_scores) out_scores->insert(out_scores->end(), scores.begin(), scores.end());
    return sum / k;
}

int label_instance(const std::vector<double>& utilities) {
    if (utilities.empty()) throw InvalidInstanceError("utilities vector is empty");
    int best = 0;
    for (size_t i = 0; i < utilities.size(); ++i) {
        if (!std::isfinite(utilities[i]))
            throw InvalidInstanceError("non-finite utility at index " + std::to_string(i));
        if (utilities[i] > utilities[best]) best = static_cast<int>(i);
    }
    return best;
}

json CollectManifest::to_json() const {
    return json{{"target", target},
                {"emitted", emitted},
                {"attempts", attempts},
                {"discards", discards},
                {"label_histogram", label_histogram}};
}

CollectManifest collect_sft_dataset(const std::vector<Query>& queries, const CandidatePool& pool,
                                    const CollectOptions& options, const ScorerResolver& scorers,
                                    const GenerationConfig& config,
                                    const std::function<void(const SftInstance&)>& emit) {
    if (queries.empty()) throw ConfigError("collect requires a nonempty query set");
    if (options.instances_per_task < 1) throw ConfigError("instances_per_task must be >= 1");
    pool.validate();

    CollectManifest manifest;
    manifest.target = options.instances_per_task;
    manifest.label_histogram.assign(pool.size(), 0);

    auto discard = [&](const std::string& reason) { ++manifest.discards[reason]; };

    uint64_t attempt = 0;
    while (manifest.emitted < options.instances_per_task) {
        const Query& query = queries[attempt % queries.size()];
        uint64_t attempt_substream = attempt;
        ++attempt;
        ++manifest.attempts;

        try {
            SampledTrace sampled = sample_random_trace(query, pool, config, options.cap_min,
                                                       options.cap_max, attempt_substream);
            if (sampled.finished) {
                discard("finished_before_cap");
            } else {
                auto branches = divergent_step(query, sampled.trace, pool, config,
                                               attempt_substream);
                Scorer scorer = scorers(query);
                SftInstance inst;
                inst.query_id = query.id;
                inst.k = options.k;
                inst.cap_fraction = sampled.cap_fraction;
                inst.trace_snapshot = sampled.trace;
                inst.prompt = render_switcher_prompt(query, sampled.trace, pool.size());
                for (int i = 0; i < pool.size(); ++i) {
                    std::vector<double> branch_scores;
                    uint64_t branch_substream = seed_chain({attempt_substream,
                                                            static_cast<uint64_t>(i)});
                    double utility = rollout_utility(query, branches[i], pool, options.k, scorer,
                                                     config, options.mode, branch_substream,
                                                     &branch_scores, options.concurrency);
                    inst.utilities.push_back(utility);
                    inst.branch_scores.push_back(std::move(branch_scores));
                }
                inst.label = label_instance(inst.utilities);
                ++manifest.label_histogram[inst.label];
                ++manifest.emitted;
                emit(inst);
            }
        } catch (const ConfigError&) {
            throw;  // misconfiguration is never an instance-level discard
        } catch (const InvalidInstanceError&) {
            discard("no_budget");
        } catch (const ScorerError&) {
            discard("scorer_failure");
        } catch (const std::exception&) {
            discard("backend_failure");
        }

        int discarded = manifest.attempts - manifest.emitted;
        if (manifest.attempts >= 20 && discarded * 2 > manifest.attempts)
            throw ConfigError("aborting collection: " + std::to_string(discarded) + " of " +
                              std::to_string(manifest.attempts) +
                              " attempts discarded; environment unsuitable for rollouts");
    }
    return manifest;
}

}  // namespace switchgen
