#include "switchgen/engine.hpp"

#include <algorithm>
#include <limits>

#include "switchgen/errors.hpp"
#include "switchgen/rng.hpp"
#include "switchgen/util.hpp"

namespace switchgen {

namespace {

json decision_to_json(const SwitchDecision& d) {
    return json{{"chosen", d.chosen_index},
                {"probs", d.distribution.probs},
                {"nucleus", d.nucleus},
                {"forced", d.forced}};
}

SwitchDecision decision_from_json(const json& j) {
    SwitchDecision d;
    d.chosen_index = j.at("chosen").get<int>();
    d.distribution.probs = j.at("probs").get<std::vector<double>>();
    d.nucleus = j.at("nucleus").get<std::vector<int>>();
    d.forced = j.value("forced", false);
    return d;
}

json config_to_json(const GenerationConfig& c) {
    return json{{"patch_size", c.patch_size},
                {"top_p", c.top_p},
                {"max_new_tokens", c.max_new_tokens},
                {"force_final_first_last", c.force_final_first_last},
                {"temperature", c.temperature},
                {"seed", c.seed}};
}

GenerationConfig config_from_json(const json& j) {
    GenerationConfig c;
    c.patch_size = j.value("patch_size", 50);
    c.top_p = j.value("top_p", 0.7);
    c.max_new_tokens = j.value("max_new_tokens", 512);
    c.force_final_first_last = j.value("force_final_first_last", true);
    c.temperature = j.value("temperature", 1.0);
    c.seed = j.value("seed", uint64_t{0});
    return c;
}

SwitchDecision forced_decision(int index, int n) {
    SwitchDecision d;
    d.chosen_index = index;
    d.distribution.probs.assign(n, 0.0);
    d.distribution.probs[index] = 1.0;
    d.nucleus = {index};
    d.forced = true;
    return d;
}

}  // namespace

json record_to_json(const GenerationRecord& r) {
    json decisions = json::array();
    for (const auto& d : r.decisions) decisions.push_back(decision_to_json(d));
    json out{{"query_id", r.query_id},
             {"task", r.task},
             {"instruction", r.instruction},
             {"trace", trace_to_json(r.trace)},
             {"final_text", r.final_text},
             {"model_sequence", r.model_sequence},
             {"decisions", std::move(decisions)},
             {"failed", r.failed},
             {"config", config_to_json(r.config_snapshot)}};
    out["score"] = r.score ? json(*r.score) : json();
    if (!r.error.empty()) out["error"] = r.error;
    return out;
}

GenerationRecord record_from_json(const json& j) {
    GenerationRecord r;
    r.query_id = j.at("query_id").get<std::string>();
    r.task = j.value("task", std::string("default"));
    r.instruction = j.value("instruction", std::string());
    r.trace = trace_from_json(j.at("trace"));
    r.final_text = j.at("final_text").get<std::string>();
    r.model_sequence = j.at("model_sequence").get<std::vector<int>>();
    for (const auto& d : j.value("decisions", json::array())) r.decisions.push_back(decision_from_json(d));
    if (j.contains("score") && !j["score"].is_null()) r.score = j["score"].get<double>();
    r.failed = j.value("failed", false);
    r.error = j.value("error", std::string());
    r.config_snapshot = config_from_json(j.value("config", json::object()));
    return r;
}

GenerationResult generate_patch(Backend& backend, const Query& query, const Trace& trace,
                                const GenerationConfig& config, int remaining_budget,
                                std::optional<uint64_t> request_seed) {
    GenerationRequest request;
    request.prompt = plain_concat(query, trace);
    request.max_tokens = std::min(config.patch_size, remaining_budget);
    request.top_p = config.top_p;
    request.temperature = config.temperature;
    request.seed = request_seed;
    request.stop_on_eos = true;

    GenerationResult result = backend.generate(request);
    if (result.token_count > request.max_tokens)
        throw ProtocolError("backend '" + backend.name() + "' exceeded max_tokens");
    result.text = sanitize_segment(std::move(result.text));
    return result;
}

GenerationRecord run_generation(const Query& query, const CandidatePool& pool,
                                SwitchPolicy& policy, const GenerationConfig& config,
                                Trace start, std::optional<double> token_cap) {
    pool.validate();
    config.validate();
    const int budget = query.max_new_tokens > 0 ? query.max_new_tokens : config.max_new_tokens;

    GenerationRecord record;
    record.query_id = query.id;
    record.task = query.task;
    record.instruction = query.instruction;
    record.config_snapshot = config;
    record.trace = std::move(start);
    for (const Segment& seg : record.trace.segments) {
        record.model_sequence.push_back(seg.model_index);
        record.decisions.push_back(forced_decision(seg.model_index, pool.size()));
    }

    const uint64_t qhash = fnv1a64(query.id);
    try {
        while (true) {
            int remaining = budget - record.trace.total_tokens;
            if (remaining <= 0) break;
            if (token_cap && static_cast<double>(record.trace.total_tokens) >= *token_cap) break;

            const int patch_index = static_cast<int>(record.trace.segments.size());
            SwitchDecision decision;
            if (config.force_final_first_last && patch_index == 0) {
                decision = forced_decision(pool.final_index, pool.size());
            } else if (config.force_final_first_last && remaining <= config.patch_size) {
                // Prospective last patch.
                decision = forced_decision(pool.final_index, pool.size());
            } else {
                SwitchDistribution dist = policy.distribution(query, record.trace, pool);
                dist.validate();
                auto rng = make_rng({config.seed, qhash, substream::kSwitchDecision,
                                     static_cast<uint64_t>(patch_index)});
                decision = select_top_p(dist, config.top_p, rng);
            }

            Backend& backend = *pool.members[decision.chosen_index];
            uint64_t request_seed = seed_chain({config.seed, qhash, substream::kRequestSeed,
                                                static_cast<uint64_t>(patch_index)});
            GenerationResult result;
            try {
                result = generate_patch(backend, query, record.trace, config, remaining,
                                        request_seed);
            } catch (const BackendError&) {
                // One retry per patch on transport failure, same decision.
                result = generate_patch(backend, query, record.trace, config, remaining,
                                        request_seed);
            }

            record.trace.append(Segment{decision.chosen_index, result.text, result.token_count});
            record.model_sequence.push_back(decision.chosen_index);
            record.decisions.push_back(std::move(decision));

            if (result.finished) break;
            if (result.token_count == 0) break;  // no progress; avoid spinning
        }
    } catch (const std::exception& e) {
        record.failed = true;
        record.error = e.what();
    }

    record.final_text.clear();
    for (const Segment& seg : record.trace.segments) record.final_text += seg.text;
    return record;
}

GenerationRecord switch_generate(const Query& query, const CandidatePool& pool,
                                 SwitchPolicy& policy, const GenerationConfig& config) {
    return run_generation(query, pool, policy, config);
}

void batch_generate(const std::vector<Query>& queries, const CandidatePool& pool,
                    SwitchPolicy& policy, const GenerationConfig& config, int concurrency_limit,
                    const std::function<void(size_t, GenerationRecord&&)>& emit) {
    if (concurrency_limit < 1) throw ConfigError("concurrency limit must be >= 1");
    parallel_ordered<GenerationRecord>(
        queries.size(), concurrency_limit,
        [&](size_t i) { return switch_generate(queries[i], pool, policy, config); },
        [&](size_t i, GenerationRecord&& r) { emit(i, std::move(r)); });
}

std::vector<GenerationRecord> batch_generate(const std::vector<Query>& queries,
                                             const CandidatePool& pool, SwitchPolicy& policy,
                                             const GenerationConfig& config,
                                             int concurrency_limit) {
    std::vector<GenerationRecord> records(queries.size());
    batch_generate(queries, pool, policy, config, concurrency_limit,
                   [&](size_t i, GenerationRecord&& r) { records[i] = std::move(r); });
    return records;
}

OraclePolicy::OraclePolicy(ScoreFn score_fn, GenerationConfig config, size_t max_paths)
    : score_fn_(std::move(score_fn)), config_(std::move(config)), max_paths_(max_paths) {
    if (!score_fn_) throw ConfigError("oracle policy requires a score function");
}

double OraclePolicy::best_downstream(const Query& query, const CandidatePool& pool,
                                     const Trace& trace, bool finished, size_t* paths) {
    const int budget = query.max_new_tokens > 0 ? query.max_new_tokens : config_.max_new_tokens;
    int remaining = budget - trace.total_tokens;
    if (finished || remaining <= 0) {
        if (++*paths > max_paths_)
            throw ConfigError("oracle policy enumeration exceeded " +
                              std::to_string(max_paths_) + " paths; environment not enumerable");
        std::string response;
        for (const Segment& seg : trace.segments) response += seg.text;
        return score_fn_(query, response);
    }
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < pool.size(); ++i) {
        GenerationResult result = generate_patch(*pool.members[i], query, trace, config_,
                                                 remaining, std::nullopt);
        Trace extended = trace;
        extended.append(Segment{i, result.text, result.token_count});
        bool done = result.finished || result.token_count == 0;
        best = std::max(best, best_downstream(query, pool, extended, done, paths));
    }
    return best;
}

SwitchDistribution OraclePolicy::distribution(const Query& query, const Trace& trace,
                                              const CandidatePool& pool) {
    const int budget = query.max_new_tokens > 0 ? query.max_new_tokens : config_.max_new_tokens;
    int remaining = budget - trace.total_tokens;
    int best_index = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    size_t paths = 0;
    for (int i = 0; i < pool.size(); ++i) {
        GenerationResult result = generate_patch(*pool.members[i], query, trace, config_,
                                                 remaining, std::nullopt);
        Trace extended = trace;
        extended.append(Segment{i, result.text, result.token_count});
        bool done = result.finished || result.token_count == 0;
        double s = best_downstream(query, pool, extended, done, &paths);
        if (s > best_score) {
            best_score = s;
            best_index = i;
        }
    }
    SwitchDistribution dist{std::vector<double>(pool.size(), 0.0)};
    dist.probs[best_index] = 1.0;
    return dist;
}

}  // namespace switchgen
