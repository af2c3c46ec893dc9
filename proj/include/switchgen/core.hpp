#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nlohmann/json.hpp"

namespace switchgen {

using json = nlohmann::json;

// One instruction to answer. `gold` is an opaque scorer payload.
// max_new_tokens == 0 means "inherit the run config's budget" (512 unless
// overridden); a positive value pins this query's own budget.
struct Query {
    std::string id;
    std::string task;
    std::string instruction;
    json gold;
    int max_new_tokens = 0;
};

// A model-attributed piece of a partially generated response. token_count is
// whatever the producing backend reports; pools mix tokenizers, so counts are
// never compared across models.
struct Segment {
    int model_index = 0;
    std::string text;
    int token_count = 0;
};

// The model-attributed partial response accumulated so far.
struct Trace {
    std::vector<Segment> segments;
    int total_tokens = 0;

    void append(Segment seg) {
        total_tokens += seg.token_count;
        segments.push_back(std::move(seg));
    }
    bool empty() const { return segments.empty(); }
};

struct GenerationConfig {
    int patch_size = 50;
    double top_p = 0.7;
    int max_new_tokens = 512;
    bool force_final_first_last = true;
    double temperature = 1.0;
    uint64_t seed = 0;

    void validate() const;
};

// Largest pool a single-digit switcher label can address.
inline constexpr int kMaxPoolSize = 10;

// The exact text the switcher model is asked to complete. The prompt ends
// with a single trailing space after "model"; the next token is the label.
std::string closing_question(int n);

// instruction, then each segment wrapped in "<model i begins>" / "<model i
// ends>" markers, then the closing question; elements joined by single ASCII
// spaces. Throws PoolSizeError / AttributionError.
std::string render_switcher_prompt(const Query& query, const Trace& trace, int n);

// Inverse of render_switcher_prompt. Recovered token counts are 0 (they live
// in the sidecar JSON form, not in the prompt). Throws MalformedTraceError
// with the byte offset of the first violation.
std::pair<std::string, Trace> parse_attributed_trace(const std::string& prompt, int n);

// Deletes every "<model D begins>" / "<model D ends>" substring, repeatedly
// until none remain, so generated text can never fake a trace boundary.
std::string sanitize_segment(std::string text);

// What candidate generators see: instruction plus undelimited segment text.
// Only the switcher sees the candidate-marked trace.
std::string plain_concat(const Query& query, const Trace& trace);

// Canonical line-oriented JSON forms used by every dataset file.
// Trace: {"segments": [[model_index, text, token_count], ...], "total_tokens": N}
json trace_to_json(const Trace& trace);
Trace trace_from_json(const json& j);

json query_to_json(const Query& q);
Query query_from_json(const json& j);

}  // namespace switchgen
