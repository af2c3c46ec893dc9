#include "switchgen/core.hpp"

#include <cctype>

#include "switchgen/errors.hpp"

namespace switchgen {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string begins_marker(int i) { return "<model " + std::to_string(i) + " begins>"; }
std::string ends_marker(int i) { return "<model " + std::to_string(i) + " ends>"; }

// Matches "<model D begins>" or "<model D ends>" at position pos. On match,
// fills digit/kind/length. kind: 0 = begins, 1 = ends.
bool match_marker(const std::string& s, size_t pos, int* digit, int* kind, size_t* len) {
    static const std::string head = "<model ";
    if (s.compare(pos, head.size(), head) != 0) return false;
    size_t dpos = pos + head.size();
    if (dpos >= s.size() || !is_digit(s[dpos])) return false;
    static const std::string begins_tail = " begins>";
    static const std::string ends_tail = " ends>";
    if (s.compare(dpos + 1, begins_tail.size(), begins_tail) == 0) {
        *digit = s[dpos] - '0';
        *kind = 0;
        *len = head.size() + 1 + begins_tail.size();
        return true;
    }
    if (s.compare(dpos + 1, ends_tail.size(), ends_tail) == 0) {
        *digit = s[dpos] - '0';
        *kind = 1;
        *len = head.size() + 1 + ends_tail.size();
        return true;
    }
    return false;
}

// First full marker at or after pos, npos if none.
size_t find_marker(const std::string& s, size_t pos, int* digit, int* kind, size_t* len) {
    while ((pos = s.find("<model ", pos)) != std::string::npos) {
        if (match_marker(s, pos, digit, kind, len)) return pos;
        ++pos;
    }
    return std::string::npos;
}

}  // namespace

void GenerationConfig::validate() const {
    if (patch_size < 1) throw ConfigError("patch_size must be >= 1");
    if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
    if (patch_size > max_new_tokens)
        throw ConfigError("patch_size must not exceed max_new_tokens");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
    if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
}

std::string closing_question(int n) {
    return "Which model should generate the next segment? Please respond with a "
           "number from 0 to " +
           std::to_string(n - 1) + ". The answer is model ";
}

std::string render_switcher_prompt(const Query& query, const Trace& trace, int n) {
    if (n < 1 || n > kMaxPoolSize)
        throw PoolSizeError("pool size must be in [1, 10], got " + std::to_string(n));
    std::string out = query.instruction;
    for (const Segment& seg : trace.segments) {
        if (seg.model_index < 0 || seg.model_index >= n)
            throw AttributionError("segment attributed to model " +
                                   std::to_string(seg.model_index) + " but pool has " +
                                   std::to_string(n) + " members");
        out += ' ';
        out += begins_marker(seg.model_index);
        out += ' ';
        out += seg.text;
        out += ' ';
        out += ends_marker(seg.model_index);
    }
    out += ' ';
    out += closing_question(n);
    return out;
}

std::pair<std::string, Trace> parse_attributed_trace(const std::string& prompt, int n) {
    if (n < 1 || n > kMaxPoolSize)
        throw PoolSizeError("pool size must be in [1, 10], got " + std::to_string(n));

    const std::string question = closing_question(n);
    const std::string suffix = " " + question;
    if (prompt.size() < suffix.size() ||
        prompt.compare(prompt.size() - suffix.size(), suffix.size(), suffix) != 0) {
        size_t off = prompt.size() > suffix.size() ? prompt.size() - suffix.size() : 0;
        throw MalformedTraceError("prompt does not end with the closing question", off);
    }
    const std::string body = prompt.substr(0, prompt.size() - suffix.size());

    int digit = 0, kind = 0;
    size_t mlen = 0;
    size_t first = find_marker(body, 0, &digit, &kind, &mlen);

    Trace trace;
    std::string instruction;
    if (first == std::string::npos) {
        return {body, trace};
    }
    if (kind != 0)
        throw MalformedTraceError("end marker before any begin marker", first);
    if (first == 0 || body[first - 1] != ' ')
        throw MalformedTraceError("missing separator before first marker",
                                  first == 0 ? 0 : first - 1);
    instruction = body.substr(0, first - 1);

    size_t pos = first;
    while (true) {
        // pos sits on a begins marker (verified by the caller of this loop arm).
        if (!match_marker(body, pos, &digit, &kind, &mlen) || kind != 0)
            throw MalformedTraceError("expected a begin marker", pos);
        int model_index = digit;
        if (model_index >= n)
            throw MalformedTraceError("marker names model " + std::to_string(model_index) +
                                          " outside the pool of " + std::to_string(n),
                                      pos);
        size_t text_start = pos + mlen;
        if (text_start >= body.size() || body[text_start] != ' ')
            throw MalformedTraceError("missing separator after begin marker", text_start);
        ++text_start;

        const std::string closing = ends_marker(model_index);
        size_t end_pos = body.find(closing, text_start);
        if (end_pos == std::string::npos)
            throw MalformedTraceError("begin marker has no matching end marker", pos);
        if (end_pos < text_start + 1 || body[end_pos - 1] != ' ')
            throw MalformedTraceError("missing separator before end marker", end_pos);
        std::string text = body.substr(text_start, end_pos - 1 - text_start);

        // Sanitized segments contain no full marker; one inside means the
        // input interleaved markers out of order.
        int d2 = 0, k2 = 0;
        size_t l2 = 0;
        size_t stray = find_marker(text, 0, &d2, &k2, &l2);
        if (stray != std::string::npos)
            throw MalformedTraceError("misordered marker inside segment text",
                                      text_start + stray);

        trace.append(Segment{model_index, std::move(text), 0});

        pos = end_pos + closing.size();
        if (pos == body.size()) break;
        if (body[pos] != ' ')
            throw MalformedTraceError("missing separator after end marker", pos);
        ++pos;
        if (pos == body.size())
            throw MalformedTraceError("dangling separator after end marker", pos - 1);
    }
    return {instruction, trace};
}

std::string sanitize_segment(std::string text) {
    bool changed = true;
    while (changed) {
        changed = false;
        std::string out;
        out.reserve(text.size());
        size_t pos = 0;
        while (pos < text.size()) {
            int digit = 0, kind = 0;
            size_t len = 0;
            if (text[pos] == '<' && match_marker(text, pos, &digit, &kind, &len)) {
                pos += len;
                changed = true;
            } else {
                out += text[pos];
                ++pos;
            }
        }
        text = std::move(out);
    }
    return text;
}

std::string plain_concat(const Query& query, const Trace& trace) {
    std::string out = query.instruction;
    for (const Segment& seg : trace.segments) out += seg.text;
    return out;
}

json trace_to_json(const Trace& trace) {
    json segs = json::array();
    for (const Segment& s : trace.segments)
        segs.push_back(json::array({s.model_index, s.text, s.token_count}));
    return json{{"segments", std::move(segs)}, {"total_tokens", trace.total_tokens}};
}

Trace trace_from_json(const json& j) {
    Trace t;
    for (const auto& s : j.at("segments")) {
        if (!s.is_array() || s.size() != 3)
            throw ConfigError("trace segment must be [model_index, text, token_count]");
        t.append(Segment{s[0].get<int>(), s[1].get<std::string>(), s[2].get<int>()});
    }
    int total = j.at("total_tokens").get<int>();
    if (total != t.total_tokens)
        throw ConfigError("trace total_tokens does not match the sum of its segments");
    return t;
}

json query_to_json(const Query& q) {
    return json{{"id", q.id},
                {"task", q.task},
                {"instruction", q.instruction},
                {"gold", q.gold},
                {"max_new_tokens", q.max_new_tokens}};
}

Query query_from_json(const json& j) {
    Query q;
    q.id = j.at("id").get<std::string>();
    q.task = j.value("task", std::string("default"));
    q.instruction = j.at("instruction").get<std::string>();
    if (q.instruction.empty()) throw ConfigError("query " + q.id + " has empty instruction");
    q.gold = j.value("gold", json());
    q.max_new_tokens = j.value("max_new_tokens", 0);
    if (q.max_new_tokens < 0) throw ConfigError("query " + q.id + ": max_new_tokens must be >= 1");
    return q;
}

}  // namespace switchgen
