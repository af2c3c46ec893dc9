#include "switchgen/eval.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "switchgen/errors.hpp"
#include "switchgen/util.hpp"

namespace switchgen {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// One global limiter per judge endpoint.
std::mutex judge_mu;
std::map<std::string, std::chrono::steady_clock::time_point> judge_last_call;

void respect_rate_limit(const std::string& endpoint, int min_interval_ms) {
    if (min_interval_ms <= 0) return;
    std::unique_lock lock(judge_mu);
    auto now = std::chrono::steady_clock::now();
    auto it = judge_last_call.find(endpoint);
    if (it != judge_last_call.end()) {
        auto next_ok = it->second + std::chrono::milliseconds(min_interval_ms);
        if (now < next_ok) {
            lock.unlock();
            std::this_thread::sleep_until(next_ok);
            lock.lock();
            now = std::chrono::steady_clock::now();
        }
    }
    judge_last_call[endpoint] = now;
}

std::string gold_as_string(const json& gold) {
    if (gold.is_string()) return gold.get<std::string>();
    if (gold.is_number_integer()) return std::to_string(gold.get<long long>());
    if (gold.is_number()) {
        std::ostringstream out;
        out << gold.get<double>();
        return out.str();
    }
    if (gold.is_boolean()) return gold.get<bool>() ? "true" : "false";
    throw ConfigError("gold payload is not representable as text: " + gold.dump());
}

double gold_as_number(const json& gold) {
    if (gold.is_number()) return gold.get<double>();
    if (gold.is_string()) {
        try {
            size_t used = 0;
            double v = std::stod(gold.get<std::string>(), &used);
            if (used == gold.get<std::string>().size()) return v;
        } catch (...) {
        }
    }
    throw ConfigError("gold payload is not numeric: " + gold.dump());
}

double score_external(const Scorer& scorer, const std::string& response, const json& gold) {
    if (scorer.endpoint.empty()) throw ConfigError("external scorer has no endpoint");
    respect_rate_limit(scorer.endpoint, scorer.min_interval_ms);

    size_t scheme = scorer.endpoint.find("://");
    if (scheme == std::string::npos)
        throw ConfigError("external scorer endpoint must include a scheme");
    size_t path_pos = scorer.endpoint.find('/', scheme + 3);
    std::string host = path_pos == std::string::npos ? scorer.endpoint
                                                     : scorer.endpoint.substr(0, path_pos);
    std::string path = path_pos == std::string::npos ? "/score"
                                                     : scorer.endpoint.substr(path_pos);

    httplib::Client client(host);
    client.set_connection_timeout(std::chrono::milliseconds(static_cast<int>(scorer.timeout_s * 1000)));
    client.set_read_timeout(std::chrono::milliseconds(static_cast<int>(scorer.timeout_s * 1000)));
    json body{{"response", response}, {"gold", gold}};
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res)
        throw ScorerError("external judge unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw ScorerError("external judge returned HTTP " + std::to_string(res->status));
    double value;
    try {
        value = json::parse(res->body).at("score").get<double>();
    } catch (const json::exception& e) {
        throw ScorerError(std::string("external judge reply unparseable: ") + e.what());
    }
    if (!std::isfinite(value)) throw ScorerError("external judge returned a non-finite score");
    return value;
}

}  // namespace

std::string normalize_answer(const std::string& text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (char c : text) {
        unsigned char u = static_cast<unsigned char>(c);
        if (std::ispunct(u)) continue;
        lowered += static_cast<char>(std::tolower(u));
    }
    std::istringstream in(lowered);
    std::string word, out;
    while (in >> word) {
        if (word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

std::optional<double> extract_last_number(const std::string& response) {
    std::optional<double> last;
    size_t i = 0;
    const size_t n = response.size();
    while (i < n) {
        char c = response[i];
        bool sign = (c == '-' || c == '+') && i + 1 < n &&
                    std::isdigit(static_cast<unsigned char>(response[i + 1]));
        if (!sign && !std::isdigit(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        size_t start = i;
        if (sign) ++i;
        while (i < n && std::isdigit(static_cast<unsigned char>(response[i]))) ++i;
        // Thousands groups: ",ddd" repeated.
        while (i + 3 < n && response[i] == ',' &&
               std::isdigit(static_cast<unsigned char>(response[i + 1])) &&
               std::isdigit(static_cast<unsigned char>(response[i + 2])) &&
               std::isdigit(static_cast<unsigned char>(response[i + 3])) &&
               (i + 4 >= n || !std::isdigit(static_cast<unsigned char>(response[i + 4])))) {
            i += 4;
        }
        if (i < n && response[i] == '.' && i + 1 < n &&
            std::isdigit(static_cast<unsigned char>(response[i + 1]))) {
            ++i;
            while (i < n && std::isdigit(static_cast<unsigned char>(response[i]))) ++i;
        }
        if (i < n && (response[i] == 'e' || response[i] == 'E')) {
            size_t j = i + 1;
            if (j < n && (response[j] == '+' || response[j] == '-')) ++j;
            if (j < n && std::isdigit(static_cast<unsigned char>(response[j]))) {
                ++j;
                while (j < n && std::isdigit(static_cast<unsigned char>(response[j]))) ++j;
                i = j;
            }
        }
        std::string token = response.substr(start, i - start);
        token.erase(std::remove(token.begin(), token.end(), ','), token.end());
        try {
            last = std::stod(token);
        } catch (...) {
        }
    }
    return last;
}

std::optional<std::string> extract_last_choice(const std::string& response,
                                               const std::vector<std::string>& choices) {
    std::optional<std::string> best;
    size_t best_pos = 0;
    for (const std::string& label : choices) {
        if (label.empty()) continue;
        size_t pos = 0;
        while ((pos = response.find(label, pos)) != std::string::npos) {
            bool left_ok = pos == 0 || !is_alnum(response[pos - 1]);
            size_t end = pos + label.size();
            bool right_ok = end >= response.size() || !is_alnum(response[end]);
            if (left_ok && right_ok && (!best || pos >= best_pos)) {
                best = label;
                best_pos = pos;
            }
            ++pos;
        }
    }
    return best;
}

double Scorer::score(const std::string& response, const json& gold) const {
    switch (kind) {
        case ScorerKind::ExactMatch:
            return normalize_answer(response) == normalize_answer(gold_as_string(gold)) ? 1.0
                                                                                        : 0.0;
        case ScorerKind::ContainsNormalized: {
            std::string hay = normalize_answer(response);
            std::string needle = normalize_answer(gold_as_string(gold));
            if (needle.empty()) throw ConfigError("contains_normalized gold normalizes to empty");
            return hay.find(needle) != std::string::npos ? 1.0 : 0.0;
        }
        case ScorerKind::NumericLast: {
            double want = gold_as_number(gold);
            auto got = extract_last_number(response);
            if (!got) return 0.0;
            double tol = 1e-6 * std::max(1.0, std::abs(want));
            return std::abs(*got - want) <= tol ? 1.0 : 0.0;
        }
        case ScorerKind::MultipleChoice: {
            std::string want = gold_as_string(gold);
            if (std::find(choices.begin(), choices.end(), want) == choices.end())
                throw ConfigError("multiple_choice gold '" + want + "' is not a choice label");
            auto got = extract_last_choice(response, choices);
            return got && *got == want ? 1.0 : 0.0;
        }
        case ScorerKind::External:
            return score_external(*this, response, gold);
    }
    throw ConfigError("unknown scorer kind");
}

Scorer Scorer::from_json(const json& j) {
    Scorer s;
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "exact_match") s.kind = ScorerKind::ExactMatch;
    else if (kind == "contains_normalized") s.kind = ScorerKind::ContainsNormalized;
    else if (kind == "numeric_last") s.kind = ScorerKind::NumericLast;
    else if (kind == "multiple_choice") s.kind = ScorerKind::MultipleChoice;
    else if (kind == "external") s.kind = ScorerKind::External;
    else throw ConfigError("unknown scorer kind: " + kind);
    if (j.contains("choices")) s.choices = j["choices"].get<std::vector<std::string>>();
    s.endpoint = j.value("endpoint", std::string());
    s.timeout_s = j.value("timeout_s", 60.0);
    s.min_interval_ms = j.value("min_interval_ms", 0);
    if (s.kind == ScorerKind::External && s.endpoint.empty())
        throw ConfigError("external scorer requires an endpoint");
    return s;
}

json Scorer::to_json() const {
    const char* name = nullptr;
    switch (kind) {
        case ScorerKind::ExactMatch: name = "exact_match"; break;
        case ScorerKind::ContainsNormalized: name = "contains_normalized"; break;
        case ScorerKind::NumericLast: name = "numeric_last"; break;
        case ScorerKind::MultipleChoice: name = "multiple_choice"; break;
        case ScorerKind::External: name = "external"; break;
    }
    json out{{"kind", name}};
    if (kind == ScorerKind::MultipleChoice) out["choices"] = choices;
    if (kind == ScorerKind::External) {
        out["endpoint"] = endpoint;
        out["timeout_s"] = timeout_s;
        out["min_interval_ms"] = min_interval_ms;
    }
    return out;
}

TaskResult evaluate(std::vector<GenerationRecord>& records, const Scorer& scorer,
                    const std::map<std::string, json>& golds, const std::string& task,
                    int concurrency) {
    std::vector<std::string> missing;
    for (const auto& r : records)
        if (!golds.count(r.query_id)) missing.push_back(r.query_id);
    if (!missing.empty()) {
        std::string ids;
        for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
        throw ConfigError("no gold for query id(s): " + ids);
    }

    TaskResult result;
    result.task = task;
    result.n = static_cast<int>(records.size());
    double sum = 0.0;
    parallel_ordered<double>(
        records.size(), concurrency,
        [&](size_t i) {
            const GenerationRecord& r = records[i];
            return r.failed ? 0.0 : scorer.score(r.final_text, golds.at(r.query_id));
        },
        [&](size_t i, double&& s) {
            GenerationRecord& r = records[i];
            if (r.failed) ++result.failed;
            r.score = s;
            sum += s;
            result.per_query.emplace_back(r.query_id, s);
        });
    result.mean_score = result.n > 0 ? sum / result.n : 0.0;
    return result;
}

double p_performance(double P, double F, double A) {
    double best = std::max({P, F, A});
    if (best <= 0.0) throw UndefinedMetricError("max(P, F, A) must be positive");
    return (P - best) / best;
}

double p_helpfulness(double P, double F, double A, double C) {
    double best = std::max({P, F, A});
    if (best <= 0.0) throw UndefinedMetricError("max(P, F, A) must be positive");
    return (C - best) / best;
}

}  // namespace switchgen
