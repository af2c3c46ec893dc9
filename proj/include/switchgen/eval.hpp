#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "switchgen/core.hpp"
#include "switchgen/engine.hpp"

namespace switchgen {

enum class ScorerKind { ExactMatch, ContainsNormalized, NumericLast, MultipleChoice, External };

// Task scorer. Built-in kinds are pure functions of (response, gold) with
// scores in [0, 1] and never throw on garbage response text; the external
// kind posts to an HTTP judge.
struct Scorer {
    ScorerKind kind = ScorerKind::ExactMatch;
    std::vector<std::string> choices = {"A", "B", "C", "D"};  // multiple_choice labels
    std::string endpoint;                                     // external judge URL
    double timeout_s = 60.0;
    int min_interval_ms = 0;  // external judge rate limit

    double score(const std::string& response, const json& gold) const;

    static Scorer from_json(const json& j);
    json to_json() const;
};

// Lowercase, strip punctuation and articles, collapse whitespace.
std::string normalize_answer(const std::string& text);

// Last number appearing in the response, if any. Comma thousands groups are
// accepted ("1,234"); bare comma-separated lists are split.
std::optional<double> extract_last_number(const std::string& response);

// Last standalone occurrence of any choice label.
std::optional<std::string> extract_last_choice(const std::string& response,
                                               const std::vector<std::string>& choices);

struct TaskResult {
    std::string task;
    double mean_score = 0.0;
    int n = 0;
    int failed = 0;  // failed generations, scored 0 and counted
    std::vector<std::pair<std::string, double>> per_query;
};

// Scores every record against golds (keyed by query id), attaches the score
// to the record, returns the aggregate. Missing golds are a hard error.
// Records are scored concurrently up to the limit; scorers are pure, and the
// external judge serializes itself through its rate limiter.
TaskResult evaluate(std::vector<GenerationRecord>& records, const Scorer& scorer,
                    const std::map<std::string, json>& golds,
                    const std::string& task = "default", int concurrency = 1);

// Relative solo performance of the pretrained model: (P - max(P,F,A)) / max.
double p_performance(double P, double F, double A);

// Relative gain of the collaboration over the best solo model:
// (C - max(P,F,A)) / max.
double p_helpfulness(double P, double F, double A, double C);

}  // namespace switchgen
