#include "switchgen/backends.hpp"

#include <algorithm>
#include <limits>

#include "switchgen/errors.hpp"

namespace switchgen {

std::vector<double> Backend::next_label_logits(const std::string&, int) {
    throw CapabilityError("backend '" + name() + "' exposes no logprob facility");
}

namespace {

bool rule_matches(const MockRule& rule, const std::string& prompt) {
    switch (rule.match) {
        case MockRule::Match::Contains:
            return prompt.find(rule.pattern) != std::string::npos;
        case MockRule::Match::EndsWith:
            return prompt.ends_with(rule.pattern);
        case MockRule::Match::Equals:
            return prompt == rule.pattern;
    }
    return false;
}

}  // namespace

GenerationResult MockBackend::generate(const GenerationRequest& request) {
    if (request.prompt.empty()) throw ConfigError("generate called with empty prompt");
    if (request.max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
    const MockRule* hit = &default_rule_;
    for (const MockRule& rule : rules_) {
        if (rule_matches(rule, request.prompt)) {
            hit = &rule;
            break;
        }
    }
    GenerationResult result;
    result.text = hit->emit;
    result.token_count = std::min(hit->tokens, request.max_tokens);
    result.finished = hit->finished;
    return result;
}

std::vector<double> MockBackend::next_label_logits(const std::string& prompt, int n) {
    if (n < 1 || n > kMaxPoolSize)
        throw PoolSizeError("pool size must be in [1, 10], got " + std::to_string(n));
    const std::vector<double>* table = nullptr;
    for (const MockLogitRule& rule : logit_rules_) {
        if (rule.contains.empty() || prompt.find(rule.contains) != std::string::npos) {
            table = &rule.logits;
            break;
        }
    }
    if (!table && default_logits_) table = &*default_logits_;
    if (!table)
        throw CapabilityError("mock backend '" + name() + "' has no logit table");
    if (static_cast<int>(table->size()) < n)
        throw DegenerateLogitsError("logit table for '" + name() + "' has " +
                                    std::to_string(table->size()) + " entries, need " +
                                    std::to_string(n));
    return std::vector<double>(table->begin(), table->begin() + n);
}

void CandidatePool::validate() const {
    int n = size();
    if (n < 1 || n > kMaxPoolSize)
        throw PoolSizeError("pool size must be in [1, 10], got " + std::to_string(n));
    if (final_index < 0 || final_index >= n)
        throw ConfigError("final_index " + std::to_string(final_index) +
                          " outside pool of size " + std::to_string(n));
    for (const BackendPtr& b : members)
        if (!b) throw ConfigError("pool contains a null backend");
}

std::vector<double> apply_label_floor(const std::vector<std::optional<double>>& found) {
    double lowest = std::numeric_limits<double>::infinity();
    int present = 0;
    for (const auto& v : found) {
        if (v) {
            lowest = std::min(lowest, *v);
            ++present;
        }
    }
    if (present == 0)
        throw DegenerateLogitsError("no label token present in the returned logprobs");
    const double floor = lowest - 10.0;
    std::vector<double> out;
    out.reserve(found.size());
    for (const auto& v : found) out.push_back(v ? *v : floor);
    return out;
}

}  // namespace switchgen
