#include "switchgen/switcher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "switchgen/errors.hpp"
#include "switchgen/rng.hpp"

namespace switchgen {

void SwitchDistribution::validate() const {
    if (probs.empty()) throw InvalidDistributionError("empty distribution");
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p)) throw InvalidDistributionError("non-finite probability");
        if (p < 0.0) throw InvalidDistributionError("negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw InvalidDistributionError("probabilities sum to " + std::to_string(sum));
}

std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw InvalidDistributionError("softmax of empty vector");
    double hi = *std::max_element(logits.begin(), logits.end());
    if (!std::isfinite(hi)) throw InvalidDistributionError("non-finite logit");
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - hi);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

SwitchDistribution uniform_distribution(int n) {
    if (n < 1) throw InvalidDistributionError("pool must be nonempty");
    return SwitchDistribution{std::vector<double>(n, 1.0 / n)};
}

SwitchDecision select_top_p(const SwitchDistribution& dist, double p, std::mt19937_64& rng) {
    if (!(p > 0.0 && p <= 1.0)) throw InvalidDistributionError("top-p must be in (0, 1]");
    const auto& probs = dist.probs;
    if (probs.empty()) throw InvalidDistributionError("empty distribution");
    for (double v : probs)
        if (!std::isfinite(v) || v < 0.0)
            throw InvalidDistributionError("invalid probability in distribution");

    std::vector<int> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;
    });

    std::vector<int> kept;
    double mass = 0.0;
    for (int idx : order) {
        kept.push_back(idx);
        mass += probs[idx];
        if (mass >= p) break;
    }
    // Float shortfall on p == 1 keeps the full set, which is the intent.
    if (mass <= 0.0)
        throw InvalidDistributionError("nucleus has zero mass");

    double u = next_unit(rng) * mass;
    int chosen = kept.back();
    double acc = 0.0;
    for (int idx : kept) {
        acc += probs[idx];
        if (u < acc) {
            chosen = idx;
            break;
        }
    }

    SwitchDecision decision;
    decision.chosen_index = chosen;
    decision.distribution = dist;
    decision.nucleus = kept;
    std::sort(decision.nucleus.begin(), decision.nucleus.end());
    return decision;
}

SwitchDistribution RandomPolicy::distribution(const Query&, const Trace&,
                                              const CandidatePool& pool) {
    return uniform_distribution(pool.size());
}

FixedSequencePolicy::FixedSequencePolicy(std::vector<int> sequence, int offset)
    : sequence_(std::move(sequence)), offset_(offset) {
    if (sequence_.empty()) throw ConfigError("fixed switching sequence must be nonempty");
}

SwitchDistribution FixedSequencePolicy::distribution(const Query&, const Trace& trace,
                                                     const CandidatePool& pool) {
    int position = static_cast<int>(trace.segments.size()) - offset_;
    if (position < 0) position = 0;
    int entry = sequence_[position % sequence_.size()];
    if (entry < 0 || entry >= pool.size())
        throw ConfigError("fixed sequence entry " + std::to_string(entry) +
                          " outside pool of size " + std::to_string(pool.size()));
    SwitchDistribution dist{std::vector<double>(pool.size(), 0.0)};
    dist.probs[entry] = 1.0;
    return dist;
}

LmPolicy::LmPolicy(BackendPtr switcher_backend) : switcher_(std::move(switcher_backend)) {
    if (!switcher_) throw ConfigError("lm policy requires a switcher backend");
}

SwitchDistribution LmPolicy::distribution(const Query& query, const Trace& trace,
                                          const CandidatePool& pool) {
    std::string prompt = render_switcher_prompt(query, trace, pool.size());
    std::vector<double> logits = switcher_->next_label_logits(prompt, pool.size());
    if (static_cast<int>(logits.size()) != pool.size())
        throw DegenerateLogitsError("switcher returned " + std::to_string(logits.size()) +
                                    " logits for a pool of " + std::to_string(pool.size()));
    return SwitchDistribution{softmax(logits)};
}

std::vector<int> parse_sequence_string(const std::string& s) {
    if (s.empty()) throw ConfigError("fixed switching sequence must be nonempty");
    std::vector<int> seq;
    seq.reserve(s.size());
    for (char c : s) {
        if (c < '0' || c > '9')
            throw ConfigError("fixed sequence must be an index string like \"012\", got '" + s +
                              "'");
        seq.push_back(c - '0');
    }
    return seq;
}

}  // namespace switchgen
