#include "switchgen/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "switchgen/errors.hpp"

namespace switchgen {

namespace {

double require_score(const GenerationRecord& r) {
    if (!r.score)
        throw ConfigError("record " + r.query_id + " has no score; run eval first");
    return *r.score;
}

std::string seq_key(const std::vector<int>& seq) {
    std::string s;
    for (int v : seq) s += std::to_string(v) + ".";
    return s;
}

std::vector<SequenceStat> mine_group(const std::vector<GenerationRecord>& records, int min_len,
                                     int max_len) {
    std::set<std::vector<int>> seen;
    for (const auto& r : records) {
        const auto& ms = r.model_sequence;
        for (int len = min_len; len <= max_len; ++len)
            for (size_t i = 0; i + len <= ms.size(); ++i)
                seen.insert(std::vector<int>(ms.begin() + i, ms.begin() + i + len));
    }
    std::vector<SequenceStat> stats;
    stats.reserve(seen.size());
    for (const auto& seq : seen) stats.push_back(sequence_stat(records, seq));
    std::sort(stats.begin(), stats.end(), [](const SequenceStat& a, const SequenceStat& b) {
        if (a.frequency != b.frequency) return a.frequency > b.frequency;
        return seq_key(a.sequence) < seq_key(b.sequence);
    });
    return stats;
}

json stat_to_json(const SequenceStat& s, const std::string& task) {
    json j{{"type", "sequence_stat"},
           {"sequence", s.sequence},
           {"frequency", s.frequency},
           {"n_with", s.n_with},
           {"n_without", s.n_without}};
    j["treatment_effect"] = s.treatment_effect ? json(*s.treatment_effect) : json();
    if (!task.empty()) j["task"] = task;
    return j;
}

std::string seq_label(const std::vector<int>& seq) {
    std::string s;
    for (size_t i = 0; i < seq.size(); ++i) {
        if (i) s += "-";
        s += std::to_string(seq[i]);
    }
    return s;
}

}  // namespace

bool contains_sequence(const std::vector<int>& model_sequence, const std::vector<int>& seq) {
    if (seq.empty() || seq.size() > model_sequence.size()) return false;
    return std::search(model_sequence.begin(), model_sequence.end(), seq.begin(), seq.end()) !=
           model_sequence.end();
}

double sequence_frequency(const std::vector<GenerationRecord>& records,
                          const std::vector<int>& seq) {
    if (records.empty()) return 0.0;
    int with = 0;
    for (const auto& r : records)
        if (contains_sequence(r.model_sequence, seq)) ++with;
    return static_cast<double>(with) / static_cast<double>(records.size());
}

std::optional<double> treatment_effect(const std::vector<GenerationRecord>& records,
                                       const std::vector<int>& seq) {
    double sum_with = 0.0, sum_without = 0.0;
    int n_with = 0, n_without = 0;
    for (const auto& r : records) {
        double s = require_score(r);
        if (contains_sequence(r.model_sequence, seq)) {
            sum_with += s;
            ++n_with;
        } else {
            sum_without += s;
            ++n_without;
        }
    }
    if (n_with == 0 || n_without == 0) return std::nullopt;
    return sum_with / n_with - sum_without / n_without;
}

SequenceStat sequence_stat(const std::vector<GenerationRecord>& records,
                           const std::vector<int>& seq) {
    SequenceStat stat;
    stat.sequence = seq;
    stat.frequency = sequence_frequency(records, seq);
    stat.treatment_effect = treatment_effect(records, seq);
    for (const auto& r : records)
        contains_sequence(r.model_sequence, seq) ? ++stat.n_with : ++stat.n_without;
    return stat;
}

std::vector<SequenceStat> mine_sequences(const std::vector<GenerationRecord>& records,
                                         int min_len, int max_len) {
    if (min_len < 1 || max_len < min_len) throw ConfigError("bad sequence length bounds");
    return mine_group(records, min_len, max_len);
}

LocationHistogram location_histogram(const std::vector<GenerationRecord>& records,
                                     int n_models) {
    if (records.empty()) throw ConfigError("location histogram requires records");
    if (n_models < 1) throw ConfigError("n_models must be >= 1");
    LocationHistogram hist;
    hist.counts.assign(n_models, {0, 0, 0});
    for (const auto& r : records) {
        const auto& ms = r.model_sequence;
        const double T = static_cast<double>(ms.size());
        for (size_t i = 0; i < ms.size(); ++i) {
            int model = ms[i];
            if (model < 0 || model >= n_models)
                throw ConfigError("record " + r.query_id + " names model " +
                                  std::to_string(model) + " outside the pool");
            double mid = (static_cast<double>(i) + 0.5) / T;
            int region = mid < 1.0 / 3.0 ? 0 : (mid >= 2.0 / 3.0 ? 2 : 1);
            ++hist.counts[model][region];
            ++hist.total_patches;
        }
    }
    hist.region_share.assign(n_models, {0.0, 0.0, 0.0});
    for (int region = 0; region < 3; ++region) {
        int total = 0;
        for (int m = 0; m < n_models; ++m) total += hist.counts[m][region];
        if (total == 0) continue;
        for (int m = 0; m < n_models; ++m)
            hist.region_share[m][region] =
                static_cast<double>(hist.counts[m][region]) / static_cast<double>(total);
    }
    return hist;
}

double switching_rate(const GenerationRecord& record) {
    const auto& ms = record.model_sequence;
    if (ms.size() <= 1) return 0.0;
    int changes = 0;
    for (size_t i = 1; i < ms.size(); ++i)
        if (ms[i] != ms[i - 1]) ++changes;
    return static_cast<double>(changes) / static_cast<double>(ms.size() - 1);
}

int export_distill(const std::vector<GenerationRecord>& records, double min_score,
                   std::ostream& out) {
    int exported = 0;
    for (const auto& r : records) {
        if (require_score(r) < min_score) continue;
        out << json{{"instruction", r.instruction}, {"response", r.final_text}}.dump() << "\n";
        ++exported;
    }
    return exported;
}

double one_tailed_z_test(double p1, int n1, double p2, int n2) {
    if (n1 < 1 || n2 < 1) throw ConfigError("z-test sample sizes must be >= 1");
    if (p1 < 0.0 || p1 > 1.0 || p2 < 0.0 || p2 > 1.0)
        throw ConfigError("z-test proportions must lie in [0, 1]");
    double pooled = (p1 * n1 + p2 * n2) / static_cast<double>(n1 + n2);
    double variance = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2);
    if (variance <= 0.0) return p1 <= p2 ? 1.0 : 0.0;
    double z = (p1 - p2) / std::sqrt(variance);
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

double r_squared(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw ConfigError("r_squared needs two equal-length samples of size >= 2");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return (sxy * sxy) / (sxx * syy);
}

AnalysisReport analyze_records(const std::vector<GenerationRecord>& records) {
    if (records.empty()) throw ConfigError("analysis requires at least one record");
    AnalysisReport report;
    report.n_records = static_cast<int>(records.size());
    for (const auto& r : records) {
        require_score(r);
        for (int m : r.model_sequence) report.n_models = std::max(report.n_models, m + 1);
    }
    if (report.n_models == 0) throw ConfigError("records contain no patches");

    std::map<std::string, std::vector<GenerationRecord>> by_task;
    for (const auto& r : records) by_task[r.task].push_back(r);
    for (const auto& [task, group] : by_task) report.per_task[task] = mine_group(group, 2, 3);
    report.pooled = mine_group(records, 2, 3);

    // Cross-task means of the within-task statistics.
    std::map<std::string, TaskMeanStat> means;
    std::map<std::string, int> seen_in_tasks;
    std::map<std::string, double> effect_sums;
    for (const auto& [task, stats] : report.per_task) {
        for (const auto& s : stats) {
            std::string key = seq_key(s.sequence);
            TaskMeanStat& m = means[key];
            m.sequence = s.sequence;
            m.mean_frequency += s.frequency;
            ++seen_in_tasks[key];
            if (s.treatment_effect) {
                effect_sums[key] += *s.treatment_effect;
                ++m.tasks_with_effect;
            }
        }
    }
    for (auto& [key, m] : means) {
        m.mean_frequency /= seen_in_tasks[key];
        if (m.tasks_with_effect > 0)
            m.mean_treatment_effect = effect_sums[key] / m.tasks_with_effect;
        report.task_means.push_back(m);
    }

    report.locations = location_histogram(records, report.n_models);

    double rate_sum = 0.0;
    for (const auto& r : records) rate_sum += switching_rate(r);
    report.mean_switching_rate = rate_sum / records.size();
    for (const auto& [task, group] : by_task) {
        double task_sum = 0.0;
        for (const auto& r : group) task_sum += switching_rate(r);
        report.switching_rate_by_task[task] = task_sum / group.size();
    }

    std::vector<double> freqs, effects;
    for (const auto& s : report.pooled) {
        if (s.treatment_effect) {
            freqs.push_back(s.frequency);
            effects.push_back(*s.treatment_effect);
        }
    }
    if (freqs.size() >= 2) {
        double r2 = r_squared(freqs, effects);
        report.frequency_effect_r2 = r2;
    }
    return report;
}

void write_report_jsonl(const AnalysisReport& report, std::ostream& out) {
    out << json{{"type", "summary"},
                {"n_records", report.n_records},
                {"n_models", report.n_models},
                {"mean_switching_rate", report.mean_switching_rate},
                {"frequency_effect_r2",
                 report.frequency_effect_r2 ? json(*report.frequency_effect_r2) : json()}}
               .dump()
        << "\n";
    for (const auto& [task, rate] : report.switching_rate_by_task)
        out << json{{"type", "switching_rate"}, {"task", task}, {"rate", rate}}.dump() << "\n";
    for (const auto& s : report.pooled) out << stat_to_json(s, "").dump() << "\n";
    for (const auto& [task, stats] : report.per_task)
        for (const auto& s : stats) out << stat_to_json(s, task).dump() << "\n";
    for (const auto& m : report.task_means) {
        json j{{"type", "sequence_task_mean"},
               {"sequence", m.sequence},
               {"mean_frequency", m.mean_frequency},
               {"tasks_with_effect", m.tasks_with_effect}};
        j["mean_treatment_effect"] =
            m.mean_treatment_effect ? json(*m.mean_treatment_effect) : json();
        out << j.dump() << "\n";
    }
    json locations{{"type", "location_histogram"},
                   {"total_patches", report.locations.total_patches}};
    json rows = json::array();
    for (int m = 0; m < report.n_models; ++m) {
        rows.push_back(json{{"model", m},
                            {"counts", report.locations.counts[m]},
                            {"region_share", report.locations.region_share[m]}});
    }
    locations["models"] = std::move(rows);
    out << locations.dump() << "\n";
}

void write_report_table(const AnalysisReport& report, std::ostream& out) {
    out << "records: " << report.n_records << "  models: " << report.n_models
        << "  mean switching rate: " << std::fixed << std::setprecision(4)
        << report.mean_switching_rate << "\n";
    if (report.frequency_effect_r2)
        out << "frequency/treatment-effect R^2: " << std::setprecision(4)
            << *report.frequency_effect_r2 << "\n";
    out << "\nsequence     frequency   treatment_effect   n_with   n_without\n";
    size_t shown = 0;
    for (const auto& s : report.pooled) {
        if (++shown > 20) break;
        out << std::left << std::setw(13) << seq_label(s.sequence) << std::right << std::setw(9)
            << std::setprecision(4) << s.frequency << "   ";
        if (s.treatment_effect)
            out << std::setw(16) << std::setprecision(4) << *s.treatment_effect;
        else
            out << std::setw(16) << "undefined";
        out << std::setw(9) << s.n_with << std::setw(12) << s.n_without << "\n";
    }
    out << "\nlocation shares (begin/middle/end):\n";
    for (int m = 0; m < report.n_models; ++m) {
        out << "model " << m << ": ";
        for (int region = 0; region < 3; ++region)
            out << std::setprecision(4) << report.locations.region_share[m][region]
                << (region < 2 ? " / " : "\n");
    }
    out.unsetf(std::ios::floatfield);
}

void write_report_csv(const AnalysisReport& report, std::ostream& out) {
    out << "task,sequence,frequency,treatment_effect,n_with,n_without\n";
    auto emit = [&](const std::string& task, const SequenceStat& s) {
        out << task << "," << seq_label(s.sequence) << "," << s.frequency << ",";
        if (s.treatment_effect) out << *s.treatment_effect;
        out << "," << s.n_with << "," << s.n_without << "\n";
    };
    for (const auto& s : report.pooled) emit("__pooled__", s);
    for (const auto& [task, stats] : report.per_task)
        for (const auto& s : stats) emit(task, s);
}

}  // namespace switchgen
