#pragma once

#include <array>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "switchgen/engine.hpp"

namespace switchgen {

// Per-switching-sequence statistics over a set of scored records.
struct SequenceStat {
    std::vector<int> sequence;  // length 2 or 3
    double frequency = 0.0;     // fraction of records containing it
    std::optional<double> treatment_effect;  // absent when either group is empty
    int n_with = 0;
    int n_without = 0;
};

bool contains_sequence(const std::vector<int>& model_sequence, const std::vector<int>& seq);

// Fraction of records whose model_sequence contains seq as a contiguous
// subsequence; a record counts once regardless of multiplicity.
double sequence_frequency(const std::vector<GenerationRecord>& records,
                          const std::vector<int>& seq);

// Mean score of records containing seq minus mean score of the rest; absent
// (not zero) when either group is empty.
std::optional<double> treatment_effect(const std::vector<GenerationRecord>& records,
                                       const std::vector<int>& seq);

SequenceStat sequence_stat(const std::vector<GenerationRecord>& records,
                           const std::vector<int>& seq);

// Every distinct contiguous subsequence of length [min_len, max_len] observed
// across the records, with its statistics.
std::vector<SequenceStat> mine_sequences(const std::vector<GenerationRecord>& records,
                                         int min_len = 2, int max_len = 3);

// Patch positions by midpoint fraction (i + 0.5) / T: begin < 1/3,
// end >= 2/3, middle otherwise.
struct LocationHistogram {
    std::vector<std::array<int, 3>> counts;        // [model][region]
    std::vector<std::array<double, 3>> region_share;  // normalized within each region
    int total_patches = 0;
};

LocationHistogram location_histogram(const std::vector<GenerationRecord>& records, int n_models);

// Adjacent patch pairs with differing model index over T - 1; 0 when T <= 1.
double switching_rate(const GenerationRecord& record);

// Writes {"instruction", "response"} SFT pairs for records with
// score >= min_score; returns the number exported.
int export_distill(const std::vector<GenerationRecord>& records, double min_score,
                   std::ostream& out);

// Upper-tail p-value of the pooled two-proportion z-test for H1: p1 > p2.
double one_tailed_z_test(double p1, int n1, double p2, int n2);

// Coefficient of determination of the least-squares line through (x, y).
double r_squared(const std::vector<double>& xs, const std::vector<double>& ys);

// Cross-task average of a sequence's within-task statistics.
struct TaskMeanStat {
    std::vector<int> sequence;
    double mean_frequency = 0.0;           // over tasks where the sequence was mined
    std::optional<double> mean_treatment_effect;  // over tasks where it is defined
    int tasks_with_effect = 0;
};

// Full post-hoc report: per-task and pooled sequence stats, their cross-task
// means, location histogram, switching rates, frequency/treatment-effect
// correlation.
struct AnalysisReport {
    std::map<std::string, std::vector<SequenceStat>> per_task;
    std::vector<SequenceStat> pooled;
    std::vector<TaskMeanStat> task_means;
    LocationHistogram locations;
    double mean_switching_rate = 0.0;
    std::map<std::string, double> switching_rate_by_task;
    std::optional<double> frequency_effect_r2;  // absent with < 2 usable sequences
    int n_records = 0;
    int n_models = 0;
};

AnalysisReport analyze_records(const std::vector<GenerationRecord>& records);

void write_report_jsonl(const AnalysisReport& report, std::ostream& out);
void write_report_table(const AnalysisReport& report, std::ostream& out);
void write_report_csv(const AnalysisReport& report, std::ostream& out);

}  // namespace switchgen
