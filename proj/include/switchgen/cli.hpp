#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "switchgen/config.hpp"

namespace switchgen {

// Flag-level overrides: flags win over the config file.
struct CliOverrides {
    std::optional<uint64_t> seed;
    std::optional<int> patch_size;
    std::optional<double> top_p;
    std::optional<int> max_new_tokens;
    std::optional<bool> force_final_first_last;
    std::optional<int> k;
    std::optional<int> instances_per_task;
    std::optional<int> concurrency;
    std::optional<std::string> policy_kind;
    std::optional<std::string> policy_sequence;
};

void apply_overrides(RunConfig& config, const CliOverrides& overrides);

struct RunArgs {
    std::string config_path;
    CliOverrides overrides;
    std::string instruction;  // ad-hoc query, or:
    std::string tasks_path;   // pick --id from a task file
    std::string query_id;
    std::string task = "default";
    std::string gold_json;    // optional gold payload for ad-hoc queries
    bool emit_json = false;
};

struct BatchArgs {
    std::string config_path;
    CliOverrides overrides;
    std::string tasks_path;
    std::string out_path;
    bool resume = false;
};

struct CollectArgs {
    std::string config_path;
    CliOverrides overrides;
    std::string tasks_path;
    std::string out_path;
};

struct EvalArgs {
    std::string config_path;
    CliOverrides overrides;
    std::string records_path;
    std::string tasks_path;
    std::string out_path;      // scored records; default records_path + ".scored.jsonl"
    std::string summary_path;  // optional summary JSONL
};

struct AnalyzeArgs {
    std::string records_path;
    std::string out_path;  // report JSONL
    std::string csv_path;  // optional
};

struct ExportDistillArgs {
    std::string records_path;
    std::string out_path;
    double min_score = 0.0;
};

struct MergeArgs {
    std::vector<std::string> inputs;
    std::string out_path;
};

// Exit codes: 0 success, 1 generation/operational failure, 2 config error.
int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err);
int cmd_batch(const BatchArgs& args, std::ostream& out, std::ostream& err);
int cmd_collect(const CollectArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err);
int cmd_export_distill(const ExportDistillArgs& args, std::ostream& out, std::ostream& err);
int cmd_merge_datasets(const MergeArgs& args, std::ostream& out, std::ostream& err);

}  // namespace switchgen
