// Command-line front end: wires run configs to the generation, data
// collection, evaluation and analysis pipelines.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "switchgen/cli.hpp"

namespace {

// CLI11 binds through concrete lvalues; stage overrides here, then move the
// set ones into CliOverrides.
struct OverrideFlags {
    std::optional<uint64_t> seed;
    std::optional<int> patch_size;
    std::optional<double> top_p;
    std::optional<int> max_new_tokens;
    std::optional<bool> force_final;
    std::optional<int> k;
    std::optional<int> instances;
    std::optional<int> concurrency;
    std::optional<std::string> policy;
    std::optional<std::string> sequence;

    switchgen::CliOverrides to_overrides() const {
        switchgen::CliOverrides o;
        o.seed = seed;
        o.patch_size = patch_size;
        o.top_p = top_p;
        o.max_new_tokens = max_new_tokens;
        o.force_final_first_last = force_final;
        o.k = k;
        o.instances_per_task = instances;
        o.concurrency = concurrency;
        o.policy_kind = policy;
        o.policy_sequence = sequence;
        return o;
    }
};

void add_override_flags(CLI::App* cmd, OverrideFlags& flags) {
    cmd->add_option("--seed", flags.seed, "Master seed (overrides config)");
    cmd->add_option("--patch-size", flags.patch_size, "Tokens per patch");
    cmd->add_option("--top-p", flags.top_p, "Nucleus mass for model selection and sampling");
    cmd->add_option("--max-new-tokens", flags.max_new_tokens, "Token budget per response");
    cmd->add_option("--force-final", flags.force_final,
                    "Force the final model on the first and last patch");
    cmd->add_option("--policy", flags.policy, "Switcher policy: lm|random|fixed|oracle");
    cmd->add_option("--sequence", flags.sequence, "Fixed policy index string, e.g. 012");
    cmd->add_option("--concurrency", flags.concurrency, "Worker limit");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"switchgen: multi-checkpoint switch generation toolkit"};
    app.require_subcommand(1);

    switchgen::RunArgs run_args;
    OverrideFlags run_flags;
    auto* run = app.add_subcommand("run", "Generate one response and print it");
    run->add_option("--config", run_args.config_path, "Run config JSON")->required();
    run->add_option("--instruction", run_args.instruction, "Ad-hoc instruction text");
    run->add_option("--tasks", run_args.tasks_path, "Task file to pick a query from");
    run->add_option("--id", run_args.query_id, "Query id (with --tasks) or ad-hoc id");
    run->add_option("--task", run_args.task, "Task name for ad-hoc queries");
    run->add_option("--gold", run_args.gold_json, "Gold payload (JSON) for ad-hoc queries");
    run->add_flag("--json", run_args.emit_json, "Print the raw record JSON instead");
    add_override_flags(run, run_flags);

    switchgen::BatchArgs batch_args;
    OverrideFlags batch_flags;
    auto* batch = app.add_subcommand("batch", "Generate records for every query in a task file");
    batch->add_option("--config", batch_args.config_path, "Run config JSON")->required();
    batch->add_option("--tasks", batch_args.tasks_path, "Task file (JSONL)")->required();
    batch->add_option("--out", batch_args.out_path, "Output record file (JSONL)")->required();
    batch->add_flag("--resume", batch_args.resume, "Reuse the checkpoint sidecar if present");
    add_override_flags(batch, batch_flags);

    switchgen::CollectArgs collect_args;
    OverrideFlags collect_flags;
    auto* collect = app.add_subcommand("collect", "Manufacture switcher SFT data");
    collect->add_option("--config", collect_args.config_path, "Run config JSON")->required();
    collect->add_option("--tasks", collect_args.tasks_path, "Task file (JSONL)")->required();
    collect->add_option("--out", collect_args.out_path, "Output dataset (JSONL)")->required();
    collect->add_option("--k", collect_flags.k, "Rollout continuations per divergent branch");
    collect->add_option("--instances", collect_flags.instances, "Instances per task");
    add_override_flags(collect, collect_flags);

    switchgen::EvalArgs eval_args;
    OverrideFlags eval_flags;
    auto* eval = app.add_subcommand("eval", "Score generated records against a task file");
    eval->add_option("--config", eval_args.config_path, "Run config JSON")->required();
    eval->add_option("--records", eval_args.records_path, "Record file (JSONL)")->required();
    eval->add_option("--tasks", eval_args.tasks_path, "Task file with golds")->required();
    eval->add_option("--out", eval_args.out_path, "Scored record file (JSONL)");
    eval->add_option("--summary", eval_args.summary_path, "Per-task summary JSONL");
    add_override_flags(eval, eval_flags);

    switchgen::AnalyzeArgs analyze_args;
    auto* analyze = app.add_subcommand("analyze", "Switching-pattern analytics on scored records");
    analyze->add_option("--records", analyze_args.records_path, "Scored record file")->required();
    analyze->add_option("--out", analyze_args.out_path, "Report JSONL");
    analyze->add_option("--csv", analyze_args.csv_path, "Sequence stats CSV for plotting");

    switchgen::ExportDistillArgs distill_args;
    auto* distill = app.add_subcommand("export-distill", "Emit (instruction, response) SFT pairs");
    distill->add_option("--records", distill_args.records_path, "Scored record file")->required();
    distill->add_option("--out", distill_args.out_path, "Output SFT pairs (JSONL)")->required();
    distill->add_option("--min-score", distill_args.min_score, "Keep records scoring at least this");

    switchgen::MergeArgs merge_args;
    auto* merge = app.add_subcommand("merge-datasets", "Concatenate per-task dataset files");
    merge->add_option("--out", merge_args.out_path, "Merged output file")->required();
    merge->add_option("inputs", merge_args.inputs, "Input dataset files")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        run_args.overrides = run_flags.to_overrides();
        return switchgen::cmd_run(run_args, std::cout, std::cerr);
    }
    if (batch->parsed()) {
        batch_args.overrides = batch_flags.to_overrides();
        return switchgen::cmd_batch(batch_args, std::cout, std::cerr);
    }
    if (collect->parsed()) {
        collect_args.overrides = collect_flags.to_overrides();
        return switchgen::cmd_collect(collect_args, std::cout, std::cerr);
    }
    if (eval->parsed()) {
        eval_args.overrides = eval_flags.to_overrides();
        return switchgen::cmd_eval(eval_args, std::cout, std::cerr);
    }
    if (analyze->parsed()) return switchgen::cmd_analyze(analyze_args, std::cout, std::cerr);
    if (distill->parsed())
        return switchgen::cmd_export_distill(distill_args, std::cout, std::cerr);
    if (merge->parsed()) return switchgen::cmd_merge_datasets(merge_args, std::cout, std::cerr);
    return 2;
}
