#include "switchgen/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>

#include "switchgen/analysis.hpp"
#include "switchgen/engine.hpp"
#include "switchgen/errors.hpp"
#include "switchgen/util.hpp"

namespace switchgen {

namespace {

int classify(const std::exception& e, std::ostream& err) {
    err << "error: " << e.what() << "\n";
    return dynamic_cast<const ConfigError*>(&e) ? 2 : 1;
}

std::vector<GenerationRecord> load_records(const std::string& path) {
    std::vector<GenerationRecord> records;
    for (const std::string& line : read_lines(path)) {
        try {
            records.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ConfigError("record file " + path + " has a bad line: " + e.what());
        }
    }
    return records;
}

void print_record(const GenerationRecord& record, const CandidatePool& pool, std::ostream& out) {
    out << "query " << record.query_id << " (" << record.task << ")\n";
    for (size_t i = 0; i < record.trace.segments.size(); ++i) {
        const Segment& seg = record.trace.segments[i];
        const std::string& name = pool.members[seg.model_index]->name();
        out << "  patch " << i << " [model " << seg.model_index << " " << name << ", "
            << seg.token_count << " tok" << (record.decisions[i].forced ? ", forced" : "")
            << "] " << seg.text << "\n";
    }
    out << "  total tokens: " << record.trace.total_tokens << "\n";
    if (record.failed) out << "  FAILED: " << record.error << "\n";
    out << "  response: " << record.final_text << "\n";
}

}  // namespace

void apply_overrides(RunConfig& config, const CliOverrides& o) {
    if (o.seed) {
        config.seed = *o.seed;
        config.generation.seed = *o.seed;
    }
    if (o.patch_size) config.generation.patch_size = *o.patch_size;
    if (o.top_p) config.generation.top_p = *o.top_p;
    if (o.max_new_tokens) config.generation.max_new_tokens = *o.max_new_tokens;
    if (o.force_final_first_last)
        config.generation.force_final_first_last = *o.force_final_first_last;
    if (o.k) config.datagen.k = *o.k;
    if (o.instances_per_task) config.datagen.instances_per_task = *o.instances_per_task;
    if (o.concurrency) {
        config.concurrency.batch = *o.concurrency;
        config.concurrency.rollouts = *o.concurrency;
    }
    if (o.policy_kind) config.policy.kind = *o.policy_kind;
    if (o.policy_sequence) config.policy.sequence = *o.policy_sequence;
    config.generation.validate();
}

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
    try {
        RunConfig config = load_run_config(args.config_path);
        apply_overrides(config, args.overrides);
        Runtime runtime = build_runtime(config);

        Query query;
        if (!args.tasks_path.empty()) {
            TaskFile file = load_task_file(args.tasks_path);
            if (file.queries.empty()) throw ConfigError("task file is empty");
            if (args.query_id.empty()) {
                query = file.queries.front();
            } else {
                bool found = false;
                for (const Query& q : file.queries)
                    if (q.id == args.query_id) {
                        query = q;
                        found = true;
                        break;
                    }
                if (!found)
                    throw ConfigError("query id '" + args.query_id + "' not in task file");
            }
        } else {
            if (args.instruction.empty())
                throw ConfigError("run needs --instruction or --tasks");
            query.id = args.query_id.empty() ? "q0" : args.query_id;
            query.task = args.task;
            query.instruction = args.instruction;
            if (!args.gold_json.empty()) query.gold = json::parse(args.gold_json);
        }

        GenerationRecord record =
            switch_generate(query, runtime.pool, *runtime.policy, config.generation);
        if (args.emit_json)
            out << record_to_json(record).dump() << "\n";
        else
            print_record(record, runtime.pool, out);
        return record.failed ? 1 : 0;
    } catch (const std::exception& e) {
        return classify(e, err);
    }
}

int cmd_batch(const BatchArgs& args, std::ostream& out, std::ostream& err) {
    try {
        RunConfig config = load_run_config(args.config_path);
        apply_overrides(config, args.overrides);
        Runtime runtime = build_runtime(config);
        TaskFile file = load_task_file(args.tasks_path);

        const std::string checkpoint_path = args.out_path + ".ckpt";
        size_t completed = 0;
        std::vector<std::string> kept_lines;

        if (args.resume && std::filesystem::exists(checkpoint_path) &&
            std::filesystem::exists(args.out_path)) {
            std::set<std::string> done;
            for (const std::string& id : read_lines(checkpoint_path)) done.insert(id);
            std::map<std::string, std::string> line_by_id;
            for (const std::string& line : read_lines(args.out_path)) {
                try {
                    json j = json::parse(line);
                    line_by_id.emplace(j.at("query_id").get<std::string>(), line);
                } catch (const json::exception&) {
                    break;  // tail damaged mid-write; regenerate from here
                }
            }
            // Keep the longest prefix of queries that is both checkpointed and
            // present in the output; everything after it is regenerated.
            for (const Query& q : file.queries) {
                auto it = line_by_id.find(q.id);
                if (!done.count(q.id) || it == line_by_id.end()) break;
                kept_lines.push_back(it->second);
                ++completed;
            }
        }

        std::ofstream records_out(args.out_path, std::ios::binary | std::ios::trunc);
        std::ofstream checkpoint_out(checkpoint_path, std::ios::binary | std::ios::trunc);
        if (!records_out || !checkpoint_out)
            throw ConfigError("cannot write output files at " + args.out_path);
        for (size_t i = 0; i < completed; ++i) {
            records_out << kept_lines[i] << "\n";
            checkpoint_out << file.queries[i].id << "\n";
        }
        records_out.flush();
        checkpoint_out.flush();

        std::vector<Query> remaining(file.queries.begin() + completed, file.queries.end());
        size_t failures = 0;
        batch_generate(remaining, runtime.pool, *runtime.policy, config.generation,
                       config.concurrency.batch,
                       [&](size_t i, GenerationRecord&& record) {
                           if (record.failed) ++failures;
                           records_out << record_to_json(record).dump() << "\n";
                           records_out.flush();
                           checkpoint_out << remaining[i].id << "\n";
                           checkpoint_out.flush();
                       });
        out << "wrote " << file.queries.size() << " record(s) to " << args.out_path;
        if (completed > 0) out << " (" << completed << " reused from checkpoint)";
        if (failures > 0) out << ", " << failures << " failed";
        out << "\n";
        return 0;
    } catch (const std::exception& e) {
        return classify(e, err);
    }
}

int cmd_collect(const CollectArgs& args, std::ostream& out, std::ostream& err) {
    try {
        RunConfig config = load_run_config(args.config_path);
        apply_overrides(config, args.overrides);
        Runtime runtime = build_runtime(config);
        TaskFile file = load_task_file(args.tasks_path);
        if (file.queries.empty()) throw ConfigError("task file is empty");

        CollectOptions options;
        options.k = config.datagen.k;
        options.instances_per_task = config.datagen.instances_per_task;
        options.cap_min = config.datagen.cap_min;
        options.cap_max = config.datagen.cap_max;
        options.mode = config.datagen.stratified ? RolloutMode::Stratified : RolloutMode::Random;
        options.concurrency = config.concurrency.rollouts;

        ScorerResolver resolver = [&](const Query& q) -> Scorer {
            auto it = file.per_query_scorers.find(q.id);
            if (it != file.per_query_scorers.end()) return it->second;
            return resolve_scorer(config, q, json::object());
        };

        // One collection per task, instances_per_task each, in order of first
        // appearance; per-task files for switch-t, cmd_merge for switch-g.
        std::vector<std::string> task_order;
        std::map<std::string, std::vector<Query>> by_task;
        for (const Query& q : file.queries) {
            if (!by_task.count(q.task)) task_order.push_back(q.task);
            by_task[q.task].push_back(q);
        }

        std::ofstream dataset_out(args.out_path, std::ios::binary | std::ios::trunc);
        if (!dataset_out) throw ConfigError("cannot write dataset file " + args.out_path);
        json manifest_tasks = json::object();
        for (const std::string& task : task_order) {
            CollectManifest manifest = collect_sft_dataset(
                by_task[task], runtime.pool, options, resolver, config.generation,
                [&](const SftInstance& inst) {
                    dataset_out << sft_instance_to_json(inst).dump() << "\n";
                });
            manifest_tasks[task] = manifest.to_json();
            out << "task " << task << ": " << manifest.emitted << " instance(s), "
                << (manifest.attempts - manifest.emitted) << " discard(s)\n";
        }
        dataset_out.flush();
        write_file(args.out_path + ".manifest.json",
                   json{{"tasks", manifest_tasks}}.dump(2) + "\n");
        return 0;
    } catch (const std::exception& e) {
        return classify(e, err);
    }
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
    try {
        RunConfig config = load_run_config(args.config_path);
        apply_overrides(config, args.overrides);
        TaskFile file = load_task_file(args.tasks_path);

        std::map<std::string, json> golds;
        std::map<std::string, std::string> task_of;
        for (const Query& q : file.queries) {
            golds[q.id] = q.gold;
            task_of[q.id] = q.task;
        }

        std::vector<GenerationRecord> records = load_records(args.records_path);
        std::vector<std::string> task_order;
        std::map<std::string, std::vector<size_t>> by_task;
        for (size_t i = 0; i < records.size(); ++i) {
            const std::string& task = records[i].task;
            if (!by_task.count(task)) task_order.push_back(task);
            by_task[task].push_back(i);
        }

        json summaries = json::array();
        for (const std::string& task : task_order) {
            std::vector<GenerationRecord> group;
            for (size_t i : by_task[task]) group.push_back(records[i]);

            Scorer scorer = [&]() -> Scorer {
                for (size_t i : by_task[task]) {
                    auto it = file.per_query_scorers.find(records[i].query_id);
                    if (it != file.per_query_scorers.end()) return it->second;
                }
                Query probe;
                probe.task = task;
                return resolve_scorer(config, probe, json::object());
            }();

            TaskResult result =
                evaluate(group, scorer, golds, task, config.concurrency.batch);
            for (size_t j = 0; j < by_task[task].size(); ++j)
                records[by_task[task][j]].score = group[j].score;

            json summary{{"type", "task_summary"},
                         {"task", result.task},
                         {"mean_score", result.mean_score},
                         {"n", result.n},
                         {"failed", result.failed}};
            summaries.push_back(summary);
            for (const auto& [id, score] : result.per_query)
                summaries.push_back(json{
                    {"type", "query_score"}, {"task", result.task}, {"query_id", id},
                    {"score", score}});
            out << "task " << result.task << ": mean " << std::fixed << std::setprecision(4)
                << result.mean_score << " over " << result.n << " record(s)";
            if (result.failed > 0) out << " (" << result.failed << " failed, scored 0)";
            out << "\n";
            out.unsetf(std::ios::floatfield);
        }

        std::string scored_path = args.out_path.empty()
                                      ? args.records_path + ".scored.jsonl"
                                      : args.out_path;
        std::ofstream scored_out(scored_path, std::ios::binary | std::ios::trunc);
        if (!scored_out) throw ConfigError("cannot write " + scored_path);
        for (const auto& r : records) scored_out << record_to_json(r).dump() << "\n";

        if (!args.summary_path.empty()) {
            std::string text;
            for (const auto& s : summaries) text += s.dump() + "\n";
            write_file(args.summary_path, text);
        }
        return 0;
    } catch (const std::exception& e) {
        return classify(e, err);
    }
}

int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err) {
    try {
        std::vector<GenerationRecord> records = load_records(args.records_path);
        AnalysisReport report = analyze_records(records);

        if (!args.out_path.empty()) {
            std::ofstream report_out(args.out_path, std::ios::binary | std::ios::trunc);
            if (!report_out) throw ConfigError("cannot write " + args.out_path);
            write_report_jsonl(report, report_out);
        }
        if (!args.csv_path.empty()) {
            std::ofstream csv_out(args.csv_path, std::ios::binary | std::ios::trunc);
            if (!csv_out) throw ConfigError("cannot write " + args.csv_path);
            write_report_csv(report, csv_out);
        }
        write_report_table(report, out);
        return 0;
    } catch (const std::exception& e) {
        return classify(e, err);
    }
}

int cmd_export_distill(const ExportDistillArgs& args, std::ostream& out, std::ostream& err) {
    try {
        std::vector<GenerationRecord> records = load_records(args.records_path);
        std::ofstream pairs_out(args.out_path, std::ios::binary | std::ios::trunc);
        if (!pairs_out) throw ConfigError("cannot write " + args.out_path);
        int exported = export_distill(records, args.min_score, pairs_out);
        out << "exported " << exported << " of " << records.size() << " record(s) to "
            << args.out_path << "\n";
        return 0;
    } catch (const std::exception& e) {
        return classify(e, err);
    }
}

int cmd_merge_datasets(const MergeArgs& args, std::ostream& out, std::ostream& err) {
    try {
        if (args.inputs.empty()) throw ConfigError("merge needs at least one input file");
        std::ofstream merged(args.out_path, std::ios::binary | std::ios::trunc);
        if (!merged) throw ConfigError("cannot write " + args.out_path);
        size_t total = 0;
        for (const std::string& input : args.inputs) {
            for (const std::string& line : read_lines(input)) {
                merged << line << "\n";
                ++total;
            }
        }
        out << "merged " << total << " line(s) from " << args.inputs.size() << " file(s) into "
            << args.out_path << "\n";
        return 0;
    } catch (const std::exception& e) {
        return classify(e, err);
    }
}

}  // namespace switchgen
