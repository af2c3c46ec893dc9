// End-to-end tests of the CLI command layer on a mock pool, plus smoke tests
// of the installed binary.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "switchgen/cli.hpp"
#include "switchgen/util.hpp"

using namespace switchgen;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("switchgen_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int counter() {
        static int c = 0;
        return c++;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// Mock step environment: solvable only by the 0 -> 1 -> 2 model order.
const char* kConfig = R"({
  "seed": 31,
  "pool": {
    "final_index": 2,
    "members": [
      {"name": "pretrained", "kind": "mock",
       "rules": [{"match": "ends_with", "pattern": "TASK;", "emit": "STEP1;", "tokens": 50}],
       "default": {"emit": "X;", "tokens": 50}},
      {"name": "finetuned", "kind": "mock",
       "rules": [{"match": "ends_with", "pattern": "STEP1;", "emit": "STEP2;", "tokens": 50}],
       "default": {"emit": "X;", "tokens": 50}},
      {"name": "aligned", "kind": "mock",
       "rules": [{"match": "ends_with", "pattern": "STEP2;", "emit": "DONE", "tokens": 50}],
       "default": {"emit": "X;", "tokens": 50}}
    ]
  },
  "switcher": {"kind": "random"},
  "generation": {"patch_size": 50, "top_p": 1.0, "max_new_tokens": 150,
                 "force_final_first_last": false},
  "datagen": {"k": 3, "instances_per_task": 6, "cap_min": 0.2, "cap_max": 0.2},
  "eval": {"scorers": {"compose": {"kind": "contains_normalized"}}},
  "concurrency": {"batch": 4, "rollouts": 2}
})";

std::string write_tasks(const TempDir& dir, int count) {
    std::string path = dir.file("tasks.jsonl");
    std::ofstream out(path);
    for (int i = 0; i < count; ++i)
        out << json{{"id", "q" + std::to_string(i)},
                    {"task", "compose"},
                    {"instruction", "TASK;"},
                    {"gold", "STEP1;STEP2;DONE"}}
                   .dump()
            << "\n";
    return path;
}

std::string write_config(const TempDir& dir) {
    std::string path = dir.file("config.json");
    std::ofstream out(path);
    out << kConfig;
    return path;
}

int run_batch(const std::string& config, const std::string& tasks, const std::string& out_path,
              bool resume = false, std::optional<int> concurrency = {}) {
    BatchArgs args;
    args.config_path = config;
    args.tasks_path = tasks;
    args.out_path = out_path;
    args.resume = resume;
    args.overrides.concurrency = concurrency;
    std::ostringstream out, err;
    int code = cmd_batch(args, out, err);
    INFO(err.str());
    return code;
}

}  // namespace

TEST_CASE("cmd_run: record to stdout, deterministic under a fixed seed") {
    TempDir dir;
    RunArgs args;
    args.config_path = write_config(dir);
    args.instruction = "TASK;";
    args.task = "compose";

    std::ostringstream out1, out2, err;
    CHECK(cmd_run(args, out1, err) == 0);
    CHECK(cmd_run(args, out2, err) == 0);
    CHECK(out1.str() == out2.str());
    CHECK(out1.str().find("query q0") != std::string::npos);
    CHECK(out1.str().find("patch 0") != std::string::npos);
}

TEST_CASE("cmd_run: generation failure exits 1") {
    TempDir dir;
    json config = json::parse(kConfig);
    // a pool member that cannot be reached, with no retry budget
    config["pool"]["members"][0] = json{{"name", "dead"},     {"kind", "http"},
                                        {"url", "http://127.0.0.1:1"}, {"model", "m"},
                                        {"max_retries", 0},   {"timeout_s", 0.2},
                                        {"initial_backoff_ms", 1}};
    config["switcher"] = json{{"kind", "fixed"}, {"sequence", "0"}};
    std::string path = dir.file("dead.json");
    write_file(path, config.dump());

    RunArgs args;
    args.config_path = path;
    args.instruction = "TASK;";
    std::ostringstream out, err;
    CHECK(cmd_run(args, out, err) == 1);
    CHECK(out.str().find("FAILED") != std::string::npos);
}

TEST_CASE("cmd_run: unknown switcher backend exits 2 naming the key") {
    TempDir dir;
    json config = json::parse(kConfig);
    config["switcher"] = json{{"kind", "lm"}, {"backend", "no-such-backend"}};
    std::string path = dir.file("bad.json");
    write_file(path, config.dump());

    RunArgs args;
    args.config_path = path;
    args.instruction = "TASK;";
    std::ostringstream out, err;
    CHECK(cmd_run(args, out, err) == 2);
    CHECK(err.str().find("no-such-backend") != std::string::npos);
}

TEST_CASE("cmd_batch: n queries in, n records out, input order") {
    TempDir dir;
    std::string config = write_config(dir);
    std::string tasks = write_tasks(dir, 9);
    std::string out_path = dir.file("records.jsonl");
    CHECK(run_batch(config, tasks, out_path) == 0);

    auto lines = read_lines(out_path);
    REQUIRE(lines.size() == 9);
    for (size_t i = 0; i < lines.size(); ++i)
        CHECK(json::parse(lines[i])["query_id"] == "q" + std::to_string(i));
}

TEST_CASE("cmd_batch: empty task file gives an empty output") {
    TempDir dir;
    std::string config = write_config(dir);
    std::string tasks = dir.file("empty.jsonl");
    write_file(tasks, "");
    std::string out_path = dir.file("records.jsonl");
    CHECK(run_batch(config, tasks, out_path) == 0);
    CHECK(read_lines(out_path).empty());
}

TEST_CASE("cmd_batch: interrupted run resumes to an identical file") {
    TempDir dir;
    std::string config = write_config(dir);
    std::string tasks = write_tasks(dir, 12);

    std::string full_path = dir.file("full.jsonl");
    CHECK(run_batch(config, tasks, full_path) == 0);
    std::string full = read_file(full_path);

    // Simulate a crash after 5 records: 5 checkpointed, a 6th record line
    // written but not yet checkpointed, plus a torn partial 7th line.
    auto lines = read_lines(full_path);
    std::string partial_path = dir.file("partial.jsonl");
    {
        std::ofstream partial(partial_path);
        for (int i = 0; i < 6; ++i) partial << lines[i] << "\n";
        partial << lines[6].substr(0, 25);
        std::ofstream ckpt(partial_path + ".ckpt");
        for (int i = 0; i < 5; ++i) ckpt << "q" << i << "\n";
    }
    CHECK(run_batch(config, tasks, partial_path, /*resume=*/true) == 0);
    CHECK(read_file(partial_path) == full);

    // resume over a finished run is a no-op producing the same bytes
    CHECK(run_batch(config, tasks, partial_path, /*resume=*/true) == 0);
    CHECK(read_file(partial_path) == full);
}

TEST_CASE("cmd_collect then cmd_eval / analyze / export-distill round") {
    TempDir dir;
    std::string config = write_config(dir);
    std::string tasks = write_tasks(dir, 3);

    CollectArgs collect;
    collect.config_path = config;
    collect.tasks_path = tasks;
    collect.out_path = dir.file("sft.jsonl");
    std::ostringstream out, err;
    REQUIRE(cmd_collect(collect, out, err) == 0);
    auto sft_lines = read_lines(collect.out_path);
    CHECK(sft_lines.size() == 6);
    CHECK(fs::exists(collect.out_path + ".manifest.json"));
    json manifest = json::parse(read_file(collect.out_path + ".manifest.json"));
    CHECK(manifest["tasks"]["compose"]["emitted"] == 6);
    for (const auto& line : sft_lines) {
        json inst = json::parse(line);
        CHECK(inst["utilities"].size() == 3);
        CHECK(inst["completion"].get<std::string>().size() == 1);
    }

    // batch -> eval -> analyze -> export-distill
    std::string records_path = dir.file("records.jsonl");
    REQUIRE(run_batch(config, tasks, records_path) == 0);

    EvalArgs eval;
    eval.config_path = config;
    eval.records_path = records_path;
    eval.tasks_path = tasks;
    eval.out_path = dir.file("scored.jsonl");
    eval.summary_path = dir.file("summary.jsonl");
    std::ostringstream eval_out;
    REQUIRE(cmd_eval(eval, eval_out, err) == 0);
    CHECK(eval_out.str().find("task compose") != std::string::npos);
    json summary = json::parse(read_lines(eval.summary_path).at(0));
    CHECK(summary["n"] == 3);

    // analyze on unscored records demands eval first
    AnalyzeArgs analyze_unscored;
    analyze_unscored.records_path = records_path;
    std::ostringstream sink;
    CHECK(cmd_analyze(analyze_unscored, sink, err) != 0);

    AnalyzeArgs analyze;
    analyze.records_path = eval.out_path;
    analyze.out_path = dir.file("report.jsonl");
    analyze.csv_path = dir.file("report.csv");
    std::ostringstream table;
    REQUIRE(cmd_analyze(analyze, table, err) == 0);
    CHECK(table.str().find("mean switching rate") != std::string::npos);
    CHECK(!read_lines(analyze.out_path).empty());

    ExportDistillArgs distill;
    distill.records_path = eval.out_path;
    distill.out_path = dir.file("distill.jsonl");
    distill.min_score = 0.0;
    std::ostringstream distill_out;
    REQUIRE(cmd_export_distill(distill, distill_out, err) == 0);
    auto pairs = read_lines(distill.out_path);
    CHECK(pairs.size() == 3);
    json pair = json::parse(pairs[0]);
    CHECK(pair["instruction"] == "TASK;");
    CHECK(pair.contains("response"));

    // min_score = 1 keeps only perfect records
    ExportDistillArgs strict = distill;
    strict.out_path = dir.file("distill_strict.jsonl");
    strict.min_score = 1.0;
    REQUIRE(cmd_export_distill(strict, distill_out, err) == 0);
    size_t perfect = 0;
    for (const auto& line : read_lines(eval.out_path))
        if (json::parse(line)["score"] == 1.0) ++perfect;
    CHECK(read_lines(strict.out_path).size() == perfect);
}

TEST_CASE("cmd_merge_datasets concatenates in argument order") {
    TempDir dir;
    write_file(dir.file("a.jsonl"), "{\"x\":1}\n{\"x\":2}\n");
    write_file(dir.file("b.jsonl"), "{\"x\":3}\n");
    MergeArgs merge;
    merge.inputs = {dir.file("a.jsonl"), dir.file("b.jsonl")};
    merge.out_path = dir.file("merged.jsonl");
    std::ostringstream out, err;
    REQUIRE(cmd_merge_datasets(merge, out, err) == 0);
    auto lines = read_lines(merge.out_path);
    REQUIRE(lines.size() == 3);
    CHECK(lines[2] == "{\"x\":3}");
}

TEST_CASE("binary: help and a real run through the installed CLI") {
    TempDir dir;
    std::string config = write_config(dir);
    std::string binary = SWITCHGEN_CLI_PATH;

    CHECK(std::system((binary + " --help > " + dir.file("help.txt") + " 2>&1").c_str()) == 0);
    CHECK(read_file(dir.file("help.txt")).find("batch") != std::string::npos);

    std::string cmd = binary + " run --config " + config +
                      " --instruction 'TASK;' --task compose --json > " + dir.file("run.json") +
                      " 2>" + dir.file("run.err");
    int code = std::system(cmd.c_str());
    CHECK(code == 0);
    json record = json::parse(read_file(dir.file("run.json")));
    CHECK(record["query_id"] == "q0");
    CHECK(record["model_sequence"].size() == 3);

    // config error surfaces as exit code 2
    std::string bad = binary + " run --config /nonexistent.json --instruction x 2>/dev/null";
    int bad_code = std::system(bad.c_str());
    CHECK(WEXITSTATUS(bad_code) == 2);
}
