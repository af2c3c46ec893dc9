#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "switchgen/backends.hpp"
#include "switchgen/core.hpp"
#include "switchgen/datagen.hpp"
#include "switchgen/eval.hpp"
#include "switchgen/switcher.hpp"

namespace switchgen {

struct BackendDecl {
    std::string name;
    std::string kind;  // "mock" | "http"

    // mock
    std::vector<MockRule> rules;
    MockRule default_rule{MockRule::Match::Contains, "", "", 0, true};
    std::vector<MockLogitRule> logit_rules;
    std::optional<std::vector<double>> default_logits;

    // http
    std::string url;
    std::string model;
    std::string auth_env;  // env var holding the bearer token; tokens never live in configs
    double timeout_s = 60.0;
    int max_retries = 3;
    int initial_backoff_ms = 100;
    int concurrency = 4;
};

struct PolicyDecl {
    std::string kind = "lm";  // lm | random | fixed | oracle
    std::string backend;      // lm: switcher backend name
    std::string sequence;     // fixed: index string like "012"
};

struct DatagenConfig {
    int k = 32;
    int instances_per_task = 10000;
    double cap_min = 0.1;
    double cap_max = 0.9;
    bool stratified = false;
};

struct ConcurrencyConfig {
    int batch = 4;    // queries in flight
    int rollouts = 4; // rollout continuations per instance
};

struct RunConfig {
    uint64_t seed = 0;
    std::vector<BackendDecl> backends;  // pool members in pool order; an
                                        // inline switcher backend, if any, last
    int final_index = 0;
    bool switcher_backend_inline = false;  // backends.back() is the switcher,
                                           // not a pool member
    PolicyDecl policy;
    GenerationConfig generation;
    DatagenConfig datagen;
    std::map<std::string, Scorer> scorers;  // task -> scorer binding
    ConcurrencyConfig concurrency;

    static RunConfig from_json(const json& j);
    json to_json() const;

    bool operator==(const RunConfig& other) const {
        return to_json() == other.to_json();
    }
};

RunConfig load_run_config(const std::string& path);

// Materialized run state: constructed backends, the pool, and the policy.
struct Runtime {
    RunConfig config;
    CandidatePool pool;
    std::map<std::string, BackendPtr> backends_by_name;
    std::shared_ptr<SwitchPolicy> policy;
};

// Builds backends and the policy from a config. Oracle policies resolve each
// query's scorer through the config's task bindings.
Runtime build_runtime(const RunConfig& config);

// Scorer for a query: the query line's own "scorer" object wins, else the
// config binding for its task.
Scorer resolve_scorer(const RunConfig& config, const Query& query, const json& query_line);

// Task file loading: one JSON query per line, with optional per-line scorer.
struct TaskFile {
    std::vector<Query> queries;
    std::map<std::string, Scorer> per_query_scorers;  // only for lines that carry one
};

TaskFile load_task_file(const std::string& path);

}  // namespace switchgen
