#include "switchgen/config.hpp"

#include <cstdlib>
#include <set>

#include "switchgen/engine.hpp"
#include "switchgen/errors.hpp"
#include "switchgen/util.hpp"

namespace switchgen {

namespace {

MockRule::Match match_from_string(const std::string& s) {
    if (s == "contains") return MockRule::Match::Contains;
    if (s == "ends_with") return MockRule::Match::EndsWith;
    if (s == "equals") return MockRule::Match::Equals;
    throw ConfigError("unknown mock rule match kind: " + s);
}

std::string match_to_string(MockRule::Match m) {
    switch (m) {
        case MockRule::Match::Contains: return "contains";
        case MockRule::Match::EndsWith: return "ends_with";
        case MockRule::Match::Equals: return "equals";
    }
    return "contains";
}

MockRule mock_rule_from_json(const json& j) {
    MockRule rule;
    rule.match = match_from_string(j.value("match", std::string("contains")));
    rule.pattern = j.value("pattern", std::string());
    rule.emit = j.value("emit", std::string());
    rule.tokens = j.value("tokens", 0);
    rule.finished = j.value("finished", false);
    return rule;
}

json mock_rule_to_json(const MockRule& rule) {
    return json{{"match", match_to_string(rule.match)},
                {"pattern", rule.pattern},
                {"emit", rule.emit},
                {"tokens", rule.tokens},
                {"finished", rule.finished}};
}

BackendDecl backend_from_json(const json& j) {
    BackendDecl decl;
    decl.name = j.at("name").get<std::string>();
    decl.kind = j.at("kind").get<std::string>();
    if (decl.kind == "mock") {
        for (const auto& r : j.value("rules", json::array()))
            decl.rules.push_back(mock_rule_from_json(r));
        if (j.contains("default")) decl.default_rule = mock_rule_from_json(j["default"]);
        for (const auto& r : j.value("logit_rules", json::array())) {
            MockLogitRule rule;
            rule.contains = r.value("contains", std::string());
            rule.logits = r.at("logits").get<std::vector<double>>();
            decl.logit_rules.push_back(std::move(rule));
        }
        if (j.contains("default_logits"))
            decl.default_logits = j["default_logits"].get<std::vector<double>>();
    } else if (decl.kind == "http") {
        decl.url = j.at("url").get<std::string>();
        decl.model = j.value("model", decl.name);
        decl.auth_env = j.value("auth_env", std::string());
        decl.timeout_s = j.value("timeout_s", 60.0);
        decl.max_retries = j.value("max_retries", 3);
        decl.initial_backoff_ms = j.value("initial_backoff_ms", 100);
        decl.concurrency = j.value("concurrency", 4);
    } else {
        throw ConfigError("backend '" + decl.name + "' has unknown kind '" + decl.kind + "'");
    }
    return decl;
}

json backend_to_json(const BackendDecl& d) {
    json out{{"name", d.name}, {"kind", d.kind}};
    if (d.kind == "mock") {
        json rules = json::array();
        for (const auto& r : d.rules) rules.push_back(mock_rule_to_json(r));
        out["rules"] = std::move(rules);
        out["default"] = mock_rule_to_json(d.default_rule);
        if (!d.logit_rules.empty()) {
            json lr = json::array();
            for (const auto& r : d.logit_rules)
                lr.push_back(json{{"contains", r.contains}, {"logits", r.logits}});
            out["logit_rules"] = std::move(lr);
        }
        if (d.default_logits) out["default_logits"] = *d.default_logits;
    } else {
        out["url"] = d.url;
        out["model"] = d.model;
        if (!d.auth_env.empty()) out["auth_env"] = d.auth_env;
        out["timeout_s"] = d.timeout_s;
        out["max_retries"] = d.max_retries;
        out["initial_backoff_ms"] = d.initial_backoff_ms;
        out["concurrency"] = d.concurrency;
    }
    return out;
}

BackendPtr instantiate(const BackendDecl& decl) {
    if (decl.kind == "mock") {
        auto mock = std::make_shared<MockBackend>(decl.name, decl.rules, decl.default_rule);
        mock->set_logit_rules(decl.logit_rules, decl.default_logits);
        return mock;
    }
    HttpBackendOptions options;
    options.url = decl.url;
    options.model = decl.model;
    options.timeout_s = decl.timeout_s;
    options.max_retries = decl.max_retries;
    options.initial_backoff_ms = decl.initial_backoff_ms;
    options.concurrency = decl.concurrency;
    if (!decl.auth_env.empty()) {
        const char* token = std::getenv(decl.auth_env.c_str());
        if (!token)
            throw ConfigError("backend '" + decl.name + "' expects auth token in $" +
                              decl.auth_env + ", which is unset");
        options.auth_token = token;
    }
    return std::make_shared<HttpBackend>(decl.name, std::move(options));
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig config;
    config.seed = j.value("seed", uint64_t{0});

    const json& pool = j.at("pool");
    for (const auto& b : pool.at("members")) config.backends.push_back(backend_from_json(b));
    config.final_index = pool.value("final_index", 0);
    if (config.backends.empty()) throw ConfigError("pool.members must be nonempty");
    if (config.final_index < 0 ||
        config.final_index >= static_cast<int>(config.backends.size()))
        throw ConfigError("pool.final_index outside the pool");
    std::set<std::string> names;
    for (const auto& b : config.backends)
        if (!names.insert(b.name).second)
            throw ConfigError("duplicate backend name '" + b.name + "'");

    if (j.contains("switcher")) {
        const json& sw = j["switcher"];
        config.policy.kind = sw.value("kind", std::string("lm"));
        config.policy.sequence = sw.value("sequence", std::string());
        if (sw.contains("backend")) {
            if (sw["backend"].is_string()) {
                // reference to a pool member by name
                config.policy.backend = sw["backend"].get<std::string>();
                if (!names.count(config.policy.backend))
                    throw ConfigError("switcher backend '" + config.policy.backend +
                                      "' is not declared in the pool");
            } else {
                BackendDecl decl = backend_from_json(sw["backend"]);
                if (!names.insert(decl.name).second)
                    throw ConfigError("switcher backend name collides with a pool member");
                config.policy.backend = decl.name;
                config.backends.push_back(std::move(decl));
                config.switcher_backend_inline = true;
            }
        }
    }

    if (j.contains("generation")) {
        const json& g = j["generation"];
        config.generation.patch_size = g.value("patch_size", 50);
        config.generation.top_p = g.value("top_p", 0.7);
        config.generation.max_new_tokens = g.value("max_new_tokens", 512);
        config.generation.force_final_first_last = g.value("force_final_first_last", true);
        config.generation.temperature = g.value("temperature", 1.0);
    }
    config.generation.seed = config.seed;
    config.generation.validate();

    if (j.contains("datagen")) {
        const json& d = j["datagen"];
        config.datagen.k = d.value("k", 32);
        config.datagen.instances_per_task = d.value("instances_per_task", 10000);
        config.datagen.cap_min = d.value("cap_min", 0.1);
        config.datagen.cap_max = d.value("cap_max", 0.9);
        config.datagen.stratified = d.value("stratified", false);
        if (config.datagen.k < 1) throw ConfigError("datagen.k must be >= 1");
        if (!(config.datagen.cap_min >= 0.0 && config.datagen.cap_min <= config.datagen.cap_max &&
              config.datagen.cap_max <= 1.0))
            throw ConfigError("datagen cap range must satisfy 0 <= min <= max <= 1");
    }

    if (j.contains("eval") && j["eval"].contains("scorers"))
        for (const auto& [task, scorer] : j["eval"]["scorers"].items())
            config.scorers[task] = Scorer::from_json(scorer);

    if (j.contains("concurrency")) {
        config.concurrency.batch = j["concurrency"].value("batch", 4);
        config.concurrency.rollouts = j["concurrency"].value("rollouts", 4);
        if (config.concurrency.batch < 1 || config.concurrency.rollouts < 1)
            throw ConfigError("concurrency limits must be >= 1");
    }
    return config;
}

json RunConfig::to_json() const {
    json members = json::array();
    size_t pool_count = backends.size() - (switcher_backend_inline ? 1 : 0);
    for (size_t i = 0; i < pool_count; ++i) members.push_back(backend_to_json(backends[i]));

    json out;
    out["seed"] = seed;
    out["pool"] = json{{"members", std::move(members)}, {"final_index", final_index}};
    json sw{{"kind", policy.kind}};
    if (!policy.sequence.empty()) sw["sequence"] = policy.sequence;
    if (!policy.backend.empty()) {
        if (switcher_backend_inline)
            sw["backend"] = backend_to_json(backends.back());
        else
            sw["backend"] = policy.backend;
    }
    out["switcher"] = std::move(sw);
    out["generation"] = json{{"patch_size", generation.patch_size},
                             {"top_p", generation.top_p},
                             {"max_new_tokens", generation.max_new_tokens},
                             {"force_final_first_last", generation.force_final_first_last},
                             {"temperature", generation.temperature}};
    out["datagen"] = json{{"k", datagen.k},
                          {"instances_per_task", datagen.instances_per_task},
                          {"cap_min", datagen.cap_min},
                          {"cap_max", datagen.cap_max},
                          {"stratified", datagen.stratified}};
    json scorer_map = json::object();
    for (const auto& [task, scorer] : scorers) scorer_map[task] = scorer.to_json();
    out["eval"] = json{{"scorers", std::move(scorer_map)}};
    out["concurrency"] = json{{"batch", concurrency.batch}, {"rollouts", concurrency.rollouts}};
    return out;
}

RunConfig load_run_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return RunConfig::from_json(j);
}

Runtime build_runtime(const RunConfig& config) {
    Runtime runtime;
    runtime.config = config;

    for (const auto& decl : config.backends)
        runtime.backends_by_name[decl.name] = instantiate(decl);

    size_t pool_count = config.backends.size() - (config.switcher_backend_inline ? 1 : 0);
    for (size_t i = 0; i < pool_count; ++i)
        runtime.pool.members.push_back(runtime.backends_by_name.at(config.backends[i].name));
    runtime.pool.final_index = config.final_index;
    runtime.pool.validate();

    const std::string& kind = config.policy.kind;
    if (kind == "random") {
        runtime.policy = std::make_shared<RandomPolicy>();
    } else if (kind == "fixed") {
        runtime.policy =
            std::make_shared<FixedSequencePolicy>(parse_sequence_string(config.policy.sequence));
    } else if (kind == "lm") {
        if (config.policy.backend.empty())
            throw ConfigError("lm switcher requires a backend name");
        auto it = runtime.backends_by_name.find(config.policy.backend);
        if (it == runtime.backends_by_name.end())
            throw ConfigError("switcher backend '" + config.policy.backend +
                              "' is not declared");
        runtime.policy = std::make_shared<LmPolicy>(it->second);
    } else if (kind == "oracle") {
        RunConfig snapshot = config;
        auto score_fn = [snapshot](const Query& query, const std::string& response) {
            return resolve_scorer(snapshot, query, json::object()).score(response, query.gold);
        };
        runtime.policy = std::make_shared<OraclePolicy>(score_fn, config.generation);
    } else {
        throw ConfigError("unknown switcher policy kind '" + kind + "'");
    }
    return runtime;
}

Scorer resolve_scorer(const RunConfig& config, const Query& query, const json& query_line) {
    if (query_line.is_object() && query_line.contains("scorer"))
        return Scorer::from_json(query_line["scorer"]);
    auto it = config.scorers.find(query.task);
    if (it != config.scorers.end()) return it->second;
    it = config.scorers.find("default");
    if (it != config.scorers.end()) return it->second;
    throw ConfigError("no scorer bound for task '" + query.task + "'");
}

TaskFile load_task_file(const std::string& path) {
    TaskFile file;
    std::set<std::string> ids;
    for (const std::string& line : read_lines(path)) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ConfigError("task file " + path + " has a non-JSON line: " + e.what());
        }
        Query q = query_from_json(j);
        if (!ids.insert(q.id).second)
            throw ConfigError("task file " + path + " repeats query id '" + q.id + "'");
        if (j.contains("scorer")) file.per_query_scorers[q.id] = Scorer::from_json(j["scorer"]);
        file.queries.push_back(std::move(q));
    }
    return file;
}

}  // namespace switchgen
