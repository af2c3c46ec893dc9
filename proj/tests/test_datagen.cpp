#include <cmath>
#include <map>

#include "doctest.h"
#include "switchgen/datagen.hpp"
#include "switchgen/engine.hpp"
#include "switchgen/errors.hpp"
#include "switchgen/rng.hpp"

using namespace switchgen;

namespace {

BackendPtr digit_backend(int index) {
    // Emits its own index as text, one patch worth of tokens.
    return std::make_shared<MockBackend>(
        "digit" + std::to_string(index), std::vector<MockRule>{},
        MockRule{MockRule::Match::Contains, "", std::to_string(index), 1000000, false});
}

// Enumerable environment: n deterministic models, each appending its digit.
// Responses are digit strings; scoring is substring containment.
CandidatePool digit_pool(int n) {
    CandidatePool pool;
    for (int i = 0; i < n; ++i) pool.members.push_back(digit_backend(i));
    pool.final_index = n - 1;
    return pool;
}

Query digit_query(int budget) {
    Query q;
    q.id = "digits";
    q.task = "digits";
    q.instruction = "P:";
    q.gold = "21";
    q.max_new_tokens = budget;
    return q;
}

Scorer contains_scorer() {
    Scorer s;
    s.kind = ScorerKind::ContainsNormalized;
    return s;
}

GenerationConfig digit_config(int budget, uint64_t seed = 5) {
    GenerationConfig c;
    c.patch_size = 50;
    c.max_new_tokens = budget;
    c.force_final_first_last = false;
    c.seed = seed;
    return c;
}

// Independent oracle: the mean score over every continuation path of the
// digit tree, enumerated exhaustively at fixed depth.
double brute_force_expectation(const Query& q, const std::string& digits_so_far,
                               int remaining_patches, int n, const Scorer& scorer) {
    int paths = 1;
    for (int d = 0; d < remaining_patches; ++d) paths *= n;
    double total = 0.0;
    for (int p = 0; p < paths; ++p) {
        std::string response = digits_so_far;
        int x = p;
        std::vector<int> digits(remaining_patches);
        for (int d = remaining_patches - 1; d >= 0; --d) {
            digits[d] = x % n;
            x /= n;
        }
        for (int d : digits) response += std::to_string(d);
        total += scorer.score(response, q.gold);
    }
    return total / paths;
}

struct InstanceSink {
    std::vector<SftInstance> instances;
    void operator()(const SftInstance& inst) { instances.push_back(inst); }
};

}  // namespace

TEST_CASE("sample_random_trace: cap boundary arithmetic") {
    CandidatePool pool = digit_pool(3);
    Query q = digit_query(512);
    GenerationConfig config = digit_config(512);

    // The trace stops at the first patch boundary at or past the cap. With
    // 50-token patches and a 512 budget, cap fraction 0.1 (51.2 tokens) gives
    // two patches and 0.9 (460.8) gives ten.
    for (uint64_t attempt = 0; attempt < 20; ++attempt) {
        SampledTrace sampled =
            sample_random_trace(q, pool, config, 0.1, 0.1, attempt);
        CHECK(sampled.trace.segments.size() == 2);
        CHECK(sampled.trace.total_tokens == 100);
        CHECK_FALSE(sampled.finished);

        SampledTrace big = sample_random_trace(q, pool, config, 0.9, 0.9, attempt);
        CHECK(big.trace.segments.size() == 10);
        CHECK(big.trace.total_tokens == 500);
    }
}

TEST_CASE("sample_random_trace: cap fraction drawn from the configured range") {
    CandidatePool pool = digit_pool(3);
    Query q = digit_query(512);
    GenerationConfig config = digit_config(512);
    for (uint64_t attempt = 0; attempt < 50; ++attempt) {
        SampledTrace sampled = sample_random_trace(q, pool, config, 0.1, 0.9, attempt);
        CHECK(sampled.cap_fraction >= 0.1);
        CHECK(sampled.cap_fraction <= 0.9);
    }
}

TEST_CASE("sample_random_trace: early finish is flagged") {
    // Model that ends generation after 30 tokens.
    CandidatePool pool;
    pool.members = {std::make_shared<MockBackend>(
        "ender", std::vector<MockRule>{},
        MockRule{MockRule::Match::Contains, "", "short answer", 30, true})};
    pool.final_index = 0;
    Query q = digit_query(512);
    GenerationConfig config = digit_config(512);
    SampledTrace sampled = sample_random_trace(q, pool, config, 0.5, 0.5, 0);
    CHECK(sampled.finished);
    CHECK(sampled.trace.total_tokens == 30);
}

TEST_CASE("divergent_step: one branch per candidate, attributed to it") {
    CandidatePool pool = digit_pool(3);
    Query q = digit_query(200);
    GenerationConfig config = digit_config(200);

    Trace trace;
    trace.append(Segment{0, "0", 50});
    auto branches = divergent_step(q, trace, pool, config, 0);
    REQUIRE(branches.size() == 3);
    for (int i = 0; i < 3; ++i) {
        REQUIRE(branches[i].trace.segments.size() == 2);
        CHECK(branches[i].trace.segments[1].model_index == i);
        CHECK(branches[i].trace.segments[1].text == std::to_string(i));
        // branches share everything but the last segment
        CHECK(branches[i].trace.segments[0].text == "0");
    }

    // deterministic across invocations
    auto again = divergent_step(q, trace, pool, config, 0);
    for (int i = 0; i < 3; ++i)
        CHECK(again[i].trace.segments[1].text == branches[i].trace.segments[1].text);
}

TEST_CASE("divergent_step: no budget left") {
    CandidatePool pool = digit_pool(3);
    Query q = digit_query(100);
    Trace trace;
    trace.append(Segment{0, "00", 100});
    CHECK_THROWS_AS(divergent_step(q, trace, pool, digit_config(100), 0),
                    InvalidInstanceError);
}

TEST_CASE("rollout_utility: k=1 on a finished branch scores the branch itself") {
    CandidatePool pool = digit_pool(3);
    Query q = digit_query(200);
    DivergentBranch branch;
    branch.trace.append(Segment{2, "21", 100});
    branch.finished = true;
    double s = rollout_utility(q, branch, pool, 1, contains_scorer(), digit_config(200),
                               RolloutMode::Random, 0);
    CHECK(s == 1.0);
}

TEST_CASE("stratified rollouts equal the brute-force mean exactly") {
    // n=3, trace one patch, divergent step second patch, two patches left.
    const int budget = 200;
    CandidatePool pool = digit_pool(3);
    Query q = digit_query(budget);
    GenerationConfig config = digit_config(budget);
    Scorer scorer = contains_scorer();

    Trace trace;
    trace.append(Segment{0, "0", 50});
    auto branches = divergent_step(q, trace, pool, config, 0);

    std::vector<double> utilities;
    for (int i = 0; i < 3; ++i) {
        std::vector<double> scores;
        double u = rollout_utility(q, branches[i], pool, 9, scorer, config,
                                   RolloutMode::Stratified, i, &scores);
        REQUIRE(scores.size() == 9);
        double sum = 0.0;
        for (double s : scores) sum += s;
        CHECK(9 * u == doctest::Approx(sum).epsilon(1e-12));  // exact mean of persisted scores
        utilities.push_back(u);
    }

    // Gold "21": branch 0 -> "00??", branch 1 -> "01??", branch 2 -> "02??".
    // u equals the exact mean over all 9 continuations of each branch.
    CHECK(utilities[0] == 1.0 / 9.0);
    CHECK(utilities[1] == 1.0 / 9.0);
    CHECK(utilities[2] == 4.0 / 9.0);
    for (int i = 0; i < 3; ++i) {
        double expect = brute_force_expectation(q, "0" + std::to_string(i), 2, 3, scorer);
        CHECK(utilities[i] == expect);  // exact match, no tolerance
    }
    CHECK(label_instance(utilities) == 2);
}

TEST_CASE("label_instance") {
    CHECK(label_instance({0.2, 0.8, 0.8}) == 1);
    CHECK(label_instance({0.5, 0.5, 0.5}) == 0);
    CHECK_THROWS_AS(label_instance({0.1, std::nan("")}), InvalidInstanceError);
    CHECK_THROWS_AS(label_instance({}), InvalidInstanceError);

    // argmax invariance under positive scaling
    std::mt19937_64 rng(3);
    for (int iter = 0; iter < 200; ++iter) {
        int n = 1 + static_cast<int>(rng() % 6);
        std::vector<double> u(n), scaled(n);
        double scale = next_unit(rng) * 10.0 + 1e-3;
        for (int i = 0; i < n; ++i) {
            u[i] = next_unit(rng);
            scaled[i] = u[i] * scale;
        }
        CHECK(label_instance(u) == label_instance(scaled));
    }
}

TEST_CASE("collect: exact instance count, manifest, determinism") {
    CandidatePool pool = digit_pool(3);
    std::vector<Query> queries = {digit_query(200)};
    GenerationConfig config = digit_config(200, 77);
    CollectOptions options;
    options.k = 9;
    options.instances_per_task = 25;
    options.mode = RolloutMode::Stratified;

    ScorerResolver resolver = [](const Query&) { return contains_scorer(); };

    InstanceSink sink_a;
    CollectManifest manifest =
        collect_sft_dataset(queries, pool, options, resolver, config, std::ref(sink_a));
    CHECK(manifest.emitted == 25);
    CHECK(static_cast<int>(sink_a.instances.size()) == 25);
    CHECK(manifest.attempts >= 25);
    int histogram_total = 0;
    for (int c : manifest.label_histogram) histogram_total += c;
    CHECK(histogram_total == 25);

    for (const auto& inst : sink_a.instances) {
        CHECK(inst.cap_fraction >= 0.1);
        CHECK(inst.cap_fraction <= 0.9);
        CHECK(inst.utilities.size() == 3);
        CHECK(inst.prompt.ends_with("The answer is model "));
        CHECK(inst.label == label_instance(inst.utilities));
        // utilities are exact means of the persisted per-continuation scores
        for (size_t b = 0; b < inst.branch_scores.size(); ++b) {
            double sum = 0.0;
            for (double s : inst.branch_scores[b]) sum += s;
            CHECK(std::abs(inst.k * inst.utilities[b] - sum) < 1e-9);
        }
    }

    // same seed -> identical bytes
    InstanceSink sink_b;
    collect_sft_dataset(queries, pool, options, resolver, config, std::ref(sink_b));
    std::string bytes_a, bytes_b;
    for (const auto& i : sink_a.instances) bytes_a += sft_instance_to_json(i).dump() + "\n";
    for (const auto& i : sink_b.instances) bytes_b += sft_instance_to_json(i).dump() + "\n";
    CHECK(bytes_a == bytes_b);
}

TEST_CASE("collect: labels match the brute-force optimum on every instance") {
    CandidatePool pool = digit_pool(3);
    std::vector<Query> queries = {digit_query(200)};
    GenerationConfig config = digit_config(200, 123);
    CollectOptions options;
    options.k = 9;
    options.instances_per_task = 30;
    options.mode = RolloutMode::Stratified;

    InstanceSink sink;
    collect_sft_dataset(queries, pool, options, [](const Query&) { return contains_scorer(); },
                        config, std::ref(sink));

    for (const auto& inst : sink.instances) {
        std::string prefix;
        for (const auto& seg : inst.trace_snapshot.segments) prefix += seg.text;
        int remaining_patches = (200 - inst.trace_snapshot.total_tokens) / 50;
        // one divergent patch + continuations
        int best = 0;
        double best_u = -1.0;
        for (int i = 0; i < 3; ++i) {
            double u = brute_force_expectation(digit_query(200), prefix + std::to_string(i),
                                               remaining_patches - 1, 3, contains_scorer());
            if (u > best_u) {
                best_u = u;
                best = i;
            }
        }
        CHECK(inst.label == best);
    }
}

TEST_CASE("collect: label histogram concentrates on the known optimum") {
    // Environment where only the divergent-step choice matters: every model
    // opens with "x", emits its own digit on the second patch, and pads with
    // "." afterwards. Gold "2" is reachable only by picking model 2 there.
    CandidatePool pool;
    for (int i = 0; i < 3; ++i) {
        pool.members.push_back(std::make_shared<MockBackend>(
            "m" + std::to_string(i),
            std::vector<MockRule>{
                MockRule{MockRule::Match::EndsWith, "P:", "x", 50, false},
                MockRule{MockRule::Match::EndsWith, "P:x", std::to_string(i), 50, false}},
            MockRule{MockRule::Match::Contains, "", ".", 50, false}));
    }
    pool.final_index = 2;
    Query q = digit_query(200);
    q.gold = "2";
    GenerationConfig config = digit_config(200, 9);
    CollectOptions options;
    options.k = 9;
    options.instances_per_task = 12;
    options.mode = RolloutMode::Stratified;
    options.cap_min = 0.2;  // one-patch traces: the cap lands inside patch 1
    options.cap_max = 0.2;

    InstanceSink sink;
    CollectManifest manifest = collect_sft_dataset(
        {q}, pool, options, [](const Query&) { return contains_scorer(); }, config,
        std::ref(sink));
    CHECK(manifest.label_histogram[2] == manifest.emitted);
    for (const auto& inst : sink.instances) {
        CHECK(inst.utilities[2] == 1.0);
        CHECK(inst.utilities[0] == 0.0);
        CHECK(inst.utilities[1] == 0.0);
    }
}

TEST_CASE("collect: discard-dominated environment aborts") {
    // Every generation finishes immediately, far below any cap.
    CandidatePool pool;
    pool.members = {std::make_shared<MockBackend>(
        "instant", std::vector<MockRule>{},
        MockRule{MockRule::Match::Contains, "", "done", 1, true})};
    pool.final_index = 0;
    std::vector<Query> queries = {digit_query(512)};
    CollectOptions options;
    options.k = 2;
    options.instances_per_task = 50;

    InstanceSink sink;
    CHECK_THROWS_AS(collect_sft_dataset(queries, pool, options,
                                        [](const Query&) { return contains_scorer(); },
                                        digit_config(512), std::ref(sink)),
                    ConfigError);
    CHECK(sink.instances.empty());
}

TEST_CASE("sft instance JSON round-trip carries the digit completion") {
    SftInstance inst;
    inst.query_id = "q1";
    inst.prompt = "P " + closing_question(3);
    inst.label = 2;
    inst.utilities = {0.1, 0.2, 0.7};
    inst.k = 4;
    inst.cap_fraction = 0.5;
    inst.trace_snapshot.append(Segment{1, "x", 10});
    inst.branch_scores = {{0.0, 0.25}, {0.5, 0.75}, {1.0, 1.0}};

    json j = sft_instance_to_json(inst);
    CHECK(j["completion"] == "2");
    SftInstance back = sft_instance_from_json(j);
    CHECK(back.label == 2);
    CHECK(back.utilities == inst.utilities);
    CHECK(back.branch_scores == inst.branch_scores);
    CHECK(back.trace_snapshot.total_tokens == 10);
}
