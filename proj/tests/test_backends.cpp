#include "doctest.h"
#include "fixture_server.hpp"
#include "switchgen/backends.hpp"
#include "switchgen/errors.hpp"

using namespace switchgen;

namespace {

GenerationRequest request_for(const std::string& prompt, int max_tokens = 50) {
    GenerationRequest r;
    r.prompt = prompt;
    r.max_tokens = max_tokens;
    r.top_p = 0.7;
    return r;
}

MockBackend step_backend() {
    return MockBackend("stepper",
                       {MockRule{MockRule::Match::Contains, "STEP1", "STEP2", 1, false}},
                       MockRule{MockRule::Match::Contains, "", "", 0, true});
}

}  // namespace

TEST_CASE("mock: first matching rule wins") {
    MockBackend backend = step_backend();
    GenerationResult r = backend.generate(request_for("solve...STEP1"));
    CHECK(r.text == "STEP2");
    CHECK(r.token_count == 1);
    CHECK_FALSE(r.finished);
}

TEST_CASE("mock: default emission terminates") {
    MockBackend backend = step_backend();
    GenerationResult r = backend.generate(request_for("no match here"));
    CHECK(r.text.empty());
    CHECK(r.token_count == 0);
    CHECK(r.finished);
}

TEST_CASE("mock: match kinds") {
    MockBackend backend("kinds",
                        {MockRule{MockRule::Match::Equals, "exact prompt", "eq", 1, false},
                         MockRule{MockRule::Match::EndsWith, "tail", "end", 1, false},
                         MockRule{MockRule::Match::Contains, "mid", "has", 1, false}},
                        MockRule{MockRule::Match::Contains, "", "none", 1, false});
    CHECK(backend.generate(request_for("exact prompt")).text == "eq");
    CHECK(backend.generate(request_for("x exact prompt y")).text == "none");
    CHECK(backend.generate(request_for("goes to the tail")).text == "end");
    CHECK(backend.generate(request_for("tail first, then more")).text == "none");
    CHECK(backend.generate(request_for("a mid b")).text == "has");
}

TEST_CASE("mock: token count clamped to max_tokens") {
    MockBackend backend("filler", {},
                        MockRule{MockRule::Match::Contains, "", "words", 1000000, false});
    CHECK(backend.generate(request_for("x", 50)).token_count == 50);
    CHECK(backend.generate(request_for("x", 12)).token_count == 12);
}

TEST_CASE("mock: pure function of the prompt") {
    MockBackend backend = step_backend();
    auto a = backend.generate(request_for("STEP1"));
    auto b = backend.generate(request_for("STEP1"));
    CHECK(a.text == b.text);
    CHECK(a.token_count == b.token_count);
    CHECK(a.finished == b.finished);
}

TEST_CASE("mock: logit table lookup") {
    MockBackend backend("switcher", {}, MockRule{});
    backend.set_logit_rules({MockLogitRule{"after STEP1", {2.0, 0.0, -1.0}}},
                            std::vector<double>{0.0, 0.0, 0.0});
    auto hit = backend.next_label_logits("trace after STEP1 ... The answer is model ", 3);
    CHECK(hit == std::vector<double>{2.0, 0.0, -1.0});
    auto fallback = backend.next_label_logits("something else. The answer is model ", 3);
    CHECK(fallback == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(backend.next_label_logits("x The answer is model ", 2).size() == 2);
}

TEST_CASE("mock: logit errors") {
    MockBackend no_table("gen", {}, MockRule{});
    CHECK_THROWS_AS(no_table.next_label_logits("p", 3), CapabilityError);

    MockBackend backend("sw", {}, MockRule{});
    backend.set_logit_rules({}, std::vector<double>{0.5, 0.5});
    CHECK_THROWS_AS(backend.next_label_logits("p", 3), DegenerateLogitsError);
    CHECK_THROWS_AS(backend.next_label_logits("p", 11), PoolSizeError);
}

TEST_CASE("label floor rule") {
    // labels present: 0 at -0.1, 1 at -2.3; label 2 missing -> min - 10
    auto out = apply_label_floor({-0.1, -2.3, std::nullopt});
    REQUIRE(out.size() == 3);
    CHECK(out[0] == doctest::Approx(-0.1));
    CHECK(out[1] == doctest::Approx(-2.3));
    CHECK(out[2] == doctest::Approx(-12.3));

    CHECK_THROWS_AS(apply_label_floor({std::nullopt, std::nullopt}), DegenerateLogitsError);
}

TEST_CASE("http: completion fields map onto GenerationResult") {
    testsupport::FixtureServer server;
    HttpBackendOptions options;
    options.url = server.url();
    options.model = "plain";
    options.initial_backoff_ms = 1;
    HttpBackend backend("remote", options);

    GenerationResult r = backend.generate(request_for("hello", 50));
    CHECK(r.text == " canned completion");
    CHECK(r.token_count == 50);
    CHECK_FALSE(r.finished);

    options.model = "stopper";
    HttpBackend stopper("remote", options);
    CHECK(stopper.generate(request_for("hello", 50)).finished);
}

TEST_CASE("http: missing labels get the floor") {
    testsupport::FixtureServer server;
    HttpBackendOptions options;
    options.url = server.url();
    options.model = "logits";
    HttpBackend backend("switcher", options);

    auto logits = backend.next_label_logits("... The answer is model ", 3);
    REQUIRE(logits.size() == 3);
    CHECK(logits[0] == doctest::Approx(-0.1));
    CHECK(logits[1] == doctest::Approx(-2.3));
    CHECK(logits[2] == doctest::Approx(-12.3));
}

TEST_CASE("http: 503 then 200 retries once") {
    testsupport::FixtureServer server;
    HttpBackendOptions options;
    options.url = server.url();
    options.model = "flaky";
    options.initial_backoff_ms = 1;
    HttpBackend backend("remote", options);

    GenerationResult r = backend.generate(request_for("hello", 8));
    CHECK(r.token_count == 8);
    CHECK(backend.stats().retries.load() == 1);
}

TEST_CASE("http: 401 is a config error, not retried") {
    testsupport::FixtureServer server;
    HttpBackendOptions options;
    options.url = server.url();
    options.model = "denied";
    options.initial_backoff_ms = 1;
    HttpBackend backend("remote", options);

    CHECK_THROWS_AS(backend.generate(request_for("hello")), ConfigError);
    CHECK(server.denied_hits.load() == 1);
    CHECK(backend.stats().retries.load() == 0);
}

TEST_CASE("http: provider reporting more tokens than requested is a protocol error") {
    testsupport::FixtureServer server;
    HttpBackendOptions options;
    options.url = server.url();
    options.model = "overflow";
    HttpBackend backend("remote", options);
    CHECK_THROWS_AS(backend.generate(request_for("hello", 50)), ProtocolError);
}

TEST_CASE("http: empty choices is a protocol error") {
    testsupport::FixtureServer server;
    HttpBackendOptions options;
    options.url = server.url();
    options.model = "empty";
    HttpBackend backend("remote", options);
    CHECK_THROWS_AS(backend.generate(request_for("hello")), ProtocolError);
}

TEST_CASE("http: unreachable host exhausts retries") {
    HttpBackendOptions options;
    options.url = "http://127.0.0.1:1";  // nothing listens there
    options.model = "plain";
    options.max_retries = 2;
    options.initial_backoff_ms = 1;
    options.timeout_s = 0.2;
    HttpBackend backend("remote", options);
    try {
        backend.generate(request_for("hello"));
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.attempts == 3);
    }
}

TEST_CASE("pool validation") {
    CandidatePool pool;
    CHECK_THROWS_AS(pool.validate(), PoolSizeError);
    for (int i = 0; i < 3; ++i)
        pool.members.push_back(std::make_shared<MockBackend>("m" + std::to_string(i),
                                                             std::vector<MockRule>{}, MockRule{}));
    pool.final_index = 2;
    CHECK_NOTHROW(pool.validate());
    pool.final_index = 3;
    CHECK_THROWS_AS(pool.validate(), ConfigError);
}
