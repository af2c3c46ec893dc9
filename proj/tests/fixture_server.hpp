#pragma once

// In-process OpenAI-compatible completion server with canned behaviors,
// keyed on the requested model name:
//   "plain"   -> 50-token completion, finish_reason length
//   "stopper" -> finishes with finish_reason stop
//   "logits"  -> top_logprobs with only labels "0" and "1" present
//   "flaky"   -> 503 on the first hit, then behaves like "plain"
//   "denied"  -> 401 always
//   "empty"   -> 200 with no choices
//   "judge"   -> scoring endpoint is served separately (POST /score)

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "httplib.h"
#include "nlohmann/json.hpp"

namespace testsupport {

class FixtureServer {
  public:
    FixtureServer() {
        server_.Post("/v1/completions", [this](const httplib::Request& req,
                                               httplib::Response& res) {
            handle_completions(req, res);
        });
        server_.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = nlohmann::json::parse(req.body);
            std::string response = body.at("response").get<std::string>();
            double score = judge_score.load();
            if (response.find("GOOD") != std::string::npos) score = 1.0;
            nlohmann::json reply{{"score", score}};
            if (judge_non_finite.load()) reply["score"] = "not-a-number";
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~FixtureServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    std::atomic<int> completion_hits{0};
    std::atomic<int> flaky_hits{0};
    std::atomic<int> denied_hits{0};
    std::atomic<double> judge_score{0.0};
    std::atomic<bool> judge_non_finite{false};

  private:
    void handle_completions(const httplib::Request& req, httplib::Response& res) {
        ++completion_hits;
        auto body = nlohmann::json::parse(req.body);
        std::string model = body.value("model", "");
        int max_tokens = body.value("max_tokens", 16);

        if (model == "denied") {
            ++denied_hits;
            res.status = 401;
            res.set_content("{\"error\":\"bad token\"}", "application/json");
            return;
        }
        if (model == "flaky" && flaky_hits.fetch_add(1) == 0) {
            res.status = 503;
            res.set_content("overloaded", "text/plain");
            return;
        }
        if (model == "empty") {
            res.set_content(nlohmann::json{{"choices", nlohmann::json::array()}}.dump(),
                            "application/json");
            return;
        }
        if (model == "overflow") {
            nlohmann::json reply{
                {"choices",
                 {{{"text", "way too much"}, {"index", 0}, {"finish_reason", "length"}}}},
                {"usage", {{"prompt_tokens", 5}, {"completion_tokens", max_tokens + 50}}}};
            res.set_content(reply.dump(), "application/json");
            return;
        }
        if (model == "logits") {
            nlohmann::json reply{
                {"choices",
                 {{{"text", "0"},
                   {"index", 0},
                   {"finish_reason", "length"},
                   {"logprobs",
                    {{"tokens", {"0"}},
                     {"token_logprobs", {-0.1}},
                     {"top_logprobs",
                      {{{"0", -0.1}, {"1", -2.3}, {"the", -0.5}, {" 7", -9.0}}}}}}}}},
                {"usage", {{"prompt_tokens", 5}, {"completion_tokens", 1}}}};
            res.set_content(reply.dump(), "application/json");
            return;
        }

        bool stop = model == "stopper";
        int tokens = stop ? std::min(7, max_tokens) : max_tokens;
        nlohmann::json reply{
            {"choices",
             {{{"text", " canned completion"},
               {"index", 0},
               {"finish_reason", stop ? "stop" : "length"}}}},
            {"usage", {{"prompt_tokens", 5}, {"completion_tokens", tokens}}}};
        res.set_content(reply.dump(), "application/json");
    }

    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace testsupport
