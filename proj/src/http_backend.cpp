#include <chrono>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "switchgen/backends.hpp"
#include "switchgen/errors.hpp"

namespace switchgen {

// Counting semaphore with a runtime limit; caps in-flight requests per backend.
struct HttpBackend::Gate {
    explicit Gate(int limit) : slots(limit < 1 ? 1 : limit) {}

    void acquire() {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return slots > 0; });
        --slots;
    }
    void release() {
        {
            std::lock_guard lock(mu);
            ++slots;
        }
        cv.notify_one();
    }

    std::mutex mu;
    std::condition_variable cv;
    int slots;
};

namespace {

// "http://host:port/base" -> {"http://host:port", "/base"}
std::pair<std::string, std::string> split_url(const std::string& url) {
    size_t scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("backend url must include a scheme: " + url);
    size_t path = url.find('/', scheme + 3);
    if (path == std::string::npos) return {url, ""};
    return {url.substr(0, path), url.substr(path)};
}

}  // namespace

HttpBackend::HttpBackend(std::string name, HttpBackendOptions options)
    : Backend(std::move(name)), options_(std::move(options)), gate_(new Gate(options_.concurrency)) {
    split_url(options_.url);  // validate eagerly
}

HttpBackend::~HttpBackend() = default;

json HttpBackend::post_completion(const json& body) {
    auto [host, base] = split_url(options_.url);
    const std::string path = base + "/v1/completions";
    const std::string payload = body.dump();

    gate_->acquire();
    struct Release {
        Gate* gate;
        ~Release() { gate->release(); }
    } release{gate_.get()};

    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            stats_.retries.fetch_add(1);
            int backoff = options_.initial_backoff_ms << (attempt - 1);
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        }
        stats_.requests.fetch_add(1);

        httplib::Client client(host);
        client.set_connection_timeout(std::chrono::milliseconds(
            static_cast<int>(options_.timeout_s * 1000)));
        client.set_read_timeout(std::chrono::milliseconds(
            static_cast<int>(options_.timeout_s * 1000)));
        httplib::Headers headers;
        if (!options_.auth_token.empty())
            headers.emplace("Authorization", "Bearer " + options_.auth_token);

        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) {
            try {
                return json::parse(res->body);
            } catch (const json::exception& e) {
                throw ProtocolError("backend '" + name() + "' returned unparseable JSON: " +
                                    e.what());
            }
        }
        if (res->status >= 400 && res->status < 500) {
            throw ConfigError("backend '" + name() + "' rejected the request with HTTP " +
                              std::to_string(res->status) + ": " + res->body);
        }
        last_error = "HTTP " + std::to_string(res->status);
    }
    throw BackendError("backend '" + name() + "' failed: " + last_error,
                       options_.max_retries + 1);
}

GenerationResult HttpBackend::generate(const GenerationRequest& request) {
    if (request.prompt.empty()) throw ConfigError("generate called with empty prompt");
    json body{{"model", options_.model},
              {"prompt", request.prompt},
              {"max_tokens", request.max_tokens},
              {"top_p", request.top_p},
              {"temperature", request.temperature}};
    if (request.seed) body["seed"] = *request.seed;

    json reply = post_completion(body);
    if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty())
        throw ProtocolError("backend '" + name() + "' returned no choices");
    const json& choice = reply["choices"][0];

    GenerationResult result;
    result.text = choice.value("text", std::string());
    result.finished = choice.value("finish_reason", std::string()) == "stop";
    if (reply.contains("usage") && reply["usage"].contains("completion_tokens"))
        result.token_count = reply["usage"]["completion_tokens"].get<int>();
    else
        throw ProtocolError("backend '" + name() + "' reported no completion token count");
    if (result.token_count > request.max_tokens)
        throw ProtocolError("backend '" + name() + "' returned " +
                            std::to_string(result.token_count) + " tokens for max_tokens=" +
                            std::to_string(request.max_tokens));
    return result;
}

std::vector<double> HttpBackend::next_label_logits(const std::string& prompt, int n) {
    if (n < 1 || n > kMaxPoolSize)
        throw PoolSizeError("pool size must be in [1, 10], got " + std::to_string(n));
    json body{{"model", options_.model},
              {"prompt", prompt},
              {"max_tokens", 1},
              {"temperature", 0.0},
              {"logprobs", 20}};

    json reply = post_completion(body);
    if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty())
        throw ProtocolError("backend '" + name() + "' returned no choices");
    const json& choice = reply["choices"][0];
    if (!choice.contains("logprobs") || choice["logprobs"].is_null())
        throw CapabilityError("backend '" + name() + "' exposes no logprob facility");
    const json& lp = choice["logprobs"];
    if (!lp.contains("top_logprobs") || !lp["top_logprobs"].is_array() ||
        lp["top_logprobs"].empty())
        throw CapabilityError("backend '" + name() + "' returned no top_logprobs");
    const json& top = lp["top_logprobs"][0];

    // A label counts as present when some returned token trims to its digit.
    std::vector<std::optional<double>> found(n);
    for (auto it = top.begin(); it != top.end(); ++it) {
        std::string token = it.key();
        size_t a = token.find_first_not_of(" \t\n");
        if (a == std::string::npos) continue;
        size_t b = token.find_last_not_of(" \t\n");
        std::string core = token.substr(a, b - a + 1);
        if (core.size() != 1 || core[0] < '0' || core[0] > '9') continue;
        int label = core[0] - '0';
        if (label >= n) continue;
        double v = it.value().get<double>();
        if (!found[label] || v > *found[label]) found[label] = v;
    }
    return apply_label_floor(found);
}

}  // namespace switchgen
