// Chat-completion HTTP transport for the forecasting module. Kept in its own
// translation unit so the heavyweight httplib include stays out of everything
// else.

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "tsrag/errors.hpp"
#include "tsrag/forecasting.hpp"
#include "tsrag/util.hpp"

namespace tsrag {

namespace {

using nlohmann::json;

constexpr const char* kSystemInstruction =
    "You are a time series forecasting engine. Answer with the requested "
    "quantity of comma-separated numeric forecasts and no other text.";

struct ParsedUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // leading slash, "/" when absent
    bool https = false;
};

ParsedUrl parse_endpoint(const std::string& url) {
    ParsedUrl out;
    std::string rest;
    if (url.rfind("http://", 0) == 0) {
        rest = url.substr(7);
        out.base = "http://";
    } else if (url.rfind("https://", 0) == 0) {
        rest = url.substr(8);
        out.base = "https://";
        out.https = true;
    } else {
        throw std::invalid_argument("http backend: endpoint must start with "
                                    "http:// or https://, got '" + url + "'");
    }
    const std::size_t slash = rest.find('/');
    if (slash == std::string::npos) {
        out.base += rest;
        out.path = "/";
    } else {
        out.base += rest.substr(0, slash);
        out.path = rest.substr(slash);
    }
    if (out.base.size() <= (out.https ? 8u : 7u))
        throw std::invalid_argument("http backend: endpoint has no host: '" +
                                    url + "'");
    return out;
}

// Process-wide cap on concurrent requests. The cap is whatever the current
// caller configured, which keeps the gate honest as long as one configuration
// is in play (the CLI only ever has one).
class InFlightGate {
public:
    void acquire(int cap) {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return active_ < cap; });
        ++active_;
    }
    void release() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            --active_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int active_ = 0;
};

InFlightGate& gate() {
    static InFlightGate g;
    return g;
}

bool retryable_status(int status) {
    return status == 408 || status == 429 || status >= 500;
}

void audit_log(const BackendConfig& backend, const std::string& message) {
    if (!backend.audit) return;
    // Unconditional stderr write; audit output must not depend on TSRAG_LOG.
    std::fputs(("tsrag[audit] " + message + "\n").c_str(), stderr);
}

}  // namespace

// forecast() in forecasting.cpp dispatches here for BackendKind::HttpLlm.
Forecast http_llm_forecast(const ForecastTask& task, const KnowledgeBase*,
                           const BackendConfig& backend, const Prompt& prompt) {
    const ParsedUrl url = parse_endpoint(*backend.endpoint);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (url.https)
        throw BackendError(
            "http backend: this build lacks TLS support; use an http:// endpoint");
#endif

    const json body = {
        {"model", *backend.model_name},
        {"temperature", 0},
        {"messages",
         {{{"role", "system"}, {"content", kSystemInstruction}},
          {{"role", "user"}, {"content", prompt.text}}}},
    };
    const std::string payload = body.dump();

    httplib::Client client(url.base);
    client.set_connection_timeout(backend.timeout);
    client.set_read_timeout(backend.timeout);
    client.set_write_timeout(backend.timeout);

    httplib::Headers headers;
    const char* key = std::getenv("TSRAG_API_KEY");
    const bool has_key = key != nullptr && *key != '\0';
    if (has_key) headers.emplace("Authorization", std::string("Bearer ") + key);

    audit_log(backend, "POST " + url.base + url.path +
                           (has_key ? " authorization=Bearer <redacted>" : "") +
                           " body=" + payload);

    std::string content;
    std::string last_error;
    bool ok = false;
    const int attempts = backend.max_retries + 1;
    for (int attempt = 0; attempt < attempts && !ok; ++attempt) {
        if (attempt > 0) {
            const auto delay = backend.retry_backoff * (1 << (attempt - 1));
            log(LogLevel::Info, "http backend: retrying in " +
                                    std::to_string(delay.count()) + "ms (" +
                                    last_error + ")");
            std::this_thread::sleep_for(delay);
        }
        gate().acquire(backend.max_in_flight);
        httplib::Result res =
            client.Post(url.path, headers, payload, "application/json");
        gate().release();

        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            audit_log(backend, "no response (" + last_error + ")");
            continue;
        }
        audit_log(backend, "response status=" + std::to_string(res->status) +
                               " body=" + res->body);
        if (res->status == 200) {
            try {
                const json reply = json::parse(res->body);
                content = reply.at("choices").at(0).at("message").at("content")
                              .get<std::string>();
            } catch (const json::exception& e) {
                throw BackendError(
                    "http backend: malformed completion response: " +
                        std::string(e.what()),
                    res->body);
            }
            ok = true;
            break;
        }
        if (retryable_status(res->status)) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        throw BackendError("http backend: status " + std::to_string(res->status) +
                               " from " + *backend.endpoint,
                           res->body);
    }
    if (!ok)
        throw BackendError("http backend: endpoint unreachable after " +
                           std::to_string(backend.max_retries) + " retries (" +
                           last_error + ")");

    Forecast out;
    out.backend = BackendKind::HttpLlm;
    out.prompt_fingerprint = prompt.fingerprint;
    out.raw_response = content;
    out.values = parse_response(content, task.config.horizon);
    return out;
}

}  // namespace tsrag
