#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "test_support.hpp"
#include "tsrag/errors.hpp"
#include "tsrag/forecasting.hpp"
#include "tsrag/knowledge_base.hpp"

using namespace tsrag;
using test_support::TempDir;

namespace {

FrequencyConfig tiny_config() {
    FrequencyConfig cfg;
    cfg.frequency = Frequency::Hourly;
    cfg.input_length = 4;
    cfg.horizon = 3;
    cfg.seasonality = 1;
    return cfg;
}

ForecastTask tiny_task() {
    ForecastTask task;
    task.query = {"Q1", Frequency::Hourly, {1.0, 1.0, 3.0, 3.0}};
    task.config = tiny_config();
    return task;
}

// A two-entry KB with unit-std contexts so denormalization onto the query's
// scale stays in round numbers. Entry 0 matches the normalized tiny_task
// query exactly.
KnowledgeBase tiny_kb() {
    KnowledgeBase kb;
    kb.frequency = Frequency::Hourly;
    kb.window_length = 4;
    kb.step = 1;
    kb.horizon = 3;

    Segment a;
    a.kb_id = 0;
    a.source_series_id = "A";
    a.context = {-1.0, -1.0, 1.0, 1.0};
    a.continuation = {0.0, 2.0, 4.0};
    a.norm_mean = 0.0;
    a.norm_std = 1.0;

    Segment b;
    b.kb_id = 1;
    b.source_series_id = "B";
    b.context = {1.0, 1.0, -1.0, -1.0};
    b.continuation = {2.0, 4.0, 6.0};
    b.norm_mean = 0.0;
    b.norm_std = 1.0;

    kb.entries = {a, b};
    return kb;
}

// Minimal in-process chat-completion endpoint for backend tests.
class ScopedServer {
public:
    explicit ScopedServer(httplib::Server::Handler handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~ScopedServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const {
        return "http://127.0.0.1:" + std::to_string(port_) +
               "/v1/chat/completions";
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string completion_body(const std::string& content) {
    nlohmann::json reply = {
        {"choices",
         {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
    };
    return reply.dump();
}

// Redirects stderr into a file for the lifetime of the object, so tests can
// inspect audit output.
class StderrCapture {
public:
    explicit StderrCapture(const std::filesystem::path& path) {
        std::fflush(stderr);
        saved_fd_ = dup(fileno(stderr));
        FILE* redirected = std::freopen(path.c_str(), "w", stderr);
        REQUIRE(redirected != nullptr);
    }
    ~StderrCapture() {
        std::fflush(stderr);
        dup2(saved_fd_, fileno(stderr));
        close(saved_fd_);
    }

private:
    int saved_fd_ = -1;
};

}  // namespace

TEST_CASE("backend kinds parse and print") {
    for (const char* name :
         {"http", "mock", "retrieval-average", "naive", "seasonal-naive"}) {
        const auto kind = parse_backend_kind(name);
        REQUIRE(kind.has_value());
        CHECK(std::string(to_string(*kind)) == name);
    }
    CHECK(parse_backend_kind("MOCK").has_value());
    CHECK(!parse_backend_kind("oracle").has_value());
    CHECK(!parse_backend_kind("").has_value());
}

TEST_CASE("prompt carries all four sections") {
    const KnowledgeBase kb = tiny_kb();
    const ForecastTask task = tiny_task();
    const auto results = retrieve_top_k(task.query.values, kb, 2);
    const Prompt prompt = build_prompt(task, results, &kb);

    CHECK(prompt.text.find("Task: given a hourly series, forecast the next 3 "
                           "observations.") != std::string::npos);
    CHECK(prompt.text.find("Reference 1 (similarity 0): history") !=
          std::string::npos);
    CHECK(prompt.text.find("Reference 2") != std::string::npos);
    CHECK(prompt.text.find("continued by") != std::string::npos);
    CHECK(prompt.text.find("Query (last 4 observations): 1, 1, 3, 3") !=
          std::string::npos);
    CHECK(prompt.text.find("Respond with exactly 3 comma-separated numbers and "
                           "nothing else.") != std::string::npos);

    REQUIRE(prompt.references.size() == 2);
    CHECK(prompt.references[0].first == 0);
    CHECK(prompt.references[0].second == 0.0);
    CHECK(prompt.token_estimate == (prompt.text.size() + 3) / 4);
    CHECK(prompt.fingerprint.size() == 16);
}

TEST_CASE("prompt references are rendered on the query's scale") {
    // Query mean 2, std 1: entry 0's context [-1,-1,1,1] renders as 1, 1, 3, 3
    // and its continuation [0,2,4] as 2, 4, 6.
    const KnowledgeBase kb = tiny_kb();
    const ForecastTask task = tiny_task();
    const auto results = retrieve_top_k(task.query.values, kb, 1);
    const Prompt prompt = build_prompt(task, results, &kb);
    CHECK(prompt.text.find("history 1, 1, 3, 3; continued by 2, 4, 6") !=
          std::string::npos);
}

TEST_CASE("prompt numbers use six significant digits") {
    ForecastTask task = tiny_task();
    task.query.values = {1.23456789, 2.0, 3.0, 987654.321};
    const Prompt prompt = build_prompt(task, {}, nullptr);
    CHECK(prompt.text.find("1.23457") != std::string::npos);
    CHECK(prompt.text.find("987654") != std::string::npos);
    CHECK(prompt.text.find("1.23456789") == std::string::npos);
}

TEST_CASE("empty retrieval drops the reference section entirely") {
    const ForecastTask task = tiny_task();
    const Prompt ablated = build_prompt(task, {}, nullptr);
    CHECK(ablated.text.find("Reference") == std::string::npos);
    CHECK(ablated.text.find("Task:") != std::string::npos);
    CHECK(ablated.text.find("Query (last 4 observations)") != std::string::npos);

    // And the fingerprint distinguishes it from the retrieval-backed prompt.
    const KnowledgeBase kb = tiny_kb();
    const auto results = retrieve_top_k(task.query.values, kb, 2);
    const Prompt full = build_prompt(task, results, &kb);
    CHECK(full.fingerprint != ablated.fingerprint);
}

TEST_CASE("identical inputs produce identical prompts") {
    const KnowledgeBase kb = tiny_kb();
    const ForecastTask task = tiny_task();
    const auto results = retrieve_top_k(task.query.values, kb, 2);
    const Prompt p1 = build_prompt(task, results, &kb);
    const Prompt p2 = build_prompt(task, results, &kb);
    CHECK(p1.text == p2.text);
    CHECK(p1.fingerprint == p2.fingerprint);
    CHECK(p1.token_estimate == p2.token_estimate);
}

TEST_CASE("prompt construction preconditions") {
    const KnowledgeBase kb = tiny_kb();
    ForecastTask task = tiny_task();

    SUBCASE("results without a knowledge base") {
        RetrievalResult r;
        r.kb_id = 0;
        CHECK_THROWS_AS(build_prompt(task, {r}, nullptr), std::invalid_argument);
    }
    SUBCASE("result id unknown to the knowledge base") {
        RetrievalResult r;
        r.kb_id = 42;
        CHECK_THROWS_AS(build_prompt(task, {r}, &kb), std::invalid_argument);
    }
    SUBCASE("query shorter than the input length") {
        task.query.values = {1.0, 2.0};
        CHECK_THROWS_AS(build_prompt(task, {}, nullptr), std::invalid_argument);
    }
    SUBCASE("degenerate config") {
        task.config.horizon = 0;
        CHECK_THROWS_AS(build_prompt(task, {}, nullptr), std::invalid_argument);
    }
}

TEST_CASE("response parsing") {
    SUBCASE("plain comma-separated line") {
        CHECK(parse_response("1.5, -2, 3e2", 3) ==
              std::vector{1.5, -2.0, 300.0});
    }
    SUBCASE("first line with enough numbers wins") {
        CHECK(parse_response("too few: 8 9\n1, 2, 3\n4, 5, 6", 3) ==
              std::vector{1.0, 2.0, 3.0});
    }
    SUBCASE("prose around the numbers is ignored") {
        CHECK(parse_response("The forecast is: 4.25, then 5.0, then 6.75.", 3) ==
              std::vector{4.25, 5.0, 6.75});
    }
    SUBCASE("extra numbers are truncated to the horizon") {
        CHECK(parse_response("1, 2, 3, 4, 5", 2) == std::vector{1.0, 2.0});
    }
    SUBCASE("numbers spread over lines fall back to the whole text") {
        CHECK(parse_response("1\n2\n3", 3) == std::vector{1.0, 2.0, 3.0});
    }
    SUBCASE("too few numbers throw with the raw text preserved") {
        try {
            parse_response("cannot comply", 3);
            FAIL("expected BackendError");
        } catch (const BackendError& e) {
            CHECK(e.raw_response() == "cannot comply");
            CHECK(std::string(e.what()).find("unparsable") != std::string::npos);
        }
    }
    SUBCASE("zero horizon is a caller bug") {
        CHECK_THROWS_AS(parse_response("1", 0), std::invalid_argument);
    }
}

TEST_CASE("naive backend repeats the last observation") {
    ForecastTask task = tiny_task();
    BackendConfig backend;
    backend.kind = BackendKind::Naive;
    const Forecast f = forecast(task, nullptr, backend);
    CHECK(f.values == std::vector{3.0, 3.0, 3.0});
    CHECK(f.backend == BackendKind::Naive);
    CHECK(!f.prompt_fingerprint.has_value());
}

TEST_CASE("seasonal-naive backend repeats the last season") {
    ForecastTask task;
    task.query = {"Q", Frequency::Hourly, {10.0, 20.0, 11.0, 21.0}};
    task.config = tiny_config();
    task.config.input_length = 4;
    task.config.horizon = 3;
    task.config.seasonality = 2;
    BackendConfig backend;
    backend.kind = BackendKind::SeasonalNaive;
    const Forecast f = forecast(task, nullptr, backend);
    CHECK(f.values == std::vector{11.0, 21.0, 11.0});
}

TEST_CASE("retrieval-average averages denormalized continuations") {
    const KnowledgeBase kb = tiny_kb();
    const ForecastTask task = tiny_task();
    BackendConfig backend;
    backend.kind = BackendKind::RetrievalAverage;
    const Forecast f = forecast(task, &kb, backend);
    // Query scale: mean 2, std 1. Entry 0 maps to [2,4,6], entry 1 to [4,6,8].
    CHECK(f.values == std::vector{3.0, 5.0, 7.0});
    CHECK(f.backend == BackendKind::RetrievalAverage);
}

TEST_CASE("retrieval-average honors the retrieval depth") {
    const KnowledgeBase kb = tiny_kb();
    ForecastTask task = tiny_task();
    task.retrieval_depth = 1;  // only the exact match contributes
    BackendConfig backend;
    backend.kind = BackendKind::RetrievalAverage;
    const Forecast f = forecast(task, &kb, backend);
    CHECK(f.values == std::vector{2.0, 4.0, 6.0});
}

TEST_CASE("retrieval-average falls back to naive without continuations") {
    KnowledgeBase kb = tiny_kb();
    kb.entries[0].continuation.clear();
    kb.entries[1].continuation.clear();
    const ForecastTask task = tiny_task();
    BackendConfig backend;
    backend.kind = BackendKind::RetrievalAverage;
    const Forecast f = forecast(task, &kb, backend);
    CHECK(f.values == std::vector{3.0, 3.0, 3.0});
    CHECK(f.backend == BackendKind::RetrievalAverage);
}

TEST_CASE("retrieval-average preconditions") {
    const KnowledgeBase kb = tiny_kb();
    ForecastTask task = tiny_task();
    BackendConfig backend;
    backend.kind = BackendKind::RetrievalAverage;

    SUBCASE("knowledge base required") {
        CHECK_THROWS_AS(forecast(task, nullptr, backend), std::invalid_argument);
    }
    SUBCASE("kb horizon must match the task") {
        task.config.horizon = 5;
        CHECK_THROWS_WITH_AS(forecast(task, &kb, backend),
                             doctest::Contains("horizon"), std::invalid_argument);
    }
}

TEST_CASE("a window retrieves itself and reproduces its continuation") {
    // Unit-std windows with integer values keep every normalize/denormalize
    // step exact, so the round trip is bitwise.
    Series s{"S", Frequency::Hourly, {0.0, 2.0, 0.0, 2.0, 5.0, 7.0, 9.0}};
    KbConfig cfg;
    cfg.window_length = 4;
    cfg.step = 1;
    cfg.horizon = 3;
    cfg.k = 4;  // keep every segment
    const KnowledgeBase kb = build_kb({s}, cfg);

    ForecastTask task;
    task.query = {"probe", Frequency::Hourly, {0.0, 2.0, 0.0, 2.0}};
    task.config = tiny_config();
    task.retrieval_depth = 1;

    const auto results = retrieve_top_k(task.query.values, kb, 1);
    REQUIRE(results.size() == 1);
    CHECK(results[0].kb_id == 0);
    CHECK(results[0].similarity == 0.0);
    CHECK(results[0].rank == 1);

    BackendConfig backend;
    backend.kind = BackendKind::RetrievalAverage;
    const Forecast f = forecast(task, &kb, backend);
    CHECK(f.values == std::vector{5.0, 7.0, 9.0});
}

TEST_CASE("mock backend returns canned values by prompt fingerprint") {
    ForecastTask task = tiny_task();
    task.retrieval_depth = 0;
    const Prompt prompt = build_prompt(task, {}, nullptr);

    BackendConfig backend;
    backend.kind = BackendKind::Mock;
    backend.mock_responses[prompt.fingerprint] = {7.0, 8.0, 9.0};

    const Forecast f = forecast(task, nullptr, backend);
    CHECK(f.values == std::vector{7.0, 8.0, 9.0});
    REQUIRE(f.prompt_fingerprint.has_value());
    CHECK(*f.prompt_fingerprint == prompt.fingerprint);

    SUBCASE("canned length must match the horizon") {
        backend.mock_responses[prompt.fingerprint] = {7.0};
        CHECK_THROWS_AS(forecast(task, nullptr, backend), std::invalid_argument);
    }
}

TEST_CASE("mock backend is deterministic without canned values") {
    const KnowledgeBase kb = tiny_kb();
    const ForecastTask task = tiny_task();
    BackendConfig backend;
    backend.kind = BackendKind::Mock;

    const Forecast f1 = forecast(task, &kb, backend);
    const Forecast f2 = forecast(task, &kb, backend);
    CHECK(f1.values == f2.values);
    REQUIRE(f1.values.size() == 3);
    // Values stay inside mean +/- std of the query window (2 +/- 1).
    for (double v : f1.values) {
        CHECK(v >= 1.0);
        CHECK(v <= 3.0);
    }
}

TEST_CASE("http backend completes a request round trip") {
    std::string seen_body;
    ScopedServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        res.set_content(completion_body("1.5, 2.5, 3.5"), "application/json");
    });

    ForecastTask task = tiny_task();
    task.retrieval_depth = 0;
    BackendConfig backend;
    backend.kind = BackendKind::HttpLlm;
    backend.endpoint = server.endpoint();
    backend.model_name = "test-model";

    const Forecast f = forecast(task, nullptr, backend);
    CHECK(f.values == std::vector{1.5, 2.5, 3.5});
    CHECK(f.backend == BackendKind::HttpLlm);
    REQUIRE(f.raw_response.has_value());
    CHECK(*f.raw_response == "1.5, 2.5, 3.5");

    const auto body = nlohmann::json::parse(seen_body);
    CHECK(body.at("model") == "test-model");
    CHECK(body.at("temperature") == 0);
    REQUIRE(body.at("messages").size() == 2);
    CHECK(body.at("messages")[0].at("role") == "system");
    const std::string user_prompt = body.at("messages")[1].at("content");
    CHECK(user_prompt.find("Respond with exactly 3") != std::string::npos);
}

TEST_CASE("http backend sends the API key as a bearer token") {
    std::string seen_auth = "unset";
    ScopedServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        res.set_content(completion_body("1, 2, 3"), "application/json");
    });

    setenv("TSRAG_API_KEY", "secret-key-123", 1);
    ForecastTask task = tiny_task();
    task.retrieval_depth = 0;
    BackendConfig backend;
    backend.kind = BackendKind::HttpLlm;
    backend.endpoint = server.endpoint();
    backend.model_name = "m";
    forecast(task, nullptr, backend);
    unsetenv("TSRAG_API_KEY");

    CHECK(seen_auth == "Bearer secret-key-123");
}

TEST_CASE("audit logging redacts the API key") {
    ScopedServer server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content(completion_body("1, 2, 3"), "application/json");
    });

    setenv("TSRAG_API_KEY", "hunter2-key", 1);
    ForecastTask task = tiny_task();
    task.retrieval_depth = 0;
    BackendConfig backend;
    backend.kind = BackendKind::HttpLlm;
    backend.endpoint = server.endpoint();
    backend.model_name = "m";
    backend.audit = true;

    TempDir dir("audit");
    {
        StderrCapture capture(dir.file("stderr.txt"));
        forecast(task, nullptr, backend);
    }
    unsetenv("TSRAG_API_KEY");

    const std::string log = test_support::read_file(dir.file("stderr.txt"));
    CHECK(log.find("tsrag[audit]") != std::string::npos);
    CHECK(log.find("Bearer <redacted>") != std::string::npos);
    CHECK(log.find("hunter2-key") == std::string::npos);
}

TEST_CASE("http backend retries retryable statuses") {
    std::atomic<int> hits{0};
    ScopedServer server([&](const httplib::Request&, httplib::Response& res) {
        if (++hits == 1) {
            res.status = 500;
            res.set_content("overloaded", "text/plain");
        } else {
            res.set_content(completion_body("4, 5, 6"), "application/json");
        }
    });

    ForecastTask task = tiny_task();
    task.retrieval_depth = 0;
    BackendConfig backend;
    backend.kind = BackendKind::HttpLlm;
    backend.endpoint = server.endpoint();
    backend.model_name = "m";
    backend.retry_backoff = std::chrono::milliseconds(10);

    const Forecast f = forecast(task, nullptr, backend);
    CHECK(f.values == std::vector{4.0, 5.0, 6.0});
    CHECK(hits.load() == 2);
}

TEST_CASE("http backend gives up after exhausting retries") {
    ForecastTask task = tiny_task();
    task.retrieval_depth = 0;
    BackendConfig backend;
    backend.kind = BackendKind::HttpLlm;
    backend.endpoint = "http://127.0.0.1:1/v1/chat/completions";
    backend.model_name = "m";
    backend.max_retries = 1;
    backend.retry_backoff = std::chrono::milliseconds(1);
    backend.timeout = std::chrono::seconds(2);

    CHECK_THROWS_WITH_AS(forecast(task, nullptr, backend),
                         doctest::Contains("unreachable"), BackendError);
}

TEST_CASE("http backend does not retry client errors") {
    std::atomic<int> hits{0};
    ScopedServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
        res.set_content("bad request", "text/plain");
    });

    ForecastTask task = tiny_task();
    task.retrieval_depth = 0;
    BackendConfig backend;
    backend.kind = BackendKind::HttpLlm;
    backend.endpoint = server.endpoint();
    backend.model_name = "m";

    CHECK_THROWS_WITH_AS(forecast(task, nullptr, backend),
                         doctest::Contains("status 400"), BackendError);
    CHECK(hits.load() == 1);
}

TEST_CASE("http backend surfaces malformed completion payloads") {
    ScopedServer server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content("surprise, not json", "text/plain");
    });

    ForecastTask task = tiny_task();
    task.retrieval_depth = 0;
    BackendConfig backend;
    backend.kind = BackendKind::HttpLlm;
    backend.endpoint = server.endpoint();
    backend.model_name = "m";

    try {
        forecast(task, nullptr, backend);
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(std::string(e.what()).find("malformed") != std::string::npos);
        CHECK(e.raw_response() == "surprise, not json");
    }
}

TEST_CASE("http backend surfaces content it cannot parse") {
    ScopedServer server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content(completion_body("I cannot forecast"), "application/json");
    });

    ForecastTask task = tiny_task();
    task.retrieval_depth = 0;
    BackendConfig backend;
    backend.kind = BackendKind::HttpLlm;
    backend.endpoint = server.endpoint();
    backend.model_name = "m";

    try {
        forecast(task, nullptr, backend);
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.raw_response() == "I cannot forecast");
    }
}

TEST_CASE("http backend configuration preconditions") {
    ForecastTask task = tiny_task();
    BackendConfig backend;
    backend.kind = BackendKind::HttpLlm;

    SUBCASE("endpoint and model are required") {
        CHECK_THROWS_AS(forecast(task, nullptr, backend), std::invalid_argument);
    }
    SUBCASE("retrieval without a knowledge base") {
        backend.endpoint = "http://127.0.0.1:1/x";
        backend.model_name = "m";
        task.retrieval_depth = 3;
        CHECK_THROWS_AS(forecast(task, nullptr, backend), std::invalid_argument);
    }
    SUBCASE("endpoint must be a full url") {
        backend.endpoint = "127.0.0.1:9/x";
        backend.model_name = "m";
        task.retrieval_depth = 0;
        CHECK_THROWS_AS(forecast(task, nullptr, backend), std::invalid_argument);
    }
}
