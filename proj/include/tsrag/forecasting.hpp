#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tsrag/dtw.hpp"
#include "tsrag/knowledge_base.hpp"
#include "tsrag/timeseries.hpp"

namespace tsrag {

enum class BackendKind { HttpLlm, Mock, RetrievalAverage, Naive, SeasonalNaive };

// CLI spellings: "http", "mock", "retrieval-average", "naive", "seasonal-naive".
const char* to_string(BackendKind k);
std::optional<BackendKind> parse_backend_kind(std::string_view name);

struct BackendConfig {
    BackendKind kind = BackendKind::Naive;
    std::optional<std::string> endpoint;    // http only; full chat-completion URL
    std::optional<std::string> model_name;  // http only
    std::chrono::seconds timeout{30};
    int max_retries = 3;                    // extra attempts after the first
    std::chrono::milliseconds retry_backoff{1000};  // doubles per retry
    int max_in_flight = 4;                  // cap on simultaneous http requests
    bool audit = false;                     // log request/response bodies
    // Mock backend: canned values keyed by prompt fingerprint. Fingerprints
    // with no entry get deterministic values derived from the fingerprint, so
    // repeated runs always agree.
    std::map<std::string, std::vector<double>> mock_responses;
};

struct ForecastTask {
    Series query;           // at least config.input_length observations
    FrequencyConfig config;
    std::size_t retrieval_depth = 5;  // references requested; 0 disables retrieval
};

struct Prompt {
    std::string text;
    std::size_t token_estimate = 0;
    // (kb_id, similarity) of every reference rendered into the text.
    std::vector<std::pair<std::int64_t, double>> references;
    std::string fingerprint;  // stable hash of (template version, text)
};

struct Forecast {
    std::vector<double> values;  // exactly config.horizon entries
    BackendKind backend = BackendKind::Naive;
    std::optional<std::string> prompt_fingerprint;  // prompt-driven backends only
    std::optional<std::string> raw_response;        // http only
};

// Deterministic prompt with four sections: a task header naming the frequency
// and horizon, one block per retrieved reference (context plus continuation
// when present, mapped onto the query's scale via the query window's
// (mean, std)), the query's trailing input_length observations, and an
// instruction demanding exactly horizon comma-separated numbers. Numbers are
// rendered at 6 significant digits. With no results the reference section is
// simply absent, which is the no-retrieval ablation prompt.
Prompt build_prompt(const ForecastTask& task,
                    const std::vector<RetrievalResult>& results,
                    const KnowledgeBase* kb);

// Pulls the forecast numbers out of model output: all decimal literals, in
// order, from the first line holding at least `horizon` of them, falling back
// to the whole text; the first `horizon` are returned. Fewer than that throws
// BackendError("unparsable response ...") carrying the raw text.
std::vector<double> parse_response(const std::string& text, std::size_t horizon);

// Runs one forecasting task against a backend. The knowledge base may be null
// for backends that do not retrieve (naive, seasonal-naive, and mock or http
// with retrieval_depth 0).
Forecast forecast(const ForecastTask& task, const KnowledgeBase* kb,
                  const BackendConfig& backend);

}  // namespace tsrag
