#include "tsrag/forecasting.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <random>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "tsrag/errors.hpp"
#include "tsrag/util.hpp"

namespace tsrag {

// Bump when the prompt layout changes; fingerprints must not collide across
// template revisions.
static constexpr std::string_view kPromptTemplateVersion = "tsrag-prompt-v1";

Forecast http_llm_forecast(const ForecastTask& task, const KnowledgeBase* kb,
                           const BackendConfig& backend, const Prompt& prompt);

const char* to_string(BackendKind k) {
    switch (k) {
        case BackendKind::HttpLlm: return "http";
        case BackendKind::Mock: return "mock";
        case BackendKind::RetrievalAverage: return "retrieval-average";
        case BackendKind::Naive: return "naive";
        case BackendKind::SeasonalNaive: return "seasonal-naive";
    }
    return "naive";
}

std::optional<BackendKind> parse_backend_kind(std::string_view name) {
    std::string v(name);
    std::transform(v.begin(), v.end(), v.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (v == "http") return BackendKind::HttpLlm;
    if (v == "mock") return BackendKind::Mock;
    if (v == "retrieval-average") return BackendKind::RetrievalAverage;
    if (v == "naive") return BackendKind::Naive;
    if (v == "seasonal-naive") return BackendKind::SeasonalNaive;
    return std::nullopt;
}

namespace {

std::span<const double> trailing_window(const ForecastTask& task) {
    const auto& values = task.query.values;
    if (values.size() < task.config.input_length)
        throw std::invalid_argument("forecast: query '" + task.query.id +
                                    "' is shorter than input_length " +
                                    std::to_string(task.config.input_length));
    return std::span<const double>(values).last(task.config.input_length);
}

void append_joined(std::string& text, std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) text += ", ";
        text += format_sig6(values[i]);
    }
}

std::vector<double> extract_numbers(const std::string& text) {
    static const std::regex number_re(
        R"([-+]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][-+]?[0-9]+)?)");
    std::vector<double> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), number_re);
         it != std::sregex_iterator(); ++it) {
        const std::string token = it->str();
        double v = 0.0;
        auto res = std::from_chars(token.data(), token.data() + token.size(), v);
        if (res.ec == std::errc()) out.push_back(v);
    }
    return out;
}

}  // namespace

Prompt build_prompt(const ForecastTask& task,
                    const std::vector<RetrievalResult>& results,
                    const KnowledgeBase* kb) {
    if (task.config.horizon == 0 || task.config.input_length == 0)
        throw std::invalid_argument("build_prompt: degenerate frequency config");
    if (!results.empty() && kb == nullptr)
        throw std::invalid_argument(
            "build_prompt: retrieval results given without a knowledge base");

    const std::span<const double> window = trailing_window(task);
    const ZScore q = znormalize(window);

    std::unordered_map<std::int64_t, const Segment*> by_id;
    if (kb != nullptr)
        for (const Segment& seg : kb->entries) by_id.emplace(seg.kb_id, &seg);

    Prompt prompt;
    std::string& text = prompt.text;
    text += "Task: given a ";
    text += to_string(task.config.frequency);
    text += " series, forecast the next ";
    text += std::to_string(task.config.horizon);
    text += " observations.\n";

    std::size_t refno = 0;
    for (const RetrievalResult& r : results) {
        auto it = by_id.find(r.kb_id);
        if (it == by_id.end())
            throw std::invalid_argument("build_prompt: retrieval result kb_id " +
                                        std::to_string(r.kb_id) +
                                        " is not in the knowledge base");
        const Segment& seg = *it->second;
        ++refno;
        text += "Reference ";
        text += std::to_string(refno);
        text += " (similarity ";
        text += format_sig6(r.similarity);
        text += "): history ";
        append_joined(text, denormalize(seg.context, q.mean, q.stddev));
        if (!seg.continuation.empty()) {
            text += "; continued by ";
            append_joined(text, denormalize(seg.continuation, q.mean, q.stddev));
        }
        text += "\n";
        prompt.references.emplace_back(seg.kb_id, r.similarity);
    }

    text += "Query (last ";
    text += std::to_string(task.config.input_length);
    text += " observations): ";
    append_joined(text, window);
    text += "\n";
    text += "Respond with exactly ";
    text += std::to_string(task.config.horizon);
    text += " comma-separated numbers and nothing else.";

    prompt.token_estimate = (text.size() + 3) / 4;
    prompt.fingerprint = to_hex(fnv1a64(text, fnv1a64(kPromptTemplateVersion)));
    return prompt;
}

std::vector<double> parse_response(const std::string& text, std::size_t horizon) {
    if (horizon == 0)
        throw std::invalid_argument("parse_response: horizon must be positive");

    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        std::vector<double> v = extract_numbers(line);
        if (v.size() >= horizon) {
            v.resize(horizon);
            return v;
        }
    }
    std::vector<double> all = extract_numbers(text);
    if (all.size() < horizon)
        throw BackendError("unparsable response: expected " +
                               std::to_string(horizon) + " numbers, found " +
                               std::to_string(all.size()) + " in: " + text,
                           text);
    all.resize(horizon);
    return all;
}

namespace {

Forecast naive_values(const ForecastTask& task, BackendKind kind) {
    Forecast out;
    out.backend = kind;
    out.values.assign(task.config.horizon, task.query.values.back());
    return out;
}

Forecast retrieval_average_forecast(const ForecastTask& task,
                                    const KnowledgeBase* kb) {
    if (kb == nullptr)
        throw std::invalid_argument(
            "retrieval-average backend requires a knowledge base");
    if (kb->horizon != task.config.horizon)
        throw std::invalid_argument(
            "retrieval-average: kb horizon " + std::to_string(kb->horizon) +
            " does not match task horizon " + std::to_string(task.config.horizon));

    const std::span<const double> window = trailing_window(task);
    const std::vector<RetrievalResult> results =
        retrieve_top_k(window, *kb, task.retrieval_depth);
    const ZScore q = znormalize(window);

    std::unordered_map<std::int64_t, const Segment*> by_id;
    for (const Segment& seg : kb->entries) by_id.emplace(seg.kb_id, &seg);

    std::vector<double> acc(task.config.horizon, 0.0);
    std::size_t used = 0;
    for (const RetrievalResult& r : results) {
        const Segment& seg = *by_id.at(r.kb_id);
        if (seg.continuation.empty()) continue;  // context-only entry
        for (std::size_t t = 0; t < task.config.horizon; ++t)
            acc[t] += seg.continuation[t] * q.stddev + q.mean;
        ++used;
    }
    if (used == 0) {
        // Nothing retrievable carries a continuation; fall back to naive.
        Forecast out = naive_values(task, BackendKind::RetrievalAverage);
        return out;
    }
    Forecast out;
    out.backend = BackendKind::RetrievalAverage;
    out.values.resize(task.config.horizon);
    for (std::size_t t = 0; t < task.config.horizon; ++t)
        out.values[t] = acc[t] / static_cast<double>(used);
    return out;
}

Forecast mock_forecast(const ForecastTask& task, const KnowledgeBase* kb,
                       const BackendConfig& backend) {
    std::vector<RetrievalResult> results;
    if (kb != nullptr && task.retrieval_depth > 0)
        results = retrieve_top_k(trailing_window(task), *kb, task.retrieval_depth);
    const Prompt prompt = build_prompt(task, results, kb);

    Forecast out;
    out.backend = BackendKind::Mock;
    out.prompt_fingerprint = prompt.fingerprint;

    auto it = backend.mock_responses.find(prompt.fingerprint);
    if (it != backend.mock_responses.end()) {
        if (it->second.size() != task.config.horizon)
            throw std::invalid_argument(
                "mock backend: canned response length does not match the horizon");
        out.values = it->second;
        return out;
    }
    // No canned entry: derive stable values from the fingerprint so the mock
    // stays deterministic without any setup.
    std::mt19937_64 rng(fnv1a64(prompt.fingerprint));
    const ZScore q = znormalize(trailing_window(task));
    out.values.reserve(task.config.horizon);
    for (std::size_t h = 0; h < task.config.horizon; ++h)
        out.values.push_back(q.mean + q.stddev * (2.0 * uniform01(rng) - 1.0));
    return out;
}

}  // namespace

Forecast forecast(const ForecastTask& task, const KnowledgeBase* kb,
                  const BackendConfig& backend) {
    if (task.config.horizon == 0 || task.config.input_length == 0)
        throw std::invalid_argument("forecast: degenerate frequency config");
    trailing_window(task);  // validates query length up front

    switch (backend.kind) {
        case BackendKind::Naive:
            return naive_values(task, BackendKind::Naive);
        case BackendKind::SeasonalNaive: {
            Forecast out;
            out.backend = BackendKind::SeasonalNaive;
            out.values = naive2_forecast(task.query.values, task.config.horizon,
                                         task.config.seasonality);
            return out;
        }
        case BackendKind::RetrievalAverage:
            return retrieval_average_forecast(task, kb);
        case BackendKind::Mock:
            return mock_forecast(task, kb, backend);
        case BackendKind::HttpLlm: {
            if (!backend.endpoint || !backend.model_name)
                throw std::invalid_argument(
                    "http backend requires an endpoint and a model name");
            if (task.retrieval_depth > 0 && kb == nullptr)
                throw std::invalid_argument(
                    "http backend with retrieval enabled requires a knowledge base");
            std::vector<RetrievalResult> results;
            if (task.retrieval_depth > 0)
                results =
                    retrieve_top_k(trailing_window(task), *kb, task.retrieval_depth);
            const Prompt prompt = build_prompt(task, results, kb);
            return http_llm_forecast(task, kb, backend, prompt);
        }
    }
    throw std::invalid_argument("forecast: unknown backend kind");
}

}  // namespace tsrag
