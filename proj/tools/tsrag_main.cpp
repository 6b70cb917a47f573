// tsrag: retrieval-augmented time-series forecasting over sliced, clustered
// reference windows. Subcommands cover the full pipeline: build-kb, retrieve,
// forecast, evaluate, synth.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsrag/errors.hpp"
#include "tsrag/evaluation.hpp"
#include "tsrag/forecasting.hpp"
#include "tsrag/knowledge_base.hpp"
#include "tsrag/util.hpp"

namespace {

using nlohmann::json;

tsrag::Frequency parse_freq_arg(const std::string& name) {
    auto f = tsrag::parse_frequency(name);
    if (!f)
        throw std::invalid_argument(
            "unknown frequency '" + name +
            "' (expected yearly|quarterly|monthly|weekly|daily|hourly)");
    return *f;
}

tsrag::BackendKind parse_backend_arg(const std::string& name) {
    auto k = tsrag::parse_backend_kind(name);
    if (!k)
        throw std::invalid_argument(
            "unknown backend '" + name +
            "' (expected http|mock|retrieval-average|naive|seasonal-naive)");
    return *k;
}

// A query is either a CSV file (first row wins) or an inline comma list.
std::vector<double> load_query(const std::string& arg,
                               tsrag::Frequency frequency) {
    if (std::filesystem::exists(arg)) {
        const auto series = tsrag::load_m4_train_csv(arg, frequency);
        return series.front().values;
    }
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= arg.size()) {
        std::size_t comma = arg.find(',', start);
        if (comma == std::string::npos) comma = arg.size();
        const std::string token = arg.substr(start, comma - start);
        double v = 0.0;
        auto res = std::from_chars(token.data(), token.data() + token.size(), v);
        if (res.ec != std::errc() || res.ptr != token.data() + token.size())
            throw std::invalid_argument("query is neither an existing file nor a "
                                        "comma-separated number list (bad token '" +
                                        token + "')");
        values.push_back(v);
        start = comma + 1;
    }
    if (values.empty()) throw std::invalid_argument("empty query");
    return values;
}

struct BuildKbArgs {
    std::string train, freq, out;
    std::size_t window = 0, step = 0, horizon = 0, k = 0;
    std::uint64_t seed = 0;
    std::size_t max_iter = 100;
};

struct RetrieveArgs {
    std::string kb, query;
    std::size_t top_k = 5;
    std::int64_t band = -1;
    bool as_json = false;
};

struct ForecastArgs {
    std::string kb, query, backend;
    std::string endpoint, model;
    std::size_t top_k = 5;
    bool audit = false;
};

struct EvaluateArgs {
    std::string train, test, freq, kb, backend, out;
    std::string endpoint, model;
    std::size_t top_k = 5;
    std::optional<std::size_t> limit;
    bool reproducible = false;
    bool audit = false;
};

struct SynthArgs {
    std::size_t n = 200, length = 192;
    std::uint64_t seed = 1;
    double noise = 0.05;
    std::string out_train, out_test;
};

tsrag::BackendConfig make_backend(const std::string& kind,
                                  const std::string& endpoint,
                                  const std::string& model, bool audit) {
    tsrag::BackendConfig backend;
    backend.kind = parse_backend_arg(kind);
    if (!endpoint.empty()) backend.endpoint = endpoint;
    if (!model.empty()) backend.model_name = model;
    backend.audit = audit;
    return backend;
}

int run_build_kb(const BuildKbArgs& args) {
    const tsrag::Frequency freq = parse_freq_arg(args.freq);
    const tsrag::FrequencyConfig cfg = tsrag::frequency_config(freq);

    tsrag::KbConfig kb_cfg;
    kb_cfg.window_length = args.window != 0 ? args.window : cfg.input_length;
    kb_cfg.step = args.step != 0 ? args.step : cfg.horizon;
    kb_cfg.horizon = args.horizon != 0 ? args.horizon : cfg.horizon;
    if (args.k != 0) kb_cfg.k = args.k;
    kb_cfg.seed = args.seed;
    kb_cfg.max_iter = args.max_iter;

    const auto corpus = tsrag::load_m4_train_csv(args.train, freq);
    tsrag::BuildStats stats;
    const tsrag::KnowledgeBase kb = tsrag::build_kb(corpus, kb_cfg, &stats);
    tsrag::save_kb(kb, args.out);
    std::cout << "wrote " << args.out << ": " << kb.entries.size()
              << " entries from a pool of " << stats.pool_size << " segments ("
              << stats.skipped_short_series << " series skipped, "
              << stats.dropped_empty_clusters << " empty clusters, "
              << kb.build_meta.iterations_run << " iterations)\n";
    return 0;
}

int run_retrieve(const RetrieveArgs& args) {
    const tsrag::KnowledgeBase kb = tsrag::load_kb(args.kb);
    const std::vector<double> query = load_query(args.query, kb.frequency);
    std::optional<std::size_t> band;
    if (args.band >= 0) band = static_cast<std::size_t>(args.band);

    const auto results = tsrag::retrieve_top_k(query, kb, args.top_k, band);
    if (args.as_json) {
        for (const auto& r : results) {
            json rec = {{"rank", r.rank},
                        {"kb_id", r.kb_id},
                        {"similarity", r.similarity},
                        {"path_length", r.path_length}};
            std::cout << rec.dump() << '\n';
        }
    } else {
        for (const auto& r : results)
            std::cout << "rank " << r.rank << ": kb_id " << r.kb_id
                      << ", similarity " << tsrag::format_double(r.similarity)
                      << ", path length " << r.path_length << '\n';
    }
    return 0;
}

int run_forecast(const ForecastArgs& args) {
    const tsrag::KnowledgeBase kb = tsrag::load_kb(args.kb);
    const std::vector<double> query = load_query(args.query, kb.frequency);

    // The KB defines the task shape; the seasonality comes from the standard
    // table for its frequency.
    tsrag::FrequencyConfig cfg = tsrag::frequency_config(kb.frequency);
    cfg.input_length = kb.window_length;
    cfg.horizon = kb.horizon;

    tsrag::ForecastTask task;
    task.query = {"query", kb.frequency, query};
    task.config = cfg;
    task.retrieval_depth = args.top_k;

    const tsrag::BackendConfig backend =
        make_backend(args.backend, args.endpoint, args.model, args.audit);
    const tsrag::Forecast result = tsrag::forecast(task, &kb, backend);

    for (std::size_t i = 0; i < result.values.size(); ++i) {
        if (i > 0) std::cout << ',';
        std::cout << tsrag::format_double(result.values[i]);
    }
    std::cout << '\n';
    return 0;
}

int run_evaluate(const EvaluateArgs& args) {
    const tsrag::Frequency freq = parse_freq_arg(args.freq);
    const tsrag::FrequencyConfig cfg = tsrag::frequency_config(freq);
    const tsrag::Corpus corpus = tsrag::load_m4_csv(args.train, args.test, freq);
    const tsrag::KnowledgeBase kb = tsrag::load_kb(args.kb);

    const tsrag::BackendConfig backend =
        make_backend(args.backend, args.endpoint, args.model, args.audit);
    tsrag::EvalOptions options;
    options.limit = args.limit;
    options.retrieval_depth = args.top_k;

    const tsrag::EvaluationReport report =
        tsrag::evaluate(corpus, &kb, backend, cfg, options);
    tsrag::write_report(report, args.out, args.reproducible);
    tsrag::print_report_table(report, std::cout);
    return 0;
}

int run_synth(const SynthArgs& args) {
    const tsrag::Corpus corpus =
        tsrag::generate_synthetic_corpus(args.n, args.length, args.seed, args.noise);
    tsrag::write_m4_train_csv(corpus.train, args.out_train);
    tsrag::write_m4_test_csv(corpus, args.out_test);
    std::cout << "wrote " << args.out_train << " and " << args.out_test << ": "
              << corpus.train.size() << " series of length " << args.length
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"retrieval-augmented time-series forecasting"};
    app.require_subcommand(1);

    BuildKbArgs build_args;
    auto* build = app.add_subcommand(
        "build-kb", "slice a training corpus, cluster it, write the KB");
    build->add_option("--train", build_args.train, "training CSV")->required();
    build->add_option("--freq", build_args.freq, "series frequency")->required();
    build->add_option("--window", build_args.window,
                      "window length (default: the frequency's input length)");
    build->add_option("--step", build_args.step,
                      "slice step (default: the frequency's horizon)");
    build->add_option("--horizon", build_args.horizon,
                      "continuation length (default: the frequency's horizon)");
    build->add_option("--k", build_args.k,
                      "cluster count (default: ceil(pool/10))");
    build->add_option("--seed", build_args.seed, "clustering seed");
    build->add_option("--max-iter", build_args.max_iter,
                      "clustering iteration cap");
    build->add_option("--out", build_args.out, "output KB file")->required();

    RetrieveArgs retrieve_args;
    auto* retrieve = app.add_subcommand(
        "retrieve", "rank KB entries against a query window");
    retrieve->add_option("--kb", retrieve_args.kb, "KB file")->required();
    retrieve
        ->add_option("--query", retrieve_args.query,
                     "CSV file (first row) or comma-separated values")
        ->required();
    retrieve->add_option("--top-k", retrieve_args.top_k, "results to return");
    retrieve->add_option("--band", retrieve_args.band,
                         "Sakoe-Chiba half-width (default: unconstrained)");
    retrieve->add_flag("--json", retrieve_args.as_json, "one JSON object per line");

    ForecastArgs forecast_args;
    auto* fc =
        app.add_subcommand("forecast", "forecast a query against a backend");
    fc->add_option("--kb", forecast_args.kb, "KB file")->required();
    fc->add_option("--query", forecast_args.query,
                   "CSV file (first row) or comma-separated values")
        ->required();
    fc->add_option("--backend", forecast_args.backend,
                   "http|mock|retrieval-average|naive|seasonal-naive")
        ->required();
    fc->add_option("--endpoint", forecast_args.endpoint,
                   "chat-completion URL (http backend)");
    fc->add_option("--model", forecast_args.model, "model name (http backend)");
    fc->add_option("--top-k", forecast_args.top_k, "references to retrieve");
    fc->add_flag("--audit", forecast_args.audit,
                 "log request/response bodies (credentials redacted)");

    EvaluateArgs eval_args;
    std::size_t limit_value = 0;
    auto* eval = app.add_subcommand(
        "evaluate", "score a backend over a train/test corpus");
    eval->add_option("--train", eval_args.train, "training CSV")->required();
    eval->add_option("--test", eval_args.test, "test CSV")->required();
    eval->add_option("--freq", eval_args.freq, "series frequency")->required();
    eval->add_option("--kb", eval_args.kb, "KB file")->required();
    eval->add_option("--backend", eval_args.backend,
                     "http|mock|retrieval-average|naive|seasonal-naive")
        ->required();
    auto* limit_opt =
        eval->add_option("--limit", limit_value, "evaluate only the first N series");
    eval->add_option("--top-k", eval_args.top_k, "references per forecast");
    eval->add_option("--endpoint", eval_args.endpoint,
                     "chat-completion URL (http backend)");
    eval->add_option("--model", eval_args.model, "model name (http backend)");
    eval->add_flag("--reproducible", eval_args.reproducible,
                   "omit timestamps so identical runs write identical reports");
    eval->add_flag("--audit", eval_args.audit,
                   "log request/response bodies (credentials redacted)");
    eval->add_option("--out", eval_args.out, "report file")->required();

    SynthArgs synth_args;
    auto* synth = app.add_subcommand(
        "synth", "generate a deterministic hourly benchmark corpus");
    synth->add_option("--n", synth_args.n, "series count");
    synth->add_option("--length", synth_args.length, "observations per series");
    synth->add_option("--seed", synth_args.seed, "generator seed");
    synth->add_option("--noise", synth_args.noise, "gaussian noise std");
    synth->add_option("--out-train", synth_args.out_train, "training CSV path")
        ->required();
    synth->add_option("--out-test", synth_args.out_test, "test CSV path")
        ->required();

    try {
        app.parse(argc, argv);
        if (limit_opt->count() > 0) eval_args.limit = limit_value;

        if (build->parsed()) return run_build_kb(build_args);
        if (retrieve->parsed()) return run_retrieve(retrieve_args);
        if (fc->parsed()) return run_forecast(forecast_args);
        if (eval->parsed()) return run_evaluate(eval_args);
        if (synth->parsed()) return run_synth(synth_args);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const tsrag::BackendError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const tsrag::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
