#include "tsrag/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "tsrag/errors.hpp"
#include "tsrag/util.hpp"

namespace tsrag {

namespace {

using nlohmann::json;

// Minimal CSV splitter: commas separate fields, double quotes wrap them,
// doubled quotes escape a quote. Good for M4 files, which only quote ids.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

double parse_cell(const std::string& cell, const std::filesystem::path& path,
                  std::size_t row, std::size_t col) {
    double v = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
        throw DataError(path.string() + ":" + std::to_string(row) + ":" +
                        std::to_string(col) + ": non-numeric cell '" + cell + "'");
    return v;
}

// Returns (id, values) rows in file order; shared by the train and test
// loaders. Rows keep their 1-based line numbers for error reporting.
struct CsvRow {
    std::string id;
    std::vector<double> values;
    std::size_t line = 0;
};

std::vector<CsvRow> load_m4_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");

    std::vector<CsvRow> rows;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (lineno == 1 && fields[0] == "V1") continue;  // M4 header row
        while (fields.size() > 1 && fields.back().empty()) fields.pop_back();

        CsvRow row;
        row.id = fields[0];
        row.line = lineno;
        if (row.id.empty())
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": empty series id");
        if (fields.size() < 2)
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": series '" + row.id + "' has no observations");
        for (std::size_t col = 1; col < fields.size(); ++col)
            row.values.push_back(parse_cell(fields[col], path, lineno, col + 1));
        if (!seen.insert(row.id).second)
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": duplicate series id '" + row.id + "'");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(path.string() + ": no data rows");
    return rows;
}

}  // namespace

std::vector<Series> load_m4_train_csv(const std::filesystem::path& path,
                                      Frequency frequency) {
    std::vector<Series> out;
    for (CsvRow& row : load_m4_rows(path))
        out.push_back({std::move(row.id), frequency, std::move(row.values)});
    return out;
}

Corpus load_m4_csv(const std::filesystem::path& train_path,
                   const std::filesystem::path& test_path, Frequency frequency) {
    Corpus corpus;
    corpus.frequency = frequency;
    corpus.train = load_m4_train_csv(train_path, frequency);

    std::unordered_set<std::string> train_ids;
    for (const Series& s : corpus.train) train_ids.insert(s.id);

    const std::size_t horizon = frequency_config(frequency).horizon;
    for (CsvRow& row : load_m4_rows(test_path)) {
        if (!train_ids.contains(row.id))
            throw DataError(test_path.string() + ":" + std::to_string(row.line) +
                            ": test series '" + row.id + "' absent from train");
        if (row.values.size() != horizon)
            throw DataError(test_path.string() + ":" + std::to_string(row.line) +
                            ": test series '" + row.id + "' has " +
                            std::to_string(row.values.size()) +
                            " values, horizon is " + std::to_string(horizon));
        corpus.test.emplace_back(std::move(row.id), std::move(row.values));
    }

    std::unordered_set<std::string> test_ids;
    for (const auto& [id, _] : corpus.test) test_ids.insert(id);
    for (const Series& s : corpus.train) {
        if (!test_ids.contains(s.id)) {
            ++corpus.unmatched_train;
            log(LogLevel::Warn, "load_m4_csv: train series '" + s.id +
                                    "' has no test row; excluded from evaluation");
        }
    }
    return corpus;
}

EvaluationReport evaluate(const Corpus& corpus, const KnowledgeBase* kb,
                          const BackendConfig& backend,
                          const FrequencyConfig& config,
                          const EvalOptions& options) {
    if (corpus.frequency != config.frequency)
        throw std::invalid_argument(
            "evaluate: corpus frequency does not match the config");
    if (kb != nullptr && kb->frequency != corpus.frequency)
        throw std::invalid_argument(
            "evaluate: kb frequency does not match the corpus");
    if (corpus.test.empty()) throw DataError("evaluate: corpus has no test rows");

    std::unordered_map<std::string, const Series*> train_by_id;
    for (const Series& s : corpus.train) train_by_id.emplace(s.id, &s);

    const std::size_t count =
        options.limit ? std::min(*options.limit, corpus.test.size())
                      : corpus.test.size();

    EvaluationReport report;
    report.per_series.resize(count);

    // Each slot is written by exactly one worker; everything read here is
    // immutable, so the result is identical for any worker count.
    const auto score_one = [&](std::size_t i) {
        const auto& [id, actual] = corpus.test[i];
        SeriesScore& row = report.per_series[i];
        row.id = id;
        try {
            auto it = train_by_id.find(id);
            if (it == train_by_id.end())
                throw DataError("test series '" + id + "' absent from train");
            const Series& train = *it->second;
            if (actual.size() != config.horizon)
                throw DataError("test series '" + id +
                                "' does not match the horizon");

            ForecastTask task{train, config, options.retrieval_depth};
            const Forecast fc = forecast(task, kb, backend);
            const std::vector<double> baseline = naive2_forecast(
                train.values, config.horizon, config.seasonality);

            row.smape = smape(actual, fc.values);
            row.mase = mase(actual, fc.values, train.values, config.seasonality);
            row.naive2_smape = smape(actual, baseline);
            row.naive2_mase =
                mase(actual, baseline, train.values, config.seasonality);
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
            log(LogLevel::Warn,
                "evaluate: series '" + id + "' failed: " + row.error);
        }
    };

    std::size_t workers = options.workers != 0
                              ? options.workers
                              : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) score_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < count;
                     i = next.fetch_add(1))
                    score_one(i);
            });
        for (std::thread& t : pool) t.join();
    }

    // Aggregate in file order so the sums do not depend on scheduling.
    double sum_smape = 0.0, sum_mase = 0.0;
    double sum_b_smape = 0.0, sum_b_mase = 0.0;
    for (const SeriesScore& row : report.per_series) {
        if (!row.ok) {
            ++report.failed;
            continue;
        }
        sum_smape += row.smape;
        sum_mase += row.mase;
        sum_b_smape += row.naive2_smape;
        sum_b_mase += row.naive2_mase;
        ++report.evaluated;
    }

    if (report.evaluated == 0)
        throw DataError("evaluate: no series evaluated successfully (" +
                        std::to_string(report.failed) + " failures)");

    const double n = static_cast<double>(report.evaluated);
    report.aggregate.smape = sum_smape / n;
    report.aggregate.mase = sum_mase / n;
    report.baseline_aggregate.smape = sum_b_smape / n;
    report.baseline_aggregate.mase = sum_b_mase / n;
    report.baseline_aggregate.owa = 1.0;
    report.aggregate.owa =
        owa(report.aggregate.smape, report.aggregate.mase,
            report.baseline_aggregate.smape, report.baseline_aggregate.mase);

    report.config_echo = {
        {"frequency", to_string(config.frequency)},
        {"input_length", config.input_length},
        {"horizon", config.horizon},
        {"seasonality", config.seasonality},
        {"backend", to_string(backend.kind)},
        {"retrieval_depth", options.retrieval_depth},
        {"limit", options.limit ? json(*options.limit) : json(nullptr)},
        {"kb_entries", kb ? json(kb->entries.size()) : json(nullptr)},
        {"kb_fingerprint",
         kb ? json(kb->build_meta.corpus_fingerprint) : json(nullptr)},
    };
    return report;
}

std::vector<double> synthetic_wave(std::size_t length, double phase,
                                   double level) {
    constexpr double amplitude = 10.0;
    constexpr double period = 24.0;
    constexpr double two_pi = 6.283185307179586476925286766559;
    std::vector<double> out(length);
    for (std::size_t t = 0; t < length; ++t)
        out[t] =
            amplitude * std::sin(two_pi * (static_cast<double>(t) + phase) / period) +
            level;
    return out;
}

Corpus generate_synthetic_corpus(std::size_t n_series, std::size_t length,
                                 std::uint64_t seed, double noise_std) {
    const FrequencyConfig cfg = frequency_config(Frequency::Hourly);
    if (n_series == 0)
        throw std::invalid_argument("synthetic corpus: n_series must be positive");
    if (length <= cfg.input_length + cfg.horizon)
        throw std::invalid_argument(
            "synthetic corpus: length must exceed input_length + horizon (" +
            std::to_string(cfg.input_length + cfg.horizon) + ")");
    if (!std::isfinite(noise_std) || noise_std < 0.0)
        throw std::invalid_argument(
            "synthetic corpus: noise_std must be finite and non-negative");

    std::mt19937_64 rng(seed);
    Corpus corpus;
    corpus.frequency = Frequency::Hourly;
    for (std::size_t i = 1; i <= n_series; ++i) {
        const double phase = 24.0 * uniform01(rng);
        const double level = 20.0 + 80.0 * uniform01(rng);
        std::vector<double> values = synthetic_wave(length, phase, level);
        if (noise_std > 0.0)
            for (double& v : values) v += noise_std * gaussian(rng);

        const std::size_t split = length - cfg.horizon;
        Series train;
        train.id = "H" + std::to_string(i);
        train.frequency = Frequency::Hourly;
        train.values.assign(values.begin(),
                            values.begin() + static_cast<std::ptrdiff_t>(split));
        corpus.test.emplace_back(
            train.id, std::vector<double>(
                          values.begin() + static_cast<std::ptrdiff_t>(split),
                          values.end()));
        corpus.train.push_back(std::move(train));
    }
    return corpus;
}

void write_report(const EvaluationReport& report,
                  const std::filesystem::path& path, bool reproducible) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");

    json header = {
        {"format_version", 1},
        {"config", report.config_echo},
        {"aggregate",
         {{"smape", report.aggregate.smape},
          {"mase", report.aggregate.mase},
          {"owa", report.aggregate.owa}}},
        {"baseline_aggregate",
         {{"smape", report.baseline_aggregate.smape},
          {"mase", report.baseline_aggregate.mase},
          {"owa", report.baseline_aggregate.owa}}},
        {"series_evaluated", report.evaluated},
        {"series_failed", report.failed},
        {"flagged", report.failed > 0},
    };
    if (!reproducible) {
        char buf[32];
        const std::time_t now = std::time(nullptr);
        std::tm tm{};
        gmtime_r(&now, &tm);
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        header["generated_at"] = buf;
    }
    out << header.dump() << '\n';

    for (const SeriesScore& row : report.per_series) {
        json rec;
        rec["id"] = row.id;
        rec["status"] = row.ok ? "ok" : "failed";
        if (row.ok) {
            rec["smape"] = row.smape;
            rec["mase"] = row.mase;
            rec["naive2_smape"] = row.naive2_smape;
            rec["naive2_mase"] = row.naive2_mase;
        } else {
            rec["error"] = row.error;
        }
        out << rec.dump() << '\n';
    }
    out.flush();
    if (!out) throw DataError("write to '" + path.string() + "' failed");
}

void print_report_table(const EvaluationReport& report, std::ostream& out) {
    out << std::left << std::setw(12) << "series" << std::right << std::setw(12)
        << "smape" << std::setw(12) << "mase" << std::setw(14) << "naive2 smape"
        << std::setw(13) << "naive2 mase" << '\n';
    for (const SeriesScore& row : report.per_series) {
        if (!row.ok) {
            out << std::left << std::setw(12) << row.id << "failed: " << row.error
                << '\n';
            continue;
        }
        out << std::left << std::setw(12) << row.id << std::right << std::fixed
            << std::setprecision(4) << std::setw(12) << row.smape << std::setw(12)
            << row.mase << std::setw(14) << row.naive2_smape << std::setw(13)
            << row.naive2_mase << '\n';
        out.unsetf(std::ios::fixed);
    }
    out << "aggregate: smape " << format_double(report.aggregate.smape)
        << ", mase " << format_double(report.aggregate.mase) << ", owa "
        << format_double(report.aggregate.owa) << " (baseline smape "
        << format_double(report.baseline_aggregate.smape) << ", mase "
        << format_double(report.baseline_aggregate.mase) << ")\n";
    out << "series: " << report.evaluated << " evaluated, " << report.failed
        << " failed" << (report.failed > 0 ? " [flagged]" : "") << '\n';
}

void write_m4_train_csv(const std::vector<Series>& train,
                        const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    for (const Series& s : train) {
        out << s.id;
        for (double v : s.values) out << ',' << format_double(v);
        out << '\n';
    }
    out.flush();
    if (!out) throw DataError("write to '" + path.string() + "' failed");
}

void write_m4_test_csv(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    for (const auto& [id, values] : corpus.test) {
        out << id;
        for (double v : values) out << ',' << format_double(v);
        out << '\n';
    }
    out.flush();
    if (!out) throw DataError("write to '" + path.string() + "' failed");
}

}  // namespace tsrag
