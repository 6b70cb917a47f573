#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tsrag/forecasting.hpp"
#include "tsrag/knowledge_base.hpp"
#include "tsrag/timeseries.hpp"

namespace tsrag {

// A train/test split. test pairs stay in file order so evaluation order (and
// the --limit prefix behavior) is reproducible.
struct Corpus {
    Frequency frequency = Frequency::Hourly;
    std::vector<Series> train;
    std::vector<std::pair<std::string, std::vector<double>>> test;
    std::size_t unmatched_train = 0;  // train series with no test row (warned)
};

struct SeriesScore {
    std::string id;
    bool ok = false;
    double smape = 0.0;
    double mase = 0.0;
    double naive2_smape = 0.0;  // per-series baseline, kept so the aggregate
    double naive2_mase = 0.0;   // OWA can be recomputed from the rows
    std::string error;          // set when ok is false
};

struct EvaluationReport {
    std::vector<SeriesScore> per_series;  // evaluation (file) order
    MetricTriple aggregate;               // means over successes; owa of those means
    MetricTriple baseline_aggregate;      // naive2 means; owa is 1 by construction
    std::size_t evaluated = 0;            // successful series
    std::size_t failed = 0;               // flagged in the report header
    nlohmann::json config_echo;           // full run configuration
};

struct EvalOptions {
    std::optional<std::size_t> limit;  // evaluate only the first n test series
    std::size_t retrieval_depth = 5;
    std::size_t workers = 0;  // worker threads; 0 picks hardware concurrency
};

// M4-format CSV: first column the series id (optionally quoted), remaining
// columns observations, trailing empty cells stripped. A leading "V1,..."
// header row is skipped. Non-numeric cells fail with (file, row, column).
std::vector<Series> load_m4_train_csv(const std::filesystem::path& path,
                                      Frequency frequency);

// Loads and joins train and test. Every test id must exist in train; test
// rows must hold exactly the frequency's horizon values. Train series without
// a test row are excluded from evaluation with a counted warning.
Corpus load_m4_csv(const std::filesystem::path& train_path,
                   const std::filesystem::path& test_path, Frequency frequency);

// Forecasts every test series with the backend and scores it (SMAPE, MASE)
// against the actuals, alongside a seasonal-naive baseline on the same data.
// Aggregates are unweighted means over successful series; OWA is the ratio of
// those aggregates. Per-series failures are recorded, counted, and excluded.
EvaluationReport evaluate(const Corpus& corpus, const KnowledgeBase* kb,
                          const BackendConfig& backend,
                          const FrequencyConfig& config,
                          const EvalOptions& options = {});

// Noise-free component of the synthetic generator: a period-24 sine of
// amplitude 10 shifted by `phase` hours and raised to `level`.
std::vector<double> synthetic_wave(std::size_t length, double phase, double level);

// Deterministic hourly benchmark corpus: each series is a phase- and
// level-randomized sine plus gaussian noise; the last horizon points form the
// test row. Series ids are H1..Hn.
Corpus generate_synthetic_corpus(std::size_t n_series, std::size_t length,
                                 std::uint64_t seed, double noise_std);

// Line-oriented report: a header record with the config echo, aggregates and
// counts, then one record per series. With reproducible set the header omits
// the timestamp, so identical runs serialize to identical bytes.
void write_report(const EvaluationReport& report,
                  const std::filesystem::path& path, bool reproducible);

// Human-readable summary table.
void print_report_table(const EvaluationReport& report, std::ostream& out);

void write_m4_train_csv(const std::vector<Series>& train,
                        const std::filesystem::path& path);
void write_m4_test_csv(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace tsrag
