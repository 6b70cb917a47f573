#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tsrag {

enum class Frequency { Yearly, Quarterly, Monthly, Weekly, Daily, Hourly };

// Lowercase canonical name ("yearly", ..., "hourly").
const char* to_string(Frequency f);
// Case-insensitive parse of the canonical names; nullopt when unknown.
std::optional<Frequency> parse_frequency(std::string_view name);

// An identified univariate series. Values are plain observations; the id is
// whatever the source file called it (e.g. "W23").
struct Series {
    std::string id;
    Frequency frequency = Frequency::Hourly;
    std::vector<double> values;
};

// Experiment shape per frequency: how much trailing history a forecaster
// sees, how far ahead it predicts, and the seasonal period used for MASE
// scaling. input_length is twice the horizon at every frequency.
struct FrequencyConfig {
    Frequency frequency = Frequency::Hourly;
    std::size_t input_length = 0;
    std::size_t horizon = 0;
    std::size_t seasonality = 1;
};

// The fixed table: yearly 12/6, quarterly 16/8, monthly 36/18, weekly 26/13,
// daily 28/14, hourly 96/48. Seasonalities: 1, 4, 12, 1, 1, 24.
FrequencyConfig frequency_config(Frequency f);

struct MetricTriple {
    double smape = 0.0;
    double mase = 0.0;
    double owa = 0.0;
};

// Symmetric mean absolute percentage error, (200/h) * sum |a-f| / (|a|+|f|).
// A term whose denominator is exactly zero contributes zero, which keeps the
// result inside [0, 200]. Throws std::invalid_argument on empty or
// length-mismatched inputs.
double smape(std::span<const double> actual, std::span<const double> forecast);

// Mean absolute error scaled by the in-sample seasonal-naive MAE
// mean_{t>m} |y_t - y_{t-m}|. Throws DataError("degenerate in-sample ...")
// when that scaling term is zero (e.g. a constant history).
double mase(std::span<const double> actual, std::span<const double> forecast,
            std::span<const double> insample, std::size_t seasonality);

// Seasonal-naive reference forecast: step h repeats
// insample[len - m + ((h-1) mod m)], i.e. the last observed cycle tiles
// forward. With m == 1 this is a flat repeat of the final observation.
std::vector<double> naive2_forecast(std::span<const double> insample,
                                    std::size_t horizon,
                                    std::size_t seasonality);

// Overall weighted average: 0.5 * (smape ratio + mase ratio) against a
// baseline. Throws DataError("degenerate baseline ...") when either baseline
// term is zero.
double owa(double model_smape, double model_mase, double baseline_smape,
           double baseline_mase);

struct ZScore {
    std::vector<double> values;
    double mean = 0.0;
    double stddev = 0.0;  // population std; recorded as 0 for constant input
};

// Z-normalization with the population standard deviation. Constant input maps
// to all zeros with stddev 0; otherwise values * stddev + mean restores the
// original series.
ZScore znormalize(std::span<const double> values);

// Inverse transform z * stddev + mean. With stddev 0 everything collapses to
// the mean, matching how znormalize treats constant input.
std::vector<double> denormalize(std::span<const double> zvalues, double mean,
                                double stddev);

}  // namespace tsrag
