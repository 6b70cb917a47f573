#include "tsrag/timeseries.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "tsrag/errors.hpp"

namespace tsrag {

const char* to_string(Frequency f) {
    switch (f) {
        case Frequency::Yearly: return "yearly";
        case Frequency::Quarterly: return "quarterly";
        case Frequency::Monthly: return "monthly";
        case Frequency::Weekly: return "weekly";
        case Frequency::Daily: return "daily";
        case Frequency::Hourly: return "hourly";
    }
    return "hourly";
}

std::optional<Frequency> parse_frequency(std::string_view name) {
    std::string v(name);
    std::transform(v.begin(), v.end(), v.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (v == "yearly") return Frequency::Yearly;
    if (v == "quarterly") return Frequency::Quarterly;
    if (v == "monthly") return Frequency::Monthly;
    if (v == "weekly") return Frequency::Weekly;
    if (v == "daily") return Frequency::Daily;
    if (v == "hourly") return Frequency::Hourly;
    return std::nullopt;
}

FrequencyConfig frequency_config(Frequency f) {
    switch (f) {
        case Frequency::Yearly: return {f, 12, 6, 1};
        case Frequency::Quarterly: return {f, 16, 8, 4};
        case Frequency::Monthly: return {f, 36, 18, 12};
        case Frequency::Weekly: return {f, 26, 13, 1};
        case Frequency::Daily: return {f, 28, 14, 1};
        case Frequency::Hourly: return {f, 96, 48, 24};
    }
    return {f, 96, 48, 24};
}

double smape(std::span<const double> actual, std::span<const double> forecast) {
    if (actual.size() != forecast.size())
        throw std::invalid_argument("smape: actual and forecast lengths differ");
    if (actual.empty()) throw std::invalid_argument("smape: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double denom = std::abs(actual[i]) + std::abs(forecast[i]);
        if (denom > 0.0) acc += std::abs(actual[i] - forecast[i]) / denom;
    }
    return 200.0 * acc / static_cast<double>(actual.size());
}

double mase(std::span<const double> actual, std::span<const double> forecast,
            std::span<const double> insample, std::size_t seasonality) {
    if (actual.size() != forecast.size())
        throw std::invalid_argument("mase: actual and forecast lengths differ");
    if (actual.empty()) throw std::invalid_argument("mase: empty input");
    if (seasonality == 0)
        throw std::invalid_argument("mase: seasonality must be positive");
    if (insample.size() <= seasonality)
        throw std::invalid_argument(
            "mase: in-sample history must be longer than the seasonality");

    double scale = 0.0;
    for (std::size_t t = seasonality; t < insample.size(); ++t)
        scale += std::abs(insample[t] - insample[t - seasonality]);
    scale /= static_cast<double>(insample.size() - seasonality);
    if (scale == 0.0)
        throw DataError("degenerate in-sample: seasonal-naive MAE is zero");

    double mae = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i)
        mae += std::abs(actual[i] - forecast[i]);
    mae /= static_cast<double>(actual.size());
    return mae / scale;
}

std::vector<double> naive2_forecast(std::span<const double> insample,
                                    std::size_t horizon,
                                    std::size_t seasonality) {
    if (insample.empty())
        throw std::invalid_argument("naive2_forecast: empty in-sample history");
    if (seasonality == 0)
        throw std::invalid_argument("naive2_forecast: seasonality must be positive");
    if (insample.size() < seasonality)
        throw std::invalid_argument(
            "naive2_forecast: in-sample history shorter than the seasonality");
    if (horizon == 0)
        throw std::invalid_argument("naive2_forecast: horizon must be positive");

    std::vector<double> out(horizon);
    const std::size_t base = insample.size() - seasonality;
    for (std::size_t h = 0; h < horizon; ++h)
        out[h] = insample[base + (h % seasonality)];
    return out;
}

double owa(double model_smape, double model_mase, double baseline_smape,
           double baseline_mase) {
    if (!(baseline_smape > 0.0) || !(baseline_mase > 0.0))
        throw DataError("degenerate baseline: zero SMAPE or MASE");
    return 0.5 * (model_smape / baseline_smape + model_mase / baseline_mase);
}

ZScore znormalize(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("znormalize: empty input");
    ZScore out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    out.values.resize(values.size());
    if (out.stddev > 0.0) {
        for (std::size_t i = 0; i < values.size(); ++i)
            out.values[i] = (values[i] - out.mean) / out.stddev;
    }
    // Constant input: stddev stays 0 and the z-values stay all zero.
    return out;
}

std::vector<double> denormalize(std::span<const double> zvalues, double mean,
                                double stddev) {
    std::vector<double> out(zvalues.size());
    for (std::size_t i = 0; i < zvalues.size(); ++i)
        out[i] = zvalues[i] * stddev + mean;
    return out;
}

}  // namespace tsrag
