#include "tsrag/util.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace tsrag {

std::string format_double(double value) {
    std::array<char, 32> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

std::string format_sig6(double value) {
    std::array<char, 48> buf{};
    int n = std::snprintf(buf.data(), buf.size(), "%.6g", value);
    return std::string(buf.data(), static_cast<std::size_t>(n));
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
    constexpr std::uint64_t prime = 1099511628211ULL;
    for (unsigned char c : bytes) {
        state ^= c;
        state *= prime;
    }
    return state;
}

std::uint64_t fnv1a64_mix(std::uint64_t state, std::uint64_t value) {
    constexpr std::uint64_t prime = 1099511628211ULL;
    for (int i = 0; i < 8; ++i) {
        state ^= (value >> (8 * i)) & 0xffULL;
        state *= prime;
    }
    return state;
}

std::uint64_t fnv1a64_mix(std::uint64_t state, double value) {
    return fnv1a64_mix(state, std::bit_cast<std::uint64_t>(value));
}

std::string to_hex(std::uint64_t value) {
    std::array<char, 17> buf{};
    std::snprintf(buf.data(), buf.size(), "%016llx",
                  static_cast<unsigned long long>(value));
    return std::string(buf.data(), 16);
}

double uniform01(std::mt19937_64& rng) {
    // Top 53 bits give a uniform dyadic rational in [0, 1).
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    // Modulo bias is irrelevant at the bounds this project uses (pool sizes
    // far below 2^63); taking the remainder keeps the draw platform-stable.
    return rng() % bound;
}

double gaussian(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

LogLevel log_threshold() {
    static const LogLevel level = [] {
        const char* env = std::getenv("TSRAG_LOG");
        if (env == nullptr) return LogLevel::Warn;
        std::string v(env);
        std::transform(v.begin(), v.end(), v.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (v == "error") return LogLevel::Error;
        if (v == "warn" || v == "warning") return LogLevel::Warn;
        if (v == "info") return LogLevel::Info;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

void log(LogLevel level, const std::string& message) {
    if (level > log_threshold()) return;
    static std::mutex mu;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << "tsrag[" << names[static_cast<int>(level)] << "] " << message
              << '\n';
}

}  // namespace tsrag
