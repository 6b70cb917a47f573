#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace tsrag {

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double value);

// Fixed 6-significant-digit rendering, used wherever numbers go into prompts.
std::string format_sig6(double value);

// FNV-1a over raw bytes. The default seed is the standard 64-bit offset basis;
// passing a previous result chains hashes.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t state = 14695981039346656037ULL);
std::uint64_t fnv1a64_mix(std::uint64_t state, double value);
std::uint64_t fnv1a64_mix(std::uint64_t state, std::uint64_t value);
std::string to_hex(std::uint64_t value);

// Deterministic draws built directly on the engine's 64-bit output. The
// standard <random> distributions are implementation-defined, so seeded runs
// would not reproduce across library versions; these do.
double uniform01(std::mt19937_64& rng);               // [0, 1)
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);
double gaussian(std::mt19937_64& rng);                // standard normal, Box-Muller

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Threshold comes from TSRAG_LOG (error|warn|info|debug), default warn.
LogLevel log_threshold();
void log(LogLevel level, const std::string& message);

}  // namespace tsrag
