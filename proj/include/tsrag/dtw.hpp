#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tsrag/knowledge_base.hpp"

namespace tsrag {

// cost: total squared pointwise difference along the optimal warping path.
// path_length: the element count M of that path, with
//   max(len(a), len(b)) <= M <= len(a) + len(b).
// similarity: sqrt(cost) / M. Lower means more similar; 0 means identical.
struct DtwResult {
    double cost = 0.0;
    std::size_t path_length = 0;
    double similarity = 0.0;
};

// Exact dynamic-programming DTW with local cost (a_i - b_j)^2 and moves
// {match-both, advance-a, advance-b}. Several paths can share the optimal
// cost but differ in length, so path_length follows a fixed backtracking
// preference: diagonal first, then the step that advances a, then the step
// that advances b. An optional Sakoe-Chiba band restricts cells to
// |i - j| <= band; it must be at least |len(a) - len(b)| or no path exists.
// Memory is two rolling rows; path lengths propagate alongside the costs.
DtwResult dtw(std::span<const double> a, std::span<const double> b,
              std::optional<std::size_t> band = std::nullopt);

// Oracle that enumerates every monotone warping path, so it shares no code
// with the dynamic program above. Guarded to len(a) * len(b) <= 49. Among
// minimal-cost paths it reports the one dtw()'s tie-break would pick.
DtwResult dtw_brute_force(std::span<const double> a, std::span<const double> b);

struct RetrievalResult {
    std::int64_t kb_id = 0;
    double similarity = 0.0;
    std::size_t path_length = 0;
    std::size_t rank = 0;  // 1-based
};

// Exhaustive scan of the knowledge base. The query is z-normalized with its
// own (mean, std) before comparison unless normalize_query is false (KB
// contexts are stored normalized already). Results are sorted by
// (similarity, kb_id) ascending and truncated to min(k, |kb|).
std::vector<RetrievalResult> retrieve_top_k(
    std::span<const double> query, const KnowledgeBase& kb, std::size_t k,
    std::optional<std::size_t> band = std::nullopt, bool normalize_query = true);

}  // namespace tsrag
