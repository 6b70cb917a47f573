#include "tsrag/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "tsrag/timeseries.hpp"

namespace tsrag {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline double local_cost(double x, double y) {
    const double d = x - y;
    return d * d;
}

std::size_t absdiff(std::size_t x, std::size_t y) { return x > y ? x - y : y - x; }

}  // namespace

DtwResult dtw(std::span<const double> a, std::span<const double> b,
              std::optional<std::size_t> band) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    if (n == 0 || m == 0) throw std::invalid_argument("dtw: empty input");
    if (band && *band < absdiff(n, m))
        throw std::invalid_argument(
            "dtw: band too narrow to admit any warping path (need at least " +
            std::to_string(absdiff(n, m)) + ")");

    // Row i holds D(i, .) and the matching path lengths. Cells outside the
    // band stay at infinity so the candidate scan below skips them naturally.
    std::vector<double> cost_prev(m, kInf), cost_cur(m, kInf);
    std::vector<std::size_t> len_prev(m, 0), len_cur(m, 0);

    for (std::size_t i = 0; i < n; ++i) {
        std::size_t jlo = 0, jhi = m - 1;
        if (band) {
            jlo = (i > *band) ? i - *band : 0;
            jhi = std::min(m - 1, i + *band);
        }
        std::fill(cost_cur.begin(), cost_cur.end(), kInf);
        for (std::size_t j = jlo; j <= jhi; ++j) {
            const double d = local_cost(a[i], b[j]);
            if (i == 0 && j == 0) {
                cost_cur[0] = d;
                len_cur[0] = 1;
                continue;
            }
            // Candidates in tie-break preference order; strict < keeps the
            // first minimum, so equal costs resolve diagonal > advance-a >
            // advance-b.
            double best = kInf;
            std::size_t best_len = 0;
            if (i > 0 && j > 0 && cost_prev[j - 1] < best) {
                best = cost_prev[j - 1];
                best_len = len_prev[j - 1];
            }
            if (i > 0 && cost_prev[j] < best) {
                best = cost_prev[j];
                best_len = len_prev[j];
            }
            if (j > 0 && cost_cur[j - 1] < best) {
                best = cost_cur[j - 1];
                best_len = len_cur[j - 1];
            }
            cost_cur[j] = d + best;
            len_cur[j] = best_len + 1;
        }
        cost_prev.swap(cost_cur);
        len_prev.swap(len_cur);
    }

    DtwResult out;
    out.cost = cost_prev[m - 1];
    out.path_length = len_prev[m - 1];
    out.similarity = std::sqrt(out.cost) / static_cast<double>(out.path_length);
    return out;
}

namespace {

// Step ranks mirror dtw()'s backtracking preference: among equal-cost paths
// the winner is the one whose step sequence, read from the end, is
// lexicographically smallest under diagonal(0) < advance-a(1) < advance-b(2).
struct BruteState {
    std::span<const double> a, b;
    double best_cost = kInf;
    std::vector<std::uint8_t> best_steps;
    std::vector<std::uint8_t> steps;

    bool beats_best(double cost) const {
        if (cost < best_cost) return true;
        if (cost > best_cost || !(cost == cost)) return false;
        // cost bit-equal: compare reversed step sequences.
        std::size_t i = steps.size(), j = best_steps.size();
        while (i > 0 && j > 0) {
            const std::uint8_t x = steps[i - 1], y = best_steps[j - 1];
            if (x != y) return x < y;
            --i;
            --j;
        }
        return false;  // identical tails cannot belong to distinct paths
    }

    void walk(std::size_t i, std::size_t j, double acc) {
        if (i + 1 == a.size() && j + 1 == b.size()) {
            if (beats_best(acc)) {
                best_cost = acc;
                best_steps = steps;
            }
            return;
        }
        const bool ai = i + 1 < a.size();
        const bool bj = j + 1 < b.size();
        if (ai && bj) {
            steps.push_back(0);
            walk(i + 1, j + 1, acc + local_cost(a[i + 1], b[j + 1]));
            steps.pop_back();
        }
        if (ai) {
            steps.push_back(1);
            walk(i + 1, j, acc + local_cost(a[i + 1], b[j]));
            steps.pop_back();
        }
        if (bj) {
            steps.push_back(2);
            walk(i, j + 1, acc + local_cost(a[i], b[j + 1]));
            steps.pop_back();
        }
    }
};

}  // namespace

DtwResult dtw_brute_force(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("dtw_brute_force: empty input");
    if (a.size() * b.size() > 49)
        throw std::invalid_argument(
            "dtw_brute_force: inputs exceed the 7x7 enumeration guard");

    BruteState st{a, b, kInf, {}, {}};
    st.walk(0, 0, local_cost(a[0], b[0]));

    DtwResult out;
    out.cost = st.best_cost;
    out.path_length = st.best_steps.size() + 1;
    out.similarity = std::sqrt(out.cost) / static_cast<double>(out.path_length);
    return out;
}

std::vector<RetrievalResult> retrieve_top_k(std::span<const double> query,
                                            const KnowledgeBase& kb,
                                            std::size_t k,
                                            std::optional<std::size_t> band,
                                            bool normalize_query) {
    if (kb.entries.empty())
        throw std::invalid_argument("retrieve: knowledge base is empty");
    if (k == 0) throw std::invalid_argument("retrieve: k must be positive");
    if (query.empty()) throw std::invalid_argument("retrieve: empty query");

    std::vector<double> normalized;
    if (normalize_query) normalized = znormalize(query).values;
    const std::span<const double> q =
        normalize_query ? std::span<const double>(normalized) : query;

    std::vector<RetrievalResult> results;
    results.reserve(kb.entries.size());
    for (const Segment& seg : kb.entries) {
        const DtwResult r = dtw(q, seg.context, band);
        results.push_back({seg.kb_id, r.similarity, r.path_length, 0});
    }
    std::sort(results.begin(), results.end(),
              [](const RetrievalResult& x, const RetrievalResult& y) {
                  if (x.similarity != y.similarity)
                      return x.similarity < y.similarity;
                  return x.kb_id < y.kb_id;
              });
    if (results.size() > k) results.resize(k);
    for (std::size_t i = 0; i < results.size(); ++i) results[i].rank = i + 1;
    return results;
}

}  // namespace tsrag
