#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "tsrag/dtw.hpp"
#include "tsrag/knowledge_base.hpp"
#include "tsrag/util.hpp"

using namespace tsrag;

namespace {

std::vector<double> random_grid_sequence(std::mt19937_64& rng, std::size_t len) {
    // Values on the small integer grid {-2..2} keep every path cost exact.
    std::vector<double> out(len);
    for (auto& v : out)
        v = static_cast<double>(static_cast<int>(uniform_below(rng, 5)) - 2);
    return out;
}

KnowledgeBase tiny_kb(std::vector<std::vector<double>> contexts) {
    KnowledgeBase kb;
    kb.frequency = Frequency::Hourly;
    kb.window_length = contexts.front().size();
    kb.step = 1;
    kb.horizon = 0;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        Segment seg;
        seg.kb_id = static_cast<std::int64_t>(i);
        seg.source_series_id = "S" + std::to_string(i);
        seg.start_offset = 0;
        seg.context = std::move(contexts[i]);
        kb.entries.push_back(std::move(seg));
    }
    return kb;
}

}  // namespace

TEST_CASE("dtw worked example") {
    const DtwResult r = dtw(std::vector{1.0, 2.0, 3.0}, std::vector{2.0, 3.0, 4.0});
    CHECK(r.cost == 2.0);
    CHECK(r.path_length == 4);
    CHECK(r.similarity ==
          doctest::Approx(std::sqrt(2.0) / 4.0).epsilon(1e-12));
}

TEST_CASE("dtw identity and single elements") {
    const std::vector<double> a{0.5, -1.25, 3.0, 3.0};
    const DtwResult same = dtw(a, a);
    CHECK(same.cost == 0.0);
    CHECK(same.path_length == a.size());
    CHECK(same.similarity == 0.0);

    const DtwResult single = dtw(std::vector{2.0}, std::vector{5.0});
    CHECK(single.cost == 9.0);
    CHECK(single.path_length == 1);
    CHECK(single.similarity == 3.0);
}

TEST_CASE("dtw is symmetric") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = random_grid_sequence(rng, 1 + uniform_below(rng, 6));
        const auto b = random_grid_sequence(rng, 1 + uniform_below(rng, 6));
        const DtwResult ab = dtw(a, b);
        const DtwResult ba = dtw(b, a);
        CHECK(ab.cost == ba.cost);
        CHECK(ab.similarity == ba.similarity);
    }
}

TEST_CASE("dtw agrees with the exhaustive oracle") {
    std::mt19937_64 rng(424242);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto a = random_grid_sequence(rng, 1 + uniform_below(rng, 6));
        const auto b = random_grid_sequence(rng, 1 + uniform_below(rng, 6));
        const DtwResult fast = dtw(a, b);
        const DtwResult slow = dtw_brute_force(a, b);
        REQUIRE(fast.cost == slow.cost);  // bitwise, costs are exact integers
        REQUIRE(fast.path_length == slow.path_length);
        CHECK(fast.path_length >= std::max(a.size(), b.size()));
        CHECK(fast.path_length <= a.size() + b.size());
    }
}

TEST_CASE("brute-force oracle guard") {
    const std::vector<double> seven(7, 0.0);
    const std::vector<double> eight(8, 0.0);
    CHECK_NOTHROW(dtw_brute_force(seven, seven));  // 49 cells, at the limit
    CHECK_THROWS_AS(dtw_brute_force(seven, eight), std::invalid_argument);
}

TEST_CASE("dtw rejects empty input") {
    CHECK_THROWS_AS(dtw(std::vector<double>{}, std::vector{1.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(dtw_brute_force(std::vector{1.0}, std::vector<double>{}),
                    std::invalid_argument);
}

TEST_CASE("band narrower than the length gap is rejected") {
    const std::vector<double> a(8, 1.0);
    const std::vector<double> b(3, 1.0);
    CHECK_THROWS_AS(dtw(a, b, 4), std::invalid_argument);
    CHECK_NOTHROW(dtw(a, b, 5));
}

TEST_CASE("widening the band never increases cost") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = random_grid_sequence(rng, 2 + uniform_below(rng, 5));
        const auto b = random_grid_sequence(rng, 2 + uniform_below(rng, 5));
        const std::size_t gap = a.size() > b.size() ? a.size() - b.size()
                                                    : b.size() - a.size();
        const DtwResult unconstrained = dtw(a, b);
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t band = gap; band <= a.size() + b.size(); ++band) {
            const DtwResult banded = dtw(a, b, band);
            CHECK(banded.cost <= prev);
            CHECK(banded.cost >= unconstrained.cost);
            prev = banded.cost;
        }
        // A band covering the whole matrix is no constraint at all.
        const DtwResult wide = dtw(a, b, std::max(a.size(), b.size()));
        CHECK(wide.cost == unconstrained.cost);
        CHECK(wide.path_length == unconstrained.path_length);
    }
}

TEST_CASE("band zero on equal lengths walks the diagonal") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    const std::vector<double> b{2.0, 2.0, 5.0};
    const DtwResult r = dtw(a, b, 0);
    CHECK(r.cost == 1.0 + 0.0 + 4.0);
    CHECK(r.path_length == 3);
}

TEST_CASE("retrieval ranks hand-computed similarities") {
    // Pre-normalized contexts, so query normalization is switched off.
    const KnowledgeBase kb =
        tiny_kb({{0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {5.0, 5.0, 5.0}});
    const std::vector<double> query{0.0, 0.0, 0.0};
    const auto results =
        retrieve_top_k(query, kb, 2, std::nullopt, /*normalize_query=*/false);
    REQUIRE(results.size() == 2);
    CHECK(results[0].kb_id == 0);
    CHECK(results[0].similarity == 0.0);
    CHECK(results[0].rank == 1);
    CHECK(results[1].kb_id == 1);
    // cost 1 over a diagonal path of 3 cells
    CHECK(results[1].similarity == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(results[1].rank == 2);
}

TEST_CASE("retrieval normalizes the query like the KB contexts") {
    Series s{"S1", Frequency::Hourly, {}};
    for (int t = 0; t < 12; ++t)
        s.values.push_back(100.0 + 7.0 * std::sin(0.7 * t));
    const auto segments = slice_series(s, 6, 3, 0);
    KnowledgeBase kb;
    kb.frequency = Frequency::Hourly;
    kb.window_length = 6;
    kb.step = 3;
    kb.horizon = 0;
    kb.entries = segments;

    // The raw slice behind entry 1 matches its stored context exactly once
    // both sides have been z-normalized.
    std::vector<double> query(s.values.begin() + 3, s.values.begin() + 9);
    const auto results = retrieve_top_k(query, kb, 3);
    REQUIRE(!results.empty());
    CHECK(results[0].kb_id == 1);
    CHECK(results[0].similarity == 0.0);
}

TEST_CASE("retrieval ties break on kb_id and k clamps") {
    const KnowledgeBase kb = tiny_kb({{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}});
    const std::vector<double> query{1.0, 1.0};
    const auto results =
        retrieve_top_k(query, kb, 10, std::nullopt, /*normalize_query=*/false);
    REQUIRE(results.size() == 3);  // k clamps to the KB size
    for (std::size_t i = 0; i < results.size(); ++i) {
        CHECK(results[i].kb_id == static_cast<std::int64_t>(i));
        CHECK(results[i].rank == i + 1);
        CHECK(results[i].similarity == 0.0);
    }
}

TEST_CASE("retrieval preconditions") {
    const KnowledgeBase kb = tiny_kb({{1.0, 2.0}});
    CHECK_THROWS_AS(retrieve_top_k(std::vector{1.0}, kb, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(retrieve_top_k(std::vector<double>{}, kb, 1),
                    std::invalid_argument);
    KnowledgeBase empty;
    CHECK_THROWS_AS(retrieve_top_k(std::vector{1.0}, empty, 1),
                    std::invalid_argument);
}
