#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tsrag/timeseries.hpp"

namespace tsrag {

// One knowledge-base entry: a z-normalized context window and, when the
// source series had room for it, the normalized horizon-length continuation
// that followed. The continuation shares the context's (mean, std) so both
// map back to raw values, and forward onto a query's scale, with the same
// affine transform. (source_series_id, start_offset) pins down the raw slice.
struct Segment {
    std::int64_t kb_id = 0;
    std::string source_series_id;
    std::size_t start_offset = 0;
    std::vector<double> context;
    std::vector<double> continuation;  // empty, or exactly the KB horizon
    double norm_mean = 0.0;
    double norm_std = 0.0;  // 0 when the raw slice was constant
};

struct BuildMeta {
    std::size_t k = 0;              // requested cluster count
    std::uint64_t seed = 0;
    std::size_t iterations_run = 0;  // assignment passes until convergence
    std::string corpus_fingerprint;
};

struct KnowledgeBase {
    Frequency frequency = Frequency::Hourly;
    std::size_t window_length = 0;
    std::size_t step = 0;
    std::size_t horizon = 0;
    std::vector<Segment> entries;
    BuildMeta build_meta;
};

struct Clustering {
    std::vector<std::size_t> assignments;  // segment index -> cluster index
    std::vector<std::vector<double>> centroids;
    double sse = 0.0;                 // within-cluster sum of squared distances
    std::vector<double> sse_history;  // one value per assignment pass
    std::size_t iterations_run = 0;
};

struct KbConfig {
    std::size_t window_length = 0;
    std::size_t step = 0;
    std::size_t horizon = 0;
    // Cluster count; when unset, min(pool_size, ceil(pool_size / 10)).
    std::optional<std::size_t> k;
    std::uint64_t seed = 0;
    std::size_t max_iter = 100;
};

struct BuildStats {
    std::size_t pool_size = 0;
    std::size_t skipped_short_series = 0;
    std::size_t dropped_empty_clusters = 0;
};

// Cuts a series into windows at offsets 0, step, 2*step, ... — exactly
// floor((n - window) / step) + 1 of them. Each context is z-normalized with
// its own (mean, std); a continuation is attached iff
// offset + window + horizon <= n. kb_ids are ordinals within the result.
// Throws DataError("series too short ...") when window > n.
std::vector<Segment> slice_series(const Series& series, std::size_t window,
                                  std::size_t step, std::size_t horizon);

// Lloyd's algorithm on the segment contexts under squared Euclidean
// distance. Initial centroids are k distinct segments drawn uniformly with
// the seed; iteration stops when assignments no longer change or after
// max_iter passes. Deterministic for a fixed (segment order, k, seed).
Clustering kmeans_cluster(const std::vector<Segment>& segments, std::size_t k,
                          std::uint64_t seed, std::size_t max_iter = 100);

// One representative per non-empty cluster: the member closest to its
// centroid, ties broken by the smallest kb_id. Empty clusters contribute
// nothing, so the result can be shorter than the centroid list.
std::vector<Segment> select_representatives(const std::vector<Segment>& segments,
                                            const Clustering& clustering);

// Slice -> cluster -> select, over a whole corpus. Series shorter than the
// window are skipped with a counted warning; if that leaves nothing, throws
// DataError("empty segment pool ..."). kb_ids are pool-wide ordinals and the
// chosen representatives keep theirs.
KnowledgeBase build_kb(const std::vector<Series>& corpus, const KbConfig& config,
                       BuildStats* stats = nullptr);

// Line-oriented file: a header record, then one record per segment.
// Identical KBs serialize to identical bytes.
void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path);

// Strict loader: unknown format_version, wrong-arity contexts, malformed
// records and truncated lines all fail with the offending line number.
KnowledgeBase load_kb(const std::filesystem::path& path);

// Stable content hash of a corpus (ids and raw values).
std::string corpus_fingerprint(const std::vector<Series>& corpus);

}  // namespace tsrag
