#include "tsrag/knowledge_base.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "tsrag/errors.hpp"
#include "tsrag/util.hpp"

namespace tsrag {

namespace {

using nlohmann::json;

double squared_distance(const std::vector<double>& a,
                        const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

// Wraps json access so a bad or missing field reports the file line it
// came from instead of a bare type error.
template <typename T>
T field(const json& rec, const char* name, const std::filesystem::path& path,
        std::size_t lineno) {
    auto it = rec.find(name);
    if (it == rec.end())
        throw DataError(path.string() + ":" + std::to_string(lineno) +
                        ": missing field '" + name + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw DataError(path.string() + ":" + std::to_string(lineno) +
                        ": invalid value for field '" + name + "'");
    }
}

json parse_record(const std::string& line, const std::filesystem::path& path,
                  std::size_t lineno) {
    try {
        json rec = json::parse(line);
        if (!rec.is_object())
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": record is not an object");
        return rec;
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ":" + std::to_string(lineno) +
                        ": malformed record: " + e.what());
    }
}

}  // namespace

std::vector<Segment> slice_series(const Series& series, std::size_t window,
                                  std::size_t step, std::size_t horizon) {
    if (window == 0)
        throw std::invalid_argument("slice_series: window must be positive");
    if (step == 0)
        throw std::invalid_argument("slice_series: step must be positive");
    const std::size_t n = series.values.size();
    if (window > n)
        throw DataError("series too short: '" + series.id + "' has " +
                        std::to_string(n) + " observations, window is " +
                        std::to_string(window));

    std::vector<Segment> out;
    out.reserve((n - window) / step + 1);
    const std::span<const double> values(series.values);
    for (std::size_t off = 0; off + window <= n; off += step) {
        ZScore z = znormalize(values.subspan(off, window));
        Segment seg;
        seg.kb_id = static_cast<std::int64_t>(out.size());
        seg.source_series_id = series.id;
        seg.start_offset = off;
        seg.norm_mean = z.mean;
        seg.norm_std = z.stddev;
        seg.context = std::move(z.values);
        if (horizon > 0 && off + window + horizon <= n) {
            // Continuations reuse the context's transform; a constant context
            // (std 0) falls back to unit scale so values stay finite.
            const double scale = z.stddev > 0.0 ? z.stddev : 1.0;
            seg.continuation.reserve(horizon);
            for (std::size_t t = 0; t < horizon; ++t)
                seg.continuation.push_back(
                    (values[off + window + t] - z.mean) / scale);
        }
        out.push_back(std::move(seg));
    }
    return out;
}

Clustering kmeans_cluster(const std::vector<Segment>& segments, std::size_t k,
                          std::uint64_t seed, std::size_t max_iter) {
    const std::size_t n = segments.size();
    if (k == 0) throw std::invalid_argument("kmeans: k must be positive");
    if (k > n)
        throw std::invalid_argument("kmeans: k (" + std::to_string(k) +
                                    ") exceeds segment count (" +
                                    std::to_string(n) + ")");
    if (max_iter == 0)
        throw std::invalid_argument("kmeans: max_iter must be positive");
    const std::size_t dim = segments.front().context.size();
    for (const Segment& s : segments)
        if (s.context.size() != dim)
            throw std::invalid_argument("kmeans: contexts differ in length");

    // Partial Fisher-Yates picks k distinct members as the initial centroids.
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + uniform_below(rng, n - i);
        std::swap(idx[i], idx[j]);
    }

    Clustering out;
    out.centroids.resize(k);
    for (std::size_t c = 0; c < k; ++c) out.centroids[c] = segments[idx[c]].context;
    out.assignments.assign(n, 0);

    std::vector<std::size_t> prev(n, std::numeric_limits<std::size_t>::max());
    std::vector<double> sums(k * dim);
    std::vector<std::size_t> counts(k);

    for (std::size_t iter = 1; iter <= max_iter; ++iter) {
        double sse = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double d = squared_distance(segments[s].context,
                                                  out.centroids[c]);
                if (d < best) {  // ties keep the lowest cluster index
                    best = d;
                    best_c = c;
                }
            }
            out.assignments[s] = best_c;
            sse += best;
        }
        out.sse = sse;
        out.sse_history.push_back(sse);
        out.iterations_run = iter;
        if (out.assignments == prev) break;
        prev = out.assignments;

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), std::size_t{0});
        for (std::size_t s = 0; s < n; ++s) {
            const std::size_t c = out.assignments[s];
            ++counts[c];
            for (std::size_t d = 0; d < dim; ++d)
                sums[c * dim + d] += segments[s].context[d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // starved cluster keeps its centroid
            for (std::size_t d = 0; d < dim; ++d)
                out.centroids[c][d] =
                    sums[c * dim + d] / static_cast<double>(counts[c]);
        }
    }
    return out;
}

std::vector<Segment> select_representatives(const std::vector<Segment>& segments,
                                            const Clustering& clustering) {
    if (clustering.assignments.size() != segments.size())
        throw std::invalid_argument(
            "select_representatives: clustering does not match the segment pool");
    const std::size_t k = clustering.centroids.size();
    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> best(k, none);
    std::vector<double> best_d(k, std::numeric_limits<double>::infinity());

    for (std::size_t s = 0; s < segments.size(); ++s) {
        const std::size_t c = clustering.assignments[s];
        if (c >= k)
            throw std::invalid_argument(
                "select_representatives: assignment references a missing cluster");
        const double d =
            squared_distance(segments[s].context, clustering.centroids[c]);
        if (best[c] == none || d < best_d[c] ||
            (d == best_d[c] && segments[s].kb_id < segments[best[c]].kb_id)) {
            best[c] = s;
            best_d[c] = d;
        }
    }

    std::vector<Segment> out;
    out.reserve(k);
    for (std::size_t c = 0; c < k; ++c)
        if (best[c] != none) out.push_back(segments[best[c]]);
    return out;
}

std::string corpus_fingerprint(const std::vector<Series>& corpus) {
    std::uint64_t h = fnv1a64("tsrag-corpus-v1");
    for (const Series& s : corpus) {
        h = fnv1a64(s.id, h);
        h = fnv1a64_mix(h, static_cast<std::uint64_t>(s.values.size()));
        for (double v : s.values) h = fnv1a64_mix(h, v);
    }
    return to_hex(h);
}

KnowledgeBase build_kb(const std::vector<Series>& corpus, const KbConfig& config,
                       BuildStats* stats) {
    if (corpus.empty()) throw std::invalid_argument("build_kb: empty corpus");
    if (config.window_length == 0)
        throw std::invalid_argument("build_kb: window_length must be positive");
    if (config.step == 0)
        throw std::invalid_argument("build_kb: step must be positive");

    const Frequency freq = corpus.front().frequency;
    for (const Series& s : corpus)
        if (s.frequency != freq)
            throw DataError("build_kb: corpus mixes frequencies ('" + s.id + "')");

    std::vector<Segment> pool;
    std::size_t skipped = 0;
    for (const Series& s : corpus) {
        if (s.values.size() < config.window_length) {
            ++skipped;
            log(LogLevel::Warn, "build_kb: skipping '" + s.id +
                                    "', shorter than the window");
            continue;
        }
        std::vector<Segment> segs = slice_series(s, config.window_length,
                                                 config.step, config.horizon);
        for (Segment& seg : segs) {
            seg.kb_id = static_cast<std::int64_t>(pool.size());
            pool.push_back(std::move(seg));
        }
    }
    if (pool.empty())
        throw DataError("empty segment pool: no series is at least " +
                        std::to_string(config.window_length) +
                        " observations long");

    const std::size_t k =
        config.k.value_or(std::min(pool.size(), (pool.size() + 9) / 10));
    if (k == 0) throw std::invalid_argument("build_kb: k must be positive");
    if (k > pool.size())
        throw std::invalid_argument("build_kb: k (" + std::to_string(k) +
                                    ") exceeds the segment pool (" +
                                    std::to_string(pool.size()) + ")");

    Clustering clustering = kmeans_cluster(pool, k, config.seed, config.max_iter);
    std::vector<Segment> reps = select_representatives(pool, clustering);
    if (reps.size() < k)
        log(LogLevel::Warn,
            "build_kb: " + std::to_string(k - reps.size()) +
                " empty cluster(s) dropped; KB has " +
                std::to_string(reps.size()) + " entries");

    if (stats != nullptr) {
        stats->pool_size = pool.size();
        stats->skipped_short_series = skipped;
        stats->dropped_empty_clusters = k - reps.size();
    }

    KnowledgeBase kb;
    kb.frequency = freq;
    kb.window_length = config.window_length;
    kb.step = config.step;
    kb.horizon = config.horizon;
    kb.entries = std::move(reps);
    kb.build_meta = {k, config.seed, clustering.iterations_run,
                     corpus_fingerprint(corpus)};
    return kb;
}

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot open '" + path.string() + "' for writing");

    json header = {
        {"format_version", 1},
        {"frequency", to_string(kb.frequency)},
        {"window_length", kb.window_length},
        {"step", kb.step},
        {"horizon", kb.horizon},
        {"k", kb.build_meta.k},
        {"seed", kb.build_meta.seed},
        {"iterations_run", kb.build_meta.iterations_run},
        {"corpus_fingerprint", kb.build_meta.corpus_fingerprint},
    };
    out << header.dump() << '\n';
    for (const Segment& seg : kb.entries) {
        json rec = {
            {"kb_id", seg.kb_id},
            {"source", seg.source_series_id},
            {"offset", seg.start_offset},
            {"mean", seg.norm_mean},
            {"std", seg.norm_std},
            {"context", seg.context},
            {"continuation", seg.continuation},
        };
        out << rec.dump() << '\n';
    }
    out.flush();
    if (!out) throw DataError("write to '" + path.string() + "' failed");
}

KnowledgeBase load_kb(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");

    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line) || line.empty())
        throw DataError(path.string() + ":1: missing header record");

    const json header = parse_record(line, path, lineno);
    const auto version = field<std::int64_t>(header, "format_version", path, lineno);
    if (version != 1)
        throw DataError(path.string() +
                        ":1: unsupported format_version " + std::to_string(version));

    KnowledgeBase kb;
    const auto freq_name = field<std::string>(header, "frequency", path, lineno);
    const auto freq = parse_frequency(freq_name);
    if (!freq)
        throw DataError(path.string() + ":1: unknown frequency '" + freq_name + "'");
    kb.frequency = *freq;
    kb.window_length = field<std::size_t>(header, "window_length", path, lineno);
    kb.step = field<std::size_t>(header, "step", path, lineno);
    kb.horizon = field<std::size_t>(header, "horizon", path, lineno);
    kb.build_meta.k = field<std::size_t>(header, "k", path, lineno);
    kb.build_meta.seed = field<std::uint64_t>(header, "seed", path, lineno);
    kb.build_meta.iterations_run =
        field<std::size_t>(header, "iterations_run", path, lineno);
    kb.build_meta.corpus_fingerprint =
        field<std::string>(header, "corpus_fingerprint", path, lineno);

    std::unordered_set<std::int64_t> ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": blank record line");
        const json rec = parse_record(line, path, lineno);
        Segment seg;
        seg.kb_id = field<std::int64_t>(rec, "kb_id", path, lineno);
        seg.source_series_id = field<std::string>(rec, "source", path, lineno);
        seg.start_offset = field<std::size_t>(rec, "offset", path, lineno);
        seg.norm_mean = field<double>(rec, "mean", path, lineno);
        seg.norm_std = field<double>(rec, "std", path, lineno);
        seg.context = field<std::vector<double>>(rec, "context", path, lineno);
        seg.continuation =
            field<std::vector<double>>(rec, "continuation", path, lineno);
        if (seg.context.size() != kb.window_length)
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": context length " + std::to_string(seg.context.size()) +
                            " does not match header window_length " +
                            std::to_string(kb.window_length));
        if (!seg.continuation.empty() && seg.continuation.size() != kb.horizon)
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": continuation length " +
                            std::to_string(seg.continuation.size()) +
                            " is neither 0 nor the header horizon " +
                            std::to_string(kb.horizon));
        if (!ids.insert(seg.kb_id).second)
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": duplicate kb_id " + std::to_string(seg.kb_id));
        kb.entries.push_back(std::move(seg));
    }
    if (kb.entries.empty())
        throw DataError(path.string() + ": no segment records after the header");
    return kb;
}

}  // namespace tsrag
