#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tinydesc/augment.hpp"
#include "tinydesc/errors.hpp"
#include "tinydesc/image.hpp"
#include "tinydesc/net.hpp"
#include "tinydesc/parallel.hpp"
#include "tinydesc/patches.hpp"
#include "tinydesc/rng.hpp"

namespace tinydesc {

inline double l2_distance(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw ShapeError("l2_distance: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

// Descriptor producers evaluated by the harness.
inline auto net_descriptor(const DescriptorNet& net) {
    return [&net](const Patch& p) { return forward(net, p); };
}

// 8-bit round trip through the output bounds; what a quantized index would see.
inline auto quantized_descriptor(const DescriptorNet& net, const DescriptorBounds& bounds) {
    return [&net, &bounds](const Patch& p) {
        return dequantize(quantize(forward(net, p), bounds), bounds);
    };
}

// ---------------------------------------------------------------------------
// Average precision over (distance, is_positive) scores; smaller distance
// ranks earlier, ties keep input order.
// ---------------------------------------------------------------------------

inline double average_precision(const std::vector<std::pair<double, bool>>& scored) {
    std::size_t positives = 0;
    for (const auto& s : scored) positives += s.second ? 1 : 0;
    if (positives == 0) throw ConfigError("average_precision: no positive entries");

    std::vector<std::uint32_t> order(scored.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t i, std::uint32_t j) {
        return scored[i].first < scored[j].first;
    });

    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (scored[order[rank]].second) {
            ++hits;
            ap += double(hits) / double(rank + 1);
        }
    }
    return ap / double(positives);
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct EvalReport {
    std::string task;
    std::string tier = "-";
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<std::pair<std::string, std::string>> config;  // echoed settings

    double metric(const std::string& name) const {
        for (const auto& [k, v] : metrics)
            if (k == name) return v;
        throw ConfigError("report has no metric named " + name);
    }
};

inline std::string format_report(const EvalReport& r) {
    std::ostringstream out;
    out << "# task=" << r.task << "\n# tier=" << r.tier << '\n';
    for (const auto& [k, v] : r.config) out << "# " << k << '=' << v << '\n';
    char buf[64];
    for (const auto& [k, v] : r.metrics) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        out << k << '\t' << buf << '\n';
    }
    return out.str();
}

inline void write_report(const std::string& path, const EvalReport& r) {
    write_text_file(path, format_report(r));
}

// ---------------------------------------------------------------------------
// Verification: rank same/different patch pairs by descriptor distance.
// ---------------------------------------------------------------------------

enum class NegativeKind : std::uint8_t { inter = 0, intra = 1 };

struct PatchPair {
    Patch a, b;
    bool same = false;
    NegativeKind kind = NegativeKind::inter;  // meaningful for negatives
};

struct PairSet {
    std::vector<PatchPair> pairs;
};

enum class VerifyMode { balanced, imbalanced };

template <typename DescriptorFn>
EvalReport verify(DescriptorFn&& descriptor, const PairSet& ps, VerifyMode mode,
                  std::uint64_t seed, unsigned threads = 0) {
    const auto& pairs = ps.pairs;
    std::size_t n_pos = 0, n_neg = 0;
    for (const auto& p : pairs) (p.same ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0)
        throw ConfigError("verify: need at least one positive and one negative pair");

    std::vector<double> dist(pairs.size());
    parallel_for(pairs.size(), threads == 0 ? hardware_threads() : threads, [&](std::size_t i) {
        dist[i] = l2_distance(descriptor(pairs[i].a), descriptor(pairs[i].b));
    });

    // Balanced mode: keep a seeded subsample of negatives, one per positive.
    std::vector<std::uint8_t> keep(pairs.size(), 1);
    if (mode == VerifyMode::balanced && n_neg > n_pos) {
        std::vector<std::uint32_t> neg_idx;
        neg_idx.reserve(n_neg);
        for (std::size_t i = 0; i < pairs.size(); ++i)
            if (!pairs[i].same) {
                keep[i] = 0;
                neg_idx.push_back(std::uint32_t(i));
            }
        Rng rng = Rng::derive(seed, 0xBA1A);
        rng.shuffle(neg_idx);
        for (std::size_t k = 0; k < n_pos; ++k) keep[neg_idx[k]] = 1;
    }

    auto ap_against = [&](NegativeKind kind) -> double {
        std::vector<std::pair<double, bool>> scored;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (!keep[i]) continue;
            if (pairs[i].same || pairs[i].kind == kind) scored.emplace_back(dist[i], pairs[i].same);
        }
        return average_precision(scored);
    };

    EvalReport r;
    r.task = "verification";
    r.metrics.emplace_back("ap_inter", ap_against(NegativeKind::inter));
    r.metrics.emplace_back("ap_intra", ap_against(NegativeKind::intra));
    r.config.emplace_back("mode", mode == VerifyMode::balanced ? "balanced" : "imbalanced");
    r.config.emplace_back("seed", std::to_string(seed));
    r.config.emplace_back("positives", std::to_string(n_pos));
    r.config.emplace_back("negatives", std::to_string(n_neg));
    return r;
}

// ---------------------------------------------------------------------------
// Retrieval: rank the true match against n sampled distractors.
// ---------------------------------------------------------------------------

struct RetrievalQuery {
    Patch query, match;
};

struct RetrievalSet {
    std::vector<RetrievalQuery> queries;
    std::vector<Patch> pool;  // distractors; never contains a query's match
    std::vector<std::size_t> ladder = {100, 500, 1000, 5000, 10000, 15000, 20000};
};

template <typename DescriptorFn>
EvalReport retrieve(DescriptorFn&& descriptor, const RetrievalSet& rs, std::uint64_t seed,
                    unsigned threads = 0) {
    if (rs.queries.empty()) throw ConfigError("retrieve: no queries");
    const std::size_t max_n = rs.ladder.empty()
                                  ? 0
                                  : *std::max_element(rs.ladder.begin(), rs.ladder.end());
    if (rs.pool.size() < max_n)
        throw ConfigError("retrieve: pool of " + std::to_string(rs.pool.size()) +
                          " is smaller than the largest ladder entry " + std::to_string(max_n));
    const unsigned workers = threads == 0 ? hardware_threads() : threads;

    std::vector<std::vector<float>> query_desc(rs.queries.size()), match_desc(rs.queries.size());
    parallel_for(rs.queries.size(), workers, [&](std::size_t i) {
        query_desc[i] = descriptor(rs.queries[i].query);
        match_desc[i] = descriptor(rs.queries[i].match);
    });
    std::vector<std::vector<float>> pool_desc(rs.pool.size());
    parallel_for(rs.pool.size(), workers, [&](std::size_t i) { pool_desc[i] = descriptor(rs.pool[i]); });

    EvalReport r;
    r.task = "retrieval";
    double total = 0.0;
    for (const std::size_t n : rs.ladder) {
        std::vector<double> ap(rs.queries.size());
        parallel_for(rs.queries.size(), workers, [&](std::size_t q) {
            Rng rng = Rng::derive(seed, (std::uint64_t(n) << 24) ^ q);
            // Partial Fisher-Yates: first n entries become the distractor sample.
            std::vector<std::uint32_t> idx(rs.pool.size());
            std::iota(idx.begin(), idx.end(), 0u);
            for (std::size_t k = 0; k < n; ++k)
                std::swap(idx[k], idx[k + rng.index(idx.size() - k)]);
            std::vector<std::pair<double, bool>> scored;
            scored.reserve(n + 1);
            scored.emplace_back(l2_distance(query_desc[q], match_desc[q]), true);
            for (std::size_t k = 0; k < n; ++k)
                scored.emplace_back(l2_distance(query_desc[q], pool_desc[idx[k]]), false);
            ap[q] = average_precision(scored);
        });
        double map = 0.0;
        for (double v : ap) map += v;
        map /= double(ap.size());
        r.metrics.emplace_back("map@" + std::to_string(n), map);
        total += map;
    }
    r.metrics.emplace_back("mean", rs.ladder.empty() ? 0.0 : total / double(rs.ladder.size()));
    r.config.emplace_back("seed", std::to_string(seed));
    r.config.emplace_back("queries", std::to_string(rs.queries.size()));
    r.config.emplace_back("pool", std::to_string(rs.pool.size()));
    return r;
}

// ---------------------------------------------------------------------------
// Tiered synthetic benchmark: positive pairs are tier-jittered re-draws of
// same-class patches; negatives pair distinct classes, intra within one
// source family and inter across families.
// ---------------------------------------------------------------------------

struct TierParams {
    int max_crop_px = 2;
    double max_noise_sigma = 4.0;

    static TierParams easy() { return {2, 4.0}; }
    static TierParams hard() { return {4, 8.0}; }
    static TierParams tough() { return {6, 12.0}; }

    static TierParams named(const std::string& name) {
        if (name == "easy") return easy();
        if (name == "hard") return hard();
        if (name == "tough") return tough();
        throw ConfigError("unknown tier: " + name);
    }
};

inline Patch tier_jitter(const Patch& in, const TierParams& tier, Rng& rng) {
    Patch out = in;
    const int d = tier.max_crop_px > 0 ? rng.uniform_int(0, tier.max_crop_px) : 0;
    if (d > 0) {
        const int size = kPatchEdge - d;
        out = crop_and_rescale(out, size, rng.uniform_int(0, d), rng.uniform_int(0, d));
    }
    const double sigma = tier.max_noise_sigma > 0 ? rng.uniform(0.0, tier.max_noise_sigma) : 0.0;
    out = additive_noise(out, sigma, rng);
    return out;
}

struct BenchmarkConfig {
    std::size_t positive_pairs = 400;
    std::size_t negative_pairs = 1200;
    std::size_t queries = 150;
    std::size_t pool_size = 600;
    std::vector<std::size_t> ladder = {100, 500};
};

struct Benchmark {
    PairSet pairs;
    RetrievalSet retrieval;
};

inline Benchmark make_tiered_benchmark(const PatchDataset& ds, const TierParams& tier,
                                       const BenchmarkConfig& cfg, Rng& rng) {
    const std::size_t need = cfg.queries + cfg.pool_size + 2;
    if (ds.class_count() < need)
        throw ConfigError("benchmark needs at least " + std::to_string(need) + " classes, dataset has " +
                          std::to_string(ds.class_count()));

    std::vector<std::uint32_t> class_ids(ds.class_count());
    std::iota(class_ids.begin(), class_ids.end(), 0u);
    rng.shuffle(class_ids);

    Benchmark bench;
    std::size_t cursor = 0;

    // Retrieval queries, then the distractor pool, from disjoint classes.
    bench.retrieval.ladder = cfg.ladder;
    for (std::size_t q = 0; q < cfg.queries; ++q) {
        const auto& members = ds.classes[class_ids[cursor++]];
        const Patch& base = ds.patches[members[rng.index(members.size())]];
        const Patch& other = ds.patches[members[rng.index(members.size())]];
        bench.retrieval.queries.push_back(
            RetrievalQuery{tier_jitter(base, tier, rng), tier_jitter(other, tier, rng)});
    }
    for (std::size_t i = 0; i < cfg.pool_size; ++i) {
        const auto& members = ds.classes[class_ids[cursor++]];
        bench.retrieval.pool.push_back(ds.patches[members[rng.index(members.size())]]);
    }

    // Verification pairs from the remaining classes.
    const std::span<const std::uint32_t> rest(class_ids.data() + cursor, class_ids.size() - cursor);
    if (rest.size() < 2) throw ConfigError("benchmark: too few classes left for pairs");
    auto pick_patch = [&](std::uint32_t class_id) -> const Patch& {
        const auto& members = ds.classes[class_id];
        return ds.patches[members[rng.index(members.size())]];
    };
    for (std::size_t k = 0; k < cfg.positive_pairs; ++k) {
        const std::uint32_t c = rest[rng.index(rest.size())];
        const auto& members = ds.classes[c];
        const Patch& p1 = ds.patches[members[rng.index(members.size())]];
        const Patch& p2 = ds.patches[members[rng.index(members.size())]];
        bench.pairs.pairs.push_back(
            PatchPair{tier_jitter(p1, tier, rng), tier_jitter(p2, tier, rng), true, NegativeKind::inter});
    }
    std::size_t made_intra = 0, made_inter = 0;
    std::size_t guard = 0;
    while (made_intra + made_inter < cfg.negative_pairs && guard++ < cfg.negative_pairs * 50) {
        const std::uint32_t c1 = rest[rng.index(rest.size())];
        const std::uint32_t c2 = rest[rng.index(rest.size())];
        if (c1 == c2) continue;
        const bool same_family = ds.family[c1] == ds.family[c2];
        const bool want_intra = made_intra * 2 < cfg.negative_pairs;
        if (same_family != want_intra) continue;
        (same_family ? made_intra : made_inter) += 1;
        bench.pairs.pairs.push_back(PatchPair{tier_jitter(pick_patch(c1), tier, rng),
                                              tier_jitter(pick_patch(c2), tier, rng), false,
                                              same_family ? NegativeKind::intra : NegativeKind::inter});
    }
    if (made_intra == 0 || made_inter == 0)
        throw ConfigError("benchmark: could not build both intra- and inter-family negatives");

    rng.shuffle(bench.pairs.pairs);
    return bench;
}

// ---------------------------------------------------------------------------
// External patch stacks: a vertical stack of square patches, either as a
// binary PGM or as raw bytes with a "<width> <height>" sidecar (path + ".geom").
// ---------------------------------------------------------------------------

enum class StackFit { center_crop, downscale };

inline std::vector<Patch> split_patch_stack(const Image8& stack, int patch_edge, StackFit fit) {
    const int edge = patch_edge > 0 ? patch_edge : stack.width;
    if (stack.width != edge)
        throw ShapeError("patch stack width " + std::to_string(stack.width) +
                         " does not match patch edge " + std::to_string(edge));
    if (edge < kPatchEdge)
        throw ShapeError("stack patches of " + std::to_string(edge) + "px are smaller than 32px");
    if (stack.height % edge != 0)
        throw ShapeError("stack height " + std::to_string(stack.height) +
                         " is not a multiple of the patch edge");
    const int count = stack.height / edge;
    std::vector<Patch> out;
    out.reserve(std::size_t(count));
    for (int k = 0; k < count; ++k) {
        Image8 one(edge, edge);
        for (int y = 0; y < edge; ++y)
            std::copy_n(&stack.px[std::size_t(k * edge + y) * stack.width], edge,
                        &one.px[std::size_t(y) * edge]);
        if (edge == kPatchEdge) {
            out.push_back(image_to_patch(one));
        } else if (fit == StackFit::center_crop) {
            const int off = (edge - kPatchEdge) / 2;
            out.push_back(crop_patch(one, off, off));
        } else {
            out.push_back(image_to_patch(resize_area(one, kPatchEdge, kPatchEdge)));
        }
    }
    return out;
}

inline std::vector<Patch> ingest_patch_stack(const std::string& path, int patch_edge, StackFit fit) {
    Image8 stack;
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".pgm") {
        stack = read_pgm(path);
    } else {
        const auto geom = read_file(path + ".geom");
        std::istringstream gs(std::string(geom.begin(), geom.end()));
        int w = 0, h = 0;
        if (!(gs >> w >> h) || w <= 0 || h <= 0)
            throw FormatError("sidecar geometry must contain '<width> <height>': " + path + ".geom");
        const auto raw = read_file(path);
        if (raw.size() != std::size_t(w) * std::size_t(h))
            throw ShapeError("raw stack size does not match sidecar geometry: " + path);
        stack = Image8(h, w);
        std::copy(raw.begin(), raw.end(), stack.px.begin());
    }
    return split_patch_stack(stack, patch_edge, fit);
}

}  // namespace tinydesc
