#pragma once

#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tinydesc/augment.hpp"
#include "tinydesc/errors.hpp"
#include "tinydesc/net.hpp"
#include "tinydesc/parallel.hpp"
#include "tinydesc/patches.hpp"
#include "tinydesc/rng.hpp"

namespace tinydesc {

enum class Optimizer { sgd_momentum, plain_sgd };

struct TrainConfig {
    std::size_t batch_size = 8192;
    float alpha = 1.5f;  // triplet margin
    int iterations = 5000;
    Optimizer optimizer = Optimizer::sgd_momentum;
    float learning_rate = 0.01f;
    float momentum = 0.9f;
    int lr_halve_every = 1500;  // 0 disables the schedule
    std::uint64_t seed = 1;
    bool deterministic = true;
    bool pipeline = true;  // prepare batch k+1 while batch k trains
    unsigned threads = 0;  // 0 = hardware concurrency
    AugmentSchedule augment;
    std::string model_out;  // optional: persist the final model
    std::string stats_out;  // optional: persist the stats log
};

struct StatsRow {
    int iteration = 0;
    double mean_loss = 0.0;
    double frac_solved = 0.0;
    double frac_close = 0.0;
};

// Anchor / positive / negative index triples plus their augmented patches.
struct TripletBatch {
    std::vector<std::uint32_t> anchor, positive, negative;
    std::vector<Patch> anchor_patch, positive_patch, negative_patch;

    std::size_t size() const { return anchor.size(); }
};

inline float triplet_loss(float d_ap, float d_an, float alpha) {
    const float v = d_ap - d_an + alpha;
    return v > 0.f ? v : 0.f;
}

// Anchors are uniform over all patches; the positive is uniform within the
// anchor's class (the anchor itself when the class is a singleton); the
// negative is uniform within a uniformly chosen different class.
inline TripletBatch sample_batch(const PatchDataset& ds, std::size_t size,
                                 const AugmentSchedule& schedule, Rng& rng) {
    if (ds.class_count() < 2) throw ConfigError("sampling requires at least two classes");
    TripletBatch b;
    b.anchor.reserve(size);
    b.positive.reserve(size);
    b.negative.reserve(size);
    b.anchor_patch.reserve(size);
    b.positive_patch.reserve(size);
    b.negative_patch.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        const auto a = std::uint32_t(rng.index(ds.patch_count()));
        const std::uint32_t a_class = ds.class_of[a];
        const auto& mates = ds.classes[a_class];
        const std::uint32_t p = mates[rng.index(mates.size())];
        std::size_t n_class = rng.index(ds.class_count() - 1);
        if (n_class >= a_class) ++n_class;
        const auto& others = ds.classes[n_class];
        const std::uint32_t n = others[rng.index(others.size())];

        b.anchor.push_back(a);
        b.positive.push_back(p);
        b.negative.push_back(n);
        b.anchor_patch.push_back(
            apply_augmentation(ds.patches[a], AugRole::anchor_positive, schedule, rng));
        b.positive_patch.push_back(
            apply_augmentation(ds.patches[p], AugRole::anchor_positive, schedule, rng));
        b.negative_patch.push_back(
            apply_augmentation(ds.patches[n], AugRole::negative, schedule, rng));
    }
    return b;
}

namespace detail {

inline float l2_distance_f(std::span<const float> a, std::span<const float> b) {
    float acc = 0.f;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const float d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

struct BatchAccounting {
    double loss_sum = 0.0;
    std::size_t solved = 0;
    std::size_t close = 0;
};

// Gradients and statistics of the mean triplet loss over batch[range]. The
// upstream gradient of each triplet is scaled by 1/batch_size here so chunk
// sums merge into the exact batch mean.
inline void triplet_chunk_gradients(const DescriptorNet& net, const TripletBatch& batch,
                                    std::size_t begin, std::size_t end, float alpha,
                                    NetGrads<float>& grads, BatchAccounting& acct) {
    const float inv_batch = 1.f / float(batch.size());
    for (std::size_t i = begin; i < end; ++i) {
        ForwardTrace<float> ta = forward_trace(net, patch_to_tensor<float>(batch.anchor_patch[i]));
        ForwardTrace<float> tp = forward_trace(net, patch_to_tensor<float>(batch.positive_patch[i]));
        ForwardTrace<float> tn = forward_trace(net, patch_to_tensor<float>(batch.negative_patch[i]));
        const auto& da = ta.output;
        const auto& dp = tp.output;
        const auto& dn = tn.output;
        const float d_ap = l2_distance_f(da, dp);
        const float d_an = l2_distance_f(da, dn);
        const float loss = triplet_loss(d_ap, d_an, alpha);
        acct.loss_sum += double(loss);
        if (loss == 0.f) {
            ++acct.solved;  // zero loss => zero gradient, nothing to backpropagate
        } else {
            std::vector<float> ga(da.size(), 0.f), gp(da.size(), 0.f), gn(da.size(), 0.f);
            for (std::size_t j = 0; j < da.size(); ++j) {
                const float ap = d_ap > 0.f ? (da[j] - dp[j]) / d_ap : 0.f;
                const float an = d_an > 0.f ? (da[j] - dn[j]) / d_an : 0.f;
                ga[j] = (ap - an) * inv_batch;
                gp[j] = -ap * inv_batch;
                gn[j] = an * inv_batch;
            }
            backward_accumulate(net, ta, std::span<const float>(ga), grads);
            backward_accumulate(net, tp, std::span<const float>(gp), grads);
            backward_accumulate(net, tn, std::span<const float>(gn), grads);
        }
        if (d_ap < alpha / 2.f) ++acct.close;
    }
}

}  // namespace detail

struct SgdState {
    std::vector<std::vector<float>> velocity_w;
    std::vector<std::vector<float>> velocity_b;
    int step = 0;

    static SgdState zeros_like(const DescriptorNet& net) {
        SgdState s;
        const auto g = NetGrads<float>::zeros_like(net);
        s.velocity_w = g.weights;
        s.velocity_b = g.bias;
        return s;
    }
};

// One optimizer step on the mean triplet loss of the batch. Gradients are
// accumulated per fixed chunk of triplets and merged in chunk order, so the
// result does not depend on the thread count.
inline StatsRow train_step(DescriptorNet& net, const TripletBatch& batch, const TrainConfig& cfg,
                           SgdState& state) {
    if (batch.size() == 0) throw ConfigError("empty batch");
    const unsigned threads = cfg.threads == 0 ? hardware_threads() : cfg.threads;
    constexpr std::size_t kChunks = 16;
    const std::size_t chunks = std::min(kChunks, batch.size());

    std::vector<NetGrads<float>> chunk_grads(chunks, NetGrads<float>::zeros_like(net));
    std::vector<detail::BatchAccounting> chunk_acct(chunks);
    parallel_for(chunks, threads, [&](std::size_t c) {
        const std::size_t begin = batch.size() * c / chunks;
        const std::size_t end = batch.size() * (c + 1) / chunks;
        detail::triplet_chunk_gradients(net, batch, begin, end, cfg.alpha, chunk_grads[c],
                                        chunk_acct[c]);
    });
    NetGrads<float>& grads = chunk_grads[0];
    for (std::size_t c = 1; c < chunks; ++c) grads.add(chunk_grads[c]);
    detail::BatchAccounting acct;
    for (const auto& a : chunk_acct) {
        acct.loss_sum += a.loss_sum;
        acct.solved += a.solved;
        acct.close += a.close;
    }

    StatsRow row;
    row.iteration = state.step;
    row.mean_loss = acct.loss_sum / double(batch.size());
    row.frac_solved = double(acct.solved) / double(batch.size());
    row.frac_close = double(acct.close) / double(batch.size());
    if (!std::isfinite(row.mean_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at iteration " << state.step << " (mean_loss=" << row.mean_loss
            << ", solved=" << acct.solved << "/" << batch.size() << ")";
        throw Error(msg.str());
    }

    float lr = cfg.learning_rate;
    if (cfg.lr_halve_every > 0)
        lr *= std::pow(0.5f, float(state.step / cfg.lr_halve_every));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& w = net.layers[l].is_conv() ? net.layers[l].conv().weights : net.layers[l].fc().weights;
        auto& b = net.layers[l].is_conv() ? net.layers[l].conv().bias : net.layers[l].fc().bias;
        if (cfg.optimizer == Optimizer::sgd_momentum) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                state.velocity_w[l][i] = cfg.momentum * state.velocity_w[l][i] - lr * grads.weights[l][i];
                w[i] += state.velocity_w[l][i];
            }
            for (std::size_t i = 0; i < b.size(); ++i) {
                state.velocity_b[l][i] = cfg.momentum * state.velocity_b[l][i] - lr * grads.bias[l][i];
                b[i] += state.velocity_b[l][i];
            }
        } else {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * grads.weights[l][i];
            for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * grads.bias[l][i];
        }
    }
    ++state.step;
    return row;
}

struct TrainResult {
    DescriptorNet net;
    std::vector<StatsRow> stats;
};

inline std::string format_stats(const std::vector<StatsRow>& rows) {
    std::ostringstream out;
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d\t%.8g\t%.8g\t%.8g\n", r.iteration, r.mean_loss,
                      r.frac_solved, r.frac_close);
        out << buf;
    }
    return out.str();
}

namespace detail {
// Single-slot hand-off between the batch producer and the training loop.
// stop() wakes both sides so neither can block after an error.
class BatchSlot {
public:
    // Returns false if the consumer stopped early.
    bool put(TripletBatch&& batch) {
        std::unique_lock lock(m_);
        cv_space_.wait(lock, [&] { return !slot_.has_value() || stopped_; });
        if (stopped_) return false;
        slot_ = std::move(batch);
        cv_item_.notify_one();
        return true;
    }

    // Empty result means the producer stopped without delivering.
    std::optional<TripletBatch> take() {
        std::unique_lock lock(m_);
        cv_item_.wait(lock, [&] { return slot_.has_value() || stopped_; });
        if (!slot_.has_value()) return std::nullopt;
        std::optional<TripletBatch> b = std::move(slot_);
        slot_.reset();
        cv_space_.notify_one();
        return b;
    }

    void stop() {
        std::lock_guard lock(m_);
        stopped_ = true;
        cv_space_.notify_all();
        cv_item_.notify_all();
    }

private:
    std::mutex m_;
    std::condition_variable cv_item_, cv_space_;
    std::optional<TripletBatch> slot_;
    bool stopped_ = false;
};
}  // namespace detail

inline constexpr std::uint64_t kInitStream = 0x696E6974;  // weight init substream

// Runs the full optimization loop. Batch k is generated from a substream
// derived from (seed, k), so the result is identical with and without the
// preparation pipeline.
inline TrainResult train(const PatchDataset& ds, const TrainConfig& cfg, DescriptorNet net) {
    TrainResult result;
    result.stats.reserve(std::size_t(std::max(cfg.iterations, 0)));
    SgdState state = SgdState::zeros_like(net);

    auto make_batch = [&](int k) {
        Rng rng = Rng::derive(cfg.seed, std::uint64_t(k) + 1);
        return sample_batch(ds, cfg.batch_size, cfg.augment, rng);
    };

    if (!cfg.pipeline || cfg.iterations <= 1) {
        for (int k = 0; k < cfg.iterations; ++k) {
            TripletBatch batch = make_batch(k);
            result.stats.push_back(train_step(net, batch, cfg, state));
        }
    } else {
        detail::BatchSlot slot;
        std::exception_ptr producer_error;
        std::thread producer([&] {
            try {
                for (int k = 0; k < cfg.iterations; ++k)
                    if (!slot.put(make_batch(k))) return;
            } catch (...) {
                producer_error = std::current_exception();
                slot.stop();
            }
        });
        try {
            for (int k = 0; k < cfg.iterations; ++k) {
                std::optional<TripletBatch> batch = slot.take();
                if (!batch.has_value()) break;  // producer failed; error rethrown below
                result.stats.push_back(train_step(net, *batch, cfg, state));
            }
        } catch (...) {
            slot.stop();
            producer.join();
            throw;
        }
        slot.stop();
        producer.join();
        if (producer_error) std::rethrow_exception(producer_error);
    }

    result.net = std::move(net);
    if (!cfg.model_out.empty()) save_model(result.net, cfg.model_out);
    if (!cfg.stats_out.empty()) write_text_file(cfg.stats_out, format_stats(result.stats));
    return result;
}

inline TrainResult train(const PatchDataset& ds, const TrainConfig& cfg) {
    Rng init_rng = Rng::derive(cfg.seed, kInitStream);
    return train(ds, cfg, build_paper_net<float>(init_rng));
}

}  // namespace tinydesc
