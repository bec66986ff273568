#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qualproj/error.hpp"
#include "qualproj/mlp.hpp"
#include "qualproj/rng.hpp"

// Parallel dither: replicate an input with independent additive uniform
// noise, then average either the outputs (at projection time) or the
// gradients (at training time) over the replicates.

namespace qualproj {

struct DitherConfig {
    std::size_t replicates = 100;
    double amplitude = 0.5; // half-range of the uniform noise
    std::uint64_t seed = 0;

    void validate() const {
        if (replicates < 1) throw ConfigError("dither: replicates must be >= 1");
        if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) {
            throw ConfigError("dither: amplitude must be a finite non-negative real");
        }
    }
};

/// Replicates an image cfg.replicates times, adding i.i.d. uniform noise on
/// [-amplitude, +amplitude) to every pixel. The noise stream of replicate r
/// is keyed by (cfg.seed, stream_id, r), so any worker can generate any
/// replicate independently and results never depend on evaluation order.
/// Values are not clipped to [0,1]. amplitude = 0 yields exact copies.
inline std::vector<std::vector<double>> make_replicates(std::span<const double> image,
                                                        const DitherConfig& cfg,
                                                        std::uint64_t stream_id) {
    cfg.validate();
    for (double v : image) {
        if (!std::isfinite(v)) throw InvalidInputError("make_replicates: non-finite pixel");
    }
    std::vector<std::vector<double>> reps(cfg.replicates);
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
        auto& rep = reps[r];
        rep.assign(image.begin(), image.end());
        if (cfg.amplitude == 0.0) continue;
        rng::Stream noise(rng::derive(rng::derive(cfg.seed, stream_id), r));
        for (double& v : rep) v += noise.next_in(-cfg.amplitude, cfg.amplitude);
    }
    return reps;
}

/// Mean of forward outputs over pre-built replicates, summed in replicate
/// index order.
inline std::vector<double> mean_forward(const Mlp& net,
                                        const std::vector<std::vector<double>>& replicates) {
    if (replicates.empty()) throw InvalidInputError("mean_forward: no replicates");
    std::vector<double> sum = forward_output(net, replicates[0]);
    for (std::size_t r = 1; r < replicates.size(); ++r) {
        const auto out = forward_output(net, replicates[r]);
        require_same_length(out.size(), sum.size(), "mean_forward");
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += out[i];
    }
    const double inv = 1.0 / static_cast<double>(replicates.size());
    for (double& v : sum) v *= inv;
    return sum;
}

/// Mean of backprop gradients over pre-built replicates, accumulated in
/// replicate index order.
inline Gradients mean_backprop(const Mlp& net,
                               const std::vector<std::vector<double>>& replicates,
                               const std::vector<double>& target, LossKind kind) {
    if (replicates.empty()) throw InvalidInputError("mean_backprop: no replicates");
    Gradients acc = backprop(net, replicates[0], target, kind);
    Gradients scratch = Gradients::zeros_like(net);
    for (std::size_t r = 1; r < replicates.size(); ++r) {
        detail::backprop_into(net, replicates[r], target, kind, scratch);
        for (std::size_t k = 0; k < acc.layers.size(); ++k) {
            auto& aw = acc.layers[k].weight_grads.data;
            const auto& sw = scratch.layers[k].weight_grads.data;
            for (std::size_t i = 0; i < aw.size(); ++i) aw[i] += sw[i];
            auto& ab = acc.layers[k].bias_grads;
            const auto& sb = scratch.layers[k].bias_grads;
            for (std::size_t i = 0; i < ab.size(); ++i) ab[i] += sb[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(replicates.size());
    for (auto& lg : acc.layers) {
        for (double& v : lg.weight_grads.data) v *= inv;
        for (double& v : lg.bias_grads) v *= inv;
    }
    return acc;
}

/// Dithered inference: mean over replicates of forward(net, replicate).
/// amplitude = 0 short-circuits to the plain forward output, making the
/// zero-amplitude identity exact rather than exact-up-to-summation.
inline std::vector<double> dithered_output(const Mlp& net, std::span<const double> image,
                                           const DitherConfig& cfg, std::uint64_t stream_id) {
    cfg.validate();
    if (cfg.amplitude == 0.0) return forward_output(net, image);
    return mean_forward(net, make_replicates(image, cfg, stream_id));
}

/// Dithered training gradient: mean over replicates of backprop against the
/// shared target. amplitude = 0 short-circuits to plain backprop.
inline Gradients dithered_gradient(const Mlp& net, std::span<const double> image,
                                   const std::vector<double>& target, LossKind kind,
                                   const DitherConfig& cfg, std::uint64_t stream_id) {
    cfg.validate();
    if (cfg.amplitude == 0.0) return backprop(net, image, target, kind);
    return mean_backprop(net, make_replicates(image, cfg, stream_id), target, kind);
}

} // namespace qualproj
