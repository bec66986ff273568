#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qualproj/datasets.hpp"
#include "qualproj/dither.hpp"
#include "qualproj/error.hpp"
#include "qualproj/mlp.hpp"
#include "qualproj/parallel.hpp"
#include "qualproj/rng.hpp"

// Projector networks: one 784 x hidden x 1 net per projection image, trained
// to output 1 for exactly that image. A bank of them maps any image to a
// vector of similarity magnitudes, one component per projection image.

namespace qualproj {

struct ProjectorConfig {
    std::size_t hidden = 100;
    // Applied to every layer, output included; output_activation overrides
    // the final layer when set.
    ActivationKind activation = ActivationKind::biased_sigmoid(5.0);
    std::optional<ActivationKind> output_activation;
    TrainConfig train{1.0, 50, 0};
    std::optional<DitherConfig> dither; // training-time dither
    WeightInit weight_init = WeightInit::InvSqrtFanIn;

    ActivationKind effective_output_activation() const {
        return output_activation.value_or(activation);
    }

    void validate() const {
        if (hidden < 1) throw ConfigError("projector: hidden size must be >= 1");
        if (!activation.is_sigmoid()) {
            throw ConfigError("projector: activation must be a sigmoid kind");
        }
        if (output_activation && !output_activation->is_sigmoid()) {
            throw ConfigError("projector: output activation must be a sigmoid kind");
        }
        train.validate();
        if (dither) dither->validate();
    }
};

struct ProjectorBank {
    struct Entry {
        Mlp net;
        std::size_t image_id = 0; // identity of the projection image
    };
    std::vector<Entry> projectors;
    std::optional<DitherConfig> projection_dither;
    std::uint64_t fingerprint = 0;

    std::size_t size() const { return projectors.size(); }
};

struct ProjectionSet {
    std::vector<std::vector<double>> vectors; // num_images x bank_size
    std::vector<int> labels;
    std::uint64_t bank_fingerprint = 0;

    std::size_t size() const { return vectors.size(); }
    std::size_t dim() const { return vectors.empty() ? 0 : vectors[0].size(); }
};

/// Trains one projector on its projection image: exactly
/// cfg.train.iterations SGD steps of squared error toward [1], the single
/// image being the whole training set. With cfg.dither set, each step
/// averages gradients over the dithered replicates (stream_id = iteration).
inline Mlp train_projector(std::span<const double> image, const ProjectorConfig& cfg,
                           std::uint64_t seed) {
    cfg.validate();
    Mlp net = init_network({image.size(), cfg.hidden, 1},
                           {cfg.activation, cfg.effective_output_activation()}, seed,
                           cfg.weight_init);
    const std::vector<double> target{1.0};
    for (std::size_t it = 0; it < cfg.train.iterations; ++it) {
        Gradients g = cfg.dither
            ? dithered_gradient(net, image, target, LossKind::SquaredError, *cfg.dither, it)
            : backprop(net, image, target, LossKind::SquaredError);
        sgd_step_in_place(net, g, cfg.train.learning_rate);
    }
    return net;
}

namespace detail {

// Per-projector derivations from the bank-level seeds. Training dither
// streams are decorrelated across projectors the same way.
inline std::uint64_t projector_seed(std::uint64_t base_seed, std::size_t index,
                                    bool share_init) {
    return share_init ? base_seed : rng::derive(base_seed, index);
}

inline std::uint64_t bank_fingerprint(const std::vector<std::vector<double>>& images,
                                      const std::vector<std::size_t>& ids,
                                      const ProjectorConfig& cfg, std::uint64_t base_seed) {
    std::uint64_t h = rng::fnv1a("qualproj.bank.v1", 16);
    auto mix_u64 = [&h](std::uint64_t v) { h = rng::fnv1a(&v, sizeof v, h); };
    auto mix_f64 = [&h](double v) { h = rng::fnv1a(&v, sizeof v, h); };
    mix_u64(base_seed);
    mix_u64(cfg.hidden);
    mix_u64(static_cast<std::uint64_t>(cfg.activation.tag));
    mix_f64(cfg.activation.beta);
    const ActivationKind out_act = cfg.effective_output_activation();
    mix_u64(static_cast<std::uint64_t>(out_act.tag));
    mix_f64(out_act.beta);
    mix_f64(cfg.train.learning_rate);
    mix_u64(cfg.train.iterations);
    mix_u64(static_cast<std::uint64_t>(cfg.weight_init));
    mix_u64(cfg.dither.has_value() ? 1 : 0);
    if (cfg.dither) {
        mix_u64(cfg.dither->replicates);
        mix_f64(cfg.dither->amplitude);
        mix_u64(cfg.dither->seed);
    }
    mix_u64(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        mix_u64(ids.empty() ? i : ids[i]);
        h = rng::fnv1a(images[i].data(), images[i].size() * sizeof(double), h);
    }
    return h;
}

} // namespace detail

/// Trains one projector per projection image. Projector i's init seed is
/// derived from (base_seed, i) unless share_init, so trainings are
/// independent and may fan out over any number of workers with bit-identical
/// results.
inline ProjectorBank train_bank(const std::vector<std::vector<double>>& projection_images,
                                const ProjectorConfig& cfg, std::uint64_t base_seed,
                                unsigned workers = 1,
                                const std::vector<std::size_t>& image_ids = {},
                                bool share_init = false) {
    if (projection_images.empty()) throw ConfigError("train_bank: no projection images");
    if (!image_ids.empty() && image_ids.size() != projection_images.size()) {
        throw ConfigError("train_bank: image_ids length mismatch");
    }
    cfg.validate();

    ProjectorBank bank;
    bank.projectors.resize(projection_images.size());
    bank.fingerprint = detail::bank_fingerprint(projection_images, image_ids, cfg, base_seed);
    parallel_for(projection_images.size(), workers, [&](std::size_t i) {
        ProjectorConfig local = cfg;
        if (local.dither) local.dither->seed = rng::derive(local.dither->seed, i);
        bank.projectors[i].net = train_projector(
            projection_images[i], local, detail::projector_seed(base_seed, i, share_init));
        bank.projectors[i].image_id = image_ids.empty() ? i : image_ids[i];
    });
    return bank;
}

/// Projects one image through every projector; component i is projector i's
/// output (dither-averaged when the bank carries projection dither). The
/// replicate set is built once per image and shared across projectors, which
/// is what the per-image noise keying implies.
inline std::vector<double> project(const ProjectorBank& bank, std::span<const double> image,
                                   std::uint64_t stream_id) {
    if (bank.projectors.empty()) throw ConfigError("project: empty bank");
    std::vector<double> out(bank.size());
    const bool dithered = bank.projection_dither && bank.projection_dither->amplitude != 0.0;
    if (dithered) {
        const auto reps = make_replicates(image, *bank.projection_dither, stream_id);
        for (std::size_t i = 0; i < bank.size(); ++i) {
            out[i] = mean_forward(bank.projectors[i].net, reps)[0];
        }
    } else {
        for (std::size_t i = 0; i < bank.size(); ++i) {
            out[i] = forward_output(bank.projectors[i].net, image)[0];
        }
    }
    return out;
}

/// Projects a whole dataset; row j uses stream_id = j so dither noise is
/// reproducible per image and rows are fully independent.
inline ProjectionSet project_dataset(const ProjectorBank& bank, const LabeledDataset& data,
                                     unsigned workers = 1) {
    ProjectionSet set;
    set.vectors.resize(data.size());
    set.labels = data.labels;
    set.bank_fingerprint = bank.fingerprint;
    parallel_for(data.size(), workers, [&](std::size_t j) {
        set.vectors[j] = project(bank, data.images[j], j);
    });
    return set;
}

} // namespace qualproj
