#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "qualproj/error.hpp"
#include "qualproj/mlp.hpp"
#include "qualproj/parallel.hpp"
#include "qualproj/projector.hpp"

// The 10-way classifier trained on qualitative projections, with a test
// error measurement after every full-sweep iteration.

namespace qualproj {

inline constexpr std::size_t kNumClasses = 10;

struct ClassifierConfig {
    std::size_t hidden = 100;
    ActivationKind hidden_activation = ActivationKind::biased_sigmoid(5.0);
    // Output layer is softmax with zero fixed offset; its additive bias
    // parameters start at zero and train unless frozen.
    bool freeze_output_biases = false;
    WeightInit weight_init = WeightInit::InvSqrtFanIn;
    TrainConfig train{1.0, 150, 0};
    std::uint64_t init_seed = 0; // shared across experiment variants
    unsigned eval_workers = 1;

    void validate() const {
        if (hidden < 1) throw ConfigError("classifier: hidden size must be >= 1");
        if (!hidden_activation.is_sigmoid()) {
            throw ConfigError("classifier: hidden activation must be a sigmoid kind");
        }
        train.validate();
    }
};

struct ErrorCurve {
    std::string variant_name;
    std::vector<double> errors; // one per completed training iteration
};

/// Argmax class of the softmax output; ties break toward the lowest index.
inline int predict(const Mlp& net, std::span<const double> projection) {
    const auto out = forward_output(net, projection);
    std::size_t best = 0;
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i] > out[best]) best = i;
    }
    return static_cast<int>(best);
}

/// Misclassified fraction of the set. The per-row checks fan out over
/// workers; the reduction is an integer count, so the result is exact for
/// any worker count.
inline double evaluate_error(const Mlp& net, const ProjectionSet& data,
                             unsigned workers = 1) {
    if (data.size() == 0) throw InvalidInputError("evaluate_error: empty dataset");
    std::vector<std::uint8_t> wrong(data.size(), 0);
    parallel_for(data.size(), workers, [&](std::size_t j) {
        wrong[j] = predict(net, data.vectors[j]) != data.labels[j] ? 1 : 0;
    });
    std::size_t count = 0;
    for (std::uint8_t w : wrong) count += w;
    return static_cast<double>(count) / static_cast<double>(data.size());
}

/// Trains the bank_size x hidden x 10 softmax classifier with per-example
/// SGD in fixed example order (no shuffling), cross-entropy loss, and
/// appends the test error after each full sweep. Initialization uses
/// cfg.init_seed so every experiment variant starts from the exact same
/// weights.
inline std::pair<Mlp, ErrorCurve> train_classifier(const ProjectionSet& train_set,
                                                   const ProjectionSet& test_set,
                                                   const ClassifierConfig& cfg) {
    cfg.validate();
    if (train_set.size() == 0) throw InvalidInputError("train_classifier: empty training set");
    if (test_set.dim() != train_set.dim()) {
        throw ShapeError("train_classifier: train/test projection dims differ");
    }
    for (int lab : train_set.labels) {
        if (lab < 0 || lab >= int(kNumClasses)) {
            throw InvalidInputError("train_classifier: label out of range 0..9");
        }
    }

    Mlp net = init_network({train_set.dim(), cfg.hidden, kNumClasses},
                           {cfg.hidden_activation, ActivationKind::softmax()},
                           cfg.init_seed, cfg.weight_init);

    ErrorCurve curve;
    curve.errors.reserve(cfg.train.iterations);
    Gradients grads = Gradients::zeros_like(net);
    std::vector<double> target(kNumClasses, 0.0);
    for (std::size_t sweep = 0; sweep < cfg.train.iterations; ++sweep) {
        for (std::size_t j = 0; j < train_set.size(); ++j) {
            target.assign(kNumClasses, 0.0);
            target[static_cast<std::size_t>(train_set.labels[j])] = 1.0;
            detail::backprop_into(net, train_set.vectors[j], target,
                                  LossKind::CrossEntropy, grads);
            if (cfg.freeze_output_biases) {
                auto& ob = grads.layers.back().bias_grads;
                ob.assign(ob.size(), 0.0);
            }
            sgd_step_in_place(net, grads, cfg.train.learning_rate);
        }
        curve.errors.push_back(evaluate_error(net, test_set, cfg.eval_workers));
    }
    return {std::move(net), std::move(curve)};
}

/// Mean cross-entropy over a projection set; used for train-loss regression
/// checks.
inline double mean_cross_entropy(const Mlp& net, const ProjectionSet& data) {
    if (data.size() == 0) throw InvalidInputError("mean_cross_entropy: empty dataset");
    double total = 0.0;
    std::vector<double> target(kNumClasses, 0.0);
    for (std::size_t j = 0; j < data.size(); ++j) {
        target.assign(kNumClasses, 0.0);
        target[static_cast<std::size_t>(data.labels[j])] = 1.0;
        total += loss(LossKind::CrossEntropy, forward_output(net, data.vectors[j]), target);
    }
    return total / static_cast<double>(data.size());
}

/// CSV with header `iteration,error`, one row per iteration, 1-based.
inline void write_error_curve_csv(const ErrorCurve& curve, const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path.string());
    std::fputs("iteration,error\n", f);
    for (std::size_t i = 0; i < curve.errors.size(); ++i) {
        std::fprintf(f, "%zu,%.6f\n", i + 1, curve.errors[i]);
    }
    if (std::fclose(f) != 0) throw IoError("failed writing: " + path.string());
}

} // namespace qualproj
