#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qualproj/error.hpp"
#include "qualproj/linalg.hpp"
#include "qualproj/rng.hpp"

// Dense feed-forward networks built from scratch: forward pass, losses,
// exact backpropagation, per-example SGD, seeded initialization, and a
// central-difference gradient oracle for cross-checking backprop.

namespace qualproj {

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class ActivationTag { Sigmoid, Softmax, Linear };

/// Activation of one layer. Sigmoid carries a fixed pre-squash offset beta:
/// the unit computes sigma(z + beta). beta = 0 is the plain sigmoid; a large
/// positive beta pins operation in the curved (rectifying) region of the
/// squash. beta is configuration, never a trained parameter.
struct ActivationKind {
    ActivationTag tag = ActivationTag::Sigmoid;
    double beta = 0.0;

    static ActivationKind plain_sigmoid() { return {ActivationTag::Sigmoid, 0.0}; }
    static ActivationKind biased_sigmoid(double beta) {
        if (!std::isfinite(beta)) throw ConfigError("biased sigmoid: beta must be finite");
        return {ActivationTag::Sigmoid, beta};
    }
    static ActivationKind softmax() { return {ActivationTag::Softmax, 0.0}; }
    static ActivationKind linear() { return {ActivationTag::Linear, 0.0}; }

    bool is_sigmoid() const { return tag == ActivationTag::Sigmoid; }

    friend bool operator==(const ActivationKind&, const ActivationKind&) = default;
};

inline double sigmoid(double u) {
    double y;
    if (u >= 0.0) {
        y = 1.0 / (1.0 + std::exp(-u));
    } else {
        const double e = std::exp(u);
        y = e / (1.0 + e);
    }
    // hold the open interval where rounding would saturate (|u| > ~36)
    if (y >= 1.0) {
        y = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    } else if (y <= 0.0) {
        y = std::numeric_limits<double>::min();
    }
    return y;
}

/// Applies an activation to a vector of pre-activations.
inline std::vector<double> activate(const ActivationKind& kind,
                                    std::vector<double> pre) {
    for (double v : pre) {
        if (!std::isfinite(v)) {
            throw InvalidInputError("activate: non-finite pre-activation");
        }
    }
    switch (kind.tag) {
    case ActivationTag::Linear:
        return pre;
    case ActivationTag::Sigmoid:
        for (double& v : pre) v = sigmoid(v + kind.beta);
        return pre;
    case ActivationTag::Softmax: {
        if (pre.empty()) throw InvalidInputError("activate: softmax of empty vector");
        double m = pre[0];
        for (double v : pre) m = std::max(m, v);
        double sum = 0.0;
        for (double& v : pre) {
            v = std::exp(v - m);
            sum += v;
        }
        for (double& v : pre) v /= sum;
        return pre;
    }
    }
    throw InvalidInputError("activate: unknown activation");
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

struct Layer {
    Matrix weights;              // fan_out x fan_in
    std::vector<double> biases;  // fan_out
    ActivationKind activation;

    std::size_t fan_in() const { return weights.cols; }
    std::size_t fan_out() const { return weights.rows; }
    friend bool operator==(const Layer&, const Layer&) = default;
};

struct Mlp {
    std::size_t input_dim = 0;
    std::vector<Layer> layers;
    std::optional<std::uint64_t> init_seed; // provenance only

    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().fan_out(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weights.data.size() + l.biases.size();
        return n;
    }

    /// Checks dimension chaining, bias lengths, softmax placement and
    /// parameter finiteness.
    void validate() const {
        if (layers.empty()) throw ConfigError("mlp: no layers");
        std::size_t expect = input_dim;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const Layer& l = layers[k];
            if (l.fan_in() != expect) {
                throw ShapeError("mlp: layer " + std::to_string(k) + " fan_in " +
                                 std::to_string(l.fan_in()) + " != expected " +
                                 std::to_string(expect));
            }
            if (l.biases.size() != l.fan_out()) {
                throw ShapeError("mlp: layer " + std::to_string(k) + " bias length mismatch");
            }
            if (l.activation.tag == ActivationTag::Softmax && k + 1 != layers.size()) {
                throw ConfigError("mlp: softmax is only permitted on the final layer");
            }
            for (double w : l.weights.data) {
                if (!std::isfinite(w)) throw InvalidInputError("mlp: non-finite weight");
            }
            for (double b : l.biases) {
                if (!std::isfinite(b)) throw InvalidInputError("mlp: non-finite bias");
            }
            expect = l.fan_out();
        }
    }

    bool same_parameters(const Mlp& o) const {
        if (input_dim != o.input_dim || layers.size() != o.layers.size()) return false;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            if (layers[k].weights != o.layers[k].weights) return false;
            if (layers[k].biases != o.layers[k].biases) return false;
            if (!(layers[k].activation == o.layers[k].activation)) return false;
        }
        return true;
    }
};

enum class LossKind { SquaredError, CrossEntropy };

struct Gradients {
    struct LayerGrads {
        Matrix weight_grads;
        std::vector<double> bias_grads;
    };
    std::vector<LayerGrads> layers;

    static Gradients zeros_like(const Mlp& net) {
        Gradients g;
        g.layers.reserve(net.layers.size());
        for (const auto& l : net.layers) {
            g.layers.push_back({Matrix(l.fan_out(), l.fan_in()),
                                std::vector<double>(l.fan_out(), 0.0)});
        }
        return g;
    }

    void check_matches(const Mlp& net) const {
        if (layers.size() != net.layers.size()) {
            throw ShapeError("gradients: layer count mismatch");
        }
        for (std::size_t k = 0; k < layers.size(); ++k) {
            if (!layers[k].weight_grads.same_shape(net.layers[k].weights) ||
                layers[k].bias_grads.size() != net.layers[k].biases.size()) {
                throw ShapeError("gradients: shape mismatch at layer " + std::to_string(k));
            }
        }
    }
};

struct TrainConfig {
    double learning_rate = 1.0;
    std::size_t iterations = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw ConfigError("train config: learning_rate must be positive");
        }
        if (iterations < 1) throw ConfigError("train config: iterations must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace detail {

inline void layer_forward(const Layer& l, std::span<const double> in,
                          std::vector<double>& out) {
    out.resize(l.fan_out());
    for (std::size_t j = 0; j < l.fan_out(); ++j) {
        out[j] = dot(l.weights.row(j), in.data(), l.fan_in()) + l.biases[j];
    }
    out = activate(l.activation, std::move(out));
}

} // namespace detail

/// Runs the network on one input; returns per-layer activation vectors,
/// final entry is the network output.
inline std::vector<std::vector<double>> forward(const Mlp& net,
                                                std::span<const double> input) {
    if (net.layers.empty()) throw ConfigError("forward: network has no layers");
    require_same_length(input.size(), net.input_dim, "forward input");
    std::vector<std::vector<double>> acts(net.layers.size());
    std::span<const double> cur = input;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        detail::layer_forward(net.layers[k], cur, acts[k]);
        cur = acts[k];
    }
    return acts;
}

/// Final-layer output only.
inline std::vector<double> forward_output(const Mlp& net, std::span<const double> input) {
    return forward(net, input).back();
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Guard inside the cross-entropy log; keeps ln finite, far below every
// test tolerance in the suite.
inline constexpr double kCrossEntropyEps = 1e-12;

inline void require_one_hot(const std::vector<double>& target) {
    std::size_t ones = 0;
    for (double t : target) {
        if (t == 1.0) {
            ++ones;
        } else if (t != 0.0) {
            throw InvalidInputError("cross-entropy target must be one-hot");
        }
    }
    if (ones != 1) throw InvalidInputError("cross-entropy target must be one-hot");
}

inline double loss(LossKind kind, const std::vector<double>& output,
                   const std::vector<double>& target) {
    require_same_length(output.size(), target.size(), "loss");
    switch (kind) {
    case LossKind::SquaredError: {
        double s = 0.0;
        for (std::size_t i = 0; i < output.size(); ++i) {
            const double d = output[i] - target[i];
            s += d * d;
        }
        return s;
    }
    case LossKind::CrossEntropy: {
        require_one_hot(target);
        double s = 0.0;
        for (std::size_t i = 0; i < output.size(); ++i) {
            if (target[i] != 0.0) s -= target[i] * std::log(output[i] + kCrossEntropyEps);
        }
        return s;
    }
    }
    throw InvalidInputError("loss: unknown kind");
}

// ---------------------------------------------------------------------------
// Backpropagation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_loss_pairing(const Mlp& net, LossKind kind) {
    const ActivationTag out = net.layers.back().activation.tag;
    if (kind == LossKind::CrossEntropy && out != ActivationTag::Softmax) {
        throw InvalidInputError("cross-entropy loss requires a softmax output layer");
    }
    if (kind == LossKind::SquaredError && out == ActivationTag::Softmax) {
        throw InvalidInputError("squared-error loss is not paired with softmax output");
    }
}

// Exact analytic gradients, written into `grads` (shape must match).
inline void backprop_into(const Mlp& net, std::span<const double> input,
                          const std::vector<double>& target, LossKind kind,
                          Gradients& grads) {
    check_loss_pairing(net, kind);
    const auto acts = forward(net, input);
    require_same_length(acts.back().size(), target.size(), "backprop target");
    if (kind == LossKind::CrossEntropy) require_one_hot(target);

    const std::size_t L = net.layers.size();
    const std::vector<double>& out = acts.back();

    // delta = dLoss/dz at the output layer.
    std::vector<double> delta(out.size());
    switch (net.layers.back().activation.tag) {
    case ActivationTag::Softmax:
        // softmax + cross-entropy collapses to (output - target); the
        // epsilon guard inside the log is ignored here, its effect is
        // O(eps) and sits far below the oracle tolerance.
        for (std::size_t i = 0; i < out.size(); ++i) delta[i] = out[i] - target[i];
        break;
    case ActivationTag::Sigmoid:
        for (std::size_t i = 0; i < out.size(); ++i) {
            delta[i] = 2.0 * (out[i] - target[i]) * out[i] * (1.0 - out[i]);
        }
        break;
    case ActivationTag::Linear:
        for (std::size_t i = 0; i < out.size(); ++i) {
            delta[i] = 2.0 * (out[i] - target[i]);
        }
        break;
    }

    for (std::size_t k = L; k-- > 0;) {
        const Layer& l = net.layers[k];
        std::span<const double> below =
            (k == 0) ? input : std::span<const double>(acts[k - 1]);

        Matrix& wg = grads.layers[k].weight_grads;
        std::vector<double>& bg = grads.layers[k].bias_grads;
        for (std::size_t j = 0; j < l.fan_out(); ++j) {
            double* row = wg.row(j);
            const double d = delta[j];
            for (std::size_t i = 0; i < l.fan_in(); ++i) row[i] = d * below[i];
            bg[j] = d;
        }

        if (k == 0) break;

        // delta for the layer below: (W^T delta) .* act'(z_below)
        std::vector<double> next(l.fan_in(), 0.0);
        for (std::size_t j = 0; j < l.fan_out(); ++j) {
            const double d = delta[j];
            const double* row = l.weights.row(j);
            for (std::size_t i = 0; i < l.fan_in(); ++i) next[i] += row[i] * d;
        }
        const Layer& lb = net.layers[k - 1];
        switch (lb.activation.tag) {
        case ActivationTag::Sigmoid:
            for (std::size_t i = 0; i < next.size(); ++i) {
                const double a = acts[k - 1][i];
                next[i] *= a * (1.0 - a);
            }
            break;
        case ActivationTag::Linear:
            break;
        case ActivationTag::Softmax:
            throw ConfigError("backprop: softmax on a hidden layer");
        }
        delta = std::move(next);
    }
}

} // namespace detail

/// Exact gradients of loss(kind, forward(net, input), target) with respect
/// to every weight and bias.
inline Gradients backprop(const Mlp& net, std::span<const double> input,
                          const std::vector<double>& target, LossKind kind) {
    Gradients g = Gradients::zeros_like(net);
    detail::backprop_into(net, input, target, kind, g);
    return g;
}

/// Central-difference gradient estimate, (loss(theta+h) - loss(theta-h)) / 2h
/// per parameter. Test oracle for backprop; O(parameters) loss evaluations,
/// intended for small networks only.
inline Gradients numerical_gradient(const Mlp& net, std::span<const double> input,
                                    const std::vector<double>& target, LossKind kind,
                                    double h = 1e-5) {
    if (!(h > 0.0)) throw ConfigError("numerical_gradient: h must be positive");
    detail::check_loss_pairing(net, kind);
    Gradients g = Gradients::zeros_like(net);
    Mlp probe = net;
    auto eval = [&]() { return loss(kind, forward_output(probe, input), target); };
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        auto diff_at = [&](double& theta, double& out) {
            const double saved = theta;
            theta = saved + h;
            const double up = eval();
            theta = saved - h;
            const double down = eval();
            theta = saved;
            out = (up - down) / (2.0 * h);
        };
        Layer& pl = probe.layers[k];
        for (std::size_t i = 0; i < pl.weights.data.size(); ++i) {
            diff_at(pl.weights.data[i], g.layers[k].weight_grads.data[i]);
        }
        for (std::size_t i = 0; i < pl.biases.size(); ++i) {
            diff_at(pl.biases[i], g.layers[k].bias_grads[i]);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// SGD
// ---------------------------------------------------------------------------

inline void sgd_step_in_place(Mlp& net, const Gradients& grads, double learning_rate) {
    if (!(learning_rate > 0.0)) throw ConfigError("sgd_step: learning_rate must be positive");
    grads.check_matches(net);
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        Layer& l = net.layers[k];
        const auto& g = grads.layers[k];
        // two explicit rounding points (mul, then sub) so theta' = theta - eta*g
        // is reproducible expression-for-expression by tests and callers
        for (std::size_t i = 0; i < l.weights.data.size(); ++i) {
            const double step = learning_rate * g.weight_grads.data[i];
            l.weights.data[i] -= step;
        }
        for (std::size_t i = 0; i < l.biases.size(); ++i) {
            const double step = learning_rate * g.bias_grads[i];
            l.biases[i] -= step;
        }
    }
}

/// theta' = theta - learning_rate * gradient; the input network is untouched.
inline Mlp sgd_step(const Mlp& net, const Gradients& grads, double learning_rate) {
    Mlp next = net;
    sgd_step_in_place(next, grads, learning_rate);
    return next;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Weight initialization schemes. InvSqrtFanIn is the default everywhere;
/// UnitUniform (weights uniform on [-1, 1]) is the era-typical alternative
/// reading of "random starting weights", exposed through config.
enum class WeightInit { InvSqrtFanIn, UnitUniform };

inline const char* weight_init_name(WeightInit w) {
    return w == WeightInit::UnitUniform ? "unit_uniform" : "inv_sqrt_fan_in";
}

inline WeightInit weight_init_from_name(const std::string& name) {
    if (name == "inv_sqrt_fan_in") return WeightInit::InvSqrtFanIn;
    if (name == "unit_uniform") return WeightInit::UnitUniform;
    throw ConfigError("unknown weight_init: " + name +
                      " (expected inv_sqrt_fan_in|unit_uniform)");
}

/// Seeded network construction: weights uniform on [-1/sqrt(fan_in),
/// +1/sqrt(fan_in)] (or [-1, 1] for UnitUniform) drawn in layer/row/column
/// order from one splitmix64 stream, biases zero. Same (sizes, activations,
/// seed, init) gives a bit-identical network.
inline Mlp init_network(const std::vector<std::size_t>& layer_sizes,
                        const std::vector<ActivationKind>& activations,
                        std::uint64_t seed,
                        WeightInit weight_init = WeightInit::InvSqrtFanIn) {
    if (layer_sizes.size() < 2) {
        throw ConfigError("init_network: need at least input and output sizes");
    }
    if (activations.size() != layer_sizes.size() - 1) {
        throw ConfigError("init_network: need one activation per layer");
    }
    for (std::size_t s : layer_sizes) {
        if (s == 0) throw ConfigError("init_network: zero layer size");
    }
    for (std::size_t k = 0; k + 1 < activations.size(); ++k) {
        if (activations[k].tag == ActivationTag::Softmax) {
            throw ConfigError("init_network: softmax is only permitted on the final layer");
        }
    }

    Mlp net;
    net.input_dim = layer_sizes.front();
    net.init_seed = seed;
    rng::Stream stream(seed);
    for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
        Layer l;
        const std::size_t fan_in = layer_sizes[k];
        const std::size_t fan_out = layer_sizes[k + 1];
        const double bound = weight_init == WeightInit::UnitUniform
                                 ? 1.0
                                 : 1.0 / std::sqrt(static_cast<double>(fan_in));
        l.weights = Matrix(fan_out, fan_in);
        for (double& w : l.weights.data) w = stream.next_in(-bound, bound);
        l.biases.assign(fan_out, 0.0);
        l.activation = activations[k];
        net.layers.push_back(std::move(l));
    }
    return net;
}

} // namespace qualproj
