#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "qualproj/mlp.hpp"
#include "qualproj/rng.hpp"

// Finite-difference verification suite: backprop against the central
// difference oracle over a spread of random small networks, both loss
// kinds, beta in {0, 5}.

namespace qualproj {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int cases = 0;

    bool passed() const { return cases >= 20 && max_rel_err < 1e-4; }
};

namespace detail {

inline double grad_rel_err(double a, double n) {
    return std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n));
}

inline Mlp gradcheck_net(const std::vector<std::size_t>& sizes,
                         const std::vector<ActivationKind>& acts, std::uint64_t seed) {
    Mlp net;
    net.input_dim = sizes.front();
    rng::Stream stream(seed);
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        Layer l;
        l.weights = Matrix(sizes[k + 1], sizes[k]);
        for (double& w : l.weights.data) w = stream.next_in(-1.5, 1.5);
        l.biases.resize(sizes[k + 1]);
        for (double& b : l.biases) b = stream.next_in(-0.5, 0.5);
        l.activation = acts[k];
        net.layers.push_back(std::move(l));
    }
    return net;
}

} // namespace detail

inline GradCheckResult run_gradient_check(int trials = 12, double h = 1e-5) {
    GradCheckResult result;
    for (std::uint64_t trial = 0; trial < std::uint64_t(trials); ++trial) {
        for (double beta : {0.0, 5.0}) {
            rng::Stream meta(7000 + trial * 31 + std::uint64_t(beta));
            const std::size_t in = 1 + meta.next() % 8;
            const std::size_t hid = 1 + meta.next() % 6;
            const std::size_t out = 1 + meta.next() % 4;
            const bool use_ce = trial % 2 == 0;

            const auto out_act =
                use_ce ? ActivationKind::softmax() : ActivationKind::biased_sigmoid(beta);
            const Mlp net = detail::gradcheck_net(
                {in, hid, out}, {ActivationKind::biased_sigmoid(beta), out_act},
                8000 + trial * 17 + std::uint64_t(beta));

            std::vector<double> input(in);
            rng::Stream in_rng(9000 + trial);
            for (double& v : input) v = in_rng.next_in(-1.0, 1.0);

            std::vector<double> target(out, 0.0);
            if (use_ce) {
                target[trial % out] = 1.0;
            } else {
                rng::Stream t_rng(9500 + trial);
                for (double& v : target) v = t_rng.next_unit();
            }

            const LossKind kind = use_ce ? LossKind::CrossEntropy : LossKind::SquaredError;
            const Gradients analytic = backprop(net, input, target, kind);
            const Gradients numeric = numerical_gradient(net, input, target, kind, h);
            for (std::size_t k = 0; k < analytic.layers.size(); ++k) {
                const auto& aw = analytic.layers[k].weight_grads.data;
                const auto& nw = numeric.layers[k].weight_grads.data;
                for (std::size_t i = 0; i < aw.size(); ++i) {
                    result.max_rel_err =
                        std::max(result.max_rel_err, detail::grad_rel_err(aw[i], nw[i]));
                }
                const auto& ab = analytic.layers[k].bias_grads;
                const auto& nb = numeric.layers[k].bias_grads;
                for (std::size_t i = 0; i < ab.size(); ++i) {
                    result.max_rel_err =
                        std::max(result.max_rel_err, detail::grad_rel_err(ab[i], nb[i]));
                }
            }
            ++result.cases;
        }
    }
    return result;
}

} // namespace qualproj
