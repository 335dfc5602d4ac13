#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "exfilab/common.hpp"
#include "exfilab/network.hpp"

namespace exfilab {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled, scaled by the layer rate
};

// Per-parameter AdamW moments, laid out like the network's logical parameters.
// A transposed view of a network gets its own state (two optimizers, two
// moment sets, one shared weight storage).
struct OptimizerState {
    AdamWConfig cfg;
    long step = 0;
    std::vector<std::vector<double>> m_w, v_w, m_b, v_b;

    static OptimizerState for_network(const Network& net, AdamWConfig cfg = {}) {
        OptimizerState s;
        s.cfg = cfg;
        const size_t L = net.layers.size();
        s.m_w.resize(L);
        s.v_w.resize(L);
        s.m_b.resize(L);
        s.v_b.resize(L);
        for (size_t l = 0; l < L; ++l) {
            s.m_w[l].assign(net.layers[l].weight_count(), 0.0);
            s.v_w[l].assign(net.layers[l].weight_count(), 0.0);
            s.m_b[l].assign(net.layers[l].bias.size(), 0.0);
            s.v_b[l].assign(net.layers[l].bias.size(), 0.0);
        }
        return s;
    }
};

namespace detail {

inline void check_grads_finite(const Gradients& grads) {
    for (const auto& g : grads.weight)
        for (double v : g)
            if (!std::isfinite(v)) throw NumericError("optimizer: non-finite weight gradient");
    for (const auto& g : grads.bias)
        for (double v : g)
            if (!std::isfinite(v)) throw NumericError("optimizer: non-finite bias gradient");
}

}  // namespace detail

// AdamW with a per-layer rate vector; a layer's weight and bias share its rate.
// m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  bias-corrected mhat, vhat;
// theta <- theta - eta_l (mhat / (sqrt(vhat) + eps) + lambda theta).
inline void adamw_step(Network& net, const Gradients& grads, OptimizerState& state,
                       const std::vector<double>& rates) {
    const size_t L = net.layers.size();
    require(rates.size() == L, "adamw_step: need one rate per layer");
    for (double r : rates) require(r > 0.0, "adamw_step: rate must be > 0");
    require(grads.weight.size() == L && grads.bias.size() == L,
            "adamw_step: gradient layer count mismatch");
    detail::check_grads_finite(grads);

    state.step += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double lambda = state.cfg.weight_decay;

    for (size_t li = 0; li < L; ++li) {
        DenseLayer& l = net.layers[li];
        const double eta = rates[li];
        const size_t out_d = l.out_dim(), in_d = l.in_dim();
        require(grads.weight[li].size() == out_d * in_d && grads.bias[li].size() == out_d,
                "adamw_step: gradient dims mismatch at layer " + std::to_string(li + 1));

        auto update = [&](double& theta, double g, double& m, double& v) {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            double mhat = m / corr1;
            double vhat = v / corr2;
            theta -= eta * (mhat / (std::sqrt(vhat) + state.cfg.eps) + lambda * theta);
        };

        for (size_t o = 0; o < out_d; ++o) {
            for (size_t i = 0; i < in_d; ++i) {
                size_t k = o * in_d + i;
                update(l.w(o, i), grads.weight[li][k], state.m_w[li][k], state.v_w[li][k]);
            }
            update(l.bias[o], grads.bias[li][o], state.m_b[li][o], state.v_b[li][o]);
        }
    }
}

// Plain gradient step, with the optional L2 term folded into the update:
// theta <- theta - eta (g + lambda theta).
inline void sgd_step(Network& net, const Gradients& grads, double eta, double lambda) {
    require(eta >= 0.0, "sgd_step: eta must be >= 0");
    require(lambda >= 0.0, "sgd_step: lambda must be >= 0");
    const size_t L = net.layers.size();
    require(grads.weight.size() == L && grads.bias.size() == L,
            "sgd_step: gradient layer count mismatch");
    detail::check_grads_finite(grads);
    for (size_t li = 0; li < L; ++li) {
        DenseLayer& l = net.layers[li];
        const size_t out_d = l.out_dim(), in_d = l.in_dim();
        for (size_t o = 0; o < out_d; ++o) {
            for (size_t i = 0; i < in_d; ++i) {
                double& w = l.w(o, i);
                w -= eta * (grads.weight[li][o * in_d + i] + lambda * w);
            }
            double& b = l.bias[o];
            b -= eta * (grads.bias[li][o] + lambda * b);
        }
    }
}

// Variant of adamw_step that broadcasts one rate to all layers.
inline void adamw_step(Network& net, const Gradients& grads, OptimizerState& state, double rate) {
    adamw_step(net, grads, state, std::vector<double>(net.layers.size(), rate));
}

// Per-layer-rate variant of sgd_step, for layer-wise schedules in sgd mode.
inline void sgd_step(Network& net, const Gradients& grads, const std::vector<double>& rates,
                     double lambda) {
    require(rates.size() == net.layers.size(), "sgd_step: need one rate per layer");
    require(lambda >= 0.0, "sgd_step: lambda must be >= 0");
    detail::check_grads_finite(grads);
    for (size_t li = 0; li < net.layers.size(); ++li) {
        DenseLayer& l = net.layers[li];
        const double eta = rates[li];
        require(eta >= 0.0, "sgd_step: eta must be >= 0");
        const size_t out_d = l.out_dim(), in_d = l.in_dim();
        for (size_t o = 0; o < out_d; ++o) {
            for (size_t i = 0; i < in_d; ++i) {
                double& w = l.w(o, i);
                w -= eta * (grads.weight[li][o * in_d + i] + lambda * w);
            }
            double& b = l.bias[o];
            b -= eta * (grads.bias[li][o] + lambda * b);
        }
    }
}

}  // namespace exfilab
