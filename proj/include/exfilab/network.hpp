#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "exfilab/common.hpp"
#include "exfilab/rng.hpp"
#include "exfilab/tensor.hpp"

namespace exfilab {

enum class Activation { relu, sigmoid, identity };

enum class LossKind { softmax_cross_entropy, mean_squared_error };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        default: return "identity";
    }
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "identity") return Activation::identity;
    throw ArgumentError("unknown activation: " + s);
}

// Fully connected layer. Weight storage is a shared row-major [rows x cols]
// buffer; a layer built by transpose_network() aliases the same buffer with
// `transposed` set, so the logical [out x in] matrix reads the storage
// transposed and an update through either view is seen by both.
struct DenseLayer {
    std::shared_ptr<std::vector<double>> weights;
    size_t rows = 0, cols = 0;
    bool transposed = false;
    std::vector<double> bias;
    Activation act = Activation::identity;

    size_t out_dim() const { return transposed ? cols : rows; }
    size_t in_dim() const { return transposed ? rows : cols; }
    size_t weight_count() const { return rows * cols; }

    double w(size_t o, size_t i) const {
        return transposed ? (*weights)[i * cols + o] : (*weights)[o * cols + i];
    }
    double& w(size_t o, size_t i) {
        return transposed ? (*weights)[i * cols + o] : (*weights)[o * cols + i];
    }
};

struct Network {
    std::vector<DenseLayer> layers;

    size_t num_layers() const { return layers.size(); }
    size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& l : layers) n += l.weight_count() + l.bias.size();
        return n;
    }

    // Deep copy: the clone owns fresh weight storage.
    Network clone() const {
        Network c;
        c.layers.reserve(layers.size());
        for (const auto& l : layers) {
            DenseLayer d = l;
            d.weights = std::make_shared<std::vector<double>>(*l.weights);
            c.layers.push_back(std::move(d));
        }
        return c;
    }

    void validate() const {
        for (size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            require_shape(l.weights && l.rows * l.cols == l.weights->size(),
                          "layer " + std::to_string(i + 1) + ": weight storage size mismatch");
            require_shape(l.bias.size() == l.out_dim(),
                          "layer " + std::to_string(i + 1) + ": bias length != out_dim");
            if (i > 0)
                require_shape(l.in_dim() == layers[i - 1].out_dim(),
                              "layer " + std::to_string(i + 1) + ": in_dim does not chain");
        }
    }
};

// widths = {input, hidden..., output}; weights get He init for relu layers
// and Xavier otherwise, biases start at zero.
inline Network make_mlp(const std::vector<size_t>& widths, Activation hidden, Activation output,
                        Rng& rng) {
    require(widths.size() >= 2, "make_mlp: need at least input and output widths");
    Network net;
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
        DenseLayer l;
        l.rows = widths[i + 1];
        l.cols = widths[i];
        l.act = (i + 2 == widths.size()) ? output : hidden;
        double scale = (l.act == Activation::relu) ? std::sqrt(2.0 / static_cast<double>(l.cols))
                                                   : std::sqrt(1.0 / static_cast<double>(l.cols));
        l.weights = std::make_shared<std::vector<double>>(l.rows * l.cols);
        for (double& w : *l.weights) w = scale * rng.gaussian();
        l.bias.assign(l.rows, 0.0);
        net.layers.push_back(std::move(l));
    }
    return net;
}

inline double apply_activation(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
        default: return z;
    }
}

// Derivative w.r.t. the pre-activation, expressed through z and act(z).
inline double activation_grad(Activation a, double z, double y) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return y * (1.0 - y);
        default: return 1.0;
    }
}

// One layer: act(x W^T + b) for a [B x in] batch.
inline Tensor layer_forward(const DenseLayer& l, const Tensor& x) {
    require_shape(x.dims.size() == 2 && x.dims[1] == l.in_dim(),
                  "layer_forward: batch dims " + dims_str(x.dims) + " do not match in_dim " +
                      std::to_string(l.in_dim()));
    const size_t b = x.dims[0], out = l.out_dim(), in = l.in_dim();
    Tensor y = Tensor::zeros({b, out});
    for (size_t r = 0; r < b; ++r) {
        const double* xr = x.data.data() + r * in;
        double* yr = y.data.data() + r * out;
        for (size_t o = 0; o < out; ++o) {
            double acc = l.bias[o];
            for (size_t i = 0; i < in; ++i) acc += l.w(o, i) * xr[i];
            yr[o] = apply_activation(l.act, acc);
        }
    }
    return y;
}

struct ForwardTrace {
    std::vector<Tensor> pre;   // pre-activations per layer
    std::vector<Tensor> post;  // post[0] = input, post[l] = activations of layer l
};

inline ForwardTrace forward_trace(const Network& net, const Tensor& batch) {
    require(!net.layers.empty(), "forward: empty network");
    require_shape(batch.dims.size() == 2, "forward: batch must be [B x input_dim]");
    require(batch.dims[0] > 0, "forward: empty batch");
    require_shape(batch.dims[1] == net.input_dim(),
                  "forward: batch dims " + dims_str(batch.dims) + " do not match input_dim " +
                      std::to_string(net.input_dim()));
    ForwardTrace t;
    t.post.push_back(batch);
    const size_t b = batch.dims[0];
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const DenseLayer& l = net.layers[li];
        const Tensor& x = t.post.back();
        const size_t out = l.out_dim(), in = l.in_dim();
        Tensor z = Tensor::zeros({b, out});
        Tensor y = Tensor::zeros({b, out});
        for (size_t r = 0; r < b; ++r) {
            const double* xr = x.data.data() + r * in;
            double* zr = z.data.data() + r * out;
            double* yr = y.data.data() + r * out;
            for (size_t o = 0; o < out; ++o) {
                double acc = l.bias[o];
                for (size_t i = 0; i < in; ++i) acc += l.w(o, i) * xr[i];
                zr[o] = acc;
                yr[o] = apply_activation(l.act, acc);
            }
        }
        if (!y.all_finite())
            throw NumericError("forward: non-finite values in layer " + std::to_string(li + 1));
        t.pre.push_back(std::move(z));
        t.post.push_back(std::move(y));
    }
    return t;
}

inline Tensor forward(const Network& net, const Tensor& batch) {
    return forward_trace(net, batch).post.back();
}

// Per-layer gradients in the layer's logical [out x in] layout.
struct Gradients {
    std::vector<std::vector<double>> weight;
    std::vector<std::vector<double>> bias;
};

struct BackwardResult {
    double loss = 0.0;
    Gradients grads;
};

namespace detail {

inline double softmax_ce_loss_and_grad(const Tensor& logits, const Tensor& labels, Tensor& dout) {
    const size_t b = logits.dims[0], k = logits.dims[1];
    require_shape(labels.size() == b, "cross-entropy: labels length must equal batch size");
    double loss = 0.0;
    for (size_t r = 0; r < b; ++r) {
        const double* zr = logits.data.data() + r * k;
        double* gr = dout.data.data() + r * k;
        auto label = static_cast<size_t>(labels.data[r]);
        require(label < k, "cross-entropy: label out of range");
        double zmax = *std::max_element(zr, zr + k);
        double sum = 0.0;
        for (size_t j = 0; j < k; ++j) sum += std::exp(zr[j] - zmax);
        double logsum = zmax + std::log(sum);
        loss += logsum - zr[label];
        for (size_t j = 0; j < k; ++j) {
            double p = std::exp(zr[j] - logsum);
            gr[j] = (p - (j == label ? 1.0 : 0.0)) / static_cast<double>(b);
        }
    }
    return loss / static_cast<double>(b);
}

inline double mse_loss_and_grad(const Tensor& out, const Tensor& targets, Tensor& dout) {
    require_shape(targets.data.size() == out.data.size(), "mse: target dims must match output");
    const double n = static_cast<double>(out.data.size());
    double loss = 0.0;
    for (size_t i = 0; i < out.data.size(); ++i) {
        double d = out.data[i] - targets.data[i];
        loss += d * d;
        dout.data[i] = 2.0 * d / n;
    }
    return loss / n;
}

}  // namespace detail

// Manual backprop. For softmax_cross_entropy the network output is treated as
// logits (softmax is folded into the loss); targets then hold integer labels.
// For mean_squared_error the loss is the mean over all B*out elements.
inline BackwardResult backward(const Network& net, const Tensor& batch, const Tensor& targets,
                               LossKind loss) {
    ForwardTrace t = forward_trace(net, batch);
    const Tensor& out = t.post.back();
    const size_t b = batch.dims[0];
    const size_t L = net.layers.size();

    BackwardResult res;
    Tensor dpost = Tensor::zeros(out.dims);  // dL/d(activations of current layer)
    if (loss == LossKind::softmax_cross_entropy)
        res.loss = detail::softmax_ce_loss_and_grad(out, targets, dpost);
    else
        res.loss = detail::mse_loss_and_grad(out, targets, dpost);

    res.grads.weight.resize(L);
    res.grads.bias.resize(L);
    for (size_t li = L; li-- > 0;) {
        const DenseLayer& l = net.layers[li];
        const size_t out_d = l.out_dim(), in_d = l.in_dim();
        const Tensor& z = t.pre[li];
        const Tensor& y = t.post[li + 1];
        const Tensor& x = t.post[li];

        // dL/dz = dL/dy * act'(z)
        Tensor dz = Tensor::zeros({b, out_d});
        for (size_t i = 0; i < dz.data.size(); ++i)
            dz.data[i] = dpost.data[i] * activation_grad(l.act, z.data[i], y.data[i]);

        std::vector<double>& dw = res.grads.weight[li];
        std::vector<double>& db = res.grads.bias[li];
        dw.assign(out_d * in_d, 0.0);
        db.assign(out_d, 0.0);
        for (size_t r = 0; r < b; ++r) {
            const double* dzr = dz.data.data() + r * out_d;
            const double* xr = x.data.data() + r * in_d;
            for (size_t o = 0; o < out_d; ++o) {
                db[o] += dzr[o];
                double g = dzr[o];
                double* dwo = dw.data() + o * in_d;
                for (size_t i = 0; i < in_d; ++i) dwo[i] += g * xr[i];
            }
        }

        if (li > 0) {
            Tensor dprev = Tensor::zeros({b, in_d});
            for (size_t r = 0; r < b; ++r) {
                const double* dzr = dz.data.data() + r * out_d;
                double* dpr = dprev.data.data() + r * in_d;
                for (size_t o = 0; o < out_d; ++o) {
                    double g = dzr[o];
                    for (size_t i = 0; i < in_d; ++i) dpr[i] += g * l.w(o, i);
                }
            }
            dpost = std::move(dprev);
        }
    }
    return res;
}

// Worst relative error between analytic gradients and central differences,
// with denominator max(|analytic|, |numeric|, 1e-12). Test oracle; O(P) loss
// evaluations.
inline double grad_check(const Network& net, const Tensor& batch, const Tensor& targets,
                         LossKind loss, double eps) {
    require(eps > 0.0, "grad_check: eps must be > 0");
    Network work = net.clone();
    BackwardResult analytic = backward(work, batch, targets, loss);
    auto loss_at = [&]() { return backward(work, batch, targets, loss).loss; };

    double worst = 0.0;
    auto check = [&](double& param, double a) {
        double orig = param;
        param = orig + eps;
        double lp = loss_at();
        param = orig - eps;
        double lm = loss_at();
        param = orig;
        double n = (lp - lm) / (2.0 * eps);
        double denom = std::max({std::fabs(a), std::fabs(n), 1e-12});
        worst = std::max(worst, std::fabs(a - n) / denom);
    };

    for (size_t li = 0; li < work.layers.size(); ++li) {
        DenseLayer& l = work.layers[li];
        const size_t out_d = l.out_dim(), in_d = l.in_dim();
        for (size_t o = 0; o < out_d; ++o)
            for (size_t i = 0; i < in_d; ++i) check(l.w(o, i), analytic.grads.weight[li][o * in_d + i]);
        for (size_t o = 0; o < out_d; ++o) check(l.bias[o], analytic.grads.bias[li][o]);
    }
    return worst;
}

// Weight-shared reverse view: layer k of the result aliases the transpose of
// original layer L+1-k's weight matrix and carries its own bias/activation.
// Dense layers transpose exactly; any future non-dense layer kind must be
// rejected here with an unsupported-layer error.
inline Network transpose_network(const Network& net,
                                 const std::vector<std::vector<double>>& reverse_biases,
                                 const std::vector<Activation>& reverse_activations) {
    const size_t L = net.layers.size();
    require(L > 0, "transpose_network: empty network");
    require_shape(reverse_biases.size() == L, "transpose_network: need one reverse bias per layer");
    require_shape(reverse_activations.size() == L,
                  "transpose_network: need one reverse activation per layer");
    Network rev;
    rev.layers.reserve(L);
    for (size_t k = 0; k < L; ++k) {
        const DenseLayer& src = net.layers[L - 1 - k];
        DenseLayer d;
        d.weights = src.weights;  // shared storage
        d.rows = src.rows;
        d.cols = src.cols;
        d.transposed = !src.transposed;
        d.act = reverse_activations[k];
        require_shape(reverse_biases[k].size() == d.out_dim(),
                      "transpose_network: reverse bias " + std::to_string(k + 1) +
                          " length != " + std::to_string(d.out_dim()));
        d.bias = reverse_biases[k];
        rev.layers.push_back(std::move(d));
    }
    return rev;
}

}  // namespace exfilab
