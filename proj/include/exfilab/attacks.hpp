#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "exfilab/data.hpp"
#include "exfilab/network.hpp"
#include "exfilab/optimizer.hpp"
#include "exfilab/rng.hpp"
#include "exfilab/stego.hpp"
#include "exfilab/train.hpp"
#include "exfilab/weights_io.hpp"

namespace exfilab {

// ---------------------------------------------------------------- Transpose

struct TransposeConfig {
    uint32_t num_targets = 32;
    double lr_cls = 1e-4;
    double lr_mem = 1e-3;
    long epochs = 60;
    size_t batch_size = 32;
    uint64_t key_seed = 7;
    double key_noise_scale = 0.1;
    // memorization rate decays by `mem_decay_factor` every
    // `mem_decay_every_frac` of total epochs
    double mem_decay_factor = 0.5;
    double mem_decay_every_frac = 0.25;
    Activation rev_hidden = Activation::relu;
    Activation rev_output = Activation::identity;
    uint64_t seed = 1;

    void validate() const {
        require(num_targets >= 1, "transpose: num_targets must be >= 1");
        require(lr_cls > 0.0 && lr_mem >= 0.0, "transpose: rates must be positive");
        require(epochs >= 0, "transpose: epochs must be >= 0");
    }
};

// one_hot(label) + noise_scale * g(index), where g is a unit-norm
// pseudo-random vector fixed by (seed, index). The same key is rebuilt on
// the extraction side, so it must depend on nothing else.
inline Tensor key_vector(uint64_t index, uint16_t label, uint32_t classes, uint64_t seed,
                         double noise_scale) {
    require(label < classes, "key_vector: label out of range");
    Tensor key = Tensor::zeros({static_cast<size_t>(classes)});
    Rng rng = Rng::substream(seed, 0x4b4559 + index);  // "KEY"
    double norm = 0.0;
    std::vector<double> g(classes);
    for (auto& v : g) {
        v = rng.gaussian();
        norm += v * v;
    }
    norm = std::sqrt(std::max(norm, 1e-300));
    for (uint32_t j = 0; j < classes; ++j) key.data[j] = noise_scale * g[j] / norm;
    key.data[label] += 1.0;
    return key;
}

struct ReverseParams {
    std::vector<std::vector<double>> biases;
    std::vector<Activation> activations;
};

inline Tensor transpose_keys(const Dataset& ds, const std::vector<size_t>& target_indices,
                             uint64_t key_seed, double noise_scale) {
    Tensor keys = Tensor::zeros({target_indices.size(), static_cast<size_t>(ds.classes)});
    for (size_t r = 0; r < target_indices.size(); ++r) {
        Tensor k = key_vector(target_indices[r], ds.labels[target_indices[r]], ds.classes,
                              key_seed, noise_scale);
        std::copy(k.data.begin(), k.data.end(), keys.data.begin() + static_cast<long>(r * ds.classes));
    }
    return keys;
}

// Dual-task training: every step takes (a) a classification AdamW step on
// the forward network, then (b) a memorization AdamW step on the transposed
// view against the target images. Two optimizers, one shared weight storage.
// Targets are the first num_targets training images by index.
inline std::pair<Network, ReverseParams> transpose_train(const Network& net, const Dataset& train,
                                                         const TransposeConfig& cfg) {
    cfg.validate();
    require(train.size() >= cfg.num_targets, "transpose: fewer training images than targets");
    require_shape(net.input_dim() == train.pixels(), "transpose: input_dim != image pixels");
    require_shape(net.output_dim() == train.classes, "transpose: output_dim != class count");

    Network out = net.clone();
    const size_t L = out.num_layers();

    ReverseParams rev;
    rev.activations.assign(L, cfg.rev_hidden);
    rev.activations[L - 1] = cfg.rev_output;
    rev.biases.resize(L);
    for (size_t k = 0; k < L; ++k) rev.biases[k].assign(out.layers[L - 1 - k].in_dim(), 0.0);

    Network rev_net = transpose_network(out, rev.biases, rev.activations);

    std::vector<size_t> target_idx(cfg.num_targets);
    for (size_t i = 0; i < target_idx.size(); ++i) target_idx[i] = i;
    Tensor keys = transpose_keys(train, target_idx, cfg.key_seed, cfg.key_noise_scale);
    Tensor targets = train.batch(target_idx);

    OptimizerState cls_state = OptimizerState::for_network(out, AdamWConfig{});
    OptimizerState mem_state = OptimizerState::for_network(rev_net, AdamWConfig{});

    long step = 0;
    for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
        double mem_lr = cfg.lr_mem;
        if (cfg.mem_decay_every_frac > 0.0 && cfg.epochs > 0) {
            double frac = static_cast<double>(epoch) / static_cast<double>(cfg.epochs);
            mem_lr *= std::pow(cfg.mem_decay_factor, std::floor(frac / cfg.mem_decay_every_frac));
        }
        for (const auto& idx : make_batches(train.size(), cfg.batch_size, cfg.seed, epoch)) {
            Tensor x = train.batch(idx);
            std::vector<uint16_t> yb;
            yb.reserve(idx.size());
            for (size_t i : idx) yb.push_back(train.labels[i]);
            BackwardResult cls =
                backward(out, x, labels_tensor(yb), LossKind::softmax_cross_entropy);
            if (!std::isfinite(cls.loss))
                throw NumericError("transpose: classification loss diverged at step " +
                                   std::to_string(step));
            adamw_step(out, cls.grads, cls_state, cfg.lr_cls);

            if (cfg.lr_mem > 0.0) {
                BackwardResult mem =
                    backward(rev_net, keys, targets, LossKind::mean_squared_error);
                if (!std::isfinite(mem.loss))
                    throw NumericError("transpose: memorization loss diverged at step " +
                                       std::to_string(step));
                adamw_step(rev_net, mem.grads, mem_state, mem_lr);
            }
            ++step;
        }
    }

    // reverse biases live in the local view; hand the trained values back
    for (size_t k = 0; k < L; ++k) rev.biases[k] = rev_net.layers[k].bias;
    return {std::move(out), std::move(rev)};
}

// Forward pass of the transposed view over each key, reshaped to images and
// clamped to [0,1]. Pure function of (net, rev, keys).
inline Tensor transpose_reconstruct(const Network& net, const ReverseParams& rev,
                                    const Tensor& keys) {
    Network rev_net = transpose_network(net, rev.biases, rev.activations);
    Tensor out = forward(rev_net, keys);
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

// --------------------------------------------------------------------- DEC

enum class CodecKind { downsample_affine, linear_autoencoder };

inline const char* codec_name(CodecKind k) {
    return k == CodecKind::downsample_affine ? "downsample_affine" : "linear_autoencoder";
}

inline CodecKind codec_from_name(const std::string& s) {
    if (s == "downsample_affine") return CodecKind::downsample_affine;
    if (s == "linear_autoencoder") return CodecKind::linear_autoencoder;
    throw ArgumentError("unknown codec: " + s);
}

// Toy stand-ins for the learned compressor: downsample_affine area-resizes
// images to D pixels and maps [0,1] onto the quantizer's representable
// range; linear_autoencoder is an MSE-trained linear bottleneck whose codes
// clamp into that range.
struct DecCodec {
    CodecKind kind = CodecKind::downsample_affine;
    uint32_t latent_dim = 64;
    uint32_t image_h = 16, image_w = 16;
    uint32_t code_h = 8, code_w = 8;  // downsample grid (code_h * code_w == latent_dim)
    QuantizerConfig quant;
    std::vector<double> encoder;  // [D x P], linear_autoencoder only
    std::vector<double> decoder;  // [P x D]
};

namespace detail {

// Box/area resize in one dimension pair; each target cell averages the
// source pixels it overlaps, weighted by overlap area. Works for both
// down- and upsampling.
inline std::vector<double> area_resize(const std::vector<double>& src, uint32_t sh, uint32_t sw,
                                       uint32_t th, uint32_t tw) {
    std::vector<double> dst(static_cast<size_t>(th) * tw, 0.0);
    const double ry = static_cast<double>(sh) / th;
    const double rx = static_cast<double>(sw) / tw;
    for (uint32_t r = 0; r < th; ++r) {
        double y0 = r * ry, y1 = (r + 1) * ry;
        for (uint32_t c = 0; c < tw; ++c) {
            double x0 = c * rx, x1 = (c + 1) * rx;
            double acc = 0.0, area = 0.0;
            for (uint32_t sy = static_cast<uint32_t>(y0); sy < sh && sy < y1; ++sy) {
                double wy = std::min<double>(y1, sy + 1.0) - std::max<double>(y0, sy);
                if (wy <= 0.0) continue;
                for (uint32_t sx = static_cast<uint32_t>(x0); sx < sw && sx < x1; ++sx) {
                    double wx = std::min<double>(x1, sx + 1.0) - std::max<double>(x0, sx);
                    if (wx <= 0.0) continue;
                    acc += wy * wx * src[static_cast<size_t>(sy) * sw + sx];
                    area += wy * wx;
                }
            }
            dst[static_cast<size_t>(r) * tw + c] = area > 0.0 ? acc / area : 0.0;
        }
    }
    return dst;
}

inline std::pair<uint32_t, uint32_t> code_grid(uint32_t latent_dim) {
    auto h = static_cast<uint32_t>(std::sqrt(static_cast<double>(latent_dim)));
    while (h > 1 && latent_dim % h != 0) --h;
    return {h, latent_dim / h};
}

}  // namespace detail

inline DecCodec make_downsample_codec(uint32_t latent_dim, uint32_t image_h, uint32_t image_w,
                                      QuantizerConfig quant = {}) {
    require(latent_dim >= 1, "codec: latent_dim must be >= 1");
    require(latent_dim <= image_h * image_w,
            "codec: latent_dim " + std::to_string(latent_dim) + " exceeds pixel count " +
                std::to_string(image_h * image_w));
    quant.validate();
    DecCodec c;
    c.kind = CodecKind::downsample_affine;
    c.latent_dim = latent_dim;
    c.image_h = image_h;
    c.image_w = image_w;
    auto [gh, gw] = detail::code_grid(latent_dim);
    c.code_h = gh;
    c.code_w = gw;
    c.quant = quant;
    return c;
}

// Linear bottleneck trained by MSE on external data (the attacker's own
// corpus, not the protected set). Encoder and decoder are plain matrices.
inline DecCodec train_linear_autoencoder(const Dataset& external, uint32_t latent_dim,
                                         QuantizerConfig quant = {}, long epochs = 300,
                                         double lr = 3e-3, uint64_t seed = 99) {
    require(external.size() > 0, "codec: empty external data");
    require(latent_dim >= 1, "codec: latent_dim must be >= 1");
    require(latent_dim <= external.pixels(),
            "codec: latent_dim " + std::to_string(latent_dim) + " exceeds pixel count " +
                std::to_string(external.pixels()));
    quant.validate();
    const size_t P = external.pixels();

    Rng rng = Rng::substream(seed, 0x4145);  // "AE"
    Network ae = make_mlp({P, latent_dim, P}, Activation::identity, Activation::identity, rng);
    OptimizerState state = OptimizerState::for_network(ae, AdamWConfig{});
    for (long epoch = 0; epoch < epochs; ++epoch) {
        for (const auto& idx : make_batches(external.size(), 64, seed, epoch)) {
            Tensor x = external.batch(idx);
            BackwardResult back = backward(ae, x, x, LossKind::mean_squared_error);
            if (!std::isfinite(back.loss))
                throw NumericError("codec: autoencoder loss diverged");
            adamw_step(ae, back.grads, state, lr);
        }
    }

    DecCodec c;
    c.kind = CodecKind::linear_autoencoder;
    c.latent_dim = latent_dim;
    c.image_h = external.height;
    c.image_w = external.width;
    c.quant = quant;
    c.encoder.resize(static_cast<size_t>(latent_dim) * P);
    c.decoder.resize(static_cast<size_t>(P) * latent_dim);
    for (uint32_t o = 0; o < latent_dim; ++o)
        for (size_t i = 0; i < P; ++i) c.encoder[o * P + i] = ae.layers[0].w(o, i);
    for (size_t o = 0; o < P; ++o)
        for (uint32_t i = 0; i < latent_dim; ++i) c.decoder[o * latent_dim + i] = ae.layers[1].w(o, i);
    return c;
}

// images [n x H*W] in [0,1] -> latents [n x D] in [min_val, max_val].
inline Tensor dec_encode(const Tensor& images, const DecCodec& codec) {
    require_shape(images.dims.size() == 2 &&
                      images.dims[1] == static_cast<size_t>(codec.image_h) * codec.image_w,
                  "dec_encode: image dims mismatch");
    const size_t n = images.dims[0], P = images.dims[1];
    const double lo = codec.quant.min_val(), hi = codec.quant.max_val();
    Tensor latents = Tensor::zeros({n, codec.latent_dim});
    for (size_t r = 0; r < n; ++r) {
        std::vector<double> img(images.data.begin() + static_cast<long>(r * P),
                                images.data.begin() + static_cast<long>((r + 1) * P));
        if (codec.kind == CodecKind::downsample_affine) {
            std::vector<double> small =
                detail::area_resize(img, codec.image_h, codec.image_w, codec.code_h, codec.code_w);
            for (uint32_t j = 0; j < codec.latent_dim; ++j)
                latents.at(r, j) = lo + small[j] * (hi - lo);
        } else {
            for (uint32_t j = 0; j < codec.latent_dim; ++j) {
                double acc = 0.0;
                const double* row = codec.encoder.data() + static_cast<size_t>(j) * P;
                for (size_t i = 0; i < P; ++i) acc += row[i] * img[i];
                latents.at(r, j) = std::clamp(acc, lo, hi);
            }
        }
    }
    return latents;
}

// latents [n x D] -> images [n x H*W] clamped to [0,1].
inline Tensor dec_decode(const Tensor& latents, const DecCodec& codec) {
    require_shape(latents.dims.size() == 2 && latents.dims[1] == codec.latent_dim,
                  "dec_decode: latent dims mismatch");
    const size_t n = latents.dims[0];
    const size_t P = static_cast<size_t>(codec.image_h) * codec.image_w;
    const double lo = codec.quant.min_val(), hi = codec.quant.max_val();
    Tensor images = Tensor::zeros({n, P});
    for (size_t r = 0; r < n; ++r) {
        if (codec.kind == CodecKind::downsample_affine) {
            std::vector<double> small(codec.latent_dim);
            for (uint32_t j = 0; j < codec.latent_dim; ++j)
                small[j] = (latents.at(r, j) - lo) / (hi - lo);
            std::vector<double> img =
                detail::area_resize(small, codec.code_h, codec.code_w, codec.image_h, codec.image_w);
            for (size_t i = 0; i < P; ++i) images.at(r, i) = std::clamp(img[i], 0.0, 1.0);
        } else {
            for (size_t i = 0; i < P; ++i) {
                double acc = 0.0;
                const double* row = codec.decoder.data() + i * codec.latent_dim;
                for (uint32_t j = 0; j < codec.latent_dim; ++j) acc += row[j] * latents.at(r, j);
                images.at(r, i) = std::clamp(acc, 0.0, 1.0);
            }
        }
    }
    return images;
}

// Encode the targets, quantize, and hide the payload in the exported
// archive of the utility network. Returns the stego'd archive.
inline WeightArchive dec_attack_export(const Network& net, const Tensor& images,
                                       const DecCodec& codec, const QuantizerConfig& qcfg,
                                       uint64_t* clamp_count = nullptr) {
    WeightArchive archive = archive_from_network(net);
    Tensor latents = dec_encode(images, codec);
    require(images.dims[0] <= 0xffff && codec.latent_dim <= 0xffff,
            "dec_attack_export: payload header fields exceed 16 bits");
    StegoPayload payload;
    payload.count = static_cast<uint16_t>(images.dims[0]);
    payload.latent_dim = static_cast<uint16_t>(codec.latent_dim);
    payload.codes.reserve(latents.data.size());
    for (double v : latents.data) payload.codes.push_back(quantize(v, qcfg, clamp_count));
    return embed(archive, payload);
}

}  // namespace exfilab
