#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "exfilab/data.hpp"
#include "exfilab/metrics.hpp"
#include "exfilab/network.hpp"
#include "exfilab/optimizer.hpp"
#include "exfilab/rng.hpp"

namespace exfilab {

inline Tensor labels_tensor(const std::vector<uint16_t>& labels) {
    Tensor t = Tensor::zeros({labels.size()});
    for (size_t i = 0; i < labels.size(); ++i) t.data[i] = labels[i];
    return t;
}

inline Tensor softmax_rows(const Tensor& logits) {
    Tensor p = logits;
    const size_t b = logits.dims[0], k = logits.dims[1];
    for (size_t r = 0; r < b; ++r) {
        double* row = p.data.data() + r * k;
        double zmax = row[0];
        for (size_t j = 1; j < k; ++j) zmax = std::max(zmax, row[j]);
        double sum = 0.0;
        for (size_t j = 0; j < k; ++j) {
            row[j] = std::exp(row[j] - zmax);
            sum += row[j];
        }
        for (size_t j = 0; j < k; ++j) row[j] /= sum;
    }
    return p;
}

// Full-set logits in fixed order (batched to bound the working set).
inline Tensor network_logits(const Network& net, const Dataset& ds, size_t eval_batch = 256) {
    Tensor logits = Tensor::zeros({ds.size(), net.output_dim()});
    std::vector<size_t> idx;
    for (size_t start = 0; start < ds.size(); start += eval_batch) {
        size_t stop = std::min(ds.size(), start + eval_batch);
        idx.clear();
        for (size_t i = start; i < stop; ++i) idx.push_back(i);
        Tensor out = forward(net, ds.batch(idx));
        std::copy(out.data.begin(), out.data.end(),
                  logits.data.begin() + static_cast<long>(start * net.output_dim()));
    }
    return logits;
}

inline EvalResult evaluate_classifier(const Network& net, const Dataset& ds) {
    require(ds.size() > 0, "evaluate: empty dataset");
    Tensor logits = network_logits(net, ds);
    EvalResult res = macro_auc_detailed(softmax_rows(logits), ds.labels);
    res.accuracy = accuracy(logits, ds.labels);
    return res;
}

struct TrainConfig {
    long epochs = 60;
    size_t batch_size = 32;
    double lr = 1e-4;
    double weight_decay = 0.0;
    bool use_adamw = true;
    uint64_t seed = 1;
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean per-batch loss per epoch
    long steps = 0;
};

// Deterministic per-epoch reshuffle from substreams of (seed, epoch).
inline std::vector<std::vector<size_t>> make_batches(size_t n, size_t batch_size, uint64_t seed,
                                                     long epoch) {
    require(batch_size >= 1, "train: batch_size must be >= 1");
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng::substream(seed, 0x5348 + static_cast<uint64_t>(epoch));
    rng.shuffle(order);
    std::vector<std::vector<size_t>> batches;
    for (size_t start = 0; start < n; start += batch_size) {
        size_t stop = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<long>(start),
                             order.begin() + static_cast<long>(stop));
    }
    return batches;
}

// Cross-entropy training of a classifier on the utility task.
inline TrainResult train_classifier(Network& net, const Dataset& train, const TrainConfig& cfg) {
    require(train.size() > 0, "train: empty dataset");
    require_shape(net.input_dim() == train.pixels(), "train: network input_dim != image pixels");
    TrainResult result;
    OptimizerState state = OptimizerState::for_network(net, AdamWConfig{});
    state.cfg.weight_decay = cfg.weight_decay;
    for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        size_t batches = 0;
        for (const auto& idx : make_batches(train.size(), cfg.batch_size, cfg.seed, epoch)) {
            Tensor x = train.batch(idx);
            std::vector<uint16_t> yb;
            yb.reserve(idx.size());
            for (size_t i : idx) yb.push_back(train.labels[i]);
            BackwardResult back =
                backward(net, x, labels_tensor(yb), LossKind::softmax_cross_entropy);
            if (!std::isfinite(back.loss))
                throw NumericError("train: loss diverged at step " + std::to_string(result.steps));
            if (cfg.use_adamw)
                adamw_step(net, back.grads, state, cfg.lr);
            else
                sgd_step(net, back.grads, cfg.lr, cfg.weight_decay);
            loss_sum += back.loss;
            ++batches;
            ++result.steps;
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    }
    return result;
}

}  // namespace exfilab
