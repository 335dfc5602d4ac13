#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "exfilab/data.hpp"
#include "exfilab/network.hpp"
#include "exfilab/optimizer.hpp"
#include "exfilab/rng.hpp"
#include "exfilab/schedule.hpp"
#include "exfilab/train.hpp"

namespace exfilab {

enum class MitigationKind {
    vanilla_ft,
    high_lr_ft,
    super_ft,
    wd_ft,
    rwp_ft,
    fine_prune_ft,
    rwd_ft,
    lwlrd_ft
};

inline const char* mitigation_name(MitigationKind k) {
    switch (k) {
        case MitigationKind::vanilla_ft: return "vanilla_ft";
        case MitigationKind::high_lr_ft: return "high_lr_ft";
        case MitigationKind::super_ft: return "super_ft";
        case MitigationKind::wd_ft: return "wd_ft";
        case MitigationKind::rwp_ft: return "rwp_ft";
        case MitigationKind::fine_prune_ft: return "fine_prune_ft";
        case MitigationKind::rwd_ft: return "rwd_ft";
        default: return "lwlrd_ft";
    }
}

inline MitigationKind mitigation_from_name(const std::string& s) {
    for (MitigationKind k :
         {MitigationKind::vanilla_ft, MitigationKind::high_lr_ft, MitigationKind::super_ft,
          MitigationKind::wd_ft, MitigationKind::rwp_ft, MitigationKind::fine_prune_ft,
          MitigationKind::rwd_ft, MitigationKind::lwlrd_ft})
        if (s == mitigation_name(k)) return k;
    throw ArgumentError("unknown mitigation method: " + s);
}

// Export-time mitigation settings. Only the fields relevant to `kind` are
// consulted. Rates follow the baselines: vanilla 1e-4 (the training rate),
// high-LR 100x that, WD FT adds lambda = 1e-2, Super-FT cycles between
// eta_base and a phase-dependent eta_max, LWLRD maps eta_high..eta_low
// across layers.
struct MitigationMethod {
    MitigationKind kind = MitigationKind::lwlrd_ft;
    long epochs = 3;
    size_t batch_size = 32;
    bool use_adamw = true;
    uint64_t seed = 0;

    double eta = 1e-4;         // vanilla / wd / recovery FT after a perturbation
    double eta_high_lr = 1e-2; // high_lr_ft
    double lambda = 1e-2;      // wd_ft
    ScheduleSpec superft{.kind = ScheduleKind::super_ft};
    double eta_high = 1e-2;    // lwlrd_ft
    double eta_low = 1e-4;
    DecayMode decay = DecayMode::exponential;
    double sigma = 1e-2;       // rwp_ft noise std
    double drop_prob = 0.1;    // rwd_ft
    double prune_budget = 0.04;

    void validate() const {
        require(epochs >= 0, "mitigation: epochs must be >= 0");
        require(sigma >= 0.0, "mitigation: sigma must be >= 0");
        require(drop_prob >= 0.0 && drop_prob <= 1.0, "mitigation: drop_prob must be in [0,1]");
        require(prune_budget >= 0.0 && prune_budget <= 1.0,
                "mitigation: prune_budget must be in [0,1]");
    }
};

// Binary mask over one named parameter tensor; mask[i] == 0 iff the value at
// i was zeroed (|theta_i| <= threshold for magnitude pruning). Masked
// positions stay zero through any subsequent fine-tuning.
struct PruneMask {
    std::string name;
    std::vector<uint8_t> mask;  // 1 keep, 0 zeroed
    double threshold = -1.0;

    size_t zeroed() const {
        size_t n = 0;
        for (uint8_t m : mask) n += (m == 0);
        return n;
    }
};

using MaskSet = std::vector<PruneMask>;

namespace detail {

// Masks are named after archive entries so reports stay cross-referenced.
inline void apply_masks(Network& net, const MaskSet& masks) {
    for (const auto& pm : masks) {
        for (size_t li = 0; li < net.layers.size(); ++li) {
            DenseLayer& l = net.layers[li];
            std::string wname = "layer" + std::to_string(li + 1) + ".weight";
            std::string bname = "layer" + std::to_string(li + 1) + ".bias";
            const size_t out_d = l.out_dim(), in_d = l.in_dim();
            if (pm.name == wname) {
                require_shape(pm.mask.size() == out_d * in_d, "mask: size mismatch on " + pm.name);
                for (size_t o = 0; o < out_d; ++o)
                    for (size_t i = 0; i < in_d; ++i)
                        if (!pm.mask[o * in_d + i]) l.w(o, i) = 0.0;
            } else if (pm.name == bname) {
                require_shape(pm.mask.size() == out_d, "mask: size mismatch on " + pm.name);
                for (size_t o = 0; o < out_d; ++o)
                    if (!pm.mask[o]) l.bias[o] = 0.0;
            }
        }
    }
}

}  // namespace detail

// Random weight perturbation: theta' = theta + eps, eps ~ N(0, sigma^2),
// i.i.d. over every weight and bias.
inline Network rwp(const Network& net, double sigma, uint64_t seed) {
    require(sigma >= 0.0, "rwp: sigma must be >= 0");
    Network out = net.clone();
    Rng rng = Rng::substream(seed, 0x525750);  // "RWP"
    for (auto& l : out.layers) {
        const size_t out_d = l.out_dim(), in_d = l.in_dim();
        for (size_t o = 0; o < out_d; ++o)
            for (size_t i = 0; i < in_d; ++i) l.w(o, i) += sigma * rng.gaussian();
        for (double& b : l.bias) b += sigma * rng.gaussian();
    }
    return out;
}

// Random weight dropout: independent Bernoulli(1-p) keep masks over all
// parameters; the returned masks persist through recovery fine-tuning.
inline std::pair<Network, MaskSet> rwd(const Network& net, double p, uint64_t seed) {
    require(p >= 0.0 && p <= 1.0, "rwd: p must be in [0,1]");
    Network out = net.clone();
    MaskSet masks;
    Rng rng = Rng::substream(seed, 0x525744);  // "RWD"
    for (size_t li = 0; li < out.layers.size(); ++li) {
        DenseLayer& l = out.layers[li];
        const size_t out_d = l.out_dim(), in_d = l.in_dim();
        PruneMask wm{"layer" + std::to_string(li + 1) + ".weight",
                     std::vector<uint8_t>(out_d * in_d, 1), -1.0};
        for (size_t o = 0; o < out_d; ++o)
            for (size_t i = 0; i < in_d; ++i)
                if (rng.next_double() < p) {
                    wm.mask[o * in_d + i] = 0;
                    l.w(o, i) = 0.0;
                }
        PruneMask bm{"layer" + std::to_string(li + 1) + ".bias",
                     std::vector<uint8_t>(out_d, 1), -1.0};
        for (size_t o = 0; o < out_d; ++o)
            if (rng.next_double() < p) {
                bm.mask[o] = 0;
                l.bias[o] = 0.0;
            }
        masks.push_back(std::move(wm));
        masks.push_back(std::move(bm));
    }
    return {std::move(out), std::move(masks)};
}

// Magnitude pruning of the penultimate dense layer (the stand-in for a last
// feature layer before the head): binary-search the largest threshold tau
// whose mask |theta_i| <= tau keeps eval accuracy >= baseline - budget.
inline std::pair<Network, PruneMask> fine_prune(const Network& net, const Dataset& eval_data,
                                                double budget) {
    require(budget >= 0.0 && budget <= 1.0, "fine_prune: budget must be in [0,1]");
    require(eval_data.size() > 0, "fine_prune: empty evaluation data");
    require(net.num_layers() >= 2, "fine_prune: need at least 2 layers");
    const size_t li = net.num_layers() - 2;
    const DenseLayer& target = net.layers[li];
    const size_t out_d = target.out_dim(), in_d = target.in_dim();
    require(out_d * in_d > 0, "fine_prune: empty layer");

    double baseline = evaluate_classifier(net, eval_data).accuracy;

    std::vector<double> mags;
    mags.reserve(out_d * in_d);
    for (size_t o = 0; o < out_d; ++o)
        for (size_t i = 0; i < in_d; ++i) mags.push_back(std::fabs(target.w(o, i)));
    std::sort(mags.begin(), mags.end());
    mags.erase(std::unique(mags.begin(), mags.end()), mags.end());

    auto masked_accuracy = [&](double tau) {
        Network trial = net.clone();
        DenseLayer& l = trial.layers[li];
        for (size_t o = 0; o < out_d; ++o)
            for (size_t i = 0; i < in_d; ++i)
                if (std::fabs(l.w(o, i)) <= tau) l.w(o, i) = 0.0;
        return evaluate_classifier(trial, eval_data).accuracy;
    };

    // candidate -1 masks nothing; candidates then walk the distinct magnitudes
    long lo = -1, hi = static_cast<long>(mags.size()) - 1;
    while (lo < hi) {
        long mid = lo + (hi - lo + 1) / 2;
        if (masked_accuracy(mags[static_cast<size_t>(mid)]) >= baseline - budget)
            lo = mid;
        else
            hi = mid - 1;
    }
    double tau = lo < 0 ? -1.0 : mags[static_cast<size_t>(lo)];

    Network out = net.clone();
    DenseLayer& l = out.layers[li];
    PruneMask pm{"layer" + std::to_string(li + 1) + ".weight",
                 std::vector<uint8_t>(out_d * in_d, 1), tau};
    for (size_t o = 0; o < out_d; ++o)
        for (size_t i = 0; i < in_d; ++i)
            if (std::fabs(l.w(o, i)) <= tau) {
                pm.mask[o * in_d + i] = 0;
                l.w(o, i) = 0.0;
            }
    return {std::move(out), std::move(pm)};
}

struct MitigationReport {
    std::string method;
    std::string optimizer;
    long epochs = 0;
    long steps = 0;
    double wall_seconds = 0.0;
    std::vector<double> loss_curve;   // mean loss per epoch
    std::vector<double> rate_vector;  // per-layer rates at step 0
    double perturb_zero_fraction = 0.0;
    double prune_threshold = -1.0;
};

using EpochHook = std::function<void(long epoch, const Network& net)>;

// Applies the method's pre-perturbation, then fine-tunes on the utility task
// with the method's schedule; masked positions are re-zeroed after every
// step. The hook, when set, sees the network after each epoch.
inline std::pair<Network, MitigationReport> mitigate(const Network& net,
                                                     const MitigationMethod& method,
                                                     const Dataset& train,
                                                     const EpochHook& hook = {}) {
    method.validate();
    require(train.size() > 0, "mitigate: empty training data");
    auto t0 = std::chrono::steady_clock::now();

    Network out = net.clone();
    MaskSet masks;
    MitigationReport report;
    report.method = mitigation_name(method.kind);
    report.optimizer = method.use_adamw ? "adamw" : "sgd";
    report.epochs = method.epochs;

    switch (method.kind) {
        case MitigationKind::rwp_ft: out = rwp(out, method.sigma, method.seed); break;
        case MitigationKind::rwd_ft: {
            auto [n, m] = rwd(out, method.drop_prob, method.seed);
            out = std::move(n);
            masks = std::move(m);
            break;
        }
        case MitigationKind::fine_prune_ft: {
            auto [n, m] = fine_prune(out, train, method.prune_budget);
            out = std::move(n);
            report.prune_threshold = m.threshold;
            masks.push_back(std::move(m));
            break;
        }
        default: break;
    }
    if (!masks.empty()) {
        size_t zeroed = 0, total = 0;
        for (const auto& pm : masks) {
            zeroed += pm.zeroed();
            total += pm.mask.size();
        }
        report.perturb_zero_fraction = total ? static_cast<double>(zeroed) / total : 0.0;
    }

    ScheduleSpec sched;
    double weight_decay = 0.0;
    switch (method.kind) {
        case MitigationKind::high_lr_ft: sched.eta = method.eta_high_lr; break;
        case MitigationKind::super_ft: sched = method.superft; break;
        case MitigationKind::wd_ft:
            sched.eta = method.eta;
            weight_decay = method.lambda;
            break;
        case MitigationKind::lwlrd_ft:
            sched.kind = ScheduleKind::lwlrd;
            sched.eta_high = method.eta_high;
            sched.eta_low = method.eta_low;
            sched.decay = method.decay;
            break;
        default: sched.eta = method.eta; break;  // vanilla / rwp / rwd / prune recovery
    }
    sched.validate();

    const size_t L = out.num_layers();
    const long steps_per_epoch =
        static_cast<long>((train.size() + method.batch_size - 1) / method.batch_size);
    const long total_steps = method.epochs * steps_per_epoch;
    report.rate_vector = layer_rates(sched, L, 0, total_steps);

    OptimizerState state = OptimizerState::for_network(out, AdamWConfig{});
    state.cfg.weight_decay = weight_decay;

    long step = 0;
    for (long epoch = 0; epoch < method.epochs; ++epoch) {
        double loss_sum = 0.0;
        size_t batches = 0;
        for (const auto& idx : make_batches(train.size(), method.batch_size, method.seed, epoch)) {
            Tensor x = train.batch(idx);
            std::vector<uint16_t> yb;
            yb.reserve(idx.size());
            for (size_t i : idx) yb.push_back(train.labels[i]);
            BackwardResult back;
            try {
                back = backward(out, x, labels_tensor(yb), LossKind::softmax_cross_entropy);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (mitigation step " +
                                   std::to_string(step) + ")");
            }
            if (!std::isfinite(back.loss))
                throw NumericError("mitigate: loss diverged at step " + std::to_string(step));
            std::vector<double> rates = layer_rates(sched, L, step, total_steps);
            if (method.use_adamw)
                adamw_step(out, back.grads, state, rates);
            else
                sgd_step(out, back.grads, rates, weight_decay);
            if (!masks.empty()) detail::apply_masks(out, masks);
            loss_sum += back.loss;
            ++batches;
            ++step;
        }
        report.loss_curve.push_back(loss_sum / static_cast<double>(batches));
        if (hook) hook(epoch + 1, out);
    }
    report.steps = step;

    auto t1 = std::chrono::steady_clock::now();
    report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    return {std::move(out), std::move(report)};
}

}  // namespace exfilab
