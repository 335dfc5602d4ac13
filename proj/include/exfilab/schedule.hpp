#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "exfilab/common.hpp"

namespace exfilab {

enum class DecayMode { exponential, linear };

inline const char* decay_name(DecayMode d) {
    return d == DecayMode::exponential ? "exponential" : "linear";
}

inline DecayMode decay_from_name(const std::string& s) {
    if (s == "exponential") return DecayMode::exponential;
    if (s == "linear") return DecayMode::linear;
    throw ArgumentError("unknown decay mode: " + s);
}

/// Per-layer rate for layer-wise learning-rate decay fine-tuning.
/// Exponential: eta_high * (eta_low/eta_high)^((l-1)/(L-1)), so the first
/// layer gets eta_high and the last gets eta_low. Linear interpolates the
/// same endpoints arithmetically. L == 1 degenerates to eta_high.
inline double lwlrd_rate(int layer_index, int num_layers, double eta_high, double eta_low,
                         DecayMode decay) {
    require(num_layers >= 1, "lwlrd_rate: L must be >= 1");
    require(layer_index >= 1 && layer_index <= num_layers,
            "lwlrd_rate: layer index " + std::to_string(layer_index) + " outside [1, " +
                std::to_string(num_layers) + "]");
    require(eta_high > 0.0 && eta_low > 0.0, "lwlrd_rate: rates must be > 0");
    require(eta_high >= eta_low, "lwlrd_rate: eta_high must be >= eta_low");
    if (num_layers == 1) return eta_high;
    double frac = static_cast<double>(layer_index - 1) / static_cast<double>(num_layers - 1);
    if (decay == DecayMode::exponential) return eta_high * std::pow(eta_low / eta_high, frac);
    return eta_high + (eta_low - eta_high) * frac;
}

/// Triangular cyclical rate: eta_base + (1 - |2 (t mod C)/C - 1|)(eta_max - eta_base).
/// Peaks at eta_max mid-cycle, returns to eta_base at cycle boundaries.
inline double superft_rate(long step, long cycle_len, double eta_base, double eta_max) {
    require(cycle_len >= 2, "superft_rate: cycle length must be >= 2");
    require(step >= 0, "superft_rate: step must be >= 0");
    require(eta_base > 0.0 && eta_max > 0.0, "superft_rate: rates must be > 0");
    double phase = static_cast<double>(step % cycle_len) / static_cast<double>(cycle_len);
    double tri = 1.0 - std::fabs(2.0 * phase - 1.0);
    return eta_base + tri * (eta_max - eta_base);
}

enum class ScheduleKind { constant, super_ft, lwlrd };

// Resolved schedule parameters; pure function of (step, layer) via layer_rates.
struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::constant;
    double eta = 1e-4;  // constant
    // super_ft
    double eta_base = 1e-4;
    double eta_max_phase1 = 1e-1;
    double eta_max_phase2 = 1e-3;
    long cycle_len = 10;
    double phase2_start_frac = 0.1;
    // lwlrd
    double eta_high = 1e-2;
    double eta_low = 1e-4;
    DecayMode decay = DecayMode::exponential;

    void validate() const {
        switch (kind) {
            case ScheduleKind::constant: require(eta > 0.0, "schedule: eta must be > 0"); break;
            case ScheduleKind::super_ft:
                require(cycle_len >= 2, "schedule: cycle length must be >= 2");
                require(eta_base > 0.0 && eta_max_phase1 > 0.0 && eta_max_phase2 > 0.0,
                        "schedule: rates must be > 0");
                require(phase2_start_frac >= 0.0 && phase2_start_frac <= 1.0,
                        "schedule: phase2_start_frac must be in [0,1]");
                break;
            case ScheduleKind::lwlrd:
                require(eta_high > 0.0 && eta_low > 0.0, "schedule: rates must be > 0");
                require(eta_high >= eta_low, "schedule: eta_high must be >= eta_low");
                break;
        }
    }
};

inline std::vector<double> layer_rates(const ScheduleSpec& s, size_t num_layers, long step,
                                       long total_steps) {
    s.validate();
    std::vector<double> rates(num_layers, s.eta);
    switch (s.kind) {
        case ScheduleKind::constant: break;
        case ScheduleKind::super_ft: {
            bool phase2 = total_steps > 0 &&
                          static_cast<double>(step) >=
                              s.phase2_start_frac * static_cast<double>(total_steps);
            double eta_max = phase2 ? s.eta_max_phase2 : s.eta_max_phase1;
            double r = superft_rate(step, s.cycle_len, s.eta_base, eta_max);
            rates.assign(num_layers, r);
            break;
        }
        case ScheduleKind::lwlrd:
            for (size_t l = 0; l < num_layers; ++l)
                rates[l] = lwlrd_rate(static_cast<int>(l) + 1, static_cast<int>(num_layers),
                                      s.eta_high, s.eta_low, s.decay);
            break;
    }
    return rates;
}

}  // namespace exfilab
