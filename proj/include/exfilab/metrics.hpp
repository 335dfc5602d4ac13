#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "exfilab/common.hpp"
#include "exfilab/tensor.hpp"

namespace exfilab {

struct EvalResult {
    double accuracy = 0.0;
    double macro_auc = 0.0;
    std::vector<double> per_class_auc;  // NaN where a class was excluded
    std::vector<int> excluded_classes;
};

struct LeakageResult {
    double ssim_mean = 0.0;
    double ssim_median = 0.0;
    double psnr_mean = 0.0;
    double ber = -1.0;  // < 0 when no payload channel applies (transpose path)
};

namespace detail {

// 7x7 Gaussian window, sigma 1.5, normalized to sum 1. The toy images are
// 16x16, too small for the conventional 11x11 window.
inline const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(49);
        double sum = 0.0;
        for (int r = 0; r < 7; ++r)
            for (int c = 0; c < 7; ++c) {
                double dr = r - 3.0, dc = c - 3.0;
                v[r * 7 + c] = std::exp(-(dr * dr + dc * dc) / (2.0 * 1.5 * 1.5));
                sum += v[r * 7 + c];
            }
        for (double& x : v) x /= sum;
        return v;
    }();
    return w;
}

}  // namespace detail

// Mean of local SSIM over 7x7 Gaussian windows (sigma 1.5, stride 1, valid
// padding), C1 = 0.01^2, C2 = 0.03^2, dynamic range 1.
inline double ssim(const Tensor& a, const Tensor& b) {
    require_shape(a.dims == b.dims, "ssim: images must have identical dims");
    require_shape(a.dims.size() == 2, "ssim: images must be 2-D");
    const size_t h = a.dims[0], w = a.dims[1];
    require(h >= 7 && w >= 7, "ssim: image smaller than the 7x7 window");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto& win = detail::ssim_window();

    double total = 0.0;
    size_t count = 0;
    for (size_t r = 0; r + 7 <= h; ++r) {
        for (size_t c = 0; c + 7 <= w; ++c) {
            double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
            for (int i = 0; i < 7; ++i) {
                const double* ar = a.data.data() + (r + i) * w + c;
                const double* br = b.data.data() + (r + i) * w + c;
                const double* wr = win.data() + i * 7;
                for (int j = 0; j < 7; ++j) {
                    double x = ar[j], y = br[j], g = wr[j];
                    mx += g * x;
                    my += g * y;
                    mxx += g * x * x;
                    myy += g * y * y;
                    mxy += g * x * y;
                }
            }
            double vx = mxx - mx * mx, vy = myy - my * my, cov = mxy - mx * my;
            double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

// 10 log10(1 / MSE) for images in [0,1]; capped at 100 dB once MSE < 1e-10.
inline double psnr(const Tensor& a, const Tensor& b) {
    require_shape(a.dims == b.dims, "psnr: images must have identical dims");
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

// Fraction of argmax(logits) == label; argmax ties break to the lowest index.
inline double accuracy(const Tensor& logits, const std::vector<uint16_t>& labels) {
    require_shape(logits.dims.size() == 2, "accuracy: logits must be [B x K]");
    const size_t b = logits.dims[0], k = logits.dims[1];
    require(b >= 1 && labels.size() == b, "accuracy: labels must match batch size");
    size_t correct = 0;
    for (size_t r = 0; r < b; ++r) {
        const double* row = logits.data.data() + r * k;
        size_t best = 0;
        for (size_t j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;
        if (best == labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(b);
}

namespace detail {

// One-vs-rest AUC from the Mann-Whitney U statistic via average ranks;
// ties are credited 0.5.
inline double binary_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t i, size_t j) { return scores[i] < scores[j]; });
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    size_t n_pos = 0;
    for (size_t t = 0; t < n; ++t)
        if (positive[t]) {
            rank_sum_pos += rank[t];
            ++n_pos;
        }
    size_t n_neg = n - n_pos;
    double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace detail

// Macro average of one-vs-rest AUCs over classes that have at least one
// positive and one negative; classes without are excluded and reported.
inline EvalResult macro_auc_detailed(const Tensor& scores, const std::vector<uint16_t>& labels) {
    require_shape(scores.dims.size() == 2, "macro_auc: scores must be [B x K]");
    const size_t b = scores.dims[0], k = scores.dims[1];
    require(labels.size() == b, "macro_auc: labels must match batch size");
    EvalResult res;
    res.per_class_auc.assign(k, std::nan(""));
    double sum = 0.0;
    size_t included = 0;
    for (size_t cls = 0; cls < k; ++cls) {
        size_t pos = 0;
        for (uint16_t y : labels) pos += (y == cls);
        if (pos == 0 || pos == b) {
            res.excluded_classes.push_back(static_cast<int>(cls));
            continue;
        }
        std::vector<double> s(b);
        std::vector<bool> is_pos(b);
        for (size_t r = 0; r < b; ++r) {
            s[r] = scores.at(r, cls);
            is_pos[r] = labels[r] == cls;
        }
        double auc = detail::binary_auc(s, is_pos);
        res.per_class_auc[cls] = auc;
        sum += auc;
        ++included;
    }
    if (included == 0) throw UndefinedAucError("macro_auc: every class was excluded");
    res.macro_auc = sum / static_cast<double>(included);
    return res;
}

inline double macro_auc(const Tensor& scores, const std::vector<uint16_t>& labels) {
    return macro_auc_detailed(scores, labels).macro_auc;
}

/// Differing-bit count over 16-bit codes, divided by 16 * n.
inline double bit_error_rate(const std::vector<uint16_t>& sent,
                             const std::vector<uint16_t>& received) {
    require(sent.size() == received.size(), "bit_error_rate: code lengths differ");
    if (sent.empty()) return 0.0;
    uint64_t bits = 0;
    for (size_t i = 0; i < sent.size(); ++i)
        bits += std::popcount(static_cast<unsigned>(sent[i] ^ received[i]));
    return static_cast<double>(bits) / (16.0 * static_cast<double>(sent.size()));
}

}  // namespace exfilab
