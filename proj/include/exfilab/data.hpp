#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "exfilab/common.hpp"
#include "exfilab/rng.hpp"
#include "exfilab/tensor.hpp"
#include "exfilab/weights_io.hpp"

namespace exfilab {

enum class Split { train, test };

// Deterministic synthetic classification data. Class identity is carried by
// a fixed base pattern (oriented gradient for even classes, checkerboard for
// odd ones, plus a class-positioned blob); i.i.d. Gaussian pixel noise is
// added on top and everything clamps to [0,1].
struct SynthSpec {
    uint32_t classes = 8;
    uint32_t image_size = 16;  // H = W
    double noise_std = 0.1;
    uint64_t seed = 42;

    void validate() const {
        require(classes >= 2, "synth: need at least 2 classes");
        require(image_size >= 8, "synth: image_size must be >= 8");
        require(noise_std >= 0.0, "synth: noise_std must be >= 0");
    }
};

struct Dataset {
    uint32_t height = 0, width = 0, classes = 0;
    std::vector<double> images;  // [N x H x W], values in [0,1]
    std::vector<uint16_t> labels;

    size_t size() const { return labels.size(); }
    size_t pixels() const { return static_cast<size_t>(height) * width; }

    Tensor image(size_t i) const {
        Tensor t = Tensor::zeros({height, width});
        std::copy_n(images.begin() + static_cast<long>(i * pixels()), pixels(), t.data.begin());
        return t;
    }

    // Gather rows into a flat [B x H*W] batch.
    Tensor batch(const std::vector<size_t>& idx) const {
        Tensor t = Tensor::zeros({idx.size(), pixels()});
        for (size_t r = 0; r < idx.size(); ++r)
            std::copy_n(images.begin() + static_cast<long>(idx[r] * pixels()), pixels(),
                        t.data.begin() + static_cast<long>(r * pixels()));
        return t;
    }

    Tensor all_images() const {
        std::vector<size_t> idx(size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        return batch(idx);
    }

    void validate() const {
        require(static_cast<size_t>(height) * width * labels.size() == images.size(),
                "dataset: image buffer does not match N*H*W");
        for (uint16_t y : labels) require(y < classes, "dataset: label out of range");
    }
};

namespace detail {

inline void add_base_pattern(std::vector<double>& img, uint32_t k, uint32_t classes, uint32_t hw) {
    // amplitudes sized so that class overlap under the default pixel noise
    // keeps the utility loss (and its gradients) alive after convergence
    const double lo = 0.375, hi = 0.625;
    if (k % 2 == 0) {
        // oriented gradient: horizontal / vertical / diagonal / anti-diagonal
        uint32_t dir = (k / 2) % 4;
        for (uint32_t r = 0; r < hw; ++r)
            for (uint32_t c = 0; c < hw; ++c) {
                double t = 0.0;
                switch (dir) {
                    case 0: t = static_cast<double>(c) / (hw - 1); break;
                    case 1: t = static_cast<double>(r) / (hw - 1); break;
                    case 2: t = static_cast<double>(r + c) / (2.0 * (hw - 1)); break;
                    default:
                        t = static_cast<double>(hw - 1 - r + c) / (2.0 * (hw - 1));
                        break;
                }
                img[r * hw + c] = lo + (hi - lo) * t;
            }
    } else {
        // checkerboard; cell size shrinks with k, phase flips for k % 4 == 3
        uint32_t cell = hw / 2;
        for (uint32_t s = 0; s < (k - 1) / 2 % 3; ++s) cell = std::max(2u, cell / 2);
        bool flip = (k % 4) == 3;
        for (uint32_t r = 0; r < hw; ++r)
            for (uint32_t c = 0; c < hw; ++c) {
                bool on = ((r / cell + c / cell) % 2 == 0) != flip;
                img[r * hw + c] = on ? hi : lo;
            }
    }
    // class-positioned blob on a circle around the center
    double angle = 2.0 * 3.14159265358979323846 * static_cast<double>(k) / classes;
    double cr = hw / 2.0 + (hw / 4.0) * std::sin(angle);
    double cc = hw / 2.0 + (hw / 4.0) * std::cos(angle);
    double sigma = hw / 8.0;
    for (uint32_t r = 0; r < hw; ++r)
        for (uint32_t c = 0; c < hw; ++c) {
            double dr = r - cr, dc = c - cc;
            img[r * hw + c] += 0.3 * std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        }
}

}  // namespace detail

// Labels go round-robin (i mod K), keeping class counts balanced within 1.
// Train and test draw noise from disjoint substreams of spec.seed.
inline Dataset synth_generate(const SynthSpec& spec, uint32_t count, Split split) {
    spec.validate();
    Dataset ds;
    ds.height = ds.width = spec.image_size;
    ds.classes = spec.classes;
    ds.labels.reserve(count);
    ds.images.reserve(static_cast<size_t>(count) * ds.pixels());

    std::vector<std::vector<double>> base(spec.classes);
    for (uint32_t k = 0; k < spec.classes; ++k) {
        base[k].assign(ds.pixels(), 0.0);
        detail::add_base_pattern(base[k], k, spec.classes, spec.image_size);
    }

    Rng rng = Rng::substream(spec.seed, split == Split::train ? 1 : 2);
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t label = static_cast<uint16_t>(i % spec.classes);
        ds.labels.push_back(label);
        for (double b : base[label]) {
            double v = b + spec.noise_std * rng.gaussian();
            ds.images.push_back(std::clamp(v, 0.0, 1.0));
        }
    }
    return ds;
}

// MDS1 dataset file:
//   magic "MDS1" | u32 N | u32 H | u32 W | u32 K
//   | N x u16 labels | N*H*W little-endian binary32 pixels
inline uint64_t save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::vector<uint8_t> buf;
    buf.insert(buf.end(), {'M', 'D', 'S', '1'});
    detail::put_u32(buf, static_cast<uint32_t>(ds.size()));
    detail::put_u32(buf, ds.height);
    detail::put_u32(buf, ds.width);
    detail::put_u32(buf, ds.classes);
    for (uint16_t y : ds.labels) detail::put_u16(buf, y);
    for (double v : ds.images) {
        if (!(v >= 0.0 && v <= 1.0))
            throw NumericError("dataset: refusing to write pixel outside [0,1]");
        detail::put_f32(buf, static_cast<float>(v));
    }
    detail::write_file_bytes(path, buf);
    return buf.size();
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
    std::vector<uint8_t> bytes = detail::read_file_bytes(path);
    detail::ByteReader r(bytes.data(), bytes.size(), path.filename().string());
    if (r.bytes(4, "magic") != "MDS1")
        throw ParseError(path.filename().string() + ": bad magic, expected MDS1");
    Dataset ds;
    uint32_t n = r.u32("count");
    ds.height = r.u32("height");
    ds.width = r.u32("width");
    ds.classes = r.u32("classes");
    ds.labels.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        uint16_t y = r.u16("labels");
        if (y >= ds.classes)
            throw ParseError(path.filename().string() + ": label " + std::to_string(y) +
                             " >= K=" + std::to_string(ds.classes));
        ds.labels.push_back(y);
    }
    uint64_t px = static_cast<uint64_t>(n) * ds.height * ds.width;
    ds.images.reserve(px);
    for (uint64_t i = 0; i < px; ++i) {
        float v = r.f32("pixels");
        if (!(v >= 0.0f && v <= 1.0f))
            throw ParseError(path.filename().string() + ": pixel value " + std::to_string(v) +
                             " outside [0,1]");
        ds.images.push_back(v);
    }
    r.done();
    return ds;
}

// A dataset of uniform noise images carrying the given labels; control arm
// of the usability test.
inline Dataset noise_dataset(uint32_t height, uint32_t width, uint32_t classes,
                             const std::vector<uint16_t>& labels, uint64_t seed) {
    Dataset ds;
    ds.height = height;
    ds.width = width;
    ds.classes = classes;
    ds.labels = labels;
    Rng rng = Rng::substream(seed, 0x6e6f6973);  // "nois"
    ds.images.resize(labels.size() * ds.pixels());
    for (double& v : ds.images) v = rng.next_double();
    return ds;
}

}  // namespace exfilab
