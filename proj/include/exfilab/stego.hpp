#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "exfilab/common.hpp"
#include "exfilab/weights_io.hpp"

namespace exfilab {

// 16-bit latent quantizer: code = round((v + shift) * scale), clamped to
// [0, 65535]. The defaults shift=1, scale=20000 give a representable range
// of [-1, 2.27675]; values outside it clamp and bump a counter rather than
// fail, so an out-of-range latent degrades the attack instead of crashing.
struct QuantizerConfig {
    double shift = 1.0;
    double scale = 20000.0;

    double min_val() const { return -shift; }
    double max_val() const { return 65535.0 / scale - shift; }

    void validate() const {
        require(scale > 0.0, "quantizer: scale must be > 0");
        require(min_val() < max_val(), "quantizer: empty representable range");
    }
};

/// Rounds half away from zero, matching the codec on both sides of the channel.
inline uint16_t quantize(double v, const QuantizerConfig& cfg, uint64_t* clamp_count = nullptr) {
    cfg.validate();
    require(std::isfinite(v), "quantize: value must be finite");
    double scaled = std::round((v + cfg.shift) * cfg.scale);  // round() is half-away-from-zero
    if (scaled < 0.0) {
        if (clamp_count) ++*clamp_count;
        return 0;
    }
    if (scaled > 65535.0) {
        if (clamp_count) ++*clamp_count;
        return 65535;
    }
    return static_cast<uint16_t>(scaled);
}

inline double dequantize(uint16_t code, const QuantizerConfig& cfg) {
    cfg.validate();
    return static_cast<double>(code) / cfg.scale - cfg.shift;
}

// n latent vectors of length D as 16-bit codes; on the wire the payload is
// the two raw header words (n, D) followed by the codes.
struct StegoPayload {
    uint16_t count = 0;
    uint16_t latent_dim = 0;
    std::vector<uint16_t> codes;

    void validate() const {
        require(codes.size() ==
                    static_cast<size_t>(count) * static_cast<size_t>(latent_dim),
                "payload: codes length must equal n*D");
    }
};

/// Number of D-length latent vectors storable in P parameters: floor(P / D).
/// Header overhead is excluded by convention.
inline uint64_t stego_capacity(uint64_t param_count, uint64_t latent_dim) {
    require(latent_dim >= 1, "capacity: latent_dim must be >= 1");
    return param_count / latent_dim;
}

namespace detail {

inline uint16_t low16(float v) {
    return static_cast<uint16_t>(std::bit_cast<uint32_t>(v) & 0xffffu);
}

inline float with_low16(float v, uint16_t word) {
    uint32_t bits = (std::bit_cast<uint32_t>(v) & 0xffff0000u) | word;
    return std::bit_cast<float>(bits);
}

}  // namespace detail

// Writes (n, D, codes...) into the 16 least significant bits of consecutive
// binary32 parameters, walking entries in archive order from parameter 0.
// Sign, exponent and the top 7 mantissa bits are untouched, so every normal
// weight moves by strictly less than 2^-7 relative.
inline WeightArchive embed(const WeightArchive& archive, const StegoPayload& payload) {
    payload.validate();
    const uint64_t P = archive.total_params();
    const uint64_t need = 2 + payload.codes.size();
    if (need > P)
        throw CapacityError("embed: payload needs " + std::to_string(need) +
                            " parameters but archive has P=" + std::to_string(P) +
                            " (n=" + std::to_string(payload.count) +
                            ", D=" + std::to_string(payload.latent_dim) + ")");
    WeightArchive out = archive;
    uint64_t k = 0;
    auto put = [&](uint16_t word) {
        float& v = out.param(k);
        v = detail::with_low16(v, word);
        ++k;
    };
    put(payload.count);
    put(payload.latent_dim);
    for (uint16_t c : payload.codes) put(c);
    return out;
}

// Reads back whatever the low bits contain; there is no marker, so an
// archive that was never embedded yields garbage by contract and the caller
// measures BER/SSIM on it.
inline StegoPayload extract(const WeightArchive& archive) {
    const uint64_t P = archive.total_params();
    require(P >= 2, "extract: archive must have at least 2 parameters");
    StegoPayload p;
    p.count = detail::low16(archive.param(0));
    p.latent_dim = detail::low16(archive.param(1));
    const uint64_t need =
        2 + static_cast<uint64_t>(p.count) * static_cast<uint64_t>(p.latent_dim);
    if (need > P)
        throw PayloadError("extract: implied payload of " + std::to_string(need) +
                           " words exceeds P=" + std::to_string(P) +
                           " (n=" + std::to_string(p.count) +
                           ", D=" + std::to_string(p.latent_dim) + ")");
    p.codes.reserve(static_cast<size_t>(need) - 2);
    for (uint64_t k = 2; k < need; ++k) p.codes.push_back(detail::low16(archive.param(k)));
    return p;
}

// Extraction with a known (n, D), for measuring damage on archives whose
// embedded header got corrupted by a mitigation.
inline StegoPayload extract_fixed(const WeightArchive& archive, uint16_t count,
                                  uint16_t latent_dim) {
    const uint64_t P = archive.total_params();
    const uint64_t need = 2 + static_cast<uint64_t>(count) * static_cast<uint64_t>(latent_dim);
    if (need > P)
        throw PayloadError("extract_fixed: payload of " + std::to_string(need) +
                           " words exceeds P=" + std::to_string(P));
    StegoPayload p;
    p.count = count;
    p.latent_dim = latent_dim;
    p.codes.reserve(static_cast<size_t>(need) - 2);
    for (uint64_t k = 2; k < need; ++k) p.codes.push_back(detail::low16(archive.param(k)));
    return p;
}

}  // namespace exfilab
