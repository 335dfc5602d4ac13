#include <bit>
#include <catch2/catch_amalgamated.hpp>

#include "exfilab/metrics.hpp"
#include "exfilab/rng.hpp"
#include "exfilab/stego.hpp"

using namespace exfilab;

namespace {

WeightArchive archive_of(std::vector<float> values) {
    WeightArchive a;
    a.entries.push_back(
        ArchiveEntry{"w", {static_cast<uint32_t>(values.size())}, std::move(values)});
    return a;
}

WeightArchive random_archive(Rng& rng, size_t count) {
    std::vector<float> v(count);
    for (auto& x : v) x = static_cast<float>(0.3 * rng.gaussian());
    return archive_of(std::move(v));
}

StegoPayload random_payload(Rng& rng, uint16_t n, uint16_t d) {
    StegoPayload p;
    p.count = n;
    p.latent_dim = d;
    for (size_t i = 0; i < static_cast<size_t>(n) * d; ++i)
        p.codes.push_back(static_cast<uint16_t>(rng.next_below(65536)));
    return p;
}

}  // namespace

TEST_CASE("quantize: the default shift-by-1 scale-by-20000 mapping") {
    QuantizerConfig cfg;
    CHECK(quantize(-0.5, cfg) == 10000);
    CHECK(quantize(0.0, cfg) == 20000);
    CHECK(quantize(2.27675, cfg) == 65535);
    uint64_t clamps = 0;
    CHECK(quantize(2.5, cfg, &clamps) == 65535);
    CHECK(clamps == 1);
    CHECK(quantize(-1.3, cfg, &clamps) == 0);
    CHECK(clamps == 2);
    CHECK_THROWS_AS(quantize(std::nan(""), cfg), ArgumentError);
}

TEST_CASE("dequantize inverts the quantizer examples") {
    QuantizerConfig cfg;
    CHECK(dequantize(10000, cfg) == Catch::Approx(-0.5).epsilon(1e-12));
    CHECK(dequantize(20000, cfg) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("quantize/dequantize roundtrip error is bounded by half a code step") {
    QuantizerConfig cfg;
    uint64_t clamps = 0;
    // half a code step; the 1e-15 covers rounding in the error measurement
    const double bound = 1.0 / (2.0 * cfg.scale) + 1e-15;
    const int points = 10000;
    for (int i = 0; i <= points; ++i) {
        double v = cfg.min_val() + (cfg.max_val() - cfg.min_val()) * i / points;
        double back = dequantize(quantize(v, cfg, &clamps), cfg);
        CHECK(std::fabs(back - v) <= bound);
    }
    CHECK(clamps == 0);  // no clamping inside the representable range
}

TEST_CASE("embed: bitwise example 0x3F800000 + code 0x2710") {
    WeightArchive a = archive_of({1.0f, 1.0f, 1.0f});
    StegoPayload p;
    p.count = 0;
    p.latent_dim = 0x2710;
    WeightArchive out = embed(a, p);
    CHECK(std::bit_cast<uint32_t>(out.param(0)) == 0x3F800000u);  // n = 0
    CHECK(std::bit_cast<uint32_t>(out.param(1)) == 0x3F802710u);
    CHECK(std::bit_cast<uint32_t>(out.param(2)) == 0x3F800000u);  // untouched
}

TEST_CASE("embed: zero payload into zero weights changes only the header words") {
    WeightArchive a = archive_of(std::vector<float>(8, 0.0f));
    StegoPayload p;
    p.count = 2;
    p.latent_dim = 3;
    p.codes.assign(6, 0);
    WeightArchive out = embed(a, p);
    CHECK(std::bit_cast<uint32_t>(out.param(0)) == 2u);
    CHECK(std::bit_cast<uint32_t>(out.param(1)) == 3u);
    for (uint64_t k = 2; k < 8; ++k) CHECK(out.param(k) == 0.0f);
}

TEST_CASE("extract(embed(a, p)) == p bit-exactly") {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        uint16_t n = static_cast<uint16_t>(1 + rng.next_below(5));
        uint16_t d = static_cast<uint16_t>(1 + rng.next_below(7));
        StegoPayload p = random_payload(rng, n, d);
        WeightArchive a = random_archive(rng, 2 + static_cast<size_t>(n) * d + rng.next_below(9));
        StegoPayload q = extract(embed(a, p));
        CHECK(q.count == p.count);
        CHECK(q.latent_dim == p.latent_dim);
        CHECK(q.codes == p.codes);
    }
}

TEST_CASE("embed: capacity error reports P, n and D") {
    Rng rng(6);
    WeightArchive a = random_archive(rng, 10);
    StegoPayload p = random_payload(rng, 3, 3);  // needs 11 > 10
    try {
        embed(a, p);
        FAIL("expected CapacityError");
    } catch (const CapacityError& e) {
        std::string msg = e.what();
        CHECK(msg.find("P=10") != std::string::npos);
        CHECK(msg.find("n=3") != std::string::npos);
        CHECK(msg.find("D=3") != std::string::npos);
    }
}

TEST_CASE("extract: never-embedded archive either yields garbage or a payload error") {
    Rng rng(8);
    WeightArchive a = random_archive(rng, 64);
    uint64_t header_n = detail::low16(a.param(0));
    uint64_t header_d = detail::low16(a.param(1));
    if (2 + header_n * header_d > 64) {
        CHECK_THROWS_AS(extract(a), PayloadError);
    } else {
        StegoPayload p = extract(a);  // garbage-in contract
        CHECK(p.codes.size() == header_n * header_d);
    }
    CHECK_THROWS_AS(extract(archive_of({1.0f})), ArgumentError);
}

TEST_CASE("extract: a single flipped low bit changes exactly that code bit") {
    Rng rng(10);
    StegoPayload p = random_payload(rng, 2, 4);
    WeightArchive a = embed(random_archive(rng, 16), p);
    uint32_t bits = std::bit_cast<uint32_t>(a.param(5));
    a.param(5) = std::bit_cast<float>(bits ^ 0x4u);  // code word index 3, bit 2
    StegoPayload q = extract(a);
    for (size_t i = 0; i < p.codes.size(); ++i) {
        if (i == 3)
            CHECK((q.codes[i] ^ p.codes[i]) == 0x4);
        else
            CHECK(q.codes[i] == p.codes[i]);
    }
}

TEST_CASE("stego_capacity: floor division at production-scale parameter counts") {
    CHECK(stego_capacity(11171840, 512) == 21820);
    CHECK(stego_capacity(7481344, 512) == 14612);
    CHECK(stego_capacity(511, 512) == 0);
    CHECK_THROWS_AS(stego_capacity(100, 0), ArgumentError);
}

TEST_CASE("embed: upper 16 bits of every parameter are invariant") {
    Rng rng(12);
    StegoPayload p = random_payload(rng, 8, 16);
    WeightArchive a = random_archive(rng, 256);
    WeightArchive out = embed(a, p);
    for (uint64_t k = 0; k < 256; ++k) {
        uint32_t before = std::bit_cast<uint32_t>(a.param(k));
        uint32_t after = std::bit_cast<uint32_t>(out.param(k));
        CHECK((before & 0xffff0000u) == (after & 0xffff0000u));
    }
}

TEST_CASE("embed: relative perturbation of normal weights stays below 2^-7") {
    Rng rng(14);
    const double bound = std::pow(2.0, -7.0);
    StegoPayload p = random_payload(rng, 16, 16);
    std::vector<float> values(300);
    for (auto& v : values) {
        do {
            v = static_cast<float>(rng.gaussian() * std::pow(10.0, rng.gaussian()));
        } while (!std::isnormal(v));
    }
    WeightArchive a = archive_of(values);
    WeightArchive out = embed(a, p);
    for (uint64_t k = 0; k < values.size(); ++k) {
        double before = a.param(k), after = out.param(k);
        CHECK(std::fabs(after - before) / std::fabs(before) < bound);
    }
}

TEST_CASE("fragility: gaussian weight noise destroys the payload") {
    // sigma = 1e-2 dwarfs the low-16-bit granularity of O(0.1) weights, so
    // extraction after noise should be near-random
    for (uint64_t seed : {21, 22, 23}) {
        Rng rng(seed);
        StegoPayload p = random_payload(rng, 16, 32);
        WeightArchive a = embed(random_archive(rng, 1024), p);
        for (auto& e : a.entries)
            for (auto& v : e.values) v = static_cast<float>(v + 1e-2 * rng.gaussian());
        StegoPayload q = extract_fixed(a, 16, 32);
        CHECK(bit_error_rate(p.codes, q.codes) >= 0.3);
    }
}
