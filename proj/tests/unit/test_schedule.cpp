#include <catch2/catch_amalgamated.hpp>

#include "exfilab/schedule.hpp"

using namespace exfilab;

TEST_CASE("lwlrd_rate: endpoints follow the exponential mapping") {
    CHECK(lwlrd_rate(1, 5, 1e-2, 1e-4, DecayMode::exponential) ==
          Catch::Approx(1e-2).epsilon(1e-12));
    CHECK(lwlrd_rate(5, 5, 1e-2, 1e-4, DecayMode::exponential) ==
          Catch::Approx(1e-4).epsilon(1e-12));
    CHECK(lwlrd_rate(3, 5, 1e-2, 1e-4, DecayMode::exponential) ==
          Catch::Approx(1e-3).epsilon(1e-12));
}

TEST_CASE("lwlrd_rate: linear midpoint") {
    CHECK(lwlrd_rate(3, 5, 1e-2, 1e-4, DecayMode::linear) == Catch::Approx(5.05e-3).epsilon(1e-12));
}

TEST_CASE("lwlrd_rate: argument validation and the single-layer degenerate case") {
    CHECK(lwlrd_rate(1, 1, 1e-2, 1e-4, DecayMode::exponential) == 1e-2);
    CHECK_THROWS_AS(lwlrd_rate(0, 5, 1e-2, 1e-4, DecayMode::exponential), ArgumentError);
    CHECK_THROWS_AS(lwlrd_rate(6, 5, 1e-2, 1e-4, DecayMode::exponential), ArgumentError);
    CHECK_THROWS_AS(lwlrd_rate(1, 5, 0.0, 1e-4, DecayMode::exponential), ArgumentError);
    CHECK_THROWS_AS(lwlrd_rate(1, 5, 1e-4, 1e-2, DecayMode::exponential), ArgumentError);
}

TEST_CASE("lwlrd_rate: strictly decreasing in the layer index, both modes, shared endpoints") {
    for (int L : {2, 3, 5, 9}) {
        for (DecayMode mode : {DecayMode::exponential, DecayMode::linear}) {
            double prev = lwlrd_rate(1, L, 3e-2, 5e-4, mode);
            CHECK(prev == Catch::Approx(3e-2).epsilon(1e-12));
            for (int l = 2; l <= L; ++l) {
                double r = lwlrd_rate(l, L, 3e-2, 5e-4, mode);
                CHECK(r < prev);
                prev = r;
            }
            CHECK(prev == Catch::Approx(5e-4).epsilon(1e-12));
        }
    }
}

TEST_CASE("superft_rate: triangle endpoints and the quarter-cycle value") {
    CHECK(superft_rate(0, 100, 1e-4, 1e-1) == Catch::Approx(1e-4).epsilon(1e-12));
    CHECK(superft_rate(50, 100, 1e-4, 1e-1) == Catch::Approx(1e-1).epsilon(1e-12));
    CHECK(superft_rate(25, 100, 1e-4, 1e-1) == Catch::Approx(0.05005).epsilon(1e-12));
}

TEST_CASE("superft_rate: periodic, piecewise linear, bounded by [eta_base, eta_max]") {
    const long C = 10;
    double lo = 1e9, hi = 0.0;
    for (long t = 0; t < 3 * C; ++t) {
        double r = superft_rate(t, C, 1e-4, 1e-1);
        CHECK(r == Catch::Approx(superft_rate(t + C, C, 1e-4, 1e-1)).epsilon(1e-12));
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    CHECK(lo == Catch::Approx(1e-4).epsilon(1e-12));
    CHECK(hi == Catch::Approx(1e-1).epsilon(1e-12));
    CHECK_THROWS_AS(superft_rate(0, 1, 1e-4, 1e-1), ArgumentError);
}

TEST_CASE("layer_rates: lwlrd spec expands to the per-layer vector") {
    ScheduleSpec s;
    s.kind = ScheduleKind::lwlrd;
    s.eta_high = 1e-2;
    s.eta_low = 1e-4;
    auto rates = layer_rates(s, 3, 0, 100);
    REQUIRE(rates.size() == 3);
    CHECK(rates[0] == Catch::Approx(1e-2).epsilon(1e-12));
    CHECK(rates[1] == Catch::Approx(1e-3).epsilon(1e-12));
    CHECK(rates[2] == Catch::Approx(1e-4).epsilon(1e-12));
}

TEST_CASE("layer_rates: super_ft switches to the phase-2 ceiling") {
    ScheduleSpec s;
    s.kind = ScheduleKind::super_ft;
    s.cycle_len = 10;
    // phase 1 peak at step 5; phase 2 starts at 10% of 200 steps = step 20
    CHECK(layer_rates(s, 2, 5, 200)[0] == Catch::Approx(1e-1).epsilon(1e-12));
    CHECK(layer_rates(s, 2, 25, 200)[0] == Catch::Approx(1e-3).epsilon(1e-12));
}
