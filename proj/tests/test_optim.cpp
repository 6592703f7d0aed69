#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "ctpm/optim.hpp"

using namespace ctpm;
using namespace ctpm::diffcore;

TEST_CASE("adam two steps with constant gradient, frozen oracle") {
    // independent derivation (tests/oracle/oracles.txt, adam_two_steps):
    //   step 1: m=0.2, v=0.004, m^=2, v^=4, p -> -0.0099999999500000013
    //   step 2: m=0.38, v=0.007996, m^=2, v^=4, p -> -0.019999999899999933
    std::vector<double> p{0.0};
    std::vector<double> g{2.0};
    AdamState adam(1, 0.01);
    adam_step(p, g, adam);
    REQUIRE(p[0] == Catch::Approx(-0.0099999999500000013).epsilon(1e-15));
    adam_step(p, g, adam);
    REQUIRE(p[0] == Catch::Approx(-0.019999999899999933).epsilon(1e-15));
}

TEST_CASE("adam converges on a quadratic bowl") {
    std::vector<double> p{5.0, -3.0};
    AdamState adam(2, 0.05);
    std::vector<double> g(2);
    for (int it = 0; it < 2000; ++it) {
        g[0] = 2.0 * (p[0] - 1.0);
        g[1] = 2.0 * (p[1] + 2.0);
        adam_step(p, g, adam);
    }
    REQUIRE(p[0] == Catch::Approx(1.0).margin(1e-3));
    REQUIRE(p[1] == Catch::Approx(-2.0).margin(1e-3));
}

TEST_CASE("adam rejects shape mismatch and non-finite gradients") {
    std::vector<double> p{0.0, 0.0};
    AdamState adam(2, 0.01);
    std::vector<double> bad_len{1.0};
    REQUIRE_THROWS_AS(adam_step(p, bad_len, adam), ShapeError);
    std::vector<double> bad_val{1.0, std::numeric_limits<double>::quiet_NaN()};
    REQUIRE_THROWS_AS(adam_step(p, bad_val, adam), NumericError);
}

TEST_CASE("bias correction makes the first step size lr-scaled") {
    // with g constant, the first update is lr * g/(|g| + eps) ~= lr * sign(g)
    std::vector<double> p{0.0};
    std::vector<double> g{-7.0};
    AdamState adam(1, 0.02);
    adam_step(p, g, adam);
    REQUIRE(p[0] == Catch::Approx(0.02).epsilon(1e-7));
}
