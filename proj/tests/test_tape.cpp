#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "ctpm/tape.hpp"

using namespace ctpm::diffcore;

TEST_CASE("tape reproduces hand derivatives") {
    Tape tape;
    const Var x = tape.leaf(0.5);
    const Var y = tape.leaf(2.0);
    const Var f = x * y + exp(x);
    REQUIRE(value(f) == Catch::Approx(0.5 * 2.0 + std::exp(0.5)).epsilon(1e-15));
    tape.reverse(f);
    // df/dx = y + exp(x), df/dy = x
    REQUIRE(tape.gradient(x) == Catch::Approx(2.0 + std::exp(0.5)).epsilon(1e-14));
    REQUIRE(tape.gradient(y) == Catch::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("tape handles composite scalar functions") {
    Tape tape;
    const Var x = tape.leaf(0.3);
    const Var f = sigmoid(x) * softplus(x) - log(x) / sqrt(x);
    tape.reverse(f);
    const double s = 1.0 / (1.0 + std::exp(-0.3));
    const double sp = std::log1p(std::exp(0.3));
    const double expect_val = s * sp - std::log(0.3) / std::sqrt(0.3);
    REQUIRE(value(f) == Catch::Approx(expect_val).epsilon(1e-14));
    // d/dx: s'(x) sp + s sp'  - [ (1/x)/sqrt(x) - log(x) * (1/2) x^{-3/2} ]
    const double expect_grad = s * (1 - s) * sp + s * s -
                               (1.0 / 0.3 / std::sqrt(0.3) -
                                std::log(0.3) * 0.5 / std::pow(0.3, 1.5));
    REQUIRE(tape.gradient(x) == Catch::Approx(expect_grad).epsilon(1e-12));
}

TEST_CASE("finite difference check passes on a random expression") {
    LossFn fn = [](Tape& t, const std::vector<Var>& p) {
        Var acc = t.constant(0.0);
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc = acc + sigmoid(p[i]) * softplus(p[(i + 1) % p.size()]);
        }
        return acc + exp(p[0] * p[1]) + tanh(p[2]);
    };
    std::vector<double> at{0.2, -0.4, 0.9, 0.1};
    REQUIRE(finite_diff_check(fn, at, 1e-5) < 1e-6);
}

TEST_CASE("clamp_min value and derivative") {
    {
        Tape t;
        const Var x = t.leaf(2.0);
        const Var c = clamp_min(x, 0.5);
        REQUIRE(value(c) == 2.0);
        t.reverse(c);
        REQUIRE(t.gradient(x) == 1.0);
    }
    {
        Tape t;
        const Var x = t.leaf(0.1);
        const Var c = clamp_min(x, 0.5);
        REQUIRE(value(c) == 0.5);
        t.reverse(c);
        REQUIRE(t.gradient(x) == 0.0);
    }
}

TEST_CASE("non-finite values are rejected at the push") {
    Tape t;
    const Var x = t.leaf(-1.0);
    REQUIRE_THROWS_AS(log(x), ctpm::NumericError);
    const Var z = t.leaf(0.0);
    REQUIRE_THROWS_AS(t.leaf(1.0) / z, ctpm::NumericError);
}

TEST_CASE("lgamma derivative is the digamma") {
    Tape t;
    const Var x = t.leaf(2.7);
    const Var f = lgamma(x);
    t.reverse(f);
    REQUIRE(value(f) == Catch::Approx(std::lgamma(2.7)).epsilon(1e-14));
    // central difference of lgamma
    const double h = 1e-6;
    const double fd = (std::lgamma(2.7 + h) - std::lgamma(2.7 - h)) / (2 * h);
    REQUIRE(t.gradient(x) == Catch::Approx(fd).epsilon(1e-8));
}

TEST_CASE("sum and dot over spans") {
    Tape t;
    std::vector<Var> a{t.leaf(1.0), t.leaf(2.0), t.leaf(3.0)};
    std::vector<Var> b{t.leaf(-1.0), t.leaf(0.5), t.leaf(2.0)};
    const Var s = sum(a);
    const Var d = dot(a, b);
    REQUIRE(value(s) == 6.0);
    REQUIRE(value(d) == Catch::Approx(-1.0 + 1.0 + 6.0));
    t.reverse(d);
    REQUIRE(t.gradient(a[2]) == 2.0);
    REQUIRE(t.gradient(b[0]) == 1.0);
}
