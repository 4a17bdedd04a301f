#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <limits>

#include "sbrw/numerics.hpp"

using namespace sbrw;

TEST_CASE("compensated sum keeps cancelled small terms") {
    CompensatedSum s;
    s.add(1e20);
    s.add(1.0);
    s.add(-1e20);
    REQUIRE(s.value() == 1.0);
}

TEST_CASE("quadrature backends hit easy closed forms") {
    REQUIRE(integrate([](double x) { return x * x; }, 0.0, 1.0) == Catch::Approx(1.0 / 3).epsilon(1e-12));
    const double inf = std::numeric_limits<double>::infinity();
    REQUIRE(integrate([](double x) { return std::exp(-0.5 * x * x); }, -inf, inf) ==
            Catch::Approx(std::sqrt(2.0 * 3.14159265358979324)).epsilon(1e-10));
    REQUIRE(integrate_singular([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0) ==
            Catch::Approx(2.0).epsilon(1e-10));
    REQUIRE(integrate_power_tail([](double x) { return std::pow(x, -2.5); }, 1.0, 2.5) ==
            Catch::Approx(1.0 / 1.5).epsilon(1e-10));
}

TEST_CASE("bisection finds bracketed roots and rejects bad brackets") {
    auto r = bisect([](double x) { return x * x - 2.0; }, 0.0, 2.0);
    REQUIRE(r.x == Catch::Approx(std::sqrt(2.0)).epsilon(1e-10));
    REQUIRE(std::abs(r.residual) < 1e-10);
    REQUIRE_THROWS(bisect([](double x) { return x * x + 1.0; }, -1.0, 1.0));
}

TEST_CASE("golden section minimum") {
    const double x = golden_min([](double t) { return (t - 1.3) * (t - 1.3); }, 0.0, 3.0, 1e-10);
    REQUIRE(x == Catch::Approx(1.3).margin(1e-8));
}

TEST_CASE("line fit recovers exact coefficients") {
    std::vector<double> xs{0.0, 1.0, 2.0, 3.0}, ys;
    for (double x : xs) ys.push_back(0.75 * x - 2.0);
    auto fit = fit_line(xs, ys);
    REQUIRE(fit.slope == Catch::Approx(0.75).epsilon(1e-13));
    REQUIRE(fit.intercept == Catch::Approx(-2.0).epsilon(1e-13));
}

TEST_CASE("ode integrator: exponential decay and event stop") {
    auto deriv = [](double, const std::array<double, 1>& y) {
        return std::array<double, 1>{-y[0]};
    };
    auto never = [](double, const std::array<double, 1>&) { return false; };
    auto trace = integrate_ode<1>(deriv, {1.0}, 0.0, 2.0, 1e-12, never);
    REQUIRE_FALSE(trace.stopped);
    REQUIRE(trace.y.back()[0] == Catch::Approx(std::exp(-2.0)).epsilon(1e-9));

    auto halfway = [](double, const std::array<double, 1>& y) { return y[0] <= 0.5; };
    auto ev = integrate_ode<1>(deriv, {1.0}, 0.0, 2.0, 1e-12, halfway);
    REQUIRE(ev.stopped);
    REQUIRE(ev.s.back() == Catch::Approx(std::log(2.0)).margin(1e-7));
}

TEST_CASE("hashing helpers are stable") {
    REQUIRE(fnv1a("") == 14695981039346656037ULL);
    REQUIRE(fnv1a("abc") == fnv1a("abc"));
    REQUIRE(fnv1a("abc") != fnv1a("abd"));
    REQUIRE(hex64(255) == "00000000000000ff");
}
