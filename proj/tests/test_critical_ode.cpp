#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sbrw/critical_ode.hpp"

using namespace sbrw;

TEST_CASE("critical coefficient closed values") {
    REQUIRE(critical_coefficient(1.5, 1.0) == Catch::Approx(2.8278818252263234).epsilon(1e-12));
    REQUIRE(critical_coefficient(2.0, 1.0 / 6.0) == Catch::Approx(1.5).epsilon(1e-12));
    // cstar = 1/(alpha(1+alpha)) collapses the power to 1
    for (double alpha : {1.2, 1.5, 1.9}) {
        const double cst = 1.0 / (alpha * (1.0 + alpha));
        REQUIRE(critical_coefficient(alpha, cst) == Catch::Approx(1.0 + 1.0 / alpha).epsilon(1e-12));
    }
}

TEST_CASE("trade-off curve: minimum location and value") {
    const double alpha = 1.5, cstar = 1.0;
    const double xm = tradeoff_argmin(alpha, cstar);
    REQUIRE(tradeoff(xm, alpha, cstar) ==
            Catch::Approx(critical_coefficient(alpha, cstar)).epsilon(1e-12));
    // strictly above the minimum on either side
    REQUIRE(tradeoff(0.8 * xm, alpha, cstar) > tradeoff(xm, alpha, cstar));
    REQUIRE(tradeoff(1.2 * xm, alpha, cstar) > tradeoff(xm, alpha, cstar));
}

TEST_CASE("upper root of the trade-off equation") {
    const double r = tradeoff_upper_root(2.0, 2.0, 1.0 / 6.0);
    REQUIRE(r == Catch::Approx(1.8546376797184618).epsilon(1e-10));
    REQUIRE(tradeoff(r, 2.0, 1.0 / 6.0) == Catch::Approx(2.0).margin(1e-10));
    REQUIRE(r > tradeoff_argmin(2.0, 1.0 / 6.0));
    REQUIRE_THROWS(tradeoff_upper_root(1.4, 2.0, 1.0 / 6.0)); // below the critical value
}

TEST_CASE("profile solution reproduces the driftless closed form") {
    auto sol = solve_profile(0.0, 1.5, 1.0, 1.0);
    REQUIRE(sol.blew_down);
    REQUIRE(sol.t_max == Catch::Approx(0.4).epsilon(1e-6));
    REQUIRE(sol.decay_scale == Catch::Approx(1.4426999059072136).epsilon(1e-6));
    REQUIRE(sol.conservation_residual < 1e-8);
    REQUIRE(sol.eval(0.2) == Catch::Approx(0.757858283255199).epsilon(1e-5));
    REQUIRE_THROWS(sol.eval(10.0));
}

TEST_CASE("collapse time grows with the barrier coefficient, decay shrinks") {
    const double alpha = 1.5, cstar = 1.0;
    const double ac = critical_coefficient(alpha, cstar);
    double prev_t = 0.0, prev_k = 1e99;
    // collapse times explode near the critical coefficient and leave the
    // solver's exploration budget around frac 0.95; stay below that
    for (double frac : {0.0, 0.3, 0.6, 0.7, 0.8, 0.9}) {
        auto sol = solve_profile(frac * ac, alpha, cstar, 1.0);
        REQUIRE(sol.blew_down);
        REQUIRE(sol.t_max > prev_t);
        REQUIRE(sol.decay_scale < prev_k);
        REQUIRE(sol.decay_scale > 0.0);
        REQUIRE(sol.conservation_residual < 1e-8);
        prev_t = sol.t_max;
        prev_k = sol.decay_scale;
    }
    // above the critical coefficient a self-similar profile survives forever
    auto open = solve_profile(1.05 * ac, alpha, cstar, 1.0);
    REQUIRE_FALSE(open.blew_down);
    REQUIRE(std::isinf(open.t_max));

    REQUIRE(decay_constant(0.0, alpha, cstar) ==
            Catch::Approx(std::pow(2.5, 0.4)).epsilon(1e-6));
    REQUIRE_THROWS(decay_constant(1.1 * ac, alpha, cstar));
}

TEST_CASE("decay bounds on an exact driftless profile") {
    // h(t) = (1 - 0.5 t)^{0.4} solves the profile equation with a = 0,
    // alpha = 1.5, cstar = 0.2; its best-over-rho bound is identically h(0).
    auto h = [](double t) { return std::pow(1.0 - 0.5 * t, 0.4); };
    auto bounds = profile_decay_bounds(h, 0.0, 1.5, 0.2);
    REQUIRE(bounds.direct == Catch::Approx(0.242141716744801).epsilon(1e-6));
    REQUIRE(bounds.best == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("corridor margin: closed form equals quadrature") {
    for (auto [lambda, a, b, alpha, cstar] :
         {std::tuple{std::log(3.0), 2.2, 0.8, 1.5, 0.7},
          {std::log(2.0), 3.0, 1.5, 2.0, 1.0 / 6.0},
          {0.7, 1.9, 0.6, 1.2, 0.4}}) {
        CorridorShape cs(lambda, a, b, alpha, cstar);
        for (double rho : {0.0, 0.3, 0.7, 1.0}) {
            REQUIRE(corridor_margin(rho, cs) ==
                    Catch::Approx(corridor_margin_quadrature(rho, cs)).margin(1e-8));
        }
    }
}

TEST_CASE("corridor margin at the trade-off root is flat and positive") {
    const double alpha = 1.5, cstar = 1.0, b = 2.0;
    const double a = tradeoff(b, alpha, cstar); // makes the leading term vanish
    CorridorShape cs(std::log(4.0), a, b, alpha, cstar);
    const double m0 = corridor_margin(0.0, cs);
    REQUIRE(m0 > 0.0);
    for (double rho : {0.25, 0.5, 1.0})
        REQUIRE(corridor_margin(rho, cs) == Catch::Approx(m0).margin(1e-10));
}
