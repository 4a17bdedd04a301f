#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sbrw/spine_law.hpp"
#include "sbrw/stats.hpp"

using namespace sbrw;

TEST_CASE("pareto spine calibration in closed form") {
    auto law = make_pareto_spine(1.5, 1.0, 2.0);
    REQUIRE(law.left_weight == Catch::Approx(0.6464466094067263).epsilon(1e-12));
    REQUIRE(law.left_rate == Catch::Approx(0.1893398282201787).epsilon(1e-12));
    REQUIRE(law.tail(2.0) == Catch::Approx(std::pow(2.0, -1.5)).epsilon(1e-12));
    REQUIRE(law.tail(8.0) == Catch::Approx(std::pow(8.0, -1.5)).epsilon(1e-12));

    auto law2 = make_pareto_spine(2.0, 1.0, 10.0);
    REQUIRE(law2.left_weight == Catch::Approx(0.99).epsilon(1e-12));

    REQUIRE_THROWS(make_pareto_spine(1.5, 4.0, 1.0)); // tail mass 4 >= 1
    REQUIRE_THROWS(make_pareto_spine(1.0, 1.0, 2.0)); // alpha at the boundary
    REQUIRE_THROWS(make_pareto_spine(2.4, 1.0, 2.0));
}

TEST_CASE("quadrature re-derives mass one and mean zero") {
    for (auto [alpha, c, y0] : {std::tuple{1.5, 1.0, 2.0}, {1.2, 0.5, 1.0}, {2.0, 1.0, 10.0}}) {
        auto law = make_pareto_spine(alpha, c, y0);
        auto rep = validate_boundary_tail(law);
        REQUIRE(rep.mass_dev < 1e-8);
        REQUIRE(rep.mean_abs < 1e-7);
        REQUIRE(rep.max_tail_dev < 1e-12);
        REQUIRE(rep.exp_moment_finite);
    }
}

TEST_CASE("exponential moment exists exactly below the left rate") {
    auto law = make_pareto_spine(1.5, 1.0, 2.0);
    auto good = validate_boundary_tail(law, 0.5 * law.left_rate);
    REQUIRE(good.exp_moment_finite);
    REQUIRE(good.exp_moment > 1.0); // Jensen at mean zero
    auto bad = validate_boundary_tail(law, 1.5 * law.left_rate);
    REQUIRE_FALSE(bad.exp_moment_finite);
}

TEST_CASE("inverse-cdf sampler matches its own distribution function") {
    auto law = make_pareto_spine(1.5, 1.0, 2.0);
    Stream g(101);
    std::vector<double> xs;
    for (int i = 0; i < 20000; ++i) xs.push_back(law.sample(g));
    const double d = ks_one_sample(xs, [&](double x) { return law.cdf(x); });
    REQUIRE(d < ks_threshold_one_sample(xs.size(), 1e-3));
}

TEST_CASE("config round trip preserves the law exactly") {
    auto law = make_pareto_spine(1.7, 0.31, 2.43);
    auto back = spine_from_config(spine_to_config(law));
    REQUIRE(back.alpha == law.alpha);
    REQUIRE(back.tail_const == law.tail_const);
    REQUIRE(back.tail_threshold == law.tail_threshold);
    REQUIRE(back.left_weight == law.left_weight);
    REQUIRE(back.left_rate == law.left_rate);

    REQUIRE_THROWS(spine_from_config("alpha=1.5\ntail_const=1\n"));
    REQUIRE_THROWS(parse_key_values("no equals sign here"));
    auto kv = parse_key_values("# comment\n a = 1.5 \n\nb=2\n");
    REQUIRE(kv.at("a") == "1.5");
    REQUIRE(kv.at("b") == "2");
}

TEST_CASE("auxiliary step laws") {
    GaussianStepLaw gauss(0.2);
    REQUIRE(gauss.cdf(0.0) == Catch::Approx(0.5));
    REQUIRE(gauss.variance() == Catch::Approx(0.04));
    Stream g(7);
    double acc = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const double x = gauss.sample(g);
        acc += x * x;
    }
    REQUIRE(acc / n == Catch::Approx(0.04).epsilon(0.05));

    REQUIRE_THROWS(LatticeStepLaw({{1, 0.7}, {-1, 0.7}}));
    LatticeStepLaw pm({{1, 0.5}, {-1, 0.5}});
    long ups = 0;
    for (int i = 0; i < 10000; ++i)
        if (pm.sample(g) > 0) ++ups;
    REQUIRE(std::abs(ups / 10000.0 - 0.5) < 0.025);

    auto path = walk_path(pm, 16, g);
    REQUIRE(path.size() == 17);
    REQUIRE(path[0] == 0.0);
    for (std::size_t j = 1; j < path.size(); ++j)
        REQUIRE(std::abs(std::abs(path[j] - path[j - 1]) - 1.0) < 1e-15);
}
