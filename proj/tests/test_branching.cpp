#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "sbrw/branching.hpp"
#include "sbrw/critical_ode.hpp"
#include "sbrw/stable_process.hpp"

using namespace sbrw;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

SpineLaw small_spine() { return make_pareto_spine(1.5, 0.01, 0.3); }

OffspringModel small_model() { return make_poisson_boundary_model(small_spine(), 5.0); }

// Brood-level tilted quantities, averaged over many sampled broods.
struct BroodMoments {
    Estimate exp_sum;       // mean of sum e^{-V}
    Estimate weighted_sum;  // mean of sum V e^{-V}
    Estimate square_sum;    // mean of sum V^2 e^{-V}
    Estimate size;
};

BroodMoments brood_moments(const OffspringModel& model, double barrier, long broods,
                           std::uint64_t seed) {
    Stream g(seed);
    std::vector<double> es, vs, sq, sz;
    for (long i = 0; i < broods; ++i) {
        const auto kids = sample_brood(model, 0.0, barrier, g);
        double se = 0.0, sv = 0.0, s2 = 0.0;
        for (double v : kids) {
            const double w = std::exp(-v);
            se += w;
            sv += v * w;
            s2 += v * v * w;
        }
        es.push_back(se);
        vs.push_back(sv);
        sq.push_back(s2);
        sz.push_back(static_cast<double>(kids.size()));
    }
    return {mean_estimate(es), mean_estimate(vs), mean_estimate(sq), mean_estimate(sz)};
}

} // namespace

TEST_CASE("tilted brood intensity matches quadrature and inverts cleanly") {
    const BroodIntensity tbl(small_spine(), 5.0);

    // total tilted mass below the cut, and interior values, from quadrature
    REQUIRE(tbl.total() == Catch::Approx(1.116150590803647).epsilon(1e-6));
    REQUIRE(tbl.cumulative(0.5) == Catch::Approx(0.98095126911097557).epsilon(1e-6));
    REQUIRE(tbl.cumulative(1.0) == Catch::Approx(1.0173761367186747).epsilon(1e-6));
    REQUIRE(tbl.cumulative(2.0) == Catch::Approx(1.0435509403955563).epsilon(1e-6));
    REQUIRE(tbl.cumulative(3.5) == Catch::Approx(1.0725483141206369).epsilon(1e-6));

    // the piece below the threshold is closed form
    const SpineLaw spine = small_spine();
    const double lam = spine.left_rate;
    const double at_y0 = spine.left_weight * lam * std::exp(spine.tail_threshold) / (1.0 + lam);
    REQUIRE(tbl.cumulative(spine.tail_threshold) == Catch::Approx(at_y0).epsilon(1e-12));
    REQUIRE(tbl.cumulative(-0.5) ==
            Catch::Approx(at_y0 * std::exp((1.0 + lam) * (-0.5 - spine.tail_threshold)))
                .epsilon(1e-12));

    // saturation and inversion
    REQUIRE(tbl.cumulative(6.0) == tbl.total());
    REQUIRE(tbl.position(tbl.total()) == Catch::Approx(5.0).margin(1e-9));
    for (double v : {-1.0, 0.1, 0.3, 0.42, 1.7, 3.3, 4.9}) {
        REQUIRE(tbl.position(tbl.cumulative(v)) == Catch::Approx(v).margin(1e-9));
    }
    for (double frac : {1e-6, 0.1, 0.5, 0.83, 0.999}) {
        const double m = frac * tbl.total();
        REQUIRE(tbl.cumulative(tbl.position(m)) == Catch::Approx(m).epsilon(1e-9));
    }

    REQUIRE_THROWS(tbl.position(0.0));
    REQUIRE_THROWS(tbl.position(1.01 * tbl.total()));
    REQUIRE_THROWS(BroodIntensity(small_spine(), 0.1));  // cut below the tail threshold
}

TEST_CASE("poisson boundary model reports its defect pair") {
    const SpineLaw unit = make_pareto_spine(1.5, 1.0, 2.0);

    const auto model = make_poisson_boundary_model(unit, 100.0);
    REQUIRE(model.defect_mass == Catch::Approx(1e-3).epsilon(1e-12));
    REQUIRE(model.defect_mean == Catch::Approx(0.3).epsilon(1e-12));
    REQUIRE(model.alpha() == 1.5);

    // the defect budget is 1e-3: T = 100 sits exactly on it, T = 50 exceeds it
    REQUIRE_THROWS(make_poisson_boundary_model(unit, 50.0));
    // cut below the power-tail region
    REQUIRE_THROWS(make_poisson_boundary_model(unit, 1.5));

    // pushing the cut out drives the defect to zero (full tilted mass);
    // such a model serves reporting only, its broods are unsamplable
    const auto far = make_poisson_boundary_model(unit, 1e4);
    REQUIRE(far.defect_mass == Catch::Approx(1e-6).epsilon(1e-12));
    REQUIRE(std::isinf(far.brood_mean));
    Stream g(1);
    REQUIRE_THROWS(sample_brood(far, 0.0, 1.0, g));
}

TEST_CASE("campbell averages match the boundary normalization") {
    const auto model = small_model();
    REQUIRE(model.defect_mass == Catch::Approx(0.00089442719099991588).epsilon(1e-12));
    REQUIRE(model.defect_mean == Catch::Approx(0.013416407864998738).epsilon(1e-12));

    const auto mc = brood_moments(model, kInf, 100000, derive_key(2024, 0xB1));
    REQUIRE(std::abs(mc.exp_sum.value - 0.99910557280900008) < 3.0 * mc.exp_sum.std_error);
    REQUIRE(std::abs(mc.weighted_sum.value - (-0.013416407864998738)) <
            3.0 * mc.weighted_sum.std_error);
    REQUIRE(std::abs(mc.size.value - 1.116150590803647) < 3.0 * mc.size.std_error);
}

TEST_CASE("binary gaussian model is exactly calibrated") {
    const auto model = make_binary_gaussian_model();
    const double two_log_two = 2.0 * std::log(2.0);
    REQUIRE(model.gauss_mean == Catch::Approx(two_log_two).epsilon(1e-15));
    REQUIRE(model.gauss_sd * model.gauss_sd == Catch::Approx(two_log_two).epsilon(1e-14));
    REQUIRE(model.spine_variance() == Catch::Approx(1.3862943611198906).epsilon(1e-14));
    REQUIRE(model.brood_mean == 2.0);
    REQUIRE(model.alpha() == 2.0);
    REQUIRE_THROWS(small_model().spine_variance());

    const auto mc = brood_moments(model, kInf, 100000, derive_key(2024, 0xB2));
    REQUIRE(std::abs(mc.exp_sum.value - 1.0) < 3.0 * mc.exp_sum.std_error);
    REQUIRE(std::abs(mc.weighted_sum.value) < 3.0 * mc.weighted_sum.std_error);
    REQUIRE(std::abs(mc.square_sum.value - 1.3862943611198906) < 3.0 * mc.square_sum.std_error);
}

TEST_CASE("brood sampling respects the barrier and the cap") {
    const auto model = small_model();

    SECTION("no room below the barrier means no children") {
        Stream g(derive_key(11, 1));
        for (int i = 0; i < 50; ++i) {
            REQUIRE(sample_brood(model, 0.0, -1e9, g).empty());
        }
    }

    SECTION("children are never materialized above the barrier") {
        Stream g(derive_key(11, 2));
        for (int i = 0; i < 2000; ++i) {
            for (double v : sample_brood(model, 0.25, 1.0, g)) REQUIRE(v <= 1.0);
        }
    }

    SECTION("expected brood size below a level matches quadrature") {
        const auto mc = brood_moments(model, 1.0, 20000, derive_key(11, 3));
        REQUIRE(std::abs(mc.size.value - 1.0173761367186747) < 3.0 * mc.size.std_error);
    }

    SECTION("a whole-brood cap of one leaves sizes in {0, 1}") {
        OffspringModel capped = model;
        capped.cap = 1;
        Stream g(derive_key(11, 4));
        for (int i = 0; i < 2000; ++i) {
            REQUIRE(sample_brood(capped, 0.0, kInf, g).size() <= 1);
        }
        OffspringModel binary = make_binary_gaussian_model();
        binary.cap = 1;
        Stream h(derive_key(11, 5));
        for (int i = 0; i < 50; ++i) {
            REQUIRE(sample_brood(binary, 0.0, kInf, h).empty());
        }
    }

    SECTION("an inactive cap reproduces the uncapped brood exactly") {
        OffspringModel capped = model;
        capped.cap = 1000000000L;
        for (int i = 0; i < 200; ++i) {
            Stream g1(derive_key(12, static_cast<std::uint64_t>(i)));
            Stream g2(derive_key(12, static_cast<std::uint64_t>(i)));
            REQUIRE(sample_brood(model, 0.0, 2.0, g1) == sample_brood(capped, 0.0, 2.0, g2));
        }
    }

    SECTION("a heavy cut is only samplable under a low barrier") {
        const auto heavy = make_poisson_boundary_model(small_spine(), 25.0);
        REQUIRE(heavy.brood_mean == Catch::Approx(386161.657369).epsilon(1e-4));
        Stream g(derive_key(11, 6));
        REQUIRE_THROWS(sample_brood(heavy, 0.0, kInf, g));

        Stream h(derive_key(11, 7));
        const auto kids = sample_brood(heavy, 0.0, 1.0, h);
        for (double v : kids) REQUIRE(v <= 1.0);

        // the cut brood size dwarfs a small cap, so every brood is discarded
        OffspringModel capped = heavy;
        capped.cap = 100;
        Stream u(derive_key(11, 8));
        for (int i = 0; i < 50; ++i) {
            REQUIRE(sample_brood(capped, 0.0, 1.0, u).empty());
        }

        // a cap above the cut brood size keeps the brood, identical pathwise
        OffspringModel loose = heavy;
        loose.cap = 4000000000000000000L;
        for (int i = 0; i < 50; ++i) {
            Stream g1(derive_key(13, static_cast<std::uint64_t>(i)));
            Stream g2(derive_key(13, static_cast<std::uint64_t>(i)));
            REQUIRE(sample_brood(heavy, 0.0, 1.0, g1) == sample_brood(loose, 0.0, 1.0, g2));
        }
    }
}

TEST_CASE("barrier specs evaluate and validate") {
    const auto wall = power_barrier(2.0, 1.5);
    REQUIRE(wall.exponent == Catch::Approx(0.4).epsilon(1e-15));
    REQUIRE(wall.upper(8) == Catch::Approx(4.59479341998814).epsilon(1e-12));
    REQUIRE(wall.lower(8) == -kInf);
    REQUIRE_FALSE(wall.linear());

    const auto corridor = power_corridor(2.0, 0.5, 1.5);
    REQUIRE(corridor.has_lower());
    REQUIRE(corridor.lower(8) == Catch::Approx(3.446095064991105).epsilon(1e-12));
    REQUIRE(corridor.upper(8) == wall.upper(8));

    const auto ramp = linear_barrier(0.25);
    REQUIRE(ramp.linear());
    REQUIRE(ramp.upper(12) == 3.0);

    REQUIRE_THROWS(power_barrier(0.0, 1.5));
    REQUIRE_THROWS(power_barrier(-1.0, 1.5));
    REQUIRE_THROWS(power_barrier(2.0, 0.9));
    REQUIRE_THROWS(power_corridor(2.0, 0.0, 1.5));
    REQUIRE_THROWS(power_corridor(2.0, 2.0, 1.5));
}

TEST_CASE("every materialized individual respects the walls") {
    SECTION("single power wall, exhaustive audit") {
        const auto model = make_binary_gaussian_model();
        const auto wall = power_barrier(6.0, 2.0);
        for (int t = 0; t < 10; ++t) {
            const auto gens = trace_population(model, wall, 150,
                                               derive_key(5150, static_cast<std::uint64_t>(t)),
                                               SurvivalCaps{20000, 1});
            REQUIRE(gens.front().generation == 0);
            REQUIRE(gens.front().members == std::vector<double>{0.0});
            for (const auto& p : gens) {
                if (p.generation == 0) continue;
                for (double pos : p.members) {
                    REQUIRE(pos <= wall.upper(p.generation) + 1e-12);
                }
            }
        }
    }

    SECTION("corridor walls, exhaustive audit") {
        const auto model = small_model();
        const double a = 8.0, b = 4.0, p = scaling_exponent(1.5);
        for (int t = 0; t < 100; ++t) {
            auto audit = [&](long i, double pos) {
                REQUIRE(pos <= a * std::pow(static_cast<double>(i), p) + 1e-12);
                REQUIRE(pos >= (a - b) * std::pow(static_cast<double>(i), p) - 1e-12);
            };
            two_barrier_count(model, a, b, std::log(4.0), 1,
                              derive_key(5151, static_cast<std::uint64_t>(t)),
                              SurvivalCaps{50000, 1}, std::nullopt, audit);
        }
    }
}

TEST_CASE("shared randomness makes survival monotone") {
    const auto model = make_binary_gaussian_model();
    const SurvivalCaps caps{20000, 1};

    SECTION("nondecreasing in the barrier coefficient") {
        const auto curve = survival_curve(model, {2.0, 3.5, 5.0, 6.5, 8.0}, 200, 200, caps, 3131);
        REQUIRE(curve.estimates.size() == 5);
        for (std::size_t i = 0; i + 1 < curve.estimates.size(); ++i) {
            REQUIRE(curve.estimates[i].value <= curve.estimates[i + 1].value + 1e-12);
        }
    }

    SECTION("nonincreasing in the horizon") {
        const auto wall = power_barrier(5.0, 2.0);
        double prev = 1.0;
        for (long n : {50L, 100L, 200L}) {
            const auto rep = survival_prob(model, wall, n, 200, caps, 777, 0);
            REQUIRE(rep.estimate.value <= prev + 1e-12);
            prev = rep.estimate.value;
        }
    }
}

TEST_CASE("a wall below all reachable children extinguishes immediately") {
    const SurvivalCaps caps{10000, 1};
    const auto binary = linear_barrier_check(make_binary_gaussian_model(), -30.0, 10, 200, caps, 41);
    REQUIRE(binary.estimate.value == 0.0);
    const auto poisson = linear_barrier_check(small_model(), -30.0, 10, 200, caps, 42);
    REQUIRE(poisson.estimate.value == 0.0);
}

TEST_CASE("survival separates well above and below the critical coefficient") {
    const auto model = make_binary_gaussian_model();
    const double sigma2 = 2.0 * std::log(2.0);
    const double a_hat = 1.5 * std::cbrt(3.0 * pi() * pi() * sigma2);
    REQUIRE(a_hat == Catch::Approx(5.1742818067870448).epsilon(1e-12));
    // the generic critical-coefficient formula specializes to the same value
    REQUIRE(critical_coefficient(2.0, gaussian_confinement_rate(std::sqrt(sigma2))) ==
            Catch::Approx(a_hat).epsilon(1e-12));

    const SurvivalCaps caps{10000, 1};
    const auto high = survival_prob(model, power_barrier(2.0 * a_hat, 2.0), 2000, 200, caps, 51);
    REQUIRE(high.estimate.value > 0.2);
    const auto low = survival_prob(model, power_barrier(0.3 * a_hat, 2.0), 2000, 400, caps, 52);
    REQUIRE(low.estimate.value < 1e-2);
}

TEST_CASE("bisection brackets the survival crossing") {
    const auto model = make_binary_gaussian_model();
    const SurvivalCaps caps{10000, 1};

    const auto res = critical_a_search(model, 150, 150, 2.5, 9.0, 0.5, caps, 992);
    REQUIRE(res.crossing > 2.5);
    REQUIRE(res.crossing < 9.0);
    REQUIRE(res.bracket_hi - res.bracket_lo == Catch::Approx(6.5 / 1024.0).epsilon(1e-12));
    REQUIRE(res.crossing == Catch::Approx(0.5 * (res.bracket_lo + res.bracket_hi)));
    REQUIRE(res.evaluations.size() == 12);  // two bracket probes plus ten bisections
    for (const auto& [a, s] : res.evaluations) {
        REQUIRE(s >= 0.0);
        REQUIRE(s <= 1.0);
    }

    REQUIRE_THROWS(critical_a_search(model, 150, 150, 7.5, 9.0, 0.5, caps, 992));
    REQUIRE_THROWS(critical_a_search(model, 150, 150, 0.3, 0.8, 0.5, caps, 992));
    REQUIRE_THROWS(critical_a_search(model, 150, 150, 3.0, 2.0, 0.5, caps, 992));
    REQUIRE_THROWS(critical_a_search(model, 150, 150, 2.5, 9.0, 1.5, caps, 992));
}

TEST_CASE("corridor counts obey degeneracy, truncation order, and growth") {
    const auto binary = make_binary_gaussian_model();
    const auto poisson = small_model();
    const SurvivalCaps caps{50000, 1};
    const double log4 = std::log(4.0);

    SECTION("degenerate corridors force zero") {
        REQUIRE(two_barrier_count(binary, 3.0, 3.0, std::log(2.0), 0, 1, caps) == 0);
        REQUIRE(two_barrier_count(binary, 3.0, 5.0, std::log(2.0), 0, 1, caps) == 0);
        REQUIRE(two_barrier_count(binary, 3.0, -1.0, std::log(2.0), 0, 1, caps) == 0);
    }

    SECTION("preconditions") {
        REQUIRE_THROWS(two_barrier_count(binary, 3.0, 1.0, 1.0, 0, 1, caps));  // e^1 not integer
        REQUIRE_THROWS(two_barrier_count(binary, 3.0, 1.0, std::log(2.0), -1, 1, caps));
        REQUIRE_THROWS(two_barrier_count(binary, 3.0, 1.0, std::log(100.0), 4, 1, caps));
        // truncation exponent at or below 1 + alpha
        REQUIRE_THROWS(two_barrier_count(poisson, 8.0, 4.0, log4, 1, 1, caps, 2.4));
        REQUIRE_THROWS(two_barrier_count(binary, 6.0, 4.0, log4, 1, 1, caps, 3.0));
    }

    SECTION("capped counts never exceed uncapped counts") {
        for (int rep = 0; rep < 200; ++rep) {
            const std::uint64_t key = derive_key(8888, static_cast<std::uint64_t>(rep));
            const long un = two_barrier_count(poisson, 8.0, 4.0, log4, 1, key, caps);
            const long tr = two_barrier_count(poisson, 8.0, 4.0, log4, 1, key, caps, 2.6);
            REQUIRE(tr <= un);
        }
        for (int rep = 0; rep < 200; ++rep) {
            const std::uint64_t key = derive_key(8889, static_cast<std::uint64_t>(rep));
            const long un = two_barrier_count(binary, 6.2, 4.0, log4, 1, key, caps);
            const long tr = two_barrier_count(binary, 6.2, 4.0, log4, 1, key, caps, 3.5);
            REQUIRE(tr <= un);
        }
    }

    SECTION("a supercritical corridor sustains at least one descendant on average") {
        const double sigma2 = 2.0 * std::log(2.0);
        const double cstar = pi() * pi() * sigma2 / 2.0;
        const double a = 1.2 * 5.1742818067870448;
        const double ra = tradeoff_upper_root(a, 2.0, cstar);
        REQUIRE(ra == Catch::Approx(5.540586489091867).epsilon(1e-9));

        std::vector<double> zs;
        for (int rep = 0; rep < 10000; ++rep) {
            zs.push_back(static_cast<double>(two_barrier_count(
                binary, a, ra, log4, 1, derive_key(4747, static_cast<std::uint64_t>(rep)), caps)));
        }
        const auto z = mean_estimate(zs);
        REQUIRE(z.value >= 1.0);

        // the small-deviation inequality behind the second-moment argument
        const auto pz = paley_zygmund_check(zs, 0.5);
        REQUIRE(pz.ok);
    }
}

TEST_CASE("tree and walk sides of the lineage identity agree") {
    const auto poisson = small_model();
    const auto binary = make_binary_gaussian_model();

    SECTION("constant functional reproduces the boundary normalization") {
        const auto rep = many_to_one_check(poisson, 1, PathFunctional::constant_one, 20000, 220);
        REQUIRE(rep.cut_bias == Catch::Approx(0.00089442719099991588).epsilon(1e-12));
        REQUIRE(rep.consistent);
        REQUIRE(std::abs(rep.tree_side.value - 0.99910557280900008) <
                3.0 * rep.tree_side.std_error);
        REQUIRE(std::abs(rep.walk_side.value - 0.99910557280900008) <
                3.0 * rep.walk_side.std_error + rep.cut_bias);
    }

    SECTION("half-line indicator estimates the step law's negative mass") {
        const auto rep =
            many_to_one_check(poisson, 1, PathFunctional::indicator_nonpositive, 20000, 221);
        const double exact = small_spine().cdf(0.0);
        REQUIRE(exact == Catch::Approx(0.40655934067706483).epsilon(1e-12));
        REQUIRE(rep.consistent);
        REQUIRE(std::abs(rep.tree_side.value - exact) < 3.0 * rep.tree_side.std_error);
        REQUIRE(std::abs(rep.walk_side.value - exact) < 3.0 * rep.walk_side.std_error);
    }

    SECTION("deeper functionals stay consistent across both models") {
        REQUIRE(many_to_one_check(binary, 3, PathFunctional::indicator_tube, 4000, 222).consistent);
        REQUIRE(many_to_one_check(binary, 2, PathFunctional::exp_bounded, 6000, 223).consistent);
        REQUIRE(many_to_one_check(poisson, 2, PathFunctional::exp_bounded, 6000, 224).consistent);
    }

    SECTION("the brood-size mark obeys the bivariate identity") {
        const auto rep = many_to_one_check(poisson, 1, PathFunctional::bivariate_box, 20000, 225);
        REQUIRE(rep.consistent);
        REQUIRE(std::abs(rep.tree_side.value - 0.36474162753086307) <
                3.0 * rep.tree_side.std_error);
        REQUIRE(std::abs(rep.walk_side.value - 0.36474162753086307) <
                3.0 * rep.walk_side.std_error + rep.cut_bias);
        const auto two = many_to_one_check(binary, 1, PathFunctional::bivariate_box, 4000, 226);
        REQUIRE(two.consistent);
    }

    SECTION("preconditions") {
        REQUIRE_THROWS(many_to_one_check(poisson, 0, PathFunctional::constant_one, 100, 1));
        REQUIRE_THROWS(many_to_one_check(poisson, 7, PathFunctional::constant_one, 100, 1));
        REQUIRE_THROWS(many_to_one_check(poisson, 2, PathFunctional::bivariate_box, 100, 1));
        REQUIRE_THROWS(many_to_one_check(poisson, 1, PathFunctional::constant_one, 1, 1));
        const auto heavy = make_poisson_boundary_model(small_spine(), 25.0);
        REQUIRE_THROWS(many_to_one_check(heavy, 1, PathFunctional::constant_one, 100, 1));
    }
}

TEST_CASE("population growth passes its corridor checkpoints") {
    const auto model = make_binary_gaussian_model();
    const double sigma2 = 2.0 * std::log(2.0);
    const double cstar = pi() * pi() * sigma2 / 2.0;
    const double a = 1.5 * 5.1742818067870448;
    const SurvivalCaps caps{20000, 1};

    SECTION("thresholds degenerate to one as eps approaches the corridor depth") {
        const double ra = tradeoff_upper_root(a, 2.0, cstar);
        const auto rep =
            bn_experiment(model, a, 4, 3, ra * (1.0 - 1e-12), cstar, 1, caps, 90);
        for (double th : rep.thresholds) {
            REQUIRE(th >= 1.0);
            REQUIRE(th <= 1.0 + 1e-9);
        }
    }

    SECTION("frequencies are cumulative and positive at desk scale") {
        const auto rep = bn_experiment(model, a, 4, 3, 6.0, cstar, 200, caps, 660);
        REQUIRE(rep.tradeoff_root == Catch::Approx(7.3851257867933559).epsilon(1e-9));
        REQUIRE(rep.checkpoints == std::vector<long>{4, 16, 64});
        REQUIRE(rep.thresholds[0] == Catch::Approx(3.00228920356).epsilon(1e-9));
        REQUIRE(rep.thresholds[1] == Catch::Approx(5.72675547447).epsilon(1e-9));
        REQUIRE(rep.thresholds[2] == Catch::Approx(15.9626492856).epsilon(1e-9));
        REQUIRE(rep.frequency.size() == 3);
        REQUIRE(rep.frequency[0].value >= rep.frequency[1].value);
        REQUIRE(rep.frequency[1].value >= rep.frequency[2].value);
        REQUIRE(rep.frequency[2].lo > 0.0);
    }

    SECTION("capped trials are declared passing and counted") {
        const auto rep = bn_experiment(model, a, 4, 3, 6.0, cstar, 50, SurvivalCaps{100, 1}, 661);
        REQUIRE(rep.capped_trials > 0);
    }

    SECTION("preconditions") {
        const double near = tradeoff_upper_root(a, 2.0, cstar) * (1.0 - 1e-12);
        REQUIRE_THROWS(bn_experiment(model, a, 10, 8, near, cstar, 10, caps, 1));  // budget
        REQUIRE_THROWS(bn_experiment(model, a, 4, 3, 8.0, cstar, 10, caps, 1));    // eps >= r_a
        REQUIRE_THROWS(bn_experiment(model, a, 4, 3, 0.0, cstar, 10, caps, 1));    // eps = 0
        REQUIRE_THROWS(bn_experiment(model, 4.0, 4, 3, 1.0, cstar, 10, caps, 1));  // subcritical
        REQUIRE_THROWS(bn_experiment(model, a, 4, 3, 1.0, cstar, 10, caps, 1));    // need > cap
    }
}

TEST_CASE("linear walls sort survival by slope sign") {
    const auto binary = make_binary_gaussian_model();
    const SurvivalCaps caps{10000, 1};

    const auto up = linear_barrier_check(binary, 0.5, 1000, 200, caps, 404);
    REQUIRE(up.estimate.lo > 0.0);

    const auto down = linear_barrier_check(binary, -0.1, 1000, 200, caps, 405);
    REQUIRE(down.estimate.value == 0.0);

    // a wall far above everything is inactive: binary broods never die out
    const auto inert = linear_barrier_check(binary, 1e6, 1000, 100, caps, 406);
    REQUIRE(inert.estimate.value == 1.0);
    REQUIRE(inert.capped_trials == 100);

    // for the tilted-intensity model the inactive-wall limit is plain
    // branching with Poisson offspring; its survival fixed point solves
    // q = 1 - exp(-mq) at brood mean m
    const auto gw = linear_barrier_check(small_model(), 1e6, 1000, 400, caps, 407);
    REQUIRE(std::abs(gw.estimate.value - 0.20064432360645007) <
            3.0 * gw.estimate.std_error + 0.01);
}

TEST_CASE("capped trials report their continuation audit") {
    const auto model = make_binary_gaussian_model();
    const SurvivalCaps caps{500, 1};
    const auto wall = power_barrier(2.0 * 5.1742818067870448, 2.0);

    const auto one = survive_one(model, wall, 100, derive_key(60, 1), caps);
    REQUIRE(one.survived);
    REQUIRE(one.capped);
    REQUIRE(one.end_generation < 100);
    REQUIRE(one.final_count > 500);

    const auto rep = survival_prob(model, wall, 100, 50, caps, 515);
    REQUIRE(rep.capped_trials > 0);
    REQUIRE(rep.aux_runs == 2);
    REQUIRE(rep.aux_extinctions <= rep.aux_runs);
    REQUIRE(rep.trials == 50);
}
