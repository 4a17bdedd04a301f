#ifndef SBRW_SPINE_LAW_HPP
#define SBRW_SPINE_LAW_HPP

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbrw/common.hpp"
#include "sbrw/numerics.hpp"
#include "sbrw/rng.hpp"

namespace sbrw {

// Centered step law of the size-biased lineage walk.  Right tail is exactly
// Pareto, P(X > y) = c * y^{-alpha} for y >= y0; the left part is a single
// exponential ramp whose weight and rate are the unique pair making the law
// a probability measure with mean zero:
//
//   w       = 1 - c * y0^{-alpha}
//   rate    = w / (w*y0 + c*alpha*y0^{1-alpha}/(alpha-1))
//
// Both identities are closed-form; validate_boundary_tail re-derives the
// mass and mean by quadrature as an independent check.
struct SpineLaw {
    double alpha;
    double tail_const;     // c
    double tail_threshold; // y0
    double left_weight;    // mass below y0
    double left_rate;      // exponential rate of the left ramp

    double tail(double y) const {
        if (y >= tail_threshold) return tail_const * std::pow(y, -alpha);
        return 1.0 - left_weight * std::exp(left_rate * (y - tail_threshold));
    }

    double cdf(double x) const { return 1.0 - tail(x); }

    double density(double x) const {
        if (x >= tail_threshold) return tail_const * alpha * std::pow(x, -alpha - 1.0);
        return left_weight * left_rate * std::exp(left_rate * (x - tail_threshold));
    }

    double sample(Stream& g) const {
        const double u = g.unit();
        if (u < left_weight) return tail_threshold + std::log(u / left_weight) / left_rate;
        return std::pow(tail_const / (1.0 - u), 1.0 / alpha);
    }

    double mean_right_tail() const {
        // integral of x over the Pareto part, closed form
        return tail_const * alpha / (alpha - 1.0) * std::pow(tail_threshold, 1.0 - alpha);
    }
};

inline SpineLaw make_pareto_spine(double alpha, double c, double y0) {
    validate_stability_index(alpha);
    require(c > 0.0, "tail constant must be positive");
    require(y0 > 0.0, "tail threshold must be positive");
    const double tail_mass = c * std::pow(y0, -alpha);
    require(tail_mass < 1.0, "tail mass c*y0^{-alpha} must be below 1 (got " +
                                 std::to_string(tail_mass) + ")");
    SpineLaw law;
    law.alpha = alpha;
    law.tail_const = c;
    law.tail_threshold = y0;
    law.left_weight = 1.0 - tail_mass;
    law.left_rate =
        law.left_weight / (law.left_weight * y0 + law.mean_right_tail());
    return law;
}

struct CalibrationReport {
    double mass_dev;       // |total mass - 1| by quadrature
    double mean_abs;       // |mean| by quadrature
    double max_tail_dev;   // max over y-grid of |y^alpha P(X>y) - c|
    double exp_moment;     // E[exp(-rho X)] (quadrature), NaN if divergent
    double rho;
    bool exp_moment_finite;
};

inline CalibrationReport validate_boundary_tail(const SpineLaw& law, double rho = 0.0) {
    CalibrationReport rep{};
    rep.rho = rho;
    const double y0 = law.tail_threshold;

    const double left_mass =
        integrate([&](double x) { return law.density(x); }, -std::numeric_limits<double>::infinity(), y0);
    const double right_mass =
        integrate_power_tail([&](double x) { return law.density(x); }, y0, law.alpha + 1.0);
    rep.mass_dev = std::abs(left_mass + right_mass - 1.0);

    const double left_mean =
        integrate([&](double x) { return x * law.density(x); }, -std::numeric_limits<double>::infinity(), y0);
    const double right_mean =
        integrate_power_tail([&](double x) { return x * law.density(x); }, y0, law.alpha);
    rep.mean_abs = std::abs(left_mean + right_mean);

    rep.max_tail_dev = 0.0;
    for (int i = 0; i <= 200; ++i) {
        const double y = y0 * std::pow(100.0, i / 200.0);
        rep.max_tail_dev =
            std::max(rep.max_tail_dev, std::abs(std::pow(y, law.alpha) * law.tail(y) - law.tail_const));
    }

    rep.exp_moment_finite = rho < law.left_rate;
    if (rho <= 0.0) {
        rep.exp_moment_finite = rho == 0.0;
        rep.exp_moment = rho == 0.0 ? left_mass + right_mass : std::nan("");
    } else if (rep.exp_moment_finite) {
        // The left factor is fused into one exponent: exp(-rho x) alone
        // overflows long before the ramp density underflows.
        const double lw = law.left_weight * law.left_rate;
        const double left = integrate(
            [&](double x) { return lw * std::exp(law.left_rate * (x - y0) - rho * x); },
            -std::numeric_limits<double>::infinity(), y0);
        const double right = integrate([&](double x) { return std::exp(-rho * x) * law.density(x); },
                                       y0, std::numeric_limits<double>::infinity());
        rep.exp_moment = left + right;
    } else {
        rep.exp_moment = std::nan("");
    }
    return rep;
}

// Gaussian step law: the lineage walk of the two-child Gaussian offspring
// model, and the general-purpose test law for the alpha = 2 regime.
struct GaussianStepLaw {
    double sd;

    explicit GaussianStepLaw(double sigma) : sd(sigma) {
        require(sigma > 0.0, "gaussian step law needs sd > 0");
    }
    double sample(Stream& g) const { return g.normal(0.0, sd); }
    double cdf(double x) const { return 0.5 * std::erfc(-x / (sd * 1.4142135623730951)); }
    double variance() const { return sd * sd; }
};

// Integer-valued step law with finite support; exact tube probabilities for
// it are computable by dynamic programming.
struct LatticeStepLaw {
    std::vector<std::pair<int, double>> pmf;

    explicit LatticeStepLaw(std::vector<std::pair<int, double>> atoms) : pmf(std::move(atoms)) {
        double total = 0.0;
        for (auto& [k, p] : pmf) {
            require(p >= 0.0, "lattice pmf needs nonnegative masses");
            total += p;
        }
        require(std::abs(total - 1.0) < 1e-12, "lattice pmf must sum to 1");
    }

    double sample(Stream& g) const {
        double u = g.unit();
        for (auto& [k, p] : pmf) {
            if (u < p) return static_cast<double>(k);
            u -= p;
        }
        return static_cast<double>(pmf.back().first);
    }
};

template <typename Law>
std::vector<double> walk_path(const Law& law, long n, Stream& g) {
    std::vector<double> s(static_cast<std::size_t>(n) + 1, 0.0);
    for (long j = 1; j <= n; ++j)
        s[static_cast<std::size_t>(j)] = s[static_cast<std::size_t>(j - 1)] + law.sample(g);
    return s;
}

// Key-value serialisation.  Only the three defining parameters are stored;
// derived fields are recomputed on load so a stale pair can never drift.
inline std::string spine_to_config(const SpineLaw& law) {
    std::ostringstream os;
    os.precision(17);
    os << "alpha=" << law.alpha << "\n"
       << "tail_const=" << law.tail_const << "\n"
       << "tail_threshold=" << law.tail_threshold << "\n";
    return os.str();
}

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line without '=': " + line);
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        auto strip = [](std::string& s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            s = a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        strip(key);
        strip(val);
        kv[key] = val;
    }
    return kv;
}

inline SpineLaw spine_from_config(const std::string& text) {
    auto kv = parse_key_values(text);
    for (const char* key : {"alpha", "tail_const", "tail_threshold"})
        if (!kv.count(key))
            throw std::invalid_argument(std::string("spine config missing key: ") + key);
    return make_pareto_spine(std::stod(kv["alpha"]), std::stod(kv["tail_const"]),
                             std::stod(kv["tail_threshold"]));
}

} // namespace sbrw

#endif
