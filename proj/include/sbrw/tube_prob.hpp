#ifndef SBRW_TUBE_PROB_HPP
#define SBRW_TUBE_PROB_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbrw/common.hpp"
#include "sbrw/numerics.hpp"
#include "sbrw/rng.hpp"
#include "sbrw/spine_law.hpp"
#include "sbrw/stable_process.hpp"
#include "sbrw/stats.hpp"

namespace sbrw {

// Continuous piecewise-linear function on [0, 1], clamped outside its knots.
class PiecewiseLinear {
  public:
    PiecewiseLinear(std::vector<double> xs, std::vector<double> ys)
        : xs_(std::move(xs)), ys_(std::move(ys)) {
        require(xs_.size() == ys_.size() && xs_.size() >= 1, "piecewise linear: knot mismatch");
        for (std::size_t i = 1; i < xs_.size(); ++i)
            require(xs_[i] > xs_[i - 1], "piecewise linear: knots must increase");
    }

    static PiecewiseLinear constant(double v) { return PiecewiseLinear({0.0}, {v}); }

    double operator()(double s) const {
        if (s <= xs_.front()) return ys_.front();
        if (s >= xs_.back()) return ys_.back();
        auto it = std::upper_bound(xs_.begin(), xs_.end(), s);
        const std::size_t j = static_cast<std::size_t>(it - xs_.begin());
        const double w = (s - xs_[j - 1]) / (xs_[j] - xs_[j - 1]);
        return ys_[j - 1] * (1.0 - w) + ys_[j] * w;
    }

    const std::vector<double>& knots() const { return xs_; }

    PiecewiseLinear shifted(double dv) const {
        auto ys = ys_;
        for (auto& y : ys) y += dv;
        return PiecewiseLinear(xs_, ys);
    }

    // Text form "s:v, s:v, ..." used by config files.
    static PiecewiseLinear from_text(const std::string& text) {
        std::vector<double> xs, ys;
        std::istringstream is(text);
        std::string item;
        while (std::getline(is, item, ',')) {
            const auto colon = item.find(':');
            require(colon != std::string::npos, "breakpoint list needs s:v pairs");
            xs.push_back(std::stod(item.substr(0, colon)));
            ys.push_back(std::stod(item.substr(colon + 1)));
        }
        return PiecewiseLinear(xs, ys);
    }

    std::string to_text() const {
        std::ostringstream os;
        os.precision(17);
        for (std::size_t i = 0; i < xs_.size(); ++i) {
            if (i) os << ", ";
            os << xs_[i] << ":" << ys_[i];
        }
        return os.str();
    }

  private:
    std::vector<double> xs_, ys_;
};

// Exact minimum of (upper - lower) over [0, 1]: the difference is itself
// piecewise linear, so the minimum sits on the union of the knot sets.
inline double min_gap(const PiecewiseLinear& lower, const PiecewiseLinear& upper) {
    std::set<double> pts{0.0, 1.0};
    for (double x : lower.knots()) pts.insert(std::clamp(x, 0.0, 1.0));
    for (double x : upper.knots()) pts.insert(std::clamp(x, 0.0, 1.0));
    double m = std::numeric_limits<double>::infinity();
    for (double s : pts) m = std::min(m, upper(s) - lower(s));
    return m;
}

// A corridor for the rescaled walk: keep S_j / c_n inside
// [lower(j/n), upper(j/n)] for every 0 <= j <= n, with c_n = n^scale_exponent.
// scale_exponent = 0 runs the corridor in raw walk units.  The optional
// perturbation widens both walls outward by perturb_amp * n^{-perturb_power},
// modelling boundary sequences that converge uniformly to (lower, upper).
struct TubeSpec {
    PiecewiseLinear lower, upper;
    double scale_exponent;
    long horizon;
    bool relaxed = false;   // permit touching walls and a start on the wall
    double perturb_amp = 0.0;
    double perturb_power = 1.0;

    TubeSpec(PiecewiseLinear lower_, PiecewiseLinear upper_, double scale_exponent_,
             long horizon_, bool relaxed_ = false)
        : lower(std::move(lower_)), upper(std::move(upper_)),
          scale_exponent(scale_exponent_), horizon(horizon_), relaxed(relaxed_) {
        require(horizon >= 1, "tube needs horizon >= 1");
        require(scale_exponent >= 0.0, "tube scale exponent must be nonnegative");
        const double gap = min_gap(lower, upper);
        if (relaxed) {
            require(gap >= 0.0, "relaxed tube still needs lower <= upper");
            require(lower(0.0) <= 0.0 && upper(0.0) >= 0.0, "relaxed tube must allow the origin");
        } else {
            require(gap > 0.0, "tube width must stay positive");
            require(lower(0.0) < 0.0 && upper(0.0) > 0.0,
                    "tube must contain the origin strictly at s = 0");
        }
        require(perturb_amp >= 0.0, "tube perturbation amplitude must be nonnegative");
    }

    double scale() const { return std::pow(static_cast<double>(horizon), scale_exponent); }
    double margin() const {
        return perturb_amp * std::pow(static_cast<double>(horizon), -perturb_power);
    }
};

inline TubeSpec unit_tube(double alpha, long horizon) {
    return TubeSpec(PiecewiseLinear::constant(-0.5), PiecewiseLinear::constant(0.5),
                    scaling_exponent(alpha), horizon);
}

// Small-deviation rate of the corridor: cstar * Integral_0^1 (upper-lower)^{-alpha}.
// A corridor that pinches to zero width makes the integral diverge; that case
// is reported as +infinity with the flag set rather than thrown.
struct RateValue {
    double value;
    bool divergent;
};

inline RateValue rate_functional(const TubeSpec& tube, double alpha, double cstar,
                                 double lo = 0.0, double hi = 1.0) {
    validate_stability_index(alpha);
    require(cstar > 0.0, "rate functional needs a positive confinement constant");
    require(lo >= 0.0 && hi <= 1.0 && lo < hi, "rate functional needs 0 <= lo < hi <= 1");
    double gap = std::numeric_limits<double>::infinity();
    std::set<double> pts{lo, hi};
    for (double x : tube.lower.knots())
        if (x > lo && x < hi) pts.insert(x);
    for (double x : tube.upper.knots())
        if (x > lo && x < hi) pts.insert(x);
    for (double s : pts) gap = std::min(gap, tube.upper(s) - tube.lower(s));
    if (!(gap > 0.0)) return {std::numeric_limits<double>::infinity(), true};
    auto width_pow = [&](double s) { return std::pow(tube.upper(s) - tube.lower(s), -alpha); };
    return {cstar * integrate(width_pow, lo, hi, 1e-13), false};
}

// Corridor with a start window [u_star, v_star] at time beta_star: the width
// relevant for the rate gains the window width v_star - u_star.
struct ShiftedTubeSpec {
    TubeSpec base;
    double beta_star, gamma_star;
    double u_star, v_star;

    ShiftedTubeSpec(TubeSpec base_, double beta_star_, double gamma_star_, double u_star_,
                    double v_star_)
        : base(std::move(base_)), beta_star(beta_star_), gamma_star(gamma_star_),
          u_star(u_star_), v_star(v_star_) {
        require(0.0 <= beta_star && beta_star < gamma_star && gamma_star <= 1.0,
                "shifted tube needs 0 <= beta* < gamma* <= 1");
        require(base.lower(beta_star) <= u_star && u_star <= v_star &&
                    v_star <= base.upper(beta_star),
                "start window must sit inside the corridor at beta*");
    }
};

inline RateValue shifted_rate_functional(const ShiftedTubeSpec& spec, double alpha,
                                         double cstar) {
    validate_stability_index(alpha);
    require(cstar > 0.0, "rate functional needs a positive confinement constant");
    const double widen = spec.v_star - spec.u_star;
    double gap = std::numeric_limits<double>::infinity();
    std::set<double> pts{spec.beta_star, spec.gamma_star};
    for (double x : spec.base.lower.knots())
        if (x > spec.beta_star && x < spec.gamma_star) pts.insert(x);
    for (double x : spec.base.upper.knots())
        if (x > spec.beta_star && x < spec.gamma_star) pts.insert(x);
    for (double s : pts) gap = std::min(gap, spec.base.upper(s) - spec.base.lower(s) + widen);
    if (!(gap > 0.0)) return {std::numeric_limits<double>::infinity(), true};
    auto integrand = [&](double s) {
        return std::pow(spec.base.upper(s) - spec.base.lower(s) + widen, -alpha);
    };
    return {cstar * integrate(integrand, spec.beta_star, spec.gamma_star, 1e-13), false};
}

// Per-step cap on the enriched walk's offspring marks: the run also fails if
// any mark exceeds exp(n^{1/beta_trunc}).  The mark sampler is supplied by the
// caller (the corridor itself knows nothing about brood sizes).
struct TruncationEvent {
    double beta_trunc;
    long horizon;
    std::function<double(Stream&)> mark_sampler;

    TruncationEvent(double beta_trunc_, long horizon_, std::function<double(Stream&)> sampler)
        : beta_trunc(beta_trunc_), horizon(horizon_), mark_sampler(std::move(sampler)) {
        require(horizon >= 1, "truncation event needs horizon >= 1");
        require(static_cast<bool>(mark_sampler), "truncation event needs a mark sampler");
    }

    double threshold() const {
        return std::exp(std::pow(static_cast<double>(horizon), 1.0 / beta_trunc));
    }
};

inline void validate_truncation(const TruncationEvent& ev, double alpha) {
    require(ev.beta_trunc > 1.0 + alpha, "truncation exponent must exceed 1 + alpha");
}

namespace detail {

inline std::vector<double> tube_wall(const TubeSpec& tube, const PiecewiseLinear& side,
                                     double outward) {
    const double cn = tube.scale();
    const double n = static_cast<double>(tube.horizon);
    std::vector<double> wall(static_cast<std::size_t>(tube.horizon) + 1);
    for (long j = 0; j <= tube.horizon; ++j)
        wall[static_cast<std::size_t>(j)] =
            cn * (side(static_cast<double>(j) / n) + outward * tube.margin());
    return wall;
}

} // namespace detail

// Monte Carlo corridor probability.  Each trial draws its walk from a stream
// keyed by (seed, trial), so runs with nested corridors share paths exactly:
// widening the corridor can only turn failures into successes, never the
// reverse, trial by trial.
template <typename Law>
Estimate tube_prob_mc(const Law& law, const TubeSpec& tube, double start_z, long trials,
                      std::uint64_t seed, const TruncationEvent* trunc = nullptr) {
    require(trials >= 1, "tube_prob_mc needs at least one trial");
    const auto lo = detail::tube_wall(tube, tube.lower, -1.0);
    const auto hi = detail::tube_wall(tube, tube.upper, +1.0);
    require(start_z >= lo[0] && start_z <= hi[0], "start must lie inside the corridor");
    const double cap = trunc ? trunc->threshold() : 0.0;

    long hits = 0;
    for (long trial = 0; trial < trials; ++trial) {
        Stream walk(derive_key(seed, 0x7B, static_cast<std::uint64_t>(trial)));
        Stream marks(derive_key(seed, 0x7C, static_cast<std::uint64_t>(trial)));
        double s = start_z;
        bool ok = true;
        for (long j = 1; j <= tube.horizon; ++j) {
            s += law.sample(walk);
            const auto jj = static_cast<std::size_t>(j);
            if (s < lo[jj] || s > hi[jj]) {
                ok = false;
                break;
            }
            if (trunc && trunc->mark_sampler(marks) > cap) {
                ok = false;
                break;
            }
        }
        if (ok) ++hits;
    }
    return binomial_estimate(hits, trials);
}

// Exact corridor probability for an integer-step walk started at 0, by forward
// convolution over the reachable band.  bounds are inclusive and indexed by
// step, entry 0 constraining the start.
inline double tube_prob_dp(const std::vector<std::pair<int, double>>& step_pmf,
                           const std::vector<int>& lower, const std::vector<int>& upper) {
    require(!step_pmf.empty(), "tube_prob_dp needs a step pmf");
    require(lower.size() == upper.size() && lower.size() >= 1,
            "tube_prob_dp needs matching bound sequences");
    double total = 0.0;
    for (auto& [k, p] : step_pmf) {
        (void)k;
        require(p >= 0.0, "tube_prob_dp needs nonnegative masses");
        total += p;
    }
    require(std::abs(total - 1.0) < 1e-12, "tube_prob_dp pmf must sum to 1");
    for (std::size_t j = 0; j < lower.size(); ++j)
        require(lower[j] <= upper[j], "tube_prob_dp needs lower <= upper at every step");
    if (lower[0] > 0 || upper[0] < 0) return 0.0;

    int band_lo = lower[0], band_hi = upper[0];
    for (std::size_t j = 1; j < lower.size(); ++j) {
        band_lo = std::min(band_lo, lower[j]);
        band_hi = std::max(band_hi, upper[j]);
    }
    const std::size_t width = static_cast<std::size_t>(band_hi - band_lo) + 1;
    std::vector<double> mass(width, 0.0), next(width);
    mass[static_cast<std::size_t>(-band_lo)] = 1.0;

    for (std::size_t j = 1; j < lower.size(); ++j) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t cell = 0; cell < width; ++cell) {
            const double m = mass[cell];
            if (m == 0.0) continue;
            const int pos = band_lo + static_cast<int>(cell);
            for (auto& [k, p] : step_pmf) {
                const int to = pos + k;
                if (to < lower[j] || to > upper[j]) continue;
                next[static_cast<std::size_t>(to - band_lo)] += m * p;
            }
        }
        mass.swap(next);
    }
    CompensatedSum out;
    for (double m : mass) out.add(m);
    return out.value();
}

// Finite-n rate extraction: r_n = -(c_n^alpha / n) log p_n for each horizon,
// then a linear fit of r_n against n^{-1/(1+alpha)} whose intercept is the
// extrapolated rate, compared against the corridor's rate functional.
struct RateTrendReport {
    std::vector<long> horizons;
    std::vector<double> per_horizon;     // r_n
    std::vector<double> prob_estimates;  // p_n
    std::vector<long> excluded;          // horizons with zero observed successes
    double extrapolated = 0.0;
    double functional = 0.0;
    double gap = 0.0;
};

template <typename Law>
RateTrendReport empirical_rate(const Law& law, const PiecewiseLinear& lower,
                               const PiecewiseLinear& upper, double alpha, double cstar,
                               const std::vector<long>& horizons, long trials,
                               std::uint64_t seed, double perturb_amp = 0.0,
                               double perturb_power = 1.0) {
    require(horizons.size() >= 2, "empirical_rate needs two or more horizons");
    for (std::size_t i = 1; i < horizons.size(); ++i)
        require(horizons[i] > horizons[i - 1], "horizons must increase");

    RateTrendReport rep;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        const long n = horizons[i];
        TubeSpec tube(lower, upper, scaling_exponent(alpha), n);
        tube.perturb_amp = perturb_amp;
        tube.perturb_power = perturb_power;
        const auto est = tube_prob_mc(law, tube, 0.0, trials,
                                      derive_key(seed, 0xE0, static_cast<std::uint64_t>(i)));
        if (est.value <= 0.0) {
            rep.excluded.push_back(n);
            continue;
        }
        const double cn = std::pow(static_cast<double>(n), scaling_exponent(alpha));
        const double r = -std::pow(cn, alpha) / static_cast<double>(n) * std::log(est.value);
        rep.horizons.push_back(n);
        rep.per_horizon.push_back(r);
        rep.prob_estimates.push_back(est.value);
        xs.push_back(std::pow(static_cast<double>(n), -scaling_exponent(alpha)));
        ys.push_back(r);
    }
    require(xs.size() >= 2, "empirical_rate: too many horizons had zero successes");
    rep.extrapolated = fit_line(xs, ys).intercept;
    TubeSpec ref(lower, upper, scaling_exponent(alpha), horizons.back());
    rep.functional = rate_functional(ref, alpha, cstar).value;
    rep.gap = rep.extrapolated - rep.functional;
    return rep;
}

// Convergence of the rescaled endpoint S_n / n^{1/alpha} toward the limiting
// stable draw, measured by a two-sample Kolmogorov-Smirnov distance against
// the sampler driven by the scale fitted from the step tail.
struct PathConvergenceReport {
    long horizon = 0;
    long trials = 0;
    double motion_scale = 0.0;
    double ks = 0.0;
    double ks_threshold_1pct = 0.0;
};

template <typename Law>
PathConvergenceReport scaled_path_convergence_check(const Law& law, const StableMotion& motion,
                                                    long horizon, long trials,
                                                    std::uint64_t seed) {
    require(trials >= 1, "scaled_path_convergence_check needs trials >= 1");
    require(horizon >= 1, "scaled_path_convergence_check needs horizon >= 1");
    const double cn = std::pow(static_cast<double>(horizon), 1.0 / motion.alpha);
    std::vector<double> walk_ends, stable_draws;
    walk_ends.reserve(static_cast<std::size_t>(trials));
    stable_draws.reserve(static_cast<std::size_t>(trials));
    Stream walk_stream(derive_key(seed, 0xA1));
    Stream stable_stream(derive_key(seed, 0xA2));
    for (long t = 0; t < trials; ++t) {
        double s = 0.0;
        for (long j = 0; j < horizon; ++j) s += law.sample(walk_stream);
        walk_ends.push_back(s / cn);
        stable_draws.push_back(sample_increment(motion, 1.0, stable_stream));
    }
    PathConvergenceReport rep;
    rep.horizon = horizon;
    rep.trials = trials;
    rep.motion_scale = motion.scale;
    rep.ks = ks_two_sample(walk_ends, stable_draws);
    rep.ks_threshold_1pct = ks_threshold_two_sample(static_cast<std::size_t>(trials),
                                                    static_cast<std::size_t>(trials), 0.01);
    return rep;
}

// Spine convenience form: the limiting scale is fitted from the step tail.
// The alpha = 2 tail has a slowly varying variance, so that case must supply
// its motion through the general overload instead.
inline PathConvergenceReport scaled_path_convergence_check(const SpineLaw& law, long horizon,
                                                           long trials, std::uint64_t seed) {
    require(law.alpha < 2.0,
            "scaled_path_convergence_check: pass an explicit motion for alpha = 2");
    StableMotion motion(law.alpha, fit_motion_scale(law.alpha, law.tail_const));
    return scaled_path_convergence_check<SpineLaw>(law, motion, horizon, trials, seed);
}

} // namespace sbrw

#endif
