#pragma once

// Branching random walk with absorbing barriers.  Two boundary-calibrated
// offspring models, survival estimation under power and linear barriers,
// two-sided corridor counts, population-growth experiments, and many-to-one
// consistency checks between the tree and its spine walk.
//
// All randomness is keyed to the genealogy: every individual owns a key
// derived from its parent's key and its brood index, and broods are built
// from that key alone.  Enlarging a barrier therefore reruns the *same* tree
// with more room, which makes survival pathwise monotone in the barrier
// coefficient and capped counts pathwise dominated by uncapped ones.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sbrw/common.hpp"
#include "sbrw/critical_ode.hpp"
#include "sbrw/numerics.hpp"
#include "sbrw/rng.hpp"
#include "sbrw/spine_law.hpp"
#include "sbrw/stats.hpp"

namespace sbrw {

// Cumulative intensity of the tilted brood point process e^v nu(dv) below a
// right cut.  The piece below the step law's tail threshold is closed form;
// the power-tail piece is tabulated on log-spaced knots with an exponential
// interpolant per interval, so both cumulative() and its inverse position()
// stay closed form within an interval.  Feeding unit-rate Poisson arrivals
// through position() realizes the point process exactly (up to the table's
// ~1e-6 relative interpolation error), and in arrival order: raising the
// allowed ceiling only appends children, never disturbs existing ones.
class BroodIntensity {
  public:
    BroodIntensity(const SpineLaw& spine, double cut, int knots = 4096) {
        threshold_ = spine.tail_threshold;
        cut_ = cut;
        require(cut_ >= threshold_, "right cut must lie in the power-tail region");
        left_rate_ = 1.0 + spine.left_rate;
        left_coeff_ = spine.left_weight * spine.left_rate *
                      std::exp(-spine.left_rate * threshold_) / left_rate_;
        mass_at_threshold_ = left_coeff_ * std::exp(left_rate_ * threshold_);
        total_ = mass_at_threshold_;
        if (cut_ > threshold_) {
            require(knots >= 2, "intensity table needs at least two knots");
            const double ratio = cut_ / threshold_;
            knot_x_.resize(knots + 1);
            knot_g_.resize(knots + 1);
            for (int i = 0; i <= knots; ++i) {
                knot_x_[i] = threshold_ * std::pow(ratio, static_cast<double>(i) / knots);
                knot_g_[i] = std::exp(knot_x_[i]) * spine.density(knot_x_[i]);
            }
            knot_x_.back() = cut_;
            slope_.resize(knots);
            knot_m_.resize(knots + 1);
            knot_m_[0] = mass_at_threshold_;
            CompensatedSum acc;
            acc.add(mass_at_threshold_);
            for (int i = 0; i < knots; ++i) {
                const double dx = knot_x_[i + 1] - knot_x_[i];
                const double b = std::log(knot_g_[i + 1] / knot_g_[i]) / dx;
                slope_[i] = b;
                acc.add(std::abs(b * dx) < 1e-12 ? knot_g_[i] * dx
                                                 : knot_g_[i] * std::expm1(b * dx) / b);
                knot_m_[i + 1] = acc.value();
            }
            total_ = knot_m_.back();
        }
    }

    double total() const { return total_; }
    double cut() const { return cut_; }

    double cumulative(double v) const {
        if (v >= cut_) return total_;
        if (v <= threshold_) return left_coeff_ * std::exp(left_rate_ * v);
        const auto it = std::upper_bound(knot_x_.begin(), knot_x_.end(), v);
        const std::size_t i = static_cast<std::size_t>(it - knot_x_.begin()) - 1;
        const double dx = v - knot_x_[i];
        const double b = slope_[i];
        return knot_m_[i] + (std::abs(b * dx) < 1e-12 ? knot_g_[i] * dx
                                                      : knot_g_[i] * std::expm1(b * dx) / b);
    }

    // Inverse of cumulative(); defined for mass values in (0, total].
    double position(double m) const {
        require(m > 0.0 && m <= total_ * (1.0 + 1e-9), "mass outside the intensity range");
        if (m <= mass_at_threshold_) return std::log(m / left_coeff_) / left_rate_;
        auto it = std::upper_bound(knot_m_.begin(), knot_m_.end(), m);
        std::size_t i = static_cast<std::size_t>(it - knot_m_.begin());
        i = std::min(i, knot_m_.size() - 1) - 1;
        const double b = slope_[i];
        const double rel = (m - knot_m_[i]) / knot_g_[i];
        const double dx = std::abs(b * rel) < 1e-12 ? rel : std::log1p(b * rel) / b;
        return std::min(knot_x_[i] + dx, cut_);
    }

  private:
    double threshold_ = 0.0;  // step law's tail threshold
    double cut_ = 0.0;
    double left_rate_ = 0.0;  // 1 + ramp rate
    double left_coeff_ = 0.0;
    double mass_at_threshold_ = 0.0;
    double total_ = 0.0;
    std::vector<double> knot_x_, knot_g_, knot_m_, slope_;
};

struct OffspringModel {
    enum class Kind { poisson_boundary, binary_gaussian };

    Kind kind = Kind::binary_gaussian;
    SpineLaw spine{};        // poisson_boundary only
    double right_cut = std::numeric_limits<double>::infinity();
    double defect_mass = 0.0;  // shortfall of E sum e^{-V} from 1
    double defect_mean = 0.0;  // |E sum V e^{-V}|
    double brood_mean = 2.0;   // expected cut brood size
    double gauss_mean = 0.0;   // binary_gaussian displacement mean
    double gauss_sd = 0.0;     // and standard deviation
    std::optional<long> cap;   // whole broods larger than this are discarded
    std::optional<BroodIntensity> intensity;  // poisson_boundary sampler

    double alpha() const { return kind == Kind::poisson_boundary ? spine.alpha : 2.0; }
    // Variance of the tilted lineage step.
    double spine_variance() const {
        require(kind == Kind::binary_gaussian, "closed-form spine variance is gaussian-only");
        return gauss_sd * gauss_sd;
    }
};

// Offspring as a Poisson point process with intensity e^v nu(dv), cut above
// `right_cut`.  The cut costs exactly tail(right_cut) of tilted mass per
// generation; models with more than 1e-3 of it are rejected.
inline OffspringModel make_poisson_boundary_model(const SpineLaw& spine, double right_cut) {
    OffspringModel m;
    m.kind = OffspringModel::Kind::poisson_boundary;
    m.spine = spine;
    m.right_cut = right_cut;
    require(right_cut >= spine.tail_threshold, "right cut must lie in the power-tail region");
    m.defect_mass = spine.tail_const * std::pow(right_cut, -spine.alpha);
    m.defect_mean = spine.tail_const * spine.alpha / (spine.alpha - 1.0) *
                    std::pow(right_cut, 1.0 - spine.alpha);
    require(m.defect_mass <= 1e-3, "right cut leaves too much boundary defect");
    if (right_cut < 600.0) {
        m.intensity.emplace(spine, right_cut);
        m.brood_mean = m.intensity->total();
    } else {
        // e^{cut} overflows the intensity table; the model still serves
        // defect reporting and spine-walk checks, but broods are unsamplable.
        m.brood_mean = std::numeric_limits<double>::infinity();
    }
    return m;
}

// Two children with i.i.d. Normal(m, s^2) displacements, m = s^2 = 2 log 2:
// the unique Gaussian parameters with 2 E[e^{-V}] = 1 and 2 E[V e^{-V}] = 0.
inline OffspringModel make_binary_gaussian_model() {
    OffspringModel m;
    m.kind = OffspringModel::Kind::binary_gaussian;
    const double two_log_two = 2.0 * std::log(2.0);
    m.gauss_mean = two_log_two;
    m.gauss_sd = std::sqrt(two_log_two);
    m.brood_mean = 2.0;
    return m;
}

// Absorbing walls.  Power mode kills above coeff * i^exponent (and, in
// corridor form, below (coeff - lower_offset) * i^exponent); linear mode
// kills above linear_eps * i.
struct BarrierSpec {
    double coeff = 0.0;
    double exponent = 0.0;
    double lower_offset = std::numeric_limits<double>::quiet_NaN();
    double linear_eps = std::numeric_limits<double>::quiet_NaN();

    bool linear() const { return !std::isnan(linear_eps); }
    bool has_lower() const { return !std::isnan(lower_offset); }

    double upper(long i) const {
        const double t = static_cast<double>(i);
        return linear() ? linear_eps * t : coeff * std::pow(t, exponent);
    }
    double lower(long i) const {
        if (!has_lower()) return -std::numeric_limits<double>::infinity();
        return (coeff - lower_offset) * std::pow(static_cast<double>(i), exponent);
    }
};

inline BarrierSpec power_barrier(double a, double alpha) {
    validate_stability_index(alpha);
    require(a > 0.0, "barrier coefficient must be positive");
    BarrierSpec b;
    b.coeff = a;
    b.exponent = scaling_exponent(alpha);
    return b;
}

inline BarrierSpec power_corridor(double a, double offset, double alpha) {
    BarrierSpec b = power_barrier(a, alpha);
    require(offset > 0.0 && offset < a, "corridor offset must lie in (0, coeff)");
    b.lower_offset = offset;
    return b;
}

inline BarrierSpec linear_barrier(double eps) {
    BarrierSpec b;
    b.linear_eps = eps;
    return b;
}

struct SurvivalCaps {
    long max_pop = 100000;      // beyond this the trial is declared surviving
    long survive_threshold = 1; // members needed at the horizon to count as alive
};

// A brood whose expected size exceeds this cannot help but trip the
// population cap, so it is treated as an explosion without materializing.
inline long brood_guard(const SurvivalCaps& caps) {
    const double mp = static_cast<double>(caps.max_pop);
    return static_cast<long>(2.0 * mp + 12.0 * std::sqrt(mp) + 50.0);
}

namespace detail {

struct Node {
    double pos;
    std::uint64_t key;
};

// One brood of displacements at or below `room`, in brood-index order.
// Children above `room` are never materialized (Poisson arrivals simply stop;
// Gaussian children are filtered), but indices always advance in arrival
// order, so the same key maps to the same child under any wider room.
// Returns false when the expected brood alone exceeds `guard`.
// `size_out`, when given, receives the cut brood size before any wall was
// applied: the whole-brood cap compares against that count.
inline bool brood_displacements(const OffspringModel& model, double room, Stream& g, long guard,
                                std::vector<std::pair<long, double>>& out, long* size_out) {
    out.clear();
    long size = 0;
    if (model.kind == OffspringModel::Kind::binary_gaussian) {
        size = 2;
        for (long i = 0; i < 2; ++i) {
            const double d = g.normal(model.gauss_mean, model.gauss_sd);
            if (d <= room) out.emplace_back(i, d);
        }
    } else {
        if (!model.intensity) return false;
        const BroodIntensity& tbl = *model.intensity;
        const double ceiling = std::min(room, model.right_cut);
        const double mass = tbl.cumulative(ceiling);
        if (mass > static_cast<double>(guard)) return false;
        double arrival = 0.0;
        while (true) {
            arrival += g.exponential(1.0);
            if (arrival > mass) break;
            out.emplace_back(size, std::min(tbl.position(arrival), ceiling));
            ++size;
        }
        if (model.cap) {
            // The cap compares against the cut brood size before any wall is
            // applied, so counting continues to the full cut mass.  When that
            // mass is enormous the tail count comes from its normal
            // approximation instead of materialized arrivals; the children
            // already drawn match the uncapped run either way.
            const double total = tbl.total();
            if (total - mass > static_cast<double>(guard)) {
                const double approx = total + std::sqrt(total) * g.normal();
                size = static_cast<long>(std::min(approx, 4.0e18));
            } else {
                while (arrival <= total) {
                    ++size;
                    arrival += g.exponential(1.0);
                }
            }
        }
    }
    if (model.cap && size > *model.cap) out.clear();
    if (size_out) *size_out = size;
    return true;
}

struct AdvanceOutcome {
    bool exploded = false;
};

inline AdvanceOutcome advance_generation(const OffspringModel& model,
                                         const std::vector<Node>& cur, double wall_hi,
                                         double wall_lo, long guard, std::vector<Node>& next,
                                         std::vector<std::pair<long, double>>& scratch) {
    next.clear();
    for (const Node& node : cur) {
        Stream brood(derive_key(node.key, 0xB0));
        if (!brood_displacements(model, wall_hi - node.pos, brood, guard, scratch, nullptr)) {
            return {true};
        }
        for (const auto& [idx, d] : scratch) {
            const double child = node.pos + d;
            if (child < wall_lo) continue;
            next.push_back({child, derive_key(node.key, 0xC0, static_cast<std::uint64_t>(idx))});
        }
    }
    return {false};
}

} // namespace detail

// One brood, materialized as absolute child positions at or below
// `barrier_at_next`.  Children above the barrier are never created; the
// whole-brood cap, when configured, is applied to the cut brood size.
inline std::vector<double> sample_brood(const OffspringModel& model, double parent_position,
                                        double barrier_at_next, Stream& g) {
    std::vector<std::pair<long, double>> scratch;
    const long guard = brood_guard(SurvivalCaps{});
    if (!detail::brood_displacements(model, barrier_at_next - parent_position, g, guard, scratch,
                                     nullptr)) {
        throw std::runtime_error("brood intensity exceeds the sampling guard");
    }
    std::vector<double> brood;
    brood.reserve(scratch.size());
    for (const auto& [idx, d] : scratch) brood.push_back(parent_position + d);
    return brood;
}

using PopulationObserver = std::function<void(long, double)>;

struct TrialOutcome {
    bool survived = false;
    bool capped = false;         // population cap or brood explosion fired
    long final_count = 0;
    long end_generation = 0;
};

namespace detail {

// Drive a population from `from_gen` (where `cur` lives) up to `horizon`.
inline TrialOutcome run_generations(const OffspringModel& model, const BarrierSpec& barrier,
                                    std::vector<Node> cur, long from_gen, long horizon,
                                    const SurvivalCaps& caps, const PopulationObserver& observer,
                                    std::vector<Node>* capped_state) {
    std::vector<Node> next;
    std::vector<std::pair<long, double>> scratch;
    const long guard = brood_guard(caps);
    TrialOutcome out;
    out.end_generation = from_gen;
    for (long i = from_gen + 1; i <= horizon; ++i) {
        const auto step = advance_generation(model, cur, barrier.upper(i), barrier.lower(i),
                                             guard, next, scratch);
        out.end_generation = i;
        if (step.exploded || static_cast<long>(next.size()) > caps.max_pop) {
            out.survived = true;
            out.capped = true;
            out.final_count = static_cast<long>(next.size());
            if (capped_state) *capped_state = next;
            return out;
        }
        cur.swap(next);
        if (observer) {
            for (const Node& nd : cur) observer(i, nd.pos);
        }
        if (cur.empty()) return out;
    }
    out.final_count = static_cast<long>(cur.size());
    out.survived = !cur.empty() && out.final_count >= caps.survive_threshold;
    return out;
}

} // namespace detail

inline TrialOutcome survive_one(const OffspringModel& model, const BarrierSpec& barrier,
                                long horizon, std::uint64_t trial_key, const SurvivalCaps& caps,
                                const PopulationObserver& observer = {},
                                std::vector<detail::Node>* capped_state = nullptr) {
    require(horizon >= 1, "survival needs horizon >= 1");
    std::vector<detail::Node> root{{0.0, derive_key(trial_key, 0x4E)}};
    return detail::run_generations(model, barrier, std::move(root), 0, horizon, caps, observer,
                                   capped_state);
}

// Per-generation snapshot of one trial, for exhaustive barrier audits.
struct Population {
    long generation;
    std::vector<double> members;
};

inline std::vector<Population> trace_population(const OffspringModel& model,
                                                const BarrierSpec& barrier, long horizon,
                                                std::uint64_t trial_key,
                                                const SurvivalCaps& caps) {
    std::vector<Population> gens;
    gens.push_back({0, {0.0}});
    auto obs = [&](long g, double pos) {
        if (gens.back().generation != g) gens.push_back({g, {}});
        gens.back().members.push_back(pos);
    };
    survive_one(model, barrier, horizon, trial_key, caps, obs);
    return gens;
}

struct SurvivalReport {
    Estimate estimate;
    long trials = 0;
    long capped_trials = 0;
    // Continuations of capped states on a 256-member uniform subsample: a
    // subsample dies at least as often as the full population would, so the
    // extinction fraction conservatively bounds the cap's upward bias.
    long aux_runs = 0;
    long aux_extinctions = 0;
};

namespace detail {

inline bool subsample_dies(const OffspringModel& model, const BarrierSpec& barrier,
                           std::vector<Node> state, long from_gen, long horizon,
                           const SurvivalCaps& caps, std::uint64_t trial_key) {
    constexpr std::size_t keep = 256;
    if (state.size() > keep) {
        Stream pick(derive_key(trial_key, 0xA7));
        for (std::size_t i = 0; i < keep; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(pick.uniform(0.0, static_cast<double>(state.size() - i)));
            std::swap(state[i], state[std::min(j, state.size() - 1)]);
        }
        state.resize(keep);
    }
    const auto out = run_generations(model, barrier, std::move(state), from_gen, horizon, caps,
                                     {}, nullptr);
    return !out.survived;
}

} // namespace detail

// Fraction of trials whose absorbed population is still alive at `horizon`.
// Trials that hit the population cap are declared surviving; the resulting
// upward bias is bounded by the auxiliary continuations in the report.
inline SurvivalReport survival_prob(const OffspringModel& model, const BarrierSpec& barrier,
                                    long horizon, long trials, const SurvivalCaps& caps,
                                    std::uint64_t seed, long aux_continuations = 2) {
    require(trials >= 1, "survival_prob needs at least one trial");
    SurvivalReport rep;
    rep.trials = trials;
    long hits = 0;
    std::vector<detail::Node> capped_state;
    for (long t = 0; t < trials; ++t) {
        const std::uint64_t key = derive_key(seed, 0x54, static_cast<std::uint64_t>(t));
        const bool want_state = rep.aux_runs < aux_continuations;
        capped_state.clear();
        const auto out = survive_one(model, barrier, horizon, key, caps, {},
                                     want_state ? &capped_state : nullptr);
        if (out.survived) ++hits;
        if (out.capped) {
            ++rep.capped_trials;
            if (want_state) {
                ++rep.aux_runs;
                if (detail::subsample_dies(model, barrier, std::move(capped_state),
                                           out.end_generation, horizon, caps, key)) {
                    ++rep.aux_extinctions;
                }
            }
        }
    }
    rep.estimate = binomial_estimate(hits, trials);
    return rep;
}

// s(a, n) along a coefficient grid under shared randomness: the genealogy
// keys do not depend on a, so the estimates are nondecreasing pathwise.
struct SurvivalCurve {
    std::vector<double> a_grid;
    long horizon = 0;
    long trials = 0;
    SurvivalCaps caps;
    std::vector<Estimate> estimates;
    std::vector<long> capped_trials;
};

inline SurvivalCurve survival_curve(const OffspringModel& model, const std::vector<double>& a_grid,
                                    long horizon, long trials, const SurvivalCaps& caps,
                                    std::uint64_t seed) {
    require(!a_grid.empty(), "survival_curve needs a nonempty grid");
    SurvivalCurve curve;
    curve.a_grid = a_grid;
    curve.horizon = horizon;
    curve.trials = trials;
    curve.caps = caps;
    for (double a : a_grid) {
        const auto rep = survival_prob(model, power_barrier(a, model.alpha()), horizon, trials,
                                       caps, seed, 0);
        curve.estimates.push_back(rep.estimate);
        curve.capped_trials.push_back(rep.capped_trials);
    }
    return curve;
}

struct CriticalSearchResult {
    double crossing = 0.0;
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
    long horizon = 0;
    std::vector<std::pair<double, double>> evaluations;  // (a, s(a, n)) in call order
};

// Bisect the CRN-coupled survival curve for s(a, n) = threshold.  The shared
// seed makes s nondecreasing in a, so bisection is well defined; the crossing
// is a finite-n proxy whose drift toward the critical coefficient shows up
// as the horizon grows.
inline CriticalSearchResult critical_a_search(const OffspringModel& model, long horizon,
                                              long trials, double a_lo, double a_hi,
                                              double threshold, const SurvivalCaps& caps,
                                              std::uint64_t seed, int iterations = 10) {
    require(a_lo > 0.0 && a_hi > a_lo, "search bracket must satisfy 0 < a_lo < a_hi");
    require(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1)");
    require(iterations >= 1, "bisection needs at least one iteration");
    CriticalSearchResult res;
    res.horizon = horizon;
    auto s_at = [&](double a) {
        const auto rep = survival_prob(model, power_barrier(a, model.alpha()), horizon, trials,
                                       caps, seed, 0);
        res.evaluations.emplace_back(a, rep.estimate.value);
        return rep.estimate.value;
    };
    require(s_at(a_lo) < threshold && threshold < s_at(a_hi),
            "bracket does not straddle the survival threshold");
    double lo = a_lo, hi = a_hi;
    for (int i = 0; i < iterations; ++i) {
        const double mid = 0.5 * (lo + hi);
        (s_at(mid) >= threshold ? hi : lo) = mid;
    }
    res.crossing = 0.5 * (lo + hi);
    res.bracket_lo = lo;
    res.bracket_hi = hi;
    return res;
}

// One corridor count: a single ancestor repositioned onto the upper wall at
// generation e^{lambda k}, its descendants confined to
// [(a-b) i^{1/(1+alpha)}, a i^{1/(1+alpha)}] up to generation e^{lambda(k+1)},
// where the count is taken.  With `trunc_exponent` set (must exceed
// 1 + alpha), broods larger than floor(exp(l^{1/exponent})) are discarded,
// l being the number of generations spanned.  Outside 0 < b < a the corridor
// is degenerate and the count is zero by definition.  If the population
// exceeds the cap the count is reported as max_pop (a floor for the truth).
inline long two_barrier_count(const OffspringModel& model, double a, double b, double lambda,
                              long k, std::uint64_t key, const SurvivalCaps& caps,
                              std::optional<double> trunc_exponent = std::nullopt,
                              const PopulationObserver& observer = {}) {
    require(a > 0.0, "corridor needs a positive upper coefficient");
    require(k >= 0, "segment index must be nonnegative");
    require(lambda > 0.0, "segment ratio must be positive");
    const double el = std::exp(lambda);
    const long base = std::lround(el);
    require(base >= 2 && std::abs(el - static_cast<double>(base)) <= 1e-9 * el,
            "exp(lambda) must be a whole number of generations");
    if (b <= 0.0 || b >= a) return 0;

    double gen_lo = 1.0, gen_hi = static_cast<double>(base);
    for (long j = 0; j < k; ++j) {
        gen_lo *= base;
        gen_hi *= base;
    }
    require(gen_hi <= 1e8, "segment end generation exceeds the horizon guard");
    const long i0 = static_cast<long>(gen_lo);
    const long i1 = static_cast<long>(gen_hi);

    OffspringModel run = model;
    if (trunc_exponent) {
        require(*trunc_exponent > 1.0 + model.alpha(),
                "truncation exponent must exceed 1 + alpha");
        run.cap = static_cast<long>(
            std::floor(std::exp(std::pow(static_cast<double>(i1 - i0), 1.0 / *trunc_exponent))));
    }

    const double p = scaling_exponent(model.alpha());
    std::vector<detail::Node> cur{
        {a * std::pow(static_cast<double>(i0), p), derive_key(key, 0x2B)}};
    std::vector<detail::Node> next;
    std::vector<std::pair<long, double>> scratch;
    const long guard = brood_guard(caps);
    for (long i = i0 + 1; i <= i1; ++i) {
        const double t = static_cast<double>(i);
        const auto step = detail::advance_generation(run, cur, a * std::pow(t, p),
                                                     (a - b) * std::pow(t, p), guard, next,
                                                     scratch);
        if (step.exploded || static_cast<long>(next.size()) > caps.max_pop) return caps.max_pop;
        cur.swap(next);
        if (observer) {
            for (const auto& nd : cur) observer(i, nd.pos);
        }
        if (cur.empty()) return 0;
    }
    return static_cast<long>(cur.size());
}

enum class PathFunctional {
    constant_one,           // F = 1
    indicator_nonpositive,  // 1 { S_n <= 0 }
    indicator_tube,         // 1 { |S_i| <= 2 for all i <= n }
    exp_bounded,            // exp(-max(S_n, 0))
    bivariate_box,          // 1 { S_1 <= 0 } * 1 { brood size <= 3 }, n = 1 only
};

struct ManyToOneReport {
    Estimate tree_side;
    Estimate walk_side;
    double cut_bias = 0.0;  // n * tilted mass above the right cut
    bool consistent = false;
};

// Tree-versus-spine identity: the e^{-V}-weighted functional summed over
// generation n equals the plain expectation along the lineage walk.  The
// right cut removes tilted mass c T^{-alpha} per generation; the walk side
// carries the matching step indicator and the residual bias widens the
// consistency band.  The bivariate form pairs the child position with its
// brood size; on the walk side the size is 1 plus an independent Poisson
// draw of the cut intensity mass (or the constant 2 for the binary model).
inline ManyToOneReport many_to_one_check(const OffspringModel& model, long n,
                                         PathFunctional functional, long trials,
                                         std::uint64_t seed) {
    require(n >= 1 && n <= 6, "tree side is exponential in n; allowed range is 1..6");
    require(trials >= 2, "need at least two trials for a standard error");
    if (functional == PathFunctional::bivariate_box) {
        require(n == 1, "the bivariate functional compares a single generation");
    }
    const bool poisson = model.kind == OffspringModel::Kind::poisson_boundary;
    require(!poisson || model.brood_mean <= 64.0,
            "right cut too heavy for tree-side simulation");

    auto value_of = [&](const std::vector<double>& path, long brood) {
        switch (functional) {
        case PathFunctional::constant_one:
            return 1.0;
        case PathFunctional::indicator_nonpositive:
            return path.back() <= 0.0 ? 1.0 : 0.0;
        case PathFunctional::indicator_tube:
            for (double s : path) {
                if (std::abs(s) > 2.0) return 0.0;
            }
            return 1.0;
        case PathFunctional::exp_bounded:
            return std::exp(-std::max(path.back(), 0.0));
        case PathFunctional::bivariate_box:
            return (path.front() <= 0.0 && brood <= 3) ? 1.0 : 0.0;
        }
        return 0.0;
    };

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> tree_samples, walk_samples;
    tree_samples.reserve(static_cast<std::size_t>(trials));
    walk_samples.reserve(static_cast<std::size_t>(trials));
    std::vector<std::pair<long, double>> scratch;

    struct Lineage {
        std::uint64_t key;
        std::vector<double> path;
    };
    for (long t = 0; t < trials; ++t) {
        std::vector<Lineage> layer{{derive_key(seed, 0x31, static_cast<std::uint64_t>(t)), {}}};
        std::vector<Lineage> deeper;
        long root_brood = 0;
        for (long depth = 1; depth <= n; ++depth) {
            deeper.clear();
            for (const Lineage& parent : layer) {
                Stream brood(derive_key(parent.key, 0xB0));
                long size = 0;
                if (!detail::brood_displacements(model, inf, brood, 1000000, scratch, &size)) {
                    throw std::runtime_error("brood intensity exceeds the tree-side guard");
                }
                if (depth == 1) root_brood = size;
                const double base = parent.path.empty() ? 0.0 : parent.path.back();
                for (const auto& [idx, d] : scratch) {
                    Lineage child;
                    child.key = derive_key(parent.key, 0xC0, static_cast<std::uint64_t>(idx));
                    child.path = parent.path;
                    child.path.push_back(base + d);
                    deeper.push_back(std::move(child));
                }
            }
            layer.swap(deeper);
            require(layer.size() <= 2000000, "tree side grew past the memory guard");
        }
        CompensatedSum tree;
        for (const Lineage& leaf : layer) {
            tree.add(std::exp(-leaf.path.back()) * value_of(leaf.path, root_brood));
        }
        tree_samples.push_back(tree.value());

        Stream walk(derive_key(seed, 0x57, static_cast<std::uint64_t>(t)));
        std::vector<double> path(static_cast<std::size_t>(n));
        double pos = 0.0;
        bool under_cut = true;
        for (long i = 0; i < n; ++i) {
            double step;
            if (poisson) {
                step = model.spine.sample(walk);
                if (step > model.right_cut) under_cut = false;
            } else {
                step = walk.normal(0.0, model.gauss_sd);
            }
            pos += step;
            path[static_cast<std::size_t>(i)] = pos;
        }
        long mark = 2;
        if (poisson) mark = 1 + walk.poisson(model.brood_mean);
        walk_samples.push_back(under_cut ? value_of(path, mark) : 0.0);
    }

    ManyToOneReport rep;
    rep.tree_side = mean_estimate(tree_samples);
    rep.walk_side = mean_estimate(walk_samples);
    rep.cut_bias = poisson ? static_cast<double>(n) * model.defect_mass : 0.0;
    rep.consistent = rep.tree_side.overlaps(rep.walk_side, rep.cut_bias);
    return rep;
}

struct BnReport {
    std::vector<long> checkpoints;     // N^k for k = 1..k_max
    std::vector<double> thresholds;    // required in-corridor count at each checkpoint
    std::vector<Estimate> frequency;   // cumulative success through checkpoint k
    double tradeoff_root = 0.0;        // corridor depth r_a
    long capped_trials = 0;
};

// Population growth inside the corridor [(a - r_a) i^p, a i^p]: at each
// checkpoint generation N^k the in-corridor count must reach
// exp(N^{k/(1+alpha)} (r_a - eps) / 2).  Frequencies are cumulative (the
// event at k requires every earlier checkpoint too), so they are
// nonincreasing in k.  Trials that hit the population cap pass their
// remaining checkpoints, with the same documented upward bias as
// survival_prob; thresholds above the cap are rejected as unmeasurable.
inline BnReport bn_experiment(const OffspringModel& model, double a, long base_n, int k_max,
                              double eps, double cstar, long trials, const SurvivalCaps& caps,
                              std::uint64_t seed) {
    const double al = model.alpha();
    require(cstar > 0.0, "confinement constant must be positive");
    require(base_n >= 2, "checkpoint base must be at least 2");
    require(k_max >= 1, "need at least one checkpoint");
    require(trials >= 1, "need at least one trial");
    const double a_crit = critical_coefficient(al, cstar);
    require(a > a_crit, "population growth needs a supercritical coefficient");
    const double ra = tradeoff_upper_root(a, al, cstar);
    require(eps > 0.0 && eps < ra, "eps must lie in (0, r_a)");

    BnReport rep;
    rep.tradeoff_root = ra;
    const double p = scaling_exponent(al);
    double gen = 1.0;
    for (int k = 1; k <= k_max; ++k) {
        gen *= static_cast<double>(base_n);
        require(gen <= 1e7, "checkpoint budget exceeded");
        rep.checkpoints.push_back(static_cast<long>(gen));
        const double need = std::exp(0.5 * std::pow(gen, p) * (ra - eps));
        require(need <= static_cast<double>(caps.max_pop),
                "checkpoint threshold exceeds the population cap; raise max_pop");
        rep.thresholds.push_back(need);
    }

    const long last = rep.checkpoints.back();
    const long guard = brood_guard(caps);
    std::vector<long> through(static_cast<std::size_t>(k_max) + 1, 0);
    std::vector<detail::Node> cur, next;
    std::vector<std::pair<long, double>> scratch;
    for (long t = 0; t < trials; ++t) {
        cur.assign(1, {0.0, derive_key(seed, 0x4E, static_cast<std::uint64_t>(t))});
        std::size_t next_check = 0;
        int passed = 0;
        bool capped = false;
        for (long i = 1; i <= last; ++i) {
            const double ti = static_cast<double>(i);
            const auto step = detail::advance_generation(model, cur, a * std::pow(ti, p),
                                                         (a - ra) * std::pow(ti, p), guard, next,
                                                         scratch);
            if (step.exploded || static_cast<long>(next.size()) > caps.max_pop) {
                capped = true;
                break;
            }
            cur.swap(next);
            if (cur.empty()) break;
            if (i == rep.checkpoints[next_check]) {
                if (static_cast<double>(cur.size()) >= rep.thresholds[next_check]) {
                    passed = static_cast<int>(next_check) + 1;
                    ++next_check;
                } else {
                    break;
                }
            }
        }
        if (capped) {
            ++rep.capped_trials;
            passed = k_max;
        }
        for (int k = 1; k <= passed; ++k) ++through[static_cast<std::size_t>(k)];
    }
    for (int k = 1; k <= k_max; ++k) {
        rep.frequency.push_back(binomial_estimate(through[static_cast<std::size_t>(k)], trials));
    }
    return rep;
}

// Survival under the linear wall phi(i) = eps * i (any sign of eps).
inline SurvivalReport linear_barrier_check(const OffspringModel& model, double eps, long horizon,
                                           long trials, const SurvivalCaps& caps,
                                           std::uint64_t seed) {
    return survival_prob(model, linear_barrier(eps), horizon, trials, caps, seed, 0);
}

} // namespace sbrw
