#ifndef SBRW_STATS_HPP
#define SBRW_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sbrw/rng.hpp"

namespace sbrw {

// Point estimate with a 95% interval.  `lo`/`hi` come from a normal interval
// for means and from Wilson (exact at the empty/full edges) for proportions.
struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    long n = 0;

    bool overlaps(const Estimate& other, double slack = 0.0) const {
        return lo - slack <= other.hi && other.lo - slack <= hi;
    }
};

inline Estimate mean_estimate(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean_estimate: empty sample");
    const double n = static_cast<double>(xs.size());
    double s = 0.0;
    for (double x : xs) s += x;
    const double m = s / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    const double se = xs.size() > 1 ? std::sqrt(ss / (n * (n - 1.0))) : 0.0;
    return {m, se, m - 1.959963984540054 * se, m + 1.959963984540054 * se,
            static_cast<long>(xs.size())};
}

// Proportion estimate.  Wilson interval in the interior; at k = 0 (resp.
// k = n) the upper (resp. lower) bound is replaced by the exact one-sided
// Clopper-Pearson bound so that "zero successes" still carries information.
inline Estimate binomial_estimate(long k, long n) {
    if (n <= 0 || k < 0 || k > n) throw std::invalid_argument("binomial_estimate: bad counts");
    const double z = 1.959963984540054;
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double denom = 1.0 + z * z / nn;
    const double center = (p + z * z / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
    Estimate e;
    e.value = p;
    e.std_error = std::sqrt(std::max(p * (1.0 - p), 1.0 / nn) / nn);
    e.lo = std::max(0.0, center - half);
    e.hi = std::min(1.0, center + half);
    e.n = n;
    if (k == 0) {
        e.lo = 0.0;
        e.hi = 1.0 - std::pow(0.025, 1.0 / nn);
    }
    if (k == n) {
        e.lo = std::pow(0.025, 1.0 / nn);
        e.hi = 1.0;
    }
    return e;
}

// One-sided exact 95% lower confidence bound for a proportion.
inline double binomial_lower_bound95(long k, long n) {
    if (k <= 0) return 0.0;
    if (k >= n) return std::pow(0.05, 1.0 / static_cast<double>(n));
    // Search the Clopper-Pearson bound: largest p with P(Bin(n,p) >= k) <= 0.95
    // evaluated through the regularized incomplete beta identity via bisection
    // on the binomial tail computed in log space.
    auto tail_ge_k = [&](double p) {
        // P(X >= k) for X ~ Bin(n, p), computed by summing the complement.
        double logq = std::log1p(-p), logp = std::log(p);
        double acc = 0.0;
        double logc = 0.0; // log C(n, i) built incrementally
        for (long i = 0; i < k; ++i) {
            if (i > 0)
                logc += std::log(static_cast<double>(n - i + 1)) - std::log(static_cast<double>(i));
            acc += std::exp(logc + static_cast<double>(i) * logp +
                            static_cast<double>(n - i) * logq);
        }
        return 1.0 - std::min(1.0, acc);
    };
    double lo = 0.0, hi = static_cast<double>(k) / static_cast<double>(n);
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (tail_ge_k(mid) >= 0.05)
            hi = mid;
        else
            lo = mid;
    }
    return lo;
}

// Kolmogorov-Smirnov distance of a sample against an analytic CDF.
template <typename Cdf>
double ks_one_sample(std::vector<double> xs, Cdf&& cdf) {
    if (xs.empty()) throw std::invalid_argument("ks_one_sample: empty sample");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = cdf(xs[i]);
        d = std::max(d, std::abs(F - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - F));
    }
    return d;
}

inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

// KS acceptance threshold at significance `level` (asymptotic).
inline double ks_threshold_one_sample(std::size_t n, double level) {
    return std::sqrt(-0.5 * std::log(level / 2.0)) / std::sqrt(static_cast<double>(n));
}

inline double ks_threshold_two_sample(std::size_t n, std::size_t m, double level) {
    const double c = std::sqrt(-0.5 * std::log(level / 2.0));
    return c * std::sqrt((static_cast<double>(n) + static_cast<double>(m)) /
                         (static_cast<double>(n) * static_cast<double>(m)));
}

// Bootstrap standard error of a statistic of an i.i.d.-ish sample.
template <typename Stat>
double bootstrap_se(const std::vector<double>& xs, Stat&& stat, int B, Stream& stream) {
    if (xs.size() < 2) return 0.0;
    std::vector<double> resample(xs.size());
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
        for (auto& r : resample)
            r = xs[static_cast<std::size_t>(stream.u64() % xs.size())];
        vals.push_back(stat(resample));
    }
    double m = 0.0;
    for (double v : vals) m += v;
    m /= static_cast<double>(vals.size());
    double ss = 0.0;
    for (double v : vals) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(vals.size() - 1));
}

// Paley-Zygmund bound evaluated on an empirical sample: for any nonnegative
// sample with positive mean and theta in (0,1),
//   fraction{Z >= theta * mean} >= (1-theta)^2 mean^2 / second_moment
// holds exactly (the inequality is distribution-free, so it applies to the
// empirical measure itself).
struct PaleyZygmund {
    double lhs = 0.0;
    double rhs = 0.0;
    double mean = 0.0;
    double second_moment = 0.0;
    bool ok = false;
};

inline PaleyZygmund paley_zygmund_check(const std::vector<double>& zs, double theta) {
    if (zs.empty()) throw std::invalid_argument("paley_zygmund_check: empty sample");
    if (!(theta > 0.0 && theta < 1.0))
        throw std::invalid_argument("paley_zygmund_check: theta must lie in (0,1)");
    PaleyZygmund out;
    const double n = static_cast<double>(zs.size());
    for (double z : zs) {
        if (z < 0.0) throw std::invalid_argument("paley_zygmund_check: negative value");
        out.mean += z;
        out.second_moment += z * z;
    }
    out.mean /= n;
    out.second_moment /= n;
    if (out.mean <= 0.0) {
        out.ok = true; // vacuous: zero sample
        return out;
    }
    long cnt = 0;
    for (double z : zs)
        if (z >= theta * out.mean) ++cnt;
    out.lhs = static_cast<double>(cnt) / n;
    out.rhs = (1.0 - theta) * (1.0 - theta) * out.mean * out.mean / out.second_moment;
    out.ok = out.lhs >= out.rhs - 1e-12;
    return out;
}

} // namespace sbrw

#endif
