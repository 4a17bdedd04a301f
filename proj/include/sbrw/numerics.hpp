#ifndef SBRW_NUMERICS_HPP
#define SBRW_NUMERICS_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace sbrw {

// Neumaier-compensated accumulator.  Used wherever many small probabilities
// are summed (lattice DP, long Monte Carlo reductions).
class CompensatedSum {
  public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

template <typename F>
double integrate(F&& f, double a, double b, double tol = 1e-12) {
    using boost::math::quadrature::gauss_kronrod;
    return gauss_kronrod<double, 15>::integrate(std::forward<F>(f), a, b, 15, tol);
}

// Integral with an integrable endpoint singularity at either end.
template <typename F>
double integrate_singular(F&& f, double a, double b, double tol = 1e-12) {
    boost::math::quadrature::tanh_sinh<double> q;
    return q.integrate(std::forward<F>(f), a, b, tol);
}

// Integral over [a, infinity) of a function with algebraic decay ~ x^{-p},
// p > 1.  The substitution x = a * t^{-k} with k = 3/(p-1) turns the tail
// into a C^2 integrand on (0, 1], which Gauss-Kronrod handles at full rate.
template <typename F>
double integrate_power_tail(F&& f, double a, double decay_p, double tol = 1e-12) {
    if (!(a > 0.0)) throw std::invalid_argument("power-tail integral needs a > 0");
    if (!(decay_p > 1.0)) throw std::invalid_argument("power-tail integral needs decay > 1");
    const double k = std::max(1.0, 3.0 / (decay_p - 1.0));
    auto g = [&](double t) {
        const double x = a * std::pow(t, -k);
        return f(x) * a * k * std::pow(t, -k - 1.0);
    };
    return integrate(g, 0.0, 1.0, tol);
}

struct RootResult {
    double x;
    double residual;
    int iterations;
};

// Bisection on a bracketing interval, with a fixed-point polish.  `tol` is on
// the residual |f(x)|.
template <typename F>
RootResult bisect(F&& f, double lo, double hi, double tol = 1e-12, int max_iter = 200) {
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return {lo, 0.0, 0};
    if (fhi == 0.0) return {hi, 0.0, 0};
    if ((flo > 0.0) == (fhi > 0.0))
        throw std::invalid_argument("bisect: interval does not bracket a root");
    double mid = 0.5 * (lo + hi), fmid = 0.0;
    int it = 0;
    for (; it < max_iter; ++it) {
        mid = 0.5 * (lo + hi);
        fmid = f(mid);
        if (std::abs(fmid) < tol || (hi - lo) < 4.0 * std::numeric_limits<double>::epsilon() * std::abs(mid))
            break;
        if ((fmid > 0.0) == (fhi > 0.0)) {
            hi = mid;
            fhi = fmid;
        } else {
            lo = mid;
            flo = fmid;
        }
    }
    return {mid, std::abs(fmid), it};
}

// Golden-section minimisation of a unimodal function on [lo, hi].
template <typename F>
double golden_min(F&& f, double lo, double hi, double xtol = 1e-12, int max_iter = 200) {
    const double phi = 0.6180339887498948482;
    double a = lo, b = hi;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < max_iter && (b - a) > xtol * (1.0 + std::abs(a) + std::abs(b)); ++it) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    return f1 <= f2 ? x1 : x2;
}

struct LineFit {
    double slope;
    double intercept;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_line: need two or more paired points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LineFit out;
    out.slope = (n * sxy - sx * sy) / denom;
    out.intercept = (sy - out.slope * sx) / n;
    return out;
}

// Adaptive Dormand-Prince 5(4) for small fixed-size systems.  Steps are
// accepted against a mixed abs/rel tolerance; an optional stop predicate
// halts integration (used for blow-down detection).  The stepper bisects
// into a stop event so the recorded terminal state sits close to the event.
template <std::size_t N>
struct OdeTrace {
    std::vector<double> s;
    std::vector<std::array<double, N>> y;
    bool stopped = false;
};

template <std::size_t N, typename F, typename Stop>
OdeTrace<N> integrate_ode(F&& deriv, std::array<double, N> y0, double s0, double s1,
                          double tol, Stop&& stop_when, double h_init = 0.0) {
    static constexpr double c[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
    static constexpr double A[7][6] = {
        {},
        {1.0 / 5},
        {3.0 / 40, 9.0 / 40},
        {44.0 / 45, -56.0 / 15, 32.0 / 9},
        {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
        {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
        {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
    static constexpr double b5[7] = {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192,
                                     -2187.0 / 6784, 11.0 / 84, 0};
    static constexpr double b4[7] = {5179.0 / 57600, 0, 7571.0 / 16695, 393.0 / 640,
                                     -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

    OdeTrace<N> trace;
    trace.s.push_back(s0);
    trace.y.push_back(y0);

    double s = s0;
    std::array<double, N> y = y0;
    double h = h_init > 0.0 ? h_init : (s1 - s0) * 1e-4;
    const double h_min = (s1 - s0) * 1e-14;
    std::array<std::array<double, N>, 7> k;

    int guard = 0;
    while (s < s1 && ++guard < 2000000) {
        if (s + h > s1) h = s1 - s;
        k[0] = deriv(s, y);
        bool rejected = false;
        std::array<double, N> y5{}, y4{};
        for (int stage = 1; stage < 7; ++stage) {
            std::array<double, N> yt = y;
            for (int j = 0; j < stage; ++j)
                for (std::size_t d = 0; d < N; ++d) yt[d] += h * A[stage][j] * k[j][d];
            k[stage] = deriv(s + c[stage] * h, yt);
        }
        double err = 0.0;
        for (std::size_t d = 0; d < N; ++d) {
            double v5 = y[d], v4 = y[d];
            for (int j = 0; j < 7; ++j) {
                v5 += h * b5[j] * k[j][d];
                v4 += h * b4[j] * k[j][d];
            }
            y5[d] = v5;
            y4[d] = v4;
            const double sc = tol * (1.0 + std::abs(y[d]));
            err = std::max(err, std::abs(v5 - v4) / sc);
        }
        if (err > 1.0 && h > h_min) {
            h = std::max(h_min, 0.9 * h * std::pow(err, -0.25));
            rejected = true;
        }
        if (rejected) continue;

        if (stop_when(s + h, y5)) {
            // Bisect the step into the event so the terminal point is tight.
            double hlo = 0.0, hhi = h;
            std::array<double, N> yev = y5;
            for (int i = 0; i < 60 && (hhi - hlo) > 1e-15 * h; ++i) {
                const double hm = 0.5 * (hlo + hhi);
                std::array<double, N> ym = y;
                // One RK5 evaluation at the trial sub-step.
                std::array<std::array<double, N>, 7> km;
                km[0] = k[0];
                for (int stage = 1; stage < 7; ++stage) {
                    std::array<double, N> yt = y;
                    for (int j = 0; j < stage; ++j)
                        for (std::size_t d = 0; d < N; ++d) yt[d] += hm * A[stage][j] * km[j][d];
                    km[stage] = deriv(s + c[stage] * hm, yt);
                }
                for (std::size_t d = 0; d < N; ++d) {
                    double v = y[d];
                    for (int j = 0; j < 7; ++j) v += hm * b5[j] * km[j][d];
                    ym[d] = v;
                }
                if (stop_when(s + hm, ym)) {
                    hhi = hm;
                    yev = ym;
                } else {
                    hlo = hm;
                }
            }
            s += hhi;
            y = yev;
            trace.s.push_back(s);
            trace.y.push_back(y);
            trace.stopped = true;
            return trace;
        }

        s += h;
        y = y5;
        trace.s.push_back(s);
        trace.y.push_back(y);
        if (err > 1e-30) h = std::min(h * std::min(5.0, 0.9 * std::pow(err, -0.2)), (s1 - s0) * 0.05);
    }
    return trace;
}

inline std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

} // namespace sbrw

#endif
