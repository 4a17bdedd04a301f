#ifndef SBRW_COMMON_HPP
#define SBRW_COMMON_HPP

#include <cmath>
#include <stdexcept>
#include <string>

namespace sbrw {

// Stability index for the step law's right tail. The whole library works in
// the regime alpha in (1, 2]: finite mean, and (for alpha < 2) infinite
// variance with a regularly varying right tail.
struct StabilityIndex {
    double value;

    explicit StabilityIndex(double alpha) : value(alpha) {
        if (!(alpha > 1.0) || !(alpha <= 2.0))
            throw std::invalid_argument("stability index must lie in (1, 2], got " +
                                        std::to_string(alpha));
    }
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline constexpr double pi() { return 3.14159265358979323846; }

// Throws unless alpha lies in the supported range (1, 2].
inline void validate_stability_index(double alpha) { StabilityIndex check(alpha); (void)check; }

// Exponent of the scaling sequence c_n = n^{1/(1+alpha)} used by every
// barrier-shaped object in the library.
inline double scaling_exponent(double alpha) { return 1.0 / (1.0 + alpha); }

inline double barrier_power(double alpha, double i) {
    return std::pow(i, scaling_exponent(alpha));
}

} // namespace sbrw

#endif
