#ifndef SBRW_RNG_HPP
#define SBRW_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace sbrw {

// Counter-based stream derivation: every consumer of randomness receives a
// 64-bit key derived from (master seed, stage tag, index...).  Streams are
// therefore independent of scheduling order, which is what makes parallel and
// serial runs bit-identical and lets common-random-number couplings key the
// randomness to tree nodes rather than to a draw sequence.

namespace detail {
inline std::uint64_t splitmix_fin(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
} // namespace detail

inline std::uint64_t derive_key(std::uint64_t a, std::uint64_t b) {
    return detail::splitmix_fin(detail::splitmix_fin(a) ^ (0xA0761D6478BD642FULL + b));
}

template <typename... Rest>
inline std::uint64_t derive_key(std::uint64_t a, std::uint64_t b, Rest... rest) {
    return derive_key(derive_key(a, b), rest...);
}

// xoshiro256** seeded through splitmix64.  Hand-rolled so that identical
// seeds give identical output on every platform (std distributions make no
// such promise).
class Stream {
  public:
    explicit Stream(std::uint64_t key) {
        std::uint64_t z = key;
        for (auto& w : state_) {
            z = detail::splitmix_fin(z);
            w = z;
        }
        have_normal_ = false;
        cached_normal_ = 0.0;
    }

    std::uint64_t u64() {
        auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1).
    double unit() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1].
    double unit_pos() { return 1.0 - unit(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    double normal() {
        if (have_normal_) {
            have_normal_ = false;
            return cached_normal_;
        }
        const double r = std::sqrt(-2.0 * std::log(unit_pos()));
        const double th = 6.283185307179586476925286766559 * unit();
        cached_normal_ = r * std::sin(th);
        have_normal_ = true;
        return r * std::cos(th);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential(double rate) { return -std::log(unit_pos()) / rate; }

    // Exact Poisson sampling.  Knuth's product method on chunks of mean <= 60
    // keeps the running product well above double underflow; additivity over
    // chunks keeps the result exact for arbitrary means.
    long poisson(double mean) {
        if (!(mean >= 0.0)) throw std::invalid_argument("poisson mean must be >= 0");
        long total = 0;
        while (mean > 60.0) {
            total += poisson_knuth(60.0);
            mean -= 60.0;
        }
        return total + poisson_knuth(mean);
    }

  private:
    long poisson_knuth(double mean) {
        if (mean <= 0.0) return 0;
        const double floor_p = std::exp(-mean);
        long k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= unit_pos();
        } while (p > floor_p);
        return k - 1;
    }

    std::array<std::uint64_t, 4> state_;
    bool have_normal_;
    double cached_normal_;
};

} // namespace sbrw

#endif
