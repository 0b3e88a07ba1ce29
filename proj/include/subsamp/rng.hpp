#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace subsamp {

// A (seed, stream) pair identifies one reproducible random stream.
// Identical pairs yield identical draws; distinct streams are mixed through
// SplitMix64 so that consecutive ids give unrelated states.
struct RngSeed {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    // Derived sub-stream k of this stream (pilot draw, retry, second stage, ...).
    RngSeed child(std::uint64_t k) const;
};

namespace detail {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}
}  // namespace detail

inline RngSeed RngSeed::child(std::uint64_t k) const {
    return RngSeed{seed, detail::splitmix64(stream ^ detail::kGolden * (k + 1))};
}

// mt19937_64 behind a fixed u64 -> [0,1) mapping. The standard pins the
// engine's output sequence, so draws are identical across platforms.
class Rng {
public:
    explicit Rng(RngSeed s)
        : engine_(detail::splitmix64(detail::splitmix64(s.seed) ^ detail::splitmix64(s.stream))) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0,1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), unbiased (rejection).
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - next_double();  // (0,1]
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925286766559;
        spare_ = r * std::sin(two_pi * u2);
        have_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    // Chi-squared with integer degrees of freedom (sum of squared normals).
    double next_chisq(int nu) {
        double s = 0.0;
        for (int i = 0; i < nu; ++i) {
            double z = next_normal();
            s += z * z;
        }
        return s;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace subsamp
