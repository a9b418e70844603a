#pragma once

// Portable random streams. The engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard; all derived variates are computed
// here rather than with <random> distributions, whose algorithms are
// implementation-defined.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace cellmorph {

// SplitMix64 finaliser, used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix_seed(mix_seed(seed) ^ (stream * 0xD1B54A32D192ED03ull));
}

namespace detail {

// log(k!) via a table for small k and the Stirling series above it.
inline double log_factorial(std::int64_t k) {
    static const auto table = [] {
        std::array<double, 32> t{};
        for (int i = 1; i < 32; ++i) t[i] = t[i - 1] + std::log(static_cast<double>(i));
        return t;
    }();
    if (k < 32) return table[static_cast<std::size_t>(k)];
    const double n = static_cast<double>(k) + 1.0;
    const double inv = 1.0 / n, inv2 = inv * inv;
    return (n - 0.5) * std::log(n) - n + 0.5 * std::log(2.0 * std::numbers::pi) +
           inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
}

}  // namespace detail

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Knuth's product method below mean 10, Hormann's PTRS above.
    std::int64_t poisson(double mean) {
        if (!(mean > 0.0)) return 0;
        if (mean < 10.0) {
            const double limit = std::exp(-mean);
            std::int64_t k = 0;
            double prod = uniform();
            while (prod > limit) {
                ++k;
                prod *= uniform();
            }
            return k;
        }
        const double slam = std::sqrt(mean), loglam = std::log(mean);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::abs(u);
            const auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
            if (us >= 0.07 && v <= vr) return k;
            if (k < 0 || (us < 0.013 && v > us)) continue;
            if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
                -mean + static_cast<double>(k) * loglam - detail::log_factorial(k))
                return k;
        }
    }

    // Box-Muller, one variate per call.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace cellmorph
