#pragma once
// Deterministic random streams. All randomness in a run flows from one
// master seed; independent streams are derived by hashing (seed, label)
// through splitmix64 so parallel and sequential execution see identical
// draws. Samplers are written out explicitly because the standard library
// distributions are not bit-portable across implementations.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "nudgekit/common.hpp"

namespace nudgekit {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Child stream seed for (parent seed, label). Labels are free-form, e.g.
// "sim/panel" or "forest/tree/17".
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    std::uint64_t s = seed ^ fnv1a64(label);
    return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
    std::uint64_t s = seed ^ fnv1a64(label) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // rejection to avoid modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do { v = eng_(); } while (v >= limit);
        return v % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller, one deviate per call.
    double normal(double mean = 0.0, double sd = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + sd * z;
    }

    double truncated_normal(double mean, double sd, double lo, double hi) {
        for (int i = 0; i < 10000; ++i) {
            double v = normal(mean, sd);
            if (v >= lo && v <= hi) return v;
        }
        // pathological bounds; fall back to clamped draw
        double v = normal(mean, sd);
        return v < lo ? lo : (v > hi ? hi : v);
    }

    // Multiplicative lognormal noise with unit mean.
    double lognormal_unit_mean(double sigma) {
        if (sigma == 0.0) return 1.0;
        return std::exp(normal(-0.5 * sigma * sigma, sigma));
    }

    // Index drawn with probability weight[i] / sum(weights).
    std::size_t weighted_index(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.empty() ? 0 : weights.size() - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace nudgekit
