#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tablefuse::detail {

// Deterministic RNG wrapper. std::mt19937_64 has a standard-specified output
// sequence; the bounded/real helpers below avoid std::*_distribution, whose
// results differ between standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t bounded(std::uint64_t n) {
        assert(n > 0);
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform real in [0, 1) with 53-bit resolution.
    double real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double real(double lo, double hi) { return lo + (hi - lo) * real(); }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = real();
        while (u1 <= 0.0) u1 = real();
        const double u2 = real();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[bounded(i)]);
        }
    }

    // k distinct indices drawn from [0, n), in ascending order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        shuffle(all);
        if (k > n) k = n;
        all.resize(k);
        std::sort(all.begin(), all.end());
        return all;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace tablefuse::detail
