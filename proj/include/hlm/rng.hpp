// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace hlm {

// Deterministic RNG handle. All sampling goes through hand-rolled transforms
// of the raw mt19937_64 stream so sequences do not depend on the standard
// library's distribution implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // (0, 1]
    double uniform_open() { return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    // inclusive [lo, hi]
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(gen_() % span);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform_open();
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        return mean + stddev * z;
    }

    // Resamples outside two standard deviations (BERT-style init).
    double truncated_normal(double stddev) {
        for (;;) {
            double z = normal(0.0, stddev);
            if (std::abs(z) <= 2.0 * stddev) return z;
        }
    }

    // splitmix64 of (seed, index); used to derive independent per-example
    // streams so parallel application stays deterministic.
    static uint64_t derive(uint64_t seed, uint64_t index) {
        uint64_t x = seed + 0x9E3779B97F4A7C15ull * (index + 1);
        x ^= x >> 30;
        x *= 0xBF58476D1CE4E5B9ull;
        x ^= x >> 27;
        x *= 0x94D049BB133111EBull;
        x ^= x >> 31;
        return x;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace hlm
