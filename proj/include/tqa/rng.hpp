#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace tqa {

// splitmix64; used to derive independent child seeds from one master seed.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) { return mix_seed(mix_seed(a) ^ b); }
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
    return mix_seed(mix_seed(a, b) ^ c);
}

// Deterministic RNG with hand-rolled distributions. std::*_distribution is
// implementation-defined, which would break the byte-reproducibility
// guarantees, so sampling is done from raw 64-bit draws only.
// Core generator: xoshiro256** seeded via splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& s : state_) {
            x = mix_seed(x);
            s = x;
        }
        gauss_cached_ = false;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n); rejection sampling, no modulo bias.
    uint64_t below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Box-Muller with a cached spare.
    double gauss(double mean = 0.0, double stddev = 1.0) {
        if (gauss_cached_) {
            gauss_cached_ = false;
            return mean + stddev * gauss_spare_;
        }
        const double u = 1.0 - uniform(); // avoid log(0)
        const double v = uniform();
        const double r = std::sqrt(-2.0 * std::log(u));
        const double theta = 2.0 * 3.14159265358979323846 * v;
        gauss_spare_ = r * std::sin(theta);
        gauss_cached_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    // Normal(mean, stddev) truncated at +/- 2 stddev, by resampling.
    double truncated_gauss(double mean, double stddev) {
        for (;;) {
            const double z = gauss(0.0, 1.0);
            if (z >= -2.0 && z <= 2.0) return mean + stddev * z;
        }
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Random permutation of 0..n-1.
    std::vector<size_t> permutation(size_t n) {
        std::vector<size_t> p(n);
        for (size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
    double gauss_spare_ = 0.0;
    bool gauss_cached_ = false;
};

} // namespace tqa
