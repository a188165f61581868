#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tek {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// mt19937_64 with hand-rolled draws. std::*_distribution output is
// implementation-defined, which would break frozen test expectations, so the
// distributions live here. Per-example streams derive from (seed, index).
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : engine_(splitmix64(seed)) {}

    static Rng for_stream(uint64_t seed, uint64_t index) {
        return Rng(splitmix64(seed) ^ splitmix64(index + 0x51ED270B7A349F93ull));
    }

    uint64_t next_u64() { return engine_(); }

    // unbiased uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        const uint64_t limit = n * (UINT64_MAX / n);
        uint64_t v = engine_();
        while (v >= limit) {
            v = engine_();
        }
        return v % n;
    }

    // uniform double in [0, 1) with 53 bits
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Box-Muller, one value per call (spare cached)
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + spare_ * stddev;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mean + r * std::cos(theta) * stddev;
    }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace tek
