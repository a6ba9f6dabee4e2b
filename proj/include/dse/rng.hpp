#pragma once

#include <cmath>
#include <cstdint>

namespace dse {

// SplitMix64 step: advances `state` and returns the next output word.
inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Counter-based pseudo-random stream. A stream is fully determined by
// (seed, substream), so per-pixel / per-step substreams can be evaluated
// in any order (or in parallel) with identical results on every platform.
// std::normal_distribution and friends are deliberately avoided: their
// output is implementation-defined.
class RngStream {
public:
    explicit RngStream(uint64_t seed) : state_(seed) {
        splitmix64(state_);  // decorrelate small seeds
    }

    RngStream(uint64_t seed, uint64_t substream) : state_(seed) {
        splitmix64(state_);
        state_ ^= 0x94d049bb133111ebull * (substream + 0x632be59bd9b4e019ull);
        splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    // Uniform on the open interval (0, 1); never returns an exact 0 or 1,
    // so log() and Box-Muller are always safe.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (cosine branch only, no cached spare).
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Gamma(shape, rate) by Marsaglia-Tsang squeeze, with the usual
    // boost for shape < 1.
    double gamma(double shape, double rate) {
        if (shape < 1.0) {
            double g = gamma(shape + 1.0, rate);
            return g * std::pow(uniform01(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
        }
    }

    // Unbiased integer in [0, n).
    uint64_t uniform_index(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

private:
    uint64_t state_;
};

}  // namespace dse
