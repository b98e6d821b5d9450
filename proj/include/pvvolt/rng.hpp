#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>

#include "pvvolt/errors.hpp"

namespace pvvolt {

// splitmix64 finalizer; whitens seed material when fanning out substreams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a, used to turn stream labels ("load", "cloud", ...) into keys.
inline std::uint64_t hash_label(std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic substream seed from a base seed and a tuple of keys.
// All randomness in the library flows from one base seed through here,
// so results are a pure function of (seed, keys...).
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t k : keys) {
        h = splitmix64(h ^ (k + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
    }
    return h;
}

// Seeded generator with the handful of draws the library needs. The raw
// engine output is standardized (mt19937_64), and every distribution below
// is implemented here rather than with std::*_distribution, so identical
// seeds give identical streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1); safe under log().
    double uniform_open01() {
        return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
    }

    // Standard normal via Marsaglia's polar method.
    double normal() {
        for (;;) {
            const double u = 2.0 * uniform01() - 1.0;
            const double v = 2.0 * uniform01() - 1.0;
            const double s = u * u + v * v;
            if (s > 0.0 && s < 1.0) {
                return u * std::sqrt(-2.0 * std::log(s) / s);
            }
        }
    }

    // Index drawn from the probability row `probs` (assumed to sum to 1).
    std::size_t categorical(std::span<const double> probs) {
        if (probs.empty()) {
            throw DomainError("rng.categorical: empty probability vector");
        }
        const double u = uniform01();
        double cumulative = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            cumulative += probs[i];
            if (u < cumulative) {
                return i;
            }
        }
        return probs.size() - 1;  // guards rounding in the row sum
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace pvvolt
