#pragma once

#include <cstdint>
#include <random>

namespace deep_energy {

/**
 * Reproducible random source backed by std::mt19937_64, whose output
 * sequence is fixed by the C++ standard. Standard distributions are not
 * portable across library implementations, so the reductions to ranges
 * below are done by hand.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n), rejection sampled to avoid modulo bias. n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next();
        while (v >= limit) v = next();
        return v % n;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Independent child stream for item `index`; the result depends only on
    /// (master seed, index), never on the order in which children are made.
    static Rng split(std::uint64_t master_seed, std::uint64_t index) {
        return Rng(mix(mix(master_seed) ^ (index + 0x9e3779b97f4a7c15ULL)));
    }

private:
    // SplitMix64 finalizer.
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
};

} // namespace deep_energy
