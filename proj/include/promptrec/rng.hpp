#ifndef PROMPTREC_RNG_HPP
#define PROMPTREC_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

#include "promptrec/common.hpp"

namespace promptrec {

// Deterministic RNG. mt19937_64 is fully specified by the standard and the
// uniform mapping below avoids std::uniform_real_distribution, whose output
// is implementation-defined. All randomness in the project flows from one
// root seed, split per subsystem by label so streams do not perturb each
// other (see split()).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), exact (rejection sampling).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    // Child stream for a named subsystem ("init", "batch", "sample", "data").
    // Derived from the construction seed, not the engine state, so taking a
    // split never disturbs this stream.
    Rng split(std::string_view label) const {
        std::uint64_t h = fnv1a64(label);
        h ^= seed_;
        h *= 0x9e3779b97f4a7c15ull;
        h ^= h >> 29;
        return Rng(h);
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_ = 0;
};

}  // namespace promptrec

#endif
