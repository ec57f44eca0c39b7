#ifndef EVH_RNG_HPP
#define EVH_RNG_HPP

#include <cstdint>
#include <initializer_list>

namespace evh {

// SplitMix64 generator. Counter-based state with a strong finalizer, so
// independent streams can be derived by hashing (seed, stream-id...) tuples.
// All derived quantities (bounded ints, uniforms) are computed with fixed
// integer arithmetic, never via std::*_distribution, so every platform and
// compiler draws the same values.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Hash-combine the parts into a stream seed.
    static Rng derive(std::initializer_list<std::uint64_t> parts) {
        std::uint64_t h = 0x8BADF00D5EEDC0DEULL;
        for (std::uint64_t p : parts) h = mix(h ^ p);
        return Rng(h);
    }

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint32_t next_u32() { return static_cast<std::uint32_t>(next() >> 32); }

    // Lemire's multiply-shift bounded draw.
    std::uint32_t below(std::uint32_t n) {
        return static_cast<std::uint32_t>(
            (static_cast<std::uint64_t>(next_u32()) * n) >> 32);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool coin(double p) { return uniform() < p; }

private:
    std::uint64_t state_;
};

} // namespace evh

#endif
