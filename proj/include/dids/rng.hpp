#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dids {

/// Deterministic generator with labelled substreams.
///
/// One 64-bit run seed is split into independent streams by label
/// ("repertoire", "reservoir", "simgen", ...). The engine is mt19937_64,
/// whose output sequence is fixed by the standard; the distributions below
/// are written out by hand because the std:: ones are implementation-defined.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view label)
    {
        const std::uint64_t h = mix(seed ^ mix(fnv1a(label)));
        std::seed_seq seq{
            static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
            static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
        engine_.seed(seq);
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n)
    {
        // Rejection keeps the result exactly uniform.
        const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n + 1) % n;
        std::uint64_t x = engine_();
        while (x > limit) {
            x = engine_();
        }
        return x % n;
    }

    /// Uniform integer in [lo, hi].
    std::uint64_t between(std::uint64_t lo, std::uint64_t hi) { return lo + below(hi - lo + 1); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return p > 0.0 && uniform01() < p; }

    double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

    std::uint8_t byte() { return static_cast<std::uint8_t>(engine_() >> 56); }

private:
    static constexpr std::uint64_t fnv1a(std::string_view s)
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const char c : s) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    // splitmix64 finaliser
    static constexpr std::uint64_t mix(std::uint64_t z)
    {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
};

} // namespace dids
