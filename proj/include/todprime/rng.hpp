#pragma once

// Seeded PRNG used for every random draw in the harness. The algorithm is
// fixed (SplitMix64 seeding xoshiro256**) so shot pools are identical
// across platforms and standard library implementations.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace todprime {

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
    std::uint64_t next() noexcept;

private:
    std::uint64_t state_;
};

class Xoshiro256 {
public:
    explicit Xoshiro256(std::uint64_t seed) noexcept;

    std::uint64_t next() noexcept;
    /// Uniform in [0, bound); bound must be > 0. Rejection sampling, no
    /// modulo bias.
    std::uint64_t uniform_below(std::uint64_t bound) noexcept;

private:
    std::array<std::uint64_t, 4> s_;
};

/// First `k` entries of a seeded Fisher-Yates shuffle of [0, n), in draw
/// order. k is clamped to n.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Xoshiro256& rng);

}  // namespace todprime
