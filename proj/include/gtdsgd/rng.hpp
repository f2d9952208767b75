// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random streams. Every draw in the library is a pure function
// of a key tuple, so results never depend on thread scheduling.
#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

#include <Eigen/Core>

namespace gtdsgd {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Order-sensitive mix of a key tuple into one 64-bit value.
std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) noexcept;

/// FNV-1a over bytes; stable across platforms. Used for tags and config hashes.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// xoshiro256++ seeded through splitmix64. Satisfies UniformRandomBitGenerator.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept {
        return std::numeric_limits<result_type>::max();
    }
    result_type operator()() noexcept;

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform integer in [0, bound), bound > 0, without modulo bias.
    std::uint64_t below(std::uint64_t bound) noexcept;
    /// Standard normal via the polar Box-Muller method; caches the spare draw.
    double normal() noexcept;
    void fill_normal(Eigen::Ref<Eigen::VectorXd> out, double scale) noexcept;

private:
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stream for (seed, run, agent, iteration), the oracle's keying discipline.
inline Xoshiro256 keyed_stream(std::uint64_t seed, std::uint64_t run, std::uint64_t agent,
                               std::uint64_t iteration) noexcept {
    return Xoshiro256(hash_key({seed, run, agent, iteration}));
}

}  // namespace gtdsgd
