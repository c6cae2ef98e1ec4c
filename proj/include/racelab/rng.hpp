#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace racelab {

// Philox4x32-10 counter-based generator. Every draw is a pure function of
// (key, counter), so simulation streams can be addressed by coordinates
// instead of advanced sequentially, and replays are exact under any
// execution order.
namespace philox {

inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
        const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
        ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0],
               std::uint32_t(p1),
               std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1],
               std::uint32_t(p0)};
    }
    return ctr;
}

}  // namespace philox

// Addresses one substream draw. Coordinates identify (session, group, round,
// participant, draw purpose); the master seed keys the whole study.
struct SeedSpec {
    std::uint64_t master_seed = 0;
    std::uint32_t session = 0;
    std::uint32_t group = 0;
    std::uint32_t round = 0;

    SeedSpec with_session(std::uint32_t s) const {
        SeedSpec out = *this;
        out.session = s;
        return out;
    }
    SeedSpec with_round(std::uint32_t r) const {
        SeedSpec out = *this;
        out.round = r;
        return out;
    }
};

// Draw-purpose slots within one (participant, round) cell.
inline constexpr std::uint32_t kDrawLatency = 0;
inline constexpr std::uint32_t kDrawBump = 1;
inline constexpr std::uint32_t kDrawPolicy = 2;

// 64 uniform bits at the given coordinates.
inline std::uint64_t raw_bits(const SeedSpec& seed, std::uint32_t participant,
                              std::uint32_t draw_index) {
    const philox::Counter ctr = {draw_index, (seed.round << 16) | (participant & 0xFFFFu),
                                 seed.group, seed.session};
    const philox::Key key = {std::uint32_t(seed.master_seed),
                             std::uint32_t(seed.master_seed >> 32)};
    const philox::Counter out = philox::block(ctr, key);
    return (std::uint64_t(out[0]) << 32) | out[1];
}

// Uniform draw strictly inside (0, 1), 52-bit resolution.
inline double uniform_open(const SeedSpec& seed, std::uint32_t participant,
                           std::uint32_t draw_index) {
    const std::uint64_t bits = raw_bits(seed, participant, draw_index);
    return (double(bits >> 12) + 0.5) * 0x1.0p-52;
}

// Exponential draw by inverse CDF; the open-interval uniform keeps log finite
// and preserves the monotone coupling across rate changes.
inline double exponential(const SeedSpec& seed, std::uint32_t participant,
                          std::uint32_t draw_index, double rate) {
    if (!(rate > 0.0)) throw std::invalid_argument("exponential: rate must be positive");
    return -std::log(uniform_open(seed, participant, draw_index)) / rate;
}

// Uniform integer in [0, n).
inline std::uint32_t uniform_below(const SeedSpec& seed, std::uint32_t participant,
                                   std::uint32_t draw_index, std::uint32_t n) {
    if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
    // Multiplicative range reduction on the top 32 bits; bias is < 2^-32.
    const std::uint64_t bits = raw_bits(seed, participant, draw_index) >> 32;
    return std::uint32_t((bits * n) >> 32);
}

}  // namespace racelab
