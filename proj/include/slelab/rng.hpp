#pragma once

// Counter-based random number generation (Philox-4x32-10).
//
// Every random quantity in the library is addressed by
// (seed, stream, replicate, step, slot).  Two draws with the same address
// are identical no matter how many workers are running or in which order
// replicates are processed, which is what makes reruns bit-reproducible.

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>

namespace slelab::rng {

namespace detail {

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo)
{
    uint64_t p = static_cast<uint64_t>(a) * b;
    hi = static_cast<uint32_t>(p >> 32);
    lo = static_cast<uint32_t>(p);
}

// One Philox round.  Multiplier/Weyl constants are the reference ones.
inline void philox_round(std::array<uint32_t, 4>& ctr, std::array<uint32_t, 2>& key)
{
    constexpr uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    uint32_t hi0, lo0, hi1, lo1;
    mulhilo(M0, ctr[0], hi0, lo0);
    mulhilo(M1, ctr[2], hi1, lo1);
    std::array<uint32_t, 4> out = {hi1 ^ ctr[1] ^ key[0], lo1,
                                   hi0 ^ ctr[3] ^ key[1], lo0};
    ctr = out;
    key[0] += 0x9E3779B9u;
    key[1] += 0xBB67AE85u;
}

} // namespace detail

inline std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr,
                                          std::array<uint32_t, 2> key)
{
    for (int r = 0; r < 10; ++r) detail::philox_round(ctr, key);
    return ctr;
}

// A logical stream of i.i.d. variates indexed by (step, slot).
struct Stream {
    uint64_t seed = 0;
    uint32_t stream = 0;   // substream id, e.g. one per process component
    uint64_t replicate = 0;

    std::array<uint32_t, 4> block(uint64_t step) const
    {
        std::array<uint32_t, 4> ctr = {
            static_cast<uint32_t>(step), static_cast<uint32_t>(step >> 32),
            static_cast<uint32_t>(replicate),
            stream ^ static_cast<uint32_t>(replicate >> 32)};
        std::array<uint32_t, 2> key = {static_cast<uint32_t>(seed),
                                       static_cast<uint32_t>(seed >> 32)};
        return philox4x32(ctr, key);
    }

    // uniform in (0,1); slot in 0..3
    double uniform(uint64_t step, int slot = 0) const
    {
        const auto b = block(step);
        return (static_cast<double>(b[slot & 3]) + 0.5) * 0x1p-32;
    }

    // Box-Muller pair; pair_index in {0,1} selects which half of the block.
    std::pair<double, double> normal_pair(uint64_t step, int pair_index = 0) const
    {
        const auto b = block(step);
        const int o = (pair_index & 1) * 2;
        double u1 = (static_cast<double>(b[o]) + 0.5) * 0x1p-32;
        double u2 = (static_cast<double>(b[o + 1]) + 0.5) * 0x1p-32;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        return {r * std::cos(a), r * std::sin(a)};
    }

    double normal(uint64_t step, int slot = 0) const
    {
        auto p = normal_pair(step, slot >> 1);
        return (slot & 1) ? p.second : p.first;
    }
};

} // namespace slelab::rng
