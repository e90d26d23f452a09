#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace msstab {

/// Philox-4x32-10 counter-based generator (Salmon et al., SC'11). Stateless:
/// the output is a pure function of (counter, key).
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter generate(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeylA;
                key[1] += kWeylB;
            }
            const std::uint64_t p0 = std::uint64_t{kMulA} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMulB} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
                   static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
                   static_cast<std::uint32_t>(p0)};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMulA = 0xD2511F53;
    static constexpr std::uint32_t kMulB = 0xCD9E8D57;
    static constexpr std::uint32_t kWeylA = 0x9E3779B9;
    static constexpr std::uint32_t kWeylB = 0xBB67AE85;
};

/// Uniform in the open interval (0, 1) from 64 random bits (52 used).
inline double open_unit_interval(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Box-Muller on one Philox block; returns the cosine branch.
inline double philox_normal(const Philox4x32::Counter& ctr, const Philox4x32::Key& key) noexcept {
    const auto out = Philox4x32::generate(ctr, key);
    const double u1 = open_unit_interval((std::uint64_t{out[0]} << 32) | out[1]);
    const double u2 = open_unit_interval((std::uint64_t{out[2]} << 32) | out[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace msstab
