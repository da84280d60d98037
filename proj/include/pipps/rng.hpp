#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace pipps {

/// Which random quantity a draw feeds. Part of the counter so streams for
/// different purposes never collide.
enum class Stream : std::uint32_t {
    initial_state = 1,
    transition = 2,
    resample = 3,
    observation = 4,
    action = 5,
    misc = 6,
};

/// Counter-based generator (Philox4x32-10). Every draw is a pure function of
/// (seed, stream, a, b, c), so the value a particle sees does not depend on the
/// particle count, the draw order or how work is split between threads.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::array<std::uint32_t, 4> block(Stream s, std::uint32_t a, std::uint32_t b, std::uint32_t c) const {
        std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(s), a, b, c};
        std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

    /// Uniform on the open interval (0, 1).
    double uniform(Stream s, std::uint32_t a, std::uint32_t b, std::uint32_t c) const {
        const auto r = block(s, a, b, c);
        return to_unit(r[0], r[1]);
    }

    /// Standard normal via Box-Muller on one Philox block.
    double normal(Stream s, std::uint32_t a, std::uint32_t b, std::uint32_t c) const {
        const auto r = block(s, a, b, c);
        const double u1 = to_unit(r[0], r[1]);
        const double u2 = to_unit(r[2], r[3]);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Derive an independent seed, e.g. one per optimizer iteration.
    std::uint64_t derive(std::uint64_t tag) const {
        const auto r = block(Stream::misc, static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32), 0x5eedu);
        return (std::uint64_t{r[0]} << 32) | r[1];
    }

private:
    static double to_unit(std::uint32_t hi, std::uint32_t lo) {
        const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    std::uint64_t seed_;
};

}  // namespace pipps
