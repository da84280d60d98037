#include "pipps/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace pipps;

// Random123 known-answer vectors for philox4x32-10.
TEST_CASE("philox known answers") {
    using A = std::array<std::uint32_t, 4>;
    CHECK(CounterRng(0).block(static_cast<Stream>(0), 0, 0, 0) == A{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(CounterRng(0xffffffffffffffffull).block(static_cast<Stream>(0xffffffffu), 0xffffffffu, 0xffffffffu,
                                                  0xffffffffu) == A{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    const std::uint64_t key = (std::uint64_t{0x299f31d0} << 32) | 0xa4093822u;
    CHECK(CounterRng(key).block(static_cast<Stream>(0x243f6a88u), 0x85a308d3u, 0x13198a2eu, 0x03707344u) ==
          A{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("draws are pure functions of their counter") {
    const CounterRng a(42);
    const CounterRng b(42);
    CHECK(a.normal(Stream::transition, 3, 7, 1) == b.normal(Stream::transition, 3, 7, 1));
    CHECK(a.normal(Stream::transition, 3, 7, 1) != a.normal(Stream::transition, 3, 7, 2));
    CHECK(a.normal(Stream::transition, 3, 7, 1) != a.normal(Stream::resample, 3, 7, 1));
    CHECK(a.derive(1) != a.derive(2));
    CHECK(a.derive(1) == b.derive(1));
}

TEST_CASE("uniform and normal moments") {
    const CounterRng rng(7);
    const int n = 200000;
    double su = 0.0, sn = 0.0, sn2 = 0.0;
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform(Stream::misc, static_cast<std::uint32_t>(i), 0, 0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        su += u;
        const double z = rng.normal(Stream::misc, static_cast<std::uint32_t>(i), 1, 0);
        sn += z;
        sn2 += z * z;
    }
    CHECK(lo > 0.0);
    CHECK(hi < 1.0);
    CHECK(std::abs(su / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
    CHECK(std::abs(sn / n) < 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(sn2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}
