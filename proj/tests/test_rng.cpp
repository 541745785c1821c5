#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <slelab/rng.hpp>
#include <slelab/stats.hpp>

#include <set>
#include <vector>

using namespace slelab;

TEST_CASE("philox reference vector")
{
    // Random123 known-answer test: counter and key all 0xffffffff
    auto out = rng::philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                               {0xffffffffu, 0xffffffffu});
    CHECK(out[0] == 0x408f276du);
    CHECK(out[1] == 0x41c83b0eu);
    CHECK(out[2] == 0xa20bc7c6u);
    CHECK(out[3] == 0x6d5451fdu);

    auto zero = rng::philox4x32({0u, 0u, 0u, 0u}, {0u, 0u});
    CHECK(zero[0] == 0x6627e8d5u);
    CHECK(zero[1] == 0xe169c58du);
    CHECK(zero[2] == 0xbc57ac4cu);
    CHECK(zero[3] == 0x9b00dbd8u);
}

TEST_CASE("streams are deterministic and decorrelated")
{
    rng::Stream a{42, 0, 7};
    rng::Stream b{42, 0, 7};
    for (uint64_t k = 0; k < 64; ++k) CHECK(a.uniform(k) == b.uniform(k));

    // distinct replicates / streams give distinct draws
    rng::Stream c{42, 0, 8};
    rng::Stream d{42, 1, 7};
    std::set<double> seen;
    for (uint64_t k = 0; k < 32; ++k) {
        seen.insert(a.uniform(k));
        seen.insert(c.uniform(k));
        seen.insert(d.uniform(k));
    }
    CHECK(seen.size() == 96);
}

TEST_CASE("normal pairs pass moment and normality checks")
{
    rng::Stream s{123, 0, 0};
    std::vector<double> xs;
    stats::Moments m;
    for (uint64_t k = 0; k < 200000; ++k) {
        auto p = s.normal_pair(k);
        xs.push_back(p.first);
        m.add(p.first);
        m.add(p.second);
    }
    CHECK(std::fabs(m.mean) < 4.0 * m.stderr_mean());
    CHECK(m.variance() == doctest::Approx(1.0).epsilon(0.02));
    CHECK(stats::jarque_bera(xs) > 0.001);
}
