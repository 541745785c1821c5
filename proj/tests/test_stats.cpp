#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <slelab/rng.hpp>
#include <slelab/stats.hpp>

#include <cmath>
#include <vector>

using namespace slelab;

TEST_CASE("moment accumulator merges independent of split point")
{
    rng::Stream s{1, 0, 0};
    std::vector<double> xs;
    for (uint64_t k = 0; k < 1000; ++k) xs.push_back(s.normal(k));

    stats::Moments whole;
    for (double x : xs) whole.add(x);

    for (size_t cut : {1u, 137u, 500u, 999u}) {
        stats::Moments a, b;
        for (size_t i = 0; i < cut; ++i) a.add(xs[i]);
        for (size_t i = cut; i < xs.size(); ++i) b.add(xs[i]);
        a.merge(b);
        CHECK(a.n == whole.n);
        CHECK(a.mean == doctest::Approx(whole.mean).epsilon(1e-12));
        CHECK(a.variance() == doctest::Approx(whole.variance()).epsilon(1e-10));
    }
}

TEST_CASE("wilson interval brackets the truth")
{
    auto iv = stats::wilson_interval(50, 100);
    CHECK(iv.contains(0.5));
    CHECK(iv.lo > 0.39);
    CHECK(iv.hi < 0.61);
    auto rare = stats::wilson_interval(0, 1000);
    CHECK(rare.lo == 0.0);
    CHECK(rare.hi < 0.01);
}

TEST_CASE("incomplete gamma and chi2 tail")
{
    // chi2 with 2 dof has sf exp(-x/2)
    CHECK(stats::chi2_sf(3.0, 2.0) == doctest::Approx(std::exp(-1.5)).epsilon(1e-8));
    CHECK(stats::gamma_p(1.0, 1.0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-10));
    CHECK(stats::gamma_p(5.5, 20.0) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("ks test accepts its own distribution and rejects a wrong one")
{
    rng::Stream s{7, 0, 0};
    std::vector<double> xs;
    for (uint64_t k = 0; k < 5000; ++k) xs.push_back(s.normal(k));
    CHECK(stats::ks_test(xs, [](double x) { return stats::normal_cdf(x); }) > 0.01);
    CHECK(stats::ks_test(xs, [](double x) { return stats::normal_cdf(x - 0.5); }) < 1e-6);

    std::vector<double> ys;
    rng::Stream s2{8, 0, 0};
    for (uint64_t k = 0; k < 5000; ++k) ys.push_back(s2.normal(k));
    CHECK(stats::ks_two_sample(xs, ys) > 0.01);
}

TEST_CASE("weighted line fit recovers a known slope")
{
    std::vector<double> x, y, w;
    for (int i = 0; i < 12; ++i) {
        x.push_back(0.3 * i);
        y.push_back(1.5 - 0.7 * 0.3 * i);
        w.push_back(1.0 + i % 3);
    }
    auto f = stats::fit_line(x, y, w);
    CHECK(f.slope == doctest::Approx(-0.7).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("quadrature")
{
    CHECK(stats::integrate([](double x) { return std::exp(-x * x / 2.0); }, -8.0, 8.0)
          == doctest::Approx(std::sqrt(2.0 * M_PI)).epsilon(1e-9));
    CHECK(stats::simpson([](double x) { return x * x; }, 0.0, 1.0, 100)
          == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}
