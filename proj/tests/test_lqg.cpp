#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <slelab/gff.hpp>
#include <slelab/lqg.hpp>
#include <slelab/stats.hpp>

#include <cmath>
#include <vector>

using namespace slelab;
using namespace slelab::lqg;
using gff::Embedding;
using gff::StripGrid;
using gff::Surface;
using gff::WedgeSpec;

TEST_CASE("area estimates stabilize across the averaging radius")
{
    StripGrid g{-1.2, 1.2, 0.01};
    Region reg{-0.5, 0.5, 0.6, 2.4};
    const double gamma = 1.0;
    stats::Moments at_e, at_e2;
    for (uint64_t rep = 0; rep < 400; ++rep) {
        auto f = gff::sample_free_boundary_gff_strip(g, 192, 61, rep);
        at_e.add(lqg_area(f, reg, 0.12, gamma).value);
        at_e2.add(lqg_area(f, reg, 0.06, gamma).value);
    }
    double gap = std::fabs(at_e.mean - at_e2.mean);
    double combined = std::sqrt(at_e.stderr_mean() * at_e.stderr_mean() +
                                at_e2.stderr_mean() * at_e2.stderr_mean());
    CHECK(gap < 3.0 * combined + 0.02 * at_e.mean);
}

TEST_CASE("adding a constant scales area and boundary measures exactly")
{
    StripGrid g{-1.0, 1.0, 0.01};
    auto f = gff::sample_free_boundary_gff_strip(g, 64, 67, 0);
    Region reg{-0.4, 0.4, 0.5, 2.0};
    const double gamma = 1.3, c = 0.37;
    double base = lqg_area(f, reg, 0.05, gamma).value;
    double shifted = lqg_area(f, reg, 0.05, gamma, c).value;
    CHECK(shifted == doctest::Approx(std::exp(gamma * c) * base).epsilon(1e-12));

    double b0 = lqg_boundary(f, -0.4, 0.4, 0.05, gamma).value;
    double b1 = lqg_boundary(f, -0.4, 0.4, 0.05, gamma, false, c).value;
    CHECK(b1 == doctest::Approx(std::exp(gamma * c / 2.0) * b0).epsilon(1e-12));
}

TEST_CASE("coordinate change by psi(z) = 2z with the Q log|psi'| correction")
{
    // area of A under h(2.) + Q log 2 at radius eps equals area of 2A under
    // h at radius 2 eps, per realization, up to quadrature differences
    const double gamma = 1.2, Q = gff::q_of_gamma(gamma);
    const double eps = 0.05;
    for (uint64_t rep = 0; rep < 3; ++rep) {
        auto h = gff::sample_zero_boundary_gff(2.0, 2.0, 20, 71, rep);
        const double cell = 0.02;
        double lhs = 0.0, rhs = 0.0;
        for (int i = 0; i < 20; ++i)
            for (int j = 0; j < 20; ++j) {
                gff::cplx z{0.3 + (i + 0.5) * cell, 0.3 + (j + 0.5) * cell};
                double havg = h.circle_average(2.0 * z, 2.0 * eps, 32) + Q * std::log(2.0);
                lhs += cell * cell * std::pow(eps, gamma * gamma / 2.0) *
                       std::exp(gamma * havg);
                gff::cplx w = 2.0 * z;
                double havg2 = h.circle_average(w, 2.0 * eps, 32);
                rhs += 4.0 * cell * cell * std::pow(2.0 * eps, gamma * gamma / 2.0) *
                       std::exp(gamma * havg2);
            }
        CHECK(std::fabs(lhs - rhs) / rhs < 0.10);
    }
}

TEST_CASE("boundary measure: additivity, stabilization, critical clamp audit")
{
    StripGrid g{-1.0, 1.0, 0.0005};
    const double gamma = 1.5;
    auto f = gff::sample_free_boundary_gff_strip(g, 512, 73, 0);
    double ab = lqg_boundary(f, -0.6, 0.0, 0.01, gamma).value;
    double bc = lqg_boundary(f, 0.0, 0.6, 0.01, gamma).value;
    double ac = lqg_boundary(f, -0.6, 0.6, 0.01, gamma).value;
    CHECK(ab + bc == doctest::Approx(ac).epsilon(1e-12)); // exact on the discretization

    // subcritical stabilization across dyadic eps
    stats::Moments at_e, at_e2;
    for (uint64_t rep = 0; rep < 300; ++rep) {
        StripGrid gs{-0.8, 0.8, 0.002};
        auto fr = gff::sample_free_boundary_gff_strip(gs, 512, 79, rep);
        at_e.add(lqg_boundary(fr, -0.5, 0.5, 0.06, gamma).value);
        at_e2.add(lqg_boundary(fr, -0.5, 0.5, 0.03, gamma).value);
    }
    double gap = std::fabs(at_e.mean - at_e2.mean);
    double combined = std::sqrt(at_e.stderr_mean() * at_e.stderr_mean() +
                                at_e2.stderr_mean() * at_e2.stderr_mean());
    CHECK(gap < 3.0 * combined + 0.02 * at_e.mean);

    // critical variant: gamma must be 2; clamped fraction < 1% at eps = 1e-3
    CHECK_THROWS_AS(lqg_boundary(f, -0.5, 0.5, 0.01, 1.5, true), std::invalid_argument);
    double clamped_total = 0.0;
    uint64_t n_crit = 40;
    bool monotone = true;
    for (uint64_t rep = 0; rep < n_crit; ++rep) {
        StripGrid gc{-0.3, 0.3, 0.0005};
        auto fc = gff::sample_free_boundary_gff_strip(gc, 2048, 83, rep);
        auto est = lqg_boundary(fc, -0.25, 0.25, 1e-3, 2.0, true);
        clamped_total += est.clamped_fraction;
        // enhanced mass under a positive shift (well below the clamp region)
        auto up = lqg_boundary(fc, -0.25, 0.25, 1e-3, 2.0, true, 0.5);
        monotone = monotone && up.value >= est.value;
    }
    CHECK(clamped_total / static_cast<double>(n_crit) < 0.01);
    CHECK(monotone);
}

TEST_CASE("wedge moment scaling matches alpha p gamma")
{
    const double gamma = std::sqrt(2.0);
    std::vector<double> ladder = {1.0 / 4, 1.0 / 8, 1.0 / 16, 1.0 / 32};

    auto res = moment_scaling(gamma, 1.0, 0.5, ladder, 1500, 87);
    double target = 1.0 * 0.5 * gamma; // alpha p gamma = 0.7071
    CHECK(std::fabs(res.fit.slope - target) / target < 0.15);
    CHECK(res.rejected == 0);

    // negative moment: finite, stable, slope near -0.7071
    auto neg = moment_scaling(gamma, 1.0, -0.5, ladder, 1500, 89);
    for (double m : neg.moments) CHECK(std::isfinite(m));
    CHECK(std::fabs(neg.fit.slope + target) / target < 0.20);

    // doubling alpha doubles the slope within the joint confidence interval
    auto half = moment_scaling(gamma, 0.5, 0.5, ladder, 1500, 91);
    double ratio = res.fit.slope / half.fit.slope;
    CHECK(std::fabs(ratio - 2.0) < 0.3);

    // boundary variant scales with alpha p gamma / 2
    auto bdy = moment_scaling(gamma, 1.0, 1.0, ladder, 1200, 93, true);
    double bt = 1.0 * 1.0 * gamma / 2.0;
    CHECK(std::fabs(bdy.fit.slope - bt) / bt < 0.20);

    CHECK_THROWS_AS(moment_scaling(gamma, 1.0, 1.4, ladder, 10, 1), std::invalid_argument);
}

TEST_CASE("intensity profile: Im exponent and alpha dependence")
{
    const double gamma = std::sqrt(2.0);
    std::vector<lqg::cplx> pts = {{0.0, 0.4}, {0.0, 0.2}, {0.0, 0.1}};
    auto prof = intensity_profile(gamma, 0.0, pts, 0.02, 3000, 95);
    CHECK(std::fabs(prof.im_fit.slope - (-1.0)) < 0.25); // -gamma^2/2 = -1

    // alpha > 0 vs alpha = 0 along |z| at fixed height: compensated slopes
    // against log |z| differ by -alpha gamma
    const double alpha = 0.7, y0 = 0.25;
    std::vector<lqg::cplx> ring = {{0.25, y0}, {0.45, y0}, {0.72, y0}};
    auto run = [&](double a, uint64_t seed) {
        auto pr = intensity_profile(gamma, a, ring, 0.02, 3000, seed);
        std::vector<double> xs, ys;
        for (auto& pt : pr.points) {
            xs.push_back(std::log(std::abs(pt.z)));
            // compensate the Im factor only; the |z| factor is what we fit
            ys.push_back(std::log(pt.estimate) +
                         gamma * gamma / 2.0 * std::log(pt.z.imag()));
        }
        return stats::fit_line(xs, ys).slope;
    };
    double s_alpha = run(alpha, 97);
    double s_zero = run(0.0, 99);
    double diff = s_alpha - s_zero;
    double target = -alpha * gamma;
    CHECK(std::fabs(diff - target) / std::fabs(target) < 0.25);
}

TEST_CASE("harmonic part of the disk free-boundary field has variance -2log(1-|z|^2)")
{
    const lqg::cplx z{0.3, 0.4}; // |z| = 0.5
    stats::Moments m;
    for (uint64_t rep = 0; rep < 30000; ++rep) {
        double v = harmonic_disk_sample(z, 64, 101, rep);
        m.add(v * v);
    }
    double target = -2.0 * std::log(1.0 - 0.25);
    CHECK(std::fabs(m.mean - target) / target < 0.05);
}
