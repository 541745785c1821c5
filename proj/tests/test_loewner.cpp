#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <slelab/loewner.hpp>
#include <slelab/stats.hpp>

#include <cmath>
#include <complex>
#include <cstdio>
#include <unordered_set>
#include <vector>

using namespace slelab;
using namespace slelab::loewner;

namespace {

DrivingFunction zero_driving(double dt, double T)
{
    DrivingFunction d;
    d.scheme = Scheme::sle;
    d.kappa = 1.0;
    d.dt = dt;
    d.w.assign(static_cast<size_t>(std::llround(T / dt)) + 1, 0.0);
    return d;
}

// box-counting slope of log N(s) against log 1/s over dyadic box sizes;
// consecutive samples are joined as a polyline so fine boxes are not
// point-starved
double box_dimension(const std::vector<cplx>& pts, double s_lo, double s_hi)
{
    std::vector<double> xs, ys;
    for (double s = s_hi; s >= s_lo * 0.999; s /= 2.0) {
        std::unordered_set<long long> boxes;
        auto mark = [&](cplx p) {
            auto bx = static_cast<long long>(std::floor(p.real() / s));
            auto by = static_cast<long long>(std::floor(p.imag() / s));
            boxes.insert((bx << 26) ^ (by & ((1 << 26) - 1)));
        };
        for (size_t i = 0; i + 1 < pts.size(); ++i) {
            mark(pts[i]);
            double len = std::abs(pts[i + 1] - pts[i]);
            int sub = static_cast<int>(len / (s / 3.0));
            for (int j = 1; j <= sub; ++j)
                mark(pts[i] + (pts[i + 1] - pts[i]) * (static_cast<double>(j) / (sub + 1)));
        }
        mark(pts.back());
        xs.push_back(std::log(1.0 / s));
        ys.push_back(std::log(static_cast<double>(boxes.size())));
    }
    return stats::fit_line(xs, ys).slope;
}

} // namespace

TEST_CASE("sle driving has variance kappa t")
{
    stats::Moments var;
    for (uint64_t r = 0; r < 10000; ++r) {
        DrivingOptions o{4.0, 0.01, 1.0, 402, r};
        auto d = generate_driving(Scheme::sle, o);
        var.add(d.w.back() * d.w.back());
    }
    double se = 4.0 * std::sqrt(2.0 / 10000.0);
    CHECK(std::fabs(var.mean - 4.0) < 3.0 * se);
}

TEST_CASE("sle_rho force point stays ordered and obeys its ODE")
{
    DrivingOptions o{4.0, 1e-4, 0.5, 11, 0};
    o.force_points = {{0.0, 2.0, +1}};
    auto d = generate_driving(Scheme::sle_rho, o);
    REQUIRE(!d.truncated);
    bool ordered = true;
    for (size_t k = 0; k < d.w.size(); ++k) ordered = ordered && d.v[0][k] >= d.w[k] - 1e-12;
    CHECK(ordered);

    // fine-step oracle: integrate dV = 2/(V - W) dt along the recorded W path
    // with 10x finer RK2 steps, starting away from the t=0 singularity
    const size_t k0 = 200;
    double v = d.v[0][k0];
    const double h = d.dt / 10.0;
    for (size_t k = k0; k + 1 < d.w.size(); ++k) {
        for (int s = 0; s < 10; ++s) {
            double t = static_cast<double>(k) * d.dt + s * h;
            double w0 = d.w_at(t), w1 = d.w_at(t + h);
            double k1 = 2.0 / (v - w0);
            double k2 = 2.0 / (v + h * k1 - w1);
            v += 0.5 * h * (k1 + k2);
        }
    }
    CHECK(std::fabs(v - d.v[0].back()) < 2e-3 * std::max(1.0, std::fabs(v)));
}

TEST_CASE("continuation threshold is flagged, not fatal")
{
    DrivingOptions o{4.0, 1e-4, 2.0, 21, 0};
    o.force_points = {{0.05, -2.5, +1}}; // weight below -2: swallowing ends the chain
    auto d = generate_driving(Scheme::sle_rho, o);
    CHECK(d.truncated);
    CHECK(d.truncation_time > 0.0);
    CHECK(d.truncation_time < 2.0);

    DrivingOptions bad{4.0, 1e-4, 1.0, 21, 0};
    bad.force_points = {{0.0, -2.5, +1}};
    CHECK_THROWS_AS(generate_driving(Scheme::sle_rho, bad), std::invalid_argument);
}

TEST_CASE("whole-plane pair: angle gap law and stationarity")
{
    // kappa = 4, rho = 2: invariant density of theta is proportional to sin^2(y/2)
    DrivingOptions o{4.0, 2e-3, 2000.0, 31, 0};
    o.wp_rho = 2.0;
    auto d = generate_driving(Scheme::whole_plane_rho, o);
    std::vector<double> theta;
    for (size_t k = 0; k < d.w_arg.size(); ++k) {
        double th = d.w_arg[k] - d.o_arg[k];
        REQUIRE(th > 0.0);
        REQUIRE(th < 2.0 * M_PI);
        theta.push_back(th);
    }
    double l1 = stats::histogram_l1(theta, 0.0, 2.0 * M_PI, 40, [](double y) {
        double s = std::sin(y / 2.0);
        return s * s / M_PI; // int_0^{2pi} sin^2(y/2) dy = pi
    });
    CHECK(l1 < 0.05);

    // stationarity: the time-0 marginal across replicates matches the long-run law
    std::vector<double> init;
    for (uint64_t r = 0; r < 400; ++r) {
        DrivingOptions oi{4.0, 1e-3, 1e-3, 31, r};
        auto di = generate_driving(Scheme::whole_plane_rho, oi);
        init.push_back(di.w_arg[0] - di.o_arg[0]);
    }
    std::vector<double> burned;
    for (size_t k = 0; k < theta.size(); k += 2500) burned.push_back(theta[k]);
    CHECK(stats::ks_two_sample(init, burned) > 0.01);
}

TEST_CASE("forward flow against closed forms")
{
    auto d = zero_driving(1e-4, 1.0);
    auto r = evolve_point(d, {0.0, 3.0}, 1.0);
    CHECK(!r.swallowed);
    CHECK(std::abs(r.g - cplx(0.0, std::sqrt(5.0))) < 1e-6);

    auto s = evolve_point(d, {0.0, 1.0}, 1.0);
    CHECK(s.swallowed);
    CHECK(std::fabs(s.swallow_time - 0.25) < 1e-4);

    // W_t = t against a 10x-finer reference integrator
    DrivingFunction lin = zero_driving(1e-3, 1.0);
    for (size_t k = 0; k < lin.w.size(); ++k) lin.w[k] = static_cast<double>(k) * lin.dt;
    DrivingFunction lin_fine = zero_driving(1e-4, 1.0);
    for (size_t k = 0; k < lin_fine.w.size(); ++k)
        lin_fine.w[k] = static_cast<double>(k) * lin_fine.dt;
    auto a = evolve_point(lin, {0.4, 1.3}, 1.0);
    auto b = evolve_point(lin_fine, {0.4, 1.3}, 1.0);
    CHECK(std::abs(a.g - b.g) < 1e-6);

    CHECK_THROWS_AS(evolve_point(d, {0.0, -1.0}, 1.0), std::invalid_argument);
}

TEST_CASE("trace of the zero driving is the growing vertical slit")
{
    auto d = zero_driving(1e-3, 0.5);
    auto tr = extract_trace(d);
    for (size_t i = 0; i < tr.points.size(); ++i) {
        CHECK(std::fabs(tr.points[i].real()) < 1e-9);
        CHECK(std::fabs(tr.points[i].imag() - 2.0 * std::sqrt(tr.times[i])) < 1e-3);
    }
}

TEST_CASE("kappa=2 trace is simple at resolution; dimensions match min(2,1+kappa/8)")
{
    DrivingOptions o2{2.0, 2.5e-5, 1.0, 77, 0};
    auto tr2 = extract_trace(generate_driving(Scheme::sle, o2));
    double min_gap = 1e300;
    for (size_t i = 0; i + 4 < tr2.points.size(); i += 3)
        for (size_t j = i + 4; j < tr2.points.size(); j += 3)
            min_gap = std::min(min_gap, std::abs(tr2.points[i] - tr2.points[j]));
    CHECK(min_gap > 1e-9);

    // dimension targets min(2, 1 + kappa/8): 1.25 and 1.75.  The kappa=2
    // estimate converges quickly.  For kappa=6 the capacity parameterization
    // resolves the trace very unevenly (steps near swallowing sweep large
    // arcs), and at feasible sizes the box count reads 0.1-0.2 below the
    // asymptotic 1.75, drifting upward with resolution; we check the bracket
    // and the separation from the simple phase instead of the sharp value.
    DrivingOptions a{2.0, 5e-5, 1.0, 78, 0};
    DrivingOptions b{6.0, 5e-5, 1.0, 79, 0};
    double dim2 = box_dimension(
        extract_trace_refined(generate_driving(Scheme::sle, a), 1.2e-3).points,
        1.0 / 128, 1.0 / 8);
    double dim6 = box_dimension(
        extract_trace_refined(generate_driving(Scheme::sle, b), 1.2e-3).points,
        1.0 / 128, 1.0 / 8);
    CHECK(std::fabs(dim2 - 1.25) < 0.1);
    CHECK(dim6 > 1.45);
    CHECK(dim6 < 1.9);
    CHECK(dim6 - dim2 > 0.2);
}

TEST_CASE("tilted and vertical slit schemes agree where both resolve")
{
    // zero driving: the tilted map must reduce to the vertical closed form
    DrivingFunction z0;
    z0.scheme = Scheme::sle;
    z0.kappa = 1.0;
    z0.dt = 1e-3;
    z0.w.assign(501, 0.0);
    cplx tip = trace_tip_at(z0, 0.5, SlitKind::tilted);
    CHECK(std::abs(tip - cplx(0.0, 2.0 * std::sqrt(0.5))) < 1e-12);

    // a rough driving: the two discretizations approximate the same curve,
    // so coarse tilted tips match fine vertical tips to O(step size)
    DrivingOptions o{3.0, 1e-4, 0.25, 93, 0};
    auto d = generate_driving(Scheme::sle, o);
    for (double t : {0.1, 0.2, 0.25}) {
        cplx zt = trace_tip_at(d, t, SlitKind::tilted);
        cplx zv = trace_tip_at(d, t, SlitKind::vertical);
        CHECK(std::abs(zt - zv) < 0.05);
    }
}

TEST_CASE("hull capacity: slit, trace, and the sup-Im lower bound")
{
    // vertical slit of height y has hcap y^2/2
    for (double y : {0.5, 1.0, 2.0}) {
        std::vector<cplx> slit;
        for (int i = 1; i <= 400; ++i) slit.push_back({0.0, y * i / 400.0});
        CHECK(std::fabs(hull_capacity(slit) - y * y / 2.0) < 0.01 * (y * y / 2.0));
    }
    CHECK(hull_capacity(std::vector<cplx>{}) == 0.0);

    for (double kappa : {2.0, 4.0, 6.0}) {
        DrivingOptions o{kappa, 5e-5, 0.5, 91, 0};
        auto tr = extract_trace(generate_driving(Scheme::sle, o));
        double hcap = hull_capacity(tr);
        CHECK(std::fabs(hcap - 1.0) < 0.02); // 2t with t = 0.5
        double sup_im = 0.0;
        for (cplx p : tr.points) sup_im = std::max(sup_im, p.imag());
        CHECK(hcap >= sup_im * sup_im / 2.0);
    }
}

TEST_CASE("whole-plane evolution: modulus behavior and radial normalization")
{
    DrivingOptions o{4.0, 1e-3, 1.5, 55, 0};
    auto d = generate_driving(Scheme::whole_plane_rho, o);

    // exterior points stay outside the unit disk
    cplx z{2.3, 1.1};
    bool outside = true;
    for (double t = 0.15; t <= 1.5; t += 0.15) {
        auto r = evolve_whole_plane(d, z, 0.0, 0.0, t);
        if (r.swallowed) break;
        outside = outside && std::abs(r.g) > 1.0;
    }
    CHECK(outside);

    // disk chain: un-swallowed interior points drift monotonically outward
    cplx zi{0.3, 0.2};
    double prev = std::abs(zi);
    bool inward_monotone = true;
    for (double t = 0.1; t <= 1.0; t += 0.1) {
        auto r = evolve_radial(d, zi, 0.0, t);
        if (r.swallowed) break;
        inward_monotone = inward_monotone && std::abs(r.g) >= prev - 1e-9;
        prev = std::abs(r.g);
    }
    CHECK(inward_monotone);

    // log g_t'(0) = t for the disk chain, via centered finite differences
    const double h = 1e-5, t_end = 1.0;
    auto gp = evolve_radial(d, {h, 0.0}, 0.0, t_end);
    auto gm = evolve_radial(d, {-h, 0.0}, 0.0, t_end);
    cplx deriv = (gp.g - gm.g) / (2.0 * h);
    CHECK(std::fabs(std::log(std::abs(deriv)) - t_end) < 1e-3);

    // frozen driving reduces to a deterministic ODE checked by quadrature;
    // z = 2 lies on the growing slit ray and is swallowed at t = log(9/8),
    // so evolve only to t = 0.1
    DrivingFunction frozen;
    frozen.scheme = Scheme::whole_plane_rho;
    frozen.kappa = 4.0;
    frozen.dt = 1e-4;
    frozen.w_arg.assign(5001, 0.0);
    frozen.o_arg.assign(5001, 0.0);
    auto fr = evolve_whole_plane(frozen, {2.0, 0.0}, 0.0, 0.0, 0.1);
    REQUIRE(!fr.swallowed);
    double g_end = fr.g.real();
    double t_oracle =
        stats::integrate([](double u) { return (1.0 - u) / (u * (1.0 + u)); }, 2.0, g_end);
    CHECK(std::fabs(t_oracle - 0.1) < 1e-5);
    auto swallowed = evolve_whole_plane(frozen, {2.0, 0.0}, 0.0, 0.0, 0.3);
    CHECK(swallowed.swallowed);
    CHECK(std::fabs(swallowed.swallow_time - std::log(9.0 / 8.0)) < 1e-3);
}

TEST_CASE("whole-plane trace starts near the seed circle and grows outward")
{
    DrivingOptions o{4.0, 5e-4, 3.0, 56, 0};
    auto d = generate_driving(Scheme::whole_plane_rho, o);
    const double r0 = 1e-2;
    auto tr = extract_trace_whole_plane(d, r0, 4);
    REQUIRE(tr.points.size() > 100);
    CHECK(std::abs(tr.points.front()) < 4.0 * r0);
    CHECK(std::abs(tr.points.front()) > r0 / 4.0);
    // the hull has conformal radius e^{t0+T}; Koebe pins the tip within 4x of it
    double cr_end = r0 * std::exp(3.0);
    CHECK(std::abs(tr.points.back()) < 4.0 * cr_end);
    CHECK(std::abs(tr.points.back()) > cr_end / 4.0);
}

TEST_CASE("reverse flow: closed form, normalization, inversion")
{
    auto d0 = zero_driving(1e-4, 1.0);
    cplx z{1.0, 0.5};
    cplx ghat = evolve_reverse(d0, z, 1.0);
    CHECK(std::abs(ghat - sqrt_plus(z * z - 4.0)) < 1e-6);

    DrivingOptions o{4.0, 1e-4, 1.0, 61, 0};
    auto rev = generate_driving(Scheme::reverse_sle_kappa, o);
    double prev_err = 1e300;
    for (double R : {10.0, 100.0, 1000.0}) {
        double err = std::abs(evolve_reverse(rev, {0.0, R}, 1.0) - cplx(0.0, R));
        CHECK(err < prev_err);
        prev_err = err;
    }
    // the force-point flow starts at the seed and lifts into H
    CHECK(rev.v_im.back() > 0.0);

    // reverse with driving s -> W_{T-s} - W_T undoes the forward flow
    DrivingOptions fo{2.0, 1e-5, 0.2, 62, 0};
    auto fwd = generate_driving(Scheme::sle, fo);
    const double T = 0.2;
    cplx z0{0.7, 0.9};
    auto gz = evolve_point(fwd, z0, T);
    REQUIRE(!gz.swallowed);
    std::vector<double> wrev(fwd.w.size());
    for (size_t j = 0; j < wrev.size(); ++j)
        wrev[j] = fwd.w[fwd.w.size() - 1 - j] - fwd.w.back();
    cplx back = evolve_reverse(wrev, fwd.dt, gz.g - fwd.w.back(), T);
    CHECK(std::abs(back + fwd.w.back() - z0) < 1e-4);
}

TEST_CASE("reverse theta SDE has the sin^{8/kappa - 2} invariant density")
{
    const double kappa = 3.0, dt = 2e-4;
    rng::Stream rs{71, 0, 0};
    double theta = M_PI / 2.0;
    std::vector<double> samples;
    for (uint64_t k = 0; k < 3000000; ++k) {
        theta = reverse_theta_step(theta, kappa, dt, rs.normal(k));
        if (k > 200000) samples.push_back(theta);
    }
    const double expo = 8.0 / kappa - 2.0;
    double norm = stats::integrate(
        [&](double u) { return std::pow(std::sin(u), expo); }, 1e-9, M_PI - 1e-9);
    double l1 = stats::histogram_l1(samples, 0.0, M_PI, 40, [&](double y) {
        return std::pow(std::sin(y), expo) / norm;
    });
    CHECK(l1 < 0.08);
}

TEST_CASE("driving cache round-trips through the binary format")
{
    DrivingOptions o{4.0, 1e-3, 0.3, 81, 0};
    o.force_points = {{0.2, 1.0, +1}};
    auto d = generate_driving(Scheme::sle_rho, o);
    save_driving(d, "driving_cache_test.bin");
    auto e = load_driving("driving_cache_test.bin", 1);
    CHECK(e.kappa == d.kappa);
    CHECK(e.dt == d.dt);
    REQUIRE(e.w.size() == d.w.size());
    for (size_t k = 0; k < d.w.size(); ++k) {
        CHECK(e.w[k] == d.w[k]);
        CHECK(e.v[0][k] == d.v[0][k]);
    }
    std::remove("driving_cache_test.bin");

    DrivingOptions wo{4.0, 1e-3, 0.3, 82, 0};
    auto wd = generate_driving(Scheme::whole_plane_rho, wo);
    save_driving(wd, "driving_cache_wp.bin");
    auto we = load_driving("driving_cache_wp.bin");
    REQUIRE(we.w_arg.size() == wd.w_arg.size());
    CHECK(we.w_arg.back() == wd.w_arg.back());
    CHECK(we.o_arg.back() == wd.o_arg.back());
    std::remove("driving_cache_wp.bin");
}
