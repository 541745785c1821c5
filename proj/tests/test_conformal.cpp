#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <slelab/conformal.hpp>
#include <slelab/loewner.hpp>
#include <slelab/stats.hpp>

#include <cmath>
#include <cstdio>
#include <map>

using namespace slelab;
using namespace slelab::conformal;

TEST_CASE("walk on spheres: half-plane Cauchy law and strip symmetry")
{
    // from i in H, the exit point has the standard Cauchy law; mass outside
    // [-1,1] is exactly 1/2
    ObstacleSet hp;
    hp.wall = WallKind::half_plane;
    auto hm = harmonic_measure(
        hp, {0.0, 1.0}, 100000, 7,
        [](size_t, cplx z) { return std::fabs(z.real()) > 1.0 ? size_t{1} : size_t{0}; }, 2);
    double se = std::sqrt(0.25 / 100000.0);
    CHECK(std::fabs(hm.mass[1] - 0.5) < 3.0 * se);

    // strip of height pi from the center line: top and bottom walls get 1/2
    ObstacleSet strip;
    strip.wall = WallKind::strip;
    auto hs = harmonic_measure(
        strip, {0.0, M_PI / 2.0}, 100000, 8,
        [](size_t, cplx z) { return z.imag() > M_PI / 2.0 ? size_t{1} : size_t{0}; }, 2);
    CHECK(std::fabs(hs.mass[1] - 0.5) < 3.0 * se);

    CHECK_THROWS_AS(harmonic_measure(hp, {0.0, -1.0}, 10, 1), std::invalid_argument);
}

TEST_CASE("disk arc harmonic measure is its normalized angle")
{
    ObstacleSet disk;
    disk.wall = WallKind::disk;
    const double theta = 1.1;
    auto hm = harmonic_measure(
        disk, {0.0, 0.0}, 100000, 9,
        [&](size_t, cplx z) {
            return std::arg(z) >= 0.0 && std::arg(z) < theta ? size_t{0} : size_t{1};
        },
        2);
    double target = theta / (2.0 * M_PI);
    double se = std::sqrt(target * (1.0 - target) / 100000.0);
    CHECK(std::fabs(hm.mass[0] - target) < 3.0 * se);
    CHECK(hm.mass[0] + hm.mass[1] == doctest::Approx(1.0));
}

TEST_CASE("escape probability agrees with harmonic measure on the same setup")
{
    // segment obstacle inside a disk wall; success = reach the wall; compare
    // against the harmonic-measure mass of the wall part
    ObstacleSet seg_only;
    seg_only.add_polyline({{-0.8, 0.0}, {0.8, 0.0}}, "seg");
    cplx start{0.0, 0.35};
    auto esc = escape_probability(seg_only, start, {{0.0, 0.0}, 2.0}, 60000, 11);
    ObstacleSet obs;
    obs.wall = WallKind::disk;
    obs.disk_radius = 2.0;
    obs.add_polyline({{-0.8, 0.0}, {0.8, 0.0}}, "seg");
    auto hm = harmonic_measure(obs, start, 60000, 12);
    // parts: 0 = segment, 1 = wall
    CHECK(esc.ci.lo - 0.01 < hm.mass[1]);
    CHECK(esc.ci.hi + 0.01 > hm.mass[1]);
    CHECK_THROWS_AS(escape_probability(seg_only, {0.0, 0.0}, {{0.0, 0.0}, 2.0}, 10, 1),
                    std::invalid_argument);
}

TEST_CASE("Beurling decay: escape past a segment scales like sqrt(delta)")
{
    std::vector<double> xs, ys;
    for (double delta : {1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256}) {
        ObstacleSet obs;
        obs.add_polyline({{0.0, 0.0}, {1.0, 0.0}}, "seg");
        auto esc = escape_probability(obs, {0.0, delta}, {{0.0, 0.0}, 1.0}, 200000, 13);
        xs.push_back(std::log(delta));
        ys.push_back(std::log(esc.p));
    }
    auto fit = stats::fit_line(xs, ys);
    CHECK(std::fabs(fit.slope - 0.5) < 0.05);
}

TEST_CASE("Whitney decomposition of the disk: invariants, growth, coverage")
{
    auto r = make_raster(-1.05, -1.05, 1.05, 1.05, 1024);
    for (int j = 0; j < r.ny; ++j)
        for (int i = 0; i < r.nx; ++i)
            if (std::abs(r.center(i, j)) >= 1.0) r.set_free(i, j, false);
    auto dec = whitney_decompose(r, 7);
    REQUIRE(dec.cells.size() > 100);

    // every cell: diam <= dist < 4 diam, against the raster distances
    auto dist = distance_transform(r);
    size_t violations = 0;
    for (const auto& c : dec.cells) {
        double dmin = 1e300;
        for (int j = c.j0; j < c.j0 + c.cells; ++j)
            for (int i = c.i0; i < c.i0 + c.cells; ++i)
                dmin = std::min(dmin,
                                static_cast<double>(dist[static_cast<size_t>(j) * r.nx + i]));
        dmin *= r.pixel;
        double diam = std::sqrt(2.0) * c.side;
        if (!(diam <= dmin * (1.0 + 1e-6) && dmin < 4.0 * diam)) ++violations;
    }
    CHECK(violations == 0);

    // cell count grows roughly geometrically with depth for a 1-d boundary;
    // skip the sparse transient levels near the root
    std::map<int, int> per_level;
    for (const auto& c : dec.cells) ++per_level[c.level];
    std::vector<int> levels;
    for (auto& [lvl, cnt] : per_level)
        if (cnt >= 100) levels.push_back(lvl);
    REQUIRE(levels.size() >= 4);
    double log_mean = 0.0;
    int total = 0;
    for (size_t i = 0; i + 1 < levels.size(); ++i) {
        double ratio = static_cast<double>(per_level[levels[i + 1]]) / per_level[levels[i]];
        CHECK(ratio > 1.5);
        CHECK(ratio < 2.6);
        log_mean += std::log(ratio);
        ++total;
    }
    log_mean = std::exp(log_mean / total);
    CHECK(log_mean > 1.8);
    CHECK(log_mean < 2.2);

    // coverage: free pixels far from the boundary lie in some cell
    std::vector<uint8_t> covered(static_cast<size_t>(r.nx) * r.ny, 0);
    for (const auto& c : dec.cells)
        for (int j = c.j0; j < c.j0 + c.cells; ++j)
            for (int i = c.i0; i < c.i0 + c.cells; ++i)
                covered[static_cast<size_t>(j) * r.nx + i] = 1;
    double threshold = 2.1 * std::pow(2.0, -7) / r.pixel; // 2^-max_level of the extent
    size_t missed = 0;
    for (int j = 0; j < r.ny; ++j)
        for (int i = 0; i < r.nx; ++i)
            if (r.is_free(i, j) && dist[static_cast<size_t>(j) * r.nx + i] > threshold &&
                !covered[static_cast<size_t>(j) * r.nx + i])
                ++missed;
    CHECK(missed == 0);
}

TEST_CASE("quasihyperbolic graph distance in the disk")
{
    auto r = make_raster(-1.05, -1.05, 1.05, 1.05, 1536);
    for (int j = 0; j < r.ny; ++j)
        for (int i = 0; i < r.nx; ++i)
            if (std::abs(r.center(i, j)) >= 1.0) r.set_free(i, j, false);
    auto dec = whitney_decompose(r, 9);

    int c0 = dec.find({0.0, 0.0});
    REQUIRE(c0 >= 0);
    // two points in the same cell are at distance <= 1
    const auto& q0 = dec.cells[static_cast<size_t>(c0)];
    cplx in_a{q0.cx - q0.side / 4.0, q0.cy - q0.side / 4.0};
    cplx in_b{q0.cx + q0.side / 4.0, q0.cy + q0.side / 4.0};
    CHECK(quasihyperbolic_distance(dec, in_a, in_b) <= 1.0);

    // hop distance to radius r comparable to log(1/(1-r)) with one constant
    std::vector<double> ratio;
    for (double rr : {0.5, 0.9, 0.99}) {
        double d = quasihyperbolic_distance(dec, {0.0, 0.0}, {rr, 0.0});
        ratio.push_back(d / std::log(1.0 / (1.0 - rr)));
    }
    double lo = *std::min_element(ratio.begin(), ratio.end());
    double hi = *std::max_element(ratio.begin(), ratio.end());
    CHECK(lo > 0.0);
    CHECK(hi / lo < 2.0);

    // the graph metric obeys the triangle inequality exactly
    cplx a{0.0, 0.0}, b{0.6, 0.0}, c{0.0, 0.55};
    double dab = quasihyperbolic_distance(dec, a, b);
    double dac = quasihyperbolic_distance(dec, a, c);
    double dbc = quasihyperbolic_distance(dec, b, c);
    CHECK(dab <= dac + dbc + 1e-12);
    CHECK(dac <= dab + dbc + 1e-12);
    CHECK(dbc <= dab + dac + 1e-12);

    CHECK_THROWS_AS(quasihyperbolic_distance(dec, {0.0, 0.0}, {5.0, 5.0}),
                    std::invalid_argument);
}

TEST_CASE("shadow sums on the disk: stabilization and the quadrature oracle")
{
    double sums[2] = {0, 0}, qhs[2] = {0, 0};
    int idx = 0;
    for (int n : {768, 1536}) {
        auto r = make_raster(-1.02, -1.02, 1.02, 1.02, n);
        for (int j = 0; j < r.ny; ++j)
            for (int i = 0; i < r.nx; ++i)
                if (std::abs(r.center(i, j)) >= 1.0) r.set_free(i, j, false);
        auto dec = whitney_decompose(r, idx == 0 ? 8 : 9);
        auto sh = js_shadow_sum(dec, r, {0.0, 0.0});
        sums[idx] = sh.sum_s2;
        qhs[idx] = sh.qh_integral;
        ++idx;
    }
    // refinement changes the shadow sum by little for a smooth boundary
    CHECK(std::fabs(sums[1] - sums[0]) / sums[0] < 0.10);

    // oracle: int_D log(1/(1-|w|)) dw = 2 pi int_0^1 r log(1/(1-r)) dr = 3pi/2
    double oracle = 2.0 * M_PI *
                    stats::integrate([](double rr) { return rr * std::log(1.0 / (1.0 - rr)); },
                                     0.0, 1.0 - 1e-9);
    CHECK(oracle == doctest::Approx(3.0 * M_PI / 2.0).epsilon(1e-5));
    CHECK(std::fabs(qhs[1] - oracle) / oracle < 0.15);
}

TEST_CASE("shadows are monotone along the geodesic tree")
{
    auto r = make_raster(-1.02, -1.02, 1.02, 1.02, 512);
    for (int j = 0; j < r.ny; ++j)
        for (int i = 0; i < r.nx; ++i)
            if (std::abs(r.center(i, j)) >= 1.0) r.set_free(i, j, false);
    auto dec = whitney_decompose(r, 7);
    auto sh = js_shadow_sum(dec, r, {0.0, 0.0});
    CHECK(sh.boundary_cells > 50);
    // the base cell's shadow spans the whole boundary and dominates all others
    double base_diam = dec.cells[sh.base_cell].shadow_diam;
    CHECK(base_diam > 1.5);
    for (const auto& c : dec.cells) CHECK(c.shadow_diam <= base_diam + 1e-12);
}

TEST_CASE("raster files round-trip")
{
    auto r = make_raster(0.0, 0.0, 1.0, 0.5, 64);
    rasterize_polyline(r, {{0.2, 0.1}, {0.8, 0.4}}, 1);
    write_pgm(r, "raster_test.pgm");
    auto p = read_pgm("raster_test.pgm", r.x0, r.y0, r.pixel);
    REQUIRE(p.nx == r.nx);
    REQUIRE(p.ny == r.ny);
    bool same = true;
    for (int j = 0; j < r.ny; ++j)
        for (int i = 0; i < r.nx; ++i) same = same && (p.is_free(i, j) == r.is_free(i, j));
    CHECK(same);
    std::remove("raster_test.pgm");

    write_raster_bits(r, "raster_test.bits");
    auto q = read_raster_bits("raster_test.bits");
    REQUIRE(q.nx == r.nx);
    CHECK(q.pixel == r.pixel);
    same = true;
    for (int j = 0; j < r.ny; ++j)
        for (int i = 0; i < r.nx; ++i) same = same && (q.is_free(i, j) == r.is_free(i, j));
    CHECK(same);
    std::remove("raster_test.bits");
}
