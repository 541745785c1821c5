#pragma once

// Liouville measure estimators over sampled fields: area and boundary
// measures by circle-average Riemann sums (critical gamma = 2 boundary
// variant included), the wedge moment-scaling experiment, and intensity
// profiles for circle-average embedded wedges.

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gff.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "stochastic.hpp"

namespace slelab::lqg {

using cplx = std::complex<double>;

struct Region {
    double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
};

struct MeasureEstimate {
    std::string region;
    double epsilon = 0.0;
    double gamma = 0.0;
    double value = 0.0;
    uint64_t replicate_count = 1;
    double stderr_ = 0.0;
    double clamped_fraction = 0.0; // critical boundary measure only
};

// ---------------------------------------------------------------------------
// area measure

// Riemann sum of eps^{gamma^2/2} e^{gamma h_eps(z)} over grid cells.  For
// strip/cylinder fields the circle average is computed per mode: coefficient
// frozen at the cell column, transverse oscillation damped by J0(k eps);
// the radial part is averaged over the circle's horizontal extent.
inline MeasureEstimate lqg_area(const gff::FieldRealization& f, const Region& reg,
                                double epsilon, double gamma, double offset = 0.0)
{
    if (epsilon <= 0.0) throw std::invalid_argument("lqg_area: epsilon > 0");
    if (gamma <= 0.0 || gamma > 2.0) throw std::invalid_argument("lqg_area: gamma in (0,2]");
    MeasureEstimate est;
    est.epsilon = epsilon;
    est.gamma = gamma;
    est.region = "area";
    const double pref = std::pow(epsilon, gamma * gamma / 2.0);

    if (f.domain == gff::Domain::rectangle) {
        if (reg.x0 < 0.0 || reg.x1 > f.lx || reg.y0 < 0.0 || reg.y1 > f.ly)
            throw std::invalid_argument("lqg_area: region outside grid");
        const double cell = epsilon / 2.0;
        auto nx = static_cast<size_t>(std::ceil((reg.x1 - reg.x0) / cell));
        auto ny = static_cast<size_t>(std::ceil((reg.y1 - reg.y0) / cell));
        double sum = 0.0;
        for (size_t j = 0; j < ny; ++j)
            for (size_t i = 0; i < nx; ++i) {
                cplx z{reg.x0 + (i + 0.5) * cell, reg.y0 + (j + 0.5) * cell};
                sum += cell * cell * pref *
                       std::exp(gamma * (f.circle_average(z, epsilon, 32) + offset));
            }
        est.value = sum;
        return est;
    }

    if (reg.x0 < f.grid.x_min || reg.x1 > f.grid.x_max || reg.y0 < 0.0 || reg.y1 > f.height)
        throw std::invalid_argument("lqg_area: region outside grid");
    const double dx = f.grid.dx;
    auto j_lo = static_cast<size_t>(std::max(0.0, (reg.x0 - f.grid.x_min) / dx));
    auto j_hi = static_cast<size_t>((reg.x1 - f.grid.x_min) / dx);
    const int n_rows = std::max(1, static_cast<int>((reg.y1 - reg.y0) / dx));
    const double dy = (reg.y1 - reg.y0) / n_rows;
    const bool strip = f.domain == gff::Domain::strip;
    const double mode_norm = strip ? 2.0 : std::sqrt(2.0);

    std::vector<double> j0tab(static_cast<size_t>(f.n_modes) + 1, 1.0);
    for (int k = 1; k <= f.n_modes; ++k)
        j0tab[static_cast<size_t>(k)] = gff::FieldRealization::bessel_j0(k * epsilon);
    std::vector<double> costab(static_cast<size_t>(f.n_modes) * n_rows),
        sintab(strip ? 0 : static_cast<size_t>(f.n_modes) * n_rows);
    for (int k = 1; k <= f.n_modes; ++k)
        for (int row = 0; row < n_rows; ++row) {
            double y = reg.y0 + (row + 0.5) * dy;
            costab[static_cast<size_t>(k - 1) * n_rows + row] = std::cos(k * y);
            if (!strip) sintab[static_cast<size_t>(k - 1) * n_rows + row] = std::sin(k * y);
        }

    double sum = 0.0;
    std::vector<double> damped(static_cast<size_t>(f.n_modes));
    std::vector<double> damped_s(strip ? 0 : static_cast<size_t>(f.n_modes));
    for (size_t j = j_lo; j <= j_hi; ++j) {
        double x = f.grid.x_at(j);
        double radavg = 0.0;
        for (int q = 0; q < 16; ++q)
            radavg += f.radial_at(x + epsilon * std::cos(M_PI * (q + 0.5) / 16.0));
        radavg /= 16.0;
        for (int k = 1; k <= f.n_modes; ++k) {
            if (strip) {
                damped[static_cast<size_t>(k - 1)] =
                    f.modes[static_cast<size_t>(k - 1)][j] * mode_norm * j0tab[static_cast<size_t>(k)];
            } else {
                damped[static_cast<size_t>(k - 1)] =
                    f.modes[static_cast<size_t>(2 * (k - 1))][j] * mode_norm * j0tab[static_cast<size_t>(k)];
                damped_s[static_cast<size_t>(k - 1)] =
                    f.modes[static_cast<size_t>(2 * (k - 1) + 1)][j] * mode_norm * j0tab[static_cast<size_t>(k)];
            }
        }
        for (int row = 0; row < n_rows; ++row) {
            double h = radavg + offset;
            for (int k = 0; k < f.n_modes; ++k) {
                h += damped[static_cast<size_t>(k)] * costab[static_cast<size_t>(k) * n_rows + row];
                if (!strip)
                    h += damped_s[static_cast<size_t>(k)] * sintab[static_cast<size_t>(k) * n_rows + row];
            }
            sum += dx * dy * pref * std::exp(gamma * h);
        }
    }
    est.value = sum;
    return est;
}

// ---------------------------------------------------------------------------
// boundary measure

// Subcritical: eps^{gamma^2/4} e^{(gamma/2) h_eps(x)} dx on the wall y = 0.
// Critical (gamma = 2): eps (-h_eps/2 + log(1/eps)) e^{h_eps} dx, negative
// local contributions clamped at zero and the clamped fraction reported.
inline MeasureEstimate lqg_boundary(const gff::FieldRealization& f, double x0, double x1,
                                    double epsilon, double gamma, bool critical = false,
                                    double offset = 0.0)
{
    if (critical && std::fabs(gamma - 2.0) > 1e-12)
        throw std::invalid_argument("lqg_boundary: critical variant requires gamma = 2");
    if (f.domain != gff::Domain::strip)
        throw std::invalid_argument("lqg_boundary: boundary measure lives on the strip wall");
    if (x0 < f.grid.x_min || x1 > f.grid.x_max)
        throw std::invalid_argument("lqg_boundary: interval outside grid");
    MeasureEstimate est;
    est.epsilon = epsilon;
    est.gamma = gamma;
    est.region = critical ? "boundary_critical" : "boundary";
    const double dx = f.grid.dx;
    // cells with center in [x0, x1): adjacent intervals add exactly
    auto j_lo = static_cast<size_t>(std::ceil((x0 - f.grid.x_min) / dx - 0.5));
    auto j_hi = static_cast<size_t>(std::ceil((x1 - f.grid.x_min) / dx - 0.5));
    double sum = 0.0;
    uint64_t clamped = 0, total = 0;
    const double L = std::log(1.0 / epsilon);
    for (size_t j = j_lo; j < j_hi; ++j) {
        double h = f.boundary_average(f.grid.x_at(j), epsilon) + offset;
        ++total;
        if (critical) {
            double w = epsilon * (-h / 2.0 + L) * std::exp(h);
            if (w < 0.0) { w = 0.0; ++clamped; }
            sum += dx * w;
        } else {
            sum += dx * std::pow(epsilon, gamma * gamma / 4.0) * std::exp(gamma / 2.0 * h);
        }
    }
    est.value = sum;
    est.clamped_fraction = total ? static_cast<double>(clamped) / static_cast<double>(total) : 0.0;
    return est;
}

// ---------------------------------------------------------------------------
// moment scaling for the weight-gamma^2/2 wedge

struct ScalingResult {
    std::vector<double> epsilons;
    std::vector<double> moments;     // E[mu(S_- + u_{alpha,eps})^p] estimates
    std::vector<double> moment_se;
    stats::LineFit fit;              // log moment vs log eps; slope -> alpha p gamma
    uint64_t rejected = 0;           // zero-mass replicates (p < 0 guard)
    double truncation_extent = 0.0;  // strip truncation used, in x units
};

namespace stream_id {
constexpr uint32_t wedge_radial = 60;
} // namespace stream_id

namespace detail {

// BES^3 from 0 with fine steps near the level band and coarse steps far
// above it; returns sampled (time, value) pairs
struct Bes3Path {
    std::vector<double> t, z;
    double interp(double s) const
    {
        auto it = std::lower_bound(t.begin(), t.end(), s);
        if (it == t.begin()) return z.front();
        if (it == t.end()) return z.back();
        auto i = static_cast<size_t>(it - t.begin());
        double f = (s - t[i - 1]) / (t[i] - t[i - 1]);
        return z[i - 1] * (1.0 - f) + z[i] * f;
    }
};

inline Bes3Path bes3_two_scale(double level, double band, double horizon, double dt_fine,
                               uint64_t seed, uint64_t replicate)
{
    rng::Stream rs{seed, stream_id::wedge_radial, replicate};
    Bes3Path p;
    p.t.push_back(0.0);
    p.z.push_back(0.0);
    double s = 0.0, z = 0.0;
    uint64_t k = 0;
    bool first = true;
    while (s < horizon) {
        double dt = dt_fine;
        if (z > level + band) {
            double slack = (z - level - band) / 5.0;
            dt = std::clamp(slack * slack, dt_fine, 2.0);
        }
        bool hit = false;
        if (first && z == 0.0) {
            auto g1 = rs.normal_pair(k, 0);
            auto g2 = rs.normal_pair(k, 1);
            ++k;
            z = std::sqrt(dt) * std::sqrt(g1.first * g1.first + g1.second * g1.second +
                                          g2.first * g2.first); // exact chi_3 marginal
            first = false;
        } else {
            z = stochastic::detail::bessel_step(z, 1.0, dt, rs.normal(k++), 0.0, hit);
        }
        s += dt;
        p.t.push_back(s);
        p.z.push_back(z);
    }
    return p;
}

} // namespace detail

inline ScalingResult moment_scaling(double gamma, double alpha, double p,
                                    std::vector<double> epsilons, uint64_t replicates,
                                    uint64_t seed, bool boundary = false, int workers = 1)
{
    const double p_max = boundary ? std::min(4.0 / (gamma * gamma), 3.0)
                                  : std::min(2.0 / (gamma * gamma), 1.5);
    if (p >= p_max) throw std::invalid_argument("moment_scaling: p out of range");
    if (alpha <= 0.0) throw std::invalid_argument("moment_scaling: alpha > 0");
    std::sort(epsilons.begin(), epsilons.end(), std::greater<>());
    const size_t ns = epsilons.size();
    const double L_max = alpha * std::log(1.0 / epsilons.back());
    const double band = 18.0 / gamma;
    const double horizon = 1600.0 * L_max * L_max + 400.0;
    const double dx = 0.02, dy = M_PI / 64.0;
    const int n_rows = 64, n_modes = 64;
    const double eps_avg = 2.0 * dx; // estimator's internal circle radius
    const double t_mass = 50.0 / (gamma * gamma) + 12.0;
    const double win_s = 2.0 * t_mass;           // window length on the Z clock
    const double ds = 2.0 * dx;                  // column spacing on the Z clock

    std::vector<std::vector<double>> masses(ns, std::vector<double>(replicates, 0.0));
    ScalingResult out;
    out.truncation_extent = t_mass;

    std::vector<double> j0tab(static_cast<size_t>(n_modes) + 1, 1.0);
    for (int k = 1; k <= n_modes; ++k)
        j0tab[static_cast<size_t>(k)] = gff::FieldRealization::bessel_j0(k * eps_avg);
    std::vector<double> costab(static_cast<size_t>(n_modes) * n_rows);
    for (int k = 1; k <= n_modes; ++k)
        for (int row = 0; row < n_rows; ++row)
            costab[static_cast<size_t>(k - 1) * n_rows + row] =
                std::cos(k * (row + 0.5) * dy);

    par::for_each_replicate(replicates, workers, [&](uint64_t rep) {
        auto path = detail::bes3_two_scale(L_max, band, horizon, 0.004, seed, rep);
        // last passage of each level; levels and last passages increase as
        // eps decreases (after the last visit to a high level the path stays
        // above every lower one)
        std::vector<double> s_star(ns, 0.0);
        for (size_t i = 0; i < ns; ++i) {
            double L = alpha * std::log(1.0 / epsilons[i]);
            double last = 0.0;
            for (size_t k = 1; k < path.z.size(); ++k)
                if ((path.z[k - 1] < L) != (path.z[k] < L)) {
                    double f = (L - path.z[k - 1]) / (path.z[k] - path.z[k - 1]);
                    last = path.t[k - 1] + f * (path.t[k] - path.t[k - 1]);
                }
            s_star[i] = last;
        }
        // cluster the mass windows [s*, s* + win_s]; across gaps wider than 8
        // the lateral correlation e^{-k gap} is negligible, so each cluster
        // gets an independently restarted stationary coefficient chain
        struct Cluster { double s0; size_t cols; };
        std::vector<Cluster> clusters;
        std::vector<size_t> cluster_of(ns, 0);
        std::vector<size_t> order(ns);
        for (size_t i = 0; i < ns; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](size_t a, size_t b) { return s_star[a] < s_star[b]; });
        for (size_t oi = 0; oi < ns; ++oi) {
            size_t i = order[oi];
            if (!clusters.empty()) {
                auto& cl = clusters.back();
                double cl_end = cl.s0 + static_cast<double>(cl.cols) * ds;
                if (s_star[i] < cl_end + 8.0) {
                    double need_end = s_star[i] + win_s + ds;
                    if (need_end > cl_end)
                        cl.cols = static_cast<size_t>((need_end - cl.s0) / ds) + 1;
                    cluster_of[i] = clusters.size() - 1;
                    continue;
                }
            }
            clusters.push_back({s_star[i], static_cast<size_t>(win_s / ds) + 2});
            cluster_of[i] = clusters.size() - 1;
        }
        // per cluster: lateral chain + column masses of exp(gamma h)
        const double pref = std::pow(eps_avg, gamma * gamma / 2.0);
        std::vector<std::vector<double>> colmass(clusters.size());
        std::vector<std::vector<double>> colmass_bdy(boundary ? clusters.size() : 0);
        rng::Stream ms{seed, stream_id::wedge_radial + 1, rep};
        uint64_t draw = 0;
        for (size_t ci = 0; ci < clusters.size(); ++ci) {
            const auto& cl = clusters[ci];
            colmass[ci].assign(cl.cols, 0.0);
            if (boundary) colmass_bdy[ci].assign(cl.cols, 0.0);
            std::vector<double> coeff(static_cast<size_t>(n_modes));
            std::vector<double> rho_k(static_cast<size_t>(n_modes)), inno_k(static_cast<size_t>(n_modes));
            for (int k = 1; k <= n_modes; ++k) {
                double sd = std::sqrt(1.0 / (2.0 * k));
                rho_k[static_cast<size_t>(k - 1)] = std::exp(-k * dx);
                inno_k[static_cast<size_t>(k - 1)] =
                    sd * std::sqrt(1.0 - rho_k[static_cast<size_t>(k - 1)] * rho_k[static_cast<size_t>(k - 1)]);
                coeff[static_cast<size_t>(k - 1)] = sd * ms.normal(draw++);
            }
            for (size_t jcol = 0; jcol < cl.cols; ++jcol) {
                double s_here = cl.s0 + ds * static_cast<double>(jcol);
                double radavg = 0.0;
                for (int q = 0; q < 8; ++q) {
                    double xoff = eps_avg * std::cos(M_PI * (q + 0.5) / 8.0);
                    radavg += -path.interp(s_here - 2.0 * xoff);
                }
                radavg /= 8.0;
                double row_sum = 0.0;
                for (int row = 0; row < n_rows; ++row) {
                    double h = radavg;
                    for (int k = 0; k < n_modes; ++k)
                        h += coeff[static_cast<size_t>(k)] * 2.0 * j0tab[static_cast<size_t>(k) + 1] *
                             costab[static_cast<size_t>(k) * n_rows + row];
                    row_sum += std::exp(gamma * h);
                }
                colmass[ci][jcol] = dx * dy * pref * row_sum;
                if (boundary) {
                    double hb = -path.interp(s_here);
                    for (int k = 0; k < n_modes; ++k)
                        hb += coeff[static_cast<size_t>(k)] * 2.0 * j0tab[static_cast<size_t>(k) + 1];
                    colmass_bdy[ci][jcol] =
                        dx * std::pow(eps_avg, gamma * gamma / 4.0) * std::exp(gamma / 2.0 * hb);
                }
                for (int k = 0; k < n_modes; ++k)
                    coeff[static_cast<size_t>(k)] = rho_k[static_cast<size_t>(k)] * coeff[static_cast<size_t>(k)] +
                                                    inno_k[static_cast<size_t>(k)] * ms.normal(draw++);
            }
        }
        for (size_t i = 0; i < ns; ++i) {
            const auto& cl = clusters[cluster_of[i]];
            auto j_from = static_cast<size_t>((s_star[i] - cl.s0) / ds);
            auto j_to = std::min(cl.cols, j_from + static_cast<size_t>(win_s / ds));
            double m = 0.0;
            const auto& cm = boundary ? colmass_bdy[cluster_of[i]] : colmass[cluster_of[i]];
            for (size_t jcol = j_from; jcol < j_to; ++jcol) m += cm[jcol];
            masses[i][rep] = m;
        }
    });

    std::vector<double> xs, ys, ws;
    out.epsilons = epsilons;
    for (size_t i = 0; i < ns; ++i) {
        stats::Moments acc;
        for (uint64_t rep = 0; rep < replicates; ++rep) {
            double m = masses[i][rep];
            if (m <= 0.0 && p < 0.0) { ++out.rejected; continue; }
            acc.add(std::pow(m, p));
        }
        out.moments.push_back(acc.mean);
        out.moment_se.push_back(acc.stderr_mean());
        xs.push_back(std::log(epsilons[i]));
        ys.push_back(std::log(acc.mean));
        double rel = acc.stderr_mean() / acc.mean;
        ws.push_back(1.0 / std::max(rel * rel, 1e-12));
    }
    out.fit = stats::fit_line(xs, ys, ws);
    return out;
}

// ---------------------------------------------------------------------------
// intensity profile for circle-average embedded wedges

struct IntensityPoint {
    cplx z;
    double estimate = 0.0;
    double stderr_ = 0.0;
};

struct IntensityResult {
    std::vector<IntensityPoint> points;
    // fit of log intensity + alpha gamma log|z| against log Im(z); the
    // target slope is -gamma^2/2.  (For the semicircle-average pinned field
    // the intensity is exactly const |z|^{-alpha gamma} Im^{-gamma^2/2} up to
    // O(eps); bounded normalization-dependent factors such as powers of
    // |z+i| do not appear in this pinning.)
    stats::LineFit im_fit;
};

// field value of the H-embedded wedge at z in H: strip value at log z minus
// Q log |z|
inline double wedge_value_halfplane(const gff::FieldRealization& f, cplx z)
{
    double Q = gff::q_of_gamma(f.gamma);
    return f.value(std::log(z)) - Q * std::log(std::abs(z));
}

inline double wedge_circle_average_halfplane(const gff::FieldRealization& f, cplx z, double r,
                                             int npts = 64)
{
    double s = 0.0;
    for (int j = 0; j < npts; ++j) {
        double th = 2.0 * M_PI * (j + 0.5) / npts;
        s += wedge_value_halfplane(f, z + std::polar(r, th));
    }
    return s / npts;
}

// E[mu(B(z,r))] / (pi r^2) by conditional Monte Carlo on a Riemann sum over
// the ball (internal averaging radius r/6 in half-plane units, realized in
// strip coordinates with per-mode J0 damping).  The radial process and the
// low lateral modes are exactly Gaussian with known per-cell mean and
// variance, so they are integrated out analytically; each replicate samples
// only the fine lateral modes, whose bounded log-variance is what makes the
// lognormal mean estimable at all.  Requires |z| + r < 1 so every cell sits
// on the unconditioned side of the radial process.
inline IntensityResult intensity_profile(double gamma, double alpha,
                                         const std::vector<cplx>& points, double r,
                                         uint64_t replicates, uint64_t seed, int workers = 1)
{
    for (cplx z : points) {
        if (z.imag() <= r)
            throw std::invalid_argument("intensity_profile: points must clear the boundary by r");
        if (std::abs(z) + r >= 1.0)
            throw std::invalid_argument("intensity_profile: points must lie inside the unit disk");
    }
    gff::StripGrid grid{-4.5, 0.5, 0.01};
    const double eps_c = r / 6.0; // internal averaging radius, H units
    const double Q = gff::q_of_gamma(gamma);
    const double drift = Q - alpha;
    const size_t np = points.size();

    struct Cell {
        double px, py, logw, eps_log, area;
        double mean;     // gamma-free mean of h at the cell
        double var_int;  // variance of the analytically integrated layers
    };
    std::vector<std::vector<Cell>> cells(np);
    double eps_log_min = 1.0;
    for (size_t i = 0; i < np; ++i) {
        const cplx z = points[i];
        const double cw = r / 5.0;
        for (int a = -5; a < 5; ++a)
            for (int b = -5; b < 5; ++b) {
                cplx w = z + cplx((a + 0.5) * cw, (b + 0.5) * cw);
                if (std::abs(w - z) > r) continue;
                cplx pc = std::log(w);
                Cell cl;
                cl.px = pc.real();
                cl.py = pc.imag();
                cl.logw = pc.real();
                cl.eps_log = eps_c / std::abs(w);
                cl.area = cw * cw;
                cells[i].push_back(cl);
                eps_log_min = std::min(eps_log_min, cl.eps_log);
            }
    }
    const int n_modes = std::min(512, static_cast<int>(std::ceil(4.5 / eps_log_min)));
    const int k_split = std::max(1, n_modes / 4); // modes <= k_split integrated out

    // per-cell analytic mean and integrated variance, plus fine-mode tables
    std::vector<std::vector<double>> ftab(np); // [cell][k - k_split - 1]
    const int n_fine = n_modes - k_split;
    for (size_t i = 0; i < np; ++i) {
        ftab[i].resize(cells[i].size() * static_cast<size_t>(n_fine));
        for (size_t c = 0; c < cells[i].size(); ++c) {
            Cell& cl = cells[i][c];
            // radial: unconditioned side, X(-s) = Bhat_{2s} - drift s, so the
            // circle average has mean drift*px and the pinned-BM covariance
            cl.mean = drift * cl.px - Q * cl.logw;
            double var_rad = 0.0;
            for (int a = 0; a < 8; ++a)
                for (int b = 0; b < 8; ++b) {
                    double xa = cl.px + cl.eps_log * std::cos(M_PI * (a + 0.5) / 8.0);
                    double xb = cl.px + cl.eps_log * std::cos(M_PI * (b + 0.5) / 8.0);
                    var_rad += (std::fabs(xa) + std::fabs(xb) - std::fabs(xa - xb)) / 64.0;
                }
            cl.var_int = var_rad;
            for (int k = 1; k <= k_split; ++k) {
                double t = 2.0 * gff::FieldRealization::bessel_j0(k * cl.eps_log) *
                           std::cos(k * cl.py);
                cl.var_int += t * t / (2.0 * k);
            }
            for (int k = k_split + 1; k <= n_modes; ++k)
                ftab[i][c * static_cast<size_t>(n_fine) + static_cast<size_t>(k - k_split - 1)] =
                    2.0 * gff::FieldRealization::bessel_j0(k * cl.eps_log) * std::cos(k * cl.py);
        }
    }

    std::vector<std::vector<double>> vals(np, std::vector<double>(replicates, 0.0));
    const double pref = std::pow(eps_c, gamma * gamma / 2.0);
    par::for_each_replicate(replicates, workers, [&](uint64_t rep) {
        // sample only the fine lateral modes
        std::vector<std::vector<double>> fine(static_cast<size_t>(n_fine));
        for (int k = k_split + 1; k <= n_modes; ++k)
            fine[static_cast<size_t>(k - k_split - 1)] = gff::detail::sample_mode(
                grid, k, seed, gff::stream_id::mode_base + 2 * static_cast<uint32_t>(k), rep);
        auto mode_at = [&](int idx, double x) {
            const auto& cv = fine[static_cast<size_t>(idx)];
            double u = (x - grid.x_min) / grid.dx;
            auto ii = static_cast<size_t>(std::max(0.0, u));
            if (ii + 1 >= cv.size()) return cv.back();
            double ffrac = u - static_cast<double>(ii);
            return cv[ii] * (1.0 - ffrac) + cv[ii + 1] * ffrac;
        };
        for (size_t i = 0; i < np; ++i) {
            double mass = 0.0, area = 0.0;
            for (size_t c = 0; c < cells[i].size(); ++c) {
                const Cell& cl = cells[i][c];
                double h = cl.mean;
                for (int k = 0; k < n_fine; ++k)
                    h += mode_at(k, cl.px) *
                         ftab[i][c * static_cast<size_t>(n_fine) + static_cast<size_t>(k)];
                mass += cl.area * pref *
                        std::exp(gamma * h + gamma * gamma / 2.0 * cl.var_int);
                area += cl.area;
            }
            vals[i][rep] = mass / area;
        }
    });
    IntensityResult out;
    std::vector<double> xs, ys, ws;
    for (size_t i = 0; i < np; ++i) {
        stats::Moments acc;
        for (uint64_t rep = 0; rep < replicates; ++rep) acc.add(vals[i][rep]);
        IntensityPoint pt{points[i], acc.mean, acc.stderr_mean()};
        out.points.push_back(pt);
        double comp = std::log(acc.mean) + alpha * gamma * std::log(std::abs(points[i]));
        xs.push_back(std::log(points[i].imag()));
        ys.push_back(comp);
        double rel = acc.stderr_mean() / acc.mean;
        ws.push_back(1.0 / std::max(rel * rel, 1e-12));
    }
    out.im_fit = stats::fit_line(xs, ys, ws);
    return out;
}

// harmonic part of a free-boundary GFF on the unit disk pinned at 0:
// h(re^{i t}) = sum_k sqrt(2/k) r^k (a_k cos kt + b_k sin kt); its variance
// is -2 log(1 - |z|^2)
inline double harmonic_disk_sample(cplx z, int n_modes, uint64_t seed, uint64_t replicate)
{
    rng::Stream rs{seed, stream_id::wedge_radial + 2, replicate};
    double r = std::abs(z), t = std::arg(z);
    double s = 0.0;
    for (int k = 1; k <= n_modes; ++k) {
        auto pr = rs.normal_pair(static_cast<uint64_t>(k));
        s += std::sqrt(2.0 / k) * std::pow(r, k) *
             (pr.first * std::cos(k * t) + pr.second * std::sin(k * t));
    }
    return s;
}

} // namespace slelab::lqg
