#pragma once

// Gaussian free field samplers.
//
// Zero-boundary fields on a rectangle use the Dirichlet sine eigenbasis with
// i.i.d. N(0,1) coefficients scaled by sqrt(2 pi / lambda), matching the
// Green's function normalization G(z,w) ~ -log|z-w|.
//
// Free-boundary fields on the strip {0 < Im < pi} (and cylinder, height 2 pi)
// are stored as radial part + lateral modes: the radial part is a two-sided
// Brownian motion B_{2t} (speed 1 on the cylinder) pinned at the zero line,
// and the lateral part is sum_k c_k(x) * 2 cos(k y) with independent
// stationary coefficient processes of covariance e^{-k|s-t|} / (2k), which
// reproduces the Neumann Green's function -log|e^z - e^w| - log|e^z - e^wbar|
// mode by mode.  Quantum wedges and cones replace the radial part by the
// drifted / conditioned processes of their embedding.

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"
#include "stats.hpp"
#include "stochastic.hpp"

namespace slelab::gff {

using cplx = std::complex<double>;

enum class Domain { rectangle, strip, cylinder, half_plane_annulus };
enum class Embedding { none, circle_average, first_exit };
enum class Surface { wedge, cone };

inline double q_of_gamma(double gamma)
{
    if (gamma <= 0.0 || gamma > 2.0) throw std::invalid_argument("gamma in (0,2] required");
    return 2.0 / gamma + gamma / 2.0;
}

// weight parameterizations of quantum surfaces
inline double wedge_weight(double gamma, double alpha)
{
    return gamma * (q_of_gamma(gamma) + gamma / 2.0 - alpha);
}
inline double wedge_alpha(double gamma, double weight)
{
    return q_of_gamma(gamma) + gamma / 2.0 - weight / gamma;
}
inline double cone_weight(double gamma, double alpha)
{
    return 2.0 * gamma * (q_of_gamma(gamma) - alpha);
}
inline double cone_alpha(double gamma, double weight)
{
    return q_of_gamma(gamma) - weight / (2.0 * gamma);
}

// alpha_or_weight is tagged; the stored value is authoritative so the
// conversion pair round-trips exactly
struct WedgeSpec {
    double gamma = std::sqrt(2.0);
    Surface surface = Surface::wedge;
    Embedding embedding = Embedding::first_exit;
    bool tagged_alpha = true;
    double value = 0.0; // alpha if tagged_alpha, else weight

    double alpha() const
    {
        if (tagged_alpha) return value;
        return surface == Surface::wedge ? wedge_alpha(gamma, value) : cone_alpha(gamma, value);
    }
    double weight() const
    {
        if (!tagged_alpha) return value;
        return surface == Surface::wedge ? wedge_weight(gamma, value) : cone_weight(gamma, value);
    }
    static WedgeSpec from_alpha(double gamma, Surface s, Embedding e, double a)
    {
        return {gamma, s, e, true, a};
    }
    static WedgeSpec from_weight(double gamma, Surface s, Embedding e, double w)
    {
        return {gamma, s, e, false, w};
    }
};

struct StripGrid {
    double x_min = -10.0;
    double x_max = 2.0;
    double dx = 0.02;
    size_t nx() const { return static_cast<size_t>(std::llround((x_max - x_min) / dx)) + 1; }
    double x_at(size_t j) const { return x_min + static_cast<double>(j) * dx; }
    size_t index_of_zero() const { return static_cast<size_t>(std::llround(-x_min / dx)); }
};

namespace stream_id {
constexpr uint32_t radial_right = 30;
constexpr uint32_t radial_left = 31;
constexpr uint32_t mode_base = 1000; // + 2k for cos, + 2k+1 for sin
constexpr uint32_t rect_coef = 40;
} // namespace stream_id

struct FieldRealization {
    Domain domain = Domain::strip;
    Embedding embedding = Embedding::none;
    double gamma = 0.0; // 0 for plain GFF samples
    uint64_t seed = 0;
    double alpha = 0.0; // resolved surface parameter, when applicable

    // strip / cylinder representation
    StripGrid grid;
    double height = M_PI;
    std::vector<double> radial;              // X at grid points
    std::vector<std::vector<double>> modes;  // [mode][grid]; cylinder: cos/sin interleaved
    int n_modes = 0;
    bool horizon_warning = false;

    // rectangle representation
    double lx = 0.0, ly = 0.0;
    int m_modes = 0;
    std::vector<double> coef; // m*m entries alpha_{mn} sqrt(2 pi / lambda_{mn})

    double radial_at(double x) const
    {
        if (radial.empty()) return 0.0;
        double u = (x - grid.x_min) / grid.dx;
        if (u <= 0.0) return radial.front();
        auto i = static_cast<size_t>(u);
        if (i + 1 >= radial.size()) return radial.back();
        double f = u - static_cast<double>(i);
        return radial[i] * (1.0 - f) + radial[i + 1] * f;
    }

    double mode_at(size_t m, double x) const
    {
        const auto& c = modes[m];
        double u = (x - grid.x_min) / grid.dx;
        if (u <= 0.0) return c.front();
        auto i = static_cast<size_t>(u);
        if (i + 1 >= c.size()) return c.back();
        double f = u - static_cast<double>(i);
        return c[i] * (1.0 - f) + c[i + 1] * f;
    }

    // pointwise value; strip folds y by Neumann reflection, cylinder wraps
    double value(cplx w) const
    {
        double x = w.real(), y = w.imag();
        if (domain == Domain::rectangle) {
            double s = 0.0;
            for (int m = 1; m <= m_modes; ++m)
                for (int n = 1; n <= m_modes; ++n)
                    s += coef[static_cast<size_t>(m - 1) * m_modes + (n - 1)] *
                         rect_eigen(m, n, x, y);
            return s;
        }
        if (domain == Domain::cylinder) {
            y = std::fmod(y, 2.0 * M_PI);
            if (y < 0.0) y += 2.0 * M_PI;
            double s = radial_at(x);
            for (int k = 1; k <= n_modes; ++k) {
                s += mode_at(static_cast<size_t>(2 * (k - 1)), x) * std::sqrt(2.0) *
                     std::cos(k * y);
                s += mode_at(static_cast<size_t>(2 * (k - 1) + 1), x) * std::sqrt(2.0) *
                     std::sin(k * y);
            }
            return s;
        }
        // strip: reflect into [0, pi]
        y = std::fabs(std::fmod(y, 2.0 * M_PI));
        if (y > M_PI) y = 2.0 * M_PI - y;
        double s = radial_at(x);
        for (int k = 1; k <= n_modes; ++k)
            s += mode_at(static_cast<size_t>(k - 1), x) * 2.0 * std::cos(k * y);
        return s;
    }

    double rect_eigen(int m, int n, double x, double y) const
    {
        return 2.0 / std::sqrt(lx * ly) * std::sin(m * M_PI * x / lx) *
               std::sin(n * M_PI * y / ly);
    }

    // average over M points of the circle (trapezoid on the full circle)
    double circle_average(cplx z, double rho, int npts = 64) const
    {
        double s = 0.0;
        for (int j = 0; j < npts; ++j) {
            double th = 2.0 * M_PI * (j + 0.5) / npts;
            s += value(z + std::polar(rho, th));
        }
        return s / npts;
    }

    // average over the vertical line: the lateral modes integrate to zero
    // exactly, so this is the radial part
    double vertical_average(double x) const { return radial_at(x); }

    // semicircle average at a boundary point x (wall y = 0): each lateral
    // mode damps by J0(k rho) with its coefficient frozen at x; the radial
    // part is averaged over the semicircle's horizontal extent
    double boundary_average(double x, double rho, int npts = 32) const
    {
        double s = 0.0;
        for (int j = 0; j < npts; ++j) {
            double th = M_PI * (j + 0.5) / npts;
            s += radial_at(x + rho * std::cos(th));
        }
        s /= npts;
        for (int k = 1; k <= n_modes; ++k)
            s += mode_at(static_cast<size_t>(k - 1), x) * 2.0 * bessel_j0(k * rho);
        return s;
    }

    static double bessel_j0(double x)
    {
        // rational fit for small x, Hankel asymptotics otherwise
        double ax = std::fabs(x);
        if (ax < 8.0) {
            double y = x * x;
            double p1 = 57568490574.0 + y * (-13362590354.0 + y * (651619640.7 +
                        y * (-11214424.18 + y * (77392.33017 + y * (-184.9052456)))));
            double p2 = 57568490411.0 + y * (1029532985.0 + y * (9494680.718 +
                        y * (59272.64853 + y * (267.8532712 + y))));
            return p1 / p2;
        }
        double z = 8.0 / ax, y = z * z;
        double p1 = 1.0 + y * (-0.1098628627e-2 + y * (0.2734510407e-4 +
                    y * (-0.2073370639e-5 + y * 0.2093887211e-6)));
        double p2 = -0.1562499995e-1 + y * (0.1430488765e-3 + y * (-0.6911147651e-5 +
                    y * (0.7621095161e-6 - y * 0.934935152e-7)));
        double xx = ax - 0.785398164;
        return std::sqrt(0.636619772 / ax) * (std::cos(xx) * p1 - z * std::sin(xx) * p2);
    }
};

// ---------------------------------------------------------------------------
// samplers

inline FieldRealization sample_zero_boundary_gff(double lx, double ly, int m_modes,
                                                 uint64_t seed, uint64_t replicate = 0)
{
    if (m_modes < 1) throw std::invalid_argument("m_modes >= 1");
    FieldRealization f;
    f.domain = Domain::rectangle;
    f.seed = seed;
    f.lx = lx;
    f.ly = ly;
    f.m_modes = m_modes;
    f.coef.resize(static_cast<size_t>(m_modes) * m_modes);
    rng::Stream rs{seed, stream_id::rect_coef, replicate};
    for (int m = 1; m <= m_modes; ++m)
        for (int n = 1; n <= m_modes; ++n) {
            double lambda = M_PI * M_PI *
                            (static_cast<double>(m) * m / (lx * lx) +
                             static_cast<double>(n) * n / (ly * ly));
            auto idx = static_cast<uint64_t>(m - 1) * static_cast<uint64_t>(m_modes) +
                       static_cast<uint64_t>(n - 1);
            f.coef[idx] = std::sqrt(2.0 * M_PI / lambda) * rs.normal(idx);
        }
    return f;
}

namespace detail {

// stationary coefficient process c_k on the grid: variance 1/(2k),
// correlation e^{-k dx} per step, grown outward from the zero-index column
inline std::vector<double> sample_mode(const StripGrid& g, int k, uint64_t seed,
                                       uint32_t stream, uint64_t replicate)
{
    rng::Stream rs{seed, stream, replicate};
    const size_t n = g.nx(), j0 = std::min(g.index_of_zero(), n - 1);
    const double sd = std::sqrt(1.0 / (2.0 * k));
    const double rho = std::exp(-static_cast<double>(k) * g.dx);
    const double inno = sd * std::sqrt(1.0 - rho * rho);
    std::vector<double> c(n);
    c[j0] = sd * rs.normal(0);
    for (size_t j = j0 + 1; j < n; ++j) c[j] = rho * c[j - 1] + inno * rs.normal(j);
    for (size_t j = j0; j-- > 0;) c[j] = rho * c[j + 1] + inno * rs.normal(n + j);
    return c;
}

} // namespace detail

inline FieldRealization sample_free_boundary_gff_strip(const StripGrid& grid, int n_modes,
                                                       uint64_t seed, uint64_t replicate = 0)
{
    if (n_modes < 1) throw std::invalid_argument("n_modes >= 1");
    FieldRealization f;
    f.domain = Domain::strip;
    f.seed = seed;
    f.grid = grid;
    f.height = M_PI;
    f.n_modes = n_modes;
    const size_t n = grid.nx(), j0 = std::min(grid.index_of_zero(), n - 1);
    // radial part: two-sided B_{2t}, pinned to 0 on the zero line
    f.radial.assign(n, 0.0);
    rng::Stream rr{seed, stream_id::radial_right, replicate};
    rng::Stream rl{seed, stream_id::radial_left, replicate};
    const double s = std::sqrt(2.0 * grid.dx);
    for (size_t j = j0 + 1; j < n; ++j) f.radial[j] = f.radial[j - 1] + s * rr.normal(j);
    for (size_t j = j0; j-- > 0;) f.radial[j] = f.radial[j + 1] + s * rl.normal(j);
    f.modes.resize(static_cast<size_t>(n_modes));
    for (int k = 1; k <= n_modes; ++k)
        f.modes[static_cast<size_t>(k - 1)] =
            detail::sample_mode(grid, k, seed, stream_id::mode_base + 2 * static_cast<uint32_t>(k), replicate);
    return f;
}

// Quantum wedge / cone field builder.  The radial process follows the
// embedding (first-exit vs circle-average): one side of t = 0 is an
// unconditioned drifted Brownian motion, the other a drifted Brownian motion
// conditioned positive (negative), produced by the last-exit construction;
// at the alpha = Q threshold the conditioned side is a BES^3.
inline FieldRealization build_surface_field(const WedgeSpec& spec, const StripGrid& grid,
                                            uint64_t seed, uint64_t replicate = 0,
                                            int n_modes = 64)
{
    const double gamma = spec.gamma;
    const double Q = q_of_gamma(gamma);
    const double alpha = spec.alpha();
    const double a = Q - alpha; // radial drift
    const bool q_wedge = std::fabs(a) < 1e-12;
    if (alpha > Q + 1e-12 || (q_wedge && spec.surface == Surface::cone))
        throw std::invalid_argument("build_surface_field: need alpha < Q (wedge allows alpha = Q)");
    if (spec.embedding == Embedding::none)
        throw std::invalid_argument("build_surface_field: pick an embedding");

    FieldRealization f;
    f.domain = spec.surface == Surface::wedge ? Domain::strip : Domain::cylinder;
    f.embedding = spec.embedding;
    f.gamma = gamma;
    f.alpha = alpha;
    f.seed = seed;
    f.grid = grid;
    f.height = spec.surface == Surface::wedge ? M_PI : 2.0 * M_PI;
    const double speed = spec.surface == Surface::wedge ? 2.0 : 1.0;
    const size_t n = grid.nx(), j0 = std::min(grid.index_of_zero(), n - 1);
    f.radial.assign(n, 0.0);

    // conditioned side: positive process, negated / mirrored as needed
    const double cond_extent =
        (spec.embedding == Embedding::first_exit ? -grid.x_min : grid.x_max) + grid.dx;
    std::vector<double> cond;
    if (q_wedge) {
        auto z = stochastic::sample_bessel(3.0, 0.0, speed * grid.dx, speed * cond_extent,
                                           seed, replicate);
        cond = z.values;
    } else {
        auto c = stochastic::conditioned_positive_bm(a, speed, grid.dx, cond_extent, seed,
                                                     replicate, stream_id::radial_left);
        cond = c.values;
        f.horizon_warning = c.horizon_warning;
    }
    // unconditioned side: B_{speed t} + a t
    rng::Stream ru{seed, stream_id::radial_right, replicate};
    const double sdt = std::sqrt(speed * grid.dx);
    if (spec.embedding == Embedding::first_exit) {
        // X_t < 0 for t < 0 (hits 0 first at t = 0), free for t > 0
        for (size_t j = j0; j-- > 0;) f.radial[j] = -cond[j0 - j];
        for (size_t j = j0 + 1; j < n; ++j)
            f.radial[j] = f.radial[j - 1] + a * grid.dx + sdt * ru.normal(j);
    } else {
        // circle-average / last-exit: X_t > 0 for t > 0 (hits 0 last at 0)
        for (size_t j = j0 + 1; j < n; ++j) f.radial[j] = cond[j - j0];
        for (size_t j = j0; j-- > 0;)
            f.radial[j] = f.radial[j + 1] - a * grid.dx + sdt * ru.normal(j);
    }

    // lateral part, independent of the radial part
    f.n_modes = n_modes;
    if (spec.surface == Surface::wedge) {
        f.modes.resize(static_cast<size_t>(f.n_modes));
        for (int k = 1; k <= f.n_modes; ++k)
            f.modes[static_cast<size_t>(k - 1)] = detail::sample_mode(
                grid, k, seed, stream_id::mode_base + 2 * static_cast<uint32_t>(k), replicate);
    } else {
        f.modes.resize(static_cast<size_t>(2 * f.n_modes));
        for (int k = 1; k <= f.n_modes; ++k) {
            f.modes[static_cast<size_t>(2 * (k - 1))] = detail::sample_mode(
                grid, k, seed, stream_id::mode_base + 2 * static_cast<uint32_t>(k), replicate);
            f.modes[static_cast<size_t>(2 * (k - 1) + 1)] = detail::sample_mode(
                grid, k, seed, stream_id::mode_base + 2 * static_cast<uint32_t>(k) + 1, replicate);
        }
    }
    return f;
}

// snapshot export: CSV grid x,y,value
inline void write_field_csv(const FieldRealization& f, double x_lo, double x_hi, double y_lo,
                            double y_hi, double step, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "x,y,value\n";
    out.precision(10);
    for (double y = y_lo; y <= y_hi + 1e-12; y += step)
        for (double x = x_lo; x <= x_hi + 1e-12; x += step)
            out << x << ',' << y << ',' << f.value({x, y}) << '\n';
}

// binary f64 raster with the 32-byte cache header (kind 10); the kappa and
// dt slots carry ny and the grid step, N carries nx
inline void write_field_raster(const FieldRealization& f, double x_lo, double y_lo, int nx,
                               int ny, double step, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out.write("SLELAB01", 8);
    uint32_t kind = 10;
    out.write(reinterpret_cast<const char*>(&kind), 4);
    auto ny_d = static_cast<double>(ny);
    out.write(reinterpret_cast<const char*>(&ny_d), 8);
    out.write(reinterpret_cast<const char*>(&step), 8);
    auto nxu = static_cast<uint32_t>(nx);
    out.write(reinterpret_cast<const char*>(&nxu), 4);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double v = f.value({x_lo + i * step, y_lo + j * step});
            out.write(reinterpret_cast<const char*>(&v), 8);
        }
}

} // namespace slelab::gff
