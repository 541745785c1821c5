#pragma once

// Loewner-chain machinery: driving-function generators for SLE_kappa,
// SLE_kappa(rho), the stationary whole-plane pair and reverse SLE, forward /
// radial / reverse point evolution, trace extraction by composition of
// per-step slit maps, and half-plane capacity estimation.
//
// Conventions.  Chordal: dg = 2/(g - W) dt with hcap(K_t) = 2t.  Whole-plane
// and radial: dg = g (W + g)/(W - g) dt with |W| = 1; the exterior chain maps
// C \ K_t onto C \ D with g'(infty) = e^{-t}, the disk chain fixes 0 with
// log g'(0) = t.  Reverse: dg = -2/(g - W) dt.

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <functional>
#include <string>
#include <vector>

#include "rng.hpp"
#include "stats.hpp"
#include "stochastic.hpp"

namespace slelab::loewner {

using cplx = std::complex<double>;

enum class Scheme : uint32_t { sle = 1, sle_rho = 2, whole_plane_rho = 3, reverse_sle_kappa = 4 };

// square root with nonnegative imaginary part
inline cplx sqrt_plus(cplx w)
{
    double a = w.real(), b = w.imag();
    double m = std::sqrt(a * a + b * b);
    double x = std::sqrt(0.5 * std::max(m + a, 0.0));
    double y = std::sqrt(0.5 * std::max(m - a, 0.0));
    return {b >= 0.0 ? x : -x, y};
}

struct ForcePointSpec {
    double x = 0.0;
    double rho = 0.0;
    int side = +1; // -1: left of the seed, +1: right (decides 0- vs 0+)
};

struct DrivingFunction {
    Scheme scheme = Scheme::sle;
    double kappa = 0.0;
    double dt = 0.0;
    uint64_t seed = 0;

    std::vector<double> w;                // chordal / reverse driving at k dt
    std::vector<std::vector<double>> v;   // force-point paths (sle_rho)
    std::vector<double> v_im;             // reverse force-point, imaginary part
    std::vector<double> rho;
    std::vector<int> side;
    std::vector<double> w_arg, o_arg;     // whole-plane pair angles (unwrapped)

    bool truncated = false;               // continuation threshold reached
    double truncation_time = 0.0;

    size_t steps() const
    {
        return (scheme == Scheme::whole_plane_rho ? w_arg.size() : w.size()) - 1;
    }
    double horizon() const { return static_cast<double>(steps()) * dt; }

    double w_at(double t) const
    {
        double u = t / dt;
        auto i = static_cast<size_t>(std::max(0.0, u));
        if (i >= w.size() - 1) return w.back();
        double f = u - static_cast<double>(i);
        return w[i] * (1.0 - f) + w[i + 1] * f;
    }
    double w_arg_at(double t0, double t) const // t absolute, grid starts at t0
    {
        double u = (t - t0) / dt;
        auto i = static_cast<size_t>(std::max(0.0, u));
        if (i >= w_arg.size() - 1) return w_arg.back();
        double f = u - static_cast<double>(i);
        return w_arg[i] * (1.0 - f) + w_arg[i + 1] * f;
    }
};

struct DrivingOptions {
    double kappa = 2.0;
    double dt = 1e-3;
    double T = 1.0;
    uint64_t seed = 0;
    uint64_t replicate = 0;
    std::vector<ForcePointSpec> force_points;
    double wp_rho = 2.0; // whole-plane weight
};

namespace stream_id {
constexpr uint32_t driving = 10;
constexpr uint32_t driving_fine = 11;
constexpr uint32_t init = 12;
} // namespace stream_id

// ---------------------------------------------------------------------------
// driving generators

namespace detail {

// inverse cdf of c sin^{2a}(u) du on (0, pi), tabulated once per call site
inline double sample_sin_power(double two_a, double uniform)
{
    constexpr int N = 4096;
    std::vector<double> cum(N + 1, 0.0);
    for (int i = 1; i <= N; ++i) {
        double u0 = M_PI * (i - 1) / N, u1 = M_PI * i / N;
        double um = 0.5 * (u0 + u1);
        cum[i] = cum[i - 1] + (std::pow(std::sin(um), two_a)) * (u1 - u0);
    }
    double target = uniform * cum[N];
    auto it = std::lower_bound(cum.begin(), cum.end(), target);
    auto i = static_cast<size_t>(std::max<ptrdiff_t>(1, it - cum.begin()));
    double f = (target - cum[i - 1]) / (cum[i] - cum[i - 1]);
    return M_PI * (static_cast<double>(i - 1) + f) / N;
}

} // namespace detail

inline DrivingFunction generate_driving(Scheme scheme, const DrivingOptions& opt)
{
    if (opt.kappa <= 0.0) throw std::invalid_argument("generate_driving: kappa > 0");
    if (opt.dt <= 0.0 || opt.T <= 0.0) throw std::invalid_argument("generate_driving: dt, T > 0");
    const auto n = static_cast<size_t>(std::llround(opt.T / opt.dt));
    const double dt = opt.dt, kappa = opt.kappa;
    rng::Stream rs{opt.seed, stream_id::driving, opt.replicate};
    rng::Stream fine{opt.seed, stream_id::driving_fine, opt.replicate};
    rng::Stream is{opt.seed, stream_id::init, opt.replicate};

    DrivingFunction d;
    d.scheme = scheme;
    d.kappa = kappa;
    d.dt = dt;
    d.seed = opt.seed;

    switch (scheme) {
    case Scheme::sle: {
        d.w.assign(n + 1, 0.0);
        const double s = std::sqrt(kappa * dt);
        for (size_t k = 1; k <= n; ++k) d.w[k] = d.w[k - 1] + s * rs.normal(k);
        return d;
    }
    case Scheme::sle_rho: {
        if (opt.force_points.empty())
            throw std::invalid_argument("sle_rho needs force points");
        // force points sitting at the seed are swallowed from the start, so
        // their cumulative weight must be above -2 for the SDE to begin
        for (int sgn : {-1, +1}) {
            double cum = 0.0;
            for (const auto& fp : opt.force_points)
                if (fp.side == sgn && fp.x == 0.0) {
                    cum += fp.rho;
                    if (cum <= -2.0)
                        throw std::invalid_argument("cumulative rho <= -2 at start");
                }
        }
        const size_t m = opt.force_points.size();
        d.w.assign(n + 1, 0.0);
        d.v.assign(m, std::vector<double>(n + 1, 0.0));
        for (size_t j = 0; j < m; ++j) {
            d.v[j][0] = opt.force_points[j].x;
            d.rho.push_back(opt.force_points[j].rho);
            d.side.push_back(opt.force_points[j].side);
        }
        double wcur = 0.0;
        std::vector<double> vcur(m);
        for (size_t j = 0; j < m; ++j) vcur[j] = opt.force_points[j].x;
        const double prox = 8.0 * std::sqrt(kappa * dt);
        for (size_t k = 1; k <= n && !d.truncated; ++k) {
            double dmin = 1e300;
            for (size_t j = 0; j < m; ++j)
                if (std::fabs(vcur[j] - wcur) > 1e-12)
                    dmin = std::min(dmin, std::fabs(vcur[j] - wcur));
            int sub = 1;
            if (dmin < prox) sub = 16;
            if (dmin < prox / 4.0) sub = 64;
            const double tau = dt / sub;
            for (int s = 0; s < sub; ++s) {
                // exact map for the force-point ODE over the substep
                for (size_t j = 0; j < m; ++j) {
                    double q = vcur[j] - wcur;
                    double sgn = q >= 0.0 ? (q > 0.0 ? 1.0 : static_cast<double>(d.side[j])) : -1.0;
                    vcur[j] = wcur + sgn * std::sqrt(q * q + 4.0 * tau);
                }
                double drift = 0.0;
                for (size_t j = 0; j < m; ++j) drift += d.rho[j] / (wcur - vcur[j]);
                double g = (sub == 1) ? rs.normal(k)
                                      : fine.normal(k * 64 + static_cast<uint64_t>(s));
                wcur += drift * tau + std::sqrt(kappa * tau) * g;
                // swallowing keeps the ordering: a passed force point rides the hull
                double swallowed_rho_l = 0.0, swallowed_rho_r = 0.0;
                for (size_t j = 0; j < m; ++j) {
                    if (d.side[j] > 0 && vcur[j] < wcur) { vcur[j] = wcur; swallowed_rho_r += d.rho[j]; }
                    if (d.side[j] < 0 && vcur[j] > wcur) { vcur[j] = wcur; swallowed_rho_l += d.rho[j]; }
                }
                if (swallowed_rho_l <= -2.0 || swallowed_rho_r <= -2.0) {
                    d.truncated = true;
                    d.truncation_time = static_cast<double>(k - 1) * dt + (s + 1) * tau;
                    break;
                }
            }
            d.w[k] = wcur;
            for (size_t j = 0; j < m; ++j) d.v[j][k] = vcur[j];
            if (d.truncated) {
                d.w.resize(k + 1);
                for (auto& col : d.v) col.resize(k + 1);
            }
        }
        return d;
    }
    case Scheme::whole_plane_rho: {
        // theta = arg W - arg O solves d theta = sqrt(k) dB + ((rho+2)/2) cot(theta/2) dt;
        // theta/2 run at speed k/4 is a radial Bessel with a = (rho+2)/kappa.
        const double a = (opt.wp_rho + 2.0) / kappa;
        if (a <= 0.0) throw std::invalid_argument("whole_plane_rho: rho <= -2");
        d.rho.assign(1, opt.wp_rho);
        d.w_arg.assign(n + 1, 0.0);
        d.o_arg.assign(n + 1, 0.0);
        double u = detail::sample_sin_power(2.0 * a, is.uniform(0)); // theta0 / 2
        double theta = 2.0 * u;
        double w_ang = 2.0 * M_PI * is.uniform(1) - M_PI;
        double o_ang = w_ang - theta;
        d.w_arg[0] = w_ang;
        d.o_arg[0] = o_ang;
        const double dte = kappa * dt / 4.0; // radial-Bessel clock
        for (size_t k = 1; k <= n; ++k) {
            double cot_old = 1.0 / std::tan(0.5 * theta);
            bool flip = u > M_PI / 2.0;
            double uu = flip ? M_PI - u : u;
            double extra = a * (1.0 / std::tan(uu) - 1.0 / uu);
            bool hit = false;
            double g = rs.normal(k);
            double un = stochastic::detail::bessel_step(uu, a, dte, flip ? -g : g, extra, hit);
            if (un > M_PI - stochastic::kBarrier) un = M_PI - stochastic::kBarrier;
            u = flip ? M_PI - un : un;
            theta = 2.0 * u;
            double cot_new = 1.0 / std::tan(0.5 * theta);
            o_ang += -0.5 * (cot_old + cot_new) * dt;
            w_ang = o_ang + theta;
            d.w_arg[k] = w_ang;
            d.o_arg[k] = o_ang;
        }
        return d;
    }
    case Scheme::reverse_sle_kappa: {
        d.w.assign(n + 1, 0.0);
        d.v.assign(1, std::vector<double>(n + 1, 0.0));
        d.v_im.assign(n + 1, 0.0);
        d.rho.assign(1, kappa);
        cplx q{0.0, 0.0}; // force-point flow V - W, starts at the seed
        double wcur = 0.0;
        for (size_t k = 1; k <= n; ++k) {
            q = sqrt_plus(q * q - 4.0 * dt);
            double dw = std::sqrt(kappa * dt) * rs.normal(k)
                        - (kappa * (q / std::norm(q)).real()) * dt; // Re(kappa/q) dt
            wcur += dw;
            q -= dw;
            d.w[k] = wcur;
            d.v[0][k] = wcur + q.real();
            d.v_im[k] = q.imag();
        }
        return d;
    }
    }
    throw std::invalid_argument("generate_driving: unknown scheme");
}

// One explicit Euler step of d theta = sqrt(kappa) sin(theta) dB + 2 sin(2 theta) dt,
// the angular SDE of the reverse force-point flow under its log-|Q| time change.
// Its invariant density is proportional to sin^{8/kappa - 2}.
inline double reverse_theta_step(double theta, double kappa, double dt, double gauss)
{
    double t1 = theta + 2.0 * std::sin(2.0 * theta) * dt +
                std::sqrt(kappa * dt) * std::sin(theta) * gauss;
    return std::clamp(t1, 1e-12, M_PI - 1e-12);
}

// ---------------------------------------------------------------------------
// point evolution

struct EvolveResult {
    cplx g{};
    bool swallowed = false;
    double swallow_time = 0.0;
    bool flagged = false; // adaptive refinement hit its floor
};

constexpr double kSwallowTol = 1e-6;

// Forward chordal flow by RK4 with adaptive halving near the singularity.
inline EvolveResult evolve_point(const DrivingFunction& d, cplx z, double t_end)
{
    if (z.imag() <= 0.0) throw std::invalid_argument("evolve_point: Im z > 0 required");
    if (t_end > d.horizon() + 1e-12) throw std::invalid_argument("evolve_point: t_end beyond driving");
    EvolveResult res;
    auto rhs = [&](cplx g, double t) { return 2.0 / (g - d.w_at(t)); };
    double t = 0.0;
    cplx g = z;
    const double base = d.dt;
    while (t < t_end - 1e-15) {
        double gap = std::abs(g - d.w_at(t));
        if (gap < kSwallowTol) {
            res.swallowed = true;
            res.swallow_time = t;
            res.g = g;
            return res;
        }
        double h = std::min(base, t_end - t);
        // refine while the step is large compared to the distance to the singularity
        int halvings = 0;
        while (10.0 * std::sqrt(h) > gap && halvings < 26) { h *= 0.5; ++halvings; }
        if (halvings == 26) res.flagged = true;
        cplx k1 = rhs(g, t);
        cplx k2 = rhs(g + 0.5 * h * k1, t + 0.5 * h);
        cplx k3 = rhs(g + 0.5 * h * k2, t + 0.5 * h);
        cplx k4 = rhs(g + h * k3, t + h);
        g += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
        if (g.imag() < 0.0) g = {g.real(), 0.0};
    }
    res.g = g;
    return res;
}

// ---------------------------------------------------------------------------
// traces

enum class Parameterization { capacity, radial_capacity };

struct Trace {
    std::vector<cplx> points;
    std::vector<double> times;
    Parameterization parameterization = Parameterization::capacity;
};

// Inverse tilted-slit elementary map in centered coordinates: removes from H
// a straight slit of capacity 2*tau whose tip pulls back to the driving
// displacement delta.  phi(w) = (w+p)^{1-a} (w-q)^{a} with p = a c,
// q = (1-a) c, c^2 = 4 tau / (a(1-a)); delta = c (1-2a) picks the tilt.
// a = 1/2 (delta = 0) reduces to sqrt(w^2 - 4 tau).
inline cplx tilted_slit_inverse(cplx w, double delta, double tau)
{
    double r = delta / (2.0 * std::sqrt(tau));
    double a = 0.5 * (1.0 - r / std::sqrt(4.0 + r * r));
    a = std::clamp(a, 1e-9, 1.0 - 1e-9);
    double c = 2.0 * std::sqrt(tau / (a * (1.0 - a)));
    cplx lp = std::log(w + a * c);
    cplx lq = std::log(w - (1.0 - a) * c);
    // principal logs: both arguments lie in the closed upper half-plane
    cplx z = std::exp((1.0 - a) * lp + a * lq);
    if (z.imag() < 0.0) z = {z.real(), 0.0};
    return z;
}

enum class SlitKind { vertical, tilted };

// Tip at an arbitrary time: inside step k the discrete hull is the growing
// slit at its frozen driving value, so the tip is exact within the scheme.
inline cplx trace_tip_at(const DrivingFunction& d, double t,
                         SlitKind kind = SlitKind::vertical)
{
    const double dt = d.dt;
    auto k = static_cast<size_t>(std::ceil(t / dt - 1e-12));
    k = std::max<size_t>(1, std::min(k, d.steps()));
    double tau = t - static_cast<double>(k - 1) * dt;
    cplx z;
    if (kind == SlitKind::vertical) {
        z = {d.w[k - 1], 2.0 * std::sqrt(std::max(tau, 0.0))};
    } else {
        double frac = std::max(tau, 0.0) / dt;
        double delta = (d.w[k] - d.w[k - 1]) * frac; // partial step, scaled tilt
        z = d.w[k - 1] + tilted_slit_inverse(cplx(delta, 0.0), delta, std::max(tau, 1e-300));
    }
    for (size_t j = k - 1; j >= 1; --j) {
        double xi = d.w[j - 1];
        if (kind == SlitKind::vertical) {
            cplx s = z - xi;
            z = xi + sqrt_plus(s * s - cplx(4.0 * dt, 0.0));
        } else {
            z = xi + tilted_slit_inverse(z - xi, d.w[j] - d.w[j - 1], dt);
        }
    }
    return z;
}

// eta(t_k) by composing the inverse slit maps of each step, driving frozen
// per step.  stride > 1 evaluates every stride-th tip.
inline Trace extract_trace(const DrivingFunction& d, size_t stride = 1,
                           SlitKind kind = SlitKind::vertical)
{
    if (d.scheme != Scheme::sle && d.scheme != Scheme::sle_rho)
        throw std::invalid_argument("extract_trace: chordal schemes only");
    const size_t n = d.steps();
    const double dt = d.dt;
    Trace tr;
    tr.parameterization = Parameterization::capacity;
    tr.points.push_back({d.w[0], 0.0});
    tr.times.push_back(0.0);
    if (kind == SlitKind::vertical && stride == 1) {
        // staged sweep: tip k joins at step k, then every active tip applies
        // the same inverse map per step; the per-tip chains are independent,
        // so this is throughput-bound instead of latency-bound
        std::vector<double> re(n), im(n);
        const double c4 = 4.0 * dt;
        for (size_t j = n; j >= 1; --j) {
            const double xi = d.w[j - 1];
            re[j - 1] = xi;
            im[j - 1] = 0.0;
            double* pr = re.data();
            double* pi = im.data();
            for (size_t i = j - 1; i < n; ++i) {
                double a = pr[i] - xi, b = pi[i];
                double u = a * a - b * b - c4;
                double v = 2.0 * a * b;
                double m = std::sqrt(u * u + v * v);
                double y = std::sqrt(0.5 * std::max(m - u, 0.0));
                double x = std::sqrt(0.5 * std::max(m + u, 0.0));
                pr[i] = xi + std::copysign(x, a);
                pi[i] = y;
            }
        }
        for (size_t k = 1; k <= n; ++k) {
            tr.points.push_back({re[k - 1], im[k - 1]});
            tr.times.push_back(static_cast<double>(k) * dt);
        }
        return tr;
    }
    for (size_t k = 1; k <= n; k += stride) {
        cplx z;
        if (kind == SlitKind::vertical) {
            z = {d.w[k - 1], 0.0};
            for (size_t j = k; j >= 1; --j) {
                double xi = d.w[j - 1];
                cplx s = z - xi;
                z = xi + sqrt_plus(s * s - cplx(4.0 * dt, 0.0));
            }
        } else {
            z = trace_tip_at(d, static_cast<double>(k) * dt, kind);
        }
        tr.points.push_back(z);
        tr.times.push_back(static_cast<double>(k) * dt);
    }
    return tr;
}

// Capacity sampling is spatially very uneven (steps near swallowing events
// sweep large arcs), so geometric work wants a trace refined until every
// segment is shorter than h_spatial.
inline Trace extract_trace_refined(const DrivingFunction& d, double h_spatial,
                                   double t_floor = 0.0, size_t base_stride = 1,
                                   SlitKind kind = SlitKind::vertical)
{
    if (d.scheme != Scheme::sle && d.scheme != Scheme::sle_rho)
        throw std::invalid_argument("extract_trace_refined: chordal schemes only");
    if (t_floor <= 0.0) t_floor = d.dt / 16.0;
    Trace tr;
    tr.parameterization = Parameterization::capacity;
    tr.points.push_back({d.w[0], 0.0});
    tr.times.push_back(0.0);
    const size_t n = d.steps();

    std::function<void(double, cplx, double, cplx, int)> refine =
        [&](double t0, cplx z0, double t1, cplx z1, int depth) {
            if (std::abs(z1 - z0) > h_spatial && t1 - t0 > t_floor && depth < 40) {
                double tm = 0.5 * (t0 + t1);
                cplx zm = trace_tip_at(d, tm, kind);
                refine(t0, z0, tm, zm, depth + 1);
                refine(tm, zm, t1, z1, depth + 1);
            } else {
                tr.points.push_back(z1);
                tr.times.push_back(t1);
            }
        };
    double t_prev = 0.0;
    cplx z_prev = tr.points[0];
    for (size_t k = base_stride; k <= n; k += base_stride) {
        double t = static_cast<double>(k) * d.dt;
        cplx z = trace_tip_at(d, t, kind);
        refine(t_prev, z_prev, t, z, 0);
        t_prev = t;
        z_prev = z;
    }
    return tr;
}

// ---------------------------------------------------------------------------
// half-plane capacity

// Incrementally unzip the point sequence with vertical-slit maps, then read
// hcap off the large-z expansion g(z) = z + c/z + ... at 20i, 40i, 80i with
// two levels of Richardson extrapolation.
struct HullMap {
    std::vector<double> xs, ys;

    void absorb(cplx p)
    {
        cplx w = map(p);
        if (w.imag() < 1e-12) return; // already interior to the unzipped hull
        xs.push_back(w.real());
        ys.push_back(w.imag());
    }
    cplx map(cplx z) const
    {
        for (size_t i = 0; i < xs.size(); ++i) {
            cplx s = z - xs[i];
            z = xs[i] + sqrt_plus(s * s + cplx(ys[i] * ys[i], 0.0));
        }
        return z;
    }
};

inline double hull_capacity(const std::vector<cplx>& points)
{
    HullMap h;
    for (cplx p : points)
        if (p.imag() > 1e-12) h.absorb(p);
    if (h.xs.empty()) return 0.0;
    auto chat = [&](double R) {
        cplx z{0.0, R};
        cplx c = (h.map(z) - z) * z;
        return c.real();
    };
    double c20 = chat(20.0), c40 = chat(40.0), c80 = chat(80.0);
    double r1 = (4.0 * c40 - c20) / 3.0;
    double r2 = (4.0 * c80 - c40) / 3.0;
    return (16.0 * r2 - r1) / 15.0;
}

inline double hull_capacity(const Trace& tr, size_t max_points = 4000)
{
    size_t stride = std::max<size_t>(1, tr.points.size() / max_points);
    std::vector<cplx> pts;
    for (size_t i = 0; i < tr.points.size(); i += stride) pts.push_back(tr.points[i]);
    if (stride > 1) pts.push_back(tr.points.back());
    return hull_capacity(pts);
}

// ---------------------------------------------------------------------------
// whole-plane / radial chains

// Inverse of one exterior step with frozen driving angle: with h(u) = u/(1+u)^2,
// the step satisfies h(g_t / W) = e^t h(g_0 / W), so the preimage solves a
// quadratic; the two roots are reciprocal and the exterior one is kept.
inline cplx wp_step_inverse(cplx w, double w_angle, double tau)
{
    cplx W = std::polar(1.0, w_angle);
    cplx u = w / W;
    cplx onepu = 1.0 + u;
    cplx c = std::exp(-tau) * u / (onepu * onepu);
    cplx disc = std::sqrt(1.0 - 4.0 * c); // principal branch
    cplx z = (1.0 - 2.0 * c + disc) / (2.0 * c);
    if (std::norm(z) < 1.0) z = 1.0 / z;
    return z * W;
}

// Full inverse g_T^{-1} of the truncated whole-plane chain started from the
// disk of radius r0 (so g_{t0} = z / r0 with t0 = log r0).
inline cplx whole_plane_inverse(const DrivingFunction& d, double r0, cplx w,
                                size_t up_to_step = SIZE_MAX)
{
    const size_t n = std::min(up_to_step, d.steps());
    for (size_t j = n; j >= 1; --j) w = wp_step_inverse(w, d.w_arg[j - 1], d.dt);
    return r0 * w;
}

inline Trace extract_trace_whole_plane(const DrivingFunction& d, double r0, size_t stride = 1)
{
    if (d.scheme != Scheme::whole_plane_rho)
        throw std::invalid_argument("extract_trace_whole_plane: wrong scheme");
    const size_t n = d.steps();
    Trace tr;
    tr.parameterization = Parameterization::radial_capacity;
    const double t0 = std::log(r0);
    for (size_t k = 1; k <= n; k += stride) {
        cplx z = std::polar(1.0, d.w_arg[k - 1]); // tip seed in its own frame
        for (size_t j = k; j >= 1; --j) z = wp_step_inverse(z, d.w_arg[j - 1], d.dt);
        tr.points.push_back(r0 * z);
        tr.times.push_back(t0 + static_cast<double>(k) * d.dt);
    }
    return tr;
}

// RK4 for the common radial/whole-plane ODE; exterior = true evolves |g| > 1.
inline EvolveResult evolve_disk_ode(const DrivingFunction& d, cplx z, double t0_abs,
                                    double t0, double t1, bool exterior)
{
    EvolveResult res;
    auto wval = [&](double t) { return std::polar(1.0, d.w_arg_at(t0_abs, t)); };
    auto rhs = [&](cplx g, double t) {
        cplx W = wval(t);
        return g * (W + g) / (W - g);
    };
    double t = t0;
    cplx g = z;
    const double base = d.dt;
    while (t < t1 - 1e-15) {
        double gap = std::abs(g - wval(t));
        double wall = std::fabs(std::abs(g) - 1.0);
        if (gap < kSwallowTol || wall < kSwallowTol) {
            res.swallowed = true;
            res.swallow_time = t;
            res.g = g;
            return res;
        }
        double h = std::min(base, t1 - t);
        int halvings = 0;
        double guard = std::min(gap, wall + 1e-3);
        while (4.0 * std::sqrt(h) > guard && halvings < 26) { h *= 0.5; ++halvings; }
        if (halvings == 26) res.flagged = true;
        cplx k1 = rhs(g, t);
        cplx k2 = rhs(g + 0.5 * h * k1, t + 0.5 * h);
        cplx k3 = rhs(g + 0.5 * h * k2, t + 0.5 * h);
        cplx k4 = rhs(g + h * k3, t + h);
        g += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
        double r = std::abs(g);
        if (exterior && r < 1.0) g /= r * r; // reflect roundoff back outside
        if (!exterior && r > 1.0) g /= r * r;
    }
    res.g = g;
    return res;
}

inline EvolveResult evolve_whole_plane(const DrivingFunction& d, cplx z, double t0_abs,
                                       double t_from, double t_to)
{
    if (d.scheme != Scheme::whole_plane_rho)
        throw std::invalid_argument("evolve_whole_plane: wrong scheme");
    return evolve_disk_ode(d, z, t0_abs, t_from, t_to, /*exterior=*/true);
}

inline EvolveResult evolve_radial(const DrivingFunction& d, cplx z, double t_from, double t_to)
{
    if (d.scheme != Scheme::whole_plane_rho)
        throw std::invalid_argument("evolve_radial: wrong scheme");
    return evolve_disk_ode(d, z, 0.0, t_from, t_to, /*exterior=*/false);
}

// ---------------------------------------------------------------------------
// reverse flow

// ghat_t with hydrodynamic normalization, per-step exact maps with the
// driving frozen on each step.
inline cplx evolve_reverse(const std::vector<double>& w, double dt, cplx z, double t_end)
{
    if (z.imag() < 0.0) throw std::invalid_argument("evolve_reverse: Im z >= 0");
    auto n = static_cast<size_t>(std::llround(t_end / dt));
    for (size_t k = 0; k < n; ++k) {
        double xi = w[std::min(k, w.size() - 1)];
        cplx s = z - xi;
        z = xi + sqrt_plus(s * s - cplx(4.0 * dt, 0.0));
    }
    return z;
}

inline cplx evolve_reverse(const DrivingFunction& d, cplx z, double t_end)
{
    if (d.scheme != Scheme::reverse_sle_kappa && d.scheme != Scheme::sle)
        throw std::invalid_argument("evolve_reverse: needs a real driving record");
    return evolve_reverse(d.w, d.dt, z, t_end);
}

// ---------------------------------------------------------------------------
// export and binary cache

inline void write_trace_csv(const Trace& tr, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "t,re,im\n";
    out.precision(17);
    for (size_t i = 0; i < tr.points.size(); ++i)
        out << tr.times[i] << ',' << tr.points[i].real() << ',' << tr.points[i].imag() << '\n';
}

inline void write_driving_csv(const DrivingFunction& d, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "t,w";
    if (d.scheme == Scheme::whole_plane_rho) out << ",o_re,o_im";
    for (size_t j = 0; j < d.v.size(); ++j) out << ",v" << (j + 1);
    out << '\n';
    out.precision(17);
    const size_t n = d.steps();
    for (size_t k = 0; k <= n; ++k) {
        out << static_cast<double>(k) * d.dt << ',';
        if (d.scheme == Scheme::whole_plane_rho) {
            out << std::cos(d.w_arg[k]) << ',' << std::cos(d.o_arg[k]) << ','
                << std::sin(d.o_arg[k]);
        } else {
            out << d.w[k];
            for (size_t j = 0; j < d.v.size(); ++j) out << ',' << d.v[j][k];
        }
        out << '\n';
    }
}

// 32-byte header: magic "SLELAB01", scheme id u32, kappa f64, dt f64, N u32;
// then the little-endian f64 payload arrays.
inline void save_driving(const DrivingFunction& d, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    char magic[8] = {'S', 'L', 'E', 'L', 'A', 'B', '0', '1'};
    out.write(magic, 8);
    auto scheme = static_cast<uint32_t>(d.scheme);
    out.write(reinterpret_cast<const char*>(&scheme), 4);
    out.write(reinterpret_cast<const char*>(&d.kappa), 8);
    out.write(reinterpret_cast<const char*>(&d.dt), 8);
    auto n = static_cast<uint32_t>(d.steps() + 1);
    out.write(reinterpret_cast<const char*>(&n), 4);
    auto dump = [&](const std::vector<double>& a) {
        out.write(reinterpret_cast<const char*>(a.data()),
                  static_cast<std::streamsize>(a.size() * sizeof(double)));
    };
    if (d.scheme == Scheme::whole_plane_rho) { dump(d.w_arg); dump(d.o_arg); }
    else {
        dump(d.w);
        for (const auto& col : d.v) dump(col);
        if (!d.v_im.empty()) dump(d.v_im);
    }
}

inline DrivingFunction load_driving(const std::string& path, size_t n_force_points = 0)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::memcmp(magic, "SLELAB01", 8) != 0) throw std::runtime_error("bad magic in " + path);
    uint32_t scheme = 0, n = 0;
    DrivingFunction d;
    in.read(reinterpret_cast<char*>(&scheme), 4);
    in.read(reinterpret_cast<char*>(&d.kappa), 8);
    in.read(reinterpret_cast<char*>(&d.dt), 8);
    in.read(reinterpret_cast<char*>(&n), 4);
    d.scheme = static_cast<Scheme>(scheme);
    auto slurp = [&](std::vector<double>& a) {
        a.resize(n);
        in.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(n * sizeof(double)));
    };
    if (d.scheme == Scheme::whole_plane_rho) { slurp(d.w_arg); slurp(d.o_arg); }
    else {
        slurp(d.w);
        d.v.resize(n_force_points + (d.scheme == Scheme::reverse_sle_kappa ? 1 : 0));
        for (auto& col : d.v) slurp(col);
        if (d.scheme == Scheme::reverse_sle_kappa) slurp(d.v_im);
    }
    if (!in) throw std::runtime_error("truncated driving cache " + path);
    return d;
}

} // namespace slelab::loewner
