#pragma once

// Brownian, Bessel and radial Bessel samplers plus the closed-form
// first-passage / transition densities used as oracles elsewhere.
//
// The samplers are Euler-Maruyama with the singular part of the drift taken
// implicitly: for a/x the update solves x' = z + (a dt)/x' with
// z = x + sqrt(dt) N, i.e. x' = (z + sqrt(z^2 + 4 a dt))/2, which stays
// positive for a > 0 at any step size.  Steps that still cross below delta0
// (a <= 1/2 phases) are projected onto the barrier and flagged.  A Bessel
// process started exactly at 0 takes its first step from the exact time-dt
// marginal.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"
#include "sample_path.hpp"
#include "stats.hpp"

namespace slelab::stochastic {

constexpr double kBarrier = 1e-9;

namespace stream_id {
constexpr uint32_t driving = 0;
constexpr uint32_t init = 1;
} // namespace stream_id

namespace detail {

// One step of dx = (a/x) dt + (bounded drift) dt + dB.
//
// For a >= 1/2 the process never reaches 0 and the singular drift term is
// taken implicitly: x' = z + a dt / x', i.e. x' = (z + sqrt(z^2 + 4a dt))/2,
// which is positive and stable at any step size.  For a < 1/2 the process
// does hit 0; there we step explicitly with a capped drift increment and
// reflect, flagging any barrier crossing.
inline double bessel_step(double x, double a, double dt, double gauss, double extra_drift,
                          bool& hit)
{
    double z = x + extra_drift * dt + std::sqrt(dt) * gauss;
    if (a >= 0.5) {
        double x1 = 0.5 * (z + std::sqrt(z * z + 4.0 * a * dt));
        if (x1 < kBarrier) { hit = true; return kBarrier; }
        return x1;
    }
    double drift = a / x * dt;
    double cap = 0.5 * x + 2.0 * std::sqrt(dt);
    if (std::fabs(drift) > cap) drift = (drift > 0.0 ? cap : -cap);
    double x1 = x + drift + extra_drift * dt + std::sqrt(dt) * gauss;
    if (x1 < kBarrier) {
        hit = true;
        x1 = std::max(std::fabs(x1), kBarrier); // instantaneous reflection
    }
    return x1;
}

} // namespace detail

// ---------------------------------------------------------------------------
// samplers

inline SamplePath sample_brownian(int dim, double dt, double T, double drift,
                                  uint64_t seed, uint64_t replicate = 0)
{
    if (dt <= 0.0 || T <= 0.0 || dt > T) throw std::invalid_argument("sample_brownian: need 0 < dt <= T");
    if (dim != 1 && dim != 2) throw std::invalid_argument("sample_brownian: dim must be 1 or 2");
    const auto n = static_cast<size_t>(std::llround(T / dt));
    rng::Stream rs{seed, stream_id::driving, replicate};
    SamplePath p;
    p.kind = PathKind::brownian;
    p.dt = dt;
    p.seed = seed;
    p.params = {{"dim", static_cast<double>(dim)}, {"drift", drift}, {"T", T}};
    p.times.resize(n + 1);
    p.values.assign(n + 1, 0.0);
    if (dim == 2) p.values_im.assign(n + 1, 0.0);
    const double sdt = std::sqrt(dt);
    for (size_t k = 0; k <= n; ++k) p.times[k] = static_cast<double>(k) * dt;
    for (size_t k = 1; k <= n; ++k) {
        auto g = rs.normal_pair(k);
        p.values[k] = p.values[k - 1] + sdt * g.first + drift * dt;
        if (dim == 2) p.values_im[k] = p.values_im[k - 1] + sdt * g.second + drift * dt;
    }
    return p;
}

// cdf of the BES^3 position at time t started from 0
inline double bes3_transition_cdf(double y, double t)
{
    if (y <= 0.0) return 0.0;
    double u = y / std::sqrt(2.0 * t);
    return std::erf(u) - std::sqrt(2.0 / M_PI) * (y / std::sqrt(t)) * std::exp(-y * y / (2.0 * t));
}

inline SamplePath sample_bessel(double d, double x0, double dt, double T,
                                uint64_t seed, uint64_t replicate = 0)
{
    if (d <= 0.0) throw std::invalid_argument("sample_bessel: d > 0 required");
    if (x0 < 0.0) throw std::invalid_argument("sample_bessel: x0 >= 0 required");
    if (dt <= 0.0 || T <= 0.0 || dt > T) throw std::invalid_argument("sample_bessel: need 0 < dt <= T");
    const double a = (d - 1.0) / 2.0;
    const auto n = static_cast<size_t>(std::llround(T / dt));
    rng::Stream rs{seed, stream_id::driving, replicate};
    rng::Stream is{seed, stream_id::init, replicate};
    SamplePath p;
    p.kind = PathKind::bessel;
    p.dt = dt;
    p.seed = seed;
    p.params = {{"d", d}, {"x0", x0}, {"T", T}};
    p.times.resize(n + 1);
    p.values.assign(n + 1, 0.0);
    for (size_t k = 0; k <= n; ++k) p.times[k] = static_cast<double>(k) * dt;
    size_t k0 = 1;
    p.values[0] = x0;
    if (x0 == 0.0 && n >= 1) {
        // exact first step: Euler from 0 is degenerate
        if (std::fabs(d - 3.0) < 1e-12) {
            double u = is.uniform(0);
            p.values[1] = stats::bisect([&](double y) { return bes3_transition_cdf(y, dt); },
                                        0.0, 10.0 * std::sqrt(dt) + 10.0, u, 80);
        } else {
            p.values[1] = std::fabs(std::sqrt(dt) * is.normal(0)); // reflected Gaussian step
        }
        k0 = 2;
    }
    for (size_t k = k0; k <= n; ++k) {
        bool hit = false;
        p.values[k] = detail::bessel_step(p.values[k - 1], a, dt, rs.normal(k), 0.0, hit);
        p.boundary_hit = p.boundary_hit || hit;
    }
    return p;
}

inline SamplePath sample_radial_bessel(double a, double y0, double dt, double T,
                                       uint64_t seed, uint64_t replicate = 0)
{
    if (y0 <= 0.0 || y0 >= M_PI) throw std::invalid_argument("sample_radial_bessel: y0 in (0,pi)");
    if (dt <= 0.0 || T <= 0.0 || dt > T) throw std::invalid_argument("sample_radial_bessel: need 0 < dt <= T");
    const auto n = static_cast<size_t>(std::llround(T / dt));
    rng::Stream rs{seed, stream_id::driving, replicate};
    SamplePath p;
    p.kind = PathKind::radial_bessel;
    p.dt = dt;
    p.seed = seed;
    p.params = {{"a", a}, {"y0", y0}, {"T", T}};
    p.times.resize(n + 1);
    p.values.assign(n + 1, 0.0);
    for (size_t k = 0; k <= n; ++k) p.times[k] = static_cast<double>(k) * dt;
    p.values[0] = y0;
    for (size_t k = 1; k <= n; ++k) {
        double y = p.values[k - 1];
        double g = rs.normal(k);
        // work in the coordinate of the nearest endpoint, where
        // cot(u) = 1/u + (cot u - 1/u) splits into singular + bounded parts
        bool flip = y > M_PI / 2.0;
        double u = flip ? M_PI - y : y;
        double extra = a * (1.0 / std::tan(u) - 1.0 / u);
        bool hit = false;
        double un = detail::bessel_step(u, a, dt, flip ? -g : g, extra, hit);
        if (un > M_PI - kBarrier) { un = M_PI - kBarrier; hit = true; }
        p.boundary_hit = p.boundary_hit || hit;
        p.values[k] = flip ? M_PI - un : un;
    }
    return p;
}

// invariant density of the radial Bessel process, c_a sin^{2a}(y) on (0,pi)
inline double radial_bessel_invariant_density(double a, double y)
{
    if (a <= -0.5) throw std::invalid_argument("invariant density needs a > -1/2");
    // 1/c_a = int_0^pi sin^{2a} = sqrt(pi) Gamma(a+1/2) / Gamma(a+1)
    double log_norm = 0.5 * std::log(M_PI) + std::lgamma(a + 0.5) - std::lgamma(a + 1.0);
    return std::exp(2.0 * a * std::log(std::sin(y)) - log_norm);
}

// ---------------------------------------------------------------------------
// closed-form densities

enum class DensityKind { first_passage_drift, first_passage_level0, bes3_transition };

struct DensitySpec {
    DensityKind kind;
    double alpha = 0.0; // drift (first_passage_drift)
    double b = 0.0;     // level (first-passage kinds)
    double t = 0.0;     // time (bes3_transition)
};

inline double density(const DensitySpec& spec, double x)
{
    if (x <= 0.0) throw std::invalid_argument("density: argument must be positive");
    switch (spec.kind) {
    case DensityKind::first_passage_drift: {
        // last time B_t + alpha t = b, for b, alpha > 0
        if (spec.alpha <= 0.0 || spec.b <= 0.0)
            throw std::invalid_argument("first_passage_drift: alpha, b > 0");
        double d = spec.b - spec.alpha * x;
        return spec.alpha / std::sqrt(2.0 * M_PI * x) * std::exp(-d * d / (2.0 * x));
    }
    case DensityKind::first_passage_level0: {
        // first passage of level 0 from -b, b > 0
        if (spec.b <= 0.0) throw std::invalid_argument("first_passage_level0: b > 0");
        return spec.b / std::sqrt(2.0 * M_PI * x * x * x) * std::exp(-spec.b * spec.b / (2.0 * x));
    }
    case DensityKind::bes3_transition: {
        if (spec.t <= 0.0) throw std::invalid_argument("bes3_transition: t > 0");
        return std::sqrt(2.0 / M_PI) * std::pow(spec.t, -1.5) * x * x *
               std::exp(-x * x / (2.0 * spec.t));
    }
    }
    throw std::invalid_argument("density: unknown kind");
}

// ---------------------------------------------------------------------------
// BES^3 Laplace transform by Monte Carlo on the exact time-t marginal

struct McEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    uint64_t n = 0;
};

inline McEstimate bes3_laplace(double s, double t, uint64_t replicates, uint64_t seed)
{
    if (s < 0.0 || t <= 0.0) throw std::invalid_argument("bes3_laplace: s >= 0, t > 0");
    if (replicates < 1000) throw std::invalid_argument("bes3_laplace: replicates >= 1000");
    stats::Moments acc;
    const double st = std::sqrt(t);
    for (uint64_t r = 0; r < replicates; ++r) {
        rng::Stream rs{seed, stream_id::driving, r};
        auto g1 = rs.normal_pair(0);
        auto g2 = rs.normal_pair(0, 1);
        // |N(0,I_3)| * sqrt(t) has the BES^3 time-t law from 0
        double z = st * std::sqrt(g1.first * g1.first + g1.second * g1.second +
                                  g2.first * g2.first);
        acc.add(std::exp(-s * z));
    }
    return {acc.mean, acc.stderr_mean(), acc.n};
}

// ---------------------------------------------------------------------------
// Brownian motion conditioned to stay positive, by last-exit decomposition:
// sample P_t = B_{speed t} + alpha t on a long horizon, locate its last zero
// tau, and return X_t = P_{t + tau}.

struct ConditionedPath {
    std::vector<double> values; // X at 0, dt, ..., T
    double last_zero = 0.0;
    bool horizon_warning = false; // last zero landed within 5% of the horizon
};

inline ConditionedPath conditioned_positive_bm(double alpha, double speed, double dt,
                                               double T, uint64_t seed,
                                               uint64_t replicate = 0,
                                               uint32_t stream = stream_id::driving)
{
    if (alpha <= 0.0) throw std::invalid_argument("conditioned_positive_bm: alpha > 0");
    rng::Stream rs{seed, stream, replicate};
    const double sdt = std::sqrt(speed * dt);
    double horizon = 30.0 / (alpha * alpha) + 10.0 / alpha + T + 5.0;
    std::vector<double> path{0.0};
    uint64_t step = 1;
    size_t last_zero_idx = 0;
    for (;;) {
        auto n_target = static_cast<size_t>(std::llround(horizon / dt));
        while (path.size() <= n_target) {
            double prev = path.back();
            path.push_back(prev + sdt * rs.normal(step) + alpha * dt);
            ++step;
        }
        for (size_t k = last_zero_idx + 1; k < path.size(); ++k)
            if (path[k] <= 0.0) last_zero_idx = k;
        double tau = static_cast<double>(last_zero_idx) * dt;
        if (tau + T <= horizon - 2.0) break;
        horizon *= 1.6; // a late zero: extend and rescan
    }
    ConditionedPath out;
    out.last_zero = static_cast<double>(last_zero_idx) * dt;
    // refine the crossing location inside the step, then resample on the grid
    double frac = 0.0;
    if (last_zero_idx + 1 < path.size()) {
        double p0 = path[last_zero_idx], p1 = path[last_zero_idx + 1];
        if (p0 <= 0.0 && p1 > 0.0) frac = -p0 / (p1 - p0);
    }
    auto n_out = static_cast<size_t>(std::llround(T / dt));
    out.values.resize(n_out + 1);
    for (size_t j = 0; j <= n_out; ++j) {
        double pos = static_cast<double>(last_zero_idx) + frac + static_cast<double>(j);
        auto i = static_cast<size_t>(pos);
        double f = pos - static_cast<double>(i);
        double v = (i + 1 < path.size()) ? path[i] * (1.0 - f) + path[i + 1] * f : path.back();
        out.values[j] = std::max(v, 0.0);
    }
    out.values[0] = 0.0;
    out.horizon_warning =
        out.last_zero > 0.95 * (static_cast<double>(path.size() - 1) * dt - T);
    return out;
}

} // namespace slelab::stochastic
