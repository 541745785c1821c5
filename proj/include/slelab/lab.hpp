#pragma once

// Experiment harness: the five headline experiments, their run configs, and
// report emission (JSON + CSV + plot script).  Every experiment is a pure
// function of its RunConfig; replicate loops go through the deterministic
// worker pool and reduce in replicate order, so reruns are bit-identical
// whatever the worker count.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "conformal.hpp"
#include "gff.hpp"
#include "loewner.hpp"
#include "lqg.hpp"
#include "parallel.hpp"
#include "stats.hpp"
#include "version.hpp"

namespace slelab::lab {

using cplx = std::complex<double>;
using nlohmann::json;

enum class Experiment {
    sle8_modulus,
    sle4_escape,
    qh_divergence,
    moment_scaling,
    intensity_profile
};

inline const char* experiment_name(Experiment e)
{
    switch (e) {
    case Experiment::sle8_modulus: return "sle8_modulus";
    case Experiment::sle4_escape: return "sle4_escape";
    case Experiment::qh_divergence: return "qh_divergence";
    case Experiment::moment_scaling: return "moment_scaling";
    case Experiment::intensity_profile: return "intensity_profile";
    }
    return "?";
}

inline Experiment experiment_from_name(const std::string& s)
{
    for (Experiment e : {Experiment::sle8_modulus, Experiment::sle4_escape,
                         Experiment::qh_divergence, Experiment::moment_scaling,
                         Experiment::intensity_profile})
        if (s == experiment_name(e)) return e;
    throw std::invalid_argument("unknown experiment: " + s);
}

struct RunConfig {
    Experiment experiment = Experiment::sle8_modulus;
    uint64_t seed = 1;
    uint64_t replicates = 0; // 0: per-experiment default
    double dt = 0.0;
    double T = 0.0;
    double kappa = 0.0;
    double gamma = std::sqrt(2.0);
    double alpha = 1.0;
    double p = 0.5;
    std::vector<double> epsilons; // dyadic ladder, strictly decreasing
    int workers = 1;
    std::string out_dir = ".";
    double r0 = 1e-4;     // whole-plane seed circle radius
    double r_macro = 1.0; // escape target radius
    int raster_n = 4096;  // escape raster resolution
    double ball_r = 0.02; // intensity ball radius
    bool cached = false;  // qh_divergence: reuse rasters in out_dir

    void apply_defaults()
    {
        switch (experiment) {
        case Experiment::sle8_modulus:
            if (kappa == 0.0) kappa = 8.0;
            if (dt == 0.0) dt = 1.0 / (1 << 18);
            if (T == 0.0) T = 0.5;
            if (replicates == 0) replicates = 3;
            if (epsilons.empty())
                for (int j = 6; j <= 16; ++j) epsilons.push_back(std::pow(2.0, -j));
            break;
        case Experiment::sle4_escape:
            if (kappa == 0.0) kappa = 4.0;
            if (dt == 0.0) dt = 4e-4;
            if (replicates == 0) replicates = 10;
            if (epsilons.empty())
                for (int j = 3; j <= 9; ++j) epsilons.push_back(std::pow(2.0, -j));
            break;
        case Experiment::qh_divergence:
            if (kappa == 0.0) kappa = 4.0;
            if (dt == 0.0) dt = 1e-4;
            if (T == 0.0) T = 1.0;
            if (replicates == 0) replicates = 1;
            if (epsilons.empty()) epsilons = {1024, 2048, 4096};
            break;
        case Experiment::moment_scaling:
            if (replicates == 0) replicates = 10000;
            if (epsilons.empty())
                for (int j = 2; j <= 6; ++j) epsilons.push_back(std::pow(2.0, -j));
            break;
        case Experiment::intensity_profile:
            if (replicates == 0) replicates = 4000;
            if (alpha == 1.0) alpha = 0.0; // profile default probes alpha = 0
            if (epsilons.empty()) epsilons = {0.4, 0.2, 0.1};
            break;
        }
        validate();
    }

    void validate() const
    {
        if (replicates < 1) throw std::invalid_argument("replicates >= 1 required");
        for (size_t i = 0; i + 1 < epsilons.size(); ++i)
            if (!(epsilons[i + 1] < epsilons[i]) &&
                experiment != Experiment::qh_divergence)
                throw std::invalid_argument("epsilon ladder must be strictly decreasing");
    }
};

struct ScaleRow {
    double scale = 0.0;
    double estimate = 0.0;
    double stderr_ = 0.0;
    uint64_t n = 0;
};

struct FitInfo {
    bool valid = false;
    double exponent = 0.0, ci_lo = 0.0, ci_hi = 0.0, r2 = 0.0;
    std::string note;
};

struct Report {
    std::string experiment;
    json params;
    std::vector<ScaleRow> scales;
    FitInfo fit;
    uint64_t seed = 0;
    std::string version = SLELAB_VERSION;
    double wallclock_s = 0.0;

    json to_json() const
    {
        json scales_j = json::array();
        for (const auto& r : scales)
            scales_j.push_back({{"scale", r.scale},
                                {"estimate", r.estimate},
                                {"stderr", r.stderr_},
                                {"n", r.n}});
        return json{{"experiment", experiment},
                    {"params", params},
                    {"scales", scales_j},
                    {"fit",
                     {{"exponent", fit.exponent},
                      {"ci_lo", fit.ci_lo},
                      {"ci_hi", fit.ci_hi},
                      {"r2", fit.r2}}},
                    {"meta",
                     {{"seed", seed}, {"version", version}, {"wallclock_s", wallclock_s}}}};
    }
};

// weighted fit helper shared by the experiments: fewer than 3 usable scales
// refuses to fit
inline FitInfo fit_scales(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<double>& w)
{
    FitInfo f;
    if (x.size() < 3) {
        f.valid = false;
        f.note = "fewer than 3 usable scales; refusing to fit";
        return f;
    }
    auto lf = stats::fit_line(x, y, w);
    f.valid = true;
    f.exponent = lf.slope;
    f.ci_lo = lf.ci_lo;
    f.ci_hi = lf.ci_hi;
    f.r2 = lf.r2;
    return f;
}

// ---------------------------------------------------------------------------
// sle8_modulus

// block-scan estimate of sup_{|s-t|<=delta} |eta(s)-eta(t)| on a uniformly
// sampled trace: windows of delta, advanced by half a window
inline double sup_modulus(const std::vector<cplx>& pts, size_t window)
{
    double m = 0.0;
    for (size_t i = 0; i < pts.size(); i += std::max<size_t>(1, window / 2)) {
        size_t hi = std::min(pts.size(), i + window + 1);
        for (size_t j = i + 1; j < hi; ++j) m = std::max(m, std::abs(pts[j] - pts[i]));
    }
    return m;
}

inline Report run_sle8_modulus(RunConfig cfg)
{
    cfg.apply_defaults();
    auto t_start = std::chrono::steady_clock::now();
    const size_t ns = cfg.epsilons.size();
    std::vector<std::vector<double>> per_rep(ns, std::vector<double>(cfg.replicates, 0.0));
    std::vector<uint8_t> usable(ns, 1);
    for (size_t s = 0; s < ns; ++s)
        if (cfg.epsilons[s] < 4.0 * cfg.dt) usable[s] = 0; // below trace resolution

    par::for_each_replicate(cfg.replicates, cfg.workers, [&](uint64_t rep) {
        loewner::DrivingOptions o{cfg.kappa, cfg.dt, cfg.T, cfg.seed, rep};
        auto d = loewner::generate_driving(loewner::Scheme::sle, o);
        auto tr = loewner::extract_trace(d);
        for (size_t s = 0; s < ns; ++s) {
            if (!usable[s]) continue;
            auto window = static_cast<size_t>(std::llround(cfg.epsilons[s] / cfg.dt));
            per_rep[s][rep] = sup_modulus(tr.points, window);
        }
    });

    Report rep;
    rep.experiment = experiment_name(cfg.experiment);
    rep.seed = cfg.seed;
    std::vector<double> xs_log, ys, ws, xs_holder;
    std::vector<double> running_beta;
    for (size_t s = 0; s < ns; ++s) {
        if (!usable[s]) continue;
        stats::Moments acc;
        for (uint64_t r = 0; r < cfg.replicates; ++r) acc.add(per_rep[s][r]);
        rep.scales.push_back({cfg.epsilons[s], acc.mean, acc.stderr_mean(), acc.n});
        // the two coarsest scales are reported but kept out of the final fit
        if (s >= 2) {
            xs_log.push_back(std::log(std::log(1.0 / cfg.epsilons[s])));
            xs_holder.push_back(std::log(cfg.epsilons[s]));
            ys.push_back(std::log(acc.mean));
            double rel = std::max(acc.stderr_mean() / acc.mean, 1e-6);
            ws.push_back(1.0 / (rel * rel));
        }
    }
    rep.fit = fit_scales(xs_log, ys, ws);
    rep.fit.exponent = -rep.fit.exponent; // M ~ C (log 1/delta)^{-beta}
    std::swap(rep.fit.ci_lo, rep.fit.ci_hi);
    rep.fit.ci_lo = -rep.fit.ci_lo;
    rep.fit.ci_hi = -rep.fit.ci_hi;

    // stabilization diagnostic: beta fitted on nested suffixes of the ladder
    for (size_t start = 0; start + 3 <= xs_log.size(); ++start) {
        std::vector<double> xs2(xs_log.begin() + static_cast<ptrdiff_t>(start), xs_log.end());
        std::vector<double> ys2(ys.begin() + static_cast<ptrdiff_t>(start), ys.end());
        std::vector<double> ws2(ws.begin() + static_cast<ptrdiff_t>(start), ws.end());
        running_beta.push_back(-stats::fit_line(xs2, ys2, ws2).slope);
    }
    double holder_slope = 0.0, holder_r2 = 0.0, loglaw_r2 = rep.fit.valid ? rep.fit.r2 : 0.0;
    if (xs_holder.size() >= 3) {
        auto hf = stats::fit_line(xs_holder, ys, ws);
        holder_slope = hf.slope;
        holder_r2 = hf.r2;
    }
    rep.params = {{"kappa", cfg.kappa},
                  {"dt", cfg.dt},
                  {"T", cfg.T},
                  {"replicates", cfg.replicates},
                  {"workers", cfg.workers},
                  {"diagnostics",
                   {{"running_beta", running_beta},
                    {"holder_slope", holder_slope},
                    {"holder_r2", holder_r2},
                    {"loglaw_r2", loglaw_r2}}}};
    rep.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

// ---------------------------------------------------------------------------
// sle4_escape

namespace detail {

// inverse of the Joukowski-type chain mapping the exterior-disk picture with
// the tip ray removed onto H; see run_sle4_escape
inline cplx exterior_to_halfplane_inverse(cplx zeta, double tip_angle)
{
    cplx nu = zeta * zeta - 1.0;
    cplx s = std::sqrt(nu * nu - 1.0);
    cplx u = nu + s;
    if (std::norm(u) < 1.0) u = nu - s;
    return u * std::polar(1.0, tip_angle);
}

struct EscapeScale {
    stats::Moments depth;  // per-replicate max qh depth at this scale
    uint64_t candidates = 0, accepted = 0, unreachable = 0;
};

} // namespace detail

inline Report run_sle4_escape(RunConfig cfg)
{
    cfg.apply_defaults();
    auto t_start = std::chrono::steady_clock::now();
    const size_t ns = cfg.epsilons.size();
    const double eps_min = cfg.epsilons.back();
    if (cfg.r0 > eps_min / 8.0) cfg.r0 = eps_min / 8.0;

    struct RepResult {
        std::vector<double> depth;   // per scale, max over accepted candidates; -1 if none
        std::vector<uint64_t> cand, acc, unreach;
    };
    std::vector<RepResult> results(cfg.replicates);

    par::for_each_replicate(cfg.replicates, cfg.workers, [&](uint64_t rep) {
        RepResult rr;
        rr.depth.assign(ns, -1.0);
        rr.cand.assign(ns, 0);
        rr.acc.assign(ns, 0);
        rr.unreach.assign(ns, 0);

        // eta1: whole-plane SLE_4(2) grown from the r0 circle to radius ~ 8
        const double t0 = std::log(cfg.r0), t1 = std::log(8.0);
        loewner::DrivingOptions o1{cfg.kappa, cfg.dt, t1 - t0, cfg.seed, rep};
        o1.wp_rho = 2.0;
        auto d1 = loewner::generate_driving(loewner::Scheme::whole_plane_rho, o1);
        auto eta1 = loewner::extract_trace_whole_plane(d1, cfg.r0, 2);

        // uniformized coordinates: g maps C minus eta1 onto the exterior disk;
        // the tip ray stands in for the un-run remainder of eta1, and the
        // chain exterior -> H places the curve's start prime end at
        // x0 = -sqrt(2) cos(theta_T / 2)
        const double theta_T = d1.w_arg.back() - d1.o_arg.back();
        const double tip_angle = d1.w_arg.back();
        const double x0 = -std::sqrt(2.0) * std::cos(theta_T / 2.0);

        // eta2: chordal SLE_4 from x0 in H, mapped back through the chain;
        // capacity extended until the mapped tip leaves radius 4
        const double chunk = 0.5, t2_max = 6.0;
        loewner::DrivingOptions o2{cfg.kappa, cfg.dt, t2_max, cfg.seed ^ 0x5a5a5a5aULL, rep};
        auto d2 = loewner::generate_driving(loewner::Scheme::sle, o2);
        for (auto& w : d2.w) w += x0;
        auto map_back = [&](cplx zeta) {
            cplx u = detail::exterior_to_halfplane_inverse(zeta, tip_angle);
            return loewner::whole_plane_inverse(d1, cfg.r0, u);
        };
        double t2_used = t2_max;
        {
            auto probe = loewner::extract_trace(d2, static_cast<size_t>(chunk / cfg.dt) / 8);
            for (size_t i = 1; i < probe.points.size(); ++i) {
                if (std::abs(map_back(probe.points[i])) > 4.0) {
                    t2_used = probe.times[i];
                    break;
                }
            }
        }
        auto n2 = static_cast<size_t>(t2_used / cfg.dt);
        d2.w.resize(n2 + 1);
        auto eta2_h = loewner::extract_trace(d2, 2);
        std::vector<cplx> eta2;
        eta2.reserve(eta2_h.points.size());
        for (cplx zeta : eta2_h.points) eta2.push_back(map_back(zeta));

        // obstacles and harmonic-measure filter
        conformal::ObstacleSet obs;
        obs.add_polyline(eta1.points, "eta1");
        obs.add_polyline(eta2, "eta2");

        // raster + Whitney graph for the escape depth (graph qh distance
        // stands in for -log p, which is far below floating-point range)
        auto raster = conformal::make_raster(-2.2, -2.2, 2.2, 2.2, cfg.raster_n);
        conformal::rasterize_polyline(raster, eta1.points, 1);
        conformal::rasterize_polyline(raster, eta2, 1);
        auto dec = conformal::whitney_decompose(raster, 12);
        // multi-source Dijkstra from the cells crossing the unit circle
        std::vector<double> qh(dec.cells.size(), std::numeric_limits<double>::infinity());
        {
            using Item = std::pair<double, uint32_t>;
            std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
            for (size_t c = 0; c < dec.cells.size(); ++c) {
                double rad = std::hypot(dec.cells[c].cx, dec.cells[c].cy);
                if (std::fabs(rad - cfg.r_macro) < dec.cells[c].side) {
                    qh[c] = 0.0;
                    pq.push({0.0, static_cast<uint32_t>(c)});
                }
            }
            while (!pq.empty()) {
                auto [dist, c] = pq.top();
                pq.pop();
                if (dist > qh[c]) continue;
                auto relax = [&](uint32_t nb) {
                    double nd = dist + conformal::qh_edge(dec, c, nb);
                    if (nd < qh[nb]) {
                        qh[nb] = nd;
                        pq.push({nd, static_cast<uint32_t>(nb)});
                    }
                };
                for (uint32_t nb : dec.adjacency[c]) relax(nb);
                for (uint32_t nb : dec.corner_adjacency[c]) relax(nb);
            }
        }

        rng::Stream cand_rs{cfg.seed ^ 0xc0ffeeULL, 77, rep};
        for (size_t s = 0; s < ns; ++s) {
            const double eps = cfg.epsilons[s];
            double best = -1.0;
            for (int ring = 0; ring < 2; ++ring) {
                double rad = eps * (ring == 0 ? 1.3 : 1.7);
                for (int a = 0; a < 12; ++a) {
                    double ang = 2.0 * M_PI * (a + cand_rs.uniform(s * 64 + a)) / 12.0;
                    cplx z = std::polar(rad, ang);
                    ++rr.cand[s];
                    if (obs.distance(z).first < 0.7 * eps) continue;
                    // both curves must carry harmonic measure >= 1/4 from z
                    auto hm = conformal::harmonic_measure(obs, z, 700,
                                                          cfg.seed ^ (0xabcdULL + s), {}, 3);
                    if (hm.mass[0] < 0.25 || hm.mass[1] < 0.25) continue;
                    ++rr.acc[s];
                    int cell = dec.find(z);
                    if (cell < 0 || !std::isfinite(qh[static_cast<size_t>(cell)])) {
                        ++rr.unreach[s];
                        continue;
                    }
                    best = std::max(best, qh[static_cast<size_t>(cell)]);
                }
            }
            rr.depth[s] = best;
        }
        results[rep] = std::move(rr);
    });

    Report rep;
    rep.experiment = experiment_name(cfg.experiment);
    rep.seed = cfg.seed;
    std::vector<double> xs, ys, ws;
    std::vector<uint64_t> cand_tot(ns, 0), acc_tot(ns, 0), unreach_tot(ns, 0);
    std::vector<double> slopes_running;
    for (size_t s = 0; s < ns; ++s) {
        stats::Moments acc;
        for (uint64_t r = 0; r < cfg.replicates; ++r) {
            cand_tot[s] += results[r].cand[s];
            acc_tot[s] += results[r].acc[s];
            unreach_tot[s] += results[r].unreach[s];
            if (results[r].depth[s] > 0.0) acc.add(results[r].depth[s]);
        }
        if (acc.n == 0) continue; // scale dropped: no admissible z anywhere
        rep.scales.push_back({cfg.epsilons[s], acc.mean, acc.stderr_mean(), acc.n});
        if (s >= 2) { // two coarsest reported, excluded from the fit
            xs.push_back(std::log(1.0 / cfg.epsilons[s]));
            ys.push_back(std::log(acc.mean));
            double rel = std::max(acc.stderr_mean() / acc.mean, 1e-3);
            ws.push_back(1.0 / (rel * rel));
        }
    }
    rep.fit = fit_scales(xs, ys, ws);
    for (size_t start = 0; start + 3 <= xs.size(); ++start) {
        std::vector<double> x2(xs.begin() + static_cast<ptrdiff_t>(start), xs.end());
        std::vector<double> y2(ys.begin() + static_cast<ptrdiff_t>(start), ys.end());
        std::vector<double> w2(ws.begin() + static_cast<ptrdiff_t>(start), ws.end());
        slopes_running.push_back(stats::fit_line(x2, y2, w2).slope);
    }
    rep.params = {{"kappa", cfg.kappa},
                  {"dt", cfg.dt},
                  {"replicates", cfg.replicates},
                  {"r0", cfg.r0},
                  {"r_macro", cfg.r_macro},
                  {"raster_n", cfg.raster_n},
                  {"estimate_kind", "log(1/p) as Whitney-graph quasihyperbolic depth"},
                  {"diagnostics",
                   {{"candidates", cand_tot},
                    {"accepted", acc_tot},
                    {"unreachable", unreach_tot},
                    {"running_slope", slopes_running}}}};
    rep.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

// ---------------------------------------------------------------------------
// qh_divergence

inline Report run_qh_divergence(RunConfig cfg)
{
    cfg.apply_defaults();
    auto t_start = std::chrono::steady_clock::now();
    namespace fs = std::filesystem;

    Report rep;
    rep.experiment = experiment_name(cfg.experiment);
    rep.seed = cfg.seed;
    std::vector<double> sle_integrals, disk_integrals, sle_s2, disk_s2;

    // the SLE_4 complement raster at each refinement level; cached as PGM
    for (double lvl : cfg.epsilons) {
        int n = static_cast<int>(lvl);
        std::string cache = cfg.out_dir + "/sle4_raster_" + std::to_string(n) + ".pgm";
        conformal::Raster raster;
        const double half = 1.1;
        if (cfg.cached && fs::exists(cache)) {
            raster = conformal::read_pgm(cache, -half, -half, 2.0 * half / (n - 1));
        } else {
            raster = conformal::make_raster(-half, -half, half, half, n);
            // two-sided pair through 0, the same construction as the escape
            // experiment, rasterized near the double point
            RunConfig sub = cfg;
            const double t0 = std::log(cfg.r0), t1 = std::log(4.0);
            loewner::DrivingOptions o1{4.0, cfg.dt, t1 - t0, cfg.seed, 0};
            o1.wp_rho = 2.0;
            auto d1 = loewner::generate_driving(loewner::Scheme::whole_plane_rho, o1);
            auto eta1 = loewner::extract_trace_whole_plane(d1, cfg.r0, 2);
            const double theta_T = d1.w_arg.back() - d1.o_arg.back();
            const double x0 = -std::sqrt(2.0) * std::cos(theta_T / 2.0);
            loewner::DrivingOptions o2{4.0, cfg.dt, 3.0, cfg.seed ^ 0x5a5a5a5aULL, 0};
            auto d2 = loewner::generate_driving(loewner::Scheme::sle, o2);
            for (auto& w : d2.w) w += x0;
            auto eta2_h = loewner::extract_trace(d2, 2);
            std::vector<cplx> eta2;
            for (cplx zeta : eta2_h.points)
                eta2.push_back(loewner::whole_plane_inverse(
                    d1, cfg.r0,
                    detail::exterior_to_halfplane_inverse(zeta, d1.w_arg.back())));
            conformal::rasterize_polyline(raster, eta1.points, 1);
            conformal::rasterize_polyline(raster, eta2, 1);
            conformal::write_pgm(raster, cache);
            (void)sub;
        }
        int max_level = 0;
        while ((1 << max_level) < n) ++max_level;
        max_level -= 3;
        auto dec = conformal::whitney_decompose(raster, max_level);
        // base point: center of the cell farthest from the boundary
        size_t best = 0;
        for (size_t c = 1; c < dec.cells.size(); ++c)
            if (dec.cells[c].dist > dec.cells[best].dist) best = c;
        auto sh = conformal::js_shadow_sum(
            dec, raster, {dec.cells[best].cx, dec.cells[best].cy});
        sle_integrals.push_back(sh.qh_integral);
        sle_s2.push_back(sh.sum_s2);

        // disk control at the same resolution
        auto disk = conformal::make_raster(-half, -half, half, half, n);
        for (int j = 0; j < disk.ny; ++j)
            for (int i = 0; i < disk.nx; ++i)
                if (std::abs(disk.center(i, j)) >= 1.0) disk.set_free(i, j, false);
        auto ddec = conformal::whitney_decompose(disk, max_level);
        auto dsh = conformal::js_shadow_sum(ddec, disk, {0.0, 0.0});
        disk_integrals.push_back(dsh.qh_integral);
        disk_s2.push_back(dsh.sum_s2);

        rep.scales.push_back({static_cast<double>(n), sh.qh_integral, 0.0, 1});
    }

    std::vector<double> xs, ys;
    for (size_t i = 0; i < cfg.epsilons.size(); ++i) {
        xs.push_back(std::log(cfg.epsilons[i]));
        ys.push_back(std::log(sle_integrals[i]));
    }
    rep.fit = fit_scales(xs, ys, std::vector<double>(xs.size(), 1.0));
    rep.params = {{"kappa", cfg.kappa},
                  {"dt", cfg.dt},
                  {"r0", cfg.r0},
                  {"cached", cfg.cached},
                  {"diagnostics",
                   {{"sle_qh_integral", sle_integrals},
                    {"disk_qh_integral", disk_integrals},
                    {"sle_sum_s2", sle_s2},
                    {"disk_sum_s2", disk_s2}}}};
    rep.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

// ---------------------------------------------------------------------------
// moment_scaling and intensity_profile wrappers

inline Report run_moment_scaling(RunConfig cfg)
{
    cfg.apply_defaults();
    auto t_start = std::chrono::steady_clock::now();
    auto res = lqg::moment_scaling(cfg.gamma, cfg.alpha, cfg.p, cfg.epsilons,
                                   cfg.replicates, cfg.seed, false, cfg.workers);
    Report rep;
    rep.experiment = experiment_name(cfg.experiment);
    rep.seed = cfg.seed;
    for (size_t i = 0; i < res.epsilons.size(); ++i)
        rep.scales.push_back(
            {res.epsilons[i], res.moments[i], res.moment_se[i], cfg.replicates});
    rep.fit.valid = res.epsilons.size() >= 3;
    rep.fit.exponent = res.fit.slope;
    rep.fit.ci_lo = res.fit.ci_lo;
    rep.fit.ci_hi = res.fit.ci_hi;
    rep.fit.r2 = res.fit.r2;
    rep.params = {{"gamma", cfg.gamma},
                  {"alpha", cfg.alpha},
                  {"p", cfg.p},
                  {"replicates", cfg.replicates},
                  {"target_slope", cfg.alpha * cfg.p * cfg.gamma},
                  {"rejected", res.rejected},
                  {"truncation_extent", res.truncation_extent}};
    rep.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

inline Report run_intensity_profile(RunConfig cfg)
{
    cfg.apply_defaults();
    auto t_start = std::chrono::steady_clock::now();
    std::vector<cplx> pts;
    for (double y : cfg.epsilons) pts.push_back({0.0, y});
    auto res = lqg::intensity_profile(cfg.gamma, cfg.alpha, pts, cfg.ball_r,
                                      cfg.replicates, cfg.seed, cfg.workers);
    Report rep;
    rep.experiment = experiment_name(cfg.experiment);
    rep.seed = cfg.seed;
    for (const auto& p : res.points)
        rep.scales.push_back({p.z.imag(), p.estimate, p.stderr_, cfg.replicates});
    rep.fit.valid = res.points.size() >= 3;
    rep.fit.exponent = res.im_fit.slope;
    rep.fit.ci_lo = res.im_fit.ci_lo;
    rep.fit.ci_hi = res.im_fit.ci_hi;
    rep.fit.r2 = res.im_fit.r2;
    rep.params = {{"gamma", cfg.gamma},
                  {"alpha", cfg.alpha},
                  {"ball_r", cfg.ball_r},
                  {"replicates", cfg.replicates},
                  {"target_slope", -cfg.gamma * cfg.gamma / 2.0}};
    rep.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

inline Report run(const RunConfig& cfg)
{
    switch (cfg.experiment) {
    case Experiment::sle8_modulus: return run_sle8_modulus(cfg);
    case Experiment::sle4_escape: return run_sle4_escape(cfg);
    case Experiment::qh_divergence: return run_qh_divergence(cfg);
    case Experiment::moment_scaling: return run_moment_scaling(cfg);
    case Experiment::intensity_profile: return run_intensity_profile(cfg);
    }
    throw std::invalid_argument("unknown experiment");
}

// ---------------------------------------------------------------------------
// emission

inline void write_report_csv(const Report& rep, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "scale,estimate,stderr,n\n";
    out.precision(17);
    for (const auto& r : rep.scales)
        out << r.scale << ',' << r.estimate << ',' << r.stderr_ << ',' << r.n << '\n';
}

inline void emit_report(const Report& rep, const std::string& dir)
{
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/report.json");
        if (!out) throw std::runtime_error("cannot open report.json in " + dir);
        out << rep.to_json().dump(2) << '\n';
    }
    write_report_csv(rep, dir + "/report.csv");
    {
        std::ofstream out(dir + "/plot_report.py");
        out << "#!/usr/bin/env python3\n"
               "# plots report.csv produced alongside this script\n"
               "import csv, math\n"
               "import matplotlib\n"
               "matplotlib.use('Agg')\n"
               "import matplotlib.pyplot as plt\n"
               "xs, ys, es = [], [], []\n"
               "with open('report.csv') as f:\n"
               "    for row in csv.DictReader(f):\n"
               "        xs.append(float(row['scale']))\n"
               "        ys.append(float(row['estimate']))\n"
               "        es.append(float(row['stderr']))\n"
               "plt.errorbar(xs, ys, yerr=es, marker='o')\n"
               "plt.xscale('log'); plt.yscale('log')\n"
               "plt.xlabel('scale'); plt.ylabel('estimate')\n"
               "plt.title('" << rep.experiment << "')\n"
               "plt.savefig('report.png', dpi=150)\n"
               "print('wrote report.png')\n";
    }
}

// ---------------------------------------------------------------------------
// flat key/value config files

inline RunConfig parse_config_text(const std::string& text)
{
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r\"");
            size_t b = s.find_last_not_of(" \t\r\"");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty()) continue;
        auto as_list = [&](const std::string& v) {
            std::vector<double> out;
            std::string body = v;
            if (!body.empty() && body.front() == '[') body = body.substr(1, body.size() - 2);
            std::istringstream ls(body);
            std::string tok;
            while (std::getline(ls, tok, ',')) out.push_back(std::stod(tok));
            return out;
        };
        if (key == "experiment") cfg.experiment = experiment_from_name(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "replicates") cfg.replicates = std::stoull(val);
        else if (key == "dt") cfg.dt = std::stod(val);
        else if (key == "T") cfg.T = std::stod(val);
        else if (key == "kappa") cfg.kappa = std::stod(val);
        else if (key == "gamma") cfg.gamma = std::stod(val);
        else if (key == "alpha") cfg.alpha = std::stod(val);
        else if (key == "p") cfg.p = std::stod(val);
        else if (key == "epsilons") cfg.epsilons = as_list(val);
        else if (key == "workers") cfg.workers = std::stoi(val);
        else if (key == "out") cfg.out_dir = val;
        else if (key == "r0") cfg.r0 = std::stod(val);
        else if (key == "r_macro") cfg.r_macro = std::stod(val);
        else if (key == "raster_n") cfg.raster_n = std::stoi(val);
        else if (key == "ball_r") cfg.ball_r = std::stod(val);
        else if (key == "cached") cfg.cached = (val == "true" || val == "1");
        else throw std::invalid_argument("config line " + std::to_string(lineno) +
                                         ": unknown key '" + key + "'");
    }
    return cfg;
}

inline RunConfig parse_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

} // namespace slelab::lab
