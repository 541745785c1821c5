// slelab: batch experiment runner and export utilities.
//
//   slelab <experiment> [--config cfg.toml] [--seed N] [--out DIR] ...
//   slelab trace   --kappa K --dt DT --T T --seed N --out trace.csv [--bin cache.bin]
//   slelab path    --kind bessel --d 3 --dt DT --T T --seed N --out path.csv
//   slelab whitney --raster in.pgm --max-level L --out cells.csv
//
// Config files are flat key = value documents mirroring RunConfig; see the
// README for the key list.

#include <CLI11.hpp>

#include <slelab/conformal.hpp>
#include <slelab/lab.hpp>
#include <slelab/loewner.hpp>
#include <slelab/stochastic.hpp>

#include <cstdio>
#include <string>

using namespace slelab;

namespace {

void add_experiment(CLI::App& app, lab::Experiment which)
{
    auto* sub = app.add_subcommand(lab::experiment_name(which), "run this experiment");
    auto config_path = std::make_shared<std::string>();
    auto seed = std::make_shared<int64_t>(-1);
    auto out = std::make_shared<std::string>();
    auto workers = std::make_shared<int>(0);
    sub->add_option("--config", *config_path, "flat key=value config file");
    sub->add_option("--seed", *seed, "override the config seed");
    sub->add_option("--out", *out, "output directory");
    sub->add_option("--workers", *workers, "worker threads");
    sub->callback([which, config_path, seed, out, workers]() {
        lab::RunConfig cfg;
        if (!config_path->empty()) cfg = lab::parse_config(*config_path);
        cfg.experiment = which;
        if (*seed >= 0) cfg.seed = static_cast<uint64_t>(*seed);
        if (!out->empty()) cfg.out_dir = *out;
        if (*workers > 0) cfg.workers = *workers;
        auto rep = lab::run(cfg);
        lab::emit_report(rep, cfg.out_dir);
        std::printf("%s: %zu scales", rep.experiment.c_str(), rep.scales.size());
        if (rep.fit.valid)
            std::printf(", fitted exponent %.4f [%.4f, %.4f], r2 %.3f",
                        rep.fit.exponent, rep.fit.ci_lo, rep.fit.ci_hi, rep.fit.r2);
        else
            std::printf(", no fit (%s)", rep.fit.note.c_str());
        std::printf(", %.1fs -> %s/report.{json,csv}\n", rep.wallclock_s,
                    cfg.out_dir.c_str());
    });
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"slelab: Loewner chains, Gaussian fields and Liouville measures"};
    app.require_subcommand(1);

    for (lab::Experiment e :
         {lab::Experiment::sle8_modulus, lab::Experiment::sle4_escape,
          lab::Experiment::qh_divergence, lab::Experiment::moment_scaling,
          lab::Experiment::intensity_profile})
        add_experiment(app, e);

    // trace export
    auto* trace = app.add_subcommand("trace", "simulate an SLE trace and export it");
    double tr_kappa = 4.0, tr_dt = 1e-4, tr_T = 0.5;
    uint64_t tr_seed = 1;
    std::string tr_out = "trace.csv", tr_bin, tr_driving_csv;
    trace->add_option("--kappa", tr_kappa);
    trace->add_option("--dt", tr_dt);
    trace->add_option("--T", tr_T);
    trace->add_option("--seed", tr_seed);
    trace->add_option("--out", tr_out, "trace CSV (t,re,im)");
    trace->add_option("--bin", tr_bin, "driving binary cache");
    trace->add_option("--driving-csv", tr_driving_csv, "driving CSV (t,w)");
    trace->callback([&]() {
        loewner::DrivingOptions o{tr_kappa, tr_dt, tr_T, tr_seed, 0};
        auto d = loewner::generate_driving(loewner::Scheme::sle, o);
        auto tr = loewner::extract_trace(d);
        loewner::write_trace_csv(tr, tr_out);
        if (!tr_bin.empty()) loewner::save_driving(d, tr_bin);
        if (!tr_driving_csv.empty()) loewner::write_driving_csv(d, tr_driving_csv);
        std::printf("trace: %zu points, hcap %.5f -> %s\n", tr.points.size(),
                    loewner::hull_capacity(tr), tr_out.c_str());
    });

    // stochastic path export
    auto* path = app.add_subcommand("path", "simulate a process path and export it");
    std::string pk = "bessel", p_out = "path.csv";
    double p_d = 3.0, p_a = 1.0, p_x0 = 0.0, p_dt = 1e-3, p_T = 1.0, p_drift = 0.0;
    uint64_t p_seed = 1;
    path->add_option("--kind", pk, "brownian | bessel | radial_bessel");
    path->add_option("--d", p_d, "Bessel dimension");
    path->add_option("--a", p_a, "radial Bessel parameter");
    path->add_option("--x0", p_x0);
    path->add_option("--dt", p_dt);
    path->add_option("--T", p_T);
    path->add_option("--drift", p_drift);
    path->add_option("--seed", p_seed);
    path->add_option("--out", p_out);
    path->callback([&]() {
        stochastic::SamplePath sp;
        if (pk == "brownian") sp = stochastic::sample_brownian(1, p_dt, p_T, p_drift, p_seed);
        else if (pk == "bessel") sp = stochastic::sample_bessel(p_d, p_x0, p_dt, p_T, p_seed);
        else if (pk == "radial_bessel")
            sp = stochastic::sample_radial_bessel(p_a, p_x0 > 0 ? p_x0 : M_PI / 2, p_dt, p_T, p_seed);
        else throw CLI::ValidationError("--kind", "unknown kind " + pk);
        stochastic::write_csv(sp, p_out);
        std::printf("path: %zu samples -> %s%s\n", sp.size(), p_out.c_str(),
                    sp.boundary_hit ? " (boundary hit)" : "");
    });

    // whitney decomposition of a raster
    auto* wh = app.add_subcommand("whitney", "decompose a raster domain");
    std::string w_in, w_out = "cells.csv";
    int w_level = 8;
    double w_x0 = 0.0, w_y0 = 0.0, w_pixel = 1.0;
    wh->add_option("--raster", w_in, "PGM (P5) or SLRASTER bit raster")->required();
    wh->add_option("--max-level", w_level);
    wh->add_option("--x0", w_x0);
    wh->add_option("--y0", w_y0);
    wh->add_option("--pixel", w_pixel);
    wh->add_option("--out", w_out, "cells CSV (cx,cy,level,shadow_diam)");
    wh->callback([&]() {
        conformal::Raster r;
        if (w_in.size() > 4 && w_in.substr(w_in.size() - 4) == ".pgm")
            r = conformal::read_pgm(w_in, w_x0, w_y0, w_pixel);
        else
            r = conformal::read_raster_bits(w_in);
        auto dec = conformal::whitney_decompose(r, w_level);
        size_t best = 0;
        for (size_t c = 1; c < dec.cells.size(); ++c)
            if (dec.cells[c].dist > dec.cells[best].dist) best = c;
        auto sh = conformal::js_shadow_sum(dec, r, {dec.cells[best].cx, dec.cells[best].cy});
        conformal::write_whitney_csv(dec, w_out);
        std::printf("whitney: %zu cells, sum s^2 = %.4f, qh integral = %.4f -> %s\n",
                    dec.cells.size(), sh.sum_s2, sh.qh_integral, w_out.c_str());
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}
