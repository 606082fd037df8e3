#pragma once

// Batch front-end. Subcommands:
//   analyze   per-mode linear analysis -> modes.csv
//   pitchfork pitchfork record (JSON) + (D1,D2) sign-chart CSV
//   continue  branch continuation -> branch.json, branch.csv, snapshots
//   simulate  time evolution -> timeseries.csv
//   sweep     chi sweep spike metrics -> sweep.csv
//   selftest  invariant suite, prints a pass/fail table
// Exit codes: 0 success, 1 numerical failure, 2 usage/config error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chemotax/asymptotics.hpp"
#include "chemotax/config.hpp"
#include "chemotax/io.hpp"
#include "chemotax/linear_analysis.hpp"
#include "chemotax/pitchfork.hpp"
#include "chemotax/steady.hpp"
#include "chemotax/time_sim.hpp"

namespace chemotax::cli {

namespace detail {

struct CommonFlags {
    std::string config_path;
    std::optional<double> D1, D2, chi, ubar, beta, L, chi_max, dt, t_final, eps;
    std::optional<int> N, k, kmax;
    std::optional<long long> seed;
    std::optional<std::string> out, kinetics;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "config file (key = value lines)");
        app->add_option("--kinetics", kinetics, "linear | custom");
        app->add_option("--D1", D1, "cell motility");
        app->add_option("--D2", D2, "chemical diffusivity");
        app->add_option("--chi", chi, "chemoattraction rate");
        app->add_option("--ubar", ubar, "carrying level");
        app->add_option("--beta", beta, "production rate");
        app->add_option("--L", L, "domain length");
        app->add_option("--N", N, "grid cells");
        app->add_option("--k", k, "mode number");
        app->add_option("--kmax", kmax, "largest mode analyzed");
        app->add_option("--chi-max", chi_max, "continuation chi limit");
        app->add_option("--dt", dt, "time step");
        app->add_option("--t-final", t_final, "time horizon");
        app->add_option("--eps", eps, "perturbation amplitude");
        app->add_option("--seed", seed, "random seed");
        app->add_option("--out", out, "output directory");
    }

    ExperimentConfig resolve() const {
        ExperimentConfig cfg;
        if (!config_path.empty()) parse_config_file(cfg, config_path);
        auto set_d = [&cfg](const char* key, const std::optional<double>& v) {
            if (v) apply_config_key(cfg, key, fmt_g17(*v));
        };
        if (kinetics) apply_config_key(cfg, "kinetics", *kinetics);
        set_d("D1", D1);
        set_d("D2", D2);
        set_d("chi", chi);
        set_d("ubar", ubar);
        set_d("beta", beta);
        set_d("L", L);
        set_d("chi_max", chi_max);
        set_d("dt", dt);
        set_d("t_final", t_final);
        set_d("eps", eps);
        if (N) apply_config_key(cfg, "N", std::to_string(*N));
        if (k) apply_config_key(cfg, "k", std::to_string(*k));
        if (kmax) apply_config_key(cfg, "kmax", std::to_string(*kmax));
        if (seed) apply_config_key(cfg, "seed", std::to_string(*seed));
        if (out) apply_config_key(cfg, "out", *out);
        apply_out_dir_env_fallback(cfg);
        return cfg;
    }
};

inline std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.out_dir);
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

inline int run_analyze(const ExperimentConfig& cfg) {
    const ModelParams p = cfg.params();
    const auto modes = analyze_modes(p, cfg.kmax);
    const Threshold th = instability_threshold(p, cfg.kmax);
    CsvWriter csv(out_path(cfg, "modes.csv"), cfg.resolved(),
                  {"k", "lambda_k", "chi_k", "Q_k", "simple", "trace", "max_growth_at_chi"});
    for (const auto& m : modes)
        csv.row_mixed({std::to_string(m.k), fmt_g17(m.lambda_k), fmt_g17(m.chi_k), fmt_g17(m.q_k),
                       m.simple ? "1" : "0", fmt_g17(m.trace_k), fmt_g17(m.max_growth)});
    std::cout << "chi_0 = " << fmt_g17(th.chi0) << " at k = " << th.k_star << " (searched k <= "
              << th.k_max_used << ")\n";
    std::cout << "wrote " << out_path(cfg, "modes.csv") << "\n";
    return 0;
}

inline int run_pitchfork(const ExperimentConfig& cfg) {
    const ModelParams p = cfg.params();
    const PitchforkRecord rec = pitchfork_record(p, cfg.k);
    {
        std::ofstream js(out_path(cfg, "pitchfork.json"));
        js << to_json(rec).dump(2) << "\n";
    }
    for (const auto& note : rec.notes) std::cerr << "note: " << note << "\n";
    // sign chart over a log-spaced (D1, D2) grid around the configured point
    CsvWriter csv(out_path(cfg, "pitchfork_chart.csv"), cfg.resolved(),
                  {"D1", "D2", "k3", "region_case", "stability"});
    const int nd = 20;
    for (int i = 0; i < nd; ++i) {
        for (int j = 0; j < nd; ++j) {
            ModelParams q = p;
            q.d1 = 1e-2 * std::pow(1e3, i / double(nd - 1));
            q.d2 = 1e-2 * std::pow(1e3, j / double(nd - 1));
            PitchforkRecord r = classify_region(q, cfg.k);
            bool near_singular = std::abs(q.d1 - r.r3) <= 1e-6 * std::max(1.0, r.r3);
            if (r.r1) near_singular |= std::abs(q.d1 - *r.r1) <= 1e-6 * std::max(1.0, std::abs(*r.r1));
            if (r.r2) near_singular |= std::abs(q.d1 - *r.r2) <= 1e-6 * std::max(1.0, std::abs(*r.r2));
            if (near_singular) continue;
            const double k3 = k3_fourier_value(q, cfg.k);
            csv.row_mixed({fmt_g17(q.d1), fmt_g17(q.d2), fmt_g17(k3), to_string(r.region_case),
                           to_string(predict_stability_value(k3, std::abs(k3) + 1.0))});
        }
    }
    std::cout << "k3_fourier = " << fmt_g17(rec.k3_fourier)
              << ", k3_closed = " << fmt_g17(rec.k3_closed) << ", case " << to_string(rec.region_case)
              << ", " << to_string(rec.stability) << "\n";
    std::cout << "wrote " << out_path(cfg, "pitchfork.json") << ", "
              << out_path(cfg, "pitchfork_chart.csv") << "\n";
    return 0;
}

inline int run_continue(const ExperimentConfig& cfg, const std::vector<double>& snapshot_chis) {
    const ModelParams p = cfg.params();
    const Grid g = cfg.grid();
    ContinuationOptions opts;
    opts.chi_max = cfg.chi_max;
    const Branch br = continue_branch(p, g, cfg.k, opts);
    if (br.points.size() < 2) {
        std::cerr << "continuation failed to leave the bifurcation point\n";
        return 1;
    }
    {
        std::ofstream js(out_path(cfg, "branch.json"));
        js << to_json(br).dump(2) << "\n";
    }
    CsvWriter csv(out_path(cfg, "branch.csv"), cfg.resolved(),
                  {"s", "chi", "amplitude", "u0", "uL", "min_u", "max_u", "mass"});
    for (const auto& bp : br.points)
        csv.row({bp.arclength, bp.chi, bp.diag.amplitude, bp.state.u.front(), bp.state.u.back(),
                 bp.diag.min_u, bp.diag.max_u, bp.diag.l1_mass});
    for (double chi_s : snapshot_chis) {
        auto st = state_at_chi(br, p, g, chi_s);
        if (!st) {
            std::cerr << "no branch crossing at chi = " << chi_s << "\n";
            return 1;
        }
        char name[64];
        std::snprintf(name, sizeof name, "state_chi_%g.csv", chi_s);
        CsvWriter snap(out_path(cfg, name), cfg.resolved(), {"x", "u", "v"});
        for (int i = 0; i < g.n_nodes(); ++i) snap.row({g.node(i), st->u[i], st->v[i]});
    }
    std::cout << "branch: " << br.points.size() << " points, chi in ["
              << fmt_g17(br.points.front().chi) << ", " << fmt_g17(br.points.back().chi)
              << "], terminated by " << to_string(br.terminated_by) << ", " << br.fold_count
              << " folds, " << br.events.size() << " events\n";
    if (br.terminated_by == BranchTermination::StepFailure) return 1;
    return 0;
}

inline int run_simulate(const ExperimentConfig& cfg) {
    const ModelParams p = cfg.params();
    const Grid g = cfg.grid();
    EvolutionConfig ec;
    ec.dt = cfg.dt;
    ec.t_final = cfg.t_final;
    ec.perturb_eps = cfg.eps;
    // perturbed equilibrium start, seeded
    std::mt19937_64 rng(cfg.seed);
    StateField s = constant_state(g, p.ubar, p.vbar());
    const auto wu = random_neumann_field(g, 0, rng);
    const auto wv = random_neumann_field(g, 0, rng);
    for (int i = 0; i < g.n_nodes(); ++i) {
        s.u[i] += cfg.eps * wu[i];
        s.v[i] += cfg.eps * wv[i];
    }
    TrajectorySummary tr;
    try {
        tr = evolve(s, p, g, ec);
    } catch (const StepSizeError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    CsvWriter csv(out_path(cfg, "timeseries.csv"), cfg.resolved(),
                  {"t", "norm_u", "norm_v", "min_u", "u0"});
    for (size_t i = 0; i < tr.times.size(); ++i)
        csv.row({tr.times[i], tr.norm_u[i], tr.norm_v[i], tr.min_u[i], tr.u_left[i]});
    std::cout << "final |u-ubar|_inf = " << fmt_g17(tr.norm_u.back()) << ", min u = "
              << fmt_g17(tr.min_u.back()) << "\n";
    std::cout << "wrote " << out_path(cfg, "timeseries.csv") << "\n";
    return 0;
}

inline int run_sweep(const ExperimentConfig& cfg) {
    const ModelParams p = cfg.params();
    const Grid g = cfg.grid();
    const double chi1 = bifurcation_value_discrete(p, 1, g);
    const double top = cfg.chi_max;
    if (!(top > chi1)) {
        std::cerr << "chi_max must exceed the first bifurcation value " << fmt_g17(chi1) << "\n";
        return 2;
    }
    std::vector<double> schedule;
    const int n_pts = 22;
    const double lo = 1.05 * chi1;
    for (int i = 0; i < n_pts; ++i)
        schedule.push_back(lo * std::pow(top / lo, i / double(n_pts - 1)));
    SweepResult sw = spike_sweep(p, g, schedule);
    CsvWriter csv(out_path(cfg, "sweep.csv"), cfg.resolved(),
                  {"chi", "D1", "peak_ratio", "half_width", "mass", "tail_sup", "step_flag"});
    for (const auto& pt : sw.points) {
        const auto rep = step_exclusion_check(pt.state, p, g);
        csv.row({pt.chi, p.d1, pt.metrics.peak_ratio, pt.metrics.half_width, pt.metrics.mass,
                 pt.metrics.tail_sup, rep.flagged ? 1.0 : 0.0});
        if (rep.flagged)
            std::cerr << "step-profile proximity flag at chi = " << fmt_g17(pt.chi)
                      << " (relative L1 distance " << fmt_g17(rep.rel_l1_distance) << ")\n";
    }
    std::cout << "wrote " << out_path(cfg, "sweep.csv") << " (" << sw.points.size()
              << " points)\n";
    if (!sw.completed) {
        std::cerr << "sweep aborted: " << sw.failure << "\n";
        return 1;
    }
    return 0;
}

inline int run_selftest(const ExperimentConfig& cfg) {
    int failures = 0;
    auto check = [&failures](const std::string& name, bool ok, const std::string& detail = "") {
        std::printf("%-44s %s%s%s\n", name.c_str(), ok ? "PASS" : "FAIL",
                    detail.empty() ? "" : "  ", detail.c_str());
        if (!ok) ++failures;
    };
    const ModelParams p = cfg.params();
    const Grid g(64, p.length);

    // equilibrium residuals vanish identically
    const double r_eq = residual_norm(constant_state(g, p.ubar, p.vbar()), p, g);
    const double r_triv = residual_norm(constant_state(g, 0.0, 0.0), p, g);
    check("equilibrium residual (positive state)", r_eq == 0.0, fmt_g17(r_eq));
    check("equilibrium residual (trivial state)", r_triv == 0.0, fmt_g17(r_triv));

    // analytic Jacobian vs central differences on a seeded random state
    {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> unif(0.3, 1.7);
        StateField s(g.n_nodes(), 0.0, 0.0);
        for (int i = 0; i < g.n_nodes(); ++i) {
            s.u[i] = unif(rng);
            s.v[i] = unif(rng);
        }
        BandedMatrix J = jacobian(s, p, g);
        double worst = 0.0;
        const double d = 1e-6;
        for (int j = 0; j < 2 * g.n_nodes(); ++j) {
            StateField sp = s, sm = s;
            auto& cp = (j % 2 == 0) ? sp.u[j / 2] : sp.v[j / 2];
            auto& cm = (j % 2 == 0) ? sm.u[j / 2] : sm.v[j / 2];
            cp += d;
            cm -= d;
            const auto rp = residual(sp, p, g), rm = residual(sm, p, g);
            for (int i = std::max(0, j - kBandUp); i <= std::min(2 * g.n_nodes() - 1, j + kBandLo);
                 ++i) {
                const double fd = (rp[i] - rm[i]) / (2 * d);
                const double an = J.at(i, j);
                worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(an)));
            }
        }
        check("Jacobian finite-difference consistency", worst <= 1e-6, fmt_g17(worst));
    }

    // determinant root matches the discrete closed form
    try {
        const double chi_h = detect_bifurcation(p, g, cfg.k);
        const double closed = bifurcation_value_discrete(p, cfg.k, g);
        check("bifurcation detection vs closed form",
              std::abs(chi_h - closed) <= 1e-10 * closed, fmt_g17(chi_h));
    } catch (const std::exception& e) {
        check("bifurcation detection vs closed form", false, e.what());
    }

    // pitchfork coefficient cross-check (sign agreement)
    if (p.kinetics.family() == Kinetics::Family::Linear) {
        try {
            const double kf = k3_fourier_value(p, cfg.k);
            const double kc = k3_closed_value(p, cfg.k);
            check("pitchfork coefficient sign cross-check", kf * kc > 0.0,
                  "fourier " + fmt_g17(kf) + ", closed " + fmt_g17(kc));
        } catch (const DegeneracyError& e) {
            check("pitchfork coefficient sign cross-check", true,
                  std::string("skipped: ") + e.what());
        }
    }
    std::printf("%d failure(s)\n", failures);
    return failures == 0 ? 0 : 1;
}

}  // namespace detail

/// Entry point used by the binary and by tests. Returns the process exit code.
inline int run(int argc, const char* const* argv) {
    CLI::App app{"stationary chemotaxis pattern toolkit"};
    app.require_subcommand(1);

    detail::CommonFlags analyze_f, pitchfork_f, continue_f, simulate_f, sweep_f, selftest_f;
    std::vector<double> snapshot_chis;

    auto* c_analyze = app.add_subcommand("analyze", "per-mode linear analysis");
    analyze_f.attach(c_analyze);
    auto* c_pitch = app.add_subcommand("pitchfork", "pitchfork coefficient and region chart");
    pitchfork_f.attach(c_pitch);
    auto* c_cont = app.add_subcommand("continue", "branch continuation in chi");
    continue_f.attach(c_cont);
    c_cont->add_option("--snapshot-chi", snapshot_chis, "write (x,u,v) snapshots at these chi");
    auto* c_sim = app.add_subcommand("simulate", "time evolution from a perturbed equilibrium");
    simulate_f.attach(c_sim);
    auto* c_sweep = app.add_subcommand("sweep", "chi sweep with spike metrics");
    sweep_f.attach(c_sweep);
    auto* c_self = app.add_subcommand("selftest", "invariant suite");
    selftest_f.attach(c_self);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (c_analyze->parsed()) return detail::run_analyze(analyze_f.resolve());
        if (c_pitch->parsed()) return detail::run_pitchfork(pitchfork_f.resolve());
        if (c_cont->parsed()) return detail::run_continue(continue_f.resolve(), snapshot_chis);
        if (c_sim->parsed()) return detail::run_simulate(simulate_f.resolve());
        if (c_sweep->parsed()) return detail::run_sweep(sweep_f.resolve());
        if (c_self->parsed()) return detail::run_selftest(selftest_f.resolve());
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const UnsupportedKineticsError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace chemotax::cli
