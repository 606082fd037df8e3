#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "chemotax/steady.hpp"

using namespace chemotax;

namespace {
ModelParams reference(double chi) {
    return ModelParams(1.0, 1.0, chi, 1.0, M_PI, Kinetics::linear(1.0));
}
StateField reflect(const StateField& s) {
    StateField r = s;
    std::reverse(r.u.begin(), r.u.end());
    std::reverse(r.v.begin(), r.v.end());
    return r;
}
}  // namespace

TEST_CASE("residual vanishes exactly at both equilibria") {
    const Grid g(48, M_PI);
    for (double chi : {0.0, 3.7, 41.0}) {
        const ModelParams p = reference(chi);
        CHECK(residual_norm(constant_state(g, p.ubar, p.vbar()), p, g) == 0.0);
        CHECK(residual_norm(constant_state(g, 0.0, 0.0), p, g) == 0.0);
    }
}

TEST_CASE("residual is second order small along the kernel direction") {
    const Grid g(64, M_PI);
    const ModelParams p0 = reference(0.0);
    const double chi_h = bifurcation_value_discrete(p0, 1, g);
    const ModelParams p = reference(chi_h);
    const StateField mode = discrete_eigenmode(p, 1, g);
    const StateField eq = constant_state(g, p.ubar, p.vbar());
    const double r1 = residual_norm(axpy(eq, 1e-3, mode), p, g);
    const double r2 = residual_norm(axpy(eq, 5e-4, mode), p, g);
    CHECK(r1 / r2 == Catch::Approx(4.0).epsilon(0.05));  // O(eps^2)
}

TEST_CASE("jacobian matches central finite differences") {
    const Grid g(32, M_PI);
    for (const ModelParams& p :
         {reference(2.5), ModelParams(0.7, 1.3, 1.8, 1.2, M_PI, Kinetics::saturating(0.9))}) {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> unif(0.4, 1.8);
        StateField s(g.n_nodes(), 0.0, 0.0);
        for (int i = 0; i < g.n_nodes(); ++i) {
            s.u[i] = unif(rng);
            s.v[i] = unif(rng);
        }
        BandedMatrix J = jacobian(s, p, g);
        const double d = 1e-6;
        double worst = 0.0;
        for (int j = 0; j < 2 * g.n_nodes(); ++j) {
            StateField sp = s, sm = s;
            ((j % 2 == 0) ? sp.u[j / 2] : sp.v[j / 2]) += d;
            ((j % 2 == 0) ? sm.u[j / 2] : sm.v[j / 2]) -= d;
            const auto rp = residual(sp, p, g), rm = residual(sm, p, g);
            for (int i = std::max(0, j - kBandUp); i <= std::min(2 * g.n_nodes() - 1, j + kBandLo);
                 ++i) {
                const double fd = (rp[i] - rm[i]) / (2 * d);
                worst = std::max(worst, std::abs(fd - J.at(i, j)) /
                                            std::max(1.0, std::abs(J.at(i, j))));
            }
        }
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("jacobian annihilates the discrete kernel direction at chi_k^h") {
    const Grid g(64, M_PI);
    for (int k : {1, 2, 3}) {
        const double chi_h = bifurcation_value_discrete(reference(0.0), k, g);
        const ModelParams p = reference(chi_h);
        const StateField mode = discrete_eigenmode(p, k, g);
        BandedMatrix J = jacobian(constant_state(g, p.ubar, p.vbar()), p, g);
        double scale = 0.0, worst = 0.0;
        const int n2 = 2 * g.n_nodes();
        for (int i = 0; i < n2; ++i)
            for (int j = std::max(0, i - kBandLo); j <= std::min(n2 - 1, i + kBandUp); ++j)
                scale = std::max(scale, std::abs(J.at(i, j)));
        for (int i = 0; i < n2; ++i) {
            double acc = 0.0;
            for (int j = std::max(0, i - kBandLo); j <= std::min(n2 - 1, i + kBandUp); ++j)
                acc += J.at(i, j) * ((j % 2 == 0) ? mode.u[j / 2] : mode.v[j / 2]);
            worst = std::max(worst, std::abs(acc));
        }
        CHECK(worst <= 1e-12 * scale);
    }
}

TEST_CASE("chemotactic coupling entries vanish at chi = 0") {
    const Grid g(16, M_PI);
    const ModelParams p = reference(0.0);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unif(0.4, 1.8);
    StateField s(g.n_nodes(), 0.0, 0.0);
    for (int i = 0; i < g.n_nodes(); ++i) {
        s.u[i] = unif(rng);
        s.v[i] = unif(rng);
    }
    BandedMatrix J = jacobian(s, p, g);
    for (int i = 0; i < g.n_nodes(); ++i) {        // u-rows
        for (int jv = 0; jv < g.n_nodes(); ++jv) {  // v-columns
            if (std::abs(2 * i - (2 * jv + 1)) > kBandUp) continue;
            CHECK(J.at(2 * i, 2 * jv + 1) == 0.0);
        }
    }
}

TEST_CASE("flux terms telescope exactly for arbitrary states") {
    const Grid g(48, M_PI);
    const ModelParams p = reference(7.3);
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unif(0.1, 2.5);
    for (int trial = 0; trial < 10; ++trial) {
        StateField s(g.n_nodes(), 0.0, 0.0);
        for (int i = 0; i < g.n_nodes(); ++i) {
            s.u[i] = unif(rng);
            s.v[i] = unif(rng);
        }
        const auto r = residual(s, p, g);
        double sum_r = 0.0, sum_react = 0.0, scale = 0.0;
        for (int i = 0; i < g.n_nodes(); ++i) {
            sum_r += g.weight(i) * r[2 * i];
            sum_react += g.weight(i) * (p.ubar - s.u[i]) * s.u[i];
            scale += g.weight(i) * std::abs(r[2 * i]);
        }
        CHECK(std::abs(sum_r - sum_react) <= 1e-12 * std::max(1.0, scale));
    }
}

TEST_CASE("jacobian-residual consistency: remainder shrinks quadratically") {
    const Grid g(40, M_PI);
    const ModelParams p = reference(3.0);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unif(0.4, 1.6);
    StateField s(g.n_nodes(), 0.0, 0.0), dir(g.n_nodes(), 0.0, 0.0);
    for (int i = 0; i < g.n_nodes(); ++i) {
        s.u[i] = unif(rng);
        s.v[i] = unif(rng);
        dir.u[i] = unif(rng) - 1.0;
        dir.v[i] = unif(rng) - 1.0;
    }
    BandedMatrix J = jacobian(s, p, g);
    const auto r0 = residual(s, p, g);
    auto remainder = [&](double eps) {
        const auto r1 = residual(axpy(s, eps, dir), p, g);
        double w = 0.0;
        const int n2 = 2 * g.n_nodes();
        for (int i = 0; i < n2; ++i) {
            double jd = 0.0;
            for (int j = std::max(0, i - kBandLo); j <= std::min(n2 - 1, i + kBandUp); ++j)
                jd += J.at(i, j) * ((j % 2 == 0) ? dir.u[j / 2] : dir.v[j / 2]);
            w = std::max(w, std::abs(r1[i] - r0[i] - eps * jd));
        }
        return w;
    };
    const double ratio = remainder(1e-3) / remainder(5e-4);
    CHECK(ratio == Catch::Approx(4.0).epsilon(0.1));
}

TEST_CASE("newton converges instantly at the root") {
    const Grid g(32, M_PI);
    const ModelParams p = reference(2.0);
    const NewtonResult r = newton_solve(constant_state(g, p.ubar, p.vbar()), p, g);
    CHECK(r.converged);
    CHECK(r.iterations <= 1);
}

TEST_CASE("newton reaches a nonconstant state above onset") {
    const Grid g(64, M_PI);
    const double chi_h = bifurcation_value_discrete(reference(0.0), 1, g);
    const ModelParams p = reference(1.05 * chi_h);
    const StateField mode = discrete_eigenmode(p, 1, g);
    const StateField init = axpy(constant_state(g, p.ubar, p.vbar()), 0.3, mode);
    const NewtonResult r = newton_solve(init, p, g);
    REQUIRE(r.converged);
    const Diagnostics d = diagnostics(r.state, p, g);
    CHECK(d.amplitude > 0.05);
    CHECK(d.min_u <= p.ubar);
    CHECK(d.max_u >= p.ubar);
}

TEST_CASE("chi = 0 admits only the constant states") {
    const Grid g(48, M_PI);
    const ModelParams p = reference(0.0);
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    for (int trial = 0; trial < 10; ++trial) {
        StateField s(g.n_nodes(), 0.0, 0.0);
        for (int i = 0; i < g.n_nodes(); ++i) {
            s.u[i] = p.ubar * std::exp(unif(rng));
            s.v[i] = p.vbar() * std::exp(unif(rng));
        }
        NewtonOptions no;
        no.max_iter = 60;
        const NewtonResult r = newton_solve(s, p, g, no);
        REQUIRE(r.converged);
        double d_pos = 0.0, d_triv = 0.0;
        for (int i = 0; i < g.n_nodes(); ++i) {
            d_pos = std::max({d_pos, std::abs(r.state.u[i] - p.ubar),
                              std::abs(r.state.v[i] - p.vbar())});
            d_triv = std::max({d_triv, std::abs(r.state.u[i]), std::abs(r.state.v[i])});
        }
        CHECK((d_pos <= 1e-6 || d_triv <= 1e-6));
    }
}

TEST_CASE("bifurcation detection matches discrete closed form and converges at O(h^2)") {
    const ModelParams p = reference(0.0);
    const Grid g64(64, M_PI);
    for (int k : {1, 2}) {
        const double chi_h = detect_bifurcation(p, g64, k);
        CHECK(chi_h == Catch::Approx(bifurcation_value_discrete(p, k, g64)).epsilon(1e-10));
    }
    // O(h^2) error decay away from the chi(lam) minimum (k = 2 here; at k = 1
    // these parameters sit exactly at the minimum and superconverge)
    const double chi2 = bifurcation_value(p, 2);
    double err_prev = 0.0;
    std::vector<double> ratios;
    for (int n : {32, 64, 128}) {
        const Grid g(n, M_PI);
        const double err = std::abs(bifurcation_value_discrete(p, 2, g) - chi2);
        if (err_prev > 0.0) ratios.push_back(err_prev / err);
        err_prev = err;
    }
    for (double r : ratios) CHECK((r >= 3.6 && r <= 4.4));
    CHECK_THROWS_AS(detect_bifurcation(p, g64, 0), std::invalid_argument);
}

TEST_CASE("bifurcation detection demands a bracketing sign change") {
    const Grid g(32, M_PI);
    CHECK_THROWS_AS(detect_bifurcation(reference(0.0), g, 1, 0.5, 1.0), std::runtime_error);
}

TEST_CASE("k = 2 branch points are non-monotone near onset") {
    const Grid g(64, M_PI);
    const ModelParams p = reference(0.0);
    ContinuationOptions opts;
    opts.chi_max = 1e9;
    opts.max_points = 5;
    const Branch br = continue_branch(p, g, 2, opts);
    REQUIRE(br.points.size() >= 2);
    for (const auto& bp : br.points) {
        CHECK_FALSE(bp.diag.monotone_u);
        CHECK_FALSE(bp.diag.monotone_v);
    }
}

TEST_CASE("determinant changes sign exactly once near each simple mode") {
    const ModelParams p = reference(0.0);
    const Grid g(48, M_PI);
    for (int k : {1, 2}) {
        const double chi_h = bifurcation_value_discrete(p, k, g);
        int changes = 0;
        int prev = 0;
        for (int i = 0; i <= 40; ++i) {
            const double chi = chi_h * (0.99 + 0.02 * i / 40.0);
            const int s = constant_state_det(p.with_chi(chi), g).first;
            if (prev != 0 && s != prev) ++changes;
            prev = s;
        }
        CHECK(changes == 1);
    }
}

TEST_CASE("branch switch amplitude and mirror symmetry") {
    const Grid g(64, M_PI);
    const ModelParams p = reference(0.0);
    const double s0 = 5e-3;
    const BranchPoint up = branch_switch(p, g, 1, s0);
    const double q_h = mode_ratio_discrete(p, 1, g);
    CHECK(up.diag.amplitude == Catch::Approx(s0 * q_h).epsilon(0.2));
    const BranchPoint down = branch_switch(p, g, 1, -s0);
    const StateField mirrored = reflect(down.state);
    for (int i = 0; i < g.n_nodes(); ++i) {
        CHECK(up.state.u[i] == Catch::Approx(mirrored.u[i]).margin(1e-8));
        CHECK(up.state.v[i] == Catch::Approx(mirrored.v[i]).margin(1e-8));
    }
    const BranchPoint none = branch_switch(p, g, 1, 0.0);
    CHECK(none.diag.amplitude == 0.0);
    CHECK(none.chi == Catch::Approx(bifurcation_value_discrete(p, 1, g)));
}

TEST_CASE("branch switch requires a simple kernel") {
    const Grid g(32, M_PI);
    const ModelParams p(1, 1, 0, 4.0, M_PI, Kinetics::linear(1.0));  // chi_1 = chi_2
    CHECK_THROWS_AS(branch_switch(p, g, 1), std::runtime_error);
}

TEST_CASE("continuation of the first branch") {
    const Grid g(100, M_PI);
    const ModelParams p = reference(0.0);
    ContinuationOptions opts;
    opts.chi_max = 12.0;
    const Branch br = continue_branch(p, g, 1, opts);
    REQUIRE(br.points.size() >= 10);
    CHECK(br.terminated_by == BranchTermination::ChiLimit);
    CHECK(br.points.back().chi >= 12.0);
    double s_prev = -1.0;
    for (const auto& bp : br.points) {
        CHECK(bp.arclength > s_prev);  // no duplicated points along the path
        s_prev = bp.arclength;
        CHECK(bp.diag.newton_residual <= 1e-9);
        CHECK(bp.diag.min_u > 0.0);
        CHECK(bp.diag.min_v > 0.0);
        CHECK(bp.diag.min_u <= p.ubar * (1 + 1e-12));
        CHECK(bp.diag.max_u >= p.ubar * (1 - 1e-12));
        // balance identity: flux telescoping makes ubar*int(u) = int(u^2)
        CHECK(bp.diag.mass_identity_gap <= 10.0 * p.length * std::max(bp.diag.newton_residual, 1e-14));
        CHECK(bp.diag.mass_bound_ok);
    }
}

TEST_CASE("branch opening fit recovers the quadratic coefficient") {
    // synthetic oracle for the fitter itself
    Branch synth;
    for (int i = 1; i <= 10; ++i) {
        BranchPoint bp;
        bp.sigma = 1e-3 * i;
        bp.chi = 4.0 + 8.0 * bp.sigma * bp.sigma;
        synth.points.push_back(bp);
    }
    const BranchOpeningFit f = fit_branch_opening(synth, 10);
    CHECK(f.c0 == Catch::Approx(4.0).epsilon(1e-10));
    CHECK(std::abs(f.c1) <= 1e-9);
    CHECK(f.c2 == Catch::Approx(8.0).epsilon(1e-8));

    // live branch: tiny amplitude window keeps the quartic term negligible
    const Grid g(100, M_PI);
    const ModelParams p = reference(0.0);
    ContinuationOptions opts;
    opts.chi_max = 30.0;
    opts.s0 = 1.2e-4;
    opts.ds_init = 3.4e-4;
    opts.ds_max = 3.4e-4;
    opts.max_points = 11;
    const Branch br = continue_branch(p, g, 1, opts);
    REQUIRE(br.points.size() >= 10);
    const BranchOpeningFit live = fit_branch_opening(br, 10);
    CHECK(live.c0 == Catch::Approx(br.chi_onset).margin(1e-6));
    CHECK(std::abs(live.c1) <= 1e-3 * std::abs(live.c2) * live.sigma_max);
    CHECK(live.c2 == Catch::Approx(8.0).epsilon(0.05));  // pitchfork coefficient at d1 = d2 = 1
}

TEST_CASE("state refinement at a requested chi") {
    const Grid g(100, M_PI);
    const ModelParams p = reference(0.0);
    ContinuationOptions opts;
    opts.chi_max = 8.0;
    const Branch br = continue_branch(p, g, 1, opts);
    const auto st = state_at_chi(br, p, g, 6.0);
    REQUIRE(st.has_value());
    CHECK(residual_norm(*st, p.with_chi(6.0), g) <= 1e-10);
    CHECK_FALSE(state_at_chi(br, p, g, 100.0).has_value());
}

TEST_CASE("diagnostics identities") {
    const Grid g(64, M_PI);
    const ModelParams p = reference(5.0);
    const Diagnostics d_eq = diagnostics(constant_state(g, p.ubar, p.vbar()), p, g);
    CHECK(d_eq.l1_mass == Catch::Approx(p.ubar * p.length));
    CHECK(d_eq.mass_identity_gap <= 1e-13);
    CHECK(d_eq.monotone_u);

    const double chi_h = bifurcation_value_discrete(reference(0.0), 1, g);
    const ModelParams pc = reference(1.2 * chi_h);
    const StateField mode = discrete_eigenmode(pc, 1, g);
    const NewtonResult r =
        newton_solve(axpy(constant_state(g, pc.ubar, pc.vbar()), 0.4, mode), pc, g);
    REQUIRE(r.converged);
    const Diagnostics d = diagnostics(r.state, pc, g);
    CHECK(d.amplitude > 0.1);
    CHECK(d.mass_identity_gap <= 10.0 * pc.length * std::max(r.residual_norm, 1e-14));
    // reflection symmetry of the scheme
    CHECK(residual_norm(reflect(r.state), pc, g) == Catch::Approx(r.residual_norm).margin(1e-12));
}

TEST_CASE("fixed-chi solution converges at O(h^2) under grid refinement") {
    const double chi = 5.0;
    const ModelParams p = reference(chi);
    StateField coarse;
    std::vector<StateField> sols;
    std::vector<Grid> grids;
    for (int n : {50, 100, 200}) {
        const Grid g(n, M_PI);
        StateField init(g.n_nodes(), 0.0, 0.0);
        if (sols.empty()) {
            const StateField mode = discrete_eigenmode(p, 1, g);
            init = axpy(constant_state(g, p.ubar, p.vbar()), 0.5, mode);
        } else {
            const Grid& gp = grids.back();
            const StateField& prev = sols.back();
            for (int i = 0; i < g.n_nodes(); ++i) {
                const double x = g.node(i);
                const int j = std::min(gp.n_cells - 1, static_cast<int>(x / gp.spacing()));
                const double t = (x - gp.node(j)) / gp.spacing();
                init.u[i] = (1 - t) * prev.u[j] + t * prev.u[j + 1];
                init.v[i] = (1 - t) * prev.v[j] + t * prev.v[j + 1];
            }
        }
        const NewtonResult r = newton_solve(init, p, g, {});
        REQUIRE(r.converged);
        sols.push_back(r.state);
        grids.push_back(g);
    }
    // compare on common nodes (every node of the coarser grid)
    auto diff = [&](const StateField& a, const Grid&, const StateField& b, int stride) {
        double w = 0.0;
        for (size_t i = 0; i < a.u.size(); ++i)
            w = std::max(w, std::abs(a.u[i] - b.u[stride * i]));
        return w;
    };
    const double e1 = diff(sols[0], grids[0], sols[1], 2);
    const double e2 = diff(sols[1], grids[1], sols[2], 2);
    CHECK(e1 / e2 == Catch::Approx(4.0).epsilon(0.15));
}
