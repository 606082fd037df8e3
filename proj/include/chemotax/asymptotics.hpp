#pragma once

// Large-chi and chi/d1-ratio experiments: boundary-spike metrics along
// chi sweeps, the reduced system obtained in the d1 -> infinity limit with
// a = chi/d1 fixed,
//   u' = a Phi(u,v) v',   d2 v'' - v + h(u) = 0,
// and a detector for two-level step profiles (which the dichotomy excludes).

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "chemotax/banded.hpp"
#include "chemotax/grid.hpp"
#include "chemotax/kinetics.hpp"
#include "chemotax/steady.hpp"
#include "chemotax/time_sim.hpp"

namespace chemotax {

struct SpikeMetrics {
    double peak_ratio = 1.0;   // u(0)/ubar after canonical (decreasing) orientation
    double half_width = 0.0;   // smallest x with u <= (u(0)+u(L))/2, linear interp; L if none
    double mass = 0.0;         // trapezoid integral of u
    double tail_sup = 0.0;     // max u on [L/2, L]
    bool oriented_flipped = false;  // input was increasing and has been reflected
    bool monotone = true;
};

/// Metrics of a (canonically decreasing) profile. Increasing inputs are
/// reflected and flagged; non-monotone inputs are measured as-is and flagged.
inline SpikeMetrics spike_metrics(const StateField& state, const ModelParams& p, const Grid& g) {
    check_dims(state, g);
    std::vector<double> u = state.u;
    SpikeMetrics m;
    if (u.back() > u.front()) {
        std::reverse(u.begin(), u.end());
        m.oriented_flipped = true;
    }
    m.monotone = detail::monotone_with_slack(u, 1e-12 * max_abs(u));
    m.peak_ratio = u.front() / p.ubar;
    m.mass = integrate(g, u);
    const double half_level = 0.5 * (u.front() + u.back());
    m.half_width = g.length;  // flat profiles never cross the half level
    for (int i = 1; i < g.n_nodes(); ++i) {
        if (u[i] < half_level) {
            const double x0 = g.node(i - 1), x1 = g.node(i);
            const double du = u[i - 1] - u[i];
            m.half_width = (du > 0) ? x0 + (u[i - 1] - half_level) / du * (x1 - x0) : x1;
            break;
        }
    }
    m.tail_sup = 0.0;
    for (int i = 0; i < g.n_nodes(); ++i)
        if (g.node(i) >= 0.5 * g.length) m.tail_sup = std::max(m.tail_sup, u[i]);
    return m;
}

struct SweepPoint {
    double chi = 0.0;
    SpikeMetrics metrics;
    StateField state;
    bool converged = false;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    bool completed = true;
    std::string failure;
};

/// Warm-started chi sweep: each schedule entry is solved by Newton from the
/// previous solution. `first_warm` seeds the first entry; without it the
/// constant state is used (schedule entries at or below the first bifurcation
/// then simply report the constant profile).
inline SweepResult sweep_chi(const ModelParams& p, const Grid& g,
                             const std::vector<double>& schedule,
                             const std::optional<StateField>& first_warm = std::nullopt,
                             double tol = 1e-10) {
    for (size_t i = 0; i + 1 < schedule.size(); ++i)
        if (!(schedule[i + 1] > schedule[i]))
            throw std::invalid_argument("sweep_chi: schedule must be strictly increasing");
    SweepResult res;
    StateField warm = first_warm ? *first_warm : constant_state(g, p.ubar, p.vbar());
    NewtonOptions no;
    no.tol = tol;
    no.max_iter = 50;
    for (double chi : schedule) {
        NewtonResult nr = newton_solve(warm, p.with_chi(chi), g, no);
        if (!nr.converged) {
            res.completed = false;
            res.failure = "Newton failed at chi = " + std::to_string(chi) + ": " + nr.message;
            break;
        }
        warm = nr.state;
        SweepPoint pt;
        pt.chi = chi;
        pt.state = nr.state;
        pt.metrics = spike_metrics(nr.state, p, g);
        pt.converged = true;
        res.points.push_back(std::move(pt));
    }
    return res;
}

/// Produces a single-boundary-spike state at chi_seed by evolving a one-sided
/// positive bump (zero tail, so the far boundary cannot nucleate a second
/// spike) and Newton-refining the result.
inline std::optional<StateField> seed_spike_state(const ModelParams& p, const Grid& g,
                                                  double chi_seed, double t_evolve = 4.0,
                                                  double tol = 1e-10) {
    const ModelParams pc = p.with_chi(chi_seed);
    StateField s(g.n_nodes(), 0.0, 0.0);
    const double w = 0.11 * g.length;
    for (int i = 0; i < g.n_nodes(); ++i) {
        const double x = g.node(i);
        const double bump = (x < 0.38 * g.length) ? 3.0 * p.ubar * std::exp(-(x / w) * (x / w)) : 0.0;
        s.u[i] = bump;
        s.v[i] = p.kinetics.h(bump);
    }
    double t = 0.0;
    while (t < t_evolve) {
        const double dt = std::min(0.9 * advective_dt_bound(s, pc, g), 2e-4 / p.ubar);
        s = step_semi_implicit(s, pc, g, dt);
        t += dt;
    }
    NewtonOptions no;
    no.tol = tol;
    no.max_iter = 60;
    NewtonResult nr = newton_solve(s, pc, g, no);
    if (!nr.converged) return std::nullopt;
    if (nr.state.u[0] < nr.state.u[g.n_cells]) return std::nullopt;  // wrong orientation
    double amp = 0.0;
    for (double u : nr.state.u) amp = std::max(amp, std::abs(u - p.ubar));
    if (amp < 0.05 * p.ubar) return std::nullopt;  // fell back to the constant state
    return nr.state;
}

/// Full spike sweep: seeds the single-boundary-spike family by short time
/// evolution at a mid-range chi (near-onset seeding is unreliable: the
/// evolution attractor there need not be the monotone family), warm-marches
/// down to the first schedule entry, then sweeps the schedule upward.
inline SweepResult spike_sweep(const ModelParams& p, const Grid& g,
                               const std::vector<double>& schedule, double tol = 1e-10) {
    SweepResult res;
    if (schedule.empty()) return res;
    const double chi1 = bifurcation_value_discrete(p, 1, g);
    const double chi_seed = std::clamp(3.0 * chi1, schedule.front(), schedule.back());
    auto seed = seed_spike_state(p, g, chi_seed, 4.0, tol);
    if (!seed) {
        res.completed = false;
        res.failure = "spike seeding failed at chi = " + std::to_string(chi_seed);
        return res;
    }
    StateField warm = *seed;
    NewtonOptions no;
    no.tol = tol;
    no.max_iter = 50;
    for (double c = chi_seed; c > schedule.front();) {
        c = std::max(c - 0.25, schedule.front());
        const NewtonResult nr = newton_solve(warm, p.with_chi(c), g, no);
        if (!nr.converged) {
            res.completed = false;
            res.failure = "warm-start march failed at chi = " + std::to_string(c);
            return res;
        }
        warm = nr.state;
    }
    return sweep_chi(p, g, schedule, warm, tol);
}

/// Max-norm residual of the reduced system at ratio a = chi/d1: first-order
/// u-equation at half-nodes, v-equation at nodes.
inline double limit_residual(const StateField& s, double ratio_a, const ModelParams& p,
                             const Grid& g) {
    check_dims(s, g);
    const double h = g.spacing();
    const int n = g.n_nodes();
    double worst = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
        const double u_half = 0.5 * (s.u[i] + s.u[i + 1]);
        const double v_half = 0.5 * (s.v[i] + s.v[i + 1]);
        const double r = (s.u[i + 1] - s.u[i]) / h -
                         ratio_a * p.kinetics.phi(u_half, v_half) * (s.v[i + 1] - s.v[i]) / h;
        worst = std::max(worst, std::abs(r));
    }
    for (int i = 0; i < n; ++i) {
        const double m = g.weight(i);
        const double jr = (i + 1 < n) ? p.d2 * (s.v[i + 1] - s.v[i]) / h : 0.0;
        const double jl = (i > 0) ? p.d2 * (s.v[i] - s.v[i - 1]) / h : 0.0;
        const double r = (jr - jl) / m - s.v[i] + p.kinetics.h(s.u[i]);
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

struct LimitSolution {
    double ratio_a = 0.0;
    StateField state;
    double residual_norm = 0.0;
    double log_c = 0.0;  // u = exp(a v + log_c)
    bool converged = false;
    std::string message;
};

/// Reduced-system solver for linear kinetics. For Phi = u the first-order
/// equation integrates to u = C exp(a v), so the problem collapses to the
/// scalar Neumann problem d2 v'' - v + beta C exp(a v) = 0 with C fixed by
/// the prescribed mass of u. Solved by Newton on v with an outer secant
/// iteration on log C, from the constant profile or from a caller-supplied
/// v guess. Nonconstant solutions are not guaranteed to exist; failure is
/// reported, not masked.
inline LimitSolution solve_limit_linear(double ratio_a, double mass_m, const ModelParams& p,
                                        const Grid& g, double tol = 1e-12,
                                        const std::optional<std::vector<double>>& v_init =
                                            std::nullopt) {
    if (p.kinetics.family() != Kinetics::Family::Linear)
        throw std::invalid_argument("solve_limit_linear: linear kinetics required");
    if (ratio_a < 0.0 || !(mass_m > 0.0))
        throw std::invalid_argument("solve_limit_linear: need a >= 0 and positive mass");
    const double beta = p.kinetics.beta();
    const int n = g.n_nodes();
    const double h = g.spacing();
    LimitSolution sol;
    sol.ratio_a = ratio_a;

    const double u_ref = mass_m / g.length;
    // constant solution as the default seed: v = beta u, u = C e^{a v}
    double log_c = std::log(u_ref) - ratio_a * beta * u_ref;
    std::vector<double> v(n, beta * u_ref);
    if (v_init) {
        if (static_cast<int>(v_init->size()) != n)
            throw std::invalid_argument("solve_limit_linear: v_init size mismatch");
        v = *v_init;
    }

    auto mass_of = [&](const std::vector<double>& vv, double lc) {
        double mass = 0.0;
        for (int i = 0; i < n; ++i) mass += g.weight(i) * std::exp(ratio_a * vv[i] + lc);
        return mass;
    };
    auto v_newton = [&](std::vector<double>& vv, double lc) -> bool {
        for (int it = 0; it < 60; ++it) {
            std::vector<double> r(n, 0.0);
            double rn = 0.0;
            for (int i = 0; i < n; ++i) {
                const double m = g.weight(i);
                const double jr = (i + 1 < n) ? p.d2 * (vv[i + 1] - vv[i]) / h : 0.0;
                const double jl = (i > 0) ? p.d2 * (vv[i] - vv[i - 1]) / h : 0.0;
                r[i] = (jr - jl) / m - vv[i] + beta * std::exp(ratio_a * vv[i] + lc);
                rn = std::max(rn, std::abs(r[i]));
            }
            if (rn <= tol) return true;
            std::vector<double> lo(n, 0.0), di(n, 0.0), up(n, 0.0);
            for (int i = 0; i < n; ++i) {
                const double m = g.weight(i);
                di[i] = -1.0 + beta * ratio_a * std::exp(ratio_a * vv[i] + lc);
                if (i + 1 < n) {
                    di[i] -= p.d2 / (h * m);
                    up[i] = p.d2 / (h * m);
                }
                if (i > 0) {
                    di[i] -= p.d2 / (h * m);
                    lo[i] = p.d2 / (h * m);
                }
            }
            for (auto& x : r) x = -x;
            solve_tridiagonal(lo, di, up, r);
            for (int i = 0; i < n; ++i) vv[i] += r[i];
            bool fin = true;
            for (double x : vv) fin = fin && std::isfinite(x);
            if (!fin) return false;
        }
        return false;
    };

    // outer secant on log C matching the prescribed mass
    double lc0 = log_c, lc1 = log_c;
    if (!v_newton(v, lc0)) {
        sol.message = "inner Newton failed from the initial seed";
        return sol;
    }
    double m0 = mass_of(v, lc0) - mass_m;
    if (std::abs(m0) > 1e-13 * mass_m) {
        lc1 = lc0 - 0.05;
        std::vector<double> v1 = v;
        if (!v_newton(v1, lc1)) {
            sol.message = "inner Newton failed during secant start";
            return sol;
        }
        double m1 = mass_of(v1, lc1) - mass_m;
        for (int it = 0; it < 60 && std::abs(m1) > 1e-13 * mass_m; ++it) {
            if (m1 == m0) break;
            const double lc2 = lc1 - m1 * (lc1 - lc0) / (m1 - m0);
            lc0 = lc1;
            m0 = m1;
            lc1 = lc2;
            if (!v_newton(v1, lc1)) {
                sol.message = "inner Newton diverged during secant on C";
                return sol;
            }
            m1 = mass_of(v1, lc1) - mass_m;
        }
        if (std::abs(m1) > 1e-10 * mass_m) {
            sol.message = "mass constraint not met";
            return sol;
        }
        v = v1;
    }
    sol.log_c = lc1;
    sol.state = StateField(n, 0.0, 0.0);
    for (int i = 0; i < n; ++i) {
        sol.state.v[i] = v[i];
        sol.state.u[i] = std::exp(ratio_a * v[i] + lc1);
    }
    sol.residual_norm = limit_residual(sol.state, ratio_a, p, g);
    sol.converged = true;
    return sol;
}

struct StepExclusionReport {
    bool in_band = false;   // intermediate mass level in (0.1, 0.9) ubar
    double level = 0.0;     // u* = mass/L
    double rel_l1_distance = 1.0;
    bool flagged = false;   // profile within 10% of a two-level step: excluded shape
};

/// Tests proximity (relative L1, threshold 10%) of u to the two-level step
/// profile u = ubar on [0, (u*/ubar) L], 0 beyond, where u* = mass/L.
/// Such profiles are excluded by the large-chi dichotomy, so a flag here
/// points at either a wrong state or a genuine inconsistency.
inline StepExclusionReport step_exclusion_check(const StateField& s, const ModelParams& p,
                                                const Grid& g) {
    StepExclusionReport rep;
    const double mass = integrate(g, s.u);
    rep.level = mass / g.length;
    rep.in_band = rep.level > 0.1 * p.ubar && rep.level < 0.9 * p.ubar;
    if (!rep.in_band) return rep;
    const double x_jump = rep.level / p.ubar * g.length;
    double dist = 0.0;
    for (int i = 0; i < g.n_nodes(); ++i) {
        const double stepv = (g.node(i) <= x_jump) ? p.ubar : 0.0;
        dist += g.weight(i) * std::abs(s.u[i] - stepv);
    }
    rep.rel_l1_distance = dist / mass;
    rep.flagged = rep.rel_l1_distance <= 0.10;
    return rep;
}

}  // namespace chemotax
