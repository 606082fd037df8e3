#pragma once

// Stationary solver for the chemotaxis system
//   (d1 u' - chi Phi(u,v) v')' + (ubar - u) u = 0
//   d2 v'' - v + h(u) = 0,     u' = v' = 0 at x = 0, L
// on the closed uniform grid. The discretization is a conservative
// finite-volume scheme: fluxes at half-nodes with arithmetic-mean Phi,
// zero boundary fluxes, reactions added pointwise with trapezoid cell
// measures (h/2 at the end nodes). The flux part therefore telescopes to
// zero under the trapezoid weights, which makes the balance identity
// ubar*int(u) = int(u^2) hold at solver tolerance on every converged state.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "chemotax/banded.hpp"
#include "chemotax/grid.hpp"
#include "chemotax/kinetics.hpp"
#include "chemotax/linear_analysis.hpp"

namespace chemotax {

inline constexpr int kBandLo = 3;
inline constexpr int kBandUp = 3;

inline void check_dims(const StateField& s, const Grid& g) {
    if (s.n_nodes() != g.n_nodes() || static_cast<int>(s.v.size()) != g.n_nodes())
        throw std::invalid_argument("state dimensions do not match grid");
}

/// Residual, interleaved as (Ru_0, Rv_0, ..., Ru_N, Rv_N).
inline std::vector<double> residual(const StateField& s, const ModelParams& p, const Grid& g) {
    check_dims(s, g);
    const int n = g.n_nodes();
    const double h = g.spacing();
    const Kinetics& kin = p.kinetics;
    std::vector<double> r(2 * n, 0.0);

    std::vector<double> ju(n - 1), jv(n - 1);
    for (int i = 0; i + 1 < n; ++i) {
        const double phi_half = 0.5 * (kin.phi(s.u[i], s.v[i]) + kin.phi(s.u[i + 1], s.v[i + 1]));
        const double du = (s.u[i + 1] - s.u[i]) / h;
        const double dv = (s.v[i + 1] - s.v[i]) / h;
        ju[i] = p.d1 * du - p.chi * phi_half * dv;
        jv[i] = p.d2 * dv;
    }
    for (int i = 0; i < n; ++i) {
        const double m = g.weight(i);
        const double jr_u = (i + 1 < n) ? ju[i] : 0.0;
        const double jl_u = (i > 0) ? ju[i - 1] : 0.0;
        const double jr_v = (i + 1 < n) ? jv[i] : 0.0;
        const double jl_v = (i > 0) ? jv[i - 1] : 0.0;
        r[2 * i] = (jr_u - jl_u) / m + (p.ubar - s.u[i]) * s.u[i];
        r[2 * i + 1] = (jr_v - jl_v) / m - s.v[i] + kin.h(s.u[i]);
    }
    return r;
}

inline double residual_norm(const StateField& s, const ModelParams& p, const Grid& g) {
    return max_abs(residual(s, p, g));
}

/// Analytic Jacobian of the discrete residual (not a discretization of the
/// continuum linearization). Bandwidth 3 after interleaving.
inline BandedMatrix jacobian(const StateField& s, const ModelParams& p, const Grid& g) {
    check_dims(s, g);
    const int n = g.n_nodes();
    const double h = g.spacing();
    const Kinetics& kin = p.kinetics;
    BandedMatrix J(2 * n, kBandLo, kBandUp);

    for (int i = 0; i + 1 < n; ++i) {
        const double phi_l = kin.phi(s.u[i], s.v[i]);
        const double phi_r = kin.phi(s.u[i + 1], s.v[i + 1]);
        const double phi_half = 0.5 * (phi_l + phi_r);
        const double dv = (s.v[i + 1] - s.v[i]) / h;
        // d(flux_u)/d(unknowns at nodes i, i+1)
        const double f_ul = -p.d1 / h - p.chi * 0.5 * kin.phi_u(s.u[i], s.v[i]) * dv;
        const double f_ur = p.d1 / h - p.chi * 0.5 * kin.phi_u(s.u[i + 1], s.v[i + 1]) * dv;
        const double f_vl = -p.chi * (0.5 * kin.phi_v(s.u[i], s.v[i]) * dv - phi_half / h);
        const double f_vr = -p.chi * (0.5 * kin.phi_v(s.u[i + 1], s.v[i + 1]) * dv + phi_half / h);
        const double g_vl = -p.d2 / h;
        const double g_vr = p.d2 / h;

        const double ml = g.weight(i), mr = g.weight(i + 1);
        const int ru_l = 2 * i, rv_l = 2 * i + 1, ru_r = 2 * (i + 1), rv_r = 2 * (i + 1) + 1;
        const int cu_l = 2 * i, cv_l = 2 * i + 1, cu_r = 2 * (i + 1), cv_r = 2 * (i + 1) + 1;
        // +flux/m on the left node's residual, -flux/m on the right's
        J.add(ru_l, cu_l, f_ul / ml);
        J.add(ru_l, cu_r, f_ur / ml);
        J.add(ru_l, cv_l, f_vl / ml);
        J.add(ru_l, cv_r, f_vr / ml);
        J.add(ru_r, cu_l, -f_ul / mr);
        J.add(ru_r, cu_r, -f_ur / mr);
        J.add(ru_r, cv_l, -f_vl / mr);
        J.add(ru_r, cv_r, -f_vr / mr);
        J.add(rv_l, cv_l, g_vl / ml);
        J.add(rv_l, cv_r, g_vr / ml);
        J.add(rv_r, cv_l, -g_vl / mr);
        J.add(rv_r, cv_r, -g_vr / mr);
    }
    for (int i = 0; i < n; ++i) {
        J.add(2 * i, 2 * i, p.ubar - 2.0 * s.u[i]);
        J.add(2 * i + 1, 2 * i + 1, -1.0);
        J.add(2 * i + 1, 2 * i, kin.h1(s.u[i]));
    }
    return J;
}

/// d(residual)/d(chi): only the chemotactic flux depends on chi.
inline std::vector<double> residual_chi_derivative(const StateField& s, const ModelParams& p,
                                                   const Grid& g) {
    const int n = g.n_nodes();
    const double h = g.spacing();
    std::vector<double> r(2 * n, 0.0), jflux(n - 1);
    for (int i = 0; i + 1 < n; ++i) {
        const double phi_half =
            0.5 * (p.kinetics.phi(s.u[i], s.v[i]) + p.kinetics.phi(s.u[i + 1], s.v[i + 1]));
        jflux[i] = -phi_half * (s.v[i + 1] - s.v[i]) / h;
    }
    for (int i = 0; i < n; ++i) {
        const double jr = (i + 1 < n) ? jflux[i] : 0.0;
        const double jl = (i > 0) ? jflux[i - 1] : 0.0;
        r[2 * i] = (jr - jl) / g.weight(i);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Newton solver
// ---------------------------------------------------------------------------

struct NewtonOptions {
    double tol = 1e-10;   // residual max-norm
    int max_iter = 25;
    int max_halvings = 8;
};

struct NewtonResult {
    bool converged = false;
    bool rank_deficient = false;
    StateField state;
    int iterations = 0;
    double residual_norm = std::numeric_limits<double>::infinity();
    std::vector<double> history;
    std::string message;
};

inline StateField unpack(const std::vector<double>& z, int n) {
    StateField s(n, 0.0, 0.0);
    for (int i = 0; i < n; ++i) {
        s.u[i] = z[2 * i];
        s.v[i] = z[2 * i + 1];
    }
    return s;
}

inline NewtonResult newton_solve(const StateField& initial, const ModelParams& p, const Grid& g,
                                 NewtonOptions opts = {}) {
    NewtonResult res;
    res.state = initial;
    if (!initial.all_finite()) {
        res.message = "initial state not finite";
        return res;
    }
    const int n = g.n_nodes();
    for (int it = 0; it <= opts.max_iter; ++it) {
        std::vector<double> r = residual(res.state, p, g);
        const double rn = max_abs(r);
        res.history.push_back(rn);
        res.residual_norm = rn;
        res.iterations = it;
        if (rn <= opts.tol) {
            res.converged = true;
            return res;
        }
        if (it == opts.max_iter) break;
        BandedMatrix J = jacobian(res.state, p, g);
        if (!J.factor()) {
            res.rank_deficient = true;
            res.message = "singular Jacobian at column " + std::to_string(J.singular_column());
            return res;
        }
        std::vector<double> d(2 * n);
        for (int i = 0; i < 2 * n; ++i) d[i] = -r[i];
        J.solve(d);

        double lambda = 1.0;
        bool accepted = false;
        for (int hv = 0; hv <= opts.max_halvings; ++hv) {
            StateField trial = res.state;
            for (int i = 0; i < n; ++i) {
                trial.u[i] += lambda * d[2 * i];
                trial.v[i] += lambda * d[2 * i + 1];
            }
            if (trial.all_finite() && residual_norm(trial, p, g) < rn) {
                res.state = trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!accepted) {
            res.message = "line search stagnated";
            return res;
        }
    }
    res.message = "no convergence within iteration budget";
    return res;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct Diagnostics {
    double l1_mass = 0.0;
    double l2_norm_sq = 0.0;
    double min_u = 0.0, max_u = 0.0;
    double min_v = 0.0;
    bool monotone_u = false, monotone_v = false;
    double worst_monotone_gap_u = 0.0;  // largest slack-violating increment
    double newton_residual = 0.0;
    double amplitude = 0.0;  // max |u - ubar|
    double mass_identity_gap = 0.0;
    bool mass_bound_ok = true;
};

namespace detail {
inline bool monotone_with_slack(const std::vector<double>& f, double slack, double* worst = nullptr) {
    double worst_dec = 0.0, worst_inc = 0.0;
    for (size_t i = 0; i + 1 < f.size(); ++i) {
        const double d = f[i + 1] - f[i];
        worst_inc = std::max(worst_inc, d);
        worst_dec = std::max(worst_dec, -d);
    }
    const bool nonincreasing = worst_inc <= slack;
    const bool nondecreasing = worst_dec <= slack;
    if (worst) *worst = std::min(worst_inc, worst_dec);
    return nonincreasing || nondecreasing;
}
}  // namespace detail

inline Diagnostics diagnostics(const StateField& s, const ModelParams& p, const Grid& g) {
    Diagnostics d;
    d.l1_mass = integrate(g, s.u);
    std::vector<double> u2(s.u.size());
    for (size_t i = 0; i < s.u.size(); ++i) u2[i] = s.u[i] * s.u[i];
    d.l2_norm_sq = integrate(g, u2);
    d.min_u = *std::min_element(s.u.begin(), s.u.end());
    d.max_u = *std::max_element(s.u.begin(), s.u.end());
    d.min_v = *std::min_element(s.v.begin(), s.v.end());
    const double slack_u = 1e-12 * max_abs(s.u);
    const double slack_v = 1e-12 * max_abs(s.v);
    d.monotone_u = detail::monotone_with_slack(s.u, slack_u, &d.worst_monotone_gap_u);
    d.monotone_v = detail::monotone_with_slack(s.v, slack_v);
    d.newton_residual = residual_norm(s, p, g);
    double amp = 0.0;
    for (double u : s.u) amp = std::max(amp, std::abs(u - p.ubar));
    d.amplitude = amp;
    d.mass_identity_gap = std::abs(p.ubar * d.l1_mass - d.l2_norm_sq);
    d.mass_bound_ok = d.l1_mass <= p.ubar * p.length * (1.0 + 1e-8);
    return d;
}

// ---------------------------------------------------------------------------
// Discrete bifurcation structure
// ---------------------------------------------------------------------------

inline double bifurcation_value_discrete(const ModelParams& p, int k, const Grid& g) {
    if (k < 1) throw std::invalid_argument("bifurcation_value_discrete: k >= 1 required");
    return bifurcation_value_at(p, laplace_eigenvalue_discrete(p, k, g));
}

inline double mode_ratio_discrete(const ModelParams& p, int k, const Grid& g) {
    return mode_ratio_at(p, laplace_eigenvalue_discrete(p, k, g));
}

/// Kernel direction of the discrete linearization at (ubar, vbar), chi_k^h:
/// (Q_k^h cos(k pi x/L), cos(k pi x/L)) sampled at the nodes.
inline StateField discrete_eigenmode(const ModelParams& p, int k, const Grid& g) {
    const double q = mode_ratio_discrete(p, k, g);
    StateField s(g.n_nodes(), 0.0, 0.0);
    const auto c = cosine_mode(g, k);
    for (int i = 0; i < g.n_nodes(); ++i) {
        s.u[i] = q * c[i];
        s.v[i] = c[i];
    }
    return s;
}

/// Sign of det of the discrete Jacobian at the constant state, with magnitude
/// in log form (the raw determinant overflows for fine grids).
inline std::pair<int, double> constant_state_det(const ModelParams& p, const Grid& g) {
    StateField eq = constant_state(g, p.ubar, p.vbar());
    BandedMatrix J = jacobian(eq, p, g);
    J.factor();
    return {J.det_sign(), J.log_abs_det()};
}

/// Bisection for the chi at which the discrete linearization at the constant
/// state is singular near mode k. The result must match the closed form
/// bifurcation_value_discrete to 1e-10 relative; this is asserted.
inline double detect_bifurcation(const ModelParams& p, const Grid& g, int k, double bracket_lo = 0.0,
                                 double bracket_hi = 0.0) {
    if (k < 1) throw std::invalid_argument("detect_bifurcation: k >= 1 required");
    const double chi_closed = bifurcation_value_discrete(p, k, g);
    double lo = bracket_lo, hi = bracket_hi;
    if (lo == 0.0 && hi == 0.0) {
        lo = 0.98 * chi_closed;
        hi = 1.02 * chi_closed;
    }
    int slo = constant_state_det(p.with_chi(lo), g).first;
    int shi = constant_state_det(p.with_chi(hi), g).first;
    if (slo == shi || slo == 0 || shi == 0)
        throw std::runtime_error("detect_bifurcation: no determinant sign change in bracket");
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        const int sm = constant_state_det(p.with_chi(mid), g).first;
        if (sm == 0) return mid;
        if (sm == slo)
            lo = mid;
        else
            hi = mid;
    }
    const double chi_h = 0.5 * (lo + hi);
    if (std::abs(chi_h - chi_closed) > 1e-10 * chi_closed)
        throw std::runtime_error("detect_bifurcation: refined root disagrees with closed form");
    return chi_h;
}

// ---------------------------------------------------------------------------
// Bordered linear algebra (block elimination with one refinement pass)
// ---------------------------------------------------------------------------

namespace detail {

struct BorderedSolve {
    // Solves [J, fchi; border_z^T (weighted), border_chi] (dz, dchi) = (rhs_z, rhs_s).
    // border_z enters through the weighted inner product sum_i w_i border_z_i dz_i.
    static bool run(BandedMatrix& J_factored, const std::vector<double>& fchi,
                    const std::vector<double>& border_w,  // already includes weights
                    double border_chi, const std::vector<double>& rhs_z, double rhs_s,
                    std::vector<double>& dz, double& dchi) {
        const size_t n = fchi.size();
        std::vector<double> y1 = rhs_z, y2 = fchi;
        J_factored.solve(y1);
        J_factored.solve(y2);
        double b_y1 = 0.0, b_y2 = 0.0;
        for (size_t i = 0; i < n; ++i) {
            b_y1 += border_w[i] * y1[i];
            b_y2 += border_w[i] * y2[i];
        }
        const double denom = border_chi - b_y2;
        if (denom == 0.0 || !std::isfinite(denom)) return false;
        dchi = (rhs_s - b_y1) / denom;
        dz.resize(n);
        for (size_t i = 0; i < n; ++i) dz[i] = y1[i] - dchi * y2[i];
        return true;
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Branch switching and pseudo-arclength continuation
// ---------------------------------------------------------------------------

struct BranchPoint {
    double arclength = 0.0;  // cumulative pseudo-arclength from onset
    double chi = 0.0;
    StateField state;
    Diagnostics diag;
    double sigma = 0.0;  // signed projection onto the onset kernel direction
};

enum class BranchTermination { ChiLimit, StepFailure, FoldDetected, UserStop };

struct Branch {
    int mode_k = 0;
    double chi_onset = 0.0;   // discrete bifurcation value chi_k^h
    double q_onset = 0.0;     // discrete mode ratio Q_k^h
    std::vector<BranchPoint> points;
    BranchTermination terminated_by = BranchTermination::UserStop;
    int fold_count = 0;
    std::vector<std::string> events;  // positivity/monotonicity violations on k=1, folds
};

struct ContinuationOptions {
    double chi_max = 20.0;
    double ds_init = 0.02;
    double ds_min = 1e-9;
    double ds_max = 0.25;
    double s0 = 0.0;          // initial kernel amplitude; 0 -> 1e-2 * ubar / Q_k
    int max_points = 5000;
    double newton_tol = 1e-10;
    int corrector_max_iter = 10;
    bool record_events = true;
};

namespace detail {

struct BranchWork {
    StateField mode;                 // discrete kernel direction
    std::vector<double> mode_w;      // interleaved, trapezoid-weighted, / |mode|_w^2
    double mode_norm_sq = 0.0;
    std::vector<double> eq;          // interleaved equilibrium
    Grid grid;
    ModelParams base;

    BranchWork(const ModelParams& p, int k, const Grid& g) : grid(g), base(p) {
        mode = discrete_eigenmode(p, k, g);
        const int n = g.n_nodes();
        mode_w.assign(2 * n, 0.0);
        eq.assign(2 * n, 0.0);
        const double vb = p.vbar();
        for (int i = 0; i < n; ++i) {
            const double w = g.weight(i);
            mode_norm_sq += w * (mode.u[i] * mode.u[i] + mode.v[i] * mode.v[i]);
            eq[2 * i] = p.ubar;
            eq[2 * i + 1] = vb;
        }
        for (int i = 0; i < n; ++i) {
            mode_w[2 * i] = g.weight(i) * mode.u[i] / mode_norm_sq;
            mode_w[2 * i + 1] = g.weight(i) * mode.v[i] / mode_norm_sq;
        }
    }

    double sigma(const StateField& s) const {
        double r = 0.0;
        for (int i = 0; i < grid.n_nodes(); ++i) {
            r += mode_w[2 * i] * (s.u[i] - base.ubar) + mode_w[2 * i + 1] * (s.v[i] - base.vbar());
        }
        return r;
    }
};

}  // namespace detail

/// Corrector step shared by branch switching (phase condition) and arclength
/// continuation (hyperplane condition). border_w must carry quadrature weights.
inline bool bordered_newton(StateField& s, double& chi, const ModelParams& p, const Grid& g,
                            const std::vector<double>& border_w, double border_chi,
                            const std::function<double(const StateField&, double)>& constraint,
                            double tol, int max_iter) {
    const int n = g.n_nodes();
    bool converged = false;
    for (int it = 0; it < max_iter; ++it) {
        const ModelParams pc = p.with_chi(chi);
        std::vector<double> r = residual(s, pc, g);
        const double gval = constraint(s, chi);
        const bool ok = std::max(max_abs(r), std::abs(gval)) <= tol;
        BandedMatrix J = jacobian(s, pc, g);
        if (!J.factor()) return converged;  // singular exactly at the point: give up here
        std::vector<double> fchi = residual_chi_derivative(s, pc, g);
        std::vector<double> rhs(2 * n);
        for (int i = 0; i < 2 * n; ++i) rhs[i] = -r[i];
        std::vector<double> dz;
        double dchi = 0.0;
        if (!detail::BorderedSolve::run(J, fchi, border_w, border_chi, rhs, -gval, dz, dchi))
            return converged;
        for (int i = 0; i < n; ++i) {
            s.u[i] += dz[2 * i];
            s.v[i] += dz[2 * i + 1];
        }
        chi += dchi;
        if (!s.all_finite() || !std::isfinite(chi)) return false;
        if (ok) return true;  // converged last iteration; this one polished the state
        converged = false;
    }
    // final convergence check after the iteration budget
    const ModelParams pc = p.with_chi(chi);
    return std::max(residual_norm(s, pc, g), std::abs(constraint(s, chi))) <= tol;
}

/// First nonconstant point on the mode-k branch: predictor along the discrete
/// kernel at amplitude s0, corrector with chi freed and the phase condition
/// <state - equilibrium, mode> = s0 |mode|^2. s0 = NaN picks the default
/// 1e-2 * ubar / Q_k; s0 = 0 returns the equilibrium unchanged.
inline BranchPoint branch_switch(const ModelParams& p, const Grid& g, int k,
                                 double s0 = std::numeric_limits<double>::quiet_NaN(),
                                 double tol = 1e-10) {
    const SimplicityCheck simp = check_simplicity(p, k, 2 * k + 8);
    if (!simp.simple)
        throw std::runtime_error("branch_switch: kernel not simple (chi_k = chi_j at j = " +
                                 std::to_string(simp.offending_j) + ")");
    detail::BranchWork w(p, k, g);
    const double q = mode_ratio_discrete(p, k, g);
    if (std::isnan(s0)) s0 = 1e-2 * p.ubar / q;
    const double chi_h = bifurcation_value_discrete(p, k, g);

    StateField s = constant_state(g, p.ubar, p.vbar());
    if (s0 == 0.0) {
        BranchPoint bp;
        bp.chi = chi_h;
        bp.state = s;
        bp.diag = diagnostics(s, p.with_chi(chi_h), g);
        return bp;
    }
    s = axpy(s, s0, w.mode);
    double chi = chi_h;
    auto phase = [&w, s0](const StateField& st, double) { return w.sigma(st) - s0; };
    if (!bordered_newton(s, chi, p, g, w.mode_w, 0.0, phase, tol, 40))
        throw std::runtime_error("branch_switch: corrector failed to converge");
    BranchPoint bp;
    bp.chi = chi;
    bp.state = s;
    bp.diag = diagnostics(s, p.with_chi(chi), g);
    bp.sigma = w.sigma(s);
    bp.arclength = 0.0;
    return bp;
}

namespace detail {

/// Tangent by the bordered solve [J, fchi; border] t = e_last, then weighted
/// normalization. Passing the previous tangent as border keeps orientation.
inline bool branch_tangent(const StateField& s, double chi, const ModelParams& p, const Grid& g,
                           const std::vector<double>& border_w, double border_chi,
                           std::vector<double>& t_z, double& t_chi) {
    const int n = g.n_nodes();
    const ModelParams pc = p.with_chi(chi);
    BandedMatrix J = jacobian(s, pc, g);
    if (!J.factor()) return false;
    std::vector<double> fchi = residual_chi_derivative(s, pc, g);
    std::vector<double> rhs(2 * n, 0.0);
    if (!BorderedSolve::run(J, fchi, border_w, border_chi, rhs, 1.0, t_z, t_chi)) return false;
    double nrm = t_chi * t_chi;
    for (int i = 0; i < n; ++i)
        nrm += g.weight(i) * (t_z[2 * i] * t_z[2 * i] + t_z[2 * i + 1] * t_z[2 * i + 1]);
    nrm = std::sqrt(nrm);
    if (!(nrm > 0.0) || !std::isfinite(nrm)) return false;
    for (auto& x : t_z) x /= nrm;
    t_chi /= nrm;
    return true;
}

}  // namespace detail

/// Pseudo-arclength continuation of the mode-k branch from its onset.
/// Tangent predictor, bordered Newton corrector, adaptive step (double after
/// fast correction, halve on failure). Folds are traversed and counted.
inline Branch continue_branch(const ModelParams& p, const Grid& g, int k,
                              ContinuationOptions opts = {}) {
    Branch br;
    br.mode_k = k;
    br.chi_onset = bifurcation_value_discrete(p, k, g);
    br.q_onset = mode_ratio_discrete(p, k, g);
    detail::BranchWork w(p, k, g);
    const double s0 = (opts.s0 != 0.0 && !std::isnan(opts.s0)) ? opts.s0 : 1e-2 * p.ubar / br.q_onset;

    BranchPoint first = branch_switch(p, g, k, s0, opts.newton_tol);
    first.sigma = w.sigma(first.state);
    br.points.push_back(first);

    const int n = g.n_nodes();
    // initial tangent: border along the kernel direction, oriented away from onset
    std::vector<double> t_z;
    double t_chi = 0.0;
    if (!detail::branch_tangent(first.state, first.chi, p, g, w.mode_w, 0.0, t_z, t_chi)) {
        br.terminated_by = BranchTermination::StepFailure;
        br.events.push_back("tangent solve failed at onset");
        return br;
    }
    {
        double proj = 0.0;
        for (int i = 0; i < n; ++i)
            proj += g.weight(i) * (t_z[2 * i] * w.mode.u[i] + t_z[2 * i + 1] * w.mode.v[i]);
        if (proj * s0 < 0.0) {
            for (auto& x : t_z) x = -x;
            t_chi = -t_chi;
        }
    }

    double ds = opts.ds_init;
    StateField z = first.state;
    double chi = first.chi;
    double s_cum = 0.0;
    br.terminated_by = BranchTermination::UserStop;
    while (static_cast<int>(br.points.size()) < opts.max_points) {
        if (chi >= opts.chi_max) {
            br.terminated_by = BranchTermination::ChiLimit;
            break;
        }
        // predictor
        StateField zp = z;
        for (int i = 0; i < n; ++i) {
            zp.u[i] += ds * t_z[2 * i];
            zp.v[i] += ds * t_z[2 * i + 1];
        }
        double chip = chi + ds * t_chi;
        // corrector: hyperplane through the previous point with normal t
        std::vector<double> border_w(2 * n);
        for (int i = 0; i < n; ++i) {
            border_w[2 * i] = g.weight(i) * t_z[2 * i];
            border_w[2 * i + 1] = g.weight(i) * t_z[2 * i + 1];
        }
        const StateField z_ref = z;
        const double chi_ref = chi;
        auto plane = [&](const StateField& st, double c) {
            double acc = (c - chi_ref) * t_chi - ds;
            for (int i = 0; i < n; ++i)
                acc += border_w[2 * i] * (st.u[i] - z_ref.u[i]) +
                       border_w[2 * i + 1] * (st.v[i] - z_ref.v[i]);
            return acc;
        };
        bool ok = bordered_newton(zp, chip, p, g, border_w, t_chi, plane, opts.newton_tol,
                                  opts.corrector_max_iter);
        double amp = 0.0;
        for (double u : zp.u) amp = std::max(amp, std::abs(u - p.ubar));
        if (!ok || amp < 1e-8 * std::max(1.0, p.ubar)) {
            ds *= 0.5;  // corrector failed or fell back onto the constant branch
            if (ds < opts.ds_min) {
                br.terminated_by = BranchTermination::StepFailure;
                br.events.push_back("step size underflow at chi = " + std::to_string(chi));
                break;
            }
            continue;
        }
        std::vector<double> t_new;
        double t_chi_new = 0.0;
        if (!detail::branch_tangent(zp, chip, p, g, border_w, t_chi, t_new, t_chi_new)) {
            ds *= 0.5;
            if (ds < opts.ds_min) {
                br.terminated_by = BranchTermination::StepFailure;
                break;
            }
            continue;
        }
        if (t_chi_new * t_chi < 0.0 && std::abs(t_chi_new) > 1e-6 && std::abs(t_chi) > 1e-6) {
            ++br.fold_count;
            if (opts.record_events)
                br.events.push_back("fold in chi near " + std::to_string(chip));
        }
        z = zp;
        chi = chip;
        t_z = t_new;
        t_chi = t_chi_new;
        s_cum += ds;

        BranchPoint bp;
        bp.arclength = s_cum;
        bp.chi = chi;
        bp.state = z;
        bp.diag = diagnostics(z, p.with_chi(chi), g);
        bp.sigma = w.sigma(z);
        if (opts.record_events && k == 1) {
            if (!(bp.diag.min_u > 0.0) || !(bp.diag.min_v > 0.0))
                br.events.push_back("positivity violation at chi = " + std::to_string(chi));
            if (!bp.diag.monotone_u || !bp.diag.monotone_v)
                br.events.push_back("monotonicity violation at chi = " + std::to_string(chi) +
                                    " (worst increment " +
                                    std::to_string(bp.diag.worst_monotone_gap_u) + ")");
        }
        br.points.push_back(std::move(bp));
        ds = std::min(ds * 2.0, opts.ds_max);
    }
    if (static_cast<int>(br.points.size()) >= opts.max_points &&
        br.terminated_by == BranchTermination::UserStop)
        br.events.push_back("point budget reached");
    return br;
}

/// Quadratic least-squares fit of chi(sigma) over the first n_fit branch
/// points. Returns (c0, c1, c2) of chi = c0 + c1 s + c2 s^2 and sigma_max.
struct BranchOpeningFit {
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
    double sigma_max = 0.0;
    int n_used = 0;
};

inline BranchOpeningFit fit_branch_opening(const Branch& br, int n_fit = 10) {
    BranchOpeningFit f;
    const int n = std::min<int>(n_fit, static_cast<int>(br.points.size()));
    if (n < 3) return f;
    for (int i = 0; i < n; ++i) f.sigma_max = std::max(f.sigma_max, std::abs(br.points[i].sigma));
    if (!(f.sigma_max > 0.0)) return f;
    // normal equations in the scaled variable t = sigma/sigma_max
    long double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    long double b[3] = {0, 0, 0};
    for (int i = 0; i < n; ++i) {
        const long double t = br.points[i].sigma / f.sigma_max;
        const long double y = br.points[i].chi;
        const long double pw[3] = {1.0L, t, t * t};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) m[r][c] += pw[r] * pw[c];
            b[r] += pw[r] * y;
        }
    }
    // 3x3 Gaussian elimination
    for (int c = 0; c < 3; ++c) {
        int piv = c;
        for (int r = c + 1; r < 3; ++r)
            if (std::abs((double)m[r][c]) > std::abs((double)m[piv][c])) piv = r;
        std::swap(m[c], m[piv]);
        std::swap(b[c], b[piv]);
        for (int r = c + 1; r < 3; ++r) {
            const long double f2 = m[r][c] / m[c][c];
            for (int cc = c; cc < 3; ++cc) m[r][cc] -= f2 * m[c][cc];
            b[r] -= f2 * b[c];
        }
    }
    long double a[3];
    for (int r = 2; r >= 0; --r) {
        long double acc = b[r];
        for (int c = r + 1; c < 3; ++c) acc -= m[r][c] * a[c];
        a[r] = acc / m[r][r];
    }
    f.c0 = static_cast<double>(a[0]);
    f.c1 = static_cast<double>(a[1] / f.sigma_max);
    f.c2 = static_cast<double>(a[2] / (f.sigma_max * f.sigma_max));
    f.n_used = n;
    return f;
}

/// Newton-refines a state on the branch at exactly chi_target, warm-started
/// from the last branch segment crossing that value.
inline std::optional<StateField> state_at_chi(const Branch& br, const ModelParams& p, const Grid& g,
                                              double chi_target, double tol = 1e-10) {
    int seg = -1;
    for (int i = static_cast<int>(br.points.size()) - 1; i >= 1; --i) {
        const double a = br.points[i - 1].chi, b = br.points[i].chi;
        if ((a <= chi_target && chi_target <= b) || (b <= chi_target && chi_target <= a)) {
            seg = i;
            break;
        }
    }
    if (seg < 0) return std::nullopt;
    const auto& p0 = br.points[seg - 1];
    const auto& p1 = br.points[seg];
    const double t = (p1.chi != p0.chi) ? (chi_target - p0.chi) / (p1.chi - p0.chi) : 0.0;
    StateField guess = p0.state;
    for (int i = 0; i < guess.n_nodes(); ++i) {
        guess.u[i] += t * (p1.state.u[i] - p0.state.u[i]);
        guess.v[i] += t * (p1.state.v[i] - p0.state.v[i]);
    }
    NewtonOptions no;
    no.tol = tol;
    NewtonResult r = newton_solve(guess, p.with_chi(chi_target), g, no);
    if (!r.converged) return std::nullopt;
    return r.state;
}

}  // namespace chemotax
