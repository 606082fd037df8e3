#pragma once

// Time integration of the parabolic system
//   u_t = (d1 u' - chi Phi(u,v) v')' + (ubar - u) u
//   v_t = d2 v'' - v + h(u)
// used to probe stability of computed steady states and to exhibit pattern
// onset. Spatial terms reuse the steady solver's conservative discretization,
// so every root of the steady residual is an exact fixed point of both
// schemes.

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "chemotax/banded.hpp"
#include "chemotax/grid.hpp"
#include "chemotax/kinetics.hpp"
#include "chemotax/steady.hpp"

namespace chemotax {

enum class Scheme { SemiImplicit, FullyImplicit };

struct EvolutionConfig {
    double dt = 1e-3;
    double t_final = 50.0;
    Scheme scheme = Scheme::SemiImplicit;
    double perturb_eps = 1e-3;
    int sample_every = 10;  // record cadence for trajectory summaries
};

struct StepSizeError : std::runtime_error {
    double suggested_dt;
    StepSizeError(double dt, double bound)
        : std::runtime_error("time step " + std::to_string(dt) +
                             " violates the advective bound; suggested dt <= " +
                             std::to_string(bound)),
          suggested_dt(bound) {}
};

/// Largest semi-implicit step allowed by the explicit chemotactic flux:
/// 0.4 h / max_half |chi| Phi/u |v'|  (Phi/u is bounded by condition c1).
inline double advective_dt_bound(const StateField& s, const ModelParams& p, const Grid& g) {
    const double h = g.spacing();
    double speed = 0.0;
    for (int i = 0; i + 1 < g.n_nodes(); ++i) {
        const double phi_half =
            0.5 * (p.kinetics.phi(s.u[i], s.v[i]) + p.kinetics.phi(s.u[i + 1], s.v[i + 1]));
        const double u_half = 0.5 * (s.u[i] + s.u[i + 1]);
        const double dv = std::abs(s.v[i + 1] - s.v[i]) / h;
        const double ratio = std::abs(phi_half) / std::max(std::abs(u_half), 1e-30);
        speed = std::max(speed, std::abs(p.chi) * std::min(ratio, p.kinetics.bound_c1()) * dv);
    }
    return 0.4 * h / std::max(speed, 1e-300);
}

namespace detail {

/// One implicit solve (I*c0 - dt*D*Lap) w = rhs with mirrored Neumann
/// structure; the operator rows carry the trapezoid cell measures, matching
/// the steady residual.
inline void implicit_diffusion_solve(std::vector<double>& rhs, double c0, double dt_D,
                                     const Grid& g) {
    const int n = g.n_nodes();
    const double h = g.spacing();
    std::vector<double> lo(n, 0.0), di(n, 0.0), up(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const double m = g.weight(i);
        di[i] = c0;
        if (i + 1 < n) {
            di[i] += dt_D / (h * m);
            up[i] = -dt_D / (h * m);
        }
        if (i > 0) {
            di[i] += dt_D / (h * m);
            lo[i] = -dt_D / (h * m);
        }
    }
    solve_tridiagonal(lo, di, up, rhs);
}

inline std::vector<double> chemo_divergence(const StateField& s, const ModelParams& p,
                                            const Grid& g) {
    const int n = g.n_nodes();
    const double h = g.spacing();
    std::vector<double> flux(n - 1), out(n);
    for (int i = 0; i + 1 < n; ++i) {
        const double phi_half =
            0.5 * (p.kinetics.phi(s.u[i], s.v[i]) + p.kinetics.phi(s.u[i + 1], s.v[i + 1]));
        flux[i] = -p.chi * phi_half * (s.v[i + 1] - s.v[i]) / h;
    }
    for (int i = 0; i < n; ++i) {
        const double jr = (i + 1 < n) ? flux[i] : 0.0;
        const double jl = (i > 0) ? flux[i - 1] : 0.0;
        out[i] = (jr - jl) / g.weight(i);
    }
    return out;
}

}  // namespace detail

/// One step of the IMEX scheme: diffusion (u) and diffusion+decay (v)
/// implicit, chemotactic divergence and kinetic terms explicit.
inline StateField step_semi_implicit(const StateField& s, const ModelParams& p, const Grid& g,
                                     double dt) {
    check_dims(s, g);
    const double bound = advective_dt_bound(s, p, g);
    if (dt > bound) throw StepSizeError(dt, bound);
    const int n = g.n_nodes();
    const auto adv = detail::chemo_divergence(s, p, g);
    std::vector<double> ru(n), rv(n);
    for (int i = 0; i < n; ++i) {
        ru[i] = s.u[i] + dt * (adv[i] + (p.ubar - s.u[i]) * s.u[i]);
        rv[i] = s.v[i] + dt * p.kinetics.h(s.u[i]);
    }
    detail::implicit_diffusion_solve(ru, 1.0, dt * p.d1, g);
    detail::implicit_diffusion_solve(rv, 1.0 + dt, dt * p.d2, g);
    StateField out(n, 0.0, 0.0);
    out.u = std::move(ru);
    out.v = std::move(rv);
    return out;
}

/// One backward-Euler step: Newton on x - x_prev - dt F(x) = 0 reusing the
/// steady Jacobian plus the mass term.
inline StateField step_fully_implicit(const StateField& s, const ModelParams& p, const Grid& g,
                                      double dt, double tol = 1e-12) {
    check_dims(s, g);
    const int n = g.n_nodes();
    StateField x = s;
    for (int it = 0; it < 30; ++it) {
        std::vector<double> f = residual(x, p, g);
        std::vector<double> gres(2 * n);
        double gn = 0.0;
        for (int i = 0; i < n; ++i) {
            gres[2 * i] = x.u[i] - s.u[i] - dt * f[2 * i];
            gres[2 * i + 1] = x.v[i] - s.v[i] - dt * f[2 * i + 1];
        }
        for (double r : gres) gn = std::max(gn, std::abs(r));
        if (gn <= tol * std::max(1.0, max_abs(s.u))) return x;
        BandedMatrix J = jacobian(x, p, g);
        // form I - dt*J in band storage
        BandedMatrix A(2 * n, kBandLo, kBandUp);
        for (int i = 0; i < 2 * n; ++i) {
            for (int j = std::max(0, i - kBandLo); j <= std::min(2 * n - 1, i + kBandUp); ++j)
                A.at(i, j) = (i == j ? 1.0 : 0.0) - dt * J.at(i, j);
        }
        if (!A.factor()) throw std::runtime_error("fully implicit step: singular system");
        for (auto& r : gres) r = -r;
        A.solve(gres);
        for (int i = 0; i < n; ++i) {
            x.u[i] += gres[2 * i];
            x.v[i] += gres[2 * i + 1];
        }
    }
    throw std::runtime_error("fully implicit step: Newton did not converge");
}

inline StateField step(const StateField& s, const ModelParams& p, const Grid& g, double dt,
                       Scheme scheme) {
    return scheme == Scheme::SemiImplicit ? step_semi_implicit(s, p, g, dt)
                                          : step_fully_implicit(s, p, g, dt);
}

struct TrajectorySummary {
    std::vector<double> times;
    std::vector<double> norm_u;  // ||u - ubar||_inf
    std::vector<double> norm_v;  // ||v - vbar||_inf
    std::vector<double> min_u;
    std::vector<double> u_left;  // u(0)
    StateField final_state;
};

inline TrajectorySummary evolve(const StateField& initial, const ModelParams& p, const Grid& g,
                                const EvolutionConfig& cfg) {
    if (!(cfg.dt > 0.0) || cfg.t_final < cfg.dt)
        throw std::invalid_argument("evolve: need dt > 0 and t_final >= dt");
    TrajectorySummary tr;
    StateField s = initial;
    const double vb = p.vbar();
    const long steps = std::lround(cfg.t_final / cfg.dt);
    auto record = [&](double t) {
        double nu = 0.0, nv = 0.0, mu = s.u[0];
        for (double u : s.u) {
            nu = std::max(nu, std::abs(u - p.ubar));
            mu = std::min(mu, u);
        }
        for (double v : s.v) nv = std::max(nv, std::abs(v - vb));
        tr.times.push_back(t);
        tr.norm_u.push_back(nu);
        tr.norm_v.push_back(nv);
        tr.min_u.push_back(mu);
        tr.u_left.push_back(s.u[0]);
    };
    record(0.0);
    for (long i = 1; i <= steps; ++i) {
        s = step(s, p, g, cfg.dt, cfg.scheme);
        if (i % cfg.sample_every == 0 || i == steps) record(i * cfg.dt);
    }
    tr.final_state = std::move(s);
    return tr;
}

/// Zero-mean Neumann-compatible random field: cosine mixture over modes
/// 1..6 excluding `exclude_mode`, coefficients from the seeded generator,
/// normalized to unit max amplitude.
inline std::vector<double> random_neumann_field(const Grid& g, int exclude_mode,
                                                std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<double> f(g.n_nodes(), 0.0);
    for (int m = 1; m <= 6; ++m) {
        const double a = unif(rng);
        if (m == exclude_mode) continue;
        const auto c = cosine_mode(g, m);
        for (int i = 0; i < g.n_nodes(); ++i) f[i] += a * c[i];
    }
    const double mx = max_abs(f);
    if (mx > 0)
        for (auto& x : f) x /= mx;
    return f;
}

enum class ProbeVerdict { Decayed, Grew, Inconclusive };

inline const char* to_string(ProbeVerdict v) {
    switch (v) {
        case ProbeVerdict::Decayed: return "Decayed";
        case ProbeVerdict::Grew: return "Grew";
        case ProbeVerdict::Inconclusive: return "Inconclusive";
    }
    return "?";
}

struct StabilityProbe {
    double growth_rate = 0.0;  // fitted exponential rate of the perturbation norm
    ProbeVerdict verdict = ProbeVerdict::Inconclusive;
    double rate_tol = 1e-4;
    std::vector<double> times;
    std::vector<double> log_norm;
};

/// Least-squares slope of log(norm) over the tail half of the record.
inline double fit_tail_rate(const std::vector<double>& t, const std::vector<double>& lognorm) {
    const size_t n = t.size();
    const size_t i0 = n / 2;
    double st = 0, sy = 0, stt = 0, sty = 0;
    const size_t m = n - i0;
    if (m < 2) return 0.0;
    for (size_t i = i0; i < n; ++i) {
        st += t[i];
        sy += lognorm[i];
        stt += t[i] * t[i];
        sty += t[i] * lognorm[i];
    }
    const double denom = m * stt - st * st;
    if (denom == 0.0) return 0.0;
    return (m * sty - st * sy) / denom;
}

/// Perturbs a steady base state with a seeded random Neumann field (the pure
/// base mode is excluded so the probe is not biased along the branch
/// tangent), evolves, fits the tail of log ||delta||.
inline StabilityProbe probe_stability(const StateField& base, const ModelParams& p, const Grid& g,
                                      const EvolutionConfig& cfg, int base_mode, uint64_t seed,
                                      double rate_tol = 1e-4) {
    StabilityProbe probe;
    probe.rate_tol = rate_tol;
    std::mt19937_64 rng(seed);
    const auto wu = random_neumann_field(g, base_mode, rng);
    const auto wv = random_neumann_field(g, base_mode, rng);
    StateField s = base;
    for (int i = 0; i < g.n_nodes(); ++i) {
        s.u[i] += cfg.perturb_eps * wu[i];
        s.v[i] += cfg.perturb_eps * wv[i];
    }
    const long steps = std::lround(cfg.t_final / cfg.dt);
    auto delta_norm = [&]() {
        StateField d = s;
        for (int i = 0; i < g.n_nodes(); ++i) {
            d.u[i] -= base.u[i];
            d.v[i] -= base.v[i];
        }
        return norm(g, d);
    };
    double n0 = delta_norm();
    if (n0 < 1e-300) {
        probe.growth_rate = 0.0;
        probe.verdict = ProbeVerdict::Inconclusive;
        return probe;
    }
    probe.times.push_back(0.0);
    probe.log_norm.push_back(std::log(n0));
    for (long i = 1; i <= steps; ++i) {
        s = step(s, p, g, cfg.dt, cfg.scheme);
        if (i % cfg.sample_every == 0 || i == steps) {
            const double nn = delta_norm();
            if (nn < 1e-300) {
                probe.verdict = ProbeVerdict::Inconclusive;
                return probe;
            }
            probe.times.push_back(i * cfg.dt);
            probe.log_norm.push_back(std::log(nn));
        }
    }
    probe.growth_rate = fit_tail_rate(probe.times, probe.log_norm);
    if (probe.growth_rate < -rate_tol)
        probe.verdict = ProbeVerdict::Decayed;
    else if (probe.growth_rate > rate_tol)
        probe.verdict = ProbeVerdict::Grew;
    else
        probe.verdict = ProbeVerdict::Inconclusive;
    return probe;
}

}  // namespace chemotax
