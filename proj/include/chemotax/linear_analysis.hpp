#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <vector>

#include "chemotax/grid.hpp"
#include "chemotax/kinetics.hpp"

namespace chemotax {

/// Continuum Neumann Laplacian eigenvalue (k*pi/L)^2.
inline double laplace_eigenvalue(const ModelParams& p, int k) {
    const double w = k * M_PI / p.length;
    return w * w;
}

/// Eigenvalue of the mirrored three-point discrete Neumann Laplacian,
/// (4/h^2) sin^2(k*pi*h/(2L)); tends to (k*pi/L)^2 as h -> 0.
inline double laplace_eigenvalue_discrete(const ModelParams& p, int k, const Grid& g) {
    const double h = g.spacing();
    const double s = std::sin(k * M_PI * h / (2.0 * p.length));
    return 4.0 / (h * h) * s * s;
}

struct Equilibria {
    double ubar, vbar;
    // (0,0) is always an equilibrium; it is linearly unstable and never a
    // bifurcation base, so it is exposed read-only with that annotation.
    double trivial_u = 0.0, trivial_v = 0.0;
    static constexpr const char* trivial_note = "unstable; no bifurcation occurs here";
};

inline Equilibria positive_equilibrium(const ModelParams& p) {
    return Equilibria{p.ubar, p.vbar(), 0.0, 0.0};
}

/// 2x2 linearization block of mode k at the positive equilibrium:
///   [ -d1*lam - ubar        chi*Phi(ub,vb)*lam ]
///   [ h'(ub)               -d2*lam - 1         ]
struct Mode2x2 {
    double a11, a12, a21, a22;
    double trace() const { return a11 + a22; }
    double det() const { return a11 * a22 - a12 * a21; }
};

inline Mode2x2 stability_matrix_at(const ModelParams& p, double lam) {
    const double vb = p.vbar();
    return Mode2x2{-p.d1 * lam - p.ubar, p.chi * p.kinetics.phi(p.ubar, vb) * lam,
                   p.kinetics.h1(p.ubar), -p.d2 * lam - 1.0};
}

inline Mode2x2 stability_matrix(const ModelParams& p, int k) {
    if (k < 1) throw std::invalid_argument("stability_matrix: k = 0 carries no instability; k >= 1 required");
    return stability_matrix_at(p, laplace_eigenvalue(p, k));
}

/// Both roots of lambda^2 + T lambda + D with T = -trace, D = det;
/// first has the larger real part.
inline std::pair<std::complex<double>, std::complex<double>> growth_rates(const ModelParams& p,
                                                                          int k) {
    const Mode2x2 m = stability_matrix(p, k);
    const double T = -m.trace(), D = m.det();
    const double disc = T * T - 4.0 * D;
    if (disc >= 0.0) {
        const double r = std::sqrt(disc);
        // stable quadratic formula: compute the large-magnitude root first
        const double q = -0.5 * (T + (T >= 0 ? r : -r));
        double x1 = q, x2 = (q != 0.0) ? D / q : -T - q;
        if (x1 < x2) std::swap(x1, x2);
        return {std::complex<double>(x1, 0.0), std::complex<double>(x2, 0.0)};
    }
    const double re = -0.5 * T, im = 0.5 * std::sqrt(-disc);
    return {std::complex<double>(re, im), std::complex<double>(re, -im)};
}

/// chi at which mode k's linearization turns singular:
///   chi_k = (d1 lam + ubar)(d2 lam + 1) / (Phi(ub,vb) lam h'(ub)).
inline double bifurcation_value_at(const ModelParams& p, double lam) {
    const double phi = p.kinetics.phi(p.ubar, p.vbar());
    const double hp = p.kinetics.h1(p.ubar);
    if (!(phi * hp > 0.0))
        throw std::domain_error("bifurcation_value: Phi(ubar,vbar)*h'(ubar) must be positive (degenerate kinetics)");
    return (p.d1 * lam + p.ubar) * (p.d2 * lam + 1.0) / (phi * lam * hp);
}

inline double bifurcation_value(const ModelParams& p, int k) {
    if (k < 1) throw std::invalid_argument("bifurcation_value: k >= 1 required");
    return bifurcation_value_at(p, laplace_eigenvalue(p, k));
}

/// Mode amplitude ratio Q_k = (d2 lam + 1)/h'(ubar); the kernel direction is
/// (Q_k cos(k pi x/L), cos(k pi x/L)).
inline double mode_ratio_at(const ModelParams& p, double lam) {
    const double hp = p.kinetics.h1(p.ubar);
    if (!(hp > 0.0)) throw std::domain_error("mode_ratio: h'(ubar) must be positive");
    return (p.d2 * lam + 1.0) / hp;
}

inline double mode_ratio(const ModelParams& p, int k) {
    return mode_ratio_at(p, laplace_eigenvalue(p, k));
}

/// Instability threshold chi_0 = min_k chi_k and its argmin. chi_k is convex in
/// lam with continuum minimizer lam* = sqrt(ubar/(d1 d2)), so
/// k <= ceil(L/pi (ubar/(d1 d2))^{1/4}) + 2 brackets the integer minimizer;
/// that bound is enforced as a floor on k_max.
struct Threshold {
    double chi0;
    int k_star;
    int k_max_used;
};

inline Threshold instability_threshold(const ModelParams& p, int k_max) {
    if (k_max < 1) throw std::invalid_argument("instability_threshold: k_max >= 1 required");
    const int k_floor =
        static_cast<int>(std::ceil(p.length / M_PI * std::pow(p.ubar / (p.d1 * p.d2), 0.25))) + 2;
    const int k_eff = std::max(k_max, k_floor);
    double best = bifurcation_value(p, 1);
    int arg = 1;
    for (int k = 2; k <= k_eff; ++k) {
        const double c = bifurcation_value(p, k);
        if (c < best) {  // ties resolve to the smaller k
            best = c;
            arg = k;
        }
    }
    return Threshold{best, arg, k_eff};
}

/// Kernel simplicity at mode k: fails iff ubar = j^2 k^2 d1 d2 (pi/L)^4 for
/// some positive integer j != k (then chi_j = chi_k and the kernel is 2-D).
/// An alternative reading drops the k^2 factor (ubar != j^2 d1 d2 (pi/L)^4,
/// j >= 2); the k^2 form is what chi_j = chi_k actually reduces to, so that
/// is what decides `simple`, and a disagreement between the two readings is
/// reported on the result.
struct SimplicityCheck {
    bool simple = true;
    int offending_j = 0;
    bool alt_reading_differs = false;  // the k-less variant would decide differently
};

inline SimplicityCheck check_simplicity(const ModelParams& p, int k, int j_max) {
    if (j_max < 2 * k) throw std::invalid_argument("check_simplicity: j_max >= 2k required");
    const double base = p.d1 * p.d2 * std::pow(M_PI / p.length, 4);
    SimplicityCheck res;
    for (int j = 1; j <= j_max; ++j) {
        if (j == k) continue;
        const double t = base * k * k * j * j;
        if (std::abs(p.ubar - t) <= 1e-9 * std::max(p.ubar, t)) {
            res.simple = false;
            res.offending_j = j;
            break;
        }
    }
    bool alt_simple = true;
    for (int j = 2; j <= j_max; ++j) {
        const double t = base * j * j;
        if (std::abs(p.ubar - t) <= 1e-9 * std::max(p.ubar, t)) alt_simple = false;
    }
    res.alt_reading_differs = (alt_simple != res.simple);
    return res;
}

/// Nodal samples of the kernel direction (Q_k cos(k pi x/L), cos(k pi x/L)).
inline StateField eigenmode(const ModelParams& p, int k, const Grid& g) {
    const double q = mode_ratio(p, k);
    StateField s(g.n_nodes(), 0.0, 0.0);
    const auto c = cosine_mode(g, k);
    for (int i = 0; i < g.n_nodes(); ++i) {
        s.u[i] = q * c[i];
        s.v[i] = c[i];
    }
    return s;
}

/// Per-mode analysis record. det_at stores D(chi) = det_const + det_chi_slope*chi.
struct ModeAnalysis {
    int k = 0;
    double lambda_k = 0.0;
    double chi_k = 0.0;
    double q_k = 0.0;
    bool simple = true;
    double trace_k = 0.0;
    double det_const = 0.0;
    double det_chi_slope = 0.0;
    double max_growth = 0.0;  // max Re lambda of the mode block at params.chi

    double det_at(double chi) const { return det_const + det_chi_slope * chi; }
};

inline ModeAnalysis analyze_mode(const ModelParams& p, int k, int j_max = 0) {
    ModeAnalysis m;
    m.k = k;
    m.lambda_k = laplace_eigenvalue(p, k);
    m.chi_k = bifurcation_value(p, k);
    m.q_k = mode_ratio(p, k);
    m.simple = check_simplicity(p, k, j_max > 0 ? j_max : 2 * k + 8).simple;
    const Mode2x2 h0 = stability_matrix_at(p.with_chi(0.0), m.lambda_k);
    m.trace_k = h0.trace();
    m.det_const = h0.det();
    const double phi = p.kinetics.phi(p.ubar, p.vbar());
    m.det_chi_slope = -phi * m.lambda_k * p.kinetics.h1(p.ubar);
    m.max_growth = growth_rates(p, k).first.real();
    return m;
}

inline std::vector<ModeAnalysis> analyze_modes(const ModelParams& p, int k_max) {
    std::vector<ModeAnalysis> out;
    for (int k = 1; k <= k_max; ++k) out.push_back(analyze_mode(p, k));
    return out;
}

}  // namespace chemotax
