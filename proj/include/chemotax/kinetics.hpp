#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace chemotax {

/// Sensitivity function Phi(u,v) with partials up to second order and
/// production h(u) with derivatives up to third order.
///
/// Structural requirements on [0,inf)^2 (checked by validate_conditions):
///   Phi(0,0) = 0,  Phi >= 0,  Phi_v <= 0,  Phi(u,v) <= c1*u,
///   h(0) = 0,      h' >= 0,   h(u) <= c2*u.
class Kinetics {
  public:
    enum class Family { Linear, Custom };

    using Fn2 = std::function<double(double, double)>;
    using Fn1 = std::function<double(double)>;

    struct CustomSpec {
        Fn2 phi, phi_u, phi_v, phi_uu, phi_uv, phi_vv;
        Fn1 h, h1, h2, h3;
        double bound_c1 = 1.0;
        double bound_c2 = 1.0;
    };

    /// Phi(u,v) = u, h(u) = beta*u.
    static Kinetics linear(double beta) {
        if (!(beta > 0.0)) throw std::invalid_argument("Kinetics::linear: beta must be positive");
        Kinetics k;
        k.family_ = Family::Linear;
        k.beta_ = beta;
        k.c1_ = 1.0;
        k.c2_ = beta;
        return k;
    }

    /// Built-in nonlinear family: Phi(u,v) = u e^{-v} (sensitivity quenched by
    /// the chemical), h(u) = beta u/(1+u) (saturating production). Meets the
    /// structural conditions with c1 = 1, c2 = beta.
    static Kinetics saturating(double beta) {
        if (!(beta > 0.0)) throw std::invalid_argument("Kinetics::saturating: beta must be positive");
        CustomSpec s;
        s.phi = [](double u, double v) { return u * std::exp(-v); };
        s.phi_u = [](double, double v) { return std::exp(-v); };
        s.phi_v = [](double u, double v) { return -u * std::exp(-v); };
        s.phi_uu = [](double, double) { return 0.0; };
        s.phi_uv = [](double, double v) { return -std::exp(-v); };
        s.phi_vv = [](double u, double v) { return u * std::exp(-v); };
        s.h = [beta](double u) { return beta * u / (1.0 + u); };
        s.h1 = [beta](double u) { return beta / ((1.0 + u) * (1.0 + u)); };
        s.h2 = [beta](double u) { return -2.0 * beta / std::pow(1.0 + u, 3); };
        s.h3 = [beta](double u) { return 6.0 * beta / std::pow(1.0 + u, 4); };
        s.bound_c1 = 1.0;
        s.bound_c2 = beta;
        return custom(std::move(s));
    }

    /// Caller supplies all derivatives; a central-difference consistency check
    /// (step 1e-6, relative tolerance 1e-4) runs once here.
    static Kinetics custom(CustomSpec spec) {
        if (!(spec.bound_c1 > 0.0) || !(spec.bound_c2 > 0.0))
            throw std::invalid_argument("Kinetics::custom: bounds must be positive");
        Kinetics k;
        k.family_ = Family::Custom;
        k.c1_ = spec.bound_c1;
        k.c2_ = spec.bound_c2;
        k.spec_ = std::move(spec);
        k.check_derivatives();
        return k;
    }

    Family family() const { return family_; }
    double beta() const { return beta_; }
    double bound_c1() const { return c1_; }
    double bound_c2() const { return c2_; }

    double phi(double u, double v) const { return family_ == Family::Linear ? u : spec_.phi(u, v); }
    double phi_u(double u, double v) const { return family_ == Family::Linear ? 1.0 : spec_.phi_u(u, v); }
    double phi_v(double u, double v) const { return family_ == Family::Linear ? 0.0 : spec_.phi_v(u, v); }
    double phi_uu(double u, double v) const { return family_ == Family::Linear ? 0.0 : spec_.phi_uu(u, v); }
    double phi_uv(double u, double v) const { return family_ == Family::Linear ? 0.0 : spec_.phi_uv(u, v); }
    double phi_vv(double u, double v) const { return family_ == Family::Linear ? 0.0 : spec_.phi_vv(u, v); }

    double h(double u) const { return family_ == Family::Linear ? beta_ * u : spec_.h(u); }
    double h1(double u) const { return family_ == Family::Linear ? beta_ : spec_.h1(u); }
    double h2(double u) const { return family_ == Family::Linear ? 0.0 : spec_.h2(u); }
    double h3(double u) const { return family_ == Family::Linear ? 0.0 : spec_.h3(u); }

    /// Returns a copy with h scaled by 1/alpha (and derivatives alike).
    Kinetics scaled_production(double alpha) const {
        if (!(alpha > 0.0)) throw std::invalid_argument("scaled_production: alpha must be positive");
        if (family_ == Family::Linear) return linear(beta_ / alpha);
        CustomSpec s = spec_;
        const double inv = 1.0 / alpha;
        auto scale1 = [inv](Fn1 f) { return Fn1([f, inv](double u) { return inv * f(u); }); };
        s.h = scale1(s.h);
        s.h1 = scale1(s.h1);
        s.h2 = scale1(s.h2);
        s.h3 = scale1(s.h3);
        s.bound_c2 = c2_ * inv;
        Kinetics k;
        k.family_ = Family::Custom;
        k.c1_ = c1_;
        k.c2_ = s.bound_c2;
        k.spec_ = std::move(s);
        return k;
    }

  private:
    Family family_ = Family::Linear;
    double beta_ = 1.0;
    double c1_ = 1.0, c2_ = 1.0;
    CustomSpec spec_;

    void check_derivatives() const {
        const double d = 1e-6, rtol = 1e-4;
        auto close = [&](double a, double b) {
            return std::abs(a - b) <= rtol * std::max({1.0, std::abs(a), std::abs(b)});
        };
        for (double u : {0.5, 1.0, 2.0}) {
            for (double v : {0.5, 1.0, 2.0}) {
                const double pu = (phi(u + d, v) - phi(u - d, v)) / (2 * d);
                const double pv = (phi(u, v + d) - phi(u, v - d)) / (2 * d);
                const double puu = (phi_u(u + d, v) - phi_u(u - d, v)) / (2 * d);
                const double puv = (phi_u(u, v + d) - phi_u(u, v - d)) / (2 * d);
                const double pvv = (phi_v(u, v + d) - phi_v(u, v - d)) / (2 * d);
                if (!close(pu, phi_u(u, v)) || !close(pv, phi_v(u, v)) ||
                    !close(puu, phi_uu(u, v)) || !close(puv, phi_uv(u, v)) ||
                    !close(pvv, phi_vv(u, v)))
                    throw std::invalid_argument("Kinetics::custom: Phi derivatives fail finite-difference check");
            }
            const double h1d = (h(u + d) - h(u - d)) / (2 * d);
            const double h2d = (h1(u + d) - h1(u - d)) / (2 * d);
            const double h3d = (h2(u + d) - h2(u - d)) / (2 * d);
            if (!close(h1d, h1(u)) || !close(h2d, h2(u)) || !close(h3d, h3(u)))
                throw std::invalid_argument("Kinetics::custom: h derivatives fail finite-difference check");
        }
    }
};

/// Model parameters of the nondimensional system on (0, L):
///   (d1 u' - chi Phi(u,v) v')' + (ubar - u) u = 0
///   d2 v'' - v + h(u) = 0
/// with homogeneous Neumann conditions. vbar = h(ubar) is always derived.
struct ModelParams {
    double d1 = 1.0;
    double d2 = 1.0;
    double chi = 0.0;
    double ubar = 1.0;
    double length = M_PI;
    Kinetics kinetics = Kinetics::linear(1.0);

    ModelParams() = default;
    ModelParams(double d1_, double d2_, double chi_, double ubar_, double length_, Kinetics kin)
        : d1(d1_), d2(d2_), chi(chi_), ubar(ubar_), length(length_), kinetics(std::move(kin)) {
        if (!(d1 > 0.0) || !(d2 > 0.0) || !(ubar > 0.0) || !(length > 0.0) || chi < 0.0)
            throw std::invalid_argument("ModelParams: positivity constraints violated");
    }

    double vbar() const { return kinetics.h(ubar); }

    ModelParams with_chi(double c) const {
        ModelParams p = *this;
        p.chi = c;
        return p;
    }
};

/// Maps raw parameters of the dimensional system (cell growth u(theta - mu u),
/// chemical balance -alpha v + h(u)) onto ModelParams:
///   d1 = D1/mu, chi = chi_raw/mu, d2 = D2/alpha, h -> h/alpha, ubar = theta/mu.
inline ModelParams nondimensionalize(double d1_raw, double chi_raw, double d2_raw, double theta,
                                     double mu, double alpha, const Kinetics& kinetics_raw,
                                     double length) {
    if (!(theta > 0.0) || !(mu > 0.0) || !(alpha > 0.0))
        throw std::invalid_argument("nondimensionalize: theta, mu, alpha must be positive");
    if (!(d1_raw > 0.0) || !(d2_raw > 0.0) || chi_raw < 0.0)
        throw std::invalid_argument("nondimensionalize: diffusivities must be positive, chi nonnegative");
    return ModelParams(d1_raw / mu, d2_raw / alpha, chi_raw / mu, theta / mu, length,
                       kinetics_raw.scaled_production(alpha));
}

/// Lattice check of the structural conditions on [0,u_max] x [0,v_max].
struct ConditionReport {
    struct Entry {
        std::string name;
        bool pass = true;
        double worst = 0.0;  // most negative margin observed
        double at_u = 0.0, at_v = 0.0;
    };
    std::vector<Entry> entries;
    double c1 = 0.0, c2 = 0.0;

    bool all_pass() const {
        for (const auto& e : entries)
            if (!e.pass) return false;
        return true;
    }
};

inline ConditionReport validate_conditions(const Kinetics& kin, double u_max, double v_max,
                                           int samples = 101) {
    if (!(u_max > 0.0) || !(v_max > 0.0))
        throw std::invalid_argument("validate_conditions: box must be positive");
    if (samples < 2) throw std::invalid_argument("validate_conditions: need at least 2 samples");

    ConditionReport rep;
    rep.c1 = kin.bound_c1();
    rep.c2 = kin.bound_c2();
    ConditionReport::Entry sign{"phi_nonnegative_phi_v_nonpositive"}, lin_phi{"phi_linear_bound"},
        mono{"h_monotone_from_zero"}, lin_h{"h_linear_bound"};

    if (kin.family() == Kinetics::Family::Linear) {
        // Phi = u and h = beta*u meet every condition with equality; c1 = 1, c2 = beta.
        rep.c1 = 1.0;
        rep.c2 = kin.beta();
        rep.entries = {sign, lin_phi, mono, lin_h};
        return rep;
    }

    auto update = [](ConditionReport::Entry& e, double margin, double u, double v) {
        if (margin < e.worst) {
            e.worst = margin;
            e.at_u = u;
            e.at_v = v;
            e.pass = e.worst >= -1e-12;
        }
    };

    update(sign, -std::abs(kin.phi(0.0, 0.0)), 0.0, 0.0);
    update(mono, -std::abs(kin.h(0.0)), 0.0, 0.0);
    for (int i = 0; i < samples; ++i) {
        const double u = u_max * i / (samples - 1);
        update(mono, kin.h1(u), u, 0.0);
        update(lin_h, rep.c2 * u - kin.h(u), u, 0.0);
        for (int j = 0; j < samples; ++j) {
            const double v = v_max * j / (samples - 1);
            update(sign, kin.phi(u, v), u, v);
            update(sign, -kin.phi_v(u, v), u, v);
            update(lin_phi, rep.c1 * u - kin.phi(u, v), u, v);
        }
    }
    rep.entries = {sign, lin_phi, mono, lin_h};
    return rep;
}

}  // namespace chemotax
