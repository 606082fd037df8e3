#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace chemotax {

/// Uniform closed grid on [0, L]: nodes x_i = i*h, i = 0..N, h = L/N.
struct Grid {
    int n_cells = 0;
    double length = 0.0;

    Grid() = default;
    Grid(int n, double len) : n_cells(n), length(len) {
        if (n < 2) throw std::invalid_argument("Grid: need at least 2 cells");
        if (!(len > 0.0)) throw std::invalid_argument("Grid: length must be positive");
    }

    double spacing() const { return length / n_cells; }
    int n_nodes() const { return n_cells + 1; }
    double node(int i) const { return i * spacing(); }

    /// Trapezoid quadrature weight of node i (h at interior nodes, h/2 at the ends).
    double weight(int i) const {
        const double h = spacing();
        return (i == 0 || i == n_cells) ? 0.5 * h : h;
    }
};

/// Nodal (u, v) values on a Grid.
struct StateField {
    std::vector<double> u;
    std::vector<double> v;

    StateField() = default;
    StateField(int n_nodes, double u0, double v0) : u(n_nodes, u0), v(n_nodes, v0) {}

    int n_nodes() const { return static_cast<int>(u.size()); }

    bool all_finite() const {
        for (double x : u)
            if (!std::isfinite(x)) return false;
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

inline StateField constant_state(const Grid& g, double u0, double v0) {
    return StateField(g.n_nodes(), u0, v0);
}

/// Trapezoid integral of a nodal vector.
inline double integrate(const Grid& g, const std::vector<double>& f) {
    double s = 0.0;
    for (int i = 0; i < g.n_nodes(); ++i) s += g.weight(i) * f[i];
    return s;
}

/// Weighted L2 inner product over both components of a state pair.
inline double inner(const Grid& g, const StateField& a, const StateField& b) {
    double s = 0.0;
    for (int i = 0; i < g.n_nodes(); ++i) s += g.weight(i) * (a.u[i] * b.u[i] + a.v[i] * b.v[i]);
    return s;
}

inline double norm(const Grid& g, const StateField& a) { return std::sqrt(inner(g, a, a)); }

inline StateField axpy(const StateField& a, double s, const StateField& b) {
    StateField r = a;
    for (int i = 0; i < r.n_nodes(); ++i) {
        r.u[i] += s * b.u[i];
        r.v[i] += s * b.v[i];
    }
    return r;
}

inline double max_abs(const std::vector<double>& f) {
    double m = 0.0;
    for (double x : f) m = std::max(m, std::abs(x));
    return m;
}

/// Samples cos(k*pi*x/L) at the grid nodes. Exact eigenvector of the mirrored
/// three-point Neumann Laplacian for every k <= N.
inline std::vector<double> cosine_mode(const Grid& g, int k) {
    std::vector<double> c(g.n_nodes());
    const double f = k * M_PI / g.length;
    for (int i = 0; i < g.n_nodes(); ++i) c[i] = std::cos(f * g.node(i));
    return c;
}

}  // namespace chemotax
