#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace chemotax {

struct SingularMatrixError : std::runtime_error {
    int column;
    explicit SingularMatrixError(int col)
        : std::runtime_error("banded LU: zero pivot at column " + std::to_string(col)), column(col) {}
};

/// Banded n x n matrix with kl sub- and ku super-diagonals, stored LAPACK
/// style with kl extra rows so partial pivoting stays in band.
class BandedMatrix {
  public:
    BandedMatrix(int n, int kl, int ku)
        : n_(n), kl_(kl), ku_(ku), width_(2 * kl + ku + 1), data_(width_ * n, 0.0) {}

    int size() const { return n_; }

    double& at(int i, int j) {
        return data_[static_cast<size_t>(kl_ + ku_ + i - j) * n_ + j];
    }
    double at(int i, int j) const {
        return data_[static_cast<size_t>(kl_ + ku_ + i - j) * n_ + j];
    }

    /// Adds v to entry (i,j); out-of-band writes are an error.
    void add(int i, int j, double v) {
        if (j - i > ku_ || i - j > kl_) throw std::logic_error("BandedMatrix: write outside band");
        at(i, j) += v;
    }

    /// In-place LU with partial pivoting. Returns false on an exactly zero pivot.
    bool factor() {
        pivots_.assign(n_, 0);
        det_sign_ = 1;
        log_abs_det_ = 0.0;
        for (int j = 0; j < n_; ++j) {
            const int ilast = std::min(j + kl_, n_ - 1);
            int piv = j;
            double best = std::abs(at(j, j));
            for (int i = j + 1; i <= ilast; ++i) {
                const double a = std::abs(at(i, j));
                if (a > best) {
                    best = a;
                    piv = i;
                }
            }
            pivots_[j] = piv;
            if (best == 0.0) {
                det_sign_ = 0;
                singular_col_ = j;
                return false;
            }
            const int clast = std::min(j + kl_ + ku_, n_ - 1);
            if (piv != j) {
                det_sign_ = -det_sign_;
                for (int c = j; c <= clast; ++c) std::swap(at(j, c), at(piv, c));
            }
            const double d = at(j, j);
            if (d < 0) det_sign_ = -det_sign_;
            log_abs_det_ += std::log(std::abs(d));
            for (int i = j + 1; i <= ilast; ++i) {
                const double m = at(i, j) / d;
                at(i, j) = m;
                for (int c = j + 1; c <= clast; ++c) at(i, c) -= m * at(j, c);
            }
        }
        factored_ = true;
        return true;
    }

    /// Solves A x = b using the stored factorization (b overwritten with x).
    void solve(std::vector<double>& b) const {
        if (!factored_) throw std::logic_error("BandedMatrix::solve before factor");
        for (int j = 0; j < n_; ++j) {
            if (pivots_[j] != j) std::swap(b[j], b[pivots_[j]]);
            const int ilast = std::min(j + kl_, n_ - 1);
            for (int i = j + 1; i <= ilast; ++i) b[i] -= at(i, j) * b[j];
        }
        for (int j = n_ - 1; j >= 0; --j) {
            const int clast = std::min(j + kl_ + ku_, n_ - 1);
            for (int c = j + 1; c <= clast; ++c) b[j] -= at(j, c) * b[c];
            b[j] /= at(j, j);
        }
    }

    int det_sign() const { return det_sign_; }
    double log_abs_det() const { return log_abs_det_; }
    int singular_column() const { return singular_col_; }

  private:
    int n_, kl_, ku_, width_;
    std::vector<double> data_;
    std::vector<int> pivots_;
    bool factored_ = false;
    int det_sign_ = 1;
    double log_abs_det_ = 0.0;
    int singular_col_ = -1;
};

/// Thomas solve for a tridiagonal system (no pivoting; callers pass
/// diagonally dominant operators). Vectors lo/di/up are modified.
inline void solve_tridiagonal(std::vector<double>& lo, std::vector<double>& di,
                              std::vector<double>& up, std::vector<double>& rhs) {
    const size_t n = di.size();
    for (size_t i = 1; i < n; ++i) {
        const double m = lo[i] / di[i - 1];
        di[i] -= m * up[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= di[n - 1];
    for (size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - up[i] * rhs[i + 1]) / di[i];
}

}  // namespace chemotax
