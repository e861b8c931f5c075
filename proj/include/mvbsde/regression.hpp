// Least-squares Monte Carlo conditional expectations: global polynomial
// regression on the Brownian state, shared by the martingale representation,
// the exponential smoother and the backward solver.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mvbsde/core.hpp"
#include "mvbsde/ensemble.hpp"

namespace mvbsde {

// Monomials of total degree <= degree in the bdim Brownian coordinates.
struct PolyBasis {
    int degree = 3;
    int bdim = 1;
    std::vector<std::vector<int>> exponents;  // one multi-index per column

    explicit PolyBasis(int deg = 3, int dim = 1) : degree(deg), bdim(dim) {
        if (deg < 0) throw DomainError("basis degree must be >= 0");
        std::vector<int> cur(dim, 0);
        build(0, deg, cur);
    }

    int size() const { return static_cast<int>(exponents.size()); }

    void eval(const Vec& b, double* row) const {
        for (int c = 0; c < size(); ++c) {
            double m = 1;
            for (int d = 0; d < bdim; ++d) {
                const int e = exponents[c][d];
                for (int r = 0; r < e; ++r) m *= b[d];
            }
            row[c] = m;
        }
    }

private:
    void build(int d, int budget, std::vector<int>& cur) {
        if (d == bdim) {
            exponents.push_back(cur);
            return;
        }
        for (int e = 0; e <= budget; ++e) {
            cur[d] = e;
            build(d + 1, budget - e, cur);
        }
        cur[d] = 0;
    }
};

// One cross-sectional regression problem at a fixed time step: fit targets
// against the basis evaluated on the selected paths, then predict on those
// same paths. Normal equations with column scaling; zero-variance columns
// beyond the constant are dropped (the t = 0 cross-section collapses to the
// grand mean). Genuine rank deficiency is reported, not papered over.
class StepRegression {
public:
    StepRegression(const PolyBasis& basis, const std::vector<Vec>& states,
                   const std::vector<int>& rows)
        : basis_(basis), rows_(rows) {
        const int nb = basis.size();
        const int n = static_cast<int>(rows.size());
        if (n == 0) throw RegressionError("regression with no sample paths");
        x_.assign(static_cast<std::size_t>(n) * nb, 0.0);
        Vec row(nb);
        for (int r = 0; r < n; ++r) {
            basis.eval(states[rows[r]], row.data());
            for (int c = 0; c < nb; ++c) x_[static_cast<std::size_t>(r) * nb + c] = row[c];
        }
        select_columns();
        factorize();
    }

    int samples() const { return static_cast<int>(rows_.size()); }
    double condition_estimate() const { return cond_; }

    // Fitted values of `target` (indexed like `rows` passed at construction).
    Vec fit(const Vec& target) const {
        const int n = samples();
        const int nc = static_cast<int>(cols_.size());
        Vec rhs(nc, 0.0);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < nc; ++c)
                rhs[c] += xs(r, c) * target[r];
        Vec beta = solve_chol(rhs);
        Vec out(n, 0.0);
        for (int r = 0; r < n; ++r) {
            double s = 0;
            for (int c = 0; c < nc; ++c) s += xs(r, c) * beta[c];
            out[r] = s;
        }
        return out;
    }

private:
    double xs(int r, int c) const {
        return x_[static_cast<std::size_t>(r) * basis_.size() + cols_[c]] * scale_[c];
    }

    void select_columns() {
        const int nb = basis_.size();
        const int n = samples();
        for (int c = 0; c < nb; ++c) {
            double mn = x_[c], mx = x_[c];
            for (int r = 1; r < n; ++r) {
                const double v = x_[static_cast<std::size_t>(r) * nb + c];
                mn = std::min(mn, v);
                mx = std::max(mx, v);
            }
            const bool constant_col = (mx - mn) < 1e-13 * (1.0 + std::fabs(mx));
            if (c == 0 || !constant_col) cols_.push_back(c);
        }
        // Column scaling by root-mean-square for a well-conditioned Gram matrix.
        scale_.assign(cols_.size(), 1.0);
        for (std::size_t c = 0; c < cols_.size(); ++c) {
            double s = 0;
            for (int r = 0; r < n; ++r) {
                const double v = x_[static_cast<std::size_t>(r) * nb + cols_[c]];
                s += v * v;
            }
            s = std::sqrt(s / n);
            scale_[c] = s > 0 ? 1.0 / s : 1.0;
        }
    }

    void factorize() {
        const int nc = static_cast<int>(cols_.size());
        const int n = samples();
        if (n < nc)
            throw RegressionError("design matrix rank-deficient: " + std::to_string(n) +
                                  " samples for " + std::to_string(nc) + " basis columns");
        gram_.assign(static_cast<std::size_t>(nc) * nc, 0.0);
        for (int r = 0; r < n; ++r)
            for (int i = 0; i < nc; ++i)
                for (int j = 0; j <= i; ++j)
                    gram_[static_cast<std::size_t>(i) * nc + j] += xs(r, i) * xs(r, j);
        // Cholesky; a collapsing pivot flags rank deficiency with diagnostics.
        chol_ = gram_;
        double dmax = 0, dmin = kInfDiag;
        for (int i = 0; i < nc; ++i) {
            for (int j = 0; j <= i; ++j) {
                double s = chol_[static_cast<std::size_t>(i) * nc + j];
                for (int k = 0; k < j; ++k)
                    s -= chol_[static_cast<std::size_t>(i) * nc + k] *
                         chol_[static_cast<std::size_t>(j) * nc + k];
                if (i == j) {
                    if (s <= 1e-12 * n)
                        throw RegressionError(
                            "design matrix rank-deficient: pivot " + std::to_string(i) +
                            " = " + std::to_string(s) + " with " + std::to_string(n) +
                            " samples, " + std::to_string(nc) + " columns");
                    chol_[static_cast<std::size_t>(i) * nc + j] = std::sqrt(s);
                } else {
                    chol_[static_cast<std::size_t>(i) * nc + j] =
                        s / chol_[static_cast<std::size_t>(j) * nc + j];
                }
            }
            const double d = chol_[static_cast<std::size_t>(i) * nc + i];
            dmax = std::max(dmax, d);
            dmin = std::min(dmin, d);
        }
        cond_ = (dmax / dmin) * (dmax / dmin);
    }

    Vec solve_chol(const Vec& rhs) const {
        const int nc = static_cast<int>(cols_.size());
        Vec y(nc), x(nc);
        for (int i = 0; i < nc; ++i) {
            double s = rhs[i];
            for (int k = 0; k < i; ++k) s -= chol_[static_cast<std::size_t>(i) * nc + k] * y[k];
            y[i] = s / chol_[static_cast<std::size_t>(i) * nc + i];
        }
        for (int i = nc - 1; i >= 0; --i) {
            double s = y[i];
            for (int k = i + 1; k < nc; ++k)
                s -= chol_[static_cast<std::size_t>(k) * nc + i] * x[k];
            x[i] = s / chol_[static_cast<std::size_t>(i) * nc + i];
        }
        return x;
    }

    static constexpr double kInfDiag = 1e300;
    const PolyBasis& basis_;
    std::vector<int> rows_;
    std::vector<double> x_;
    std::vector<int> cols_;
    std::vector<double> scale_;
    std::vector<double> gram_, chol_;
    double cond_ = 1;
};

// Conditional expectation of per-path targets given B_i, returned per path.
// `rows` selects the paths entering the fit (all paths by default).
inline Vec conditional_expectation(const PathEnsemble& ens, int step, const Vec& target,
                                   int degree, const std::vector<int>* rows = nullptr,
                                   double* cond_out = nullptr) {
    std::vector<int> all;
    if (!rows) {
        all.resize(ens.paths);
        for (int p = 0; p < ens.paths; ++p) all[p] = p;
        rows = &all;
    }
    PolyBasis basis(degree, ens.bdim);
    // Too few cross-sectional samples for the basis: fall back to the mean
    // (still a projection, onto constants).
    if (static_cast<int>(rows->size()) < 2 * basis.size()) {
        double s = 0;
        for (std::size_t r = 0; r < rows->size(); ++r) s += target[r];
        s /= static_cast<double>(rows->size());
        if (cond_out) *cond_out = 1;
        return Vec(rows->size(), s);
    }
    std::vector<Vec> states(ens.paths);
    for (int r : *rows) states[r] = ens.bvec(r, step);
    StepRegression reg(basis, states, *rows);
    if (cond_out) *cond_out = reg.condition_estimate();
    return reg.fit(target);
}

}  // namespace mvbsde
