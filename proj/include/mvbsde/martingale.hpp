// Terminal functionals, the martingale representation pair (xi, zeta) and the
// exponential smoothing M^eps of a grid process along the clock Q.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mvbsde/core.hpp"
#include "mvbsde/ensemble.hpp"
#include "mvbsde/regression.hpp"

namespace mvbsde {

// Catalog of terminal conditions eta. All are scalar (m = 1) except Custom,
// which may produce any state dimension.
struct Terminal {
    enum class Kind { Constant, BrownianT, BrownianSqT, ClampExit, Custom };
    Kind kind = Kind::Constant;
    double c = 0;      // Constant value, or clamp level for ClampExit
    double shift = 0;  // additive perturbation (continuity studies)
    int m = 1;
    std::function<Vec(const PathEnsemble&, int path)> fn;

    static Terminal constant(double value) {
        Terminal t;
        t.kind = Kind::Constant;
        t.c = value;
        return t;
    }
    static Terminal brownian_t() {
        Terminal t;
        t.kind = Kind::BrownianT;
        return t;
    }
    static Terminal brownian_sq_t() {
        Terminal t;
        t.kind = Kind::BrownianSqT;
        return t;
    }
    // B at the exit node, clamped to [-level, level].
    static Terminal clamp_exit(double level) {
        Terminal t;
        t.kind = Kind::ClampExit;
        t.c = level;
        return t;
    }
    static Terminal custom(int m, std::function<Vec(const PathEnsemble&, int)> f) {
        Terminal t;
        t.kind = Kind::Custom;
        t.m = m;
        t.fn = std::move(f);
        return t;
    }

    Terminal shifted(double h) const {
        Terminal t = *this;
        t.shift += h;
        return t;
    }

    bool closed_form() const { return kind != Kind::Custom; }

    Vec eval(const PathEnsemble& ens, int path) const {
        switch (kind) {
            case Kind::Constant: return Vec{c + shift};
            case Kind::BrownianT: return Vec{ens.bval(path, ens.steps, 0) + shift};
            case Kind::BrownianSqT: {
                const double b = ens.bval(path, ens.steps, 0);
                return Vec{b * b + shift};
            }
            case Kind::ClampExit: {
                const double b = ens.bval(path, ens.exit_step[path], 0);
                return Vec{clamp(b, -c, c) + shift};
            }
            case Kind::Custom: {
                Vec r = fn(ens, path);
                for (double& x : r) x += shift;
                return r;
            }
        }
        return Vec{0.0};
    }
};

enum class PairMethod { ClosedForm, Regression };

// xi_i = E[eta | F_i] and the representation density zeta with
// xi_t = eta - int_t^inf zeta dB; zeta vanishes beyond the horizon and xi is
// pinned to eta there.
struct MartingalePair {
    PairMethod method = PairMethod::ClosedForm;
    int paths = 0, steps = 0, m = 1, kdim = 1;
    std::vector<double> xi;    // paths*(steps+1)*m
    std::vector<double> zeta;  // paths*(steps+1)*m*kdim
    std::vector<double> condition_numbers;  // per step (regression method)

    std::size_t xnode(int path, int i) const {
        return (static_cast<std::size_t>(path) * (steps + 1) + i) * m;
    }
    std::size_t znode(int path, int i) const {
        return (static_cast<std::size_t>(path) * (steps + 1) + i) * m * kdim;
    }
    Vec xi_at(int path, int i) const {
        Vec r(m);
        for (int d = 0; d < m; ++d) r[d] = xi[xnode(path, i) + d];
        return r;
    }
};

inline MartingalePair martingale_pair(const Terminal& eta, const PathEnsemble& ens,
                                      PairMethod method, int degree = 3) {
    MartingalePair out;
    out.method = method;
    out.paths = ens.paths;
    out.steps = ens.steps;
    out.m = eta.m;
    out.kdim = ens.bdim;
    out.xi.assign(static_cast<std::size_t>(ens.paths) * (ens.steps + 1) * eta.m, 0.0);
    out.zeta.assign(
        static_cast<std::size_t>(ens.paths) * (ens.steps + 1) * eta.m * ens.bdim, 0.0);

    const double T = ens.cfg.horizon;
    if (method == PairMethod::ClosedForm) {
        if (!eta.closed_form())
            throw DomainError("martingale_pair: no closed form for custom terminal");
        for (int p = 0; p < ens.paths; ++p) {
            const Vec etap = eta.eval(ens, p);
            for (int i = 0; i <= ens.steps; ++i) {
                double x = 0, z = 0;
                const bool beyond = !ens.node_in_horizon(p, i) ||
                                    (ens.cfg.has_random_horizon() && i >= ens.exit_step[p]);
                switch (eta.kind) {
                    case Terminal::Kind::Constant:
                        x = eta.c + eta.shift;
                        z = 0;
                        break;
                    case Terminal::Kind::BrownianT:
                        x = ens.bval(p, i, 0) + eta.shift;
                        z = 1;
                        break;
                    case Terminal::Kind::BrownianSqT: {
                        const double b = ens.bval(p, i, 0);
                        x = b * b + (T - ens.t[i]) + eta.shift;
                        z = 2 * b;
                        break;
                    }
                    case Terminal::Kind::ClampExit:
                        // No closed conditional law on the grid before exit;
                        // the regression method covers that case.
                        if (!beyond)
                            throw DomainError(
                                "martingale_pair: clamp_exit needs the regression method");
                        x = etap[0];
                        z = 0;
                        break;
                    case Terminal::Kind::Custom: break;
                }
                if (beyond) {
                    x = etap[0];
                    z = 0;
                }
                out.xi[out.xnode(p, i)] = x;
                out.zeta[out.znode(p, i)] = z;  // first Brownian component only
            }
        }
        return out;
    }

    // Regression method: xi_i by cross-sectional projection of eta on the
    // basis of B_i, zeta_i by the increment regression E[xi_{i+1} dB_i]/dt.
    std::vector<Vec> etas(ens.paths);
    for (int p = 0; p < ens.paths; ++p) etas[p] = eta.eval(ens, p);

    // terminal node: xi = eta exactly
    for (int p = 0; p < ens.paths; ++p)
        for (int d = 0; d < eta.m; ++d)
            out.xi[out.xnode(p, ens.steps) + d] = etas[p][d];

    for (int i = ens.steps - 1; i >= 0; --i) {
        // Paths already stopped carry eta; live paths get the projection.
        std::vector<int> live;
        live.reserve(ens.paths);
        for (int p = 0; p < ens.paths; ++p) {
            if (ens.cfg.has_random_horizon() && i >= ens.exit_step[p]) {
                for (int d = 0; d < eta.m; ++d)
                    out.xi[out.xnode(p, i) + d] = etas[p][d];
            } else {
                live.push_back(p);
            }
        }
        if (live.empty()) continue;
        double cond = 1;
        for (int d = 0; d < eta.m; ++d) {
            Vec target(live.size());
            for (std::size_t r = 0; r < live.size(); ++r)
                target[r] = etas[live[r]][d];
            Vec fitted = conditional_expectation(ens, i, target, degree, &live, &cond);
            for (std::size_t r = 0; r < live.size(); ++r)
                out.xi[out.xnode(live[r], i) + d] = fitted[r];
            for (int kd = 0; kd < ens.bdim; ++kd) {
                // centered increment regression: subtracting the fitted
                // B_i-measurable level leaves E[xi_{i+1} dB_i]/dt unchanged
                // and removes most of the sampling variance
                Vec ztarget(live.size());
                for (std::size_t r = 0; r < live.size(); ++r) {
                    const int p = live[r];
                    ztarget[r] = (out.xi[out.xnode(p, i + 1) + d] - fitted[r]) *
                                 ens.db(p, i, kd) / ens.dt;
                }
                Vec zfit = conditional_expectation(ens, i, ztarget, degree, &live);
                for (std::size_t r = 0; r < live.size(); ++r)
                    out.zeta[out.znode(live[r], i) + d * ens.bdim + kd] = zfit[r];
            }
        }
        out.condition_numbers.push_back(cond);
    }
    return out;
}

// Exponential smoothing of a scalar grid process U along Q:
//   U^eps_t = (1/Q_eps) int_{t v eps}^inf exp(-(Q_r - Q_{t v eps})/Q_eps) U_r dQ_r,
// with U frozen at U_T beyond the grid so the kernel keeps unit mass (the
// tail integrates analytically), and M^eps_t = E[U^eps_t | F_t] estimated by
// the same regression machinery as the martingale pair.
struct SmoothResult {
    double eps = 0;
    std::vector<double> u_eps;  // paths*(steps+1), kernel-smoothed, pathwise
    std::vector<double> m_eps;  // paths*(steps+1), conditioned
    bool kernel_under_resolved = false;  // eps below one grid step
    std::size_t node(int path, int i, int steps) const {
        return static_cast<std::size_t>(path) * (steps + 1) + i;
    }
};

inline SmoothResult exp_smooth(const std::vector<double>& u, const PathEnsemble& ens,
                               double eps, int degree = 3) {
    if (!(eps > 0)) throw DomainError("exp_smooth: eps must be positive");
    SmoothResult out;
    out.eps = eps;
    out.kernel_under_resolved = eps < ens.dt;
    const int K = ens.steps;
    out.u_eps.assign(static_cast<std::size_t>(ens.paths) * (K + 1), 0.0);
    out.m_eps = out.u_eps;

    auto uval = [&](int p, int i) { return u[ens.node(p, i)]; };

    for (int p = 0; p < ens.paths; ++p) {
        // Q at time eps by linear interpolation of the clock
        double q_eps;
        if (eps >= ens.cfg.horizon) {
            q_eps = ens.qval(p, K);
        } else {
            const int j = static_cast<int>(eps / ens.dt);
            const double w = (eps - ens.t[j]) / ens.dt;
            q_eps = (1 - w) * ens.qval(p, j) + w * ens.qval(p, std::min(j + 1, K));
        }
        if (!(q_eps > 0)) q_eps = ens.dt;  // degenerate guard (eps -> 0)

        // Smoothed value started from an arbitrary lower node index i0 with
        // lower integration limit q_lo >= Q_{i0}; the kernel is integrated
        // exactly per interval with U trapezoid-averaged.
        auto smooth_from = [&](int i0, double q_lo, double u_lo) {
            double acc = 0;
            double left_q = q_lo, left_u = u_lo;
            for (int j = i0; j < K; ++j) {
                const double rq = ens.qval(p, j + 1);
                if (rq <= left_q) continue;
                const double w =
                    std::exp(-(left_q - q_lo) / q_eps) - std::exp(-(rq - q_lo) / q_eps);
                acc += w * 0.5 * (left_u + uval(p, j + 1));
                left_q = rq;
                left_u = uval(p, j + 1);
            }
            // analytic constant tail beyond T
            acc += std::exp(-(ens.qval(p, K) - q_lo) / q_eps) * uval(p, K);
            return acc;
        };

        for (int i = 0; i <= K; ++i) {
            if (ens.t[i] >= eps) {
                out.u_eps[ens.node(p, i)] = smooth_from(i, ens.qval(p, i), uval(p, i));
            } else {
                // t v eps = eps: interpolate the starting point once
                const int j = std::min(static_cast<int>(eps / ens.dt), K - 1);
                const double w = (eps - ens.t[j]) / ens.dt;
                const double qs =
                    (1 - w) * ens.qval(p, j) + w * ens.qval(p, j + 1);
                const double us = (1 - w) * uval(p, j) + w * uval(p, j + 1);
                out.u_eps[ens.node(p, i)] = smooth_from(j, qs, us);
            }
        }
    }

    // Conditioning: M^eps_i = E[U^eps_i | B_i]
    for (int i = 0; i <= K; ++i) {
        Vec target(ens.paths);
        for (int p = 0; p < ens.paths; ++p) target[p] = out.u_eps[ens.node(p, i)];
        Vec fitted = conditional_expectation(ens, i, target, degree);
        for (int p = 0; p < ens.paths; ++p) out.m_eps[ens.node(p, i)] = fitted[p];
    }
    return out;
}

}  // namespace mvbsde
