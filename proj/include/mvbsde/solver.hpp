// Backward-Euler solver for the penalized equation, the outer
// epsilon-refinement loop with its Cauchy-style stopping rule, the
// truncation scheme, random-horizon pinning and recovery of the
// reflection process K.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvbsde/convex.hpp"
#include "mvbsde/core.hpp"
#include "mvbsde/ensemble.hpp"
#include "mvbsde/generator.hpp"
#include "mvbsde/martingale.hpp"
#include "mvbsde/mollifier.hpp"
#include "mvbsde/regression.hpp"

namespace mvbsde {

enum class PenaltyMode { Explicit, Implicit };

struct SolveOptions {
    PenaltyMode mode = PenaltyMode::Explicit;
    int degree = 3;          // regression basis degree
    int quad_nodes = 64;     // mollifier quadrature order
    int threads = 1;
    double p = 2.0;          // weight exponent
    double lambda = 0.5;
    // The penalty eps, the mollifier eps and the A-gate eps are tied to one
    // schedule value by default; nonzero overrides decouple them.
    double eps_mollifier_override = 0;
    double eps_gate_override = 0;
    // Mollify non-Lipschitz drivers inside the solver (Lipschitz catalog
    // generators are evaluated directly).
    bool mollify_non_lipschitz = true;
};

struct SolveDiagnostics {
    double max_condition_number = 1;
    double max_dq = 0;
    bool step_constraint_checked = false;
    int min_live_paths = 0;
    bool used_mollifier = false;
};

struct PenalizedSolution {
    double eps = 0, eps_gate = 0, eps_moll = 0;
    PenaltyMode mode = PenaltyMode::Explicit;
    int paths = 0, steps = 0, m = 1, kdim = 1;
    std::vector<double> y;        // paths*(steps+1)*m
    std::vector<double> z;        // paths*(steps+1)*m*kdim, terminal row zero
    std::vector<double> u1, u2;   // penalty gradients grad phi_eps(Y), grad psi_eps(Y)
    SolveDiagnostics diag;

    std::size_t ynode(int path, int i) const {
        return (static_cast<std::size_t>(path) * (steps + 1) + i) * m;
    }
    std::size_t znode(int path, int i) const {
        return (static_cast<std::size_t>(path) * (steps + 1) + i) * m * kdim;
    }
    Vec y_at(int path, int i) const {
        Vec r(m);
        for (int d = 0; d < m; ++d) r[d] = y[ynode(path, i) + d];
        return r;
    }
    Vec z_at(int path, int i) const {
        Vec r(m * kdim);
        for (int d = 0; d < m * kdim; ++d) r[d] = z[znode(path, i) + d];
        return r;
    }
};

struct MultivaluedSolution {
    int paths = 0, steps = 0, m = 1, kdim = 1;
    std::vector<double> y, z;          // final iterate
    std::vector<double> k;             // reflection process, k(path, 0) = 0
    std::vector<double> u1, u2;        // final penalty gradients
    std::vector<double> eps_schedule;
    std::vector<double> cauchy_residuals;  // one per refinement step
    std::vector<double> penalty_energy;    // one per schedule entry
    std::vector<double> y0_by_eps;         // ensemble Y_0 mean per iterate
    bool converged = false;
    double final_eps = 0, eps_gate = 0, eps_moll = 0;
    PenaltyMode mode = PenaltyMode::Explicit;
    SolveDiagnostics diag;

    std::size_t ynode(int path, int i) const {
        return (static_cast<std::size_t>(path) * (steps + 1) + i) * m;
    }
    std::size_t znode(int path, int i) const {
        return (static_cast<std::size_t>(path) * (steps + 1) + i) * m * kdim;
    }
    Vec y_at(int path, int i) const {
        Vec r(m);
        for (int d = 0; d < m; ++d) r[d] = y[ynode(path, i) + d];
        return r;
    }
    Vec z_at(int path, int i) const {
        Vec r(m * kdim);
        for (int d = 0; d < m * kdim; ++d) r[d] = z[znode(path, i) + d];
        return r;
    }
    Vec k_at(int path, int i) const {
        Vec r(m);
        for (int d = 0; d < m; ++d) r[d] = k[ynode(path, i) + d];
        return r;
    }

    double y0_mean() const {
        double s = 0;
        for (int p = 0; p < paths; ++p) s += y[ynode(p, 0)];
        return s / paths;
    }
};

namespace detail {

// Closed-form inverse of y -> y + c1 grad phi_eps(y) + c2 grad psi_eps(y)
// in one dimension. The supported kinds make the map piecewise linear and
// strictly increasing, so the bracketing segment is inverted exactly.
class ImplicitResolver {
public:
    ImplicitResolver(const ConvexSpec& phi, const ConvexSpec& psi, double eps)
        : phi_(phi), psi_(psi), eps_(eps) {
        require_supported(phi);
        require_supported(psi);
        add_breakpoints(phi);
        add_breakpoints(psi);
        std::sort(bps_.begin(), bps_.end());
        bps_.erase(std::unique(bps_.begin(), bps_.end()), bps_.end());
    }

    static void require_supported(const ConvexSpec& s) {
        switch (s.kind()) {
            case ConvexKind::Zero:
            case ConvexKind::IndicatorInterval:
            case ConvexKind::Quadratic:
            case ConvexKind::MaxZero: return;
            case ConvexKind::AbsPower:
                if (s.exponent() == 1.0 || s.exponent() == 2.0) return;
                throw DomainError(
                    "implicit penalty requires a piecewise-linear Yosida gradient; "
                    "abs_power exponent " + std::to_string(s.exponent()) +
                    " is not supported");
        }
    }

    double solve(double rhs, double c1, double c2) const {
        auto g = [&](double y) {
            return y + c1 * grad1(phi_, y) + c2 * grad1(psi_, y);
        };
        if (bps_.empty()) {
            // globally linear map
            const double g0 = g(0.0), g1 = g(1.0);
            return (rhs - g0) / (g1 - g0);
        }
        // left unbounded segment
        if (rhs < g(bps_.front())) {
            const double x0 = bps_.front() - 2.0, x1 = bps_.front() - 1.0;
            const double slope = g(x1) - g(x0);
            return x1 + (rhs - g(x1)) / slope;
        }
        for (std::size_t s = 0; s + 1 < bps_.size(); ++s) {
            const double lo = bps_[s], hi = bps_[s + 1];
            const double glo = g(lo), ghi = g(hi);
            if (rhs >= glo && rhs <= ghi) {
                if (ghi == glo) return lo;
                return lo + (rhs - glo) * (hi - lo) / (ghi - glo);
            }
        }
        const double x0 = bps_.back() + 1.0, x1 = bps_.back() + 2.0;
        const double slope = g(x1) - g(x0);
        return x0 + (rhs - g(x0)) / slope;
    }

private:
    double grad1(const ConvexSpec& s, double y) const {
        return s.grad_moreau_scalar(y, eps_);
    }

    void add_breakpoints(const ConvexSpec& s) {
        switch (s.kind()) {
            case ConvexKind::IndicatorInterval:
                if (std::isfinite(s.lower())) bps_.push_back(s.lower());
                if (std::isfinite(s.upper())) bps_.push_back(s.upper());
                break;
            case ConvexKind::MaxZero:
                bps_.push_back(0.0);
                bps_.push_back(eps_);
                break;
            case ConvexKind::AbsPower:
                if (s.exponent() == 1.0) {
                    bps_.push_back(-eps_);
                    bps_.push_back(eps_);
                }
                break;
            default: break;
        }
    }

    const ConvexSpec& phi_;
    const ConvexSpec& psi_;
    double eps_;
    std::vector<double> bps_;
};

}  // namespace detail

// One backward-Euler pass for the penalized equation at a fixed eps:
//   Y_i = E_i[Y_{i+1}] + H_eps(t_i, ., Z_i) dQ_i - grad Psi^eps(t_i, .) dQ_i,
// with Z from the martingale-increment regression E_i[Y_{i+1} dB_i] / dt and
// the A-gate 1_{[0,1/eps]}(A_i) applied to both the driver and the penalty.
inline PenalizedSolution solve_penalized(const PathEnsemble& ens, const GeneratorSpec& gen,
                                         const ConvexSpec& phi, const ConvexSpec& psi,
                                         const Terminal& eta, double eps,
                                         const SolveOptions& opts = {}) {
    if (!(eps > 0)) throw DomainError("solve_penalized: eps must be positive");
    if (gen.m != phi.dimension() || gen.m != psi.dimension())
        throw DomainError("solve_penalized: obstacle dimension mismatch");
    if (gen.k != ens.bdim)
        throw DomainError("solve_penalized: generator k does not match ensemble");

    const int m = gen.m, kdim = ens.bdim, K = ens.steps, N = ens.paths;
    const double eps_gate =
        opts.eps_gate_override > 0 ? opts.eps_gate_override : eps;
    const double eps_moll =
        opts.eps_mollifier_override > 0 ? opts.eps_mollifier_override : eps;

    PenalizedSolution sol;
    sol.eps = eps;
    sol.eps_gate = eps_gate;
    sol.eps_moll = eps_moll;
    sol.mode = opts.mode;
    sol.paths = N;
    sol.steps = K;
    sol.m = m;
    sol.kdim = kdim;
    sol.y.assign(static_cast<std::size_t>(N) * (K + 1) * m, 0.0);
    sol.z.assign(static_cast<std::size_t>(N) * (K + 1) * m * kdim, 0.0);
    sol.u1 = sol.y;
    sol.u2 = sol.y;
    sol.diag.min_live_paths = N;

    // step constraint for the stiff explicit penalty
    double max_dq = 0;
    for (int p = 0; p < N; ++p)
        for (int i = 0; i < K; ++i) max_dq = std::max(max_dq, ens.dq(p, i));
    sol.diag.max_dq = max_dq;
    sol.diag.step_constraint_checked = true;
    const bool penalty_present = !(phi.is_zero() && psi.is_zero());
    if (opts.mode == PenaltyMode::Explicit && penalty_present && max_dq > eps / 2) {
        const int min_steps =
            static_cast<int>(std::ceil(K * max_dq / (eps / 2.0)));
        throw DomainError("explicit penalty step constraint violated: max dQ = " +
                          std::to_string(max_dq) + " > eps/2 = " +
                          std::to_string(eps / 2) + "; need at least " +
                          std::to_string(min_steps) + " steps");
    }

    const bool use_moll = opts.mollify_non_lipschitz && !gen.lipschitz_in_y();
    sol.diag.used_mollifier = use_moll;
    MollifierConfig moll;
    if (use_moll) moll = MollifierConfig::make(eps_moll, m, opts.quad_nodes);

    // terminal values
    std::vector<Vec> etas(N);
    for (int p = 0; p < N; ++p) {
        etas[p] = eta.eval(ens, p);
        if (static_cast<int>(etas[p].size()) != m)
            throw DomainError("terminal dimension does not match state dimension");
        for (int d = 0; d < m; ++d) sol.y[sol.ynode(p, K) + d] = etas[p][d];
        const MoreauOutput mo1 = moreau(phi, etas[p], eps);
        const MoreauOutput mo2 = moreau(psi, etas[p], eps);
        for (int d = 0; d < m; ++d) {
            sol.u1[sol.ynode(p, K) + d] = mo1.gradient[d];
            sol.u2[sol.ynode(p, K) + d] = mo2.gradient[d];
        }
    }

    detail::ImplicitResolver* resolver = nullptr;
    detail::ImplicitResolver resolver_store(phi, psi, eps);
    if (opts.mode == PenaltyMode::Implicit) resolver = &resolver_store;

    PolyBasis basis(opts.degree, ens.bdim);
    const bool random_horizon = ens.cfg.has_random_horizon();

    for (int i = K - 1; i >= 0; --i) {
        std::vector<int> live;
        live.reserve(N);
        for (int p = 0; p < N; ++p) {
            if (random_horizon && i >= ens.exit_step[p]) {
                // pinned beyond the exit: (Y, Z) = (eta, 0)
                for (int d = 0; d < m; ++d) sol.y[sol.ynode(p, i) + d] = etas[p][d];
            } else {
                live.push_back(p);
            }
        }
        sol.diag.min_live_paths = std::min(sol.diag.min_live_paths,
                                           static_cast<int>(live.size()));
        if (!live.empty()) {
            const int nl = static_cast<int>(live.size());
            // conditional expectation of Y_{i+1} and the Z regression
            std::vector<Vec> yhat(nl, Vec(m));
            std::vector<Vec> zhat(nl, Vec(m * kdim));
            double cond = 1;
            for (int d = 0; d < m; ++d) {
                Vec target(nl);
                for (int r = 0; r < nl; ++r)
                    target[r] = sol.y[sol.ynode(live[r], i + 1) + d];
                Vec fit = conditional_expectation(ens, i, target, opts.degree, &live, &cond);
                sol.diag.max_condition_number =
                    std::max(sol.diag.max_condition_number, cond);
                for (int r = 0; r < nl; ++r) yhat[r][d] = fit[r];
                for (int kd = 0; kd < kdim; ++kd) {
                    // centered increment regression (control variate)
                    Vec zt(nl);
                    for (int r = 0; r < nl; ++r)
                        zt[r] = (sol.y[sol.ynode(live[r], i + 1) + d] - fit[r]) *
                                ens.db(live[r], i, kd) / ens.dt;
                    Vec zfit = conditional_expectation(ens, i, zt, opts.degree, &live);
                    for (int r = 0; r < nl; ++r) zhat[r][d * kdim + kd] = zfit[r];
                }
            }
            parallel_for(
                static_cast<std::size_t>(nl),
                [&](std::size_t rr) {
                    const int r = static_cast<int>(rr);
                    const int p = live[r];
                    const double dqi = ens.dq(p, i);
                    const double dai = ens.da(p, i);
                    const double alpha = ens.alpha(p, i);
                    const bool gate_a = ens.aval(p, i) <= 1.0 / eps_gate;
                    const bool gate_h = ens.incr_in_horizon(p, i);
                    const bool gate = gate_a && gate_h;
                    const Vec bi = ens.bvec(p, i);
                    const double ti = ens.t[i];
                    const Vec& yh = yhat[r];
                    const Vec& zi = zhat[r];

                    Vec hterm(m, 0.0);
                    if (gate) {
                        const Vec fv = use_moll ? mollify_f(gen, moll, ti, bi, yh, zi)
                                                : gen.f(ti, bi, yh, zi);
                        const Vec gv = use_moll ? mollify_g(gen, moll, ti, bi, yh)
                                                : gen.g(ti, bi, yh);
                        for (int d = 0; d < m; ++d)
                            hterm[d] = alpha * fv[d] + (1.0 - alpha) * gv[d];
                    }

                    Vec ynew(m);
                    if (opts.mode == PenaltyMode::Explicit) {
                        Vec pen(m, 0.0);
                        if (gate) {
                            const Vec g1 = phi.grad_moreau(yh, eps);
                            const Vec g2 = psi.grad_moreau(yh, eps);
                            for (int d = 0; d < m; ++d)
                                pen[d] = alpha * g1[d] + (1.0 - alpha) * g2[d];
                        }
                        for (int d = 0; d < m; ++d)
                            ynew[d] = yh[d] + (hterm[d] - pen[d]) * dqi;
                    } else {
                        // y + [dt grad phi_eps + dA grad psi_eps](y) = rhs
                        const double c1 = gate ? ens.dt : 0.0;
                        const double c2 = gate ? dai : 0.0;
                        for (int d = 0; d < m; ++d) {
                            const double rhs = yh[d] + hterm[d] * dqi;
                            ynew[d] = resolver->solve(rhs, c1, c2);
                        }
                    }
                    for (int d = 0; d < m; ++d) {
                        sol.y[sol.ynode(p, i) + d] = ynew[d];
                        for (int kd = 0; kd < kdim; ++kd)
                            sol.z[sol.znode(p, i) + d * kdim + kd] = zi[d * kdim + kd];
                    }
                },
                opts.threads);
        }
        // penalty gradients at the realized Y_i (recomputable from convex_core)
        for (int p = 0; p < N; ++p) {
            const Vec yi = sol.y_at(p, i);
            const Vec g1 = phi.grad_moreau(yi, eps);
            const Vec g2 = psi.grad_moreau(yi, eps);
            for (int d = 0; d < m; ++d) {
                sol.u1[sol.ynode(p, i) + d] = g1[d];
                sol.u2[sol.ynode(p, i) + d] = g2[d];
            }
        }
    }
    return sol;
}

// The driver value used by the solve at (path, i), rebuilt for K recovery
// and the verification harness.
inline Vec solve_driver_h(const PathEnsemble& ens, const GeneratorSpec& gen,
                          const PenalizedSolution& sol, int path, int i,
                          const MollifierConfig* moll) {
    const double alpha = ens.alpha(path, i);
    const bool gate = (ens.aval(path, i) <= 1.0 / sol.eps_gate) &&
                      ens.incr_in_horizon(path, i);
    Vec h(sol.m, 0.0);
    if (!gate) return h;
    const Vec bi = ens.bvec(path, i);
    const Vec yi = sol.y_at(path, i);
    const Vec zi = sol.z_at(path, i);
    const Vec fv = moll ? mollify_f(gen, *moll, ens.t[i], bi, yi, zi)
                        : gen.f(ens.t[i], bi, yi, zi);
    const Vec gv = moll ? mollify_g(gen, *moll, ens.t[i], bi, yi)
                        : gen.g(ens.t[i], bi, yi);
    for (int d = 0; d < sol.m; ++d) h[d] = alpha * fv[d] + (1.0 - alpha) * gv[d];
    return h;
}

// Reflection process recovered pathwise from the solved grids:
//   dK_i = Y_i - Y_{i+1} - H(t_i, Y_i, Z_i) dQ_i + Z_i dB_i,  K_0 = 0.
// Nonnegative increments push Y upward (lower obstacles); on penalized
// solutions dK tracks -grad Psi^eps(Y) dQ up to O(dt) and regression noise.
inline std::vector<double> recover_k(const PenalizedSolution& sol, const PathEnsemble& ens,
                                     const GeneratorSpec& gen, const SolveOptions& opts = {}) {
    const int m = sol.m, K = sol.steps, N = sol.paths;
    std::vector<double> kproc(static_cast<std::size_t>(N) * (K + 1) * m, 0.0);
    const bool use_moll = sol.diag.used_mollifier;
    MollifierConfig moll;
    if (use_moll) moll = MollifierConfig::make(sol.eps_moll, m, opts.quad_nodes);
    for (int p = 0; p < N; ++p) {
        for (int i = 0; i < K; ++i) {
            const Vec h = solve_driver_h(ens, gen, sol, p, i, use_moll ? &moll : nullptr);
            const double dqi = ens.dq(p, i);
            for (int d = 0; d < m; ++d) {
                double zdb = 0;
                for (int kd = 0; kd < sol.kdim; ++kd)
                    zdb += sol.z[sol.znode(p, i) + d * sol.kdim + kd] * ens.db(p, i, kd);
                const double dk = sol.y[sol.ynode(p, i) + d] -
                                  sol.y[sol.ynode(p, i + 1) + d] - h[d] * dqi + zdb;
                kproc[sol.ynode(p, i + 1) + d] = kproc[sol.ynode(p, i) + d] + dk;
            }
        }
    }
    return kproc;
}

// Outer refinement over a strictly decreasing eps schedule. The stopping
// rule is the computable surrogate of the Cauchy criterion: the weighted
// sup distance in Y between successive iterates, averaged over paths, plus
// the weighted L2 distance in Z.
inline MultivaluedSolution refine_epsilon(PathEnsemble& ens, const GeneratorSpec& gen,
                                          const ConvexSpec& phi, const ConvexSpec& psi,
                                          const Terminal& eta,
                                          const std::vector<double>& schedule, double tol,
                                          const SolveOptions& opts = {}) {
    if (schedule.size() < 2)
        throw DomainError("refine_epsilon: schedule needs at least 2 entries");
    for (std::size_t i = 0; i + 1 < schedule.size(); ++i)
        if (!(schedule[i + 1] < schedule[i]))
            throw DomainError("refine_epsilon: schedule must be strictly decreasing");
    if (!ens.weights_ready)
        compute_weights(ens, gen.mu, gen.nu, gen.ell, opts.p, opts.lambda);

    MultivaluedSolution out;
    out.eps_schedule = schedule;
    out.mode = opts.mode;

    PenalizedSolution prev;
    bool have_prev = false;
    for (double eps : schedule) {
        PenalizedSolution cur = solve_penalized(ens, gen, phi, psi, eta, eps, opts);
        // penalty energy: E int e^{2V+} [ |grad phi_eps(Y)|^2 dr + |grad psi_eps(Y)|^2 dA ]
        double energy = 0;
        for (int p = 0; p < cur.paths; ++p) {
            for (int i = 0; i < cur.steps; ++i) {
                const bool gate = (ens.aval(p, i) <= 1.0 / cur.eps_gate) &&
                                  ens.incr_in_horizon(p, i);
                if (!gate) continue;
                const double w = std::exp(2.0 * ens.vplusval(p, i));
                double s1 = 0, s2 = 0;
                for (int d = 0; d < cur.m; ++d) {
                    s1 += cur.u1[cur.ynode(p, i) + d] * cur.u1[cur.ynode(p, i) + d];
                    s2 += cur.u2[cur.ynode(p, i) + d] * cur.u2[cur.ynode(p, i) + d];
                }
                energy += w * (s1 * ens.dt + s2 * ens.da(p, i));
            }
        }
        out.penalty_energy.push_back(energy / cur.paths);
        {
            double y0 = 0;
            for (int p = 0; p < cur.paths; ++p) y0 += cur.y[cur.ynode(p, 0)];
            out.y0_by_eps.push_back(y0 / cur.paths);
        }

        if (have_prev) {
            // max over the grid of the path-averaged weighted Y gap
            double res_y = 0;
            for (int i = 0; i <= cur.steps; ++i) {
                double mean = 0;
                for (int p = 0; p < cur.paths; ++p) {
                    double d2 = 0;
                    for (int d = 0; d < cur.m; ++d) {
                        const double dd = cur.y[cur.ynode(p, i) + d] -
                                          prev.y[prev.ynode(p, i) + d];
                        d2 += dd * dd;
                    }
                    mean += std::exp(ens.vplusval(p, i)) * std::sqrt(d2);
                }
                res_y = std::max(res_y, mean / cur.paths);
            }
            double res_z = 0;
            for (int p = 0; p < cur.paths; ++p) {
                double acc = 0;
                for (int i = 0; i < cur.steps; ++i) {
                    double d2 = 0;
                    for (int d = 0; d < cur.m * cur.kdim; ++d) {
                        const double dd = cur.z[cur.znode(p, i) + d] -
                                          prev.z[prev.znode(p, i) + d];
                        d2 += dd * dd;
                    }
                    acc += std::exp(2.0 * ens.vplusval(p, i)) * d2 * ens.dt;
                }
                res_z += acc;
            }
            res_z = std::sqrt(res_z / cur.paths);
            out.cauchy_residuals.push_back(res_y + res_z);
        }
        prev = std::move(cur);
        have_prev = true;
    }

    out.converged = !out.cauchy_residuals.empty() && out.cauchy_residuals.back() <= tol;
    out.paths = prev.paths;
    out.steps = prev.steps;
    out.m = prev.m;
    out.kdim = prev.kdim;
    out.final_eps = prev.eps;
    out.eps_gate = prev.eps_gate;
    out.eps_moll = prev.eps_moll;
    out.diag = prev.diag;
    out.k = recover_k(prev, ens, gen, opts);
    out.y = std::move(prev.y);
    out.z = std::move(prev.z);
    out.u1 = std::move(prev.u1);
    out.u2 = std::move(prev.u2);
    return out;
}

// Random-horizon solve: identical machinery, with the ensemble's exit times
// driving the horizon gates and the beyond-exit pinning.
inline MultivaluedSolution solve_random_horizon(PathEnsemble& ens, const GeneratorSpec& gen,
                                                const ConvexSpec& phi, const ConvexSpec& psi,
                                                const Terminal& eta,
                                                const std::vector<double>& schedule,
                                                double tol, const SolveOptions& opts = {}) {
    if (!ens.cfg.has_random_horizon())
        throw DomainError("solve_random_horizon: ensemble has no exit-time horizon");
    return refine_epsilon(ens, gen, phi, psi, eta, schedule, tol, opts);
}

// Truncated data of the approximation scheme: eta gated by
// |eta| + phi(eta) + psi(eta) + V_T^+ <= n, drivers recentred by
// F(t,0,0) 1_{(n,inf)}(beta_t) with the pathwise
// beta_t = t + A_t + |mu_t| + |nu_t| + ell_t + V_t^+ + |F(t,0,0)| + |G(t,0)|.
struct TruncatedProblem {
    int n = 0;
    int paths = 0, steps = 0, m = 1;
    std::vector<Vec> eta;            // truncated terminal, per path
    std::vector<std::uint8_t> gate;  // 1 iff beta_{t_i} <= n, per (path, step)
    GeneratorSpec base;

    bool gate_at(int path, int i) const {
        return gate[static_cast<std::size_t>(path) * (steps + 1) + i] != 0;
    }
    Vec f(const PathEnsemble& ens, int path, int i, const Vec& y, const Vec& z) const {
        Vec r = base.f(ens.t[i], ens.bvec(path, i), y, z);
        if (!gate_at(path, i)) {
            const Vec f0 = base.f(ens.t[i], ens.bvec(path, i), Vec(m, 0.0),
                                  Vec(static_cast<std::size_t>(m) * base.k, 0.0));
            for (int d = 0; d < m; ++d) r[d] -= f0[d];
        }
        return r;
    }
    Vec g(const PathEnsemble& ens, int path, int i, const Vec& y) const {
        Vec r = base.g(ens.t[i], ens.bvec(path, i), y);
        if (!gate_at(path, i)) {
            const Vec g0 = base.g(ens.t[i], ens.bvec(path, i), Vec(m, 0.0));
            for (int d = 0; d < m; ++d) r[d] -= g0[d];
        }
        return r;
    }
};

inline TruncatedProblem truncate_problem(const GeneratorSpec& gen, const Terminal& eta,
                                         int n, const PathEnsemble& ens,
                                         const ConvexSpec& phi, const ConvexSpec& psi,
                                         double p = 2.0, double lambda = 0.5) {
    if (n < 0) throw DomainError("truncate_problem: n must be >= 0");
    TruncatedProblem tp;
    tp.n = n;
    tp.paths = ens.paths;
    tp.steps = ens.steps;
    tp.m = gen.m;
    tp.base = gen;
    tp.eta.resize(ens.paths);
    tp.gate.assign(static_cast<std::size_t>(ens.paths) * (ens.steps + 1), 0);

    const double np = np_const(p);
    const Vec z0(static_cast<std::size_t>(gen.m) * gen.k, 0.0);
    for (int pth = 0; pth < ens.paths; ++pth) {
        // local V+ accumulation (the ensemble may not carry weights yet)
        double vplus = 0;
        double vplus_T = 0;
        {
            double acc = 0;
            for (int i = 0; i < ens.steps; ++i) {
                if (ens.incr_in_horizon(pth, i)) {
                    const Vec bi = ens.bvec(pth, i);
                    const double mu = gen.mu(ens.t[i], bi);
                    const double nu = gen.nu(ens.t[i], bi);
                    const double l = gen.ell(ens.t[i], bi);
                    acc += (positive_part(mu) + l * l / (2.0 * np * lambda)) * ens.dt +
                           positive_part(nu) * ens.da(pth, i);
                }
            }
            vplus_T = acc;
        }
        const Vec e = eta.eval(ens, pth);
        const double gate_arg = norm2(e) + phi.value(e) + psi.value(e) + vplus_T;
        tp.eta[pth] = (gate_arg <= static_cast<double>(n)) ? e : Vec(gen.m, 0.0);

        double acc = 0;
        for (int i = 0; i <= ens.steps; ++i) {
            const Vec bi = ens.bvec(pth, i);
            const double ti = ens.t[i];
            vplus = acc;
            const double mu = gen.mu(ti, bi);
            const double nu = gen.nu(ti, bi);
            const double l = gen.ell(ti, bi);
            const double f0 = norm2(gen.f(ti, bi, Vec(gen.m, 0.0), z0));
            const double g0 = norm2(gen.g(ti, bi, Vec(gen.m, 0.0)));
            const double beta = ti + ens.aval(pth, i) + std::fabs(mu) + std::fabs(nu) +
                                l + vplus + f0 + g0;
            tp.gate[static_cast<std::size_t>(pth) * (ens.steps + 1) + i] =
                beta <= static_cast<double>(n) ? 1 : 0;
            if (i < ens.steps && ens.incr_in_horizon(pth, i))
                acc += (positive_part(mu) + l * l / (2.0 * np * lambda)) * ens.dt +
                       positive_part(nu) * ens.da(pth, i);
        }
    }
    return tp;
}

// Discrete subdifferential test: for grid test functions y(.) and windows
// [t,s], the residual of
//   int <y(r) - Y_r, dK_r> + int Psi(r, Y_r) dQ_r <= int Psi(r, y(r)) dQ_r
// with dK in the paper's subdifferential orientation (= -dK of the stored
// reflection process). Psi at the solution is evaluated through the Moreau
// envelope at eval_eps for indicator obstacles (exact on the domain);
// test functions with infinite Psi are skipped.
struct SubdiffEntry {
    int test_index = 0;
    int window_lo = 0, window_hi = 0;
    double residual = 0;
    bool skipped = false;
    std::string note;
};

inline double psi_surrogate_value(const ConvexSpec& spec, const Vec& y, double eval_eps) {
    if (spec.kind() == ConvexKind::IndicatorInterval)
        return spec.domain_dist2(y) / (2.0 * eval_eps);
    return spec.value(y);
}

inline std::vector<SubdiffEntry> subdiff_test(
    const MultivaluedSolution& sol, const PathEnsemble& ens, const ConvexSpec& phi,
    const ConvexSpec& psi, const std::vector<std::function<Vec(double)>>& test_paths,
    const std::vector<std::pair<int, int>>& windows, double eval_eps = 0) {
    if (eval_eps <= 0) eval_eps = sol.final_eps;
    std::vector<SubdiffEntry> out;
    for (std::size_t ti = 0; ti < test_paths.size(); ++ti) {
        // test functions must have finite Psi on the grid
        bool finite = true;
        for (int i = 0; i < sol.steps && finite; ++i) {
            const Vec yv = test_paths[ti](ens.t[i]);
            if (!phi.in_domain(yv) || !psi.in_domain(yv)) finite = false;
        }
        for (const auto& w : windows) {
            SubdiffEntry e;
            e.test_index = static_cast<int>(ti);
            e.window_lo = w.first;
            e.window_hi = w.second;
            if (!finite) {
                e.skipped = true;
                e.note = "test function leaves the effective domain (Psi infinite)";
                out.push_back(e);
                continue;
            }
            double mean = 0;
            for (int p = 0; p < sol.paths; ++p) {
                double acc = 0;
                for (int i = w.first; i < w.second; ++i) {
                    if (!ens.incr_in_horizon(p, i)) continue;
                    const double alpha = ens.alpha(p, i);
                    const double dqi = ens.dq(p, i);
                    const Vec yi = sol.y_at(p, i);
                    const Vec yt = test_paths[ti](ens.t[i]);
                    // paper-orientation dK = -(stored reflection increments)
                    for (int d = 0; d < sol.m; ++d) {
                        const double dk_paper = -(sol.k[sol.ynode(p, i + 1) + d] -
                                                  sol.k[sol.ynode(p, i) + d]);
                        acc += (yt[d] - yi[d]) * dk_paper;
                    }
                    const double psi_y = alpha * psi_surrogate_value(phi, yi, eval_eps) +
                                         (1 - alpha) * psi_surrogate_value(psi, yi, eval_eps);
                    const double psi_t =
                        alpha * phi.value(yt) + (1 - alpha) * psi.value(yt);
                    acc += (psi_y - psi_t) * dqi;
                }
                mean += acc;
            }
            e.residual = mean / sol.paths;
            out.push_back(e);
        }
    }
    return out;
}

}  // namespace mvbsde
