// Simulation of the driving data: Brownian ensembles on a uniform grid, the
// increasing clock A with Q = t + A and density alpha, horizon detection for
// first-exit times, and the discounting weight processes V and V+.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvbsde/core.hpp"
#include "mvbsde/rng.hpp"

namespace mvbsde {

enum class ClockKind { None, Linear, Integral };
enum class ClockIntegrand { AbsB, SquareB };

struct ClockSpec {
    ClockKind kind = ClockKind::None;
    double linear_rate = 0;  // A_t = rate * t
    ClockIntegrand integrand = ClockIntegrand::SquareB;

    static ClockSpec none() { return {}; }
    static ClockSpec linear(double c) {
        if (c < 0) throw DomainError("linear clock rate must be >= 0");
        ClockSpec s;
        s.kind = ClockKind::Linear;
        s.linear_rate = c;
        return s;
    }
    static ClockSpec integral(ClockIntegrand g) {
        ClockSpec s;
        s.kind = ClockKind::Integral;
        s.integrand = g;
        return s;
    }
};

struct GridConfig {
    double horizon = 1.0;   // T
    int steps = 100;        // K
    int paths = 1000;       // N
    int brownian_dim = 1;   // k
    int state_dim = 1;      // m
    std::uint64_t seed = 42;
    ClockSpec clock;
    // Random horizon: first exit of the first Brownian coordinate from
    // (-exit_level, exit_level), detected at grid nodes. 0 disables it.
    double exit_level = 0;
    // Guard against accidentally huge allocations.
    std::size_t resource_cap = 200'000'000;

    bool has_random_horizon() const { return exit_level > 0; }
};

// Immutable once simulated; per-path slices may be processed in parallel.
struct PathEnsemble {
    GridConfig cfg;
    int paths = 0, steps = 0, bdim = 0;
    double dt = 0;
    std::vector<double> t;       // steps+1 node times
    std::vector<double> b;       // paths*(steps+1)*bdim
    std::vector<double> a;       // paths*(steps+1) clock A
    std::vector<double> q;       // paths*(steps+1) Q = t + A
    std::vector<double> v;       // paths*(steps+1) weight V (after compute_weights)
    std::vector<double> vplus;   // paths*(steps+1) weight V+
    std::vector<int> exit_step;  // per path; == steps when no exit before T
    bool weights_ready = false;
    double p_weight = 2, lambda_weight = 0.5;

    std::size_t node(int path, int i) const {
        return static_cast<std::size_t>(path) * (steps + 1) + i;
    }
    double bval(int path, int i, int d = 0) const {
        return b[(node(path, i)) * bdim + d];
    }
    double db(int path, int i, int d = 0) const {
        return bval(path, i + 1, d) - bval(path, i, d);
    }
    Vec bvec(int path, int i) const {
        Vec r(bdim);
        for (int d = 0; d < bdim; ++d) r[d] = bval(path, i, d);
        return r;
    }
    double aval(int path, int i) const { return a[node(path, i)]; }
    double qval(int path, int i) const { return q[node(path, i)]; }
    double dq(int path, int i) const { return qval(path, i + 1) - qval(path, i); }
    double da(int path, int i) const { return aval(path, i + 1) - aval(path, i); }
    // dt/dQ clamped into [0,1]: rounding can push the clock-free ratio one
    // ulp above 1
    double alpha(int path, int i) const {
        return std::min(1.0, std::max(0.0, dt / dq(path, i)));
    }
    double vval(int path, int i) const { return v[node(path, i)]; }
    double vplusval(int path, int i) const { return vplus[node(path, i)]; }

    // Horizon gating: node i is on [0,tau] iff i <= exit_step; the increment
    // [t_i, t_{i+1}] contributes iff i < exit_step.
    bool node_in_horizon(int path, int i) const { return i <= exit_step[path]; }
    bool incr_in_horizon(int path, int i) const { return i < exit_step[path]; }
};

inline PathEnsemble simulate(const GridConfig& cfg, int threads = 1) {
    if (!(cfg.horizon > 0)) throw DomainError("horizon must be positive");
    if (cfg.steps < 1 || cfg.paths < 1 || cfg.brownian_dim < 1 || cfg.state_dim < 1)
        throw DomainError("steps, paths and dimensions must be positive");
    const std::size_t need = static_cast<std::size_t>(cfg.paths) *
                             (cfg.steps + 1) * cfg.brownian_dim;
    if (need > cfg.resource_cap)
        throw DomainError("simulation size " + std::to_string(need) +
                          " exceeds resource cap " + std::to_string(cfg.resource_cap));

    PathEnsemble ens;
    ens.cfg = cfg;
    ens.paths = cfg.paths;
    ens.steps = cfg.steps;
    ens.bdim = cfg.brownian_dim;
    ens.dt = cfg.horizon / cfg.steps;
    ens.t.resize(cfg.steps + 1);
    for (int i = 0; i <= cfg.steps; ++i) ens.t[i] = i * ens.dt;
    ens.b.assign(need, 0.0);
    const std::size_t nodes = static_cast<std::size_t>(cfg.paths) * (cfg.steps + 1);
    ens.a.assign(nodes, 0.0);
    ens.q.assign(nodes, 0.0);
    ens.v.assign(nodes, 0.0);
    ens.vplus.assign(nodes, 0.0);
    ens.exit_step.assign(cfg.paths, cfg.steps);

    const double sdt = std::sqrt(ens.dt);
    parallel_for(
        static_cast<std::size_t>(cfg.paths),
        [&](std::size_t pth) {
            const int p = static_cast<int>(pth);
            // Brownian path from counter-based increments
            for (int i = 0; i < cfg.steps; ++i)
                for (int d = 0; d < cfg.brownian_dim; ++d) {
                    const double dbi = sdt * normal_sample(cfg.seed, pth, i, d);
                    ens.b[(ens.node(p, i + 1)) * cfg.brownian_dim + d] =
                        ens.b[(ens.node(p, i)) * cfg.brownian_dim + d] + dbi;
                }
            // Clock A (left-endpoint rule for the integral kind)
            for (int i = 0; i < cfg.steps; ++i) {
                double dA = 0;
                switch (cfg.clock.kind) {
                    case ClockKind::None: break;
                    case ClockKind::Linear:
                        dA = cfg.clock.linear_rate * ens.dt;
                        break;
                    case ClockKind::Integral: {
                        double g = 0;
                        const double bn = norm2(ens.bvec(p, i));
                        g = cfg.clock.integrand == ClockIntegrand::AbsB ? bn : bn * bn;
                        dA = g * ens.dt;
                        break;
                    }
                }
                ens.a[ens.node(p, i + 1)] = ens.a[ens.node(p, i)] + dA;
            }
            for (int i = 0; i <= cfg.steps; ++i)
                ens.q[ens.node(p, i)] = ens.t[i] + ens.a[ens.node(p, i)];
            // First grid node outside (-L, L) on the first coordinate
            if (cfg.has_random_horizon()) {
                for (int i = 0; i <= cfg.steps; ++i) {
                    if (std::fabs(ens.bval(p, i, 0)) >= cfg.exit_level) {
                        ens.exit_step[p] = i;
                        break;
                    }
                }
            }
        },
        threads);
    return ens;
}

// Every second node of a clock-free ensemble: the same Brownian paths on a
// grid with half the resolution, for common-random-number refinement studies.
inline PathEnsemble coarsen_ensemble(const PathEnsemble& fine) {
    if (fine.cfg.clock.kind != ClockKind::None)
        throw DomainError("coarsen_ensemble supports clock-free ensembles only");
    if (fine.steps % 2 != 0)
        throw DomainError("coarsen_ensemble needs an even step count");
    PathEnsemble c;
    c.cfg = fine.cfg;
    c.cfg.steps = fine.steps / 2;
    c.paths = fine.paths;
    c.steps = fine.steps / 2;
    c.bdim = fine.bdim;
    c.dt = 2.0 * fine.dt;
    c.t.resize(c.steps + 1);
    for (int i = 0; i <= c.steps; ++i) c.t[i] = i * c.dt;
    const std::size_t nodes = static_cast<std::size_t>(c.paths) * (c.steps + 1);
    c.b.resize(nodes * c.bdim);
    c.a.assign(nodes, 0.0);
    c.q.resize(nodes);
    c.v.assign(nodes, 0.0);
    c.vplus.assign(nodes, 0.0);
    c.exit_step.assign(c.paths, c.steps);
    for (int p = 0; p < c.paths; ++p)
        for (int i = 0; i <= c.steps; ++i) {
            for (int d = 0; d < c.bdim; ++d)
                c.b[c.node(p, i) * c.bdim + d] = fine.bval(p, 2 * i, d);
            c.q[c.node(p, i)] = c.t[i];
            if (fine.cfg.has_random_horizon()) {
                if (std::fabs(c.b[c.node(p, i) * c.bdim]) >= c.cfg.exit_level &&
                    c.exit_step[p] == c.steps && i < c.steps)
                    c.exit_step[p] = i;
            }
        }
    return c;
}

// Coefficient processes may depend on (t, B_t); catalog generators mostly
// use deterministic constants.
using CoefFn = std::function<double(double t, const Vec& b)>;

// Fills V and V+ with the left-endpoint discretization of
//   V_t  = int 1_{[0,tau]} (mu_r + l_r^2 / (2 n_p lambda)) dr + int 1 nu_r dA_r,
//   V+_t = same with mu^+ and nu^+.
inline void compute_weights(PathEnsemble& ens, const CoefFn& mu, const CoefFn& nu,
                            const CoefFn& ell, double p, double lambda) {
    if (!(p > 1)) throw DomainError("compute_weights: p must be > 1");
    if (!(lambda > 0 && lambda < 1)) throw DomainError("lambda must be in (0,1)");
    const double np = np_const(p);
    for (int pth = 0; pth < ens.paths; ++pth) {
        double acc = 0, accp = 0;
        ens.v[ens.node(pth, 0)] = 0;
        ens.vplus[ens.node(pth, 0)] = 0;
        for (int i = 0; i < ens.steps; ++i) {
            if (ens.incr_in_horizon(pth, i)) {
                const Vec bi = ens.bvec(pth, i);
                const double m = mu(ens.t[i], bi);
                const double n = nu(ens.t[i], bi);
                const double l = ell(ens.t[i], bi);
                if (!std::isfinite(m) || !std::isfinite(n) || !std::isfinite(l))
                    throw DomainError("compute_weights: non-finite coefficient");
                const double lterm = l * l / (2.0 * np * lambda);
                acc += (m + lterm) * ens.dt + n * ens.da(pth, i);
                accp += (positive_part(m) + lterm) * ens.dt +
                        positive_part(n) * ens.da(pth, i);
            }
            ens.v[ens.node(pth, i + 1)] = acc;
            ens.vplus[ens.node(pth, i + 1)] = accp;
        }
    }
    ens.weights_ready = true;
    ens.p_weight = p;
    ens.lambda_weight = lambda;
}

}  // namespace mvbsde
