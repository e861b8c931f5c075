// Independent references for the solver: an exact recombining binomial-tree
// dynamic program with multivalued projection at each node, and closed-form
// linear-BSDE solutions. No sampling noise enters either.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mvbsde/convex.hpp"
#include "mvbsde/core.hpp"
#include "mvbsde/ensemble.hpp"
#include "mvbsde/generator.hpp"
#include "mvbsde/martingale.hpp"

namespace mvbsde {

struct TreeConfig {
    int steps = 256;
    double horizon = 1.0;
};

// Node (level i, index j) carries B = (2j - i) sqrt(dt); the tree recombines,
// level i holds i+1 nodes.
struct TreeSolution {
    int steps = 0;
    double horizon = 0, dt = 0;
    std::vector<std::vector<double>> y;  // y[i][j]
    std::vector<std::vector<double>> z;  // central difference across children
    std::vector<std::vector<double>> k;  // expected remaining reflection
    double root_y() const { return y[0][0]; }
    double root_k() const { return k[0][0]; }
    double node_b(int level, int j) const {
        return (2.0 * j - level) * std::sqrt(dt);
    }
};

// Backward recursion Y = proj_{[a,b]}( (Y_up + Y_down)/2 + F(t, cont, Z) dt )
// with Z = (Y_up - Y_down) / (2 sqrt(dt)); the reflection increment is the
// projection correction, accumulated in expectation down the tree.
inline TreeSolution tree_solve(const TreeConfig& cfg, const GeneratorSpec& gen,
                               const ConvexSpec& phi,
                               const std::function<double(double)>& eta) {
    if (cfg.steps < 1) throw DomainError("tree_solve: steps must be positive");
    if (gen.m != 1 || gen.k != 1)
        throw DomainError("tree_solve: oracle supports m = k = 1 only");
    const bool reflected = phi.kind() == ConvexKind::IndicatorInterval;
    if (!reflected && phi.kind() != ConvexKind::Zero)
        throw DomainError("tree_solve: obstacle must be IndicatorInterval or Zero");

    TreeSolution sol;
    sol.steps = cfg.steps;
    sol.horizon = cfg.horizon;
    sol.dt = cfg.horizon / cfg.steps;
    const double sdt = std::sqrt(sol.dt);
    sol.y.resize(cfg.steps + 1);
    sol.z.resize(cfg.steps + 1);
    sol.k.resize(cfg.steps + 1);
    for (int i = 0; i <= cfg.steps; ++i) {
        sol.y[i].assign(i + 1, 0.0);
        sol.z[i].assign(i + 1, 0.0);
        sol.k[i].assign(i + 1, 0.0);
    }
    for (int j = 0; j <= cfg.steps; ++j)
        sol.y[cfg.steps][j] = eta(sol.node_b(cfg.steps, j));

    const double lo = reflected ? phi.lower() : -kInf;
    const double hi = reflected ? phi.upper() : kInf;
    for (int i = cfg.steps - 1; i >= 0; --i) {
        const double t = i * sol.dt;
        for (int j = 0; j <= i; ++j) {
            const double yu = sol.y[i + 1][j + 1];
            const double yd = sol.y[i + 1][j];
            const double zc = (yu - yd) / (2.0 * sdt);
            const double cont = 0.5 * (yu + yd);
            const Vec fv = gen.f(t, Vec{sol.node_b(i, j)}, Vec{cont}, Vec{zc});
            const double pre = cont + fv[0] * sol.dt;
            const double proj = clamp(pre, lo, hi);
            sol.y[i][j] = proj;
            sol.z[i][j] = zc;
            sol.k[i][j] = (proj - pre) + 0.5 * (sol.k[i + 1][j + 1] + sol.k[i + 1][j]);
        }
    }
    return sol;
}

// Y_t = e^{-rho (T - t)} E_t[eta] for F = -rho y, G = 0, phi = psi = 0, with
// the conditional expectation in closed form for catalog terminals.
inline std::vector<double> linear_closed_form(double rho, const Terminal& eta,
                                              const PathEnsemble& ens) {
    const double T = ens.cfg.horizon;
    std::vector<double> y(static_cast<std::size_t>(ens.paths) * (ens.steps + 1));
    for (int p = 0; p < ens.paths; ++p) {
        for (int i = 0; i <= ens.steps; ++i) {
            double cond;
            switch (eta.kind) {
                case Terminal::Kind::Constant: cond = eta.c + eta.shift; break;
                case Terminal::Kind::BrownianT:
                    cond = ens.bval(p, i, 0) + eta.shift;
                    break;
                case Terminal::Kind::BrownianSqT: {
                    const double b = ens.bval(p, i, 0);
                    cond = b * b + (T - ens.t[i]) + eta.shift;
                    break;
                }
                default:
                    throw DomainError("linear_closed_form: non-catalog terminal");
            }
            y[ens.node(p, i)] = std::exp(-rho * (T - ens.t[i])) * cond;
        }
    }
    return y;
}

// Root value of the same closed form under the binomial-tree law.
inline double linear_closed_form_root(double rho, const Terminal& eta, double T) {
    switch (eta.kind) {
        case Terminal::Kind::Constant:
            return std::exp(-rho * T) * (eta.c + eta.shift);
        case Terminal::Kind::BrownianT: return std::exp(-rho * T) * eta.shift;
        case Terminal::Kind::BrownianSqT:
            return std::exp(-rho * T) * (T + eta.shift);
        default: throw DomainError("linear_closed_form_root: non-catalog terminal");
    }
}

}  // namespace mvbsde
