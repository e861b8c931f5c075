// Generators F(t,y,z), G(t,y) with their monotonicity/Lipschitz coefficient
// processes, sharp bounds over |y| <= rho, the truncation beta_eps, the
// mollifier approximations F_eps / G_eps, the combined driver H and the
// obstacle compatibility checker.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mvbsde/convex.hpp"
#include "mvbsde/core.hpp"
#include "mvbsde/mollifier.hpp"

namespace mvbsde {

// beta_eps(z) = z / (1 v (eps |z|)): radial retraction onto the ball of
// radius 1/eps, Frobenius norm for matrix arguments.
inline Vec beta_trunc(const Vec& z, double eps) {
    if (!(eps > 0)) throw DomainError("beta_trunc: eps must be positive");
    const double nz = norm2(z);
    const double denom = std::max(1.0, eps * nz);
    Vec r(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) r[i] = z[i] / denom;
    return r;
}

enum class GenKind { Zero, ConstDrift, Linear, CubicMonotone, PaperExampleA6, Custom };

inline std::string to_string(GenKind k) {
    switch (k) {
        case GenKind::Zero: return "zero";
        case GenKind::ConstDrift: return "const_drift";
        case GenKind::Linear: return "linear";
        case GenKind::CubicMonotone: return "cubic";
        case GenKind::PaperExampleA6: return "paper_a6";
        case GenKind::Custom: return "custom";
    }
    return "?";
}

// Drivers take the Brownian state b alongside (t, y, z): the catalog is
// mostly deterministic in b, but the monotonicity example generator and
// custom generators may be path functionals.
struct GeneratorSpec {
    using DriverF = std::function<Vec(double t, const Vec& b, const Vec& y, const Vec& z)>;
    using DriverG = std::function<Vec(double t, const Vec& b, const Vec& y)>;
    using Coef = std::function<double(double t, const Vec& b)>;

    GenKind kind = GenKind::Zero;
    int m = 1, k = 1;
    DriverF f;
    DriverG g;
    Coef mu, nu, ell;
    // catalog parameters (used for closed-form sharp bounds)
    double rho_f = 0, rho_g = 0;  // Linear slopes: F = -rho_f y, G = -rho_g y
    Vec drift;                    // ConstDrift value
    double a6_atilde = 0, a6_a = 1, a6_b = 0, a6_ctilde = 0, a6_c = 1, a6_d = 0;

    // True when F is globally Lipschitz in y, so the solver can use it
    // directly instead of the mollified surrogate.
    bool lipschitz_in_y() const {
        return kind == GenKind::Zero || kind == GenKind::ConstDrift ||
               kind == GenKind::Linear;
    }

    static GeneratorSpec zero(int m = 1, int k = 1) {
        GeneratorSpec s;
        s.kind = GenKind::Zero;
        s.m = m;
        s.k = k;
        s.f = [m](double, const Vec&, const Vec&, const Vec&) { return Vec(m, 0.0); };
        s.g = [m](double, const Vec&, const Vec&) { return Vec(m, 0.0); };
        s.mu = s.nu = s.ell = [](double, const Vec&) { return 0.0; };
        return s;
    }

    static GeneratorSpec const_drift(Vec c, int k = 1) {
        GeneratorSpec s;
        s.kind = GenKind::ConstDrift;
        s.m = static_cast<int>(c.size());
        s.k = k;
        s.drift = std::move(c);
        const Vec d = s.drift;
        s.f = [d](double, const Vec&, const Vec&, const Vec&) { return d; };
        s.g = [m = s.m](double, const Vec&, const Vec&) { return Vec(m, 0.0); };
        s.mu = s.nu = s.ell = [](double, const Vec&) { return 0.0; };
        return s;
    }

    // F = -rho_f y, G = -rho_g y
    static GeneratorSpec linear(double rho_f, double rho_g = 0, int m = 1, int k = 1) {
        GeneratorSpec s;
        s.kind = GenKind::Linear;
        s.m = m;
        s.k = k;
        s.rho_f = rho_f;
        s.rho_g = rho_g;
        s.f = [rho_f](double, const Vec&, const Vec& y, const Vec&) {
            return -rho_f * y;
        };
        s.g = [rho_g](double, const Vec&, const Vec& y) { return -rho_g * y; };
        s.mu = [rho_f](double, const Vec&) { return -rho_f; };
        s.nu = [rho_g](double, const Vec&) { return -rho_g; };
        s.ell = [](double, const Vec&) { return 0.0; };
        return s;
    }

    // F_d = -y_d^3 componentwise: monotone (mu = 0) but not Lipschitz in y.
    static GeneratorSpec cubic_monotone(int m = 1, int k = 1) {
        GeneratorSpec s;
        s.kind = GenKind::CubicMonotone;
        s.m = m;
        s.k = k;
        s.f = [](double, const Vec&, const Vec& y, const Vec&) {
            Vec r(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) r[i] = -y[i] * y[i] * y[i];
            return r;
        };
        s.g = [m](double, const Vec&, const Vec&) { return Vec(m, 0.0); };
        s.mu = s.nu = s.ell = [](double, const Vec&) { return 0.0; };
        return s;
    }

    // One-dimensional generator with stochastic coefficient processes,
    //   F(t,y,z) = atilde B|B|^a / t^b (y - tanh(B y)) + ctilde |B|^{(c+1)/2} / t^{d/2} z,
    // with mu_t = atilde B|B|^a / t^b and ell_t = ctilde |B|^{(c+1)/2} / t^{d/2}.
    static GeneratorSpec paper_a6(double atilde, double a, double b, double ctilde,
                                  double c, double d) {
        GeneratorSpec s;
        s.kind = GenKind::PaperExampleA6;
        s.m = 1;
        s.k = 1;
        s.a6_atilde = atilde;
        s.a6_a = a;
        s.a6_b = b;
        s.a6_ctilde = ctilde;
        s.a6_c = c;
        s.a6_d = d;
        auto coef_mu = [atilde, a, b](double t, const Vec& bb) {
            if (t <= 0) return 0.0;
            const double B = bb.empty() ? 0.0 : bb[0];
            return atilde * B * std::pow(std::fabs(B), a) / std::pow(t, b);
        };
        auto coef_ell = [ctilde, c, d](double t, const Vec& bb) {
            if (t <= 0) return 0.0;
            const double B = bb.empty() ? 0.0 : bb[0];
            return ctilde * std::pow(std::fabs(B), 0.5 * (c + 1.0)) / std::pow(t, 0.5 * d);
        };
        s.mu = coef_mu;
        s.nu = [](double, const Vec&) { return 0.0; };
        s.ell = coef_ell;
        s.f = [coef_mu, coef_ell](double t, const Vec& bb, const Vec& y, const Vec& z) {
            const double B = bb.empty() ? 0.0 : bb[0];
            const double m1 = coef_mu(t, bb);
            const double l1 = coef_ell(t, bb);
            return Vec{m1 * (y[0] - std::tanh(B * y[0])) + l1 * z[0]};
        };
        s.g = [](double, const Vec&, const Vec&) { return Vec{0.0}; };
        return s;
    }

    static GeneratorSpec custom(int m, int k, DriverF f, DriverG g, Coef mu, Coef nu,
                                Coef ell) {
        GeneratorSpec s;
        s.kind = GenKind::Custom;
        s.m = m;
        s.k = k;
        s.f = std::move(f);
        s.g = std::move(g);
        s.mu = std::move(mu);
        s.nu = std::move(nu);
        s.ell = std::move(ell);
        return s;
    }
};

// (F_rho^#(t), G_rho^#(t)): running sup of |F(t,y,0)| and |G(t,y)| over
// |y| <= rho. Closed forms for the simple catalog kinds; grid maximization
// with 1000 points per unit length otherwise (1-D).
inline std::pair<double, double> sharp_bound(const GeneratorSpec& gen, double rho,
                                             double t, const Vec& b = Vec{}) {
    if (rho < 0) throw DomainError("sharp_bound: rho must be >= 0");
    switch (gen.kind) {
        case GenKind::Zero: return {0.0, 0.0};
        case GenKind::ConstDrift: return {norm2(gen.drift), 0.0};
        case GenKind::Linear:
            return {std::fabs(gen.rho_f) * rho, std::fabs(gen.rho_g) * rho};
        case GenKind::CubicMonotone: return {rho * rho * rho, 0.0};
        default: break;
    }
    if (gen.m != 1)
        throw DomainError("sharp_bound: grid maximization supports m = 1 only");
    const int npts = std::max(3, static_cast<int>(1000.0 * 2.0 * rho) + 1);
    const Vec z0(gen.m * gen.k, 0.0);
    double fs = 0, gs = 0;
    for (int i = 0; i < npts; ++i) {
        const double y = npts == 1 ? 0.0 : -rho + 2.0 * rho * i / (npts - 1);
        fs = std::max(fs, std::fabs(gen.f(t, b, Vec{y}, z0)[0]));
        gs = std::max(gs, std::fabs(gen.g(t, b, Vec{y})[0]));
    }
    return {fs, gs};
}

// H(t,y,z) = 1_{[0,tau]}(t) [alpha F + (1-alpha) G]
inline Vec combined_h(const GeneratorSpec& gen, double alpha, bool in_horizon, double t,
                      const Vec& b, const Vec& y, const Vec& z) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw DomainError("combined_h: alpha must be in [0,1]");
    if (!in_horizon) return Vec(y.size(), 0.0);
    Vec r = gen.f(t, b, y, z);
    const Vec gg = gen.g(t, b, y);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = alpha * r[i] + (1.0 - alpha) * gg[i];
    return r;
}

namespace detail {

// 1-D segment splitting at the kinks of u -> 1_{[0,1]}(eps |F(t, y - eps u, 0)|),
// located by scan plus bisection, so Gauss-Legendre keeps its accuracy on a
// discontinuous integrand.
inline std::vector<double> indicator_breakpoints(
    const std::function<double(double)>& active_margin) {
    std::vector<double> cuts{-1.0};
    const int scan = 64;
    double prev_u = -1.0, prev_v = active_margin(-1.0);
    for (int i = 1; i <= scan; ++i) {
        const double u = -1.0 + 2.0 * i / scan;
        const double v = active_margin(u);
        if ((prev_v <= 0) != (v <= 0)) {
            double lo = prev_u, hi = u;
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (lo + hi);
                if ((active_margin(mid) <= 0) == (prev_v <= 0))
                    lo = mid;
                else
                    hi = mid;
            }
            cuts.push_back(0.5 * (lo + hi));
        }
        prev_u = u;
        prev_v = v;
    }
    cuts.push_back(1.0);
    return cuts;
}

}  // namespace detail

// Mollified generator
//   F_eps(t,y,z) = int_ball F(t, y - eps u, beta_eps(z)) 1_{[0,1]}(eps |F(t, y - eps u, 0)|) rho(u) du
// by the config's quadrature, self-normalized by the discrete bump mass.
inline Vec mollify_f(const GeneratorSpec& gen, const MollifierConfig& cfg, double t,
                     const Vec& b, const Vec& y, const Vec& z) {
    if (cfg.dim != gen.m)
        throw DomainError("mollifier dimension does not match generator state dim");
    if (cfg.nodes < cfg.min_nodes)
        throw DomainError("mollifier node count below configured minimum");
    const double eps = cfg.eps;
    const Vec bz = beta_trunc(z, eps);
    const Vec z0(z.size(), 0.0);

    Vec acc(gen.m, 0.0);
    double mass = 0;

    auto add_node = [&](const Vec& u, double w) {
        mass += w;
        Vec yu(gen.m);
        for (int d = 0; d < gen.m; ++d) yu[d] = y[d] - eps * u[d];
        if (eps * norm2(gen.f(t, b, yu, z0)) <= 1.0) {
            const Vec fv = gen.f(t, b, yu, bz);
            axpy(w, fv, acc);
        }
    };

    if (gen.m == 1) {
        // split at indicator kinks, Gauss-Legendre per smooth segment
        Bump bump(1);
        auto margin = [&](double u) {
            return 1.0 - eps * std::fabs(gen.f(t, b, Vec{y[0] - eps * u}, z0)[0]);
        };
        const std::vector<double> cuts = detail::indicator_breakpoints(margin);
        std::vector<double> gx, gw;
        quad::gauss_legendre(cfg.nodes, gx, gw);
        for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
            const double lo = cuts[s], hi = cuts[s + 1];
            if (hi - lo < 1e-14) continue;
            for (int i = 0; i < cfg.nodes; ++i) {
                const double u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gx[i];
                const double w = 0.5 * (hi - lo) * gw[i] * bump(Vec{u});
                add_node(Vec{u}, w);
            }
        }
    } else {
        for (std::size_t i = 0; i < cfg.points.size(); ++i)
            add_node(cfg.points[i], cfg.weights[i]);
    }
    if (mass <= 0) throw DomainError("mollifier quadrature has zero mass");
    for (double& x : acc) x /= mass;
    return acc;
}

// G_eps(t,y): same construction with ell = 0 and no z argument.
inline Vec mollify_g(const GeneratorSpec& gen, const MollifierConfig& cfg, double t,
                     const Vec& b, const Vec& y) {
    if (cfg.dim != gen.m)
        throw DomainError("mollifier dimension does not match generator state dim");
    if (cfg.nodes < cfg.min_nodes)
        throw DomainError("mollifier node count below configured minimum");
    const double eps = cfg.eps;
    Vec acc(gen.m, 0.0);
    double mass = 0;

    auto add_node = [&](const Vec& u, double w) {
        mass += w;
        Vec yu(gen.m);
        for (int d = 0; d < gen.m; ++d) yu[d] = y[d] - eps * u[d];
        const Vec gv = gen.g(t, b, yu);
        if (eps * norm2(gv) <= 1.0) axpy(w, gv, acc);
    };

    if (gen.m == 1) {
        Bump bump(1);
        auto margin = [&](double u) {
            return 1.0 - eps * std::fabs(gen.g(t, b, Vec{y[0] - eps * u})[0]);
        };
        const std::vector<double> cuts = detail::indicator_breakpoints(margin);
        std::vector<double> gx, gw;
        quad::gauss_legendre(cfg.nodes, gx, gw);
        for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
            const double lo = cuts[s], hi = cuts[s + 1];
            if (hi - lo < 1e-14) continue;
            for (int i = 0; i < cfg.nodes; ++i) {
                const double u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gx[i];
                const double w = 0.5 * (hi - lo) * gw[i] * bump(Vec{u});
                add_node(Vec{u}, w);
            }
        }
    } else {
        for (std::size_t i = 0; i < cfg.points.size(); ++i)
            add_node(cfg.points[i], cfg.weights[i]);
    }
    if (mass <= 0) throw DomainError("mollifier quadrature has zero mass");
    for (double& x : acc) x /= mass;
    return acc;
}

// Compatibility conditions between the obstacles and the drivers:
//   (i)   <grad phi_eps(y), grad psi_eps(y)> >= 0
//   (ii)  <grad phi_eps(y), G(t,y)>   <= |grad psi_eps(y)| |G(t,y)|
//   (iii) <grad psi_eps(y), F(t,y,z)> <= |grad phi_eps(y)| |F(t,y,z)|
struct CompatSample {
    double t = 0;
    Vec b;
    Vec y;
    Vec z;
};

struct CompatReport {
    bool pass_i = true, pass_ii = true, pass_iii = true;
    double worst_i = 0, worst_ii = 0, worst_iii = 0;  // violation magnitudes
    int samples = 0;
    bool all_pass() const { return pass_i && pass_ii && pass_iii; }
};

inline CompatReport check_compatibility(const ConvexSpec& phi, const ConvexSpec& psi,
                                        const GeneratorSpec& gen,
                                        const std::vector<CompatSample>& samples,
                                        const std::vector<double>& eps_list,
                                        double tol = 1e-10) {
    if (samples.empty()) throw DomainError("check_compatibility: empty sample set");
    CompatReport rep;
    for (const CompatSample& s : samples) {
        for (double eps : eps_list) {
            const Vec gphi = phi.grad_moreau(s.y, eps);
            const Vec gpsi = psi.grad_moreau(s.y, eps);
            const Vec fv = gen.f(s.t, s.b, s.y, s.z);
            const Vec gv = gen.g(s.t, s.b, s.y);
            const double vi = -dot(gphi, gpsi);
            const double vii = dot(gphi, gv) - norm2(gpsi) * norm2(gv);
            const double viii = dot(gpsi, fv) - norm2(gphi) * norm2(fv);
            rep.worst_i = std::max(rep.worst_i, vi);
            rep.worst_ii = std::max(rep.worst_ii, vii);
            rep.worst_iii = std::max(rep.worst_iii, viii);
            ++rep.samples;
        }
    }
    rep.pass_i = rep.worst_i <= tol;
    rep.pass_ii = rep.worst_ii <= tol;
    rep.pass_iii = rep.worst_iii <= tol;
    return rep;
}

}  // namespace mvbsde
