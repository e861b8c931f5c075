// Exact convex-analysis primitives: values, proximal maps, Moreau envelopes
// and Yosida gradients for the obstacle catalog. All prox maps are closed
// forms, so the identities they satisfy can be asserted at machine precision.
#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "mvbsde/core.hpp"

namespace mvbsde {

enum class ConvexKind { Zero, IndicatorInterval, Quadratic, AbsPower, MaxZero };

inline std::string to_string(ConvexKind k) {
    switch (k) {
        case ConvexKind::Zero: return "zero";
        case ConvexKind::IndicatorInterval: return "indicator";
        case ConvexKind::Quadratic: return "quadratic";
        case ConvexKind::AbsPower: return "abspower";
        case ConvexKind::MaxZero: return "maxzero";
    }
    return "?";
}

// A proper l.s.c. convex function with value(0) = 0 and value >= 0.
// Multidimensional specs act as separable products of the 1-D formula;
// IndicatorInterval and MaxZero are 1-D only.
class ConvexSpec {
public:
    static ConvexSpec zero(int dim = 1) { return ConvexSpec(ConvexKind::Zero, dim); }

    // Indicator of [a,b]; one-sided obstacles via a = -inf or b = +inf.
    static ConvexSpec indicator(double a, double b, int dim = 1) {
        if (dim != 1) throw DomainError("indicator obstacle requires dimension 1");
        if (!(a <= b)) throw DomainError("indicator interval needs a <= b");
        if (!(a <= 0.0 && 0.0 <= b))
            throw DomainError("indicator interval must contain 0 (normalization)");
        ConvexSpec s(ConvexKind::IndicatorInterval, dim);
        s.a_ = a;
        s.b_ = b;
        return s;
    }

    // (scale/2)|y|^2
    static ConvexSpec quadratic(double scale, int dim = 1) {
        if (!(scale > 0)) throw DomainError("quadratic scale must be positive");
        ConvexSpec s(ConvexKind::Quadratic, dim);
        s.scale_ = scale;
        return s;
    }

    // sum_i |y_i|^e. Exponents with a closed-form prox only.
    static ConvexSpec abs_power(double exponent, int dim = 1) {
        const bool ok = exponent == 1.0 || exponent == 1.5 || exponent == 2.0 ||
                        exponent == 3.0;
        if (!ok)
            throw DomainError("abs_power exponent must be one of {1, 1.5, 2, 3} "
                              "(closed-form prox required)");
        ConvexSpec s(ConvexKind::AbsPower, dim);
        s.exponent_ = exponent;
        return s;
    }

    // y^+ (1-D)
    static ConvexSpec max_zero(int dim = 1) {
        if (dim != 1) throw DomainError("max_zero requires dimension 1");
        return ConvexSpec(ConvexKind::MaxZero, dim);
    }

    ConvexKind kind() const { return kind_; }
    int dimension() const { return dim_; }
    double lower() const { return a_; }
    double upper() const { return b_; }
    double scale() const { return scale_; }
    double exponent() const { return exponent_; }

    bool is_zero() const { return kind_ == ConvexKind::Zero; }

    double value(const Vec& y) const {
        check_point(y);
        double s = 0;
        for (double t : y) s += value1(t);
        return s;
    }

    // Whether y lies in the effective domain (value finite).
    bool in_domain(const Vec& y) const {
        if (kind_ != ConvexKind::IndicatorInterval) return true;
        return y[0] >= a_ && y[0] <= b_;
    }

    // Squared distance to the effective domain (0 for finite-valued kinds).
    double domain_dist2(const Vec& y) const {
        if (kind_ != ConvexKind::IndicatorInterval) return 0.0;
        const double d = y[0] < a_ ? a_ - y[0] : (y[0] > b_ ? y[0] - b_ : 0.0);
        return d * d;
    }

    Vec prox(const Vec& y, double eps) const {
        check_point(y);
        check_eps(eps);
        Vec r(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) r[i] = prox1(y[i], eps);
        return r;
    }

    Vec grad_moreau(const Vec& y, double eps) const {
        Vec j = prox(y, eps);
        Vec g(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) g[i] = (y[i] - j[i]) / eps;
        return g;
    }

    double moreau_value(const Vec& y, double eps) const {
        Vec j = prox(y, eps);
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double d = y[i] - j[i];
            s += d * d / (2.0 * eps) + value1(j[i]);
        }
        return s;
    }

    // Per-coordinate Yosida gradient of the separable product (the same 1-D
    // formula acts on every coordinate).
    double grad_moreau_scalar(double y, double eps) const {
        check_eps(eps);
        return (y - prox1(y, eps)) / eps;
    }

private:
    ConvexSpec(ConvexKind k, int dim) : kind_(k), dim_(dim) {
        if (dim < 1) throw DomainError("dimension must be positive");
    }

    void check_point(const Vec& y) const {
        if (static_cast<int>(y.size()) != dim_)
            throw DomainError("point dimension mismatch: got " +
                              std::to_string(y.size()) + ", spec has " +
                              std::to_string(dim_));
        if (!all_finite(y)) throw DomainError("non-finite input point");
    }

    static void check_eps(double eps) {
        if (!(eps > 0) || !std::isfinite(eps))
            throw DomainError("eps must be positive and finite");
    }

    double value1(double t) const {
        switch (kind_) {
            case ConvexKind::Zero: return 0.0;
            case ConvexKind::IndicatorInterval:
                return (t >= a_ && t <= b_) ? 0.0 : kInf;
            case ConvexKind::Quadratic: return 0.5 * scale_ * t * t;
            case ConvexKind::AbsPower: return std::pow(std::fabs(t), exponent_);
            case ConvexKind::MaxZero: return t > 0 ? t : 0.0;
        }
        return 0.0;
    }

    double prox1(double y, double eps) const {
        switch (kind_) {
            case ConvexKind::Zero: return y;
            case ConvexKind::IndicatorInterval: return clamp(y, a_, b_);
            case ConvexKind::Quadratic: return y / (1.0 + eps * scale_);
            case ConvexKind::AbsPower: return prox_abs_power(y, eps);
            case ConvexKind::MaxZero:
                if (y > eps) return y - eps;
                if (y < 0) return y;
                return 0.0;
        }
        return y;
    }

    // Minimizer of |y-v|^2/(2 eps) + |v|^e, solved from the first-order
    // condition v + eps.e.|v|^{e-1} sign(v) = y on the half-line sign(v) =
    // sign(y).
    double prox_abs_power(double y, double eps) const {
        const double s = y < 0 ? -1.0 : 1.0;
        const double x = std::fabs(y);
        if (exponent_ == 1.0) return s * std::max(x - eps, 0.0);
        if (exponent_ == 2.0) return y / (1.0 + 2.0 * eps);
        if (exponent_ == 1.5) {
            // w^2 + 1.5 eps w - x = 0 with w = sqrt(v)
            const double c = 1.5 * eps;
            const double w = 0.5 * (-c + std::sqrt(c * c + 4.0 * x));
            return s * w * w;
        }
        // exponent 3: 3 eps v^2 + v - x = 0, positive root
        const double c = 3.0 * eps;
        return s * (2.0 * x) / (1.0 + std::sqrt(1.0 + 4.0 * c * x));
    }

    ConvexKind kind_;
    int dim_;
    double a_ = 0, b_ = 0;
    double scale_ = 1;
    double exponent_ = 2;
};

struct MoreauOutput {
    double envelope = 0;  // phi_eps(y)
    Vec resolvent;        // J_eps(y)
    Vec gradient;         // grad phi_eps(y) = (y - J_eps(y)) / eps
    double epsilon = 0;
};

inline Vec prox(const ConvexSpec& spec, const Vec& y, double eps) {
    return spec.prox(y, eps);
}

inline MoreauOutput moreau(const ConvexSpec& spec, const Vec& y, double eps) {
    MoreauOutput out;
    out.epsilon = eps;
    out.resolvent = spec.prox(y, eps);
    out.gradient.resize(y.size());
    double env = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - out.resolvent[i];
        out.gradient[i] = d / eps;
        env += d * d / (2.0 * eps);
    }
    out.envelope = env + spec.value(out.resolvent);
    return out;
}

// LHS - RHS of the two-parameter Yosida cross inequality
//   -<u-v, grad_eps(u) - grad_delta(v)> <= (eps+delta) <grad_eps(u), grad_delta(v)>.
// The contract is a nonpositive return value for every pair.
inline double cross_yosida_residual(const ConvexSpec& spec, const Vec& u, double eps_a,
                                    const Vec& v, double eps_b) {
    if (u.size() != v.size())
        throw DomainError("cross_yosida_residual: dimension mismatch");
    const Vec gu = spec.grad_moreau(u, eps_a);
    const Vec gv = spec.grad_moreau(v, eps_b);
    const double lhs = -(dot(u - v, gu - gv));
    const double rhs = (eps_a + eps_b) * dot(gu, gv);
    return lhs - rhs;
}

}  // namespace mvbsde
