#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mvbsde/convex.hpp"
#include "mvbsde/rng.hpp"

using namespace mvbsde;

namespace {

// Independent oracle for the prox closed forms: golden-section minimization
// of the Moreau objective |y - v|^2 / (2 eps) + phi(v) in one dimension.
double prox_oracle_1d(const ConvexSpec& spec, double y, double eps) {
    auto obj = [&](double v) {
        const double val = spec.value(Vec{v});
        if (!std::isfinite(val)) return kInf;
        return (y - v) * (y - v) / (2 * eps) + val;
    };
    double lo = -std::fabs(y) - 10, hi = std::fabs(y) + 10;
    if (spec.kind() == ConvexKind::IndicatorInterval) {
        lo = std::max(lo, spec.lower());
        hi = std::min(hi, spec.upper());
    }
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    for (int it = 0; it < 200; ++it) {
        if (obj(c) < obj(d))
            b = d;
        else
            a = c;
        c = b - gr * (b - a);
        d = a + gr * (b - a);
    }
    return 0.5 * (a + b);
}

ConvexSpec catalog_entry(int which) {
    switch (which % 5) {
        case 0: return ConvexSpec::zero();
        case 1: return ConvexSpec::indicator(-1.0, 1.0);
        case 2: return ConvexSpec::quadratic(1.0 + (which % 3));
        case 3: return ConvexSpec::abs_power(which % 2 ? 1.5 : 3.0);
        default: return ConvexSpec::max_zero();
    }
}

}  // namespace

TEST_CASE("construction rejects bad specs") {
    CHECK_THROWS_AS(ConvexSpec::indicator(0.5, 1.0), DomainError);  // 0 outside
    CHECK_THROWS_AS(ConvexSpec::indicator(1.0, -1.0), DomainError);
    CHECK_THROWS_AS(ConvexSpec::quadratic(-2.0), DomainError);
    CHECK_THROWS_AS(ConvexSpec::abs_power(2.5), DomainError);
    CHECK_THROWS_AS(ConvexSpec::indicator(-1, 1, 2), DomainError);
    CHECK_NOTHROW(ConvexSpec::indicator(-kInf, 0.0));
}

TEST_CASE("normalization: value(0) = 0 and value >= 0") {
    for (int w = 0; w < 5; ++w) {
        const ConvexSpec s = catalog_entry(w);
        CHECK(s.value(Vec{0.0}) == 0.0);
        for (int i = 0; i < 50; ++i) {
            const double y = -4.0 + 8.0 * uniform_sample(11, i, w);
            CHECK(s.value(Vec{y}) >= 0.0);
        }
    }
}

TEST_CASE("prox frozen examples") {
    CHECK(prox(ConvexSpec::indicator(-1, 1), Vec{2.0}, 0.5)[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(prox(ConvexSpec::quadratic(1.0), Vec{1.0}, 1.0)[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(prox(ConvexSpec::zero(), Vec{3.7}, 0.25)[0] == doctest::Approx(3.7).epsilon(1e-14));
    // one-sided obstacle clamps one-sidedly
    CHECK(prox(ConvexSpec::indicator(0.0, kInf), Vec{-2.0}, 0.3)[0] == doctest::Approx(0.0));
    CHECK(prox(ConvexSpec::indicator(0.0, kInf), Vec{2.0}, 0.3)[0] == doctest::Approx(2.0));
}

TEST_CASE("prox closed forms match the minimization oracle") {
    for (int w = 0; w < 5; ++w) {
        const ConvexSpec s = catalog_entry(w);
        for (int i = 0; i < 25; ++i) {
            const double y = -3.0 + 6.0 * uniform_sample(29, i, w);
            const double eps = 0.05 + uniform_sample(31, i, w);
            const double v = prox(s, Vec{y}, eps)[0];
            const double vo = prox_oracle_1d(s, y, eps);
            CHECK(v == doctest::Approx(vo).epsilon(1e-6));
        }
    }
}

TEST_CASE("moreau frozen examples") {
    SUBCASE("indicator interval") {
        const MoreauOutput mo = moreau(ConvexSpec::indicator(-1, 1), Vec{2.0}, 0.5);
        CHECK(mo.envelope == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(mo.resolvent[0] == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(mo.gradient[0] == doctest::Approx(2.0).epsilon(1e-14));
    }
    SUBCASE("origin is the exact minimum for every kind") {
        for (int w = 0; w < 5; ++w) {
            const MoreauOutput mo = moreau(catalog_entry(w), Vec{0.0}, 0.7);
            CHECK(mo.envelope == 0.0);
            CHECK(mo.resolvent[0] == 0.0);
            CHECK(mo.gradient[0] == 0.0);
        }
    }
    SUBCASE("quadratic") {
        const MoreauOutput mo = moreau(ConvexSpec::quadratic(1.0), Vec{1.0}, 1.0);
        CHECK(mo.envelope == doctest::Approx(0.25).epsilon(1e-14));
        CHECK(mo.resolvent[0] == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(mo.gradient[0] == doctest::Approx(0.5).epsilon(1e-14));
    }
}

TEST_CASE("moreau output invariants hold exactly") {
    for (int w = 0; w < 5; ++w) {
        const ConvexSpec s = catalog_entry(w);
        for (int i = 0; i < 100; ++i) {
            const double y = -4.0 + 8.0 * uniform_sample(37, i, w);
            const double eps = 0.02 + 2.0 * uniform_sample(41, i, w);
            const MoreauOutput mo = moreau(s, Vec{y}, eps);
            CHECK(mo.gradient[0] == doctest::Approx((y - mo.resolvent[0]) / eps).epsilon(1e-12));
            const double env = (y - mo.resolvent[0]) * (y - mo.resolvent[0]) / (2 * eps) +
                               s.value(mo.resolvent);
            CHECK(mo.envelope == doctest::Approx(env).epsilon(1e-12));
            // envelope sandwich 0 <= phi(J(y)) <= phi_eps(y) <= phi(y)
            CHECK(s.value(mo.resolvent) >= 0.0);
            CHECK(s.value(mo.resolvent) <= mo.envelope + 1e-12);
            const double vy = s.value(Vec{y});
            if (std::isfinite(vy)) CHECK(mo.envelope <= vy + 1e-12);
        }
    }
}

TEST_CASE("resolvent nonexpansive, gradient 1/eps Lipschitz") {
    for (int w = 0; w < 5; ++w) {
        const ConvexSpec s = catalog_entry(w);
        for (int i = 0; i < 200; ++i) {
            const double u = -4.0 + 8.0 * uniform_sample(43, i, w);
            const double v = -4.0 + 8.0 * uniform_sample(47, i, w);
            const double eps = 0.05 + 2.0 * uniform_sample(53, i, w);
            const double ju = prox(s, Vec{u}, eps)[0];
            const double jv = prox(s, Vec{v}, eps)[0];
            CHECK(std::fabs(ju - jv) <= std::fabs(u - v) + 1e-12);
            const double gu = s.grad_moreau(Vec{u}, eps)[0];
            const double gv = s.grad_moreau(Vec{v}, eps)[0];
            CHECK(std::fabs(gu - gv) <= std::fabs(u - v) / eps + 1e-12);
        }
    }
}

TEST_CASE("envelope monotone in eps") {
    for (int w = 0; w < 5; ++w) {
        const ConvexSpec s = catalog_entry(w);
        for (int i = 0; i < 50; ++i) {
            const double y = -3.0 + 6.0 * uniform_sample(59, i, w);
            const double e1 = 0.05 + uniform_sample(61, i, w);
            const double e2 = e1 + 0.5 + uniform_sample(67, i, w);
            const double m1 = moreau(s, Vec{y}, e1).envelope;
            const double m2 = moreau(s, Vec{y}, e2).envelope;
            CHECK(m2 <= m1 + 1e-12);
        }
    }
}

TEST_CASE("value is convex along segments") {
    for (int w = 0; w < 5; ++w) {
        const ConvexSpec s = catalog_entry(w);
        for (int i = 0; i < 100; ++i) {
            const double u = -1.0 + 2.0 * uniform_sample(71, i, w);
            const double v = -1.0 + 2.0 * uniform_sample(73, i, w);
            const double lhs = s.value(Vec{0.5 * (u + v)});
            const double rhs = 0.5 * s.value(Vec{u}) + 0.5 * s.value(Vec{v});
            if (std::isfinite(rhs)) CHECK(lhs <= rhs + 1e-12);
        }
    }
}

TEST_CASE("cross yosida residual frozen examples and sign") {
    SUBCASE("zero spec vanishes") {
        CHECK(cross_yosida_residual(ConvexSpec::zero(), Vec{1.2}, 0.4, Vec{-0.3}, 0.9) == 0.0);
    }
    SUBCASE("indicator hand evaluation") {
        // grad_eps(2) = 2, grad_delta(-3) = -8; LHS = -<5, 10> = -50, RHS = 0.75*(-16) = -12
        const double r = cross_yosida_residual(ConvexSpec::indicator(-1, 1), Vec{2.0}, 0.5,
                                               Vec{-3.0}, 0.25);
        CHECK(r == doctest::Approx(-38.0).epsilon(1e-13));
    }
    SUBCASE("quadratic hand evaluation") {
        // grads 0.5 and 4/3: LHS = -5/6, RHS = 1 -> residual -11/6
        const double r = cross_yosida_residual(ConvexSpec::quadratic(1.0), Vec{1.0}, 1.0,
                                               Vec{2.0}, 0.5);
        CHECK(r == doctest::Approx(-11.0 / 6.0).epsilon(1e-13));
    }
    SUBCASE("nonpositive on random pairs for every kind") {
        for (int w = 0; w < 5; ++w) {
            const ConvexSpec s = catalog_entry(w);
            for (int i = 0; i < 200; ++i) {
                const double u = -4.0 + 8.0 * uniform_sample(79, i, w);
                const double v = -4.0 + 8.0 * uniform_sample(83, i, w);
                const double ea = 0.05 + uniform_sample(89, i, w);
                const double eb = 0.05 + uniform_sample(97, i, w);
                CHECK(cross_yosida_residual(s, Vec{u}, ea, Vec{v}, eb) <= 1e-12);
            }
        }
    }
    SUBCASE("dimension mismatch rejected") {
        CHECK_THROWS_AS(cross_yosida_residual(ConvexSpec::quadratic(1.0, 2), Vec{1.0, 2.0},
                                              0.5, Vec{1.0}, 0.5),
                        DomainError);
    }
}

TEST_CASE("separable multidimensional specs") {
    const ConvexSpec s = ConvexSpec::quadratic(2.0, 3);
    const Vec y{1.0, -2.0, 0.5};
    const Vec pr = prox(s, y, 0.25);
    for (int d = 0; d < 3; ++d)
        CHECK(pr[d] == doctest::Approx(y[d] / 1.5).epsilon(1e-14));
    CHECK(s.value(y) == doctest::Approx(1.0 * (1 + 4 + 0.25)).epsilon(1e-14));
}

TEST_CASE("non-finite input rejected") {
    CHECK_THROWS_AS(prox(ConvexSpec::quadratic(1.0), Vec{std::nan("")}, 0.5), DomainError);
    CHECK_THROWS_AS(prox(ConvexSpec::quadratic(1.0), Vec{1.0}, -0.5), DomainError);
    CHECK_THROWS_AS(prox(ConvexSpec::quadratic(1.0), Vec{kInf}, 0.5), DomainError);
}
