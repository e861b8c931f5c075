#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mvbsde/ensemble.hpp"
#include "mvbsde/generator.hpp"

using namespace mvbsde;

namespace {

GridConfig small_cfg() {
    GridConfig cfg;
    cfg.horizon = 2.0;
    cfg.steps = 40;
    cfg.paths = 200;
    cfg.seed = 7;
    return cfg;
}

CoefFn constant(double c) {
    return [c](double, const Vec&) { return c; };
}

}  // namespace

TEST_CASE("no clock: A = 0, Q = t, alpha = 1") {
    PathEnsemble ens = simulate(small_cfg());
    for (int p = 0; p < ens.paths; p += 37)
        for (int i = 0; i < ens.steps; ++i) {
            CHECK(ens.aval(p, i) == 0.0);
            CHECK(ens.qval(p, i) == doctest::Approx(ens.t[i]).epsilon(1e-14));
            CHECK(ens.alpha(p, i) == doctest::Approx(1.0).epsilon(1e-14));
        }
}

TEST_CASE("linear clock: Q = 2t, alpha = 1/2") {
    GridConfig cfg = small_cfg();
    cfg.clock = ClockSpec::linear(1.0);
    PathEnsemble ens = simulate(cfg);
    for (int p = 0; p < ens.paths; p += 37)
        for (int i = 0; i <= ens.steps; ++i) {
            CHECK(ens.qval(p, i) == doctest::Approx(2.0 * ens.t[i]).epsilon(1e-12));
            if (i < ens.steps)
                CHECK(ens.alpha(p, i) == doctest::Approx(0.5).epsilon(1e-12));
        }
}

TEST_CASE("clock consistency: Q strictly increasing, alpha dQ = dt, (1-alpha) dQ = dA") {
    GridConfig cfg = small_cfg();
    cfg.clock = ClockSpec::integral(ClockIntegrand::SquareB);
    PathEnsemble ens = simulate(cfg);
    for (int p = 0; p < ens.paths; ++p) {
        CHECK(ens.aval(p, 0) == 0.0);
        for (int i = 0; i < ens.steps; ++i) {
            CHECK(ens.dq(p, i) > 0.0);
            CHECK(ens.da(p, i) >= 0.0);
            CHECK(ens.alpha(p, i) * ens.dq(p, i) == doctest::Approx(ens.dt).epsilon(1e-12));
            CHECK((1.0 - ens.alpha(p, i)) * ens.dq(p, i) ==
                  doctest::Approx(ens.da(p, i)).epsilon(1e-10));
            CHECK(ens.alpha(p, i) >= 0.0);
            CHECK(ens.alpha(p, i) <= 1.0);
        }
    }
}

TEST_CASE("determinism: same seed gives bitwise-identical ensembles, any thread count") {
    GridConfig cfg = small_cfg();
    cfg.clock = ClockSpec::integral(ClockIntegrand::AbsB);
    PathEnsemble a = simulate(cfg, 1);
    PathEnsemble b = simulate(cfg, 4);
    REQUIRE(a.b.size() == b.b.size());
    for (std::size_t i = 0; i < a.b.size(); ++i) CHECK(a.b[i] == b.b[i]);
    for (std::size_t i = 0; i < a.a.size(); ++i) CHECK(a.a[i] == b.a[i]);
    cfg.seed = 8;
    PathEnsemble c = simulate(cfg);
    bool same = true;
    for (std::size_t i = 0; i < a.b.size() && same; ++i) same = a.b[i] == c.b[i];
    CHECK_FALSE(same);
}

TEST_CASE("increment moments look Gaussian at 3 sigma") {
    GridConfig cfg = small_cfg();
    cfg.paths = 4000;
    PathEnsemble ens = simulate(cfg);
    double mean = 0, var = 0;
    int n = 0;
    for (int p = 0; p < ens.paths; ++p)
        for (int i = 0; i < ens.steps; i += 7) {
            mean += ens.db(p, i);
            var += ens.db(p, i) * ens.db(p, i);
            ++n;
        }
    mean /= n;
    var = var / n - mean * mean;
    CHECK(std::fabs(mean) < 3.0 * std::sqrt(ens.dt / n));
    CHECK(var == doctest::Approx(ens.dt).epsilon(0.05));
}

TEST_CASE("resource cap enforced") {
    GridConfig cfg = small_cfg();
    cfg.resource_cap = 100;
    CHECK_THROWS_AS(simulate(cfg), DomainError);
    cfg = small_cfg();
    cfg.steps = 0;
    CHECK_THROWS_AS(simulate(cfg), DomainError);
}

TEST_CASE("exit-time horizon detected at the first outside node") {
    GridConfig cfg = small_cfg();
    cfg.exit_level = 0.5;
    cfg.paths = 500;
    PathEnsemble ens = simulate(cfg);
    int exited = 0;
    for (int p = 0; p < ens.paths; ++p) {
        const int e = ens.exit_step[p];
        if (e < ens.steps) {
            ++exited;
            CHECK(std::fabs(ens.bval(p, e, 0)) >= 0.5);
            for (int i = 0; i < e; ++i) CHECK(std::fabs(ens.bval(p, i, 0)) < 0.5);
            CHECK(ens.node_in_horizon(p, e));
            CHECK_FALSE(ens.incr_in_horizon(p, e));
        }
    }
    CHECK(exited > 0);  // T = 2 with |B| < 0.5: almost every path exits
}

TEST_CASE("compute_weights trivial and signed cases") {
    GridConfig cfg = small_cfg();  // T = 2
    PathEnsemble ens = simulate(cfg);

    SUBCASE("all-zero coefficients") {
        compute_weights(ens, constant(0), constant(0), constant(0), 2.0, 0.5);
        for (int p = 0; p < ens.paths; p += 37) {
            CHECK(ens.vval(p, ens.steps) == 0.0);
            CHECK(ens.vplusval(p, ens.steps) == 0.0);
        }
    }
    SUBCASE("mu = 1 integrates to t") {
        compute_weights(ens, constant(1), constant(0), constant(0), 2.0, 0.5);
        for (int p = 0; p < ens.paths; p += 37) {
            CHECK(ens.vval(p, ens.steps) == doctest::Approx(2.0).epsilon(1e-12));
            CHECK(ens.vplusval(p, ens.steps) == doctest::Approx(2.0).epsilon(1e-12));
        }
    }
    SUBCASE("mu = -1: V = -t but V+ = 0") {
        compute_weights(ens, constant(-1), constant(0), constant(0), 2.0, 0.5);
        for (int p = 0; p < ens.paths; p += 37) {
            CHECK(ens.vval(p, ens.steps) == doctest::Approx(-2.0).epsilon(1e-12));
            CHECK(ens.vplusval(p, ens.steps) == 0.0);
        }
    }
    SUBCASE("V <= V+ pathwise and V+ nondecreasing") {
        GridConfig c2 = small_cfg();
        c2.clock = ClockSpec::linear(0.5);
        PathEnsemble e2 = simulate(c2);
        compute_weights(
            e2, [](double t, const Vec&) { return std::sin(8 * t); },
            [](double t, const Vec&) { return std::cos(5 * t); },
            [](double, const Vec&) { return 0.3; }, 1.5, 0.4);
        for (int p = 0; p < e2.paths; ++p)
            for (int i = 0; i < e2.steps; ++i) {
                CHECK(e2.vval(p, i) <= e2.vplusval(p, i) + 1e-12);
                CHECK(e2.vplusval(p, i + 1) >= e2.vplusval(p, i) - 1e-15);
            }
    }
    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(
            compute_weights(ens, constant(0), constant(0), constant(0), 0.9, 0.5),
            DomainError);
        CHECK_THROWS_AS(
            compute_weights(ens, constant(0), constant(0), constant(0), 2.0, 1.5),
            DomainError);
    }
}

TEST_CASE("ell enters V through ell^2/(2 n_p lambda)") {
    GridConfig cfg = small_cfg();
    PathEnsemble ens = simulate(cfg);
    const double p = 1.5, lambda = 0.25, ell = 0.6;
    compute_weights(ens, constant(0), constant(0), constant(ell), p, lambda);
    const double np = np_const(p);
    const double expected = ell * ell / (2 * np * lambda) * 2.0;  // T = 2
    CHECK(ens.vval(0, ens.steps) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(np == doctest::Approx(0.5));
}
