#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mvbsde/martingale.hpp"

using namespace mvbsde;

namespace {

GridConfig cfg_mid() {
    GridConfig cfg;
    cfg.horizon = 1.0;
    cfg.steps = 50;
    cfg.paths = 4000;
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("constant terminal: xi = c, zeta = 0 (both methods)") {
    PathEnsemble ens = simulate(cfg_mid());
    for (PairMethod m : {PairMethod::ClosedForm, PairMethod::Regression}) {
        MartingalePair pair = martingale_pair(Terminal::constant(3.25), ens, m);
        for (int p = 0; p < ens.paths; p += 253)
            for (int i = 0; i <= ens.steps; ++i) {
                CHECK(pair.xi[pair.xnode(p, i)] == doctest::Approx(3.25).epsilon(1e-12));
                CHECK(std::fabs(pair.zeta[pair.znode(p, i)]) < 1e-10);
            }
    }
}

TEST_CASE("eta = B_T: xi_t = B_t, zeta = 1") {
    PathEnsemble ens = simulate(cfg_mid());
    MartingalePair cf = martingale_pair(Terminal::brownian_t(), ens, PairMethod::ClosedForm);
    MartingalePair rg = martingale_pair(Terminal::brownian_t(), ens, PairMethod::Regression);
    // closed form is exact
    for (int p = 0; p < ens.paths; p += 401)
        for (int i = 0; i <= ens.steps; ++i) {
            CHECK(cf.xi[cf.xnode(p, i)] == doctest::Approx(ens.bval(p, i, 0)).epsilon(1e-13));
            CHECK(cf.zeta[cf.znode(p, i)] == doctest::Approx(1.0));
        }
    // regression recovers it up to statistical error (rms; the max is
    // dominated by leverage at the Gaussian tails)
    double mse_xi = 0, mse_z = 0;
    int n = 0;
    for (int p = 0; p < ens.paths; ++p)
        for (int i = 0; i < ens.steps; i += 5) {
            const double exi = rg.xi[rg.xnode(p, i)] - ens.bval(p, i, 0);
            const double ez = rg.zeta[rg.znode(p, i)] - 1.0;
            mse_xi += exi * exi;
            mse_z += ez * ez;
            ++n;
        }
    CHECK(std::sqrt(mse_xi / n) < 0.05);
    CHECK(std::sqrt(mse_z / n) < 0.15);  // increment regression is noisier
}

TEST_CASE("eta = B_T^2: xi_t = B_t^2 + (T - t), zeta = 2 B_t (Ito oracle)") {
    PathEnsemble ens = simulate(cfg_mid());
    MartingalePair cf =
        martingale_pair(Terminal::brownian_sq_t(), ens, PairMethod::ClosedForm);
    for (int p = 0; p < ens.paths; p += 401)
        for (int i = 0; i <= ens.steps; ++i) {
            const double b = ens.bval(p, i, 0);
            CHECK(cf.xi[cf.xnode(p, i)] ==
                  doctest::Approx(b * b + (1.0 - ens.t[i])).epsilon(1e-12));
            CHECK(cf.zeta[cf.znode(p, i)] == doctest::Approx(2.0 * b).epsilon(1e-12));
        }
    // regression against the oracle in mean square
    MartingalePair rg =
        martingale_pair(Terminal::brownian_sq_t(), ens, PairMethod::Regression);
    double mse = 0;
    int n = 0;
    for (int p = 0; p < ens.paths; ++p)
        for (int i = 0; i < ens.steps; i += 10) {
            const double b = ens.bval(p, i, 0);
            const double d = rg.xi[rg.xnode(p, i)] - (b * b + (1.0 - ens.t[i]));
            mse += d * d;
            ++n;
        }
    CHECK(mse / n < 5e-3);
}

TEST_CASE("terminal node equals eta pathwise; martingale property of xi") {
    PathEnsemble ens = simulate(cfg_mid());
    const Terminal eta = Terminal::brownian_sq_t();
    MartingalePair rg = martingale_pair(eta, ens, PairMethod::Regression);
    for (int p = 0; p < ens.paths; p += 101)
        CHECK(rg.xi[rg.xnode(p, ens.steps)] ==
              doctest::Approx(eta.eval(ens, p)[0]).epsilon(1e-13));
    // E[(xi_{i+1} - xi_i) h(B_i)] = 0 within 3 SE for basis functions h
    for (int i : {0, 10, 25, 40}) {
        for (int deg = 0; deg <= 2; ++deg) {
            double s = 0, s2 = 0;
            for (int p = 0; p < ens.paths; ++p) {
                double h = 1;
                for (int r = 0; r < deg; ++r) h *= ens.bval(p, i, 0);
                const double v = (rg.xi[rg.xnode(p, i + 1)] - rg.xi[rg.xnode(p, i)]) * h;
                s += v;
                s2 += v * v;
            }
            const double mean = s / ens.paths;
            const double se =
                std::sqrt((s2 / ens.paths - mean * mean) / ens.paths) + 1e-300;
            CHECK(std::fabs(mean) <= 3.0 * se);
        }
    }
}

TEST_CASE("representation residual shrinks like O(dt + N^{-1/2})") {
    // E| eta - xi_0 - sum zeta dB |^2 under a budget proportional to
    // dt + N^{-1/2}, decreasing across the two resolutions
    double prev = kInf;
    for (int K : {25, 100}) {
        GridConfig cfg = cfg_mid();
        cfg.steps = K;
        cfg.paths = 4000;
        PathEnsemble ens = simulate(cfg);
        MartingalePair rg =
            martingale_pair(Terminal::brownian_sq_t(), ens, PairMethod::Regression);
        double mse = 0;
        for (int p = 0; p < ens.paths; ++p) {
            double acc = rg.xi[rg.xnode(p, 0)];
            for (int i = 0; i < ens.steps; ++i)
                acc += rg.zeta[rg.znode(p, i)] * ens.db(p, i);
            const double eta = ens.bval(p, ens.steps, 0) * ens.bval(p, ens.steps, 0);
            mse += (eta - acc) * (eta - acc);
        }
        mse /= ens.paths;
        CHECK(mse < prev);
        CHECK(mse <= 5.0 * (ens.dt + 1.0 / std::sqrt(ens.paths)));
        prev = mse;
    }
}

TEST_CASE("rank-deficient design matrix is rejected with diagnostics") {
    GridConfig cfg = cfg_mid();
    cfg.paths = 3;  // three paths cannot support a cubic basis
    PathEnsemble ens = simulate(cfg);
    PolyBasis basis(3, 1);
    std::vector<Vec> states(3);
    std::vector<int> rows{0, 1, 2};
    for (int p = 0; p < 3; ++p) states[p] = ens.bvec(p, 10);
    CHECK_THROWS_AS(StepRegression(basis, states, rows), RegressionError);
    // two distinct states cannot carry a cubic: b and b^3 columns collide
    std::vector<Vec> dup(12);
    std::vector<int> rows12(12);
    for (int i = 0; i < 12; ++i) {
        dup[i] = Vec{i % 2 ? 1.0 : -1.0};
        rows12[i] = i;
    }
    CHECK_THROWS_AS(StepRegression(basis, dup, rows12), RegressionError);
}

TEST_CASE("exp_smooth of a constant is exact") {
    GridConfig cfg = cfg_mid();
    cfg.paths = 50;
    cfg.clock = ClockSpec::linear(0.7);
    PathEnsemble ens = simulate(cfg);
    std::vector<double> u(static_cast<std::size_t>(ens.paths) * (ens.steps + 1), 4.2);
    SmoothResult sm = exp_smooth(u, ens, 0.15);
    for (int p = 0; p < ens.paths; p += 7)
        for (int i = 0; i <= ens.steps; ++i) {
            CHECK(sm.u_eps[ens.node(p, i)] == doctest::Approx(4.2).epsilon(1e-13));
            CHECK(sm.m_eps[ens.node(p, i)] == doctest::Approx(4.2).epsilon(1e-10));
        }
    CHECK_FALSE(sm.kernel_under_resolved);
    SmoothResult tiny = exp_smooth(u, ens, 0.5 * ens.dt);
    CHECK(tiny.kernel_under_resolved);
}

TEST_CASE("pathwise smoothing contracts the sup norm") {
    PathEnsemble ens = simulate(cfg_mid());
    std::vector<double> u(static_cast<std::size_t>(ens.paths) * (ens.steps + 1));
    for (int p = 0; p < ens.paths; ++p)
        for (int i = 0; i <= ens.steps; ++i) u[ens.node(p, i)] = ens.bval(p, i, 0);
    SmoothResult sm = exp_smooth(u, ens, 0.1);
    for (int p = 0; p < ens.paths; ++p) {
        double su = 0, se = 0;
        for (int i = 0; i <= ens.steps; ++i) {
            su = std::max(su, std::fabs(u[ens.node(p, i)]));
            se = std::max(se, std::fabs(sm.u_eps[ens.node(p, i)]));
        }
        CHECK(se <= su + 1e-12);
    }
}

TEST_CASE("smoothing error decreases as eps decreases") {
    GridConfig cfg = cfg_mid();
    cfg.paths = 800;
    PathEnsemble ens = simulate(cfg);
    std::vector<double> u(static_cast<std::size_t>(ens.paths) * (ens.steps + 1));
    for (int p = 0; p < ens.paths; ++p)
        for (int i = 0; i <= ens.steps; ++i) u[ens.node(p, i)] = ens.bval(p, i, 0);
    double prev = kInf;
    for (double eps : {0.2, 0.1, 0.05}) {
        SmoothResult sm = exp_smooth(u, ens, eps);
        double err = 0;
        for (int p = 0; p < ens.paths; ++p) {
            double e = 0;
            for (int i = 0; i <= ens.steps; ++i)
                e = std::max(e, std::fabs(sm.u_eps[ens.node(p, i)] - u[ens.node(p, i)]));
            err += e;
        }
        err /= ens.paths;
        CHECK(err < prev);
        prev = err;
    }
}

TEST_CASE("conditional smoothing obeys the sup bound (one-sided statistical check)") {
    GridConfig cfg = cfg_mid();
    cfg.paths = 2000;
    PathEnsemble ens = simulate(cfg);
    std::vector<double> u(static_cast<std::size_t>(ens.paths) * (ens.steps + 1));
    for (int p = 0; p < ens.paths; ++p)
        for (int i = 0; i <= ens.steps; ++i) u[ens.node(p, i)] = ens.bval(p, i, 0);
    SmoothResult sm = exp_smooth(u, ens, 0.1);
    // |M_t^eps| <= E[ sup_r |U_r| | F_t ] + statistical tolerance
    for (int i : {0, 12, 25, 37, 49}) {
        Vec supu(ens.paths);
        for (int p = 0; p < ens.paths; ++p) {
            double s = 0;
            for (int j = 0; j <= ens.steps; ++j)
                s = std::max(s, std::fabs(u[ens.node(p, j)]));
            supu[p] = s;
        }
        Vec cond = conditional_expectation(ens, i, supu, 3);
        double worst = -kInf;
        double mean_violation = 0;
        for (int p = 0; p < ens.paths; ++p) {
            const double v = std::fabs(sm.m_eps[ens.node(p, i)]) - cond[p];
            worst = std::max(worst, v);
            mean_violation += positive_part(v);
        }
        mean_violation /= ens.paths;
        CHECK(mean_violation < 0.02);  // statistical tolerance at N = 2000
    }
}
