// Acceptance suite: one pass/fail line per criterion, all tolerances pinned.
// Criterion 9 drives the CLI binary, whose path arrives as argv[1].
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mvbsde/mvbsde.hpp"

using namespace mvbsde;

namespace {

int g_failures = 0;
std::string g_cli;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

void report(int criterion, const char* name, bool pass, double seconds, double budget,
            const std::string& detail) {
    const bool in_budget = seconds < budget;
    const bool ok = pass && in_budget;
    if (!ok) ++g_failures;
    std::printf("[%s] criterion %d: %s (%.1f s / %.0f s) %s\n", ok ? "PASS" : "FAIL",
                criterion, name, seconds, budget, detail.c_str());
    std::fflush(stdout);
}

GridConfig desk_grid(int steps, int paths) {
    GridConfig cfg;
    cfg.horizon = 1.0;
    cfg.steps = steps;
    cfg.paths = paths;
    cfg.seed = 42;
    return cfg;
}

ConvexSpec random_spec(std::uint64_t i) {
    switch (static_cast<int>(uniform_sample(9001, i, 0) * 5.0) % 5) {
        case 0: return ConvexSpec::zero();
        case 1: return ConvexSpec::indicator(-1.0 - uniform_sample(9002, i, 1),
                                             1.0 + uniform_sample(9003, i, 2));
        case 2: return ConvexSpec::quadratic(0.5 + 2.0 * uniform_sample(9004, i, 3));
        case 3: return ConvexSpec::abs_power(uniform_sample(9005, i, 4) < 0.5 ? 1.5 : 3.0);
        default: return ConvexSpec::max_zero();
    }
}

// 1. Convex-core exactness on 10^4 randomized (spec, y, eps) samples.
void criterion_1() {
    Timer timer;
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
        const ConvexSpec spec = random_spec(i);
        const double u = -4.0 + 8.0 * uniform_sample(9010, i, 0);
        const double v = -4.0 + 8.0 * uniform_sample(9011, i, 1);
        const double ea = 0.02 + 2.0 * uniform_sample(9012, i, 2);
        const double eb = 0.02 + 2.0 * uniform_sample(9013, i, 3);
        const double ju = prox(spec, Vec{u}, ea)[0];
        const double jv = prox(spec, Vec{v}, ea)[0];
        worst = std::max(worst, std::fabs(ju - jv) - std::fabs(u - v));  // fi-lip a
        const MoreauOutput mu_ = moreau(spec, Vec{u}, ea);
        const MoreauOutput mv_ = moreau(spec, Vec{v}, ea);
        worst = std::max(worst, std::fabs(mu_.gradient[0] - mv_.gradient[0]) -
                                    std::fabs(u - v) / ea);  // fi-lip b
        const double env = (u - ju) * (u - ju) / (2 * ea) + spec.value(Vec{ju});
        worst = std::max(worst, std::fabs(mu_.envelope - env));  // fi-lip c
        worst = std::max(worst,
                         cross_yosida_residual(spec, Vec{u}, ea, Vec{v}, eb));  // fi-Cauchy
        const double vres = spec.value(mu_.resolvent);  // minimum-point sandwich
        worst = std::max(worst, -vres);
        worst = std::max(worst, vres - mu_.envelope);
        const double vu = spec.value(Vec{u});
        if (std::isfinite(vu)) worst = std::max(worst, mu_.envelope - vu);
    }
    std::ostringstream d;
    d << "worst residual " << worst;
    report(1, "convex-core exactness", worst <= 1e-12, timer.seconds(), 5.0, d.str());
}

// 2. Mollifier bounds and the dense-quadrature oracle.
void criterion_2() {
    Timer timer;
    const double p = 2.0, lambda = 0.5;
    const double np = np_const(p);
    double worst_bound = 0, worst_dense = 0;
    std::vector<GeneratorSpec> gens{
        GeneratorSpec::linear(0.7), GeneratorSpec::cubic_monotone(),
        GeneratorSpec::const_drift(Vec{-1.0}),
        GeneratorSpec::paper_a6(0.3, 0.5, 0.2, 0.4, 0.5, 0.3)};
    for (std::size_t g = 0; g < gens.size(); ++g) {
        const GeneratorSpec& gen = gens[g];
        const bool stochastic = gen.kind == GenKind::PaperExampleA6;
        for (int i = 0; i < 1000; ++i) {
            const double eps = (i % 3 == 0) ? 0.1 : (i % 3 == 1 ? 0.25 : 0.6);
            const MollifierConfig cfg = MollifierConfig::make(eps, 1, 64);
            const double kap = cfg.kappa();
            const double t = 0.05 + 0.95 * uniform_sample(9100 + g, i, 0);
            const Vec b = stochastic
                              ? Vec{-1.5 + 3.0 * uniform_sample(9200 + g, i, 1)}
                              : Vec{};
            const double y = -2.0 + 4.0 * uniform_sample(9101, i, g);
            const double yh = -2.0 + 4.0 * uniform_sample(9102, i, g);
            const double z = -3.0 + 6.0 * uniform_sample(9103, i, g);
            const double zh = -3.0 + 6.0 * uniform_sample(9104, i, g);
            const double ell = gen.ell(t, b);
            const double mu = gen.mu(t, b);
            const double fe = mollify_f(gen, cfg, t, b, Vec{y}, Vec{z})[0];
            // ma-4
            worst_bound = std::max(
                worst_bound, std::fabs(mollify_f(gen, cfg, t, b, Vec{0.0}, Vec{0.0})[0]) -
                                 sharp_bound(gen, 1.0, t, b).first);
            // ma-1 a
            worst_bound = std::max(
                worst_bound, std::fabs(fe) -
                                 (ell * std::fabs(beta_trunc(Vec{z}, eps)[0]) + 1.0 / eps));
            // ma-1 b
            const double fz = mollify_f(gen, cfg, t, b, Vec{y}, Vec{zh})[0];
            worst_bound = std::max(worst_bound,
                                   std::fabs(fe - fz) - ell * std::fabs(z - zh));
            // ma-1 c
            const double fy = mollify_f(gen, cfg, t, b, Vec{yh}, Vec{z})[0];
            worst_bound =
                std::max(worst_bound, std::fabs(fe - fy) - kap * (1.0 + ell) /
                                                               (eps * eps) *
                                                               std::fabs(y - yh));
            // ma-2 against |yh| <= rho = 2
            const double muplus =
                positive_part(mu + (z != 0 ? ell * ell / (2 * np * lambda) : 0.0));
            const double rhs = std::fabs(y - yh) * sharp_bound(gen, 3.0, t, b).first +
                               muplus * (y - yh) * (y - yh) +
                               0.5 * np * lambda * z * z;
            worst_bound = std::max(worst_bound, (y - yh) * fe - rhs);
            // dense-quadrature oracle at 10x nodes, every 20th sample
            if (i % 20 == 0) {
                const MollifierConfig dense = MollifierConfig::make(eps, 1, 640);
                worst_dense = std::max(
                    worst_dense,
                    std::fabs(fe - mollify_f(gen, dense, t, b, Vec{y}, Vec{z})[0]));
            }
        }
    }
    std::ostringstream d;
    d << "worst bound excess " << worst_bound << ", dense gap " << worst_dense;
    report(2, "mollifier bounds", worst_bound <= 1e-6 && worst_dense <= 1e-6,
           timer.seconds(), 30.0, d.str());
}

// 3. Linear-BSDE oracle at N = 20000, K = 100, degree 3.
void criterion_3() {
    Timer timer;
    PathEnsemble ens = simulate(desk_grid(100, 20000));
    auto sol = solve_penalized(ens, GeneratorSpec::linear(1.0), ConvexSpec::zero(),
                               ConvexSpec::zero(), Terminal::constant(1.0), 1.0);
    double y0 = 0;
    Vec est(ens.paths);
    for (int p = 0; p < ens.paths; ++p) {
        y0 += sol.y[sol.ynode(p, 0)];
        double acc = sol.y[sol.ynode(p, ens.steps)];
        for (int i = 0; i < ens.steps; ++i)
            acc += -sol.y[sol.ynode(p, i)] * ens.dq(p, i);
        est[p] = acc;
    }
    y0 /= ens.paths;
    double m = 0;
    for (double v : est) m += v;
    m /= ens.paths;
    double var = 0;
    for (double v : est) var += (v - m) * (v - m);
    const double se = std::sqrt(var / (ens.paths - 1) / ens.paths);
    const double gap = std::fabs(y0 - std::exp(-1.0));
    std::ostringstream d;
    d << "Y0 " << y0 << " vs e^{-1} " << std::exp(-1.0) << ", gap " << gap << ", SE "
      << se;
    report(3, "linear-BSDE oracle", gap <= 5e-3 + 3.0 * se, timer.seconds(), 30.0,
           d.str());
}

struct ReflectedRun {
    PathEnsemble ens;
    MultivaluedSolution sol;
};

ReflectedRun solve_reflected(const std::vector<double>& schedule) {
    ReflectedRun rr{simulate(desk_grid(100, 20000)), {}};
    SolveOptions opts;
    opts.mode = PenaltyMode::Implicit;
    rr.sol = refine_epsilon(rr.ens, GeneratorSpec::const_drift(Vec{-1.0}),
                            ConvexSpec::indicator(0.0, kInf), ConvexSpec::zero(),
                            Terminal::constant(0.0), schedule, 0.06, opts);
    return rr;
}

// 4. Reflected-BSDE convergence against the 512-step tree oracle.
void criterion_4(ReflectedRun& rr) {
    Timer timer;
    TreeConfig tcfg;
    tcfg.steps = 512;
    TreeSolution tree = tree_solve(tcfg, GeneratorSpec::const_drift(Vec{-1.0}),
                                   ConvexSpec::indicator(0.0, kInf),
                                   [](double) { return 0.0; });
    rr = solve_reflected({0.4, 0.2, 0.1, 0.05});
    const double gap = std::fabs(rr.sol.y0_mean() - tree.root_y());
    bool decreasing = rr.sol.cauchy_residuals.size() == 3;
    for (std::size_t i = 0; i + 1 < rr.sol.cauchy_residuals.size(); ++i)
        decreasing =
            decreasing && rr.sol.cauchy_residuals[i + 1] < rr.sol.cauchy_residuals[i];
    double worst_dk = 0;
    for (int i = 0; i < rr.sol.steps; ++i) {
        double dk = 0;
        for (int p = 0; p < rr.sol.paths; ++p)
            dk += rr.sol.k[rr.sol.ynode(p, i + 1)] - rr.sol.k[rr.sol.ynode(p, i)];
        worst_dk = std::min(worst_dk, dk / rr.sol.paths);
    }
    std::ostringstream d;
    d << "|Y0 - tree| " << gap << ", residuals decreasing " << (decreasing ? "yes" : "no")
      << ", min mean dK " << worst_dk;
    report(4, "reflected-BSDE convergence",
           gap <= 5e-2 && decreasing && worst_dk >= -1e-10, timer.seconds(), 120.0,
           d.str());
}

// 5. Variational-inequality suite with the calibrated tolerance.
void criterion_5(const ReflectedRun& rr) {
    Timer timer;
    Def1Options opts;  // deltas {0.01, 0.5}, default windows, eval eps 0.05
    const Def1Calibration cal = calibrate_def1_tolerance(rr.ens.cfg, opts);
    opts.tol = cal.tol;
    const GeneratorSpec gen = GeneratorSpec::const_drift(Vec{-1.0});
    const ConvexSpec phi = ConvexSpec::indicator(0.0, kInf);
    const ConvexSpec psi = ConvexSpec::zero();
    bool pass = true;
    double worst = -kInf;
    auto marts = standard_martingales(rr.ens, rr.sol);
    for (double p : {1.5, 2.0}) {
        VariationalReport rep = check_def1(rr.sol, rr.ens, gen, phi, psi, p, marts, opts);
        pass = pass && rep.all_pass && rep.skipped == 0;
        worst = std::max(worst, rep.worst_residual);
    }
    // negative control: the coarse-eps candidate must fail the same gate
    ReflectedRun coarse = solve_reflected({0.5, 0.4});
    auto cmarts = standard_martingales(coarse.ens, coarse.sol);
    VariationalReport crep =
        check_def1(coarse.sol, coarse.ens, gen, phi, psi, 2.0, cmarts, opts);
    std::ostringstream d;
    d << "worst residual " << worst << " vs tol " << opts.tol << "; control worst "
      << crep.worst_residual;
    report(5, "variational-inequality suite", pass && !crep.all_pass, timer.seconds(),
           60.0, d.str());
}

// 6. Discrete Ito residual: K = 100 at least 1.8x the K = 200 residual.
void criterion_6() {
    Timer timer;
    PathEnsemble fine = simulate(desk_grid(200, 20000));
    PathEnsemble coarse = coarsen_ensemble(fine);
    GeneratorSpec gen = GeneratorSpec::linear(1.0);
    auto sf = refine_epsilon(fine, gen, ConvexSpec::zero(), ConvexSpec::zero(),
                             Terminal::brownian_t(), {0.4, 0.2}, kInf);
    auto sc = refine_epsilon(coarse, gen, ConvexSpec::zero(), ConvexSpec::zero(),
                             Terminal::brownian_t(), {0.4, 0.2}, kInf);
    bool pass = true;
    std::ostringstream d;
    for (auto [p, delta] :
         std::vector<std::pair<double, double>>{{1.5, 0.01}, {2.0, 0.0}}) {
        const double rc = ito_residual(sc, coarse, p, delta, 0, sc.steps).residual;
        const double rf = ito_residual(sf, fine, p, delta, 0, sf.steps).residual;
        pass = pass && rc >= 1.8 * rf;
        d << "(p=" << p << ",d=" << delta << "): " << rc / rf << "x ";
    }
    report(6, "discrete Ito residual", pass, timer.seconds(), 60.0, d.str());
}

// 7. Continuity in the terminal data and two-seed uniqueness.
void criterion_7() {
    Timer timer;
    ProblemSpec ps;
    ps.grid = desk_grid(100, 20000);
    ps.gen = GeneratorSpec::linear(1.0);
    ps.eta = Terminal::constant(1.0);
    ps.eps_schedule = {0.4, 0.2};
    ContinuityReport cont = check_continuity(ps, {0.2, 0.1, 0.05}, 2.0, 0.5);
    UniquenessReport uniq = check_uniqueness(ps, 42, 43);
    std::ostringstream d;
    d << "D(h) spread " << cont.ratio_spread << ", uniqueness gap " << uniq.gap
      << " vs " << uniq.limit;
    report(7, "continuity/uniqueness", cont.pass && uniq.pass, timer.seconds(), 120.0,
           d.str());
}

// 8. Exponential smoothing: exactness, eps-convergence and the sup bound.
void criterion_8() {
    Timer timer;
    PathEnsemble ens = simulate(desk_grid(50, 2000));
    std::vector<double> cu(static_cast<std::size_t>(ens.paths) * (ens.steps + 1), 3.7);
    double cerr = 0;
    SmoothResult csm = exp_smooth(cu, ens, 0.2);
    for (double v : csm.u_eps) cerr = std::max(cerr, std::fabs(v - 3.7));
    std::vector<double> u(cu.size());
    for (int p = 0; p < ens.paths; ++p)
        for (int i = 0; i <= ens.steps; ++i) u[ens.node(p, i)] = ens.bval(p, i, 0);
    Vec supu(ens.paths);
    for (int p = 0; p < ens.paths; ++p) {
        double s = 0;
        for (int i = 0; i <= ens.steps; ++i)
            s = std::max(s, std::fabs(u[ens.node(p, i)]));
        supu[p] = s;
    }
    bool decreasing = true, bound_ok = true;
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
        decreasing = decreasing && err < prev;
        prev = err;
        for (int i : {0, ens.steps / 2, ens.steps - 1}) {
            Vec cond = conditional_expectation(ens, i, supu, 3);
            double viol = 0;
            for (int p = 0; p < ens.paths; ++p)
                viol += positive_part(std::fabs(sm.m_eps[ens.node(p, i)]) - cond[p]);
            bound_ok = bound_ok && viol / ens.paths < 0.05;
        }
    }
    std::ostringstream d;
    d << "constant error " << cerr << ", decreasing " << (decreasing ? "yes" : "no");
    report(8, "smoothing module", cerr <= 1e-12 && decreasing && bound_ok,
           timer.seconds(), 20.0, d.str());
}

// 9. Byte-identical artifacts for identical config and seed, any thread count.
void criterion_9() {
    Timer timer;
    if (g_cli.empty()) {
        report(9, "reproducibility", false, timer.seconds(), 60.0,
               "CLI path missing (argv[1])");
        return;
    }
    const std::string cfg = "/tmp/mvbsde_accept.cfg";
    {
        std::ofstream out(cfg);
        out << "problem.generator = const_drift:-1\nproblem.terminal = const:0\n"
            << "problem.phi = indicator:0:inf\nnumerics.steps = 50\n"
            << "numerics.paths = 2000\nnumerics.seed = 42\n"
            << "numerics.eps_schedule = 0.4,0.2\nnumerics.penalty = implicit\n"
            << "numerics.tol = 0.25\n";
    }
    auto run = [&](const std::string& out, int threads) {
        const std::string cmd = g_cli + " solve --config " + cfg + " --out " + out +
                                " --threads " + std::to_string(threads) +
                                " > /dev/null 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str())) == 0;
    };
    auto slurp = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    auto body = [](const std::string& s) {
        const auto nl = s.find('\n');
        return nl == std::string::npos ? s : s.substr(nl + 1);
    };
    bool ok = run("/tmp/mvbsde_acc1", 1) && run("/tmp/mvbsde_acc2", 4) &&
              run("/tmp/mvbsde_acc3", 1);
    ok = ok && slurp("/tmp/mvbsde_acc1/summary.json") ==
                   slurp("/tmp/mvbsde_acc2/summary.json");
    ok = ok && slurp("/tmp/mvbsde_acc1/summary.json") ==
                   slurp("/tmp/mvbsde_acc3/summary.json");
    ok = ok && body(slurp("/tmp/mvbsde_acc1/solution.csv")) ==
                   body(slurp("/tmp/mvbsde_acc2/solution.csv"));
    ok = ok && body(slurp("/tmp/mvbsde_acc1/solution.csv")) ==
                   body(slurp("/tmp/mvbsde_acc3/solution.csv"));
    report(9, "reproducibility", ok, timer.seconds(), 60.0,
           ok ? "byte-identical across reruns and thread counts" : "artifacts differ");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_cli = argv[1];
    criterion_1();
    criterion_2();
    criterion_3();
    ReflectedRun rr{simulate(desk_grid(2, 2)), {}};
    criterion_4(rr);
    criterion_5(rr);
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    std::printf("%s\n", g_failures == 0 ? "acceptance: all criteria pass"
                                        : "acceptance: FAILURES present");
    return g_failures == 0 ? 0 : 1;
}
