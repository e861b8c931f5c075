// Config-driven experiment runner: dispatches the property suites, the
// backward solves and the verification checks, and writes the CSV/JSON
// artifacts.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "mvbsde/mvbsde.hpp"

namespace fs = std::filesystem;
using namespace mvbsde;

namespace {

int env_threads() {
    const char* v = std::getenv("MVBSDE_THREADS");
    if (!v) return 1;
    const int n = std::atoi(v);
    return n > 0 ? n : 1;
}

void print_row(const char* name, bool pass, double worst) {
    std::printf("  %-34s %s   worst %.3e\n", name, pass ? "pass" : "FAIL", worst);
}

struct SuiteResult {
    bool ok = true;
    void merge(const char* name, bool pass, double worst) {
        print_row(name, pass, worst);
        ok = ok && pass;
    }
};

ConvexSpec prox_catalog(int which) {
    switch (which % 5) {
        case 0: return ConvexSpec::zero();
        case 1: return ConvexSpec::indicator(-1.0, 1.0);
        case 2: return ConvexSpec::quadratic(2.0);
        case 3: return ConvexSpec::abs_power(1.5);
        default: return ConvexSpec::max_zero();
    }
}

// ---------------------------------------------------------------------------
// prox-suite: randomized property checks of the convex-analysis identities.

int cmd_prox_suite(int samples, const std::vector<double>& eps_list, std::uint64_t seed,
                   bool inject_fault) {
    std::printf("prox-suite: %d samples per kind, %zu eps values\n", samples,
                eps_list.size());
    SuiteResult res;
    const double tol = 1e-12;
    double w_nonexp = 0, w_lip = 0, w_sandwich = 0, w_cross = 0, w_monot = 0;
    double bad_sample[4] = {0, 0, 0, 0};
    for (int w = 0; w < 5; ++w) {
        const ConvexSpec spec = prox_catalog(w);
        for (int i = 0; i < samples; ++i) {
            const double u = -4.0 + 8.0 * uniform_sample(seed, i, 2 * w);
            const double v = -4.0 + 8.0 * uniform_sample(seed, i, 2 * w + 1);
            for (double eps : eps_list) {
                double ju = prox(spec, Vec{u}, eps)[0];
                if (inject_fault) ju += 1e-6;  // hidden hook for the negative control
                const double jv = prox(spec, Vec{v}, eps)[0];
                const double gu = (u - ju) / eps;
                const double gv = (v - jv) / eps;
                const double nonexp = std::fabs(ju - jv) - std::fabs(u - v);
                const double lip = std::fabs(gu - gv) - std::fabs(u - v) / eps;
                if (nonexp > w_nonexp) {
                    w_nonexp = nonexp;
                    bad_sample[0] = u;
                    bad_sample[1] = v;
                    bad_sample[2] = eps;
                    bad_sample[3] = w;
                }
                w_lip = std::max(w_lip, lip);
                const MoreauOutput mo = moreau(spec, Vec{u}, eps);
                const double vres = spec.value(mo.resolvent);
                w_sandwich = std::max(w_sandwich, -vres);
                w_sandwich = std::max(w_sandwich, vres - mo.envelope);
                const double vu = spec.value(Vec{u});
                if (std::isfinite(vu)) w_sandwich = std::max(w_sandwich, mo.envelope - vu);
                const double eps2 = eps * 2.0;
                w_monot =
                    std::max(w_monot, moreau(spec, Vec{u}, eps2).envelope - mo.envelope);
                for (double eps_b : eps_list)
                    w_cross = std::max(w_cross, cross_yosida_residual(spec, Vec{u}, eps,
                                                                      Vec{v}, eps_b));
            }
        }
    }
    res.merge("resolvent nonexpansive", w_nonexp <= tol, w_nonexp);
    res.merge("yosida gradient 1/eps Lipschitz", w_lip <= tol, w_lip);
    res.merge("envelope sandwich", w_sandwich <= tol, w_sandwich);
    res.merge("cross residual nonpositive", w_cross <= tol, w_cross);
    res.merge("envelope monotone in eps", w_monot <= tol, w_monot);
    if (!res.ok)
        std::printf("  offending sample: u=%.17g v=%.17g eps=%.17g kind=%d\n",
                    bad_sample[0], bad_sample[1], bad_sample[2],
                    static_cast<int>(bad_sample[3]));
    std::printf("prox-suite: %s\n", res.ok ? "all pass" : "FAILURES");
    return res.ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// mollifier-suite: the mollified-generator bounds on random samples plus the
// dense-quadrature cross-check.

int cmd_mollifier_suite(int samples, std::uint64_t seed, int nodes) {
    std::printf("mollifier-suite: %d samples per generator, %d nodes\n", samples, nodes);
    SuiteResult res;
    const double p = 2.0, lambda = 0.5;
    const double np = np_const(p);
    const Vec noB{};
    std::vector<GeneratorSpec> gens{GeneratorSpec::linear(0.7),
                                    GeneratorSpec::cubic_monotone(),
                                    GeneratorSpec::const_drift(Vec{-1.0})};
    const char* names[] = {"linear", "cubic", "const_drift"};
    for (std::size_t g = 0; g < gens.size(); ++g) {
        const GeneratorSpec& gen = gens[g];
        double w_ma4 = 0, w_ma1a = 0, w_ma1b = 0, w_ma1c = 0, w_ma2 = 0, w_dense = 0;
        for (double eps : {0.1, 0.25, 0.6}) {
            const MollifierConfig cfg = MollifierConfig::make(eps, 1, nodes);
            const MollifierConfig dense = MollifierConfig::make(eps, 1, 10 * nodes);
            const double kap = cfg.kappa();
            for (int i = 0; i < samples; ++i) {
                const double t = uniform_sample(seed, i, 3 * g);
                const double y = -2.0 + 4.0 * uniform_sample(seed, i, 3 * g + 1);
                const double yh = -2.0 + 4.0 * uniform_sample(seed, i, 3 * g + 2);
                const double z = -3.0 + 6.0 * uniform_sample(seed, i, 3 * g + 3);
                const double zh = -3.0 + 6.0 * uniform_sample(seed, i, 3 * g + 4);
                const double ell = gen.ell(t, noB);
                const double mu = gen.mu(t, noB);
                const double fe = mollify_f(gen, cfg, t, noB, Vec{y}, Vec{z})[0];
                w_dense = std::max(
                    w_dense,
                    std::fabs(fe - mollify_f(gen, dense, t, noB, Vec{y}, Vec{z})[0]));
                w_ma4 = std::max(
                    w_ma4, std::fabs(mollify_f(gen, cfg, t, noB, Vec{0.0}, Vec{0.0})[0]) -
                               sharp_bound(gen, 1.0, t).first);
                w_ma1a = std::max(w_ma1a,
                                  std::fabs(fe) -
                                      (ell * std::fabs(beta_trunc(Vec{z}, eps)[0]) +
                                       1.0 / eps));
                const double fz = mollify_f(gen, cfg, t, noB, Vec{y}, Vec{zh})[0];
                w_ma1b = std::max(w_ma1b, std::fabs(fe - fz) - ell * std::fabs(z - zh));
                const double fy = mollify_f(gen, cfg, t, noB, Vec{yh}, Vec{z})[0];
                w_ma1c = std::max(w_ma1c, std::fabs(fe - fy) - kap * (1.0 + ell) /
                                                                  (eps * eps) *
                                                                  std::fabs(y - yh));
                const double rho = 2.0;
                const double muplus =
                    positive_part(mu + (z != 0 ? ell * ell / (2 * np * lambda) : 0.0));
                const double rhs =
                    std::fabs(y - yh) * sharp_bound(gen, rho + 1.0, t).first +
                    muplus * (y - yh) * (y - yh) + 0.5 * np * lambda * z * z;
                w_ma2 = std::max(w_ma2, (y - yh) * fe - rhs);
            }
        }
        std::printf(" generator %s:\n", names[g]);
        SuiteResult local;
        local.merge("dense-quadrature agreement", w_dense <= 1e-6, w_dense);
        local.merge("ma-4 |F_eps(t,0,0)| bound", w_ma4 <= 1e-6, w_ma4);
        local.merge("ma-1a growth bound", w_ma1a <= 1e-6, w_ma1a);
        local.merge("ma-1b z-Lipschitz", w_ma1b <= 1e-6, w_ma1b);
        local.merge("ma-1c y-Lipschitz", w_ma1c <= 1e-6, w_ma1c);
        local.merge("ma-2 monotonicity transfer", w_ma2 <= 1e-6, w_ma2);
        res.ok = res.ok && local.ok;
    }
    std::printf("mollifier-suite: %s\n", res.ok ? "all pass" : "FAILURES");
    return res.ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// solve / converge / verify / smooth-demo share the config-driven problem.

struct LoadedRun {
    RunConfig rc;
    PathEnsemble ens;
    MultivaluedSolution sol;
};

LoadedRun run_solve(const std::string& config_path, const std::string& out_override,
                    std::int64_t seed_override, int threads) {
    ConfigMap cm = ConfigMap::parse_file(config_path);
    RunConfig rc = RunConfig::from_map(cm);
    if (!out_override.empty()) rc.out_dir = out_override;
    if (seed_override >= 0) {
        rc.problem.grid.seed = static_cast<std::uint64_t>(seed_override);
        rc.resolved["numerics.seed"] = std::to_string(seed_override);
    }
    rc.problem.opts.threads = threads;
    LoadedRun lr{std::move(rc), {}, {}};
    lr.ens = simulate(lr.rc.problem.grid, threads);
    lr.sol = solve_problem(lr.rc.problem, lr.ens);
    return lr;
}

double y0_standard_error(const LoadedRun& lr) {
    // driver-compensated terminal estimator: eta + int H dQ + K_T has the
    // solve's Y_0 mean and carries the terminal sampling noise
    const MultivaluedSolution& sol = lr.sol;
    const PathEnsemble& ens = lr.ens;
    Vec est(sol.paths);
    for (int p = 0; p < sol.paths; ++p) {
        double acc = sol.y[sol.ynode(p, sol.steps)];
        for (int i = 0; i < sol.steps; ++i) {
            const Vec h = combined_h(lr.rc.problem.gen, ens.alpha(p, i),
                                     ens.incr_in_horizon(p, i), ens.t[i], ens.bvec(p, i),
                                     sol.y_at(p, i), sol.z_at(p, i));
            acc += h[0] * ens.dq(p, i);
        }
        acc += sol.k[sol.ynode(p, sol.steps)];
        est[p] = acc;
    }
    double m = 0;
    for (double v : est) m += v;
    m /= sol.paths;
    double var = 0;
    for (double v : est) var += (v - m) * (v - m);
    var /= std::max(1, sol.paths - 1);
    return std::sqrt(var / sol.paths);
}

int cmd_solve(const std::string& config_path, const std::string& out_override,
              std::int64_t seed_override, const std::string& oracle, int threads) {
    LoadedRun lr = run_solve(config_path, out_override, seed_override, threads);
    fs::create_directories(lr.rc.out_dir);

    const double se = y0_standard_error(lr);
    write_file(lr.rc.out_dir + "/solution.csv", solution_csv(lr.sol, lr.rc.resolved));
    json summary = solution_summary_json(lr.sol, lr.rc.resolved, se);

    std::printf("Y0 = %.6f +- %.6f (SE)\n", lr.sol.y0_mean(), se);
    std::printf("eps residuals:");
    for (double r : lr.sol.cauchy_residuals) std::printf(" %.4e", r);
    std::printf("\nconverged: %s\n", lr.sol.converged ? "true" : "false");

    if (oracle == "tree") {
        TreeConfig tcfg;
        tcfg.steps = 512;
        tcfg.horizon = lr.rc.problem.grid.horizon;
        const Terminal& eta = lr.rc.problem.eta;
        auto eta_fn = [&](double b) {
            switch (eta.kind) {
                case Terminal::Kind::Constant: return eta.c + eta.shift;
                case Terminal::Kind::BrownianT: return b + eta.shift;
                case Terminal::Kind::BrownianSqT: return b * b + eta.shift;
                default: throw DomainError("tree oracle: unsupported terminal");
            }
        };
        TreeSolution tree = tree_solve(tcfg, lr.rc.problem.gen, lr.rc.problem.phi, eta_fn);
        summary["oracle"] = {{"kind", "tree"},
                             {"steps", tcfg.steps},
                             {"y0", tree.root_y()},
                             {"abs_diff", std::fabs(tree.root_y() - lr.sol.y0_mean())}};
        std::printf("tree oracle Y0 = %.6f  |diff| = %.4e\n", tree.root_y(),
                    std::fabs(tree.root_y() - lr.sol.y0_mean()));
        write_file(lr.rc.out_dir + "/tree.csv", tree_csv(tree, lr.rc.resolved));
    } else if (oracle == "closed") {
        if (lr.rc.problem.gen.kind != GenKind::Linear &&
            lr.rc.problem.gen.kind != GenKind::Zero)
            throw DomainError("closed-form oracle needs a linear generator");
        const double ref = linear_closed_form_root(lr.rc.problem.gen.rho_f,
                                                   lr.rc.problem.eta,
                                                   lr.rc.problem.grid.horizon);
        summary["oracle"] = {{"kind", "closed"},
                             {"y0", ref},
                             {"abs_diff", std::fabs(ref - lr.sol.y0_mean())}};
        std::printf("closed-form Y0 = %.6f  |diff| = %.4e\n", ref,
                    std::fabs(ref - lr.sol.y0_mean()));
    }

    if (lr.rc.export_ensemble)
        write_file(lr.rc.out_dir + "/ensemble.csv", ensemble_csv(lr.ens, lr.rc.resolved));
    write_file(lr.rc.out_dir + "/summary.json", summary.dump(2) + "\n");
    return 0;
}

int cmd_converge(const std::string& config_path, const std::string& out_override,
                 std::int64_t seed_override, int threads) {
    LoadedRun lr = run_solve(config_path, out_override, seed_override, threads);
    std::printf("%-10s %-14s %-16s %-12s\n", "eps", "residual", "penalty_energy", "y0");
    for (std::size_t i = 0; i < lr.sol.eps_schedule.size(); ++i) {
        std::printf("%-10.4f %-14s %-16.6e %-12.6f\n", lr.sol.eps_schedule[i],
                    i == 0 ? "-"
                           : std::to_string(lr.sol.cauchy_residuals[i - 1]).c_str(),
                    lr.sol.penalty_energy[i], lr.sol.y0_by_eps[i]);
    }
    std::printf("converged: %s\n", lr.sol.converged ? "true" : "false");
    return lr.sol.converged ? 0 : 1;
}

int cmd_verify(const std::string& config_path, const std::string& solution_path,
               const std::string& out_override, int threads) {
    if (!fs::exists(solution_path)) {
        std::fprintf(stderr, "missing solution artifact: %s\n", solution_path.c_str());
        return 2;
    }
    ConfigMap cm = ConfigMap::parse_file(config_path);
    RunConfig rc = RunConfig::from_map(cm);
    if (!out_override.empty()) rc.out_dir = out_override;
    rc.problem.opts.threads = threads;
    PathEnsemble ens = simulate(rc.problem.grid, threads);
    compute_weights(ens, rc.problem.gen.mu, rc.problem.gen.nu, rc.problem.gen.ell, rc.p,
                    rc.lambda);
    MultivaluedSolution sol = read_solution_csv(solution_path, 1, ens.bdim);
    if (sol.paths != ens.paths || sol.steps != ens.steps) {
        std::fprintf(stderr, "solution artifact does not match the config grid\n");
        return 2;
    }
    sol.final_eps = rc.problem.eps_schedule.back();

    fs::create_directories(rc.out_dir);
    json verdicts;
    verdicts["schema_version"] = kSchemaVersion;
    verdicts["config"] = config_echo_json(rc.resolved);
    bool all = true;

    // random-horizon runs with q = p^2 < 2 require Psi(eta) = 0
    double q_worst = 0;
    if (!validate_random_horizon_q(rc.p, ens, rc.problem.phi, rc.problem.psi,
                                   rc.problem.eta, &q_worst)) {
        verdicts["random_horizon_q_check"] = {{"pass", false},
                                              {"worst_psi_eta", q_worst}};
        std::printf("random-horizon q<2 check: FAIL (Psi(eta) up to %.3e)\n", q_worst);
        all = false;
    }

    for (const std::string& check : rc.checks) {
        if (check == "def1") {
            Def1Options opts = rc.def1;
            Def1Calibration cal = calibrate_def1_tolerance(rc.problem.grid, opts);
            opts.tol = cal.tol;
            auto marts = standard_martingales(ens, sol);
            bool pass = true;
            double worst = -kInf;
            std::ostringstream table;
            table << timestamp_line();
            table << "p,q,delta,martingale,window_lo,window_hi,residual,pass\n";
            for (double p : {1.5, 2.0}) {
                VariationalReport rep = check_def1(sol, ens, rc.problem.gen,
                                                   rc.problem.phi, rc.problem.psi, p,
                                                   marts, opts);
                pass = pass && rep.all_pass;
                worst = std::max(worst, rep.worst_residual);
                for (const auto& e : rep.entries)
                    table << p << ',' << e.q << ',' << e.delta << ','
                          << marts[e.mart_index].label << ',' << e.window_lo << ','
                          << e.window_hi << ',' << e.residual << ','
                          << (e.pass ? "1" : "0") << '\n';
            }
            write_file(rc.out_dir + "/def1_residuals.csv", table.str());
            verdicts["def1"] = {{"pass", pass},
                                {"tolerance", opts.tol},
                                {"calibration_c1", cal.c1},
                                {"calibration_c2", cal.c2},
                                {"worst_residual", worst}};
            std::printf("def1: %s (worst %.3e, tol %.3e)\n", pass ? "pass" : "FAIL",
                        worst, opts.tol);
            all = all && pass;
        } else if (check == "terminal") {
            PairMethod method = rc.problem.eta.closed_form() &&
                                        rc.problem.eta.kind != Terminal::Kind::ClampExit
                                    ? PairMethod::ClosedForm
                                    : PairMethod::Regression;
            MartingalePair pair = martingale_pair(rc.problem.eta, ens, method);
            TerminalReport rep = check_terminal(sol, ens, pair, rc.p);
            verdicts["terminal"] = {{"pass", rep.pass},
                                    {"gap_mean", rep.gap_mean},
                                    {"beyond_exit_max", rep.beyond_exit_max}};
            std::printf("terminal: %s (gap %.3e)\n", rep.pass ? "pass" : "FAIL",
                        rep.gap_mean);
            all = all && rep.pass;
        } else if (check == "apriori") {
            AprioriReport rep = check_apriori(sol, ens, rc.problem.gen, rc.problem.phi,
                                              rc.problem.psi, rc.p);
            verdicts["apriori"] = {{"pass", rep.finite},
                                   {"ratio", rep.ratio},
                                   {"sup_y", rep.sup_y},
                                   {"z_energy", rep.z_energy},
                                   {"psi_energy", rep.psi_energy},
                                   {"rhs", rep.rhs}};
            std::printf("apriori: %s (fitted ratio %.3f)\n",
                        rep.finite ? "pass" : "FAIL", rep.ratio);
            all = all && rep.finite;
        } else if (check == "uniqueness") {
            UniquenessReport rep = check_uniqueness(rc.problem, rc.problem.grid.seed,
                                                    rc.problem.grid.seed + 1);
            verdicts["uniqueness"] = {{"pass", rep.pass},
                                      {"mean1", rep.mean1},
                                      {"mean2", rep.mean2},
                                      {"gap", rep.gap},
                                      {"limit_3se", rep.limit}};
            std::printf("uniqueness: %s (gap %.3e, 3SE %.3e)\n",
                        rep.pass ? "pass" : "FAIL", rep.gap, rep.limit);
            all = all && rep.pass;
        } else if (check == "continuity") {
            ContinuityReport rep =
                check_continuity(rc.problem, {0.2, 0.1, 0.05}, rc.p, 0.5);
            verdicts["continuity"] = {{"pass", rep.pass},
                                      {"distances", rep.dist},
                                      {"ratio_spread", rep.ratio_spread}};
            std::printf("continuity: %s (spread %.3f)\n", rep.pass ? "pass" : "FAIL",
                        rep.ratio_spread);
            all = all && rep.pass;
        } else {
            std::fprintf(stderr, "unknown check: %s\n", check.c_str());
            return 2;
        }
    }
    verdicts["all_pass"] = all;
    write_file(rc.out_dir + "/verify.json", verdicts.dump(2) + "\n");
    return all ? 0 : 1;
}

int cmd_smooth_demo(const std::vector<double>& eps_list, int steps, int paths,
                    std::uint64_t seed) {
    GridConfig cfg;
    cfg.horizon = 1.0;
    cfg.steps = steps;
    cfg.paths = paths;
    cfg.seed = seed;
    PathEnsemble ens = simulate(cfg);

    // exactness on constants
    std::vector<double> cu(static_cast<std::size_t>(paths) * (steps + 1), 3.7);
    SmoothResult csm = exp_smooth(cu, ens, eps_list.front());
    double cerr = 0;
    for (double v : csm.u_eps) cerr = std::max(cerr, std::fabs(v - 3.7));
    std::printf("constant exactness: max error %.3e\n", cerr);

    std::vector<double> u(static_cast<std::size_t>(paths) * (steps + 1));
    for (int p = 0; p < paths; ++p)
        for (int i = 0; i <= steps; ++i) u[ens.node(p, i)] = ens.bval(p, i, 0);

    std::printf("%-10s %-16s %-16s\n", "eps", "max_norm_error", "sup_bound_excess");
    bool decreasing = true, bound_ok = true;
    double prev = kInf;
    for (double eps : eps_list) {
        SmoothResult sm = exp_smooth(u, ens, eps);
        double err = 0;
        for (int p = 0; p < paths; ++p) {
            double e = 0;
            for (int i = 0; i <= steps; ++i)
                e = std::max(e, std::fabs(sm.u_eps[ens.node(p, i)] - u[ens.node(p, i)]));
            err += e;
        }
        err /= paths;
        // |M^eps| <= E[sup |U| | F_t] + statistical tolerance
        Vec supu(paths);
        for (int p = 0; p < paths; ++p) {
            double s = 0;
            for (int i = 0; i <= steps; ++i)
                s = std::max(s, std::fabs(u[ens.node(p, i)]));
            supu[p] = s;
        }
        double excess = 0;
        for (int i : {0, steps / 2, steps - 1}) {
            Vec cond = conditional_expectation(ens, i, supu, 3);
            double mean_violation = 0;
            for (int p = 0; p < paths; ++p)
                mean_violation +=
                    positive_part(std::fabs(sm.m_eps[ens.node(p, i)]) - cond[p]);
            excess = std::max(excess, mean_violation / paths);
        }
        std::printf("%-10.4f %-16.6e %-16.6e\n", eps, err, excess);
        decreasing = decreasing && err < prev;
        bound_ok = bound_ok && excess < 0.05;
        prev = err;
    }
    std::printf("smooth-demo: %s\n",
                decreasing && bound_ok && cerr < 1e-12 ? "all pass" : "FAILURES");
    return decreasing && bound_ok && cerr < 1e-12 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multivalued BSDE penalization toolbox"};
    app.require_subcommand(1);
    app.fallthrough();  // --threads may follow the subcommand
    int threads = env_threads();
    app.add_option("--threads", threads, "worker threads (MVBSDE_THREADS fallback)");

    auto* prox = app.add_subcommand("prox-suite", "convex-analysis property suite");
    int prox_samples = 2000;
    std::vector<double> prox_eps{1.0, 0.1, 0.01};
    std::uint64_t prox_seed = 101;
    bool inject_fault = false;
    prox->add_option("--samples", prox_samples, "samples per kind");
    prox->add_option("--eps-list", prox_eps, "epsilon values")->delimiter(',');
    prox->add_option("--seed", prox_seed, "sample seed");
    prox->add_flag("--inject-fault", inject_fault, "perturb one prox for testing")
        ->group("");

    auto* moll = app.add_subcommand("mollifier-suite", "mollified-generator bound suite");
    int moll_samples = 200;
    std::uint64_t moll_seed = 202;
    int moll_nodes = 64;
    moll->add_option("--samples", moll_samples, "samples per generator");
    moll->add_option("--seed", moll_seed, "sample seed");
    moll->add_option("--nodes", moll_nodes, "quadrature nodes");

    std::string config_path, out_dir, oracle = "none", solution_path;
    std::int64_t seed_override = -1;

    auto* solve = app.add_subcommand("solve", "run the penalized solve pipeline");
    solve->add_option("--config", config_path, "config file")->required();
    solve->add_option("--out", out_dir, "output directory override");
    solve->add_option("--seed", seed_override, "seed override");
    solve->add_option("--oracle", oracle, "reference: tree, closed or none")
        ->check(CLI::IsMember({"tree", "closed", "none"}));

    auto* conv = app.add_subcommand("converge", "epsilon-refinement table");
    conv->add_option("--config", config_path, "config file")->required();
    conv->add_option("--out", out_dir, "output directory override");
    conv->add_option("--seed", seed_override, "seed override");

    auto* verify = app.add_subcommand("verify", "run the verification checks");
    verify->add_option("--config", config_path, "config file")->required();
    verify->add_option("--solution", solution_path, "solution.csv artifact")->required();
    verify->add_option("--out", out_dir, "output directory override");

    auto* smooth = app.add_subcommand("smooth-demo", "exp-smoothing convergence table");
    std::vector<double> smooth_eps{0.2, 0.1, 0.05};
    int smooth_steps = 50, smooth_paths = 2000;
    std::uint64_t smooth_seed = 42;
    smooth->add_option("--eps-list", smooth_eps, "epsilon values")->delimiter(',');
    smooth->add_option("--steps", smooth_steps, "grid steps");
    smooth->add_option("--paths", smooth_paths, "paths");
    smooth->add_option("--seed", smooth_seed, "seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prox->parsed())
            return cmd_prox_suite(prox_samples, prox_eps, prox_seed, inject_fault);
        if (moll->parsed()) return cmd_mollifier_suite(moll_samples, moll_seed, moll_nodes);
        if (solve->parsed())
            return cmd_solve(config_path, out_dir, seed_override, oracle, threads);
        if (conv->parsed()) return cmd_converge(config_path, out_dir, seed_override, threads);
        if (verify->parsed()) return cmd_verify(config_path, solution_path, out_dir, threads);
        if (smooth->parsed())
            return cmd_smooth_demo(smooth_eps, smooth_steps, smooth_paths, smooth_seed);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
