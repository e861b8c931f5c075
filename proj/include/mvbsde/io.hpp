// Artifact writers and readers: comma-separated tables with one row per
// (path, step) or (level, node), and a single JSON summary object per run.
// The timestamp is isolated in one leading comment line of each CSV so that
// outputs are byte-identical otherwise; the JSON carries no timestamp.
#pragma once

#include <json.hpp>

#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mvbsde/core.hpp"
#include "mvbsde/ensemble.hpp"
#include "mvbsde/oracle.hpp"
#include "mvbsde/solver.hpp"

namespace mvbsde {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    out << content;
}

inline std::string timestamp_line() {
    // fixed-width UTC stamp; isolated so reproducibility diffs can drop line 1
    std::time_t t = std::time(nullptr);
    char buf[64];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return std::string("# generated ") + buf + "\n";
}

// Resolved config echoed as deterministic comment lines (every artifact
// carries the full config; only the timestamp line varies between runs).
inline std::string csv_config_echo(const std::map<std::string, std::string>& resolved) {
    std::ostringstream out;
    for (const auto& [k, v] : resolved) out << "# cfg " << k << " = " << v << '\n';
    return out.str();
}

inline std::string ensemble_csv(const PathEnsemble& ens,
                                const std::map<std::string, std::string>& resolved = {}) {
    std::ostringstream out;
    out << timestamp_line() << csv_config_echo(resolved);
    out << "path,step";
    for (int d = 0; d < ens.bdim; ++d) out << ",b" << d;
    out << ",a,q,v\n";
    for (int p = 0; p < ens.paths; ++p)
        for (int i = 0; i <= ens.steps; ++i) {
            out << p << ',' << i;
            for (int d = 0; d < ens.bdim; ++d)
                out << ',' << detail::fmt_double(ens.bval(p, i, d));
            out << ',' << detail::fmt_double(ens.aval(p, i)) << ','
                << detail::fmt_double(ens.qval(p, i)) << ','
                << detail::fmt_double(ens.vval(p, i)) << '\n';
        }
    return out.str();
}

inline std::string solution_csv(const MultivaluedSolution& sol,
                                const std::map<std::string, std::string>& resolved = {}) {
    std::ostringstream out;
    out << timestamp_line() << csv_config_echo(resolved);
    out << "path,step";
    for (int d = 0; d < sol.m; ++d) out << ",y" << d;
    for (int d = 0; d < sol.m * sol.kdim; ++d) out << ",z" << d;
    for (int d = 0; d < sol.m; ++d) out << ",k" << d;
    out << '\n';
    for (int p = 0; p < sol.paths; ++p)
        for (int i = 0; i <= sol.steps; ++i) {
            out << p << ',' << i;
            for (int d = 0; d < sol.m; ++d)
                out << ',' << detail::fmt_double(sol.y[sol.ynode(p, i) + d]);
            for (int d = 0; d < sol.m * sol.kdim; ++d)
                out << ',' << detail::fmt_double(sol.z[sol.znode(p, i) + d]);
            for (int d = 0; d < sol.m; ++d)
                out << ',' << detail::fmt_double(sol.k[sol.ynode(p, i) + d]);
            out << '\n';
        }
    return out.str();
}

inline std::string tree_csv(const TreeSolution& tree,
                            const std::map<std::string, std::string>& resolved = {}) {
    std::ostringstream out;
    out << timestamp_line() << csv_config_echo(resolved);
    out << "level,node,y,z,k\n";
    for (int i = 0; i <= tree.steps; ++i)
        for (int j = 0; j <= i; ++j)
            out << i << ',' << j << ',' << detail::fmt_double(tree.y[i][j]) << ','
                << detail::fmt_double(tree.z[i][j]) << ','
                << detail::fmt_double(tree.k[i][j]) << '\n';
    return out.str();
}

// Reads a solution written by solution_csv back into grid arrays.
inline MultivaluedSolution read_solution_csv(const std::string& path, int m, int kdim) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open solution artifact: " + path);
    std::string line;
    // skip comment lines (timestamp, config echo), then the header row
    while (std::getline(in, line) && !line.empty() && line[0] == '#') {
    }
    MultivaluedSolution sol;
    sol.m = m;
    sol.kdim = kdim;
    int max_path = -1, max_step = -1;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (static_cast<int>(row.size()) != 2 + 2 * m + m * kdim)
            throw Error("solution artifact has unexpected column count");
        max_path = std::max(max_path, static_cast<int>(row[0]));
        max_step = std::max(max_step, static_cast<int>(row[1]));
        rows.push_back(std::move(row));
    }
    sol.paths = max_path + 1;
    sol.steps = max_step;
    sol.y.assign(static_cast<std::size_t>(sol.paths) * (sol.steps + 1) * m, 0.0);
    sol.z.assign(static_cast<std::size_t>(sol.paths) * (sol.steps + 1) * m * kdim, 0.0);
    sol.k = sol.y;
    sol.u1 = sol.y;
    sol.u2 = sol.y;
    for (const auto& row : rows) {
        const int p = static_cast<int>(row[0]);
        const int i = static_cast<int>(row[1]);
        int c = 2;
        for (int d = 0; d < m; ++d) sol.y[sol.ynode(p, i) + d] = row[c++];
        for (int d = 0; d < m * kdim; ++d) sol.z[sol.znode(p, i) + d] = row[c++];
        for (int d = 0; d < m; ++d) sol.k[sol.ynode(p, i) + d] = row[c++];
    }
    return sol;
}

inline json config_echo_json(const std::map<std::string, std::string>& resolved) {
    json j = json::object();
    for (const auto& [k, v] : resolved) j[k] = v;
    return j;
}

inline json solution_summary_json(const MultivaluedSolution& sol,
                                  const std::map<std::string, std::string>& resolved,
                                  double y0_se) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = config_echo_json(resolved);
    j["y0_mean"] = sol.y0_mean();
    j["y0_se"] = y0_se;
    j["converged"] = sol.converged;
    j["final_eps"] = sol.final_eps;
    j["eps_schedule"] = sol.eps_schedule;
    j["cauchy_residuals"] = sol.cauchy_residuals;
    j["penalty_energy"] = sol.penalty_energy;
    j["y0_by_eps"] = sol.y0_by_eps;
    j["paths"] = sol.paths;
    j["steps"] = sol.steps;
    j["max_regression_condition"] = sol.diag.max_condition_number;
    return j;
}

}  // namespace mvbsde
