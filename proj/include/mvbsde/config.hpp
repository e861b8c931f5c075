// Plain-text experiment configs with dotted keys (section.key = value), every
// field defaulted, and the resolved map echoed verbatim into every artifact.
#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mvbsde/convex.hpp"
#include "mvbsde/core.hpp"
#include "mvbsde/ensemble.hpp"
#include "mvbsde/generator.hpp"
#include "mvbsde/martingale.hpp"
#include "mvbsde/solver.hpp"
#include "mvbsde/verify.hpp"

namespace mvbsde {

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(what) {}
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

}  // namespace detail

// Key-value store with line-level parse diagnostics.
class ConfigMap {
public:
    ConfigMap() = default;

    static ConfigMap parse_text(const std::string& text, const std::string& origin) {
        ConfigMap cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + t + "'");
            const std::string key = detail::trim(t.substr(0, eq));
            const std::string val = detail::trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            cfg.values_[key] = val;
        }
        return cfg;
    }

    static ConfigMap parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse_text(ss.str(), path);
    }

    void set(const std::string& key, const std::string& val) { values_[key] = val; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key, const std::string& dflt) const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : it->second;
    }
    double get_num(const std::string& key, double dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': not a number: '" + it->second + "'");
        }
    }
    std::vector<double> get_list(const std::string& key,
                                 const std::vector<double>& dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        std::vector<double> out;
        for (const std::string& part : detail::split(it->second, ','))
            if (!part.empty()) out.push_back(std::stod(part));
        return out;
    }
    bool get_bool(const std::string& key, bool dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError("key '" + key + "': not a boolean: '" + it->second + "'");
    }

    const std::map<std::string, std::string>& items() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// The resolved experiment: problem data, numerics and the checks to run.
struct RunConfig {
    ProblemSpec problem;
    double p = 2.0;
    double lambda = 0.5;
    std::vector<std::string> checks{"def1", "terminal", "apriori", "uniqueness"};
    std::string out_dir = "out";
    bool export_ensemble = false;
    Def1Options def1;
    std::map<std::string, std::string> resolved;  // full echo, defaults included

    static RunConfig from_map(const ConfigMap& cfg) {
        RunConfig rc;
        GridConfig& g = rc.problem.grid;
        g.horizon = cfg.get_num("problem.horizon", 1.0);
        g.steps = static_cast<int>(cfg.get_num("numerics.steps", 100));
        g.paths = static_cast<int>(cfg.get_num("numerics.paths", 20000));
        g.seed = static_cast<std::uint64_t>(cfg.get_num("numerics.seed", 42));
        g.exit_level = cfg.get_num("problem.exit_level", 0.0);

        const std::string clock = cfg.get("problem.clock", "none");
        if (clock == "none") {
            g.clock = ClockSpec::none();
        } else {
            const auto parts = detail::split(clock, ':');
            if (parts[0] == "linear" && parts.size() == 2) {
                g.clock = ClockSpec::linear(std::stod(parts[1]));
            } else if (parts[0] == "integral" && parts.size() == 2) {
                if (parts[1] == "abs")
                    g.clock = ClockSpec::integral(ClockIntegrand::AbsB);
                else if (parts[1] == "square")
                    g.clock = ClockSpec::integral(ClockIntegrand::SquareB);
                else
                    throw ConfigError("problem.clock: unknown integrand " + parts[1]);
            } else {
                throw ConfigError("problem.clock: '" + clock + "' not recognized");
            }
        }

        rc.problem.phi = parse_obstacle(cfg.get("problem.phi", "zero"));
        rc.problem.psi = parse_obstacle(cfg.get("problem.psi", "zero"));
        rc.problem.gen = parse_generator(cfg.get("problem.generator", "zero"),
                                         cfg.get("problem.generator_g", ""));
        rc.problem.eta = parse_terminal(cfg.get("problem.terminal", "const:0"));
        rc.problem.eps_schedule =
            cfg.get_list("numerics.eps_schedule", {0.4, 0.2, 0.1, 0.05});
        rc.problem.tol = cfg.get_num("numerics.tol", 0.06);

        SolveOptions& o = rc.problem.opts;
        const std::string pen = cfg.get("numerics.penalty", "implicit");
        if (pen == "implicit")
            o.mode = PenaltyMode::Implicit;
        else if (pen == "explicit")
            o.mode = PenaltyMode::Explicit;
        else
            throw ConfigError("numerics.penalty must be explicit or implicit");
        o.degree = static_cast<int>(cfg.get_num("numerics.degree", 3));
        o.quad_nodes = static_cast<int>(cfg.get_num("numerics.quad_nodes", 64));
        o.p = cfg.get_num("numerics.p", 2.0);
        o.lambda = cfg.get_num("numerics.lambda", 0.5);
        o.eps_mollifier_override = cfg.get_num("numerics.eps_mollifier", 0.0);
        o.eps_gate_override = cfg.get_num("numerics.eps_gate", 0.0);
        rc.p = o.p;
        rc.lambda = o.lambda;

        rc.def1.psi_eval_eps = cfg.get_num("checks.psi_eval_eps", 0.05);
        rc.def1.deltas = cfg.get_list("checks.deltas", {0.01, 0.5});
        rc.checks.clear();
        for (const std::string& c :
             detail::split(cfg.get("checks.run", "def1,terminal,apriori,uniqueness"), ','))
            if (!c.empty()) rc.checks.push_back(c);
        rc.out_dir = cfg.get("output.dir", "out");
        rc.export_ensemble = cfg.get_bool("output.ensemble", false);

        rc.resolved = resolve_echo(cfg, rc);
        return rc;
    }

    static ConvexSpec parse_obstacle(const std::string& text) {
        const auto parts = detail::split(text, ':');
        const std::string& kind = parts[0];
        if (kind == "zero") return ConvexSpec::zero();
        if (kind == "maxzero") return ConvexSpec::max_zero();
        if (kind == "quadratic")
            return ConvexSpec::quadratic(parts.size() > 1 ? std::stod(parts[1]) : 1.0);
        if (kind == "abspower")
            return ConvexSpec::abs_power(parts.size() > 1 ? std::stod(parts[1]) : 2.0);
        if (kind == "indicator") {
            if (parts.size() != 3)
                throw ConfigError("indicator obstacle needs indicator:a:b (inf allowed)");
            auto endpoint = [](const std::string& s) {
                if (s == "inf" || s == "+inf") return kInf;
                if (s == "-inf") return -kInf;
                return std::stod(s);
            };
            return ConvexSpec::indicator(endpoint(parts[1]), endpoint(parts[2]));
        }
        throw ConfigError("unknown obstacle kind: " + text);
    }

    static GeneratorSpec parse_generator(const std::string& text, const std::string& gtext) {
        const auto parts = detail::split(text, ':');
        const std::string& kind = parts[0];
        double rho_g = 0;
        if (!gtext.empty()) {
            const auto gp = detail::split(gtext, ':');
            if (gp[0] == "linear" && gp.size() == 2)
                rho_g = std::stod(gp[1]);
            else if (gp[0] != "zero")
                throw ConfigError("problem.generator_g must be zero or linear:rho");
        }
        if (kind == "zero") {
            if (rho_g != 0) return GeneratorSpec::linear(0.0, rho_g);
            return GeneratorSpec::zero();
        }
        if (kind == "linear")
            return GeneratorSpec::linear(parts.size() > 1 ? std::stod(parts[1]) : 1.0,
                                         rho_g);
        if (kind == "const_drift")
            return GeneratorSpec::const_drift(
                Vec{parts.size() > 1 ? std::stod(parts[1]) : -1.0});
        if (kind == "cubic") return GeneratorSpec::cubic_monotone();
        if (kind == "paper_a6") {
            if (parts.size() != 7)
                throw ConfigError("paper_a6 needs paper_a6:atilde:a:b:ctilde:c:d");
            return GeneratorSpec::paper_a6(std::stod(parts[1]), std::stod(parts[2]),
                                           std::stod(parts[3]), std::stod(parts[4]),
                                           std::stod(parts[5]), std::stod(parts[6]));
        }
        throw ConfigError("unknown generator kind: " + text);
    }

    static Terminal parse_terminal(const std::string& text) {
        const auto parts = detail::split(text, ':');
        const std::string& kind = parts[0];
        if (kind == "const")
            return Terminal::constant(parts.size() > 1 ? std::stod(parts[1]) : 0.0);
        if (kind == "bt") return Terminal::brownian_t();
        if (kind == "bt2") return Terminal::brownian_sq_t();
        if (kind == "clamp")
            return Terminal::clamp_exit(parts.size() > 1 ? std::stod(parts[1]) : 1.0);
        throw ConfigError("unknown terminal kind: " + text);
    }

private:
    static std::map<std::string, std::string> resolve_echo(const ConfigMap& cfg,
                                                           const RunConfig& rc) {
        std::map<std::string, std::string> echo = cfg.items();
        auto put_default = [&](const std::string& k, const std::string& v) {
            if (!echo.count(k)) echo[k] = v;
        };
        auto num = [](double v) {
            std::ostringstream ss;
            ss << v;
            return ss.str();
        };
        put_default("problem.horizon", num(rc.problem.grid.horizon));
        put_default("problem.phi", cfg.get("problem.phi", "zero"));
        put_default("problem.psi", cfg.get("problem.psi", "zero"));
        put_default("problem.generator", cfg.get("problem.generator", "zero"));
        put_default("problem.generator_g", cfg.get("problem.generator_g", "zero"));
        put_default("problem.terminal", cfg.get("problem.terminal", "const:0"));
        put_default("problem.clock", cfg.get("problem.clock", "none"));
        put_default("problem.exit_level", num(rc.problem.grid.exit_level));
        put_default("numerics.steps", num(rc.problem.grid.steps));
        put_default("numerics.paths", num(rc.problem.grid.paths));
        put_default("numerics.seed", num(static_cast<double>(rc.problem.grid.seed)));
        {
            std::ostringstream ss;
            for (std::size_t i = 0; i < rc.problem.eps_schedule.size(); ++i)
                ss << (i ? "," : "") << rc.problem.eps_schedule[i];
            put_default("numerics.eps_schedule", ss.str());
        }
        put_default("numerics.tol", num(rc.problem.tol));
        put_default("numerics.penalty",
                    rc.problem.opts.mode == PenaltyMode::Implicit ? "implicit"
                                                                  : "explicit");
        put_default("numerics.degree", num(rc.problem.opts.degree));
        put_default("numerics.quad_nodes", num(rc.problem.opts.quad_nodes));
        put_default("numerics.p", num(rc.p));
        put_default("numerics.lambda", num(rc.lambda));
        put_default("checks.psi_eval_eps", num(rc.def1.psi_eval_eps));
        {
            std::ostringstream ss;
            for (std::size_t i = 0; i < rc.def1.deltas.size(); ++i)
                ss << (i ? "," : "") << rc.def1.deltas[i];
            put_default("checks.deltas", ss.str());
        }
        {
            std::ostringstream ss;
            for (std::size_t i = 0; i < rc.checks.size(); ++i)
                ss << (i ? "," : "") << rc.checks[i];
            put_default("checks.run", ss.str());
        }
        put_default("output.dir", rc.out_dir);
        put_default("output.ensemble", rc.export_ensemble ? "true" : "false");
        return echo;
    }
};

}  // namespace mvbsde
