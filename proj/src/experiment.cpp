#include "mfsmp/experiment.hpp"

#include "mfsmp/adjoint.hpp"
#include "mfsmp/forward.hpp"
#include "mfsmp/paths.hpp"
#include "mfsmp/problem.hpp"
#include "mfsmp/smp.hpp"
#include "mfsmp/variation.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

namespace mfsmp {

std::string exit_code_help() {
    return "Exit codes:\n"
           "  0  all verdicts passed (or the command has none)\n"
           "  1  a verdict failed\n"
           "  2  usage error: bad arguments or a missing required knob\n"
           "  3  configuration error: malformed JSON or invalid value\n"
           "  4  unknown builtin problem\n"
           "  5  solver failure: non-finite state or singular regression\n"
           "  6  ill-posed problem: non-finite coefficients on probes\n"
           "  7  mismatched grids, dimensions or seeds\n"
           "  8  file system error\n";
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string num(double v) { return fmt::format("{:.17g}", v); }

const json& require(const json& cfg, const char* key) {
    if (!cfg.contains(key)) throw UsageError(fmt::format("missing required knob '{}'", key));
    return cfg.at(key);
}

std::size_t positive_int(const json& v, const char* key) {
    if (!v.is_number_integer() || v.get<long long>() < 1)
        throw ConfigError(fmt::format("knob '{}' must be a positive integer", key));
    return v.get<std::size_t>();
}

double number(const json& v, const char* key) {
    if (!v.is_number()) throw ConfigError(fmt::format("knob '{}' must be a number", key));
    return v.get<double>();
}

std::vector<double> numbers(const json& v, const char* key) {
    if (!v.is_array() || v.empty()) throw ConfigError(fmt::format("knob '{}' must be a nonempty array of numbers", key));
    std::vector<double> out;
    for (const auto& x : v) out.push_back(number(x, key));
    return out;
}

std::vector<std::size_t> counts(const json& v, const char* key) {
    if (!v.is_array() || v.empty()) throw ConfigError(fmt::format("knob '{}' must be a nonempty array of integers", key));
    std::vector<std::size_t> out;
    for (const auto& x : v) out.push_back(positive_int(x, key));
    return out;
}

ProblemSpec resolve_problem(const json& cfg) {
    const auto& p = require(cfg, "problem");
    if (p.is_string()) return load_problem(json{{"builtin", p.get<std::string>()}});
    if (p.is_object()) return load_problem(p);
    throw ConfigError("knob 'problem' must be a builtin name or an object");
}

StrictControlPath resolve_control(const ProblemSpec& spec, const TimeGrid& grid, const json& v) {
    const std::size_t k = spec.dims.control;
    if (v.is_string()) {
        const auto name = v.get<std::string>();
        if (name == "zero") return StrictControlPath::constant(grid, std::vector<double>(k, 0.0));
        if (name == "oracle") return oracle_control(spec, grid);
        throw ConfigError(fmt::format("unknown control '{}'", name));
    }
    if (v.is_object()) {
        if (v.contains("constant")) {
            const auto c = v.at("constant");
            std::vector<double> val = c.is_array() ? numbers(c, "constant") : std::vector<double>{number(c, "constant")};
            return StrictControlPath::constant(grid, val);
        }
        if (v.contains("alternating")) return alternating_control(grid, positive_int(v.at("alternating"), "alternating"));
        if (v.contains("path")) {
            auto u = strict_from_json(v.at("path"));
            if (!(u.grid() == grid)) throw MismatchError("control path grid differs from the configured grid");
            return u;
        }
        if (v.contains("csv")) {
            std::ifstream in(v.at("csv").get<std::string>());
            if (!in) throw fs::filesystem_error("cannot open control csv", fs::path(v.at("csv").get<std::string>()),
                                                std::make_error_code(std::errc::no_such_file_or_directory));
            auto u = read_strict_csv(in);
            if (!(u.grid() == grid)) throw MismatchError("control path grid differs from the configured grid");
            return u;
        }
    }
    throw ConfigError("knob 'control' must be \"zero\", \"oracle\", or an object with constant, alternating, path or csv");
}

SingularControlPath resolve_singular(const ProblemSpec& spec, const TimeGrid& grid, const json& v, const char* key) {
    const std::size_t m = spec.dims.singular;
    if (v.is_string() && v.get<std::string>() == "zero") return SingularControlPath::zero(grid, m);
    if (v.is_object()) {
        if (v.contains("jump")) return SingularControlPath::jump_at_zero(grid, numbers(v.at("jump"), "jump"));
        if (v.contains("first_interval")) {
            auto inc = numbers(v.at("first_interval"), "first_interval");
            if (inc.size() != m) throw MismatchError("first_interval has wrong dimension");
            std::vector<double> all(grid.steps() * m, 0.0);
            std::copy(inc.begin(), inc.end(), all.begin());
            return SingularControlPath(grid, m, std::vector<double>(m, 0.0), std::move(all));
        }
        if (v.contains("path")) {
            auto eta = singular_from_json(v.at("path"));
            if (!(eta.grid() == grid)) throw MismatchError("singular path grid differs from the configured grid");
            return eta;
        }
    }
    throw ConfigError(fmt::format("knob '{}' must be \"zero\" or an object with jump, first_interval or path", key));
}

SimConfig sim_config(const json& cfg, std::uint64_t seed) {
    return SimConfig{positive_int(require(cfg, "N"), "N"), seed, cfg.value("antithetic", false)};
}

SmpOptions smp_options(const json& cfg) {
    SmpOptions o;
    if (cfg.contains("basis_degree")) o.adjoint.basis_degree = positive_int(cfg.at("basis_degree"), "basis_degree");
    if (cfg.contains("cost_sign")) {
        const auto s = cfg.at("cost_sign").get<std::string>();
        if (s == "conventional") o.adjoint.cost_sign = CostSign::conventional;
        else if (s == "as_printed") o.adjoint.cost_sign = CostSign::as_printed;
        else throw ConfigError("cost_sign must be \"conventional\" or \"as_printed\"");
    }
    if (cfg.contains("tolerances")) {
        const auto& t = cfg.at("tolerances");
        o.tolerances.std_errors = t.value("std_errors", o.tolerances.std_errors);
        o.tolerances.grid_slack = t.value("grid_slack", o.tolerances.grid_slack);
        o.tolerances.discretization = t.value("discretization", o.tolerances.discretization);
        o.tolerances.absolute = t.value("absolute", o.tolerances.absolute);
    }
    return o;
}

class Output {
public:
    explicit Output(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_ / "tables"); }

    std::ofstream table(const std::string& name) { return open(dir_ / "tables" / name); }
    std::ofstream file(const std::string& name) { return open(dir_ / name); }

private:
    std::ofstream open(const fs::path& p) {
        std::ofstream os(p, std::ios::binary);
        if (!os) throw fs::filesystem_error("cannot write", p, std::make_error_code(std::errc::io_error));
        return os;
    }
    fs::path dir_;
};

void write_smp_tables(Output& out, const SmpReport& r, const TimeGrid& grid) {
    auto h = out.table("hamiltonian.csv");
    h << "t,gap,tolerance,std_error,argmin\n";
    for (std::size_t j = 0; j < r.hamiltonian_gap.size(); ++j)
        h << num(grid.knot(j)) << ',' << num(r.hamiltonian_gap[j]) << ',' << num(r.hamiltonian_tolerance[j]) << ','
          << num(r.hamiltonian_std_error[j]) << ',' << r.hamiltonian_argmin[j] << '\n';
    auto s = out.table("sign_condition.csv");
    const std::size_t m = r.sign_residual.size();
    s << 't';
    for (std::size_t c = 0; c < m; ++c) s << ",percentile_1_" << c;
    s << '\n';
    for (std::size_t j = 0; j < r.steps; ++j) {
        s << num(grid.knot(j));
        for (std::size_t c = 0; c < m; ++c) s << ',' << num(r.sign_percentile[j * m + c]);
        s << '\n';
    }
}

json cost_json(const CostReport& c) {
    return {{"total", c.total},
            {"running", c.running},
            {"terminal", c.terminal},
            {"singular", c.singular},
            {"std_error", c.std_error}};
}

json assumptions_json(const AssumptionReport& a) {
    json checks = json::array();
    for (const auto& c : a.checks)
        checks.push_back({{"id", c.id}, {"probe", c.probe}, {"passed", c.passed}, {"worst_residual", c.worst_residual}});
    return {{"passed", a.passed}, {"seed", a.seed}, {"probes", a.probes}, {"box_radius", a.box_radius}, {"checks", checks}};
}

}  // namespace

int run_experiment(const std::string& command, const json& cfg_in, std::optional<std::uint64_t> seed_opt,
                   const fs::path& out_dir, std::ostream& log) {
    if (!cfg_in.is_object()) throw ConfigError("configuration must be a JSON object");
    json cfg = cfg_in;
    if (seed_opt) cfg["seed"] = *seed_opt;
    if (!cfg.contains("seed")) cfg["seed"] = 1;
    const auto seed = cfg.at("seed").get<std::uint64_t>();
    cfg["command"] = command;

    static const std::vector<std::string> commands{"simulate",    "cost",        "check-strict",
                                                   "check-relaxed", "check-near", "improve",
                                                   "convergence", "chattering-study", "duality-study"};
    if (std::find(commands.begin(), commands.end(), command) == commands.end())
        throw UsageError(fmt::format("unknown command '{}'", command));

    const ProblemSpec spec = resolve_problem(cfg);
    const std::size_t L = positive_int(require(cfg, "L"), "L");
    const TimeGrid grid(spec.horizon, L);
    const auto assumptions = validate_spec(spec, cfg.contains("probes") ? positive_int(cfg.at("probes"), "probes") : 200,
                                           cfg.contains("box_radius") ? number(cfg.at("box_radius"), "box_radius") : 5.0);
    if (!assumptions.passed) log << "warning: standing assumptions not confirmed on probes (see report.json)\n";

    Output out(out_dir);
    json report{{"command", command}, {"config", cfg}, {"problem", spec.parameters},
                {"assumptions", assumptions_json(assumptions)}};
    json verdicts = json::object();
    std::ostringstream summary;

    const json control_cfg = cfg.value("control", json("zero"));
    const json eta_cfg = cfg.value("eta", json("zero"));

    if (command == "simulate" || command == "cost") {
        const auto cfgs = sim_config(cfg, seed);
        const auto u = resolve_control(spec, grid, control_cfg);
        const auto eta = resolve_singular(spec, grid, eta_cfg, "eta");
        const auto ens = simulate(spec, u, eta, cfgs);
        auto t = out.table("ensemble_summary.csv");
        write_summary_csv(t, ens);
        if (cfg.value("trajectories", false)) {
            auto b = out.file("trajectories.bin");
            write_trajectories(b, ens);
        }
        const auto c = cost(spec, ens, u, eta);
        report["cost"] = cost_json(c);
        if (command == "cost") {
            auto ct = out.table("cost.csv");
            ct << "total,running,terminal,singular,std_error\n"
               << num(c.total) << ',' << num(c.running) << ',' << num(c.terminal) << ',' << num(c.singular) << ','
               << num(c.std_error) << '\n';
        }
        summary << fmt::format("cost {:.6g} (se {:.3g})\n", c.total, c.std_error);
    } else if (command == "check-strict" || command == "check-near") {
        const auto cfgs = sim_config(cfg, seed);
        const auto u = resolve_control(spec, grid, control_cfg);
        const auto eta = resolve_singular(spec, grid, eta_cfg, "eta");
        const auto opts = smp_options(cfg);
        const auto r = command == "check-strict"
                           ? check_strict(spec, u, eta, cfgs, opts)
                           : check_near_optimal(spec, u, eta, cfgs, number(require(cfg, "epsilon_n"), "epsilon_n"),
                                                number(require(cfg, "alpha"), "alpha"), opts);
        report["smp"] = to_json(r);
        write_smp_tables(out, r, grid);
        write_text_summary(summary, r);
        verdicts["smp"] = r.passed;
    } else if (command == "check-relaxed") {
        const auto cfgs = sim_config(cfg, seed);
        const auto eta = resolve_singular(spec, grid, eta_cfg, "eta");
        const json rc = cfg.value("relaxed", json("uniform"));
        RelaxedControlPath q = RelaxedControlPath::uniform(grid, spec.control_set);
        if (rc.is_string() && rc.get<std::string>() == "embed")
            q = embed_strict(resolve_control(spec, grid, control_cfg), spec.control_set);
        else if (rc.is_object() && rc.contains("path"))
            q = relaxed_from_json(rc.at("path"));
        else if (!(rc.is_string() && rc.get<std::string>() == "uniform"))
            throw ConfigError("knob 'relaxed' must be \"uniform\", \"embed\" or an object with path");
        const auto r = check_relaxed(spec, q, eta, cfgs, smp_options(cfg));
        report["smp"] = to_json(r);
        write_smp_tables(out, r, grid);
        write_text_summary(summary, r);
        verdicts["smp"] = r.passed;
    } else if (command == "improve") {
        const auto cfgs = sim_config(cfg, seed);
        const auto u0 = resolve_control(spec, grid, control_cfg);
        const auto eta0 = resolve_singular(spec, grid, eta_cfg, "eta");
        const auto opts = smp_options(cfg);
        const auto iters = positive_int(require(cfg, "iterations"), "iterations");
        const double damping = cfg.contains("step_damping") ? number(cfg.at("step_damping"), "step_damping") : 0.5;
        const auto res = improve(spec, u0, eta0, cfgs, iters, damping, opts);
        auto t = out.table("improve.csv");
        t << "iteration,cost,std_error,eta_total\n";
        for (std::size_t k = 0; k < res.costs.size(); ++k) {
            double tot = 0.0;
            for (double v : res.singulars[k].total()) tot += v;
            t << k << ',' << num(res.costs[k]) << ',' << num(res.cost_std_errors[k]) << ',' << num(tot) << '\n';
        }
        auto uc = out.table("best_control.csv");
        write_csv(uc, res.best_control());
        auto ec = out.table("best_singular.csv");
        write_csv(ec, res.best_singular());
        const auto r = check_strict(spec, res.best_control(), res.best_singular(), cfgs, opts);
        report["improve"] = {{"costs", res.costs}, {"best", res.best}, {"best_cost", res.costs[res.best]}};
        if (spec.lq) {
            const double oracle = lq_oracle(spec).optimal_cost;
            report["improve"]["oracle_cost"] = oracle;
            report["improve"]["relative_gap"] = (res.costs[res.best] - oracle) / std::abs(oracle);
        }
        report["smp"] = to_json(r);
        write_smp_tables(out, r, grid);
        summary << fmt::format("improve: {} iterates, best cost {:.6g} at iterate {}\n", res.costs.size(),
                               res.costs[res.best], res.best);
        write_text_summary(summary, r);
        verdicts["smp"] = r.passed;
    } else if (command == "convergence") {
        const auto u = resolve_control(spec, grid, control_cfg);
        const auto eta = resolve_singular(spec, grid, eta_cfg, "eta");
        const auto ns = counts(require(cfg, "particle_counts"), "particle_counts");
        const auto reps = positive_int(require(cfg, "reps"), "reps");
        const auto table = meanfield_convergence(spec, u, eta, ns, reps, seed);
        auto t = out.table("convergence.csv");
        t << "particles,deviation\n";
        for (const auto& r : table.rows) t << r.particles << ',' << num(r.deviation) << '\n';
        report["convergence"] = {{"reps", reps},
                                 {"slope", table.slope ? json(*table.slope) : json()},
                                 {"slope_std_error", table.slope_std_error ? json(*table.slope_std_error) : json()}};
        summary << fmt::format("fitted slope {}\n", table.slope ? fmt::format("{:.4f}", *table.slope) : "n/a");
    } else if (command == "chattering-study") {
        const auto cfgs = sim_config(cfg, seed);
        const auto ns = counts(require(cfg, "ns"), "ns");
        const auto eta = resolve_singular(spec, grid, eta_cfg, "eta");
        const auto q = RelaxedControlPath::uniform(grid, spec.control_set);
        const auto relaxed_cost = cost(spec, simulate_relaxed(spec, q, eta, cfgs), q, eta).total;
        const bool alternating = spec.control_set == ControlSet(1, {-1.0, 1.0});
        auto t = out.table("chattering.csv");
        t << "n,J_chattering,J_relaxed,gap,weak_distance";
        if (alternating) t << ",J_alternating,bound";
        t << '\n';
        bool bound_ok = true;
        json rows = json::array();
        for (std::size_t n : ns) {
            const auto uc = chattering(q, n, seed);
            const auto en = refine(eta, n);
            const double jc = cost(spec, simulate(spec, uc, en, cfgs), uc, en).total;
            const double wd = weak_distance(embed_strict(uc, spec.control_set), q, 1);
            t << n << ',' << num(jc) << ',' << num(relaxed_cost) << ',' << num(std::abs(jc - relaxed_cost)) << ','
              << num(wd);
            json row{{"n", n}, {"J_chattering", jc}, {"gap", std::abs(jc - relaxed_cost)}, {"weak_distance", wd}};
            if (alternating) {
                const auto v = alternating_control(grid, n);
                const double ja = cost(spec, simulate(spec, v, eta, cfgs), v, eta).total;
                const double bound = 1.0 / static_cast<double>(n * n) + 2.0 * grid.dt();
                bound_ok = bound_ok && ja <= bound;
                t << ',' << num(ja) << ',' << num(bound);
                row["J_alternating"] = ja;
                row["bound"] = bound;
            }
            t << '\n';
            rows.push_back(row);
        }
        report["chattering"] = {{"relaxed_cost", relaxed_cost}, {"rows", rows}};
        if (alternating) verdicts["alternating_bound"] = bound_ok;
        summary << fmt::format("relaxed cost {:.6g}\n", relaxed_cost);
    } else if (command == "duality-study") {
        const auto cfgs = sim_config(cfg, seed);
        std::vector<std::size_t> grids = cfg.contains("grids") ? counts(cfg.at("grids"), "grids")
                                                               : std::vector<std::size_t>{L};
        const json xi_cfg = cfg.value("xi", json{{"first_interval", std::vector<double>(spec.dims.singular, 1.0)}});
        const auto opts = smp_options(cfg);
        auto t = out.table("duality.csv");
        t << "L,lhs,rhs,gap,combined_std_error,allowance\n";
        bool ok = true;
        json rows = json::array();
        for (std::size_t Lk : grids) {
            const TimeGrid gk(spec.horizon, Lk);
            const auto u = resolve_control(spec, gk, control_cfg);
            const auto eta = resolve_singular(spec, gk, eta_cfg, "eta");
            const auto xi = resolve_singular(spec, gk, xi_cfg, "xi");
            const auto ens = simulate(spec, u, eta, cfgs);
            const ControlSchedule control(u);
            const auto y2 = second_variation(spec, ens, control, eta, xi, cfgs);
            const auto adj = solve_adjoint(spec, ens, control, opts.adjoint);
            const auto d = check_duality(spec, ens, control, y2, adj, eta, xi);
            const double allowance = opts.tolerances.std_errors * d.combined_std_error + 5.0 * gk.dt();
            ok = ok && d.gap <= allowance;
            t << Lk << ',' << num(d.lhs) << ',' << num(d.rhs) << ',' << num(d.gap) << ',' << num(d.combined_std_error)
              << ',' << num(allowance) << '\n';
            rows.push_back({{"L", Lk}, {"lhs", d.lhs}, {"rhs", d.rhs}, {"gap", d.gap},
                            {"combined_std_error", d.combined_std_error}, {"allowance", allowance}});
        }
        report["duality"] = rows;
        verdicts["duality"] = ok;
    }

    bool all = true;
    for (auto it = verdicts.begin(); it != verdicts.end(); ++it) all = all && it.value().get<bool>();
    report["verdicts"] = verdicts;
    report["passed"] = all;

    {
        auto r = out.file("report.json");
        r << report.dump(2) << '\n';
        auto s = out.file("summary.txt");
        s << summary.str();
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        json manifest{{"version", kVersion},
                      {"command", command},
                      {"spec_hash", fnv1a_hex(spec.parameters.dump())},
                      {"seed", seed},
                      {"grid", to_json(grid)},
                      {"config", cfg},
                      {"created_unix", std::chrono::duration_cast<std::chrono::seconds>(now).count()}};
        auto m = out.file("manifest.json");
        m << manifest.dump(2) << '\n';
    }
    log << summary.str();
    return all ? exit_ok : exit_verdict_failed;
}

int run_experiment_guarded(const std::string& command, const json& config, std::optional<std::uint64_t> seed,
                           const fs::path& out_dir, std::ostream& log, std::ostream& err) {
    try {
        return run_experiment(command, config, seed, out_dir, log);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const UnknownBuiltinError& e) {
        err << "unknown builtin: " << e.what() << '\n';
        return exit_unknown_builtin;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return exit_config;
    } catch (const json::exception& e) {
        err << "configuration error: " << e.what() << '\n';
        return exit_config;
    } catch (const MismatchError& e) {
        err << "mismatch: " << e.what() << '\n';
        return exit_mismatch;
    } catch (const SolverError& e) {
        err << "solver failure: " << e.what() << '\n';
        return exit_solver;
    } catch (const IllPosedError& e) {
        err << "ill-posed problem: " << e.what() << '\n';
        return exit_ill_posed;
    } catch (const fs::filesystem_error& e) {
        err << "file system error: " << e.what() << '\n';
        return exit_io;
    } catch (const std::invalid_argument& e) {
        err << "configuration error: " << e.what() << '\n';
        return exit_config;
    }
}

}  // namespace mfsmp
