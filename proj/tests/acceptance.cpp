// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number of failures.
#include "mfsmp/adjoint.hpp"
#include "mfsmp/core.hpp"
#include "mfsmp/forward.hpp"
#include "mfsmp/paths.hpp"
#include "mfsmp/problem.hpp"
#include "mfsmp/smp.hpp"
#include "mfsmp/variation.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

using namespace mfsmp;

namespace {

struct Outcome {
    bool passed;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt::format("{:.3g}", v[i]);
    return s;
}

Outcome alternating_example() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto spec = builtin_oscillating();
    const TimeGrid grid(spec.horizon, 256);
    const SimConfig cfg{2, 1, false};
    const auto eta = SingularControlPath::zero(grid, 1);
    bool ok = true;
    double worst = -1e300;
    for (std::size_t n = 1; n <= 10; ++n) {
        const auto v = alternating_control(grid, n);
        const double j = cost(spec, simulate(spec, v, eta, cfg), v, eta).total;
        const double bound = 1.0 / static_cast<double>(n * n) + 2.0 * grid.dt();
        worst = std::max(worst, j - bound);
        ok = ok && j <= bound;
    }
    const auto q = RelaxedControlPath::uniform(grid, spec.control_set);
    const double jq = cost(spec, simulate_relaxed(spec, q, eta, cfg), q, eta).total;
    const double secs = seconds_since(t0);
    ok = ok && jq == 0.0 && secs < 1.0;
    return {ok, fmt::format("max J(v^n)-bound {:.3g}, relaxed J {:.3g}, {:.2f}s", worst, jq, secs)};
}

Outcome chattering_convergence() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto spec = builtin_oscillating();
    const TimeGrid grid(spec.horizon, 256);
    const SimConfig cfg{2, 1, false};
    const auto eta = SingularControlPath::zero(grid, 1);
    const auto q = RelaxedControlPath::uniform(grid, spec.control_set);
    const double jq = cost(spec, simulate_relaxed(spec, q, eta, cfg), q, eta).total;
    std::vector<double> gaps;
    for (std::size_t n : {1, 2, 4, 8, 16}) {
        const auto u = chattering(q, n, 7);
        const auto en = refine(eta, n);
        gaps.push_back(std::abs(cost(spec, simulate(spec, u, en, cfg), u, en).total - jq));
    }
    const double secs = seconds_since(t0);
    const bool ok = strictly_decreasing(gaps) && gaps.back() <= 1e-2 && secs < 5.0;
    return {ok, fmt::format("gaps [{}], {:.2f}s", join(gaps), secs)};
}

Outcome lq_oracle_agreement() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto spec = builtin_lq();
    const TimeGrid grid(spec.horizon, 256);
    const SimConfig cfg{4000, 11, false};
    const auto eta = SingularControlPath::zero(grid, 1);
    const auto at_oracle = check_strict(spec, oracle_control(spec, grid), eta, cfg);
    const double optimum = lq_oracle(spec).optimal_cost;
    const auto zero = StrictControlPath::constant(grid, std::vector<double>{0.0});
    const auto res = improve(spec, zero, eta, cfg, 30, 0.5);
    const double best = res.costs[res.best];
    const double rel = (best - optimum) / std::abs(optimum);
    const double secs = seconds_since(t0);
    const bool ok = at_oracle.hamiltonian_passed && at_oracle.sign_passed && at_oracle.slackness_passed &&
                    std::abs(rel) <= 0.02 && res.costs.size() <= 31 && secs < 120.0;
    return {ok, fmt::format("verdicts at oracle H={} S={} CS={}, improve {:.5g} vs oracle {:.5g} ({:+.2f}%) after {} "
                            "iterations, {:.1f}s",
                            at_oracle.hamiltonian_passed, at_oracle.sign_passed, at_oracle.slackness_passed, best,
                            optimum, 100.0 * rel, res.costs.size() - 1, secs)};
}

DualityReport duality_at(const ProblemSpec& spec, std::size_t L, const SimConfig& cfg) {
    const TimeGrid grid(spec.horizon, L);
    const auto u = oracle_control(spec, grid);
    const auto eta = SingularControlPath::zero(grid, 1);
    std::vector<double> inc(L, 0.0);
    inc[0] = 1.0;
    const SingularControlPath xi(grid, 1, {0.0}, inc);
    const auto ens = simulate(spec, u, eta, cfg);
    const auto y2 = second_variation(spec, ens, u, eta, xi, cfg);
    const auto adj = solve_adjoint(spec, ens, u);
    return check_duality(spec, ens, u, y2, adj, eta, xi);
}

Outcome duality_identity() {
    const auto spec = builtin_lq();
    const SimConfig cfg{10000, 5, false};
    const auto coarse = duality_at(spec, 256, cfg);
    const auto fine = duality_at(spec, 1024, cfg);
    const double allowance = 3.0 * coarse.combined_std_error + 5.0 * spec.horizon / 256.0;
    const bool ok = coarse.gap <= allowance && fine.gap < coarse.gap;
    return {ok, fmt::format("L=256 lhs {:.6g} rhs {:.6g} gap {:.3g} (allowance {:.3g}); L=1024 gap {:.3g}", coarse.lhs,
                            coarse.rhs, coarse.gap, allowance, fine.gap)};
}

Outcome variational_convergence() {
    const auto spec = builtin_lq_cubic();
    const TimeGrid grid(spec.horizon, 256);
    const SimConfig cfg{2000, 3, false};
    const auto u = StrictControlPath::constant(grid, std::vector<double>{0.0});
    const auto eta = SingularControlPath::zero(grid, 1);
    const auto xi = SingularControlPath::jump_at_zero(grid, std::vector<double>{1.0});
    const auto table = check_lemma3(spec, u, eta, xi, cfg, {0.4, 0.2, 0.1, 0.05});
    std::vector<double> err, ratios;
    for (const auto& r : table.rows) err.push_back(r.value);
    bool ok = strictly_decreasing(err);
    for (std::size_t i = 1; i < err.size(); ++i) {
        ratios.push_back(err[i] / err[i - 1]);
        ok = ok && ratios.back() <= 0.75;
    }
    return {ok, fmt::format("errors [{}], ratios [{}]", join(err), join(ratios))};
}

Outcome spike_order() {
    const auto spec = builtin_lq();
    const TimeGrid grid(spec.horizon, 256);
    const SimConfig cfg{2000, 4, false};
    const auto u = StrictControlPath::constant(grid, std::vector<double>{0.0});
    const auto eta = SingularControlPath::zero(grid, 1);
    const auto table = check_lemma1(spec, u, eta, cfg, 0.0, {1.0}, {0.2, 0.1, 0.05});
    std::vector<double> ratios;
    bool ok = true;
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        ratios.push_back(table.rows[i].value / table.rows[i - 1].value);
        ok = ok && ratios.back() <= 0.3;
    }
    return {ok, fmt::format("dyadic ratios [{}]", join(ratios))};
}

Outcome particle_rate() {
    const auto spec = builtin_lq();
    const TimeGrid grid(spec.horizon, 256);
    const auto u = StrictControlPath::constant(grid, std::vector<double>{0.0});
    const auto eta = SingularControlPath::zero(grid, 1);
    const auto table = meanfield_convergence(spec, u, eta, {100, 400, 1600}, 20, 2024);
    const bool ok = table.slope && std::abs(*table.slope + 0.5) <= 0.15;
    return {ok, table.slope ? fmt::format("slope {:.3f} (se {:.3f})", *table.slope, *table.slope_std_error)
                            : std::string("slope unavailable")};
}

Outcome adjoint_stability_check() {
    const auto spec = builtin_lq({}, 10.0, 1.0, 1.0, 2, 1.0);
    const TimeGrid grid(spec.horizon, 32);
    const auto q = RelaxedControlPath::uniform(grid, spec.control_set);
    const auto eta = SingularControlPath::zero(grid, 1);
    const auto rows = adjoint_stability(spec, q, eta, SimConfig{10000, 9, false}, {1, 2, 4, 8});
    std::vector<double> sup, integ;
    for (const auto& r : rows) {
        sup.push_back(r.sup_sq_gap);
        integ.push_back(r.int_sq_gap);
    }
    const bool ok = strictly_decreasing(sup) && strictly_decreasing(integ);
    return {ok, fmt::format("sup-square [{}], integrated-square [{}]", join(sup), join(integ))};
}

Outcome singular_conditions() {
    const auto spec = builtin_singular();
    const TimeGrid grid(spec.horizon, 256);
    const SimConfig cfg{4000, 13, false};
    const auto u = StrictControlPath::constant(grid, std::vector<double>{0.0});
    const auto eta = SingularControlPath::zero(grid, 1);
    const auto before = check_strict(spec, u, eta, cfg);
    const auto res = improve(spec, u, eta, cfg, 30, 0.5);
    const auto after = check_strict(spec, res.best_control(), res.best_singular(), cfg);
    const bool slack_ok = std::abs(after.slackness_residual) <= 3.0 * after.slackness_std_error;
    const bool ok = !before.sign_passed && after.sign_passed && slack_ok && after.cost.total <= 1.1;
    return {ok, fmt::format("eta=0: sign {} cost {:.4g}; after improve: eta(T) {:.4g}, cost {:.4g}, sign 1st "
                            "percentile {:.4g} vs tolerance {:.3g}, slackness {:.3g} vs 3se {:.3g}",
                            before.sign_passed ? "passes" : "violated", before.cost.total,
                            res.best_singular().total()[0], after.cost.total, after.sign_residual[0],
                            after.sign_tolerance, after.slackness_residual, 3.0 * after.slackness_std_error)};
}

struct Instance {
    ProblemSpec spec;
    StrictControlPath u;
    SingularControlPath eta;
    SimConfig cfg;
};

Instance random_instance(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    LqParameters p;
    p.a = -1.0 + 1.5 * U(rng);
    p.abar = -0.5 + U(rng);
    p.c = 0.5 + U(rng);
    p.sigma = 0.05 + 0.4 * U(rng);
    p.q = 0.2 + 2.0 * U(rng);
    p.r = 0.2 + 2.0 * U(rng);
    p.qT = 0.2 + 2.0 * U(rng);
    const double phi = 0.1 + 2.0 * U(rng);
    const double x0 = -1.5 + 3.0 * U(rng);
    auto spec = builtin_lq(p, phi, x0, 1.0, 11, 2.0);
    const TimeGrid grid(spec.horizon, 32);
    std::uniform_int_distribution<std::size_t> pick(0, spec.control_set.size() - 1);
    std::vector<double> values(grid.steps());
    for (auto& v : values) v = spec.control_set.point(pick(rng))[0];
    std::vector<double> inc(grid.steps(), 0.0);
    for (auto& v : inc)
        if (U(rng) < 0.1) v = 0.2 * U(rng);
    const double jump = U(rng) < 0.5 ? 0.5 * U(rng) : 0.0;
    return {spec, StrictControlPath(grid, 1, values), SingularControlPath(grid, 1, {jump}, inc),
            SimConfig{300, rng(), false}};
}

bool same_common_fields(const SmpReport& a, const SmpReport& b) {
    return a.cost.total == b.cost.total && a.cost.per_particle == b.cost.per_particle &&
           a.hamiltonian_gap == b.hamiltonian_gap && a.hamiltonian_tolerance == b.hamiltonian_tolerance &&
           a.hamiltonian_std_error == b.hamiltonian_std_error && a.hamiltonian_argmin == b.hamiltonian_argmin &&
           a.sign_percentile == b.sign_percentile && a.sign_residual == b.sign_residual &&
           a.sign_tolerance == b.sign_tolerance && a.slackness_residual == b.slackness_residual &&
           a.slackness_std_error == b.slackness_std_error && a.hamiltonian_passed == b.hamiltonian_passed &&
           a.sign_passed == b.sign_passed && a.slackness_passed == b.slackness_passed;
}

Outcome consistency_properties() {
    std::mt19937_64 rng(20241017);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    int embed_ok = 0, parallel_ok = 0, scale_ok = 0;
    const int instances = 25;
    for (int k = 0; k < instances; ++k) {
        const auto in = random_instance(rng);
        set_thread_count(1);
        const auto strict = check_strict(in.spec, in.u, in.eta, in.cfg);
        const auto relaxed = check_relaxed(in.spec, embed_strict(in.u, in.spec.control_set), in.eta, in.cfg);
        embed_ok += same_common_fields(strict, relaxed);

        set_thread_count(4);
        const auto parallel = check_strict(in.spec, in.u, in.eta, in.cfg);
        set_thread_count(1);
        parallel_ok += same_common_fields(strict, parallel);

        const double factor = std::exp(std::log(0.1) + (std::log(10.0) - std::log(0.1)) * U(rng));
        const auto scaled = check_strict(scale_costs(in.spec, factor), in.u, in.eta, in.cfg);
        scale_ok += scaled.hamiltonian_argmin == strict.hamiltonian_argmin &&
                    scaled.hamiltonian_passed == strict.hamiltonian_passed &&
                    scaled.sign_passed == strict.sign_passed && scaled.slackness_passed == strict.slackness_passed;
    }
    const bool ok = embed_ok == instances && parallel_ok == instances && scale_ok == instances;
    return {ok, fmt::format("embedding {}/{}, parallel determinism {}/{}, scaling invariance {}/{}", embed_ok, instances,
                            parallel_ok, instances, scale_ok, instances)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"alternating example bound and exact relaxed cost", alternating_example},
        {"chattering convergence", chattering_convergence},
        {"LQ oracle agreement", lq_oracle_agreement},
        {"duality identity", duality_identity},
        {"variational convergence", variational_convergence},
        {"spike variation order", spike_order},
        {"mean-field particle rate", particle_rate},
        {"adjoint stability", adjoint_stability_check},
        {"singular sign and slackness conditions", singular_conditions},
        {"consistency properties", consistency_properties},
    };
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failures += !o.passed;
        std::cout << fmt::format("{} criterion {:>2}: {} -- {}", o.passed ? "PASS" : "FAIL", k + 1, criteria[k].first,
                                 o.detail)
                  << std::endl;
    }
    return failures;
}
