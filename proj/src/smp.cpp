#include "mfsmp/smp.hpp"

#include "mfsmp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

namespace mfsmp {

namespace {

// Per-particle Hamiltonian pieces at one step.
struct HamiltonianEvaluator {
    const ProblemSpec& spec;
    const EnsemblePath& ens;
    const AdjointPath& adj;
    std::size_t j;
    double t;
    std::size_t n, d;

    HamiltonianEvaluator(const ProblemSpec& s, const EnsemblePath& e, const AdjointPath& a, std::size_t step)
        : spec(s), ens(e), adj(a), j(step), t(e.grid().knot(step)), n(e.state_dim()), d(e.noise_dim()) {}

    double sigma_part(std::size_t i, std::vector<double>& sig) const {
        spec.diffusion(t, ens.state(i, j), ens.mean(j), sig);
        const ConstVec z = adj.z(i, j);
        double s = 0.0;
        for (std::size_t k = 0; k < n * d; ++k) s += sig[k] * z[k];
        return s;
    }

    // b.P + f at control point a, with P the regression (pathwise = false) or pathwise adjoint.
    double control_part(std::size_t i, ConstVec a, bool pathwise, std::vector<double>& b) const {
        spec.drift(t, ens.state(i, j), ens.mean(j), a, b);
        const ConstVec p = pathwise ? adj.pathwise(i, j + 1) : adj.p(i, j + 1);
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += b[r] * p[r];
        return s + spec.running_cost(t, ens.state(i, j), ens.mean(j), a);
    }
};

void check_pair(const EnsemblePath& ens, const AdjointPath& adj) {
    if (!(ens.grid() == adj.grid()) || ens.particles() != adj.particles())
        throw MismatchError("ensemble and adjoint differ in grid or particle count");
    if (ens.noise_seed() != adj.noise_seed) throw MismatchError("ensemble and adjoint were built from different seeds");
}

}  // namespace

HamiltonianSample hamiltonian(const ProblemSpec& spec, const EnsemblePath& ens, const AdjointPath& adj,
                              std::size_t j) {
    check_pair(ens, adj);
    if (j >= ens.grid().steps()) throw std::out_of_range(fmt::format("step {} out of range", j));
    const auto& set = spec.control_set;
    const std::size_t N = ens.particles(), K = set.size();
    HamiltonianSample s;
    s.t = ens.grid().knot(j);
    s.step = j;
    s.particles = N;
    s.points = K;
    s.values.resize(N * K);
    s.mean.assign(K, 0.0);
    const HamiltonianEvaluator ev(spec, ens, adj, j);
    detail::parallel_blocks(N, [&](std::size_t begin, std::size_t end) {
        std::vector<double> sig(ev.n * ev.d), b(ev.n);
        for (std::size_t i = begin; i < end; ++i) {
            const double sz = ev.sigma_part(i, sig);
            for (std::size_t a = 0; a < K; ++a) s.values[i * K + a] = ev.control_part(i, set.point(a), false, b) + sz;
        }
    });
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t a = 0; a < K; ++a) s.mean[a] += s.values[i * K + a];
    for (auto& v : s.mean) v /= static_cast<double>(N);
    return s;
}

namespace {

double std_error(const std::vector<double>& v) {
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

std::size_t argmin(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

// Points of the set at the smallest nonzero distance from point a.
std::vector<std::size_t> neighbours(const ControlSet& set, std::size_t a) {
    std::vector<double> dist(set.size());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < set.size(); ++b) {
        double s = 0.0;
        for (std::size_t c = 0; c < set.dim(); ++c) s += (set.point(a)[c] - set.point(b)[c]) * (set.point(a)[c] - set.point(b)[c]);
        dist[b] = s;
        if (b != a && s > 0.0) best = std::min(best, s);
    }
    std::vector<std::size_t> out;
    for (std::size_t b = 0; b < set.size(); ++b)
        if (b != a && dist[b] <= best * (1.0 + 1e-9)) out.push_back(b);
    return out;
}

struct StepGap {
    double gap;        // min_a E H(a) - E H(candidate)
    double std_error;  // of the per-particle difference, pathwise adjoint
    double grid_slack;
    double range;      // max_a E H - min_a E H
    std::size_t argmin;
    double mixture_residual;
};

StepGap step_gap(const ProblemSpec& spec, const EnsemblePath& ens, const AdjointPath& adj,
                 const ControlSchedule& control, std::size_t j, bool mixtures) {
    const auto sample = hamiltonian(spec, ens, adj, j);
    const std::size_t N = ens.particles(), K = sample.points;
    const auto atoms = control.atoms(j);
    const HamiltonianEvaluator ev(spec, ens, adj, j);

    // Candidate value per particle: weighted over atoms, same arithmetic for
    // strict (single atom of weight 1) and relaxed controls.
    std::vector<double> cand(N), diff(N);
    const std::size_t best = argmin(sample.mean);
    const ConstVec best_point = spec.control_set.point(best);
    detail::parallel_blocks(N, [&](std::size_t begin, std::size_t end) {
        std::vector<double> sig(ev.n * ev.d), b(ev.n);
        for (std::size_t i = begin; i < end; ++i) {
            const double sz = ev.sigma_part(i, sig);
            double h = 0.0, hw = 0.0;
            for (std::size_t s = 0; s < atoms.size(); ++s) {
                const double v = ev.control_part(i, atoms[s].point, false, b) + sz;
                const double vw = ev.control_part(i, atoms[s].point, true, b) + sz;
                h = s == 0 ? atoms[s].weight * v : h + atoms[s].weight * v;
                hw = s == 0 ? atoms[s].weight * vw : hw + atoms[s].weight * vw;
            }
            cand[i] = h;
            diff[i] = ev.control_part(i, best_point, true, b) + sz - hw;
        }
    });
    double cand_mean = 0.0;
    for (double v : cand) cand_mean += v;
    cand_mean /= static_cast<double>(N);

    StepGap g{};
    g.argmin = best;
    g.gap = sample.mean[best] - cand_mean;
    g.std_error = std_error(diff);
    for (std::size_t nb : neighbours(spec.control_set, best))
        g.grid_slack = std::max(g.grid_slack, std::abs(sample.mean[nb] - sample.mean[best]));
    g.range = *std::max_element(sample.mean.begin(), sample.mean.end()) - sample.mean[best];

    if (mixtures) {
        // Uniform mixture and every two-point mixture with the argmin: by
        // linearity none may undercut the best point.
        double lowest = 0.0;
        for (std::size_t a = 0; a < K; ++a) lowest += sample.mean[a] / static_cast<double>(K);
        for (std::size_t a = 0; a < K; ++a)
            for (double w : {0.25, 0.5, 0.75}) lowest = std::min(lowest, w * sample.mean[a] + (1.0 - w) * sample.mean[best]);
        g.mixture_residual = lowest - sample.mean[best];
    }
    return g;
}

struct SingularResiduals {
    std::vector<double> mean;       // [j * m + c], regression adjoint
    std::vector<double> std_error;  // [j * m + c], pathwise adjoint
    std::vector<double> percentile; // [j * m + c]
};

SingularResiduals singular_residuals(const ProblemSpec& spec, const EnsemblePath& ens, const AdjointPath& adj) {
    const std::size_t N = ens.particles(), n = ens.state_dim(), m = spec.dims.singular, L = ens.grid().steps();
    SingularResiduals r;
    r.mean.resize(L * m);
    r.std_error.resize(L * m);
    r.percentile.resize(L * m);
    std::vector<double> gain(n * m), phi(m), vals(N), pw(N);
    const auto rank = static_cast<std::size_t>(std::floor(0.01 * static_cast<double>(N - 1)));
    for (std::size_t j = 0; j < L; ++j) {
        const double t = ens.grid().knot(j);
        spec.singular_gain(t, gain);
        spec.singular_cost(t, phi);
        for (std::size_t c = 0; c < m; ++c) {
            double mu = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                double gp = 0.0, gw = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    gp += gain[k * m + c] * adj.p(i, j)[k];
                    gw += gain[k * m + c] * adj.pathwise(i, j)[k];
                }
                vals[i] = phi[c] + gp;
                pw[i] = phi[c] + gw;
                mu += vals[i];
            }
            r.mean[j * m + c] = mu / static_cast<double>(N);
            r.std_error[j * m + c] = std_error(pw);
            std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(rank), vals.end());
            r.percentile[j * m + c] = vals[rank];
        }
    }
    return r;
}

// Per-particle sum_c int (phi + G'P) d eta, with the regression and pathwise adjoints.
void slackness_terms(const ProblemSpec& spec, const EnsemblePath& ens, const AdjointPath& adj,
                     const SingularControlPath& eta, std::vector<double>& reg, std::vector<double>& path) {
    const std::size_t N = ens.particles(), n = ens.state_dim(), m = spec.dims.singular, L = ens.grid().steps();
    reg.assign(N, 0.0);
    path.assign(N, 0.0);
    std::vector<double> gain(n * m), phi(m);
    auto add = [&](std::size_t j, ConstVec delta) {
        if (std::all_of(delta.begin(), delta.end(), [](double v) { return v == 0.0; })) return;
        spec.singular_gain(ens.grid().knot(j), gain);
        spec.singular_cost(ens.grid().knot(j), phi);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t c = 0; c < m; ++c) {
                double gp = 0.0, gw = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    gp += gain[k * m + c] * adj.p(i, j)[k];
                    gw += gain[k * m + c] * adj.pathwise(i, j)[k];
                }
                reg[i] += (phi[c] + gp) * delta[c];
                path[i] += (phi[c] + gw) * delta[c];
            }
    };
    add(0, eta.initial_jump());
    for (std::size_t j = 0; j < L; ++j) add(j, eta.increment(j));
}

double sup_gain(const ProblemSpec& spec, const TimeGrid& grid) {
    std::vector<double> gain(spec.dims.state * spec.dims.singular);
    double s = 0.0;
    for (std::size_t j = 0; j <= grid.steps(); ++j) {
        spec.singular_gain(grid.knot(j), gain);
        for (double g : gain) s = std::max(s, std::abs(g));
    }
    return s;
}

// Largest cost change per unit spike width over a few probe spikes.
double spike_sensitivity(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                         const SimConfig& cfg, double base) {
    const auto& grid = u.grid();
    const auto& set = spec.control_set;
    const std::size_t width = std::max<std::size_t>(1, grid.steps() / 16);
    const double eps = static_cast<double>(width) * grid.dt();
    double worst = 0.0;
    for (double tau : {0.0, grid.knot(grid.steps() / 2)}) {
        if (tau + eps > grid.horizon() + 1e-12) continue;
        for (std::size_t a : {std::size_t{0}, set.size() - 1}) {
            auto pt = set.point(a);
            const auto spiked = spike_variation(u, PerturbationParams{tau, eps, {pt.begin(), pt.end()}, 0.0});
            const auto ens = simulate(spec, spiked, eta, cfg);
            worst = std::max(worst, std::abs(cost(spec, ens, spiked, eta).total - base) / eps);
        }
    }
    return worst;
}

SmpReport check_impl(const ProblemSpec& spec, const ControlSchedule& control, const SingularControlPath& eta,
                     const SimConfig& cfg, const SmpOptions& options, const std::string& kind, bool relaxed) {
    const auto ens = simulate(spec, control, eta, cfg);
    const auto adj = solve_adjoint(spec, ens, control, options.adjoint);
    const auto& tol = options.tolerances;
    const std::size_t L = ens.grid().steps(), m = spec.dims.singular;
    const double dt = ens.grid().dt();

    SmpReport rep;
    rep.kind = kind;
    rep.seed = cfg.seed;
    rep.particles = cfg.particles;
    rep.steps = L;
    rep.dt = dt;
    rep.tolerances = tol;
    rep.cost = cost(spec, ens, control, eta);

    double mixture = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < L; ++j) {
        const auto g = step_gap(spec, ens, adj, control, j, relaxed);
        rep.hamiltonian_gap.push_back(g.gap);
        rep.hamiltonian_std_error.push_back(g.std_error);
        rep.hamiltonian_argmin.push_back(g.argmin);
        rep.hamiltonian_tolerance.push_back(tol.std_errors * g.std_error + (tol.grid_slack ? g.grid_slack : 0.0) +
                                            (tol.discretization ? dt * g.range : 0.0) + tol.absolute);
        if (relaxed) mixture = std::min(mixture, g.mixture_residual);
    }
    if (relaxed) rep.mixture_residual = mixture;

    const auto sr = singular_residuals(spec, ens, adj);
    rep.sign_percentile = sr.percentile;
    rep.sign_residual.assign(m, std::numeric_limits<double>::infinity());
    rep.sign_mean_min.assign(m, std::numeric_limits<double>::infinity());
    double max_se = 0.0, max_mean = 0.0;
    for (std::size_t j = 0; j < L; ++j)
        for (std::size_t c = 0; c < m; ++c) {
            rep.sign_residual[c] = std::min(rep.sign_residual[c], sr.percentile[j * m + c]);
            rep.sign_mean_min[c] = std::min(rep.sign_mean_min[c], sr.mean[j * m + c]);
            max_se = std::max(max_se, sr.std_error[j * m + c]);
            max_mean = std::max(max_mean, std::abs(sr.mean[j * m + c]));
        }
    rep.sign_tolerance = tol.std_errors * max_se + (tol.discretization ? dt * max_mean : 0.0) + tol.absolute;

    std::vector<double> reg, path;
    slackness_terms(spec, ens, adj, eta, reg, path);
    double s = 0.0;
    for (double v : reg) s += v;
    rep.slackness_residual = s / static_cast<double>(reg.size());
    rep.slackness_std_error = std_error(path);
    double total_eta = 0.0;
    for (double v : eta.total()) total_eta += v;
    rep.slackness_tolerance = tol.std_errors * rep.slackness_std_error +
                              (tol.discretization ? dt * total_eta * max_mean : 0.0) + tol.absolute;

    apply_verdicts(rep);
    return rep;
}

}  // namespace

void apply_verdicts(SmpReport& rep) {
    std::size_t violations = 0;
    for (std::size_t j = 0; j < rep.hamiltonian_gap.size(); ++j)
        if (rep.hamiltonian_gap[j] < -rep.hamiltonian_tolerance[j] - rep.ekeland_slack_hamiltonian) ++violations;
    rep.hamiltonian_violation_fraction =
        rep.hamiltonian_gap.empty() ? 0.0 : static_cast<double>(violations) / static_cast<double>(rep.hamiltonian_gap.size());
    rep.hamiltonian_passed = violations == 0;
    rep.sign_passed = std::all_of(rep.sign_residual.begin(), rep.sign_residual.end(), [&](double r) {
        return r >= -rep.sign_tolerance - rep.ekeland_slack_singular;
    });
    rep.slackness_passed =
        std::abs(rep.slackness_residual) <= rep.slackness_tolerance + rep.ekeland_slack_singular;
    if (rep.mixture_residual) {
        const double scale = 1e-12 * (1.0 + std::abs(rep.cost.total));
        rep.mixture_passed = *rep.mixture_residual >= -scale;
    }
    rep.passed = rep.hamiltonian_passed && rep.sign_passed && rep.slackness_passed && rep.mixture_passed.value_or(true);
}

SmpReport check_strict(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                       const SimConfig& cfg, const SmpOptions& options) {
    return check_impl(spec, ControlSchedule(u), eta, cfg, options, "strict", false);
}

SmpReport check_relaxed(const ProblemSpec& spec, const RelaxedControlPath& q, const SingularControlPath& eta,
                        const SimConfig& cfg, const SmpOptions& options) {
    if (!(q.control_set() == spec.control_set))
        throw MismatchError("relaxed control is defined over a different control set");
    return check_impl(spec, ControlSchedule(q), eta, cfg, options, "relaxed", true);
}

SmpReport check_near_optimal(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                             const SimConfig& cfg, double epsilon_n, double alpha, const SmpOptions& options) {
    if (!(epsilon_n >= 0.0)) throw std::invalid_argument("epsilon_n must be nonnegative");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
    auto rep = check_impl(spec, ControlSchedule(u), eta, cfg, options, "near-optimal", false);
    rep.epsilon_n = epsilon_n;
    rep.alpha = alpha;
    rep.c1 = spike_sensitivity(spec, u, eta, cfg, rep.cost.total);
    double level = 0.0;
    for (double v : eta.total()) level += v * v;
    rep.c2 = std::sqrt(level + 1.0) * sup_gain(spec, u.grid());
    rep.ekeland_slack_hamiltonian = std::sqrt(epsilon_n) * *rep.c1 * alpha;
    rep.ekeland_slack_singular = std::sqrt(epsilon_n) * *rep.c2 * alpha;
    apply_verdicts(rep);
    return rep;
}

// ---------------------------------------------------------------------------

namespace {

// Slot 0 is the 0+ jump; slot j >= 1 the increment of interval j.
double slot_value(const SingularControlPath& eta, std::size_t j, std::size_t c) {
    return j == 0 ? eta.initial_jump()[c] : eta.increment(j)[c];
}

SingularControlPath with_slot(const SingularControlPath& eta, std::size_t j, std::size_t c, double value) {
    std::vector<double> jump(eta.initial_jump().begin(), eta.initial_jump().end());
    std::vector<double> inc = eta.increments();
    (j == 0 ? jump[c] : inc[j * eta.dim() + c]) = std::max(0.0, value);
    return SingularControlPath(eta.grid(), eta.dim(), std::move(jump), std::move(inc));
}

}  // namespace

ImproveResult improve(const ProblemSpec& spec, const StrictControlPath& u0, const SingularControlPath& eta0,
                      const SimConfig& cfg, std::size_t iterations, double step_damping, const SmpOptions& options) {
    if (iterations < 1) throw std::invalid_argument("improve needs at least one iteration");
    if (!(step_damping > 0.0 && step_damping <= 1.0)) throw std::invalid_argument("step_damping must lie in (0, 1]");
    const auto& set = spec.control_set;
    const double mult = options.tolerances.std_errors;
    const std::size_t L = u0.grid().steps(), m = spec.dims.singular, k = u0.dim();

    ImproveResult res;
    StrictControlPath u = u0;
    SingularControlPath eta = eta0;
    auto ens = simulate(spec, u, eta, cfg);
    auto rep = cost(spec, ens, u, eta);
    res.controls.push_back(u);
    res.singulars.push_back(eta);
    res.costs.push_back(rep.total);
    res.cost_std_errors.push_back(rep.std_error);

    for (std::size_t it = 0; it < iterations; ++it) {
        const ControlSchedule control(u);
        const auto adj = solve_adjoint(spec, ens, control, options.adjoint);

        // Control: argmin on the worst violating steps.
        std::vector<std::pair<double, std::size_t>> violating;
        std::vector<std::size_t> best(L);
        for (std::size_t j = 0; j < L; ++j) {
            const auto g = step_gap(spec, ens, adj, control, j, false);
            best[j] = g.argmin;
            if (g.gap < -mult * g.std_error && g.gap < -1e-14 * (1.0 + g.range)) violating.push_back({g.gap, j});
        }
        std::sort(violating.begin(), violating.end());
        const auto take = std::min(
            violating.size(),
            static_cast<std::size_t>(std::ceil(step_damping * static_cast<double>(violating.size()))));
        std::vector<double> vals = u.values();
        for (std::size_t r = 0; r < take; ++r) {
            const std::size_t j = violating[r].second;
            auto pt = set.point(best[j]);
            std::copy(pt.begin(), pt.end(), vals.begin() + static_cast<std::ptrdiff_t>(j * k));
        }
        const StrictControlPath u_next(u.grid(), k, std::move(vals));

        // Singular: projected Newton step on one slot.
        SingularControlPath eta_next = eta;
        const auto sr = singular_residuals(spec, ens, adj);
        std::optional<std::pair<std::size_t, std::size_t>> slot;
        for (std::size_t j = 0; j < L && !slot; ++j)
            for (std::size_t c = 0; c < m && !slot; ++c)
                if (sr.mean[j * m + c] < -mult * sr.std_error[j * m + c] - 1e-12) slot = {j, c};
        for (std::size_t j = 0; j < L && !slot; ++j)
            for (std::size_t c = 0; c < m && !slot; ++c)
                if (slot_value(eta, j, c) > 0.0 && sr.mean[j * m + c] > mult * sr.std_error[j * m + c] + 1e-12)
                    slot = {j, c};
        if (slot) {
            const auto [j, c] = *slot;
            const double value = slot_value(eta, j, c), r0 = sr.mean[j * m + c];
            const double delta = 0.1 * (1.0 + value);
            const auto probe = with_slot(eta, j, c, value + delta);
            const auto ens_p = simulate(spec, u, probe, cfg);
            const auto adj_p = solve_adjoint(spec, ens_p, control, options.adjoint);
            const double r1 = singular_residuals(spec, ens_p, adj_p).mean[j * m + c];
            const double curvature = (r1 - r0) / delta;
            double step = curvature > 0.0 && std::isfinite(curvature) ? -r0 / curvature : (r0 < 0.0 ? delta : -value);
            eta_next = with_slot(eta, j, c, value + step);
        }

        if (u_next == u && eta_next == eta) break;
        u = u_next;
        eta = eta_next;
        ens = simulate(spec, u, eta, cfg);
        rep = cost(spec, ens, u, eta);
        res.controls.push_back(u);
        res.singulars.push_back(eta);
        res.costs.push_back(rep.total);
        res.cost_std_errors.push_back(rep.std_error);
    }
    res.best = static_cast<std::size_t>(std::min_element(res.costs.begin(), res.costs.end()) - res.costs.begin());
    return res;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const SmpReport& r) {
    nlohmann::json j;
    j["kind"] = r.kind;
    j["seed"] = r.seed;
    j["particles"] = r.particles;
    j["steps"] = r.steps;
    j["dt"] = r.dt;
    j["tolerances"] = {{"std_errors", r.tolerances.std_errors},
                       {"grid_slack", r.tolerances.grid_slack},
                       {"discretization", r.tolerances.discretization},
                       {"absolute", r.tolerances.absolute}};
    j["cost"] = {{"total", r.cost.total},
                 {"running", r.cost.running},
                 {"terminal", r.cost.terminal},
                 {"singular", r.cost.singular},
                 {"std_error", r.cost.std_error}};
    j["hamiltonian"] = {{"gap", r.hamiltonian_gap},
                        {"tolerance", r.hamiltonian_tolerance},
                        {"std_error", r.hamiltonian_std_error},
                        {"argmin", r.hamiltonian_argmin},
                        {"violation_fraction", r.hamiltonian_violation_fraction},
                        {"passed", r.hamiltonian_passed}};
    j["sign_condition"] = {{"percentile_1", r.sign_percentile},
                           {"residual", r.sign_residual},
                           {"mean_min", r.sign_mean_min},
                           {"tolerance", r.sign_tolerance},
                           {"passed", r.sign_passed}};
    j["slackness"] = {{"residual", r.slackness_residual},
                      {"std_error", r.slackness_std_error},
                      {"tolerance", r.slackness_tolerance},
                      {"passed", r.slackness_passed}};
    j["ekeland"] = {{"epsilon_n", r.epsilon_n},
                    {"alpha", r.alpha},
                    {"c1", r.c1 ? nlohmann::json(*r.c1) : nlohmann::json()},
                    {"c2", r.c2 ? nlohmann::json(*r.c2) : nlohmann::json()},
                    {"slack_hamiltonian", r.ekeland_slack_hamiltonian},
                    {"slack_singular", r.ekeland_slack_singular}};
    if (r.mixture_residual) j["mixture"] = {{"residual", *r.mixture_residual}, {"passed", *r.mixture_passed}};
    j["passed"] = r.passed;
    return j;
}

void write_text_summary(std::ostream& os, const SmpReport& r) {
    auto verdict = [](bool ok) { return ok ? "PASS" : "FAIL"; };
    double worst_gap = 0.0;
    for (double g : r.hamiltonian_gap) worst_gap = std::min(worst_gap, g);
    os << fmt::format("{} check, N={} L={} seed={}\n", r.kind, r.particles, r.steps, r.seed);
    os << fmt::format("  cost            {:.6g} (se {:.3g})\n", r.cost.total, r.cost.std_error);
    os << fmt::format("  hamiltonian     {}  worst gap {:.4g}, violating steps {:.1f}%\n",
                      verdict(r.hamiltonian_passed), worst_gap, 100.0 * r.hamiltonian_violation_fraction);
    for (std::size_t c = 0; c < r.sign_residual.size(); ++c)
        os << fmt::format("  sign[{}]         {}  1st percentile {:.4g}, tolerance {:.3g}\n", c,
                          verdict(r.sign_passed), r.sign_residual[c], r.sign_tolerance);
    os << fmt::format("  slackness       {}  residual {:.4g}, tolerance {:.3g}\n", verdict(r.slackness_passed),
                      r.slackness_residual, r.slackness_tolerance);
    if (r.mixture_passed)
        os << fmt::format("  mixtures        {}  residual {:.3g}\n", verdict(*r.mixture_passed), *r.mixture_residual);
    if (r.epsilon_n > 0.0)
        os << fmt::format("  ekeland slack   {:.4g} (hamiltonian), {:.4g} (singular)\n", r.ekeland_slack_hamiltonian,
                          r.ekeland_slack_singular);
    os << "  overall         " << verdict(r.passed) << '\n';
}

}  // namespace mfsmp
