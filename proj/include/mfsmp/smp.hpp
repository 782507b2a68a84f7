#pragma once

#include "mfsmp/adjoint.hpp"
#include "mfsmp/core.hpp"
#include "mfsmp/forward.hpp"
#include "mfsmp/paths.hpp"
#include "mfsmp/problem.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace mfsmp {

/// H(t, x, a, P, Z) = b(t, x, E[X], a).P + sigma(t, x, E[X]):Z + f(t, x, E[X], a) for every
/// particle and control point at step j. The state at t_j is paired with the
/// adjoint at t_{j+1} and Z on [t_j, t_{j+1}), the first-order condition of
/// the Euler scheme.
struct HamiltonianSample {
    double t = 0.0;
    std::size_t step = 0;
    std::size_t particles = 0;
    std::size_t points = 0;
    std::vector<double> values;  // [i * points + a]
    std::vector<double> mean;    // [a]

    double value(std::size_t i, std::size_t a) const { return values[i * points + a]; }
};

HamiltonianSample hamiltonian(const ProblemSpec& spec, const EnsemblePath& ens, const AdjointPath& adj,
                              std::size_t j);

struct Tolerances {
    double std_errors = 3.0;       // multiplier on Monte-Carlo standard errors
    bool grid_slack = true;        // allow one control-grid cell around the argmin
    bool discretization = true;    // O(dt) allowance
    double absolute = 0.0;
};

struct SmpOptions {
    AdjointOptions adjoint;
    Tolerances tolerances;
};

struct SmpReport {
    std::string kind;  // strict | relaxed | near-optimal
    std::uint64_t seed = 0;
    std::size_t particles = 0;
    std::size_t steps = 0;
    double dt = 0.0;
    Tolerances tolerances;
    CostReport cost;

    // Hamiltonian condition, per step: min_a E H(a) - E H(candidate) (<= 0).
    std::vector<double> hamiltonian_gap;
    std::vector<double> hamiltonian_tolerance;
    std::vector<double> hamiltonian_std_error;
    std::vector<std::size_t> hamiltonian_argmin;
    double hamiltonian_violation_fraction = 0.0;

    // Sign condition phi + G'P >= 0 per particle: 1st percentile per knot
    // ([j * m + c]) and its minimum over knots per component.
    std::vector<double> sign_percentile;
    std::vector<double> sign_residual;
    std::vector<double> sign_mean_min;  // minimum over knots of the particle mean
    double sign_tolerance = 0.0;

    // Complementary slackness sum_c int (phi + G'P)_c d eta_c, particle mean.
    double slackness_residual = 0.0;
    double slackness_std_error = 0.0;
    double slackness_tolerance = 0.0;

    // Near-optimal slack sqrt(epsilon_n) C alpha.
    double epsilon_n = 0.0;
    double alpha = 0.0;
    std::optional<double> c1, c2;
    double ekeland_slack_hamiltonian = 0.0;
    double ekeland_slack_singular = 0.0;

    // Relaxed only: max over steps of (min over sampled mixtures) - (min over points); must be >= 0.
    std::optional<double> mixture_residual;

    bool hamiltonian_passed = false;
    bool sign_passed = false;
    bool slackness_passed = false;
    std::optional<bool> mixture_passed;
    bool passed = false;
};

SmpReport check_strict(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                       const SimConfig& cfg, const SmpOptions& options = {});
SmpReport check_relaxed(const ProblemSpec& spec, const RelaxedControlPath& q, const SingularControlPath& eta,
                        const SimConfig& cfg, const SmpOptions& options = {});
SmpReport check_near_optimal(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                             const SimConfig& cfg, double epsilon_n, double alpha, const SmpOptions& options = {});

/// Re-derives the verdicts of a report from its stored residuals and tolerances.
void apply_verdicts(SmpReport& report);

struct ImproveResult {
    std::vector<StrictControlPath> controls;
    std::vector<SingularControlPath> singulars;
    std::vector<double> costs;
    std::vector<double> cost_std_errors;
    std::size_t best = 0;  // index of the lowest-cost iterate

    const StrictControlPath& best_control() const { return controls[best]; }
    const SingularControlPath& best_singular() const { return singulars[best]; }
};

/// Successive approximations: each iteration replaces the control on the
/// worst `step_damping` fraction of significantly violating steps by the
/// Hamiltonian argmin, and takes a projected Newton step on the earliest
/// singular slot whose mean sign residual is negative (or a charged slot
/// whose residual is positive). Entry k of the history is the k-th iterate;
/// entry 0 is the starting point.
ImproveResult improve(const ProblemSpec& spec, const StrictControlPath& u0, const SingularControlPath& eta0,
                      const SimConfig& cfg, std::size_t iterations, double step_damping,
                      const SmpOptions& options = {});

nlohmann::json to_json(const SmpReport& report);
void write_text_summary(std::ostream& os, const SmpReport& report);

}  // namespace mfsmp
