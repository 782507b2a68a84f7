#pragma once

#include "mfsmp/adjoint.hpp"
#include "mfsmp/core.hpp"
#include "mfsmp/forward.hpp"
#include "mfsmp/paths.hpp"
#include "mfsmp/problem.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mfsmp {

enum class VariationKind { first, second };

/// Linearised state along a frozen ensemble, stored time-major like EnsemblePath.
class VariationPath {
public:
    VariationPath(TimeGrid grid, std::size_t particles, std::size_t state_dim, VariationKind kind);

    const TimeGrid& grid() const { return grid_; }
    std::size_t particles() const { return N_; }
    std::size_t state_dim() const { return n_; }
    VariationKind kind() const { return kind_; }

    ConstVec value(std::size_t i, std::size_t j) const { return {values_.data() + (j * N_ + i) * n_, n_}; }
    MutVec value(std::size_t i, std::size_t j) { return {values_.data() + (j * N_ + i) * n_, n_}; }
    ConstVec mean(std::size_t j) const { return {mean_.data() + j * n_, n_}; }
    MutVec mean(std::size_t j) { return {mean_.data() + j * n_, n_}; }

    std::uint64_t noise_seed = 0;

private:
    TimeGrid grid_;
    std::size_t N_, n_;
    VariationKind kind_;
    std::vector<double> values_, mean_;
};

/// dy = [b_x y + b_y E[y] + b(u_spiked) - b(u)] dt + [sigma_x y + sigma_y E[y]] dW, y(0) = 0,
/// driven by the ensemble's own Brownian increments.
VariationPath first_variation(const ProblemSpec& spec, const EnsemblePath& ens, const StrictControlPath& u,
                              const StrictControlPath& u_spiked, const SimConfig& cfg);

/// dy = [b_x y + b_y E[y]] dt + [sigma_x y + sigma_y E[y]] dW + G d(xi - eta), with the
/// 0+ jump difference giving y(0+) = G(0) (xi - eta)(0+).
VariationPath second_variation(const ProblemSpec& spec, const EnsemblePath& ens, const ControlSchedule& control,
                               const SingularControlPath& eta, const SingularControlPath& xi, const SimConfig& cfg);
VariationPath second_variation(const ProblemSpec& spec, const EnsemblePath& ens, const StrictControlPath& u,
                               const SingularControlPath& eta, const SingularControlPath& xi, const SimConfig& cfg);

struct VariationRow {
    double parameter;  // alpha or epsilon
    double value;
    double std_error;
};

struct VariationTable {
    std::string parameter_name;
    std::vector<VariationRow> rows;
    /// Least-squares slope of log(value) against log(parameter), when all values are positive.
    std::optional<double> fitted_order;
};

/// E int |y1|^2 dt for spikes of width epsilon at tau with value v.
VariationTable check_lemma1(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                            const SimConfig& cfg, double tau, const std::vector<double>& v,
                            const std::vector<double>& epsilons);

/// Mean-square error E|(X^alpha_T - X_T)/alpha - y2_T|^2 for eta^alpha = eta + alpha (xi - eta).
VariationTable check_lemma3(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                            const SingularControlPath& xi, const SimConfig& cfg, const std::vector<double>& alphas);

struct Lemma4Row {
    double alpha;
    double quotient;  // (J(u, eta^alpha) - J(u, eta)) / alpha
    double gap;       // |quotient - expression|
};

struct Lemma4Report {
    double expression = 0.0;
    double std_error = 0.0;
    std::vector<Lemma4Row> rows;
};

/// The directional derivative E[h_x y2_T + h_y E y2_T] + E int (f_x y2 + f_y E y2) dt + int phi d(xi - eta),
/// next to the raw difference quotients of the cost.
Lemma4Report check_lemma4(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                          const SingularControlPath& xi, const SimConfig& cfg, const std::vector<double>& alphas);

/// Per-particle terms of the directional derivative along (ens, y2).
std::vector<double> variational_terms(const ProblemSpec& spec, const EnsemblePath& ens, const ControlSchedule& control,
                                      const VariationPath& y2, const SingularControlPath& eta,
                                      const SingularControlPath& xi);

struct DualityReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double gap = 0.0;
    double lhs_std_error = 0.0;
    double rhs_std_error = 0.0;
    double combined_std_error = 0.0;
};

/// lhs: the directional derivative; rhs: E sum (phi + G'P) d(xi - eta) with P
/// at the left knot of each increment (P(0) for the 0+ jump).
DualityReport check_duality(const ProblemSpec& spec, const EnsemblePath& ens, const ControlSchedule& control,
                            const VariationPath& y2, const AdjointPath& adj, const SingularControlPath& eta,
                            const SingularControlPath& xi);
DualityReport check_duality(const ProblemSpec& spec, const EnsemblePath& ens, const StrictControlPath& u,
                            const VariationPath& y2, const AdjointPath& adj, const SingularControlPath& eta,
                            const SingularControlPath& xi);

/// Columns <parameter>, value, std_error.
void write_csv(std::ostream& os, const VariationTable& table);

}  // namespace mfsmp
