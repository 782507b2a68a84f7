#pragma once

#include "mfsmp/core.hpp"
#include "mfsmp/forward.hpp"
#include "mfsmp/paths.hpp"
#include "mfsmp/problem.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace mfsmp {

/// Sign with which the cost gradients f_x + E[f_y] enter the adjoint driver
/// dP = -[b_x' P + E[b_y' P] + sigma_x' Z + E[sigma_y' Z] + s (f_x + E[f_y])] dt + Z dW.
/// `conventional` (s = +1) pairs with H = b.P + sigma:Z + f; `as_printed`
/// (s = -1) keeps the opposite sign on the f-terms.
enum class CostSign { conventional, as_printed };

struct AdjointOptions {
    std::size_t basis_degree = 2;
    CostSign cost_sign = CostSign::conventional;
};

struct AdjointDiagnostics {
    double sup_sq_p = 0.0;     // max_j mean_i |P_ij|^2
    double int_sq_z = 0.0;     // sum_j mean_i |Z_ij|^2 dt
    std::size_t basis_size = 0;
};

/// Backward solution along a frozen ensemble. P is the regression estimate
/// (a function of the current state); `pathwise` runs the same recursion
/// without conditioning and is used for Monte-Carlo error bars.
class AdjointPath {
public:
    AdjointPath(TimeGrid grid, std::size_t particles, std::size_t state_dim, std::size_t noise_dim);

    const TimeGrid& grid() const { return grid_; }
    std::size_t particles() const { return N_; }
    std::size_t state_dim() const { return n_; }
    std::size_t noise_dim() const { return d_; }

    ConstVec p(std::size_t i, std::size_t j) const { return {P_.data() + (j * N_ + i) * n_, n_}; }
    MutVec p(std::size_t i, std::size_t j) { return {P_.data() + (j * N_ + i) * n_, n_}; }
    ConstVec pathwise(std::size_t i, std::size_t j) const { return {Pw_.data() + (j * N_ + i) * n_, n_}; }
    MutVec pathwise(std::size_t i, std::size_t j) { return {Pw_.data() + (j * N_ + i) * n_, n_}; }
    /// n x d matrix, row-major, for interval j < L.
    ConstVec z(std::size_t i, std::size_t j) const { return {Z_.data() + (j * N_ + i) * n_ * d_, n_ * d_}; }
    MutVec z(std::size_t i, std::size_t j) { return {Z_.data() + (j * N_ + i) * n_ * d_, n_ * d_}; }

    /// Particle average of P at knot j.
    std::vector<double> mean_p(std::size_t j) const;

    std::uint64_t noise_seed = 0;
    AdjointOptions options;
    AdjointDiagnostics diagnostics;

private:
    TimeGrid grid_;
    std::size_t N_, n_, d_;
    std::vector<double> P_, Pw_, Z_;
};

AdjointPath solve_adjoint(const ProblemSpec& spec, const EnsemblePath& ens, const ControlSchedule& control,
                          const AdjointOptions& options = {});
AdjointPath solve_adjoint(const ProblemSpec& spec, const EnsemblePath& ens, const StrictControlPath& u,
                          const AdjointOptions& options = {});
AdjointPath solve_adjoint(const ProblemSpec& spec, const EnsemblePath& ens, const RelaxedControlPath& q,
                          const AdjointOptions& options = {});

/// Scalar mean-field LQ solution with deterministic controls, integrated by
/// RK4 with step T/4096 and linearly interpolated between nodes.
///
/// K' = -2aK - q (K(T) = qT) is the state gain of P = K X + kbar E[X];
/// Pi = K + kbar solves Pi' = -2(a+abar)Pi - q + (c^2/r)Pi^2 (Pi(T) = qT);
/// the mean follows m' = (a+abar)m + c ubar with ubar = -(c/r) Pi m.
struct LqOracle {
    std::function<double(double)> K, kbar, pi, mean, ubar;
    /// Optimal cost of the continuous-time problem with eta = 0.
    double optimal_cost = 0.0;
};

LqOracle lq_oracle(const ProblemSpec& spec);

/// Oracle feedback sampled at the left knots, snapped to the nearest point
/// of the problem's control set.
StrictControlPath oracle_control(const ProblemSpec& spec, const TimeGrid& grid, bool project = true);

struct StabilityRow {
    std::size_t n;
    double sup_sq_gap;  // max_j mean_i |P^n - P^q|^2
    double int_sq_gap;  // sum_j mean_i |Z^n - Z^q|^2 dt
};

/// Adjoint gaps between chattered and relaxed controls. Both systems run on
/// the n-fold refined grid with a common seed.
std::vector<StabilityRow> adjoint_stability(const ProblemSpec& spec, const RelaxedControlPath& q,
                                            const SingularControlPath& eta, const SimConfig& cfg,
                                            const std::vector<std::size_t>& ns, const AdjointOptions& options = {},
                                            std::uint64_t chattering_seed = 0);

/// Columns t, mean_P_c, mean_sq_Z.
void write_summary_csv(std::ostream& os, const AdjointPath& adj);

}  // namespace mfsmp
