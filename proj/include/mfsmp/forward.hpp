#pragma once

#include "mfsmp/core.hpp"
#include "mfsmp/paths.hpp"
#include "mfsmp/problem.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace mfsmp {

struct SimConfig {
    std::size_t particles = 1000;
    std::uint64_t seed = 1;
    bool antithetic = false;
};

/// The control acting on each interval as a finite mixture of control
/// points. A strict control is a single atom of weight 1.
class ControlSchedule {
public:
    struct Atom {
        double weight;
        ConstVec point;
    };

    explicit ControlSchedule(const StrictControlPath& u);
    explicit ControlSchedule(const RelaxedControlPath& q);
    ControlSchedule(const ControlSchedule&);
    ControlSchedule& operator=(const ControlSchedule&) = delete;

    const TimeGrid& grid() const { return grid_; }
    std::size_t dim() const { return dim_; }
    std::span<const Atom> atoms(std::size_t j) const {
        return {atoms_.data() + offsets_[j], offsets_[j + 1] - offsets_[j]};
    }

private:
    void build(std::size_t steps, const std::vector<double>& weights, std::size_t per_step);

    TimeGrid grid_;
    std::size_t dim_ = 1;
    std::vector<double> points_;
    std::vector<Atom> atoms_;
    std::vector<std::size_t> offsets_;
};

/// Interacting-particle solution. Stored time-major; `state(i, j)` is particle
/// i at knot j.
class EnsemblePath {
public:
    EnsemblePath(TimeGrid grid, std::size_t particles, std::size_t state_dim, std::size_t noise_dim,
                 const SimConfig& cfg);

    const TimeGrid& grid() const { return grid_; }
    std::size_t particles() const { return N_; }
    std::size_t state_dim() const { return n_; }
    std::size_t noise_dim() const { return d_; }
    std::uint64_t noise_seed() const { return cfg_.seed; }
    const SimConfig& config() const { return cfg_; }

    ConstVec state(std::size_t i, std::size_t j) const { return {states_.data() + (j * N_ + i) * n_, n_}; }
    MutVec state(std::size_t i, std::size_t j) { return {states_.data() + (j * N_ + i) * n_, n_}; }
    /// All particles at knot j, particle-major.
    ConstVec slice(std::size_t j) const { return {states_.data() + j * N_ * n_, N_ * n_}; }
    ConstVec mean(std::size_t j) const { return {mean_.data() + j * n_, n_}; }
    MutVec mean(std::size_t j) { return {mean_.data() + j * n_, n_}; }
    /// Brownian increment W(t_{j+1}) - W(t_j) of particle i.
    ConstVec noise(std::size_t i, std::size_t j) const { return {dW_.data() + (j * N_ + i) * d_, d_}; }
    MutVec noise(std::size_t i, std::size_t j) { return {dW_.data() + (j * N_ + i) * d_, d_}; }

    /// Values indexed [i][j][c] (particle-major), as in the binary export.
    std::vector<double> particle_major() const;

private:
    TimeGrid grid_;
    std::size_t N_, n_, d_;
    SimConfig cfg_;
    std::vector<double> states_;
    std::vector<double> mean_;
    std::vector<double> dW_;
};

struct CostReport {
    double total = 0.0;
    double running = 0.0;
    double terminal = 0.0;
    double singular = 0.0;
    double std_error = 0.0;
    /// Per-particle running + terminal cost (singular part is deterministic).
    std::vector<double> per_particle;
};

EnsemblePath simulate(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                      const SimConfig& cfg);
EnsemblePath simulate_relaxed(const ProblemSpec& spec, const RelaxedControlPath& q, const SingularControlPath& eta,
                              const SimConfig& cfg);
EnsemblePath simulate(const ProblemSpec& spec, const ControlSchedule& control, const SingularControlPath& eta,
                      const SimConfig& cfg);

CostReport cost(const ProblemSpec& spec, const EnsemblePath& ens, const StrictControlPath& u,
                const SingularControlPath& eta);
CostReport cost(const ProblemSpec& spec, const EnsemblePath& ens, const RelaxedControlPath& q,
                const SingularControlPath& eta);
CostReport cost(const ProblemSpec& spec, const EnsemblePath& ens, const ControlSchedule& control,
                const SingularControlPath& eta);

/// Deterministic part of the cost: phi(0) . jump + sum_j phi(t_j) . d_eta_j.
double singular_cost(const ProblemSpec& spec, const SingularControlPath& eta);

struct ConvergenceRow {
    std::size_t particles;
    double deviation;  // across-rep standard deviation of the empirical mean at T
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
    /// Least-squares slope of log(deviation) against log(N); absent when a
    /// deviation vanishes.
    std::optional<double> slope;
    std::optional<double> slope_std_error;
};

ConvergenceTable meanfield_convergence(const ProblemSpec& spec, const StrictControlPath& u,
                                       const SingularControlPath& eta, const std::vector<std::size_t>& particle_counts,
                                       std::size_t reps, std::uint64_t seed);

/// Columns t, mean_c, std_c for every state component.
void write_summary_csv(std::ostream& os, const EnsemblePath& ens);
/// Header (N, L, n) as little-endian uint64, then N*(L+1)*n little-endian doubles, particle-major.
void write_trajectories(std::ostream& os, const EnsemblePath& ens);

}  // namespace mfsmp
