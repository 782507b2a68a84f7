#pragma once

#include "mfsmp/core.hpp"
#include "mfsmp/problem.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "json.hpp"

namespace mfsmp {

/// Uniform partition of [0, T] into L steps.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double horizon, std::size_t steps);

    double horizon() const { return horizon_; }
    std::size_t steps() const { return steps_; }
    double dt() const { return horizon_ / static_cast<double>(steps_); }
    double knot(std::size_t j) const;

    /// Every interval split into n equal micro-intervals.
    TimeGrid refine(std::size_t n) const { return TimeGrid(horizon_, steps_ * n); }

    bool operator==(const TimeGrid&) const = default;

private:
    double horizon_ = 1.0;
    std::size_t steps_ = 1;
};

/// Piecewise-constant control: values[j*k .. j*k+k) on [t_j, t_{j+1}).
class StrictControlPath {
public:
    StrictControlPath() = default;
    StrictControlPath(TimeGrid grid, std::size_t dim, std::vector<double> values);

    static StrictControlPath constant(const TimeGrid& grid, ConstVec value);

    const TimeGrid& grid() const { return grid_; }
    std::size_t dim() const { return dim_; }
    ConstVec value(std::size_t j) const { return {values_.data() + j * dim_, dim_}; }
    const std::vector<double>& values() const { return values_; }

    /// Checks that every value is a point of `set`; throws MismatchError otherwise.
    void require_in(const ControlSet& set) const;

    bool operator==(const StrictControlPath&) const = default;

private:
    TimeGrid grid_;
    std::size_t dim_ = 1;
    std::vector<double> values_;
};

/// Nondecreasing singular control with eta(0) = 0: a jump at 0+ followed by
/// nonnegative increments eta(t_{j+1}) - eta(t_j) acting at t_j.
///
/// The 0+ jump and the increment of the first interval both act at t_0; the
/// jump is applied before the first step, the increment within it.
class SingularControlPath {
public:
    SingularControlPath() = default;
    SingularControlPath(TimeGrid grid, std::size_t dim, std::vector<double> initial_jump,
                        std::vector<double> increments);

    static SingularControlPath zero(const TimeGrid& grid, std::size_t dim);
    /// A single jump of size `jump` at 0+.
    static SingularControlPath jump_at_zero(const TimeGrid& grid, ConstVec jump);

    const TimeGrid& grid() const { return grid_; }
    std::size_t dim() const { return dim_; }
    ConstVec initial_jump() const { return initial_jump_; }
    ConstVec increment(std::size_t j) const { return {increments_.data() + j * dim_, dim_}; }
    const std::vector<double>& increments() const { return increments_; }

    /// eta(t_j+) for j = 0..L: initial jump plus increments of intervals before j.
    std::vector<double> level(std::size_t j) const;
    /// eta(T), equal to level(L).
    std::vector<double> total() const { return level(grid_.steps()); }
    bool is_zero() const;

    bool operator==(const SingularControlPath&) const = default;

private:
    TimeGrid grid_;
    std::size_t dim_ = 1;
    std::vector<double> initial_jump_;
    std::vector<double> increments_;
};

/// Measure-valued control restricted to the grid: per interval a probability
/// vector over the points of a control set.
class RelaxedControlPath {
public:
    RelaxedControlPath() = default;
    RelaxedControlPath(TimeGrid grid, ControlSet set, std::vector<double> weights);

    static RelaxedControlPath uniform(const TimeGrid& grid, const ControlSet& set);

    const TimeGrid& grid() const { return grid_; }
    const ControlSet& control_set() const { return set_; }
    std::size_t points() const { return set_.size(); }
    ConstVec weights(std::size_t j) const { return {weights_.data() + j * set_.size(), set_.size()}; }
    const std::vector<double>& weights() const { return weights_; }

    bool operator==(const RelaxedControlPath&) const = default;

private:
    TimeGrid grid_;
    ControlSet set_;
    std::vector<double> weights_;
};

struct PerturbationParams {
    double tau = 0.0;
    double epsilon = 0.0;
    std::vector<double> v;
    double alpha = 0.0;
};

StrictControlPath spike_variation(const StrictControlPath& u, const PerturbationParams& p);
/// Same, also checking p.v against the control set.
StrictControlPath spike_variation(const StrictControlPath& u, const PerturbationParams& p, const ControlSet& set);

/// eta + alpha (xi - eta), increment by increment.
SingularControlPath convex_perturbation(const SingularControlPath& eta, const SingularControlPath& xi, double alpha);

RelaxedControlPath embed_strict(const StrictControlPath& u, const ControlSet& set);

/// Strict path on the n-fold refined grid whose occupation fractions on each
/// original interval follow the relaxed weights (largest remainders, points
/// visited round-robin by weight rank; `seed` orders exact ties).
StrictControlPath chattering(const RelaxedControlPath& q, std::size_t n, std::uint64_t seed);

/// Max over windows of `grid_coarsening` coarse steps of the total-variation
/// distance between window-averaged weights. The finer grid must refine the
/// coarser one.
double weak_distance(const RelaxedControlPath& q1, const RelaxedControlPath& q2, std::size_t grid_coarsening);

/// Fraction of [0, T] on which the two paths differ.
double metric_d1(const StrictControlPath& u, const StrictControlPath& v);
/// Sup over knots of |eta(t) - xi(t)|.
double metric_d2(const SingularControlPath& eta, const SingularControlPath& xi);

// Grid refinement keeping the represented path unchanged. Singular
// increments are placed on the first micro-interval of each interval.
StrictControlPath refine(const StrictControlPath& u, std::size_t n);
SingularControlPath refine(const SingularControlPath& eta, std::size_t n);
RelaxedControlPath refine(const RelaxedControlPath& q, std::size_t n);

/// Scalar path (-1)^floor(t_j * n / T): n alternating sign blocks.
StrictControlPath alternating_control(const TimeGrid& grid, std::size_t n);

// CSV: one row per interval, columns t_left, t_right, components. Relaxed
// paths start with a `control_set` row listing the (scalar) points.
void write_csv(std::ostream& os, const StrictControlPath& u);
void write_csv(std::ostream& os, const SingularControlPath& eta);
void write_csv(std::ostream& os, const RelaxedControlPath& q);
StrictControlPath read_strict_csv(std::istream& is);
SingularControlPath read_singular_csv(std::istream& is);
RelaxedControlPath read_relaxed_csv(std::istream& is);

nlohmann::json to_json(const TimeGrid& grid);
nlohmann::json to_json(const StrictControlPath& u);
nlohmann::json to_json(const SingularControlPath& eta);
nlohmann::json to_json(const RelaxedControlPath& q);
TimeGrid grid_from_json(const nlohmann::json& j);
StrictControlPath strict_from_json(const nlohmann::json& j);
SingularControlPath singular_from_json(const nlohmann::json& j);
RelaxedControlPath relaxed_from_json(const nlohmann::json& j);

}  // namespace mfsmp
