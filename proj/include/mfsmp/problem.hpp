#pragma once

#include "mfsmp/core.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace mfsmp {

struct Dimensions {
    std::size_t state = 1;     // n
    std::size_t noise = 1;     // d
    std::size_t control = 1;   // k
    std::size_t singular = 1;  // m
};

/// Finite discretisation of the compact control set U1 (points in R^k).
class ControlSet {
public:
    ControlSet() = default;
    ControlSet(std::size_t dim, std::vector<double> points);

    /// `count` equispaced scalar points on [lo, hi].
    static ControlSet uniform(double lo, double hi, std::size_t count);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return dim_ == 0 ? 0 : points_.size() / dim_; }
    ConstVec point(std::size_t i) const { return {points_.data() + i * dim_, dim_}; }
    const std::vector<double>& points() const { return points_; }

    /// Index of the point equal to `value` (componentwise within 1e-12), if any.
    std::optional<std::size_t> index_of(ConstVec value) const;

    bool operator==(const ControlSet&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> points_;
};

// Coefficient signatures. Vector/matrix outputs are written row-major into `out`.
using DriftFn = std::function<void(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out)>;
using DiffusionFn = std::function<void(double t, ConstVec x, ConstVec y, MutVec out)>;
using GainFn = std::function<void(double t, MutVec out)>;
using RunningCostFn = std::function<double(double t, ConstVec x, ConstVec y, ConstVec u)>;
using TerminalCostFn = std::function<double(ConstVec x, ConstVec y)>;
using SingularCostFn = std::function<void(double t, MutVec out)>;

using DriftPartialFn = DriftFn;                                                  // n x n
using DiffusionPartialFn = DiffusionFn;                                          // (n*d) x n
using RunningPartialFn = std::function<void(double, ConstVec, ConstVec, ConstVec, MutVec)>;  // n
using TerminalPartialFn = std::function<void(ConstVec, ConstVec, MutVec)>;                   // n

/// Optional hand-coded partials. Missing entries fall back to central
/// finite differences.
///
/// Layouts: drift_x[i*n + k] = d b_i / d x_k; diffusion_x[(i*d + l)*n + k] =
/// d sigma_il / d x_k; the `_y` variants differentiate in the mean argument.
struct AnalyticDerivatives {
    DriftPartialFn drift_x, drift_y;
    DiffusionPartialFn diffusion_x, diffusion_y;
    RunningPartialFn running_x, running_y;
    TerminalPartialFn terminal_x, terminal_y;

    bool any() const;
};

/// Parameters of the scalar linear-quadratic mean-field problem
/// b = a x + abar y + c u, sigma constant, f = (q x^2 + r u^2)/2, h = qT x^2 / 2.
struct LqParameters {
    double a = -0.5;
    double abar = 0.3;
    double c = 1.0;
    double sigma = 0.2;
    double q = 1.0;
    double r = 1.0;
    double qT = 1.0;
};

struct ProblemSpec {
    std::string name;
    Dimensions dims;
    double horizon = 1.0;
    std::vector<double> x0;

    DriftFn drift;
    DiffusionFn diffusion;
    GainFn singular_gain;
    RunningCostFn running_cost;
    TerminalCostFn terminal_cost;
    SingularCostFn singular_cost;

    ControlSet control_set;
    AnalyticDerivatives derivatives;

    /// Present when the problem is scalar LQ in the sense of LqParameters.
    std::optional<LqParameters> lq;

    /// Resolved numeric parameters, recorded in experiment manifests.
    nlohmann::json parameters;
};

/// Evaluates first-order partials of a spec, using the analytic ones when
/// provided and central differences with step 1e-6 * (1 + |x_k|) otherwise.
class Partials {
public:
    explicit Partials(const ProblemSpec& spec) : spec_(&spec) {}

    void drift_x(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const;
    void drift_y(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const;
    void diffusion_x(double t, ConstVec x, ConstVec y, MutVec out) const;
    void diffusion_y(double t, ConstVec x, ConstVec y, MutVec out) const;
    void running_x(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const;
    void running_y(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const;
    void terminal_x(ConstVec x, ConstVec y, MutVec out) const;
    void terminal_y(ConstVec x, ConstVec y, MutVec out) const;

    // Finite-difference versions, regardless of analytic availability.
    void fd_drift_x(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const;
    void fd_drift_y(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const;
    void fd_diffusion_x(double t, ConstVec x, ConstVec y, MutVec out) const;
    void fd_diffusion_y(double t, ConstVec x, ConstVec y, MutVec out) const;
    void fd_running_x(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const;
    void fd_running_y(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const;
    void fd_terminal_x(ConstVec x, ConstVec y, MutVec out) const;
    void fd_terminal_y(ConstVec x, ConstVec y, MutVec out) const;

private:
    const ProblemSpec* spec_;
};

struct AssumptionCheck {
    std::string id;  // H1..H4
    std::string probe;
    bool passed = false;
    double worst_residual = 0.0;
};

struct AssumptionReport {
    std::vector<AssumptionCheck> checks;
    bool passed = false;
    std::uint64_t seed = 0;
    std::size_t probes = 0;
    double box_radius = 0.0;
};

/// Probes the standing assumptions on random points of [0,T] x ball(box_radius)^2 x U1.
/// Throws IllPosedError if any coefficient is non-finite at a probe.
AssumptionReport validate_spec(const ProblemSpec& spec, std::size_t probes, double box_radius,
                               std::uint64_t seed = 20240601);

ProblemSpec builtin_lq(const LqParameters& params = {}, double phi = 10.0, double x0 = 1.0,
                       double horizon = 1.0, std::size_t control_points = 41,
                       double control_bound = 2.0);
/// builtin_lq with an extra cubic drift term `cubic * x^3` (not LQ any more).
ProblemSpec builtin_lq_cubic(double cubic = 0.1, const LqParameters& params = {});
ProblemSpec builtin_oscillating();
ProblemSpec builtin_singular(double sigma = 0.1, double gain = -1.0, double phi = 0.5,
                             double x0 = 2.0);

/// Copy of `spec` with f, h and phi multiplied by `factor`.
ProblemSpec scale_costs(const ProblemSpec& spec, double factor);

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class UnknownBuiltinError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Builds a spec from {"builtin": name, "overrides": {...}}. Known builtins:
/// "lq", "lq-cubic", "oscillating", "singular".
ProblemSpec load_problem(const nlohmann::json& doc);

}  // namespace mfsmp
