#pragma once

#include "mfsmp/paths.hpp"
#include "mfsmp/problem.hpp"

#include <cmath>
#include <vector>

namespace test {

/// Scalar spec with coefficients given as plain lambdas of (t, x, y, u).
/// Derivatives are left to finite differences.
template <class B, class S, class F, class H>
mfsmp::ProblemSpec scalar_spec(B b, S sigma, double gain, F f, H h, double phi, double x0,
                               std::vector<double> points = {-1.0, 1.0}) {
    using namespace mfsmp;
    ProblemSpec s;
    s.name = "custom";
    s.x0 = {x0};
    s.drift = [b](double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) { out[0] = b(t, x[0], y[0], u[0]); };
    s.diffusion = [sigma](double t, ConstVec x, ConstVec y, MutVec out) { out[0] = sigma(t, x[0], y[0]); };
    s.singular_gain = [gain](double, MutVec out) { out[0] = gain; };
    s.running_cost = [f](double t, ConstVec x, ConstVec y, ConstVec u) { return f(t, x[0], y[0], u[0]); };
    s.terminal_cost = [h](ConstVec x, ConstVec y) { return h(x[0], y[0]); };
    s.singular_cost = [phi](double, MutVec out) { out[0] = phi; };
    s.control_set = ControlSet(1, std::move(points));
    s.parameters = {{"builtin", "custom"}};
    return s;
}

inline mfsmp::StrictControlPath constant(const mfsmp::TimeGrid& g, double v) {
    return mfsmp::StrictControlPath::constant(g, std::vector<double>{v});
}

inline mfsmp::SingularControlPath zero_eta(const mfsmp::TimeGrid& g) { return mfsmp::SingularControlPath::zero(g, 1); }

inline mfsmp::SingularControlPath jump(const mfsmp::TimeGrid& g, double size) {
    return mfsmp::SingularControlPath::jump_at_zero(g, std::vector<double>{size});
}

}  // namespace test
