#pragma once

#include "mfsmp/forward.hpp"
#include "mfsmp/problem.hpp"

#include <vector>

namespace mfsmp::detail {

// Partials of the coefficients at one particle, averaged over control atoms.
struct LocalPartials {
    std::vector<double> bx, by, sx, sy, fx, fy;
    std::vector<double> tmp_b, tmp_f;

    LocalPartials(std::size_t n, std::size_t d)
        : bx(n * n), by(n * n), sx(n * d * n), sy(n * d * n), fx(n), fy(n), tmp_b(n * n), tmp_f(n) {}

    void evaluate(const Partials& partials, double t, ConstVec x, ConstVec ybar,
                  std::span<const ControlSchedule::Atom> atoms) {
        for (std::size_t s = 0; s < atoms.size(); ++s) {
            const double w = atoms[s].weight;
            partials.drift_x(t, x, ybar, atoms[s].point, tmp_b);
            mix(bx, tmp_b, w, s == 0);
            partials.drift_y(t, x, ybar, atoms[s].point, tmp_b);
            mix(by, tmp_b, w, s == 0);
            partials.running_x(t, x, ybar, atoms[s].point, tmp_f);
            mix(fx, tmp_f, w, s == 0);
            partials.running_y(t, x, ybar, atoms[s].point, tmp_f);
            mix(fy, tmp_f, w, s == 0);
        }
        partials.diffusion_x(t, x, ybar, sx);
        partials.diffusion_y(t, x, ybar, sy);
    }

private:
    static void mix(std::vector<double>& acc, const std::vector<double>& v, double w, bool first) {
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] = first ? w * v[k] : acc[k] + w * v[k];
    }
};

}  // namespace mfsmp::detail
