#include "mfsmp/variation.hpp"

#include "detail/local_partials.hpp"
#include "mfsmp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include <fmt/format.h>

namespace mfsmp {

VariationPath::VariationPath(TimeGrid grid, std::size_t particles, std::size_t state_dim, VariationKind kind)
    : grid_(grid),
      N_(particles),
      n_(state_dim),
      kind_(kind),
      values_((grid.steps() + 1) * particles * state_dim),
      mean_((grid.steps() + 1) * state_dim) {}

namespace {

void require_same_noise(const EnsemblePath& ens, const SimConfig& cfg) {
    const auto& e = ens.config();
    if (e.seed != cfg.seed || e.particles != cfg.particles || e.antithetic != cfg.antithetic)
        throw MismatchError(fmt::format("variation must reuse the ensemble's noise: ensemble seed {} ({} particles), "
                                        "config seed {} ({} particles)",
                                        e.seed, e.particles, cfg.seed, cfg.particles));
}

void update_mean(VariationPath& y, std::size_t j) {
    auto m = y.mean(j);
    std::fill(m.begin(), m.end(), 0.0);
    for (std::size_t i = 0; i < y.particles(); ++i)
        for (std::size_t c = 0; c < y.state_dim(); ++c) m[c] += std::as_const(y).value(i, j)[c];
    for (auto& v : m) v /= static_cast<double>(y.particles());
}

// Drift forcing for particle i on interval j, written into out (size n).
using Forcing = std::function<void(std::size_t i, std::size_t j, MutVec out)>;

VariationPath propagate(const ProblemSpec& spec, const EnsemblePath& ens, const ControlSchedule& control,
                        VariationKind kind, const Forcing& forcing, const std::vector<double>& start,
                        const std::vector<double>& pushes) {
    const std::size_t N = ens.particles(), n = ens.state_dim(), d = ens.noise_dim(), L = ens.grid().steps();
    const double dt = ens.grid().dt();
    VariationPath y(ens.grid(), N, n, kind);
    y.noise_seed = ens.noise_seed();
    const Partials partials(spec);

    for (std::size_t i = 0; i < N; ++i) std::copy(start.begin(), start.end(), y.value(i, 0).begin());
    update_mean(y, 0);

    for (std::size_t j = 0; j < L; ++j) {
        const double t = ens.grid().knot(j);
        const auto atoms = control.atoms(j);
        const ConstVec ybar = std::as_const(y).mean(j);
        const ConstVec push(pushes.data() + j * n, n);
        detail::parallel_blocks(N, [&](std::size_t begin, std::size_t end) {
            detail::LocalPartials lp(n, d);
            std::vector<double> force(n);
            for (std::size_t i = begin; i < end; ++i) {
                lp.evaluate(partials, t, ens.state(i, j), ens.mean(j), atoms);
                std::fill(force.begin(), force.end(), 0.0);
                if (forcing) forcing(i, j, force);
                const ConstVec yi = std::as_const(y).value(i, j);
                const ConstVec dw = ens.noise(i, j);
                auto next = y.value(i, j + 1);
                for (std::size_t r = 0; r < n; ++r) {
                    double drift = force[r];
                    for (std::size_t k = 0; k < n; ++k) drift += lp.bx[r * n + k] * yi[k] + lp.by[r * n + k] * ybar[k];
                    double v = yi[r] + drift * dt;
                    for (std::size_t l = 0; l < d; ++l) {
                        double s = 0.0;
                        for (std::size_t k = 0; k < n; ++k)
                            s += lp.sx[(r * d + l) * n + k] * yi[k] + lp.sy[(r * d + l) * n + k] * ybar[k];
                        v += s * dw[l];
                    }
                    next[r] = v + push[r];
                }
            }
        });
        update_mean(y, j + 1);
    }
    return y;
}

// G(t_j) applied to the increment difference of each interval, and the 0+ start.
void singular_forcing(const ProblemSpec& spec, const SingularControlPath& eta, const SingularControlPath& xi,
                      std::vector<double>& start, std::vector<double>& pushes) {
    if (!(eta.grid() == xi.grid())) throw MismatchError("singular controls live on different grids");
    if (eta.dim() != spec.dims.singular || xi.dim() != spec.dims.singular)
        throw MismatchError("singular control dimension differs from the problem's");
    const std::size_t n = spec.dims.state, m = spec.dims.singular, L = eta.grid().steps();
    std::vector<double> gain(n * m);
    start.assign(n, 0.0);
    pushes.assign(L * n, 0.0);
    spec.singular_gain(0.0, gain);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) start[r] += gain[r * m + c] * (xi.initial_jump()[c] - eta.initial_jump()[c]);
    for (std::size_t j = 0; j < L; ++j) {
        spec.singular_gain(eta.grid().knot(j), gain);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c)
                pushes[j * n + r] += gain[r * m + c] * (xi.increment(j)[c] - eta.increment(j)[c]);
    }
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_error_of(const std::vector<double>& v) {
    const double mu = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

std::optional<double> log_slope(const std::vector<VariationRow>& rows) {
    if (rows.size() < 2) return std::nullopt;
    double mx = 0.0, my = 0.0;
    for (const auto& r : rows) {
        if (!(r.value > 0.0) || !(r.parameter > 0.0)) return std::nullopt;
        mx += std::log(r.parameter);
        my += std::log(r.value);
    }
    mx /= static_cast<double>(rows.size());
    my /= static_cast<double>(rows.size());
    double sxx = 0.0, sxy = 0.0;
    for (const auto& r : rows) {
        sxx += (std::log(r.parameter) - mx) * (std::log(r.parameter) - mx);
        sxy += (std::log(r.parameter) - mx) * (std::log(r.value) - my);
    }
    return sxy / sxx;
}

double singular_pairing(const ProblemSpec& spec, const SingularControlPath& eta, const SingularControlPath& xi) {
    const std::size_t m = spec.dims.singular;
    std::vector<double> phi(m);
    spec.singular_cost(0.0, phi);
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += phi[c] * (xi.initial_jump()[c] - eta.initial_jump()[c]);
    for (std::size_t j = 0; j < eta.grid().steps(); ++j) {
        spec.singular_cost(eta.grid().knot(j), phi);
        for (std::size_t c = 0; c < m; ++c) s += phi[c] * (xi.increment(j)[c] - eta.increment(j)[c]);
    }
    return s;
}

}  // namespace

VariationPath first_variation(const ProblemSpec& spec, const EnsemblePath& ens, const StrictControlPath& u,
                              const StrictControlPath& u_spiked, const SimConfig& cfg) {
    require_same_noise(ens, cfg);
    if (!(ens.grid() == u.grid()) || !(u.grid() == u_spiked.grid()))
        throw MismatchError("first_variation: grid mismatch");
    const std::size_t n = ens.state_dim();
    const ControlSchedule control(u);
    Forcing forcing = [&](std::size_t i, std::size_t j, MutVec out) {
        auto a = u.value(j), b = u_spiked.value(j);
        if (std::equal(a.begin(), a.end(), b.begin())) return;
        std::vector<double> ba(n), bb(n);
        const double t = ens.grid().knot(j);
        spec.drift(t, ens.state(i, j), ens.mean(j), a, ba);
        spec.drift(t, ens.state(i, j), ens.mean(j), b, bb);
        for (std::size_t r = 0; r < n; ++r) out[r] = bb[r] - ba[r];
    };
    return propagate(spec, ens, control, VariationKind::first, forcing, std::vector<double>(n, 0.0),
                     std::vector<double>(ens.grid().steps() * n, 0.0));
}

VariationPath second_variation(const ProblemSpec& spec, const EnsemblePath& ens, const ControlSchedule& control,
                               const SingularControlPath& eta, const SingularControlPath& xi, const SimConfig& cfg) {
    require_same_noise(ens, cfg);
    if (!(ens.grid() == control.grid()) || !(ens.grid() == eta.grid()))
        throw MismatchError("second_variation: grid mismatch");
    std::vector<double> start, pushes;
    singular_forcing(spec, eta, xi, start, pushes);
    return propagate(spec, ens, control, VariationKind::second, {}, start, pushes);
}

VariationPath second_variation(const ProblemSpec& spec, const EnsemblePath& ens, const StrictControlPath& u,
                               const SingularControlPath& eta, const SingularControlPath& xi, const SimConfig& cfg) {
    return second_variation(spec, ens, ControlSchedule(u), eta, xi, cfg);
}

VariationTable check_lemma1(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                            const SimConfig& cfg, double tau, const std::vector<double>& v,
                            const std::vector<double>& epsilons) {
    const auto ens = simulate(spec, u, eta, cfg);
    const std::size_t N = ens.particles(), L = ens.grid().steps();
    const double dt = ens.grid().dt();
    VariationTable table{"epsilon", {}, std::nullopt};
    for (double eps : epsilons) {
        const auto spiked = spike_variation(u, PerturbationParams{tau, eps, v, 0.0}, spec.control_set);
        const auto y = first_variation(spec, ens, u, spiked, cfg);
        std::vector<double> per(N, 0.0);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < L; ++j)
                for (double c : y.value(i, j)) per[i] += c * c * dt;
        table.rows.push_back({eps, mean_of(per), std_error_of(per)});
    }
    table.fitted_order = log_slope(table.rows);
    return table;
}

VariationTable check_lemma3(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                            const SingularControlPath& xi, const SimConfig& cfg, const std::vector<double>& alphas) {
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        if (!(alphas[k] > 0.0 && alphas[k] <= 1.0)) throw std::invalid_argument("alphas must lie in (0, 1]");
        if (k > 0 && !(alphas[k] < alphas[k - 1])) throw std::invalid_argument("alphas must be decreasing");
    }
    const auto ens = simulate(spec, u, eta, cfg);
    const auto y2 = second_variation(spec, ens, u, eta, xi, cfg);
    const std::size_t N = ens.particles(), L = ens.grid().steps(), n = ens.state_dim();
    VariationTable table{"alpha", {}, std::nullopt};
    for (double alpha : alphas) {
        const auto ens_a = simulate(spec, u, convex_perturbation(eta, xi, alpha), cfg);
        std::vector<double> per(N, 0.0);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t c = 0; c < n; ++c) {
                const double e = (ens_a.state(i, L)[c] - ens.state(i, L)[c]) / alpha - y2.value(i, L)[c];
                per[i] += e * e;
            }
        table.rows.push_back({alpha, mean_of(per), std_error_of(per)});
    }
    table.fitted_order = log_slope(table.rows);
    return table;
}

std::vector<double> variational_terms(const ProblemSpec& spec, const EnsemblePath& ens, const ControlSchedule& control,
                                      const VariationPath& y2, const SingularControlPath& eta,
                                      const SingularControlPath& xi) {
    if (!(ens.grid() == y2.grid()) || !(ens.grid() == control.grid()) || !(ens.grid() == eta.grid()))
        throw MismatchError("variational terms: grid mismatch");
    if (y2.noise_seed != ens.noise_seed()) throw MismatchError("variation and ensemble use different noise");
    const std::size_t N = ens.particles(), n = ens.state_dim(), d = ens.noise_dim(), L = ens.grid().steps();
    const double dt = ens.grid().dt();
    const Partials partials(spec);
    const double pairing = singular_pairing(spec, eta, xi);
    std::vector<double> per(N);
    detail::parallel_blocks(N, [&](std::size_t begin, std::size_t end) {
        detail::LocalPartials lp(n, d);
        std::vector<double> hx(n), hy(n);
        for (std::size_t i = begin; i < end; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < L; ++j) {
                lp.evaluate(partials, ens.grid().knot(j), ens.state(i, j), ens.mean(j), control.atoms(j));
                double s = 0.0;
                for (std::size_t c = 0; c < n; ++c) s += lp.fx[c] * y2.value(i, j)[c] + lp.fy[c] * y2.mean(j)[c];
                acc += s * dt;
            }
            partials.terminal_x(ens.state(i, L), ens.mean(L), hx);
            partials.terminal_y(ens.state(i, L), ens.mean(L), hy);
            for (std::size_t c = 0; c < n; ++c) acc += hx[c] * y2.value(i, L)[c] + hy[c] * y2.mean(L)[c];
            per[i] = acc + pairing;
        }
    });
    return per;
}

Lemma4Report check_lemma4(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                          const SingularControlPath& xi, const SimConfig& cfg, const std::vector<double>& alphas) {
    const auto ens = simulate(spec, u, eta, cfg);
    const ControlSchedule control(u);
    const auto y2 = second_variation(spec, ens, control, eta, xi, cfg);
    const auto per = variational_terms(spec, ens, control, y2, eta, xi);
    Lemma4Report rep;
    rep.expression = mean_of(per);
    rep.std_error = std_error_of(per);
    const double base = cost(spec, ens, control, eta).total;
    for (double alpha : alphas) {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alphas must lie in (0, 1]");
        const auto eta_a = convex_perturbation(eta, xi, alpha);
        const auto ens_a = simulate(spec, control, eta_a, cfg);
        const double q = (cost(spec, ens_a, control, eta_a).total - base) / alpha;
        rep.rows.push_back({alpha, q, std::abs(q - rep.expression)});
    }
    return rep;
}

DualityReport check_duality(const ProblemSpec& spec, const EnsemblePath& ens, const ControlSchedule& control,
                            const VariationPath& y2, const AdjointPath& adj, const SingularControlPath& eta,
                            const SingularControlPath& xi) {
    if (adj.noise_seed != ens.noise_seed() || y2.noise_seed != ens.noise_seed())
        throw MismatchError(fmt::format("duality needs a common probability space: ensemble seed {}, variation seed "
                                        "{}, adjoint seed {}",
                                        ens.noise_seed(), y2.noise_seed, adj.noise_seed));
    if (!(adj.grid() == ens.grid()) || adj.particles() != ens.particles())
        throw MismatchError("adjoint and ensemble differ in grid or particle count");
    const auto lhs_terms = variational_terms(spec, ens, control, y2, eta, xi);

    const std::size_t N = ens.particles(), n = ens.state_dim(), m = spec.dims.singular, L = ens.grid().steps();
    std::vector<double> rhs_reg(N, 0.0), rhs_path(N, 0.0), gain(n * m), phi(m);
    auto add = [&](std::size_t j, ConstVec delta) {
        if (std::all_of(delta.begin(), delta.end(), [](double v) { return v == 0.0; })) return;
        const double t = ens.grid().knot(j);
        spec.singular_gain(t, gain);
        spec.singular_cost(t, phi);
        for (std::size_t i = 0; i < N; ++i) {
            const ConstVec p = adj.p(i, j), pw = adj.pathwise(i, j);
            for (std::size_t c = 0; c < m; ++c) {
                double gp = 0.0, gpw = 0.0;
                for (std::size_t r = 0; r < n; ++r) {
                    gp += gain[r * m + c] * p[r];
                    gpw += gain[r * m + c] * pw[r];
                }
                rhs_reg[i] += (phi[c] + gp) * delta[c];
                rhs_path[i] += (phi[c] + gpw) * delta[c];
            }
        }
    };
    std::vector<double> delta(m);
    for (std::size_t c = 0; c < m; ++c) delta[c] = xi.initial_jump()[c] - eta.initial_jump()[c];
    add(0, delta);
    for (std::size_t j = 0; j < L; ++j) {
        for (std::size_t c = 0; c < m; ++c) delta[c] = xi.increment(j)[c] - eta.increment(j)[c];
        add(j, delta);
    }

    DualityReport rep;
    rep.lhs = mean_of(lhs_terms);
    rep.rhs = mean_of(rhs_reg);
    rep.gap = std::abs(rep.lhs - rep.rhs);
    rep.lhs_std_error = std_error_of(lhs_terms);
    rep.rhs_std_error = std_error_of(rhs_path);
    rep.combined_std_error = std::hypot(rep.lhs_std_error, rep.rhs_std_error);
    return rep;
}

DualityReport check_duality(const ProblemSpec& spec, const EnsemblePath& ens, const StrictControlPath& u,
                            const VariationPath& y2, const AdjointPath& adj, const SingularControlPath& eta,
                            const SingularControlPath& xi) {
    return check_duality(spec, ens, ControlSchedule(u), y2, adj, eta, xi);
}

void write_csv(std::ostream& os, const VariationTable& table) {
    os << table.parameter_name << ",value,std_error\n";
    for (const auto& r : table.rows) os << fmt::format("{:.17g},{:.17g},{:.17g}\n", r.parameter, r.value, r.std_error);
}

}  // namespace mfsmp
