#include "mfsmp/forward.hpp"

#include "mfsmp/noise.hpp"
#include "mfsmp/parallel.hpp"

#include <bit>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

namespace mfsmp {

ControlSchedule::ControlSchedule(const StrictControlPath& u) : grid_(u.grid()), dim_(u.dim()), points_(u.values()) {
    const std::size_t L = grid_.steps();
    atoms_.reserve(L);
    offsets_.resize(L + 1);
    for (std::size_t j = 0; j < L; ++j) {
        offsets_[j] = j;
        atoms_.push_back({1.0, ConstVec(points_.data() + j * dim_, dim_)});
    }
    offsets_[L] = L;
}

ControlSchedule::ControlSchedule(const RelaxedControlPath& q)
    : grid_(q.grid()), dim_(q.control_set().dim()), points_(q.control_set().points()) {
    const std::size_t L = grid_.steps(), K = q.points();
    offsets_.resize(L + 1);
    for (std::size_t j = 0; j < L; ++j) {
        offsets_[j] = atoms_.size();
        auto w = q.weights(j);
        for (std::size_t a = 0; a < K; ++a)
            if (w[a] > 0.0) atoms_.push_back({w[a], ConstVec(points_.data() + a * dim_, dim_)});
    }
    offsets_[L] = atoms_.size();
}

ControlSchedule::ControlSchedule(const ControlSchedule& other)
    : grid_(other.grid_), dim_(other.dim_), points_(other.points_), atoms_(other.atoms_), offsets_(other.offsets_) {
    for (auto& a : atoms_) a.point = ConstVec(points_.data() + (a.point.data() - other.points_.data()), dim_);
}

EnsemblePath::EnsemblePath(TimeGrid grid, std::size_t particles, std::size_t state_dim, std::size_t noise_dim,
                           const SimConfig& cfg)
    : grid_(grid),
      N_(particles),
      n_(state_dim),
      d_(noise_dim),
      cfg_(cfg),
      states_((grid.steps() + 1) * particles * state_dim),
      mean_((grid.steps() + 1) * state_dim),
      dW_(grid.steps() * particles * noise_dim) {}

std::vector<double> EnsemblePath::particle_major() const {
    const std::size_t L = grid_.steps();
    std::vector<double> out(N_ * (L + 1) * n_);
    for (std::size_t i = 0; i < N_; ++i)
        for (std::size_t j = 0; j <= L; ++j)
            for (std::size_t c = 0; c < n_; ++c) out[(i * (L + 1) + j) * n_ + c] = state(i, j)[c];
    return out;
}

namespace {

void check_inputs(const ProblemSpec& spec, const ControlSchedule& control, const SingularControlPath& eta) {
    if (!(control.grid() == eta.grid())) throw MismatchError("control and singular paths live on different grids");
    if (std::abs(control.grid().horizon() - spec.horizon) > 1e-12 * spec.horizon)
        throw MismatchError(fmt::format("grid horizon {} differs from problem horizon {}", control.grid().horizon(),
                                        spec.horizon));
    if (control.dim() != spec.dims.control) throw MismatchError("control dimension differs from the problem's");
    if (eta.dim() != spec.dims.singular) throw MismatchError("singular control dimension differs from the problem's");
    if (spec.x0.size() != spec.dims.state) throw MismatchError("initial state has wrong dimension");
}

void compute_mean(EnsemblePath& ens, std::size_t j) {
    const std::size_t N = ens.particles(), n = ens.state_dim();
    auto m = ens.mean(j);
    std::fill(m.begin(), m.end(), 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        auto x = ens.state(i, j);
        for (std::size_t c = 0; c < n; ++c) m[c] += x[c];
    }
    for (auto& v : m) v /= static_cast<double>(N);
}

void check_finite(const EnsemblePath& ens, std::size_t j) {
    for (std::size_t i = 0; i < ens.particles(); ++i)
        for (double v : ens.state(i, j))
            if (!std::isfinite(v))
                throw SolverError(fmt::format("non-finite state at particle {} step {} (t = {})", i, j,
                                              ens.grid().knot(j)));
}

}  // namespace

EnsemblePath simulate(const ProblemSpec& spec, const ControlSchedule& control, const SingularControlPath& eta,
                      const SimConfig& cfg) {
    check_inputs(spec, control, eta);
    if (cfg.particles < 2) throw std::invalid_argument("simulation needs at least 2 particles");
    if (cfg.antithetic && cfg.particles % 2 != 0)
        throw std::invalid_argument("antithetic sampling needs an even particle count");

    const auto& dims = spec.dims;
    const std::size_t n = dims.state, d = dims.noise, m = dims.singular, N = cfg.particles;
    const auto& grid = control.grid();
    const std::size_t L = grid.steps();
    const double dt = grid.dt(), sqdt = std::sqrt(dt);
    EnsemblePath ens(grid, N, n, d, cfg);
    NoiseSource noise(cfg.seed, cfg.antithetic);

    std::vector<double> gain(n * m);
    spec.singular_gain(0.0, gain);
    std::vector<double> start = spec.x0;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) start[r] += gain[r * m + c] * eta.initial_jump()[c];
    for (std::size_t i = 0; i < N; ++i) std::copy(start.begin(), start.end(), ens.state(i, 0).begin());
    check_finite(ens, 0);
    compute_mean(ens, 0);

    std::vector<double> push(n);
    for (std::size_t j = 0; j < L; ++j) {
        const double t = grid.knot(j);
        spec.singular_gain(t, gain);
        auto inc = eta.increment(j);
        for (std::size_t r = 0; r < n; ++r) {
            push[r] = 0.0;
            for (std::size_t c = 0; c < m; ++c) push[r] += gain[r * m + c] * inc[c];
        }
        const auto atoms = control.atoms(j);
        const ConstVec ybar = std::as_const(ens).mean(j);

        detail::parallel_blocks(N, [&](std::size_t begin, std::size_t end) {
            std::vector<double> b(n), acc(n), sig(n * d);
            for (std::size_t i = begin; i < end; ++i) {
                const ConstVec x = std::as_const(ens).state(i, j);
                for (std::size_t s = 0; s < atoms.size(); ++s) {
                    spec.drift(t, x, ybar, atoms[s].point, b);
                    for (std::size_t r = 0; r < n; ++r)
                        acc[r] = s == 0 ? atoms[s].weight * b[r] : acc[r] + atoms[s].weight * b[r];
                }
                spec.diffusion(t, x, ybar, sig);
                auto dw = ens.noise(i, j);
                for (std::size_t l = 0; l < d; ++l) dw[l] = sqdt * noise.normal(i, j, l);
                auto next = ens.state(i, j + 1);
                for (std::size_t r = 0; r < n; ++r) {
                    double v = x[r] + acc[r] * dt;
                    for (std::size_t l = 0; l < d; ++l) v += sig[r * d + l] * dw[l];
                    next[r] = v + push[r];
                }
            }
        });
        check_finite(ens, j + 1);
        compute_mean(ens, j + 1);
    }
    return ens;
}

EnsemblePath simulate(const ProblemSpec& spec, const StrictControlPath& u, const SingularControlPath& eta,
                      const SimConfig& cfg) {
    return simulate(spec, ControlSchedule(u), eta, cfg);
}

EnsemblePath simulate_relaxed(const ProblemSpec& spec, const RelaxedControlPath& q, const SingularControlPath& eta,
                              const SimConfig& cfg) {
    if (!(q.control_set() == spec.control_set))
        throw MismatchError("relaxed control is defined over a different control set");
    return simulate(spec, ControlSchedule(q), eta, cfg);
}

double singular_cost(const ProblemSpec& spec, const SingularControlPath& eta) {
    const std::size_t m = eta.dim();
    std::vector<double> phi(m);
    spec.singular_cost(0.0, phi);
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) total += phi[c] * eta.initial_jump()[c];
    for (std::size_t j = 0; j < eta.grid().steps(); ++j) {
        auto inc = eta.increment(j);
        if (std::all_of(inc.begin(), inc.end(), [](double v) { return v == 0.0; })) continue;
        spec.singular_cost(eta.grid().knot(j), phi);
        for (std::size_t c = 0; c < m; ++c) total += phi[c] * inc[c];
    }
    return total;
}

CostReport cost(const ProblemSpec& spec, const EnsemblePath& ens, const ControlSchedule& control,
                const SingularControlPath& eta) {
    check_inputs(spec, control, eta);
    if (!(ens.grid() == control.grid())) throw MismatchError("ensemble and control live on different grids");
    const std::size_t N = ens.particles(), L = ens.grid().steps();
    const double dt = ens.grid().dt();

    std::vector<double> running(N), terminal(N);
    detail::parallel_blocks(N, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < L; ++j) {
                const double t = ens.grid().knot(j);
                double f = 0.0;
                const auto atoms = control.atoms(j);
                for (std::size_t s = 0; s < atoms.size(); ++s) {
                    const double v = spec.running_cost(t, ens.state(i, j), ens.mean(j), atoms[s].point);
                    f = s == 0 ? atoms[s].weight * v : f + atoms[s].weight * v;
                }
                acc += f * dt;
            }
            running[i] = acc;
            terminal[i] = spec.terminal_cost(ens.state(i, L), ens.mean(L));
        }
    });

    CostReport rep;
    rep.per_particle.resize(N);
    double sum_run = 0.0, sum_term = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        sum_run += running[i];
        sum_term += terminal[i];
        rep.per_particle[i] = running[i] + terminal[i];
    }
    rep.running = sum_run / static_cast<double>(N);
    rep.terminal = sum_term / static_cast<double>(N);
    rep.singular = singular_cost(spec, eta);
    rep.total = rep.running + rep.terminal + rep.singular;
    if (!std::isfinite(rep.total)) throw SolverError("cost is not finite");

    const double mean = rep.running + rep.terminal;
    double ss = 0.0;
    for (double v : rep.per_particle) ss += (v - mean) * (v - mean);
    rep.std_error = std::sqrt(ss / static_cast<double>(N - 1) / static_cast<double>(N));
    return rep;
}

CostReport cost(const ProblemSpec& spec, const EnsemblePath& ens, const StrictControlPath& u,
                const SingularControlPath& eta) {
    return cost(spec, ens, ControlSchedule(u), eta);
}

CostReport cost(const ProblemSpec& spec, const EnsemblePath& ens, const RelaxedControlPath& q,
                const SingularControlPath& eta) {
    if (!(q.control_set() == spec.control_set))
        throw MismatchError("relaxed control is defined over a different control set");
    return cost(spec, ens, ControlSchedule(q), eta);
}

ConvergenceTable meanfield_convergence(const ProblemSpec& spec, const StrictControlPath& u,
                                       const SingularControlPath& eta, const std::vector<std::size_t>& particle_counts,
                                       std::size_t reps, std::uint64_t seed) {
    if (reps < 2) throw std::invalid_argument("meanfield_convergence needs at least 2 repetitions");
    if (particle_counts.empty()) throw std::invalid_argument("meanfield_convergence needs particle counts");
    for (std::size_t k = 1; k < particle_counts.size(); ++k)
        if (particle_counts[k] <= particle_counts[k - 1])
            throw std::invalid_argument("particle counts must be strictly increasing");

    ConvergenceTable table;
    table.reps = reps;
    table.seed = seed;
    const ControlSchedule control(u);
    const std::size_t n = spec.dims.state, L = u.grid().steps();
    for (std::size_t N : particle_counts) {
        std::vector<double> means(reps * n);
        for (std::size_t r = 0; r < reps; ++r) {
            const SimConfig cfg{N, derive_seed(derive_seed(seed, N), r), false};
            auto ens = simulate(spec, control, eta, cfg);
            std::copy(ens.mean(L).begin(), ens.mean(L).end(), means.begin() + static_cast<std::ptrdiff_t>(r * n));
        }
        double ss = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            double mu = 0.0;
            for (std::size_t r = 0; r < reps; ++r) mu += means[r * n + c];
            mu /= static_cast<double>(reps);
            for (std::size_t r = 0; r < reps; ++r) ss += (means[r * n + c] - mu) * (means[r * n + c] - mu);
        }
        table.rows.push_back({N, std::sqrt(ss / static_cast<double>(reps - 1))});
    }

    const std::size_t K = table.rows.size();
    bool positive = K >= 2;
    for (const auto& row : table.rows) positive = positive && row.deviation > 0.0;
    if (positive) {
        double mx = 0.0, my = 0.0;
        for (const auto& row : table.rows) {
            mx += std::log(static_cast<double>(row.particles));
            my += std::log(row.deviation);
        }
        mx /= static_cast<double>(K);
        my /= static_cast<double>(K);
        double sxx = 0.0, sxy = 0.0;
        for (const auto& row : table.rows) {
            const double dx = std::log(static_cast<double>(row.particles)) - mx;
            sxx += dx * dx;
            sxy += dx * (std::log(row.deviation) - my);
        }
        const double slope = sxy / sxx;
        table.slope = slope;
        if (K > 2) {
            double sse = 0.0;
            for (const auto& row : table.rows) {
                const double res = std::log(row.deviation) - my -
                                   slope * (std::log(static_cast<double>(row.particles)) - mx);
                sse += res * res;
            }
            table.slope_std_error = std::sqrt(sse / static_cast<double>(K - 2) / sxx);
        }
    }
    return table;
}

void write_summary_csv(std::ostream& os, const EnsemblePath& ens) {
    const std::size_t n = ens.state_dim(), N = ens.particles();
    os << 't';
    for (std::size_t c = 0; c < n; ++c) os << ",mean_" << c;
    for (std::size_t c = 0; c < n; ++c) os << ",std_" << c;
    os << '\n';
    for (std::size_t j = 0; j <= ens.grid().steps(); ++j) {
        os << fmt::format("{:.17g}", ens.grid().knot(j));
        for (double v : ens.mean(j)) os << fmt::format(",{:.17g}", v);
        for (std::size_t c = 0; c < n; ++c) {
            double ss = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                const double dv = ens.state(i, j)[c] - ens.mean(j)[c];
                ss += dv * dv;
            }
            os << fmt::format(",{:.17g}", std::sqrt(ss / static_cast<double>(N - 1)));
        }
        os << '\n';
    }
}

namespace {

template <class T>
void put_le(std::ostream& os, T value) {
    auto bits = std::bit_cast<std::uint64_t>(value);
    char bytes[8];
    for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xffU);
    os.write(bytes, 8);
}

}  // namespace

void write_trajectories(std::ostream& os, const EnsemblePath& ens) {
    put_le(os, static_cast<std::uint64_t>(ens.particles()));
    put_le(os, static_cast<std::uint64_t>(ens.grid().steps()));
    put_le(os, static_cast<std::uint64_t>(ens.state_dim()));
    for (double v : ens.particle_major()) put_le(os, v);
}

}  // namespace mfsmp
