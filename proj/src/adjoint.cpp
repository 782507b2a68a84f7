#include "mfsmp/adjoint.hpp"

#include "mfsmp/parallel.hpp"
#include "mfsmp/regression.hpp"
#include "detail/local_partials.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

namespace mfsmp {

AdjointPath::AdjointPath(TimeGrid grid, std::size_t particles, std::size_t state_dim, std::size_t noise_dim)
    : grid_(grid),
      N_(particles),
      n_(state_dim),
      d_(noise_dim),
      P_((grid.steps() + 1) * particles * state_dim),
      Pw_((grid.steps() + 1) * particles * state_dim),
      Z_(grid.steps() * particles * state_dim * noise_dim) {}

std::vector<double> AdjointPath::mean_p(std::size_t j) const {
    std::vector<double> m(n_, 0.0);
    for (std::size_t i = 0; i < N_; ++i)
        for (std::size_t c = 0; c < n_; ++c) m[c] += p(i, j)[c];
    for (auto& v : m) v /= static_cast<double>(N_);
    return m;
}

namespace {

// out_k = sum_i J[i*n + k] p_i  (transpose of an n x n Jacobian applied to p)
void apply_t(const std::vector<double>& J, ConstVec p, std::size_t n, MutVec out, bool accumulate) {
    for (std::size_t k = 0; k < n; ++k) {
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += J[i * n + k] * p[i];
        out[k] = accumulate ? out[k] + v : v;
    }
}

// out_k += sum_{i,l} S[(i*d + l)*n + k] Z_il
void apply_sigma(const std::vector<double>& S, ConstVec Z, std::size_t n, std::size_t d, MutVec out) {
    for (std::size_t k = 0; k < n; ++k) {
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t l = 0; l < d; ++l) v += S[(i * d + l) * n + k] * Z[i * d + l];
        out[k] += v;
    }
}

}  // namespace

AdjointPath solve_adjoint(const ProblemSpec& spec, const EnsemblePath& ens, const ControlSchedule& control,
                          const AdjointOptions& options) {
    if (!(ens.grid() == control.grid())) throw MismatchError("ensemble and control live on different grids");
    if (control.dim() != spec.dims.control) throw MismatchError("control dimension differs from the problem's");
    if (options.basis_degree < 1) throw std::invalid_argument("basis degree must be >= 1");
    const std::size_t N = ens.particles(), n = ens.state_dim(), d = ens.noise_dim(), L = ens.grid().steps();
    if (n != spec.dims.state || d != spec.dims.noise) throw MismatchError("ensemble dimensions differ from the problem's");
    const double dt = ens.grid().dt();
    const double sign = options.cost_sign == CostSign::conventional ? 1.0 : -1.0;

    AdjointPath adj(ens.grid(), N, n, d);
    adj.noise_seed = ens.noise_seed();
    adj.options = options;
    const Partials partials(spec);

    // Terminal condition P_L = h_x(X_L, Xbar_L) + mean h_y.
    {
        std::vector<double> hy_sum(n, 0.0), hy(n);
        for (std::size_t i = 0; i < N; ++i) {
            partials.terminal_x(ens.state(i, L), ens.mean(L), adj.p(i, L));
            partials.terminal_y(ens.state(i, L), ens.mean(L), hy);
            for (std::size_t c = 0; c < n; ++c) hy_sum[c] += hy[c];
        }
        for (auto& v : hy_sum) v /= static_cast<double>(N);
        for (std::size_t i = 0; i < N; ++i) {
            auto p = adj.p(i, L);
            for (std::size_t c = 0; c < n; ++c) p[c] += hy_sum[c];
            std::copy(p.begin(), p.end(), adj.pathwise(i, L).begin());
        }
    }

    // Per-particle scratch: local driver and mean-field contributions, for the
    // regression estimate and for the pathwise recursion.
    std::vector<double> local(N * n), local_w(N * n), meanc(N * n), meanc_w(N * n);
    std::vector<double> target(N), fitted(N);
    std::size_t basis_size = 0;

    for (std::size_t jj = L; jj-- > 0;) {
        const std::size_t j = jj;
        const double t = ens.grid().knot(j);
        const Regression reg(ens.slice(j), N, n, options.basis_degree);
        basis_size = std::max(basis_size, reg.basis_size());

        // Z_j = E_j[P_{j+1} dW_j] / dt
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t l = 0; l < d; ++l) {
                for (std::size_t i = 0; i < N; ++i) target[i] = adj.p(i, j + 1)[r] * ens.noise(i, j)[l] / dt;
                reg.project(target, fitted);
                for (std::size_t i = 0; i < N; ++i) adj.z(i, j)[r * d + l] = fitted[i];
            }

        const auto atoms = control.atoms(j);
        const ConstVec ybar = ens.mean(j);
        detail::parallel_blocks(N, [&](std::size_t begin, std::size_t end) {
            detail::LocalPartials lp(n, d);
            for (std::size_t i = begin; i < end; ++i) {
                lp.evaluate(partials, t, ens.state(i, j), ybar, atoms);
                const ConstVec p = std::as_const(adj).p(i, j + 1), pw = std::as_const(adj).pathwise(i, j + 1);
                const ConstVec z = std::as_const(adj).z(i, j);
                MutVec lo(local.data() + i * n, n), low(local_w.data() + i * n, n);
                MutVec mc(meanc.data() + i * n, n), mcw(meanc_w.data() + i * n, n);
                apply_t(lp.bx, p, n, lo, false);
                apply_t(lp.bx, pw, n, low, false);
                apply_sigma(lp.sx, z, n, d, lo);
                apply_sigma(lp.sx, z, n, d, low);
                apply_t(lp.by, p, n, mc, false);
                apply_t(lp.by, pw, n, mcw, false);
                apply_sigma(lp.sy, z, n, d, mc);
                apply_sigma(lp.sy, z, n, d, mcw);
                for (std::size_t c = 0; c < n; ++c) {
                    lo[c] += sign * lp.fx[c];
                    low[c] += sign * lp.fx[c];
                    mc[c] += sign * lp.fy[c];
                    mcw[c] += sign * lp.fy[c];
                }
            }
        });

        std::vector<double> mbar(n, 0.0), mbar_w(n, 0.0);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t c = 0; c < n; ++c) {
                mbar[c] += meanc[i * n + c];
                mbar_w[c] += meanc_w[i * n + c];
            }
        for (std::size_t c = 0; c < n; ++c) {
            mbar[c] /= static_cast<double>(N);
            mbar_w[c] /= static_cast<double>(N);
        }

        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t i = 0; i < N; ++i) target[i] = adj.p(i, j + 1)[r] + dt * (local[i * n + r] + mbar[r]);
            reg.project(target, fitted);
            for (std::size_t i = 0; i < N; ++i) adj.p(i, j)[r] = fitted[i];
        }
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t r = 0; r < n; ++r)
                adj.pathwise(i, j)[r] = adj.pathwise(i, j + 1)[r] + dt * (local_w[i * n + r] + mbar_w[r]);

        for (std::size_t i = 0; i < N; ++i)
            for (double v : std::as_const(adj).p(i, j))
                if (!std::isfinite(v))
                    throw SolverError(fmt::format("non-finite adjoint at particle {} step {}", i, j));
    }

    auto& diag = adj.diagnostics;
    diag.basis_size = basis_size;
    for (std::size_t j = 0; j <= L; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            for (double v : std::as_const(adj).p(i, j)) s += v * v;
        diag.sup_sq_p = std::max(diag.sup_sq_p, s / static_cast<double>(N));
    }
    for (std::size_t j = 0; j < L; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            for (double v : std::as_const(adj).z(i, j)) s += v * v;
        diag.int_sq_z += s / static_cast<double>(N) * dt;
    }
    if (!std::isfinite(diag.sup_sq_p) || !std::isfinite(diag.int_sq_z))
        throw SolverError("adjoint diagnostics are not finite");
    return adj;
}

AdjointPath solve_adjoint(const ProblemSpec& spec, const EnsemblePath& ens, const StrictControlPath& u,
                          const AdjointOptions& options) {
    return solve_adjoint(spec, ens, ControlSchedule(u), options);
}

AdjointPath solve_adjoint(const ProblemSpec& spec, const EnsemblePath& ens, const RelaxedControlPath& q,
                          const AdjointOptions& options) {
    if (!(q.control_set() == spec.control_set))
        throw MismatchError("relaxed control is defined over a different control set");
    return solve_adjoint(spec, ens, ControlSchedule(q), options);
}

// ---------------------------------------------------------------------------
// LQ oracle

namespace {

constexpr std::size_t kOracleSteps = 4096;

// Cubic Hermite interpolation between RK4 nodes with the exact ODE slopes.
std::function<double(double)> interpolate(std::vector<double> values, std::vector<double> slopes, double horizon) {
    return [values = std::move(values), slopes = std::move(slopes), horizon](double t) {
        const double h = horizon / static_cast<double>(kOracleSteps);
        const double s = std::clamp(t / horizon, 0.0, 1.0) * static_cast<double>(kOracleSteps);
        const auto k = std::min(static_cast<std::size_t>(s), kOracleSteps - 1);
        const double w = s - static_cast<double>(k), w2 = w * w, w3 = w2 * w;
        return (2 * w3 - 3 * w2 + 1) * values[k] + (w3 - 2 * w2 + w) * h * slopes[k] +
               (-2 * w3 + 3 * w2) * values[k + 1] + (w3 - w2) * h * slopes[k + 1];
    };
}

}  // namespace

LqOracle lq_oracle(const ProblemSpec& spec) {
    if (!spec.lq) throw std::invalid_argument(fmt::format("problem '{}' is not scalar LQ", spec.name));
    const auto p = *spec.lq;
    if (!(p.r > 0.0)) throw std::invalid_argument("LQ oracle needs r > 0");
    const double T = spec.horizon, h = T / static_cast<double>(kOracleSteps);
    const double A = p.a + p.abar, g = p.c * p.c / p.r;
    const std::size_t M = kOracleSteps;

    auto dK = [&](double K) { return -2.0 * p.a * K - p.q; };
    auto dPi = [&](double Pi) { return -2.0 * A * Pi - p.q + g * Pi * Pi; };

    // Backward RK4 for K and Pi (autonomous).
    std::vector<double> K(M + 1), Pi(M + 1);
    K[M] = p.qT;
    Pi[M] = p.qT;
    for (std::size_t k = M; k-- > 0;) {
        auto rk4 = [&](auto&& f, double y) {
            const double k1 = f(y), k2 = f(y - 0.5 * h * k1), k3 = f(y - 0.5 * h * k2), k4 = f(y - h * k3);
            return y - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        };
        K[k] = rk4(dK, K[k + 1]);
        Pi[k] = rk4(dPi, Pi[k + 1]);
    }
    // Pi at interval midpoints by cubic Hermite interpolation with exact slopes.
    auto pi_mid = [&](std::size_t k) {
        return 0.5 * (Pi[k] + Pi[k + 1]) + h / 8.0 * (dPi(Pi[k]) - dPi(Pi[k + 1]));
    };

    // Forward RK4 for (m, V, running cost).
    const double x0 = spec.x0.at(0);
    std::vector<double> m(M + 1);
    m[0] = x0;
    double V = 0.0, J = 0.0;
    auto rhs = [&](double Pi_t, double mm, double VV, double out[3]) {
        const double u = -(p.c / p.r) * Pi_t * mm;
        out[0] = A * mm + p.c * u;
        out[1] = 2.0 * p.a * VV + p.sigma * p.sigma;
        out[2] = 0.5 * (p.q * (mm * mm + VV) + p.r * u * u);
    };
    for (std::size_t k = 0; k < M; ++k) {
        const double pm = pi_mid(k);
        double k1[3], k2[3], k3[3], k4[3];
        const double y0 = m[k], v0 = V;
        rhs(Pi[k], y0, v0, k1);
        rhs(pm, y0 + 0.5 * h * k1[0], v0 + 0.5 * h * k1[1], k2);
        rhs(pm, y0 + 0.5 * h * k2[0], v0 + 0.5 * h * k2[1], k3);
        rhs(Pi[k + 1], y0 + h * k3[0], v0 + h * k3[1], k4);
        m[k + 1] = y0 + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        V = v0 + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        J += h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]);
    }
    J += 0.5 * p.qT * (m[M] * m[M] + V);

    std::vector<double> kbar(M + 1), ubar(M + 1), dk(M + 1), dpi(M + 1), dkbar(M + 1), dm(M + 1), du(M + 1);
    for (std::size_t k = 0; k <= M; ++k) {
        kbar[k] = Pi[k] - K[k];
        ubar[k] = -(p.c / p.r) * Pi[k] * m[k];
        dk[k] = dK(K[k]);
        dpi[k] = dPi(Pi[k]);
        dkbar[k] = dpi[k] - dk[k];
        dm[k] = (A - g * Pi[k]) * m[k];
        du[k] = -(p.c / p.r) * (dpi[k] * m[k] + Pi[k] * dm[k]);
    }
    LqOracle o;
    o.K = interpolate(K, dk, T);
    o.kbar = interpolate(kbar, dkbar, T);
    o.pi = interpolate(Pi, dpi, T);
    o.mean = interpolate(m, dm, T);
    o.ubar = interpolate(ubar, du, T);
    o.optimal_cost = J;
    return o;
}

StrictControlPath oracle_control(const ProblemSpec& spec, const TimeGrid& grid, bool project) {
    const auto o = lq_oracle(spec);
    const auto& set = spec.control_set;
    std::vector<double> vals(grid.steps());
    for (std::size_t j = 0; j < grid.steps(); ++j) {
        double u = o.ubar(grid.knot(j));
        if (project) {
            std::size_t best = 0;
            for (std::size_t a = 1; a < set.size(); ++a)
                if (std::abs(set.point(a)[0] - u) < std::abs(set.point(best)[0] - u)) best = a;
            u = set.point(best)[0];
        }
        vals[j] = u;
    }
    return StrictControlPath(grid, 1, std::move(vals));
}

// ---------------------------------------------------------------------------

std::vector<StabilityRow> adjoint_stability(const ProblemSpec& spec, const RelaxedControlPath& q,
                                            const SingularControlPath& eta, const SimConfig& cfg,
                                            const std::vector<std::size_t>& ns, const AdjointOptions& options,
                                            std::uint64_t chattering_seed) {
    std::vector<StabilityRow> rows;
    for (std::size_t n : ns) {
        const auto qn = refine(q, n);
        const auto en = refine(eta, n);
        const auto un = chattering(q, n, chattering_seed);
        const auto ens_c = simulate(spec, un, en, cfg);
        const auto adj_c = solve_adjoint(spec, ens_c, un, options);
        const auto ens_r = simulate_relaxed(spec, qn, en, cfg);
        const auto adj_r = solve_adjoint(spec, ens_r, qn, options);

        const std::size_t N = cfg.particles, L = qn.grid().steps();
        StabilityRow row{n, 0.0, 0.0};
        for (std::size_t j = 0; j <= L; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t c = 0; c < adj_c.state_dim(); ++c) {
                    const double dv = adj_c.p(i, j)[c] - adj_r.p(i, j)[c];
                    s += dv * dv;
                }
            row.sup_sq_gap = std::max(row.sup_sq_gap, s / static_cast<double>(N));
        }
        for (std::size_t j = 0; j < L; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t c = 0; c < adj_c.z(i, j).size(); ++c) {
                    const double dv = adj_c.z(i, j)[c] - adj_r.z(i, j)[c];
                    s += dv * dv;
                }
            row.int_sq_gap += s / static_cast<double>(N) * qn.grid().dt();
        }
        rows.push_back(row);
    }
    return rows;
}

void write_summary_csv(std::ostream& os, const AdjointPath& adj) {
    const std::size_t n = adj.state_dim(), N = adj.particles(), L = adj.grid().steps();
    os << 't';
    for (std::size_t c = 0; c < n; ++c) os << ",mean_P_" << c;
    os << ",mean_sq_Z\n";
    for (std::size_t j = 0; j <= L; ++j) {
        os << fmt::format("{:.17g}", adj.grid().knot(j));
        for (double v : adj.mean_p(j)) os << fmt::format(",{:.17g}", v);
        double s = 0.0;
        if (j < L)
            for (std::size_t i = 0; i < N; ++i)
                for (double v : adj.z(i, j)) s += v * v;
        os << fmt::format(",{:.17g}\n", s / static_cast<double>(N));
    }
}

}  // namespace mfsmp
