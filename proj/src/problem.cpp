#include "mfsmp/problem.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

namespace mfsmp {

ControlSet::ControlSet(std::size_t dim, std::vector<double> points)
    : dim_(dim), points_(std::move(points)) {
    if (dim_ == 0) throw std::invalid_argument("control set dimension must be positive");
    if (points_.empty() || points_.size() % dim_ != 0)
        throw std::invalid_argument("control set must hold a nonempty list of points of equal dimension");
    for (double v : points_)
        if (!std::isfinite(v)) throw std::invalid_argument("control set points must be finite");
}

ControlSet ControlSet::uniform(double lo, double hi, std::size_t count) {
    if (count == 0) throw std::invalid_argument("control set needs at least one point");
    std::vector<double> pts(count);
    for (std::size_t i = 0; i < count; ++i)
        pts[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    return ControlSet(1, std::move(pts));
}

std::optional<std::size_t> ControlSet::index_of(ConstVec value) const {
    if (value.size() != dim_) return std::nullopt;
    for (std::size_t i = 0; i < size(); ++i) {
        auto p = point(i);
        bool same = true;
        for (std::size_t c = 0; c < dim_ && same; ++c) same = std::abs(p[c] - value[c]) <= 1e-12;
        if (same) return i;
    }
    return std::nullopt;
}

bool AnalyticDerivatives::any() const {
    return drift_x || drift_y || diffusion_x || diffusion_y || running_x || running_y || terminal_x ||
           terminal_y;
}

// ---------------------------------------------------------------------------
// Finite differences

namespace {

double fd_step(double v) { return 1e-6 * (1.0 + std::abs(v)); }

// out[i*dim + k] = d F_i / d arg_k where eval(arg, out_vec) writes F(arg).
template <class Eval>
void fd_jacobian(Eval&& eval, ConstVec arg, std::size_t out_dim, MutVec out) {
    const std::size_t dim = arg.size();
    std::vector<double> shifted(arg.begin(), arg.end());
    std::vector<double> plus(out_dim), minus(out_dim);
    for (std::size_t k = 0; k < dim; ++k) {
        const double h = fd_step(arg[k]);
        shifted[k] = arg[k] + h;
        eval(ConstVec(shifted), MutVec(plus));
        shifted[k] = arg[k] - h;
        eval(ConstVec(shifted), MutVec(minus));
        shifted[k] = arg[k];
        for (std::size_t i = 0; i < out_dim; ++i) out[i * dim + k] = (plus[i] - minus[i]) / (2.0 * h);
    }
}

}  // namespace

void Partials::fd_drift_x(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const {
    fd_jacobian([&](ConstVec xs, MutVec o) { spec_->drift(t, xs, y, u, o); }, x, spec_->dims.state, out);
}
void Partials::fd_drift_y(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const {
    fd_jacobian([&](ConstVec ys, MutVec o) { spec_->drift(t, x, ys, u, o); }, y, spec_->dims.state, out);
}
void Partials::fd_diffusion_x(double t, ConstVec x, ConstVec y, MutVec out) const {
    const std::size_t nd = spec_->dims.state * spec_->dims.noise;
    fd_jacobian([&](ConstVec xs, MutVec o) { spec_->diffusion(t, xs, y, o); }, x, nd, out);
}
void Partials::fd_diffusion_y(double t, ConstVec x, ConstVec y, MutVec out) const {
    const std::size_t nd = spec_->dims.state * spec_->dims.noise;
    fd_jacobian([&](ConstVec ys, MutVec o) { spec_->diffusion(t, x, ys, o); }, y, nd, out);
}
void Partials::fd_running_x(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const {
    fd_jacobian([&](ConstVec xs, MutVec o) { o[0] = spec_->running_cost(t, xs, y, u); }, x, 1, out);
}
void Partials::fd_running_y(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const {
    fd_jacobian([&](ConstVec ys, MutVec o) { o[0] = spec_->running_cost(t, x, ys, u); }, y, 1, out);
}
void Partials::fd_terminal_x(ConstVec x, ConstVec y, MutVec out) const {
    fd_jacobian([&](ConstVec xs, MutVec o) { o[0] = spec_->terminal_cost(xs, y); }, x, 1, out);
}
void Partials::fd_terminal_y(ConstVec x, ConstVec y, MutVec out) const {
    fd_jacobian([&](ConstVec ys, MutVec o) { o[0] = spec_->terminal_cost(x, ys); }, y, 1, out);
}

void Partials::drift_x(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const {
    if (spec_->derivatives.drift_x) spec_->derivatives.drift_x(t, x, y, u, out);
    else fd_drift_x(t, x, y, u, out);
}
void Partials::drift_y(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const {
    if (spec_->derivatives.drift_y) spec_->derivatives.drift_y(t, x, y, u, out);
    else fd_drift_y(t, x, y, u, out);
}
void Partials::diffusion_x(double t, ConstVec x, ConstVec y, MutVec out) const {
    if (spec_->derivatives.diffusion_x) spec_->derivatives.diffusion_x(t, x, y, out);
    else fd_diffusion_x(t, x, y, out);
}
void Partials::diffusion_y(double t, ConstVec x, ConstVec y, MutVec out) const {
    if (spec_->derivatives.diffusion_y) spec_->derivatives.diffusion_y(t, x, y, out);
    else fd_diffusion_y(t, x, y, out);
}
void Partials::running_x(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const {
    if (spec_->derivatives.running_x) spec_->derivatives.running_x(t, x, y, u, out);
    else fd_running_x(t, x, y, u, out);
}
void Partials::running_y(double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) const {
    if (spec_->derivatives.running_y) spec_->derivatives.running_y(t, x, y, u, out);
    else fd_running_y(t, x, y, u, out);
}
void Partials::terminal_x(ConstVec x, ConstVec y, MutVec out) const {
    if (spec_->derivatives.terminal_x) spec_->derivatives.terminal_x(x, y, out);
    else fd_terminal_x(x, y, out);
}
void Partials::terminal_y(ConstVec x, ConstVec y, MutVec out) const {
    if (spec_->derivatives.terminal_y) spec_->derivatives.terminal_y(x, y, out);
    else fd_terminal_y(x, y, out);
}

// ---------------------------------------------------------------------------
// Assumption probes

namespace {

double norm(ConstVec v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double max_abs(ConstVec v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

bool all_finite(ConstVec v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Uniform sample from the ball of radius `radius` in R^dim.
std::vector<double> sample_ball(std::mt19937_64& rng, std::size_t dim, double radius) {
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif;
    std::vector<double> v(dim);
    double s = 0.0;
    for (auto& c : v) {
        c = gauss(rng);
        s += c * c;
    }
    s = std::sqrt(s);
    const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(dim));
    for (auto& c : v) c = s > 0.0 ? c / s * r : 0.0;
    return v;
}

struct Probe {
    double t;
    std::vector<double> x, y;
    std::size_t control;
};

// Relative disagreement with a unit floor, so exactly-zero partials compare sanely.
double rel_gap(double a, double b) { return std::abs(a - b) / (1.0 + std::max(std::abs(a), std::abs(b))); }

}  // namespace

AssumptionReport validate_spec(const ProblemSpec& spec, std::size_t probes, double box_radius,
                               std::uint64_t seed) {
    if (probes < 1) throw std::invalid_argument("validate_spec: probes must be >= 1");
    if (!(box_radius > 0.0)) throw std::invalid_argument("validate_spec: box_radius must be positive");
    if (spec.control_set.size() == 0) throw std::invalid_argument("validate_spec: control set is empty");

    const auto& dm = spec.dims;
    const std::size_t n = dm.state, nd = dm.state * dm.noise, nm = dm.state * dm.singular;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif;

    std::vector<Probe> pts(probes);
    for (auto& p : pts) {
        p.t = spec.horizon * unif(rng);
        p.x = sample_ball(rng, n, box_radius);
        p.y = sample_ball(rng, n, box_radius);
        p.control = static_cast<std::size_t>(unif(rng) * static_cast<double>(spec.control_set.size()));
        p.control = std::min(p.control, spec.control_set.size() - 1);
    }

    Partials partials(spec);
    std::vector<double> b(n), sig(nd), g(nm), phi(dm.singular);
    auto ill_posed = [&](const char* what, const Probe& p) {
        return IllPosedError(fmt::format("non-finite {} at probe t={} |x|={} |y|={}", what, p.t, norm(p.x),
                                         norm(p.y)));
    };

    // Finiteness of every coefficient on every probe.
    double sup_b = 0.0, sup_h = 0.0, sup_g = 0.0;
    for (const auto& p : pts) {
        auto u = spec.control_set.point(p.control);
        spec.drift(p.t, p.x, p.y, u, b);
        if (!all_finite(b)) throw ill_posed("drift", p);
        spec.diffusion(p.t, p.x, p.y, sig);
        if (!all_finite(sig)) throw ill_posed("diffusion", p);
        spec.singular_gain(p.t, g);
        if (!all_finite(g)) throw ill_posed("singular gain", p);
        spec.singular_cost(p.t, phi);
        if (!all_finite(phi)) throw ill_posed("singular cost", p);
        const double f = spec.running_cost(p.t, p.x, p.y, u);
        const double h = spec.terminal_cost(p.x, p.y);
        if (!std::isfinite(f)) throw ill_posed("running cost", p);
        if (!std::isfinite(h)) throw ill_posed("terminal cost", p);
        sup_b = std::max(sup_b, norm(b));
        sup_h = std::max(sup_h, std::abs(h));
        sup_g = std::max(sup_g, max_abs(g));
    }

    AssumptionReport report;
    report.seed = seed;
    report.probes = probes;
    report.box_radius = box_radius;

    // (H1) partials exist, are finite, vary continuously, and match analytic ones.
    {
        AssumptionCheck check{"H1", "finite-difference partials of b, sigma, f, h: finiteness, continuity under "
                                    "1e-3 shifts, agreement with analytic partials (1e-4 relative)",
                              true, 0.0};
        std::vector<double> a1(nd * n), a2(nd * n), f1(nd * n), f2(nd * n);
        std::vector<double> xs, ys;
        double worst_analytic = 0.0, worst_cont = 0.0;
        for (const auto& p : pts) {
            auto u = spec.control_set.point(p.control);
            xs = p.x;
            ys = p.y;
            for (std::size_t k = 0; k < n; ++k) {
                xs[k] += 1e-3 * (1.0 + std::abs(p.x[k]));
                ys[k] += 1e-3 * (1.0 + std::abs(p.y[k]));
            }
            auto compare = [&](auto&& fd, auto&& analytic, bool has_analytic, std::size_t size) {
                MutVec F1(f1.data(), size), F2(f2.data(), size), A1(a1.data(), size);
                fd(p.x, p.y, F1);
                fd(xs, ys, F2);
                if (!all_finite(F1) || !all_finite(F2)) {
                    check.passed = false;
                    worst_cont = std::numeric_limits<double>::infinity();
                    return;
                }
                for (std::size_t i = 0; i < size; ++i) worst_cont = std::max(worst_cont, rel_gap(F1[i], F2[i]));
                if (has_analytic) {
                    analytic(p.x, p.y, A1);
                    for (std::size_t i = 0; i < size; ++i)
                        worst_analytic = std::max(worst_analytic, rel_gap(A1[i], F1[i]));
                }
            };
            const auto& d = spec.derivatives;
            compare([&](ConstVec x, ConstVec y, MutVec o) { partials.fd_drift_x(p.t, x, y, u, o); },
                    [&](ConstVec x, ConstVec y, MutVec o) { d.drift_x(p.t, x, y, u, o); }, bool(d.drift_x), n * n);
            compare([&](ConstVec x, ConstVec y, MutVec o) { partials.fd_drift_y(p.t, x, y, u, o); },
                    [&](ConstVec x, ConstVec y, MutVec o) { d.drift_y(p.t, x, y, u, o); }, bool(d.drift_y), n * n);
            compare([&](ConstVec x, ConstVec y, MutVec o) { partials.fd_diffusion_x(p.t, x, y, o); },
                    [&](ConstVec x, ConstVec y, MutVec o) { d.diffusion_x(p.t, x, y, o); }, bool(d.diffusion_x),
                    nd * n);
            compare([&](ConstVec x, ConstVec y, MutVec o) { partials.fd_diffusion_y(p.t, x, y, o); },
                    [&](ConstVec x, ConstVec y, MutVec o) { d.diffusion_y(p.t, x, y, o); }, bool(d.diffusion_y),
                    nd * n);
            compare([&](ConstVec x, ConstVec y, MutVec o) { partials.fd_running_x(p.t, x, y, u, o); },
                    [&](ConstVec x, ConstVec y, MutVec o) { d.running_x(p.t, x, y, u, o); }, bool(d.running_x), n);
            compare([&](ConstVec x, ConstVec y, MutVec o) { partials.fd_running_y(p.t, x, y, u, o); },
                    [&](ConstVec x, ConstVec y, MutVec o) { d.running_y(p.t, x, y, u, o); }, bool(d.running_y), n);
            compare([&](ConstVec x, ConstVec y, MutVec o) { partials.fd_terminal_x(x, y, o); },
                    [&](ConstVec x, ConstVec y, MutVec o) { d.terminal_x(x, y, o); }, bool(d.terminal_x), n);
            compare([&](ConstVec x, ConstVec y, MutVec o) { partials.fd_terminal_y(x, y, o); },
                    [&](ConstVec x, ConstVec y, MutVec o) { d.terminal_y(x, y, o); }, bool(d.terminal_y), n);
        }
        if (worst_analytic > 1e-4) check.passed = false;
        if (worst_cont > 0.1) check.passed = false;
        check.worst_residual = std::max(worst_analytic, worst_cont);
        report.checks.push_back(check);
    }

    // (H2) linear growth: the fitted constant must not blow up between the two
    // largest dyadic radii.
    {
        AssumptionCheck check{"H2", "growth ratio |b|/(1+|x|+|y|+|u|), |sigma|/(1+|x|+|y|) between radii R and R/2",
                              true, 0.0};
        auto fitted = [&](double radius, bool drift) {
            double worst = 0.0;
            for (const auto& p : pts) {
                const double nx = norm(p.x), ny = norm(p.y);
                std::vector<double> x = p.x, y = p.y;
                // Same directions at every radius, magnitudes rescaled so the
                // largest probe sits on the sphere of the given radius.
                const double s = radius / box_radius;
                for (auto& c : x) c *= s;
                for (auto& c : y) c *= s;
                auto u = spec.control_set.point(p.control);
                if (drift) {
                    spec.drift(p.t, x, y, u, b);
                    worst = std::max(worst, norm(b) / (1.0 + s * nx + s * ny + norm(u)));
                } else {
                    spec.diffusion(p.t, x, y, sig);
                    worst = std::max(worst, norm(sig) / (1.0 + s * nx + s * ny));
                }
            }
            return worst;
        };
        for (bool drift : {true, false}) {
            const double outer = fitted(box_radius, drift);
            const double inner = fitted(0.5 * box_radius, drift);
            double ratio = 0.0;
            if (!std::isfinite(outer) || !std::isfinite(inner)) ratio = std::numeric_limits<double>::infinity();
            else if (inner > 0.0) ratio = outer / inner;
            else if (outer > 0.0) ratio = std::numeric_limits<double>::infinity();
            check.worst_residual = std::max(check.worst_residual, ratio);
            if (ratio > 1.5) check.passed = false;
        }
        report.checks.push_back(check);
    }

    // (H3) G bounded on [0,T].
    report.checks.push_back(AssumptionCheck{"H3", "sup |G(t)| over probe times", std::isfinite(sup_g) && sup_g < 1e12,
                                            sup_g});
    // (H4) b and h bounded over the probe box.
    report.checks.push_back(AssumptionCheck{"H4", "sup |b| and sup |h| over the probe box",
                                            std::isfinite(sup_b) && std::isfinite(sup_h),
                                            std::max(sup_b, sup_h)});

    report.passed = std::all_of(report.checks.begin(), report.checks.end(),
                                [](const AssumptionCheck& c) { return c.passed; });
    return report;
}

// ---------------------------------------------------------------------------
// Builtins

namespace {

void fill(MutVec out, double v) { std::fill(out.begin(), out.end(), v); }

}  // namespace

ProblemSpec builtin_lq(const LqParameters& p, double phi, double x0, double horizon, std::size_t control_points,
                       double control_bound) {
    ProblemSpec s;
    s.name = "lq";
    s.dims = {1, 1, 1, 1};
    s.horizon = horizon;
    s.x0 = {x0};
    s.drift = [p](double, ConstVec x, ConstVec y, ConstVec u, MutVec out) {
        out[0] = p.a * x[0] + p.abar * y[0] + p.c * u[0];
    };
    s.diffusion = [p](double, ConstVec, ConstVec, MutVec out) { out[0] = p.sigma; };
    s.singular_gain = [](double, MutVec out) { out[0] = 1.0; };
    s.running_cost = [p](double, ConstVec x, ConstVec, ConstVec u) {
        return 0.5 * (p.q * x[0] * x[0] + p.r * u[0] * u[0]);
    };
    s.terminal_cost = [p](ConstVec x, ConstVec) { return 0.5 * p.qT * x[0] * x[0]; };
    s.singular_cost = [phi](double, MutVec out) { out[0] = phi; };
    s.control_set = ControlSet::uniform(-control_bound, control_bound, control_points);

    auto& d = s.derivatives;
    d.drift_x = [p](double, ConstVec, ConstVec, ConstVec, MutVec out) { out[0] = p.a; };
    d.drift_y = [p](double, ConstVec, ConstVec, ConstVec, MutVec out) { out[0] = p.abar; };
    d.diffusion_x = [](double, ConstVec, ConstVec, MutVec out) { fill(out, 0.0); };
    d.diffusion_y = [](double, ConstVec, ConstVec, MutVec out) { fill(out, 0.0); };
    d.running_x = [p](double, ConstVec x, ConstVec, ConstVec, MutVec out) { out[0] = p.q * x[0]; };
    d.running_y = [](double, ConstVec, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.terminal_x = [p](ConstVec x, ConstVec, MutVec out) { out[0] = p.qT * x[0]; };
    d.terminal_y = [](ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };

    s.lq = p;
    s.parameters = {{"builtin", "lq"},   {"a", p.a},         {"abar", p.abar},
                    {"c", p.c},          {"sigma", p.sigma}, {"q", p.q},
                    {"r", p.r},          {"qT", p.qT},       {"phi", phi},
                    {"x0", x0},          {"horizon", horizon},
                    {"control_points", control_points},      {"control_bound", control_bound}};
    return s;
}

ProblemSpec builtin_lq_cubic(double cubic, const LqParameters& p) {
    ProblemSpec s = builtin_lq(p);
    s.name = "lq-cubic";
    s.drift = [p, cubic](double, ConstVec x, ConstVec y, ConstVec u, MutVec out) {
        out[0] = p.a * x[0] + p.abar * y[0] + p.c * u[0] + cubic * x[0] * x[0] * x[0];
    };
    s.derivatives.drift_x = [p, cubic](double, ConstVec x, ConstVec, ConstVec, MutVec out) {
        out[0] = p.a + 3.0 * cubic * x[0] * x[0];
    };
    s.lq.reset();
    s.parameters["builtin"] = "lq-cubic";
    s.parameters["cubic"] = cubic;
    return s;
}

ProblemSpec builtin_oscillating() {
    ProblemSpec s;
    s.name = "oscillating";
    s.dims = {1, 1, 1, 1};
    s.horizon = 1.0;
    s.x0 = {0.0};
    s.drift = [](double, ConstVec, ConstVec, ConstVec u, MutVec out) { out[0] = u[0]; };
    s.diffusion = [](double, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    s.singular_gain = [](double, MutVec out) { out[0] = 0.0; };
    s.running_cost = [](double, ConstVec x, ConstVec, ConstVec) { return x[0] * x[0]; };
    s.terminal_cost = [](ConstVec, ConstVec) { return 0.0; };
    s.singular_cost = [](double, MutVec out) { out[0] = 0.0; };
    s.control_set = ControlSet(1, {-1.0, 1.0});

    auto& d = s.derivatives;
    d.drift_x = [](double, ConstVec, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.drift_y = [](double, ConstVec, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.diffusion_x = [](double, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.diffusion_y = [](double, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.running_x = [](double, ConstVec x, ConstVec, ConstVec, MutVec out) { out[0] = 2.0 * x[0]; };
    d.running_y = [](double, ConstVec, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.terminal_x = [](ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.terminal_y = [](ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    s.parameters = {{"builtin", "oscillating"}, {"x0", 0.0}, {"horizon", 1.0}};
    return s;
}

ProblemSpec builtin_singular(double sigma, double gain, double phi, double x0) {
    ProblemSpec s;
    s.name = "singular";
    s.dims = {1, 1, 1, 1};
    s.horizon = 1.0;
    s.x0 = {x0};
    s.drift = [](double, ConstVec, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    s.diffusion = [sigma](double, ConstVec, ConstVec, MutVec out) { out[0] = sigma; };
    s.singular_gain = [gain](double, MutVec out) { out[0] = gain; };
    s.running_cost = [](double, ConstVec x, ConstVec, ConstVec) { return x[0] * x[0]; };
    s.terminal_cost = [](ConstVec, ConstVec) { return 0.0; };
    s.singular_cost = [phi](double, MutVec out) { out[0] = phi; };
    s.control_set = ControlSet(1, {0.0});

    auto& d = s.derivatives;
    d.drift_x = [](double, ConstVec, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.drift_y = [](double, ConstVec, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.diffusion_x = [](double, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.diffusion_y = [](double, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.running_x = [](double, ConstVec x, ConstVec, ConstVec, MutVec out) { out[0] = 2.0 * x[0]; };
    d.running_y = [](double, ConstVec, ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.terminal_x = [](ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    d.terminal_y = [](ConstVec, ConstVec, MutVec out) { out[0] = 0.0; };
    s.parameters = {{"builtin", "singular"}, {"sigma", sigma}, {"gain", gain},
                    {"phi", phi},            {"x0", x0},       {"horizon", 1.0}};
    return s;
}

ProblemSpec scale_costs(const ProblemSpec& spec, double factor) {
    ProblemSpec s = spec;
    auto f = spec.running_cost;
    auto h = spec.terminal_cost;
    auto phi = spec.singular_cost;
    s.running_cost = [f, factor](double t, ConstVec x, ConstVec y, ConstVec u) { return factor * f(t, x, y, u); };
    s.terminal_cost = [h, factor](ConstVec x, ConstVec y) { return factor * h(x, y); };
    s.singular_cost = [phi, factor](double t, MutVec out) {
        phi(t, out);
        for (auto& v : out) v *= factor;
    };
    auto scale_running = [factor](RunningPartialFn g) -> RunningPartialFn {
        if (!g) return {};
        return [g, factor](double t, ConstVec x, ConstVec y, ConstVec u, MutVec out) {
            g(t, x, y, u, out);
            for (auto& v : out) v *= factor;
        };
    };
    auto scale_terminal = [factor](TerminalPartialFn g) -> TerminalPartialFn {
        if (!g) return {};
        return [g, factor](ConstVec x, ConstVec y, MutVec out) {
            g(x, y, out);
            for (auto& v : out) v *= factor;
        };
    };
    s.derivatives.running_x = scale_running(spec.derivatives.running_x);
    s.derivatives.running_y = scale_running(spec.derivatives.running_y);
    s.derivatives.terminal_x = scale_terminal(spec.derivatives.terminal_x);
    s.derivatives.terminal_y = scale_terminal(spec.derivatives.terminal_y);
    if (s.lq) {
        s.lq->q *= factor;
        s.lq->r *= factor;
        s.lq->qT *= factor;
    }
    s.parameters["cost_scale"] = factor;
    return s;
}

// ---------------------------------------------------------------------------
// JSON loading

namespace {

double get_number(const nlohmann::json& overrides, const char* key, double fallback) {
    if (!overrides.contains(key)) return fallback;
    const auto& v = overrides.at(key);
    if (!v.is_number()) throw ConfigError(fmt::format("override '{}' must be a number", key));
    return v.get<double>();
}

void reject_unknown(const nlohmann::json& overrides, std::initializer_list<const char*> allowed) {
    for (auto it = overrides.begin(); it != overrides.end(); ++it) {
        bool known = false;
        for (const char* a : allowed) known = known || it.key() == a;
        if (!known) throw ConfigError(fmt::format("unknown override '{}'", it.key()));
    }
}

}  // namespace

ProblemSpec load_problem(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("builtin") || !doc.at("builtin").is_string())
        throw ConfigError("problem document must be an object with a string 'builtin'");
    const auto name = doc.at("builtin").get<std::string>();
    nlohmann::json ov = doc.value("overrides", nlohmann::json::object());
    if (!ov.is_object()) throw ConfigError("'overrides' must be an object");

    ProblemSpec spec;
    if (name == "lq" || name == "lq-cubic") {
        reject_unknown(ov, {"horizon", "x0", "a", "abar", "c", "sigma", "q", "r", "qT", "phi", "control_points",
                            "control_bound", "cubic"});
        LqParameters p;
        p.a = get_number(ov, "a", p.a);
        p.abar = get_number(ov, "abar", p.abar);
        p.c = get_number(ov, "c", p.c);
        p.sigma = get_number(ov, "sigma", p.sigma);
        p.q = get_number(ov, "q", p.q);
        p.r = get_number(ov, "r", p.r);
        p.qT = get_number(ov, "qT", p.qT);
        const double points = get_number(ov, "control_points", 41);
        if (points < 1 || points != std::floor(points)) throw ConfigError("control_points must be a positive integer");
        spec = builtin_lq(p, get_number(ov, "phi", 10.0), get_number(ov, "x0", 1.0), get_number(ov, "horizon", 1.0),
                          static_cast<std::size_t>(points), get_number(ov, "control_bound", 2.0));
        if (name == "lq-cubic") {
            const double cubic = get_number(ov, "cubic", 0.1);
            ProblemSpec cub = builtin_lq_cubic(cubic, p);
            cub.x0 = spec.x0;
            cub.horizon = spec.horizon;
            cub.singular_cost = spec.singular_cost;
            cub.control_set = spec.control_set;
            cub.parameters = spec.parameters;
            cub.parameters["builtin"] = "lq-cubic";
            cub.parameters["cubic"] = cubic;
            spec = std::move(cub);
        } else if (ov.contains("cubic")) {
            throw ConfigError("override 'cubic' only applies to builtin 'lq-cubic'");
        }
    } else if (name == "oscillating") {
        reject_unknown(ov, {"horizon", "x0"});
        spec = builtin_oscillating();
        spec.horizon = get_number(ov, "horizon", 1.0);
        spec.x0 = {get_number(ov, "x0", 0.0)};
        spec.parameters["horizon"] = spec.horizon;
        spec.parameters["x0"] = spec.x0[0];
    } else if (name == "singular") {
        reject_unknown(ov, {"horizon", "x0", "sigma", "gain", "phi"});
        spec = builtin_singular(get_number(ov, "sigma", 0.1), get_number(ov, "gain", -1.0),
                                get_number(ov, "phi", 0.5), get_number(ov, "x0", 2.0));
        spec.horizon = get_number(ov, "horizon", 1.0);
        spec.parameters["horizon"] = spec.horizon;
    } else {
        throw UnknownBuiltinError(fmt::format("unknown builtin problem '{}'", name));
    }
    if (!(spec.horizon > 0.0)) throw ConfigError("horizon must be positive");
    return spec;
}

}  // namespace mfsmp
