#include "mfsmp/paths.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include <fmt/format.h>

namespace mfsmp {

TimeGrid::TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("time grid horizon must be positive");
    if (steps == 0) throw std::invalid_argument("time grid needs at least one step");
}

double TimeGrid::knot(std::size_t j) const {
    if (j == steps_) return horizon_;
    return horizon_ * static_cast<double>(j) / static_cast<double>(steps_);
}

namespace {

void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* what) {
    if (!(a == b))
        throw MismatchError(fmt::format("{}: grid mismatch (T={} L={} vs T={} L={})", what, a.horizon(), a.steps(),
                                        b.horizon(), b.steps()));
}

}  // namespace

// ---------------------------------------------------------------------------

StrictControlPath::StrictControlPath(TimeGrid grid, std::size_t dim, std::vector<double> values)
    : grid_(grid), dim_(dim), values_(std::move(values)) {
    if (dim_ == 0) throw std::invalid_argument("control dimension must be positive");
    if (values_.size() != grid_.steps() * dim_)
        throw std::invalid_argument(fmt::format("strict control needs {} values, got {}", grid_.steps() * dim_,
                                                values_.size()));
    for (double v : values_)
        if (!std::isfinite(v)) throw std::invalid_argument("strict control values must be finite");
}

StrictControlPath StrictControlPath::constant(const TimeGrid& grid, ConstVec value) {
    std::vector<double> vals;
    vals.reserve(grid.steps() * value.size());
    for (std::size_t j = 0; j < grid.steps(); ++j) vals.insert(vals.end(), value.begin(), value.end());
    return StrictControlPath(grid, value.size(), std::move(vals));
}

void StrictControlPath::require_in(const ControlSet& set) const {
    if (set.dim() != dim_) throw MismatchError("control dimension differs from control set dimension");
    for (std::size_t j = 0; j < grid_.steps(); ++j)
        if (!set.index_of(value(j)))
            throw MismatchError(fmt::format("control value at interval {} is not in the control set", j));
}

// ---------------------------------------------------------------------------

SingularControlPath::SingularControlPath(TimeGrid grid, std::size_t dim, std::vector<double> initial_jump,
                                         std::vector<double> increments)
    : grid_(grid), dim_(dim), initial_jump_(std::move(initial_jump)), increments_(std::move(increments)) {
    if (dim_ == 0) throw std::invalid_argument("singular control dimension must be positive");
    if (initial_jump_.size() != dim_) throw std::invalid_argument("initial jump has wrong dimension");
    if (increments_.size() != grid_.steps() * dim_)
        throw std::invalid_argument(fmt::format("singular control needs {} increments, got {}",
                                                grid_.steps() * dim_, increments_.size()));
    for (double v : initial_jump_)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("singular control must be nondecreasing: negative or non-finite jump at 0");
    for (std::size_t i = 0; i < increments_.size(); ++i)
        if (!(increments_[i] >= 0.0) || !std::isfinite(increments_[i]))
            throw std::invalid_argument(
                fmt::format("singular control must be nondecreasing: increment {} on interval {} is {}", i % dim_,
                            i / dim_, increments_[i]));
}

SingularControlPath SingularControlPath::zero(const TimeGrid& grid, std::size_t dim) {
    return SingularControlPath(grid, dim, std::vector<double>(dim, 0.0), std::vector<double>(grid.steps() * dim, 0.0));
}

SingularControlPath SingularControlPath::jump_at_zero(const TimeGrid& grid, ConstVec jump) {
    return SingularControlPath(grid, jump.size(), std::vector<double>(jump.begin(), jump.end()),
                               std::vector<double>(grid.steps() * jump.size(), 0.0));
}

std::vector<double> SingularControlPath::level(std::size_t j) const {
    if (j > grid_.steps()) throw std::out_of_range("singular level index out of range");
    std::vector<double> out = initial_jump_;
    for (std::size_t s = 0; s < j; ++s)
        for (std::size_t c = 0; c < dim_; ++c) out[c] += increments_[s * dim_ + c];
    return out;
}

bool SingularControlPath::is_zero() const {
    auto z = [](double v) { return v == 0.0; };
    return std::all_of(initial_jump_.begin(), initial_jump_.end(), z) &&
           std::all_of(increments_.begin(), increments_.end(), z);
}

// ---------------------------------------------------------------------------

RelaxedControlPath::RelaxedControlPath(TimeGrid grid, ControlSet set, std::vector<double> weights)
    : grid_(grid), set_(std::move(set)), weights_(std::move(weights)) {
    const std::size_t K = set_.size();
    if (K == 0) throw std::invalid_argument("relaxed control needs a nonempty control set");
    if (weights_.size() != grid_.steps() * K)
        throw std::invalid_argument(fmt::format("relaxed control needs {} weights, got {}", grid_.steps() * K,
                                                weights_.size()));
    for (std::size_t j = 0; j < grid_.steps(); ++j) {
        double sum = 0.0;
        for (std::size_t a = 0; a < K; ++a) {
            const double w = weights_[j * K + a];
            if (!(w >= 0.0)) throw std::invalid_argument(fmt::format("negative relaxed weight on interval {}", j));
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw std::invalid_argument(fmt::format("relaxed weights on interval {} sum to {}, not 1", j, sum));
    }
}

RelaxedControlPath RelaxedControlPath::uniform(const TimeGrid& grid, const ControlSet& set) {
    const std::size_t K = set.size();
    return RelaxedControlPath(grid, set, std::vector<double>(grid.steps() * K, 1.0 / static_cast<double>(K)));
}

// ---------------------------------------------------------------------------

StrictControlPath spike_variation(const StrictControlPath& u, const PerturbationParams& p) {
    const auto& g = u.grid();
    const double T = g.horizon(), dt = g.dt();
    const double tol = 1e-9 * dt;
    if (p.v.size() != u.dim()) throw MismatchError("spike value has wrong dimension");
    if (!(p.epsilon > 0.0)) throw std::invalid_argument("spike width must be positive");
    if (p.tau < -tol || p.tau + p.epsilon > T + tol)
        throw std::invalid_argument(fmt::format("spike window [{}, {}] leaves [0, {}]", p.tau, p.tau + p.epsilon, T));
    if (p.epsilon < dt - tol)
        throw std::invalid_argument(
            fmt::format("spike unresolvable on grid: epsilon {} is smaller than one step {}", p.epsilon, dt));
    std::vector<double> vals = u.values();
    const std::size_t k = u.dim();
    for (std::size_t j = 0; j < g.steps(); ++j) {
        const double t = g.knot(j);
        if (t >= p.tau - tol && t < p.tau + p.epsilon - tol)
            std::copy(p.v.begin(), p.v.end(), vals.begin() + static_cast<std::ptrdiff_t>(j * k));
    }
    return StrictControlPath(g, k, std::move(vals));
}

StrictControlPath spike_variation(const StrictControlPath& u, const PerturbationParams& p, const ControlSet& set) {
    if (!set.index_of(p.v)) throw MismatchError("spike value is not a point of the control set");
    return spike_variation(u, p);
}

SingularControlPath convex_perturbation(const SingularControlPath& eta, const SingularControlPath& xi, double alpha) {
    require_same_grid(eta.grid(), xi.grid(), "convex_perturbation");
    if (eta.dim() != xi.dim()) throw MismatchError("convex_perturbation: dimension mismatch");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("convex weight alpha must lie in [0, 1]");
    auto mix = [alpha](double a, double b) { return (1.0 - alpha) * a + alpha * b; };
    std::vector<double> jump(eta.dim()), inc(eta.increments().size());
    for (std::size_t c = 0; c < eta.dim(); ++c) jump[c] = mix(eta.initial_jump()[c], xi.initial_jump()[c]);
    for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = mix(eta.increments()[i], xi.increments()[i]);
    return SingularControlPath(eta.grid(), eta.dim(), std::move(jump), std::move(inc));
}

RelaxedControlPath embed_strict(const StrictControlPath& u, const ControlSet& set) {
    if (set.dim() != u.dim()) throw MismatchError("embed_strict: control dimension differs from control set");
    const std::size_t K = set.size(), L = u.grid().steps();
    std::vector<double> w(L * K, 0.0);
    for (std::size_t j = 0; j < L; ++j) {
        auto idx = set.index_of(u.value(j));
        if (!idx) throw MismatchError(fmt::format("embed_strict: value on interval {} is not in the control set", j));
        w[j * K + *idx] = 1.0;
    }
    return RelaxedControlPath(u.grid(), set, std::move(w));
}

StrictControlPath chattering(const RelaxedControlPath& q, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("chattering resolution must be positive");
    const auto& set = q.control_set();
    const std::size_t K = set.size(), L = q.grid().steps(), k = set.dim();

    // One seeded tie-break order shared by all intervals.
    std::vector<std::size_t> tiebreak(K);
    std::iota(tiebreak.begin(), tiebreak.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(tiebreak.begin(), tiebreak.end(), rng);
    std::vector<std::size_t> tie_rank(K);
    for (std::size_t r = 0; r < K; ++r) tie_rank[tiebreak[r]] = r;

    std::vector<double> vals;
    vals.reserve(L * n * k);
    std::vector<std::size_t> count(K), order(K);
    std::vector<double> rem(K);
    for (std::size_t j = 0; j < L; ++j) {
        auto w = q.weights(j);
        std::size_t assigned = 0;
        for (std::size_t a = 0; a < K; ++a) {
            const double exact = w[a] * static_cast<double>(n);
            count[a] = static_cast<std::size_t>(std::floor(exact));
            rem[a] = exact - static_cast<double>(count[a]);
            assigned += count[a];
        }
        // Largest remainders receive the leftover micro-intervals.
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (rem[a] != rem[b]) return rem[a] > rem[b];
            return tie_rank[a] < tie_rank[b];
        });
        for (std::size_t r = 0; assigned < n && r < K; ++r, ++assigned) ++count[order[r]];

        // Round-robin by weight rank.
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (count[a] != count[b]) return count[a] > count[b];
            return tie_rank[a] < tie_rank[b];
        });
        std::size_t placed = 0;
        while (placed < n) {
            for (std::size_t r = 0; r < K && placed < n; ++r) {
                const std::size_t a = order[r];
                if (count[a] == 0) continue;
                --count[a];
                ++placed;
                auto pt = set.point(a);
                vals.insert(vals.end(), pt.begin(), pt.end());
            }
        }
    }
    return StrictControlPath(q.grid().refine(n), k, std::move(vals));
}

double weak_distance(const RelaxedControlPath& q1, const RelaxedControlPath& q2, std::size_t grid_coarsening) {
    if (!(q1.control_set() == q2.control_set())) throw MismatchError("weak_distance: control sets differ");
    if (grid_coarsening == 0) throw std::invalid_argument("weak_distance: window must span at least one step");
    if (std::abs(q1.grid().horizon() - q2.grid().horizon()) > 1e-12 * q1.grid().horizon())
        throw MismatchError("weak_distance: horizons differ");
    const std::size_t L1 = q1.grid().steps(), L2 = q2.grid().steps();
    const std::size_t Lc = std::min(L1, L2);
    if (std::max(L1, L2) % Lc != 0) throw MismatchError("weak_distance: grids are not nested");
    const std::size_t r1 = L1 / Lc, r2 = L2 / Lc, K = q1.points();

    double worst = 0.0;
    std::vector<double> a1(K), a2(K);
    for (std::size_t start = 0; start < Lc; start += grid_coarsening) {
        const std::size_t stop = std::min(Lc, start + grid_coarsening);
        std::fill(a1.begin(), a1.end(), 0.0);
        std::fill(a2.begin(), a2.end(), 0.0);
        for (std::size_t j = start * r1; j < stop * r1; ++j)
            for (std::size_t a = 0; a < K; ++a) a1[a] += q1.weights(j)[a];
        for (std::size_t j = start * r2; j < stop * r2; ++j)
            for (std::size_t a = 0; a < K; ++a) a2[a] += q2.weights(j)[a];
        const double n1 = static_cast<double>((stop - start) * r1), n2 = static_cast<double>((stop - start) * r2);
        double tv = 0.0;
        for (std::size_t a = 0; a < K; ++a) tv += std::abs(a1[a] / n1 - a2[a] / n2);
        worst = std::max(worst, 0.5 * tv);
    }
    return worst;
}

double metric_d1(const StrictControlPath& u, const StrictControlPath& v) {
    require_same_grid(u.grid(), v.grid(), "metric_d1");
    if (u.dim() != v.dim()) throw MismatchError("metric_d1: dimension mismatch");
    std::size_t differing = 0;
    for (std::size_t j = 0; j < u.grid().steps(); ++j) {
        auto a = u.value(j), b = v.value(j);
        if (!std::equal(a.begin(), a.end(), b.begin())) ++differing;
    }
    return static_cast<double>(differing) / static_cast<double>(u.grid().steps());
}

double metric_d2(const SingularControlPath& eta, const SingularControlPath& xi) {
    require_same_grid(eta.grid(), xi.grid(), "metric_d2");
    if (eta.dim() != xi.dim()) throw MismatchError("metric_d2: dimension mismatch");
    const std::size_t m = eta.dim();
    std::vector<double> diff(m);
    for (std::size_t c = 0; c < m; ++c) diff[c] = eta.initial_jump()[c] - xi.initial_jump()[c];
    auto norm = [&] {
        double s = 0.0;
        for (double d : diff) s += d * d;
        return std::sqrt(s);
    };
    double worst = norm();
    for (std::size_t j = 0; j < eta.grid().steps(); ++j) {
        for (std::size_t c = 0; c < m; ++c) diff[c] += eta.increment(j)[c] - xi.increment(j)[c];
        worst = std::max(worst, norm());
    }
    return worst;
}

StrictControlPath refine(const StrictControlPath& u, std::size_t n) {
    if (n == 0) throw std::invalid_argument("refinement factor must be positive");
    std::vector<double> vals;
    vals.reserve(u.values().size() * n);
    for (std::size_t j = 0; j < u.grid().steps(); ++j)
        for (std::size_t s = 0; s < n; ++s) vals.insert(vals.end(), u.value(j).begin(), u.value(j).end());
    return StrictControlPath(u.grid().refine(n), u.dim(), std::move(vals));
}

SingularControlPath refine(const SingularControlPath& eta, std::size_t n) {
    if (n == 0) throw std::invalid_argument("refinement factor must be positive");
    const std::size_t m = eta.dim();
    std::vector<double> inc(eta.increments().size() * n, 0.0);
    for (std::size_t j = 0; j < eta.grid().steps(); ++j)
        for (std::size_t c = 0; c < m; ++c) inc[j * n * m + c] = eta.increment(j)[c];
    return SingularControlPath(eta.grid().refine(n), m, std::vector<double>(eta.initial_jump().begin(),
                                                                            eta.initial_jump().end()),
                               std::move(inc));
}

RelaxedControlPath refine(const RelaxedControlPath& q, std::size_t n) {
    if (n == 0) throw std::invalid_argument("refinement factor must be positive");
    std::vector<double> w;
    w.reserve(q.weights().size() * n);
    for (std::size_t j = 0; j < q.grid().steps(); ++j)
        for (std::size_t s = 0; s < n; ++s) w.insert(w.end(), q.weights(j).begin(), q.weights(j).end());
    return RelaxedControlPath(q.grid().refine(n), q.control_set(), std::move(w));
}

StrictControlPath alternating_control(const TimeGrid& grid, std::size_t n) {
    if (n == 0) throw std::invalid_argument("alternating control needs n >= 1");
    const std::size_t L = grid.steps();
    std::vector<double> vals(L);
    for (std::size_t j = 0; j < L; ++j) {
        // Integer block index floor(j n / L), exact on any grid.
        const std::size_t block = j * n / L;
        vals[j] = block % 2 == 0 ? 1.0 : -1.0;
    }
    return StrictControlPath(grid, 1, std::move(vals));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument(fmt::format("not a number: '{}'", s));
    }
    if (used != s.size()) throw std::invalid_argument(fmt::format("not a number: '{}'", s));
    return v;
}

struct Rows {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

// Numeric rows after the header. Rows tagged `prefix_tag` are collected raw into `prefix`.
Rows read_rows(std::istream& is, std::vector<std::vector<std::string>>* prefix, const std::string& prefix_tag) {
    Rows r;
    std::string line;
    bool have_header = false;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split(line);
        if (prefix && !cells.empty() && cells[0] == prefix_tag) {
            prefix->push_back(cells);
            continue;
        }
        if (!have_header) {
            r.header = cells;
            have_header = true;
            continue;
        }
        std::vector<double> vals;
        for (const auto& c : cells) vals.push_back(parse_double(c));
        r.rows.push_back(std::move(vals));
    }
    if (!have_header) throw std::invalid_argument("csv: missing header row");
    return r;
}

TimeGrid grid_from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("csv: no intervals");
    return TimeGrid(rows.back()[1], rows.size());
}

void check_width(const std::vector<double>& row, std::size_t width) {
    if (row.size() != width) throw std::invalid_argument("csv: ragged row");
}

}  // namespace

void write_csv(std::ostream& os, const StrictControlPath& u) {
    os << "t_left,t_right";
    for (std::size_t c = 0; c < u.dim(); ++c) os << ",u" << c;
    os << '\n';
    for (std::size_t j = 0; j < u.grid().steps(); ++j) {
        os << num(u.grid().knot(j)) << ',' << num(u.grid().knot(j + 1));
        for (double v : u.value(j)) os << ',' << num(v);
        os << '\n';
    }
}

void write_csv(std::ostream& os, const SingularControlPath& eta) {
    os << "t_left,t_right";
    for (std::size_t c = 0; c < eta.dim(); ++c) os << ",d_eta" << c;
    os << '\n';
    // The 0+ jump is a degenerate interval [0, 0].
    os << "0,0";
    for (double v : eta.initial_jump()) os << ',' << num(v);
    os << '\n';
    for (std::size_t j = 0; j < eta.grid().steps(); ++j) {
        os << num(eta.grid().knot(j)) << ',' << num(eta.grid().knot(j + 1));
        for (double v : eta.increment(j)) os << ',' << num(v);
        os << '\n';
    }
}

void write_csv(std::ostream& os, const RelaxedControlPath& q) {
    const auto& set = q.control_set();
    os << "control_set," << set.dim();
    for (double v : set.points()) os << ',' << num(v);
    os << '\n';
    os << "t_left,t_right";
    for (std::size_t a = 0; a < set.size(); ++a) os << ",w" << a;
    os << '\n';
    for (std::size_t j = 0; j < q.grid().steps(); ++j) {
        os << num(q.grid().knot(j)) << ',' << num(q.grid().knot(j + 1));
        for (double v : q.weights(j)) os << ',' << num(v);
        os << '\n';
    }
}

StrictControlPath read_strict_csv(std::istream& is) {
    auto r = read_rows(is, nullptr, "");
    if (r.header.size() < 3) throw std::invalid_argument("csv: strict control needs at least one component");
    const std::size_t k = r.header.size() - 2;
    std::vector<double> vals;
    for (const auto& row : r.rows) {
        check_width(row, k + 2);
        vals.insert(vals.end(), row.begin() + 2, row.end());
    }
    return StrictControlPath(grid_from_rows(r.rows), k, std::move(vals));
}

SingularControlPath read_singular_csv(std::istream& is) {
    auto r = read_rows(is, nullptr, "");
    if (r.header.size() < 3 || r.rows.size() < 2) throw std::invalid_argument("csv: malformed singular control");
    const std::size_t m = r.header.size() - 2;
    const auto& first = r.rows.front();
    check_width(first, m + 2);
    if (first[0] != 0.0 || first[1] != 0.0) throw std::invalid_argument("csv: singular control must start with the 0+ row");
    std::vector<double> jump(first.begin() + 2, first.end()), inc;
    std::vector<std::vector<double>> rest(r.rows.begin() + 1, r.rows.end());
    for (const auto& row : rest) {
        check_width(row, m + 2);
        inc.insert(inc.end(), row.begin() + 2, row.end());
    }
    return SingularControlPath(grid_from_rows(rest), m, std::move(jump), std::move(inc));
}

RelaxedControlPath read_relaxed_csv(std::istream& is) {
    std::vector<std::vector<std::string>> prefix;
    auto r = read_rows(is, &prefix, "control_set");
    if (prefix.size() != 1 || prefix[0].size() < 3) throw std::invalid_argument("csv: missing control_set row");
    const auto dim = static_cast<std::size_t>(parse_double(prefix[0][1]));
    std::vector<double> pts;
    for (std::size_t i = 2; i < prefix[0].size(); ++i) pts.push_back(parse_double(prefix[0][i]));
    ControlSet set(dim, std::move(pts));
    std::vector<double> w;
    for (const auto& row : r.rows) {
        check_width(row, set.size() + 2);
        w.insert(w.end(), row.begin() + 2, row.end());
    }
    return RelaxedControlPath(grid_from_rows(r.rows), std::move(set), std::move(w));
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const TimeGrid& grid) { return {{"horizon", grid.horizon()}, {"steps", grid.steps()}}; }

nlohmann::json to_json(const StrictControlPath& u) {
    return {{"kind", "strict"}, {"grid", to_json(u.grid())}, {"dim", u.dim()}, {"values", u.values()}};
}

nlohmann::json to_json(const SingularControlPath& eta) {
    return {{"kind", "singular"},
            {"grid", to_json(eta.grid())},
            {"dim", eta.dim()},
            {"initial_jump", std::vector<double>(eta.initial_jump().begin(), eta.initial_jump().end())},
            {"increments", eta.increments()}};
}

nlohmann::json to_json(const RelaxedControlPath& q) {
    return {{"kind", "relaxed"},
            {"grid", to_json(q.grid())},
            {"control_set", {{"dim", q.control_set().dim()}, {"points", q.control_set().points()}}},
            {"weights", q.weights()}};
}

TimeGrid grid_from_json(const nlohmann::json& j) {
    return TimeGrid(j.at("horizon").get<double>(), j.at("steps").get<std::size_t>());
}

StrictControlPath strict_from_json(const nlohmann::json& j) {
    return StrictControlPath(grid_from_json(j.at("grid")), j.at("dim").get<std::size_t>(),
                             j.at("values").get<std::vector<double>>());
}

SingularControlPath singular_from_json(const nlohmann::json& j) {
    return SingularControlPath(grid_from_json(j.at("grid")), j.at("dim").get<std::size_t>(),
                               j.at("initial_jump").get<std::vector<double>>(),
                               j.at("increments").get<std::vector<double>>());
}

RelaxedControlPath relaxed_from_json(const nlohmann::json& j) {
    const auto& cs = j.at("control_set");
    return RelaxedControlPath(grid_from_json(j.at("grid")),
                              ControlSet(cs.at("dim").get<std::size_t>(), cs.at("points").get<std::vector<double>>()),
                              j.at("weights").get<std::vector<double>>());
}

}  // namespace mfsmp
