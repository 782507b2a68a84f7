#include "doctest.h"
#include "support.hpp"

#include "mfsmp/problem.hpp"

#include <limits>
#include <random>

using namespace mfsmp;

namespace {
double drift_at(const ProblemSpec& s, double t, double x, double y, double u) {
    double out = 0.0;
    std::vector<double> X{x}, Y{y}, U{u};
    s.drift(t, X, Y, U, MutVec(&out, 1));
    return out;
}
}  // namespace

TEST_CASE("builtin_lq fixed values") {
    const auto s = builtin_lq();
    CHECK(s.horizon == 1.0);
    CHECK(drift_at(s, 0.0, 1.0, 1.0, 0.0) == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(s.control_set.size() == 41);
    CHECK(s.control_set.point(0)[0] == -2.0);
    CHECK(s.control_set.point(40)[0] == 2.0);
    REQUIRE(s.lq);
    CHECK(s.x0[0] == 1.0);
}

TEST_CASE("builtin_oscillating") {
    const auto s = builtin_oscillating();
    std::vector<double> zero{0.0}, one{1.0};
    CHECK(s.running_cost(0.3, zero, zero, one) == 0.0);
    CHECK(s.control_set == ControlSet(1, {-1.0, 1.0}));
    for (double x : {-3.0, 0.0, 2.5}) {
        double sig = 1.0;
        std::vector<double> X{x};
        s.diffusion(0.1, X, X, MutVec(&sig, 1));
        CHECK(sig == 0.0);
    }
}

TEST_CASE("builtin_singular gain") {
    const auto s = builtin_singular();
    for (double t : {0.0, 0.4, 1.0}) {
        double g = 0.0;
        s.singular_gain(t, MutVec(&g, 1));
        CHECK(g == -1.0);
    }
    CHECK(s.x0[0] == 2.0);
}

TEST_CASE("builtins pass validate_spec") {
    for (const auto& s : {builtin_lq(), builtin_oscillating(), builtin_singular()}) {
        const auto r = validate_spec(s, 1000, 5.0);
        CHECK_MESSAGE(r.passed, s.name);
        CHECK(r.probes == 1000);
        bool all = true;
        for (const auto& c : r.checks) all = all && c.passed;
        CHECK(all == r.passed);
    }
}

TEST_CASE("superlinear drift fails H2") {
    const auto s = test::scalar_spec([](double, double x, double, double) { return x * x; },
                                     [](double, double, double) { return 0.1; }, 1.0,
                                     [](double, double x, double, double) { return x * x; },
                                     [](double, double) { return 0.0; }, 0.0, 0.0);
    const auto r = validate_spec(s, 200, 10.0);
    CHECK_FALSE(r.passed);
    bool h2_failed = false;
    for (const auto& c : r.checks)
        if (c.id == "H2" && !c.passed) h2_failed = true;
    CHECK(h2_failed);
}

TEST_CASE("non-finite coefficient is ill-posed") {
    const auto s = test::scalar_spec(
        [](double, double x, double, double) { return x > 1.0 ? std::numeric_limits<double>::infinity() : x; },
        [](double, double, double) { return 0.1; }, 1.0, [](double, double x, double, double) { return x * x; },
        [](double, double) { return 0.0; }, 0.0, 0.0);
    CHECK_THROWS_AS(validate_spec(s, 200, 5.0), IllPosedError);
}

TEST_CASE("validate_spec is deterministic given its seed") {
    const auto a = validate_spec(builtin_lq(), 100, 5.0, 7);
    const auto b = validate_spec(builtin_lq(), 100, 5.0, 7);
    CHECK(a.seed == 7);
    REQUIRE(a.checks.size() == b.checks.size());
    for (std::size_t k = 0; k < a.checks.size(); ++k) CHECK(a.checks[k].worst_residual == b.checks[k].worst_residual);
}

TEST_CASE("analytic partials agree with finite differences") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    for (const auto& s : {builtin_lq(), builtin_lq_cubic(), builtin_singular(), builtin_oscillating()}) {
        REQUIRE(s.derivatives.any());
        const Partials p(s);
        for (int k = 0; k < 100; ++k) {
            std::vector<double> x{U(rng)}, y{U(rng)}, u{s.control_set.point(k % s.control_set.size())[0]};
            const double t = 0.5 + U(rng) / 6.0;
            auto close = [](double a, double b) { return std::abs(a - b) <= 1e-4 * std::max(1.0, std::abs(a)); };
            double a = 0, f = 0;
            p.drift_x(t, x, y, u, MutVec(&a, 1));
            p.fd_drift_x(t, x, y, u, MutVec(&f, 1));
            CHECK(close(a, f));
            p.drift_y(t, x, y, u, MutVec(&a, 1));
            p.fd_drift_y(t, x, y, u, MutVec(&f, 1));
            CHECK(close(a, f));
            p.running_x(t, x, y, u, MutVec(&a, 1));
            p.fd_running_x(t, x, y, u, MutVec(&f, 1));
            CHECK(close(a, f));
            p.running_y(t, x, y, u, MutVec(&a, 1));
            p.fd_running_y(t, x, y, u, MutVec(&f, 1));
            CHECK(close(a, f));
            p.terminal_x(x, y, MutVec(&a, 1));
            p.fd_terminal_x(x, y, MutVec(&f, 1));
            CHECK(close(a, f));
            p.diffusion_x(t, x, y, MutVec(&a, 1));
            p.fd_diffusion_x(t, x, y, MutVec(&f, 1));
            CHECK(close(a, f));
        }
    }
}

TEST_CASE("builtins are deterministic") {
    const auto a = builtin_lq_cubic(), b = builtin_lq_cubic();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-4.0, 4.0);
    for (int k = 0; k < 50; ++k) {
        std::vector<double> x{U(rng)}, y{U(rng)}, u{U(rng) / 2};
        double da = 0, db = 0;
        a.drift(0.3, x, y, u, MutVec(&da, 1));
        b.drift(0.3, x, y, u, MutVec(&db, 1));
        CHECK(da == db);
        CHECK(a.running_cost(0.3, x, y, u) == b.running_cost(0.3, x, y, u));
        CHECK(a.terminal_cost(x, y) == b.terminal_cost(x, y));
    }
}

TEST_CASE("load_problem") {
    const auto s = load_problem({{"builtin", "lq"}, {"overrides", {{"x0", 2.0}, {"sigma", 0.5}}}});
    CHECK(s.x0[0] == 2.0);
    CHECK(s.lq->sigma == 0.5);
    CHECK(load_problem({{"builtin", "oscillating"}}).name == "oscillating");
    CHECK_THROWS_AS(load_problem({{"builtin", "nope"}}), UnknownBuiltinError);
    CHECK_THROWS_AS(load_problem({{"builtin", "lq"}, {"overrides", {{"bogus", 1}}}}), ConfigError);
    CHECK_THROWS_AS(load_problem({{"builtin", "lq"}, {"overrides", {{"x0", "one"}}}}), ConfigError);
    CHECK_THROWS_AS(load_problem(nlohmann::json::array()), ConfigError);
}

TEST_CASE("scale_costs scales every cost term") {
    const auto s = builtin_singular();
    const auto t = scale_costs(s, 3.0);
    std::vector<double> x{1.5}, y{0.5}, u{0.0};
    CHECK(t.running_cost(0.2, x, y, u) == doctest::Approx(3.0 * s.running_cost(0.2, x, y, u)));
    double p1 = 0, p2 = 0;
    s.singular_cost(0.2, MutVec(&p1, 1));
    t.singular_cost(0.2, MutVec(&p2, 1));
    CHECK(p2 == doctest::Approx(3.0 * p1));
    const Partials a(s), b(t);
    a.running_x(0.2, x, y, u, MutVec(&p1, 1));
    b.running_x(0.2, x, y, u, MutVec(&p2, 1));
    CHECK(p2 == doctest::Approx(3.0 * p1));
}

TEST_CASE("control set") {
    const auto c = ControlSet::uniform(-1.0, 1.0, 5);
    CHECK(c.size() == 5);
    std::vector<double> half{0.5}, off{0.3};
    CHECK(c.index_of(half) == 3);
    CHECK_FALSE(c.index_of(off));
    CHECK_THROWS(ControlSet(1, {}));
}
