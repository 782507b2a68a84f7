#include "doctest.h"
#include "support.hpp"

#include "mfsmp/adjoint.hpp"
#include "mfsmp/forward.hpp"
#include "mfsmp/regression.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace mfsmp;

TEST_CASE("regression") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> Z;
    const std::size_t n = 500;
    std::vector<double> x(n), y(n), fit(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = 3.0 + 2.0 * Z(rng);
        y[i] = 1.0 - 2.0 * x[i] + 0.5 * x[i] * x[i];
    }
    const Regression r(x, n, 1, 2);
    CHECK(r.basis_size() == 3);
    r.project(y, fit);
    for (std::size_t i = 0; i < n; ++i) CHECK(fit[i] == doctest::Approx(y[i]).epsilon(1e-9));

    std::vector<double> flat(n, 2.0);
    const Regression c(flat, n, 1, 2);
    CHECK(c.basis_size() == 1);
    c.project(y, fit);
    double mean = 0;
    for (double v : y) mean += v / n;
    CHECK(fit[17] == doctest::Approx(mean));

    std::vector<double> few{0.0, 1.0};
    CHECK_THROWS_AS(Regression(few, 2, 1, 3), SolverError);
    std::vector<double> two_points(n);
    for (std::size_t i = 0; i < n; ++i) two_points[i] = i % 2;
    CHECK_THROWS_AS(Regression(two_points, n, 1, 3), SolverError);
}

TEST_CASE("constant adjoint") {
    const auto s = test::scalar_spec([](double, double, double, double) { return 0.0; },
                                     [](double, double, double) { return 0.0; }, 1.0,
                                     [](double, double, double, double) { return 0.0; },
                                     [](double x, double) { return x; }, 0.0, 1.0);
    const TimeGrid g(1.0, 16);
    const auto u = test::constant(g, 1.0);
    const std::size_t N = 4000;
    const auto ens = simulate(s, u, test::zero_eta(g), {N, 1, false});
    const auto adj = solve_adjoint(s, ens, u);
    for (std::size_t j = 0; j <= 16; ++j)
        for (std::size_t i = 0; i < N; i += 37) CHECK(adj.p(i, j)[0] == doctest::Approx(1.0).epsilon(1e-12));
    // Z is the regression of dW / dt: zero up to its Monte-Carlo error 1 / sqrt(N dt).
    for (std::size_t j = 0; j < 16; ++j) CHECK(std::abs(adj.z(3, j)[0]) <= 4.0 / std::sqrt(N * g.dt()));
}

TEST_CASE("zero cost gives a zero adjoint") {
    LqParameters p;
    p.q = p.r = p.qT = 0.0;
    const auto s = builtin_lq(p);
    const TimeGrid g(1.0, 32);
    const auto u = test::constant(g, 0.5);
    const auto ens = simulate(s, u, test::zero_eta(g), {200, 3, false});
    const auto adj = solve_adjoint(s, ens, u);
    for (std::size_t j = 0; j <= 32; ++j) CHECK(adj.mean_p(j)[0] == 0.0);
    CHECK(adj.diagnostics.sup_sq_p == 0.0);
    CHECK(adj.diagnostics.int_sq_z == 0.0);
}

TEST_CASE("terminal condition and linear BSDE oracle") {
    LqParameters p;
    p.abar = 0.0;
    p.q = 0.0;
    const auto s = builtin_lq(p);
    const TimeGrid g(1.0, 256);
    const auto u = test::constant(g, 0.0);
    const auto ens = simulate(s, u, test::zero_eta(g), {4000, 8, false});
    const auto adj = solve_adjoint(s, ens, u);
    for (std::size_t i = 0; i < 4000; i += 97) CHECK(adj.p(i, 256)[0] == ens.state(i, 256)[0]);
    for (std::size_t j = 0; j <= 256; j += 32) {
        const double expect = std::exp(2.0 * p.a * (1.0 - g.knot(j))) * ens.mean(j)[0];
        CHECK(std::abs(adj.mean_p(j)[0] - expect) <= 1e-2);
    }
    CHECK(std::isfinite(adj.diagnostics.sup_sq_p));
    CHECK(std::isfinite(adj.diagnostics.int_sq_z));
    CHECK(adj.diagnostics.basis_size == 3);
}

TEST_CASE("LQ oracle") {
    SUBCASE("terminal value") {
        const auto o = lq_oracle(builtin_lq());
        CHECK(o.K(1.0) == doctest::Approx(1.0));
        CHECK(o.kbar(1.0) == doctest::Approx(0.0));
    }
    SUBCASE("expensive control reduces to the Lyapunov equation") {
        LqParameters p;
        p.r = 1e12;
        const auto o = lq_oracle(builtin_lq(p));
        for (double t : {0.0, 0.3, 0.8}) {
            const double a = p.a, q = p.q;
            const double K = (p.qT + q / (2 * a)) * std::exp(2 * a * (1 - t)) - q / (2 * a);
            CHECK(o.K(t) == doctest::Approx(K).epsilon(1e-8));
            CHECK(std::abs(o.ubar(t)) < 1e-9);
        }
    }
    SUBCASE("tangent-form Riccati solution") {
        LqParameters p;
        p.a = p.abar = 0.0;
        p.qT = 0.0;
        const auto o = lq_oracle(builtin_lq(p));
        for (double t : {0.0, 0.25, 0.5, 0.9}) {
            CHECK(o.pi(t) == doctest::Approx(std::tanh(1.0 - t)).epsilon(1e-9));
            CHECK(o.K(t) == doctest::Approx(1.0 - t).epsilon(1e-9));
        }
    }
    CHECK_THROWS_AS(lq_oracle(builtin_oscillating()), std::invalid_argument);
}

TEST_CASE("LQ adjoint matches the oracle along the optimal trajectory") {
    const auto s = builtin_lq();
    const TimeGrid g(1.0, 256);
    const auto o = lq_oracle(s);
    const auto u = oracle_control(s, g, false);
    const auto ens = simulate(s, u, test::zero_eta(g), {10000, 4, false});
    const auto adj = solve_adjoint(s, ens, u);
    for (std::size_t j = 0; j < 256; j += 32) {
        const double t = g.knot(j);
        double err = 0, scale = 0;
        for (std::size_t i = 0; i < 10000; ++i) {
            const double ref = o.K(t) * ens.state(i, j)[0] + o.kbar(t) * ens.mean(j)[0];
            err += std::abs(adj.p(i, j)[0] - ref);
            scale += std::abs(ref);
        }
        CHECK(err / scale <= 0.05);
    }
    const double p0 = (o.K(0.0) + o.kbar(0.0)) * s.x0[0];
    CHECK(std::abs(adj.mean_p(0)[0] - p0) <= 0.05 * std::abs(p0));
}

TEST_CASE("adjoint determinism and relaxed consistency") {
    const auto s = builtin_lq();
    const TimeGrid g(1.0, 32);
    const auto u = oracle_control(s, g);
    const SimConfig cfg{300, 2, false};
    const auto ens = simulate(s, u, test::zero_eta(g), cfg);
    const auto a = solve_adjoint(s, ens, u);
    const auto b = solve_adjoint(s, ens, embed_strict(u, s.control_set));
    set_thread_count(2);
    const auto c = solve_adjoint(s, ens, u);
    set_thread_count(0);
    for (std::size_t j = 0; j <= 32; ++j)
        for (std::size_t i = 0; i < 300; ++i) {
            CHECK(a.p(i, j)[0] == b.p(i, j)[0]);
            CHECK(a.p(i, j)[0] == c.p(i, j)[0]);
            if (j < 32) CHECK(a.z(i, j)[0] == b.z(i, j)[0]);
        }
    std::stringstream csv;
    write_summary_csv(csv, a);
    std::string header;
    std::getline(csv, header);
    CHECK(header == "t,mean_P_0,mean_sq_Z");
}

TEST_CASE("adjoint stability") {
    const auto s = builtin_lq({}, 10.0, 1.0, 1.0, 2, 1.0);
    const TimeGrid g(1.0, 8);
    const auto one_hot = embed_strict(alternating_control(g, 4), s.control_set);
    for (const auto& r : adjoint_stability(s, one_hot, test::zero_eta(g), {500, 1, false}, {1, 2, 4})) {
        CHECK(r.sup_sq_gap == 0.0);
        CHECK(r.int_sq_gap == 0.0);
    }
    const auto rows = adjoint_stability(s, RelaxedControlPath::uniform(g, s.control_set), test::zero_eta(g),
                                        {2000, 1, false}, {1, 8});
    CHECK(rows[1].sup_sq_gap < rows[0].sup_sq_gap);
    CHECK(rows[1].int_sq_gap < rows[0].int_sq_gap);
}
