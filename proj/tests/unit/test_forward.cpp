#include "doctest.h"
#include "support.hpp"

#include "mfsmp/forward.hpp"
#include "mfsmp/noise.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

using namespace mfsmp;

namespace {
ProblemSpec frozen(double gain, double x0) {
    return test::scalar_spec([](double, double, double, double) { return 0.0; },
                             [](double, double, double) { return 0.0; }, gain,
                             [](double, double, double, double) { return 0.0; }, [](double, double) { return 0.0; },
                             0.5, x0);
}

double sup_diff(const EnsemblePath& a, const EnsemblePath& b) {
    double s = 0.0;
    for (std::size_t j = 0; j <= a.grid().steps(); ++j)
        for (std::size_t i = 0; i < a.particles(); ++i) s = std::max(s, std::abs(a.state(i, j)[0] - b.state(i, j)[0]));
    return s;
}
}  // namespace

TEST_CASE("noise is counter-based") {
    const NoiseSource a(5, false), b(5, false), anti(5, true);
    CHECK(a.normal(3, 7, 0) == b.normal(3, 7, 0));
    CHECK(a.normal(3, 7, 0) != a.normal(3, 8, 0));
    CHECK(anti.normal(3, 7, 0) == -anti.normal(2, 7, 0));
    double m = 0, v = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = a.normal(i, 0, 0);
        m += z;
        v += z * z;
    }
    CHECK(std::abs(m / n) < 0.01);
    CHECK(std::abs(v / n - 1.0) < 0.02);
}

TEST_CASE("no dynamics keeps the initial state") {
    const auto s = frozen(0.0, 1.5);
    const TimeGrid g(1.0, 16);
    const auto ens = simulate(s, test::constant(g, 1.0), test::jump(g, 3.0), {4, 1, false});
    for (std::size_t j = 0; j <= 16; ++j)
        for (std::size_t i = 0; i < 4; ++i) CHECK(ens.state(i, j)[0] == 1.5);
}

TEST_CASE("pure singular displacement") {
    const auto s = frozen(-1.0, 1.5);
    const TimeGrid g(1.0, 16);
    const auto ens = simulate(s, test::constant(g, 1.0), test::jump(g, 2.0), {4, 1, false});
    for (std::size_t j = 0; j <= 16; ++j) CHECK(ens.state(2, j)[0] == -0.5);
    const auto c = cost(s, ens, test::constant(g, 1.0), test::jump(g, 2.0));
    CHECK(c.total == 1.0);
    CHECK(c.singular == 1.0);
}

TEST_CASE("LQ mean under zero control follows the mean ODE") {
    const auto s = builtin_lq();
    const TimeGrid g(1.0, 256);
    const std::size_t N = 4000;
    const auto ens = simulate(s, test::constant(g, 0.0), test::zero_eta(g), {N, 17, false});
    double m = 0, v = 0;
    for (std::size_t i = 0; i < N; ++i) m += ens.state(i, 256)[0];
    m /= N;
    for (std::size_t i = 0; i < N; ++i) v += std::pow(ens.state(i, 256)[0] - m, 2);
    const double se = std::sqrt(v / (N - 1) / N);
    CHECK(std::abs(m - std::exp(-0.2)) <= 3.0 * se);
    CHECK(std::abs(ens.mean(256)[0] - m) <= 1e-12);
}

TEST_CASE("empirical mean invariant and initial state") {
    const auto s = builtin_singular();
    const TimeGrid g(1.0, 32);
    const auto ens = simulate(s, test::constant(g, 0.0), test::jump(g, 0.5), {50, 3, true});
    for (std::size_t j = 0; j <= 32; ++j) {
        double m = 0;
        for (std::size_t i = 0; i < 50; ++i) m += ens.state(i, j)[0];
        CHECK(std::abs(m / 50 - ens.mean(j)[0]) <= 1e-12);
    }
    for (std::size_t i = 0; i < 50; ++i) CHECK(ens.state(i, 0)[0] == 1.5);
    CHECK(ens.noise(1, 4)[0] == -ens.noise(0, 4)[0]);
}

TEST_CASE("relaxed simulation") {
    SUBCASE("one-hot equals strict bit for bit") {
        const auto s = builtin_lq();
        const TimeGrid g(1.0, 64);
        std::vector<double> v(64);
        for (std::size_t j = 0; j < 64; ++j) v[j] = s.control_set.point((j * 7) % 41)[0];
        const StrictControlPath u(g, 1, v);
        const auto a = simulate(s, u, test::jump(g, 0.3), {100, 5, false});
        const auto b = simulate_relaxed(s, embed_strict(u, s.control_set), test::jump(g, 0.3), {100, 5, false});
        CHECK(a.particle_major() == b.particle_major());
    }
    SUBCASE("half-half on the oscillating example stays at zero") {
        const auto s = builtin_oscillating();
        const TimeGrid g(1.0, 64);
        const auto q = RelaxedControlPath::uniform(g, s.control_set);
        const auto ens = simulate_relaxed(s, q, test::zero_eta(g), {2, 1, false});
        for (std::size_t j = 0; j <= 64; ++j) CHECK(ens.state(0, j)[0] == 0.0);
        CHECK(cost(s, ens, q, test::zero_eta(g)).total == 0.0);
    }
    SUBCASE("symmetric mixture on LQ drift matches zero control") {
        const auto s = builtin_lq({}, 10.0, 1.0, 1.0, 2, 1.0);
        const TimeGrid g(1.0, 64);
        const auto a = simulate_relaxed(s, RelaxedControlPath::uniform(g, s.control_set), test::zero_eta(g),
                                        {200, 2, false});
        const auto b = simulate(s, test::constant(g, 0.0), test::zero_eta(g), {200, 2, false});
        for (std::size_t j = 0; j <= 64; ++j) CHECK(a.mean(j)[0] == doctest::Approx(b.mean(j)[0]).epsilon(1e-12));
    }
}

TEST_CASE("costs") {
    SUBCASE("alternating control on the oscillating example") {
        const auto s = builtin_oscillating();
        const TimeGrid g(1.0, 256);
        const auto v = alternating_control(g, 10);
        const auto c = cost(s, simulate(s, v, test::zero_eta(g), {2, 1, false}), v, test::zero_eta(g));
        CHECK(c.total <= 0.01);
        CHECK(c.std_error == 0.0);
    }
    SUBCASE("singular benchmark closed-form values") {
        const auto s = builtin_singular();
        const TimeGrid g(1.0, 256);
        const auto u = test::constant(g, 0.0);
        const SimConfig cfg{4000, 21, false};
        const auto c0 = cost(s, simulate(s, u, test::zero_eta(g), cfg), u, test::zero_eta(g));
        const auto c2 = cost(s, simulate(s, u, test::jump(g, 2.0), cfg), u, test::jump(g, 2.0));
        CHECK(std::abs(c0.total - 4.005) <= 3.0 * c0.std_error + 2.0 * g.dt() * 4.0);
        CHECK(std::abs(c2.total - 1.005) <= 3.0 * c2.std_error + 1e-3);
        CHECK(c2.total < c0.total);
        for (const auto& c : {c0, c2}) CHECK(std::abs(c.total - (c.running + c.terminal + c.singular)) <= 1e-12);
    }
    CHECK(singular_cost(builtin_singular(), test::jump(TimeGrid(1.0, 4), 2.0)) == 1.0);
}

TEST_CASE("determinism and thread independence") {
    const auto s = builtin_lq();
    const TimeGrid g(1.0, 64);
    const auto u = test::constant(g, 0.3);
    set_thread_count(1);
    const auto a = simulate(s, u, test::jump(g, 0.2), {301, 9, false});
    set_thread_count(3);
    const auto b = simulate(s, u, test::jump(g, 0.2), {301, 9, false});
    set_thread_count(0);
    CHECK(a.particle_major() == b.particle_major());
    for (std::size_t j = 0; j <= 64; ++j) CHECK(a.mean(j)[0] == b.mean(j)[0]);
}

TEST_CASE("configuration errors") {
    const auto s = builtin_lq();
    const TimeGrid g(1.0, 8);
    CHECK_THROWS(simulate(s, test::constant(g, 0.0), test::zero_eta(g), {1, 1, false}));
    CHECK_THROWS(simulate(s, test::constant(g, 0.0), test::zero_eta(g), {5, 1, true}));
    CHECK_THROWS_AS(simulate(s, test::constant(g, 0.0), test::zero_eta(TimeGrid(1.0, 4)), {4, 1, false}),
                    MismatchError);
}

TEST_CASE("overflow names the particle and step") {
    const auto s = test::scalar_spec([](double, double x, double, double) { return 1e200 * x; },
                                     [](double, double, double) { return 0.0; }, 0.0,
                                     [](double, double, double, double) { return 0.0; },
                                     [](double, double) { return 0.0; }, 0.0, 1.0);
    const TimeGrid g(1.0, 10);
    CHECK_THROWS_WITH_AS(simulate(s, test::constant(g, 1.0), test::zero_eta(g), {2, 1, false}),
                         doctest::Contains("particle"), SolverError);
}

TEST_CASE("meanfield convergence") {
    SUBCASE("deterministic problem has zero deviation") {
        const auto s = builtin_oscillating();
        const TimeGrid g(1.0, 16);
        const auto t = meanfield_convergence(s, alternating_control(g, 2), test::zero_eta(g), {10, 20}, 3, 1);
        for (const auto& r : t.rows) CHECK(r.deviation == 0.0);
        CHECK_FALSE(t.slope);
    }
    SUBCASE("doubling reps keeps the slope within its interval") {
        const auto s = builtin_lq();
        const TimeGrid g(1.0, 32);
        const auto u = test::constant(g, 0.0);
        const auto a = meanfield_convergence(s, u, test::zero_eta(g), {100, 400, 1600}, 20, 5);
        const auto b = meanfield_convergence(s, u, test::zero_eta(g), {100, 400, 1600}, 40, 5);
        REQUIRE(a.slope);
        REQUIRE(b.slope);
        CHECK(std::abs(*a.slope - *b.slope) <= 2.0 * (*a.slope_std_error + *b.slope_std_error));
    }
}

TEST_CASE("stability under convex singular perturbations") {
    const auto s = builtin_lq();
    const TimeGrid g(1.0, 64);
    const auto u = test::constant(g, 0.0);
    const SimConfig cfg{200, 4, false};
    const auto eta = test::zero_eta(g);
    const auto base = simulate(s, u, eta, cfg);
    std::vector<double> c;
    for (double a : {0.4, 0.2, 0.1, 0.05})
        c.push_back(sup_diff(simulate(s, u, convex_perturbation(eta, test::jump(g, 1.0), a), cfg), base) / a);
    for (double x : c) CHECK(x == doctest::Approx(c[0]).epsilon(1e-9));
}

TEST_CASE("chattered dynamics approach the relaxed dynamics") {
    const auto s = builtin_lq({}, 10.0, 1.0, 1.0, 2, 1.0);
    const TimeGrid g(1.0, 16);
    const auto q = RelaxedControlPath::uniform(g, s.control_set);
    std::vector<double> d, dj;
    for (std::size_t n : {1, 2, 4, 8}) {
        const auto qn = refine(q, n);
        const auto en = test::zero_eta(qn.grid());
        const SimConfig cfg{100, 6, false};
        const auto rel = simulate_relaxed(s, qn, en, cfg);
        const auto ch = chattering(q, n, 1);
        const auto st = simulate(s, ch, en, cfg);
        d.push_back(sup_diff(st, rel));
        dj.push_back(std::abs(cost(s, st, ch, en).total - cost(s, rel, qn, en).total));
    }
    for (std::size_t k = 1; k < d.size(); ++k) {
        CHECK(d[k] < d[k - 1]);
        CHECK(dj[k] < dj[k - 1]);
    }
}

TEST_CASE("exports") {
    const auto s = builtin_lq();
    const TimeGrid g(1.0, 4);
    const auto ens = simulate(s, test::constant(g, 0.0), test::zero_eta(g), {3, 1, false});
    std::stringstream csv;
    write_summary_csv(csv, ens);
    std::string header;
    std::getline(csv, header);
    CHECK(header == "t,mean_0,std_0");
    std::stringstream bin;
    write_trajectories(bin, ens);
    const std::string raw = bin.str();
    REQUIRE(raw.size() == 3 * 8 + 3 * 5 * 8);
    std::uint64_t hdr[3];
    std::memcpy(hdr, raw.data(), 24);
    CHECK(hdr[0] == 3);
    CHECK(hdr[1] == 4);
    CHECK(hdr[2] == 1);
    double first;
    std::memcpy(&first, raw.data() + 24, 8);
    CHECK(first == ens.state(0, 0)[0]);
    double second;
    std::memcpy(&second, raw.data() + 32, 8);
    CHECK(second == ens.state(0, 1)[0]);
}
