#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "chemotax/grid.hpp"
#include "chemotax/kinetics.hpp"

using namespace chemotax;

TEST_CASE("grid basics") {
    const Grid g(200, M_PI);
    CHECK(std::abs(g.spacing() * g.n_cells - g.length) <= 1e-14 * g.length);
    CHECK(g.node(0) == 0.0);
    CHECK(g.node(200) == Catch::Approx(M_PI));
    CHECK(g.weight(0) == Catch::Approx(0.5 * g.spacing()));
    CHECK(g.weight(1) == Catch::Approx(g.spacing()));
    CHECK_THROWS_AS(Grid(1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(Grid(10, 0.0), std::invalid_argument);
    // trapezoid weights sum to the domain length
    double s = 0.0;
    for (int i = 0; i <= 200; ++i) s += g.weight(i);
    CHECK(s == Catch::Approx(M_PI).epsilon(1e-14));
}

TEST_CASE("linear family evaluators") {
    const Kinetics k = Kinetics::linear(2.0);
    CHECK(k.phi(1.3, 0.7) == 1.3);
    CHECK(k.phi_u(1.3, 0.7) == 1.0);
    CHECK(k.phi_v(1.3, 0.7) == 0.0);
    CHECK(k.phi_uu(1.3, 0.7) == 0.0);
    CHECK(k.phi_uv(1.3, 0.7) == 0.0);
    CHECK(k.phi_vv(1.3, 0.7) == 0.0);
    CHECK(k.h(1.5) == 3.0);
    CHECK(k.h1(1.5) == 2.0);
    CHECK(k.h2(1.5) == 0.0);
    CHECK(k.h3(1.5) == 0.0);
}

TEST_CASE("nondimensionalize identity scaling") {
    const auto p = nondimensionalize(2.0, 3.0, 4.0, 1.0, 1.0, 1.0, Kinetics::linear(1.0), M_PI);
    CHECK(p.d1 == 2.0);
    CHECK(p.chi == 3.0);
    CHECK(p.d2 == 4.0);
    CHECK(p.ubar == 1.0);
    CHECK(p.kinetics.h(1.0) == 1.0);
}

TEST_CASE("nondimensionalize scales production by 1/alpha") {
    const auto p = nondimensionalize(2.0, 4.0, 6.0, 3.0, 2.0, 3.0, Kinetics::linear(1.0), M_PI);
    CHECK(p.d1 == Catch::Approx(1.0));
    CHECK(p.chi == Catch::Approx(2.0));
    CHECK(p.d2 == Catch::Approx(2.0));
    CHECK(p.ubar == Catch::Approx(1.5));
    CHECK(p.kinetics.h(1.0) == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("nondimensionalize rejects nonpositive scalings") {
    CHECK_THROWS_AS(nondimensionalize(1, 1, 1, 0.0, 1, 1, Kinetics::linear(1.0), 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(nondimensionalize(1, 1, 1, 1, -2.0, 1, Kinetics::linear(1.0), 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(nondimensionalize(1, 1, 1, 1, 1, 0.0, Kinetics::linear(1.0), 1.0),
                    std::invalid_argument);
}

TEST_CASE("nondimensionalize idempotent at mu = alpha = 1") {
    const auto p1 = nondimensionalize(2.0, 3.0, 4.0, 1.5, 1.0, 1.0, Kinetics::linear(2.0), 2.0);
    const auto p2 =
        nondimensionalize(p1.d1, p1.chi, p1.d2, p1.ubar, 1.0, 1.0, p1.kinetics, p1.length);
    CHECK(p2.d1 == p1.d1);
    CHECK(p2.chi == p1.chi);
    CHECK(p2.d2 == p1.d2);
    CHECK(p2.ubar == p1.ubar);
    CHECK(p2.kinetics.h(0.7) == p1.kinetics.h(0.7));
}

TEST_CASE("condition report: linear passes for any beta and box") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.01, 50.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double beta = unif(rng);
        const auto rep = validate_conditions(Kinetics::linear(beta), unif(rng), unif(rng));
        CHECK(rep.all_pass());
        CHECK(rep.c1 == 1.0);
        CHECK(rep.c2 == beta);
    }
}

TEST_CASE("condition report: saturating family passes on [0,10]^2") {
    const auto rep = validate_conditions(Kinetics::saturating(1.0), 10.0, 10.0);
    CHECK(rep.all_pass());
}

TEST_CASE("condition report: phi_v > 0 is flagged") {
    Kinetics::CustomSpec s;
    s.phi = [](double u, double v) { return u * v; };
    s.phi_u = [](double, double v) { return v; };
    s.phi_v = [](double u, double) { return u; };
    s.phi_uu = [](double, double) { return 0.0; };
    s.phi_uv = [](double, double) { return 1.0; };
    s.phi_vv = [](double, double) { return 0.0; };
    s.h = [](double u) { return u; };
    s.h1 = [](double) { return 1.0; };
    s.h2 = [](double) { return 0.0; };
    s.h3 = [](double) { return 0.0; };
    s.bound_c1 = 100.0;  // generous so only the sign condition can fail
    s.bound_c2 = 1.0;
    const auto rep = validate_conditions(Kinetics::custom(s), 2.0, 2.0);
    CHECK_FALSE(rep.all_pass());
    bool sign_failed = false;
    for (const auto& e : rep.entries)
        if (e.name == "phi_nonnegative_phi_v_nonpositive") sign_failed = !e.pass;
    CHECK(sign_failed);
}

TEST_CASE("custom construction rejects inconsistent derivatives") {
    Kinetics::CustomSpec s;
    s.phi = [](double u, double v) { return u * std::exp(-v); };
    s.phi_u = [](double, double) { return 1.0; };  // wrong: misses the exp(-v) factor
    s.phi_v = [](double u, double v) { return -u * std::exp(-v); };
    s.phi_uu = [](double, double) { return 0.0; };
    s.phi_uv = [](double, double v) { return -std::exp(-v); };
    s.phi_vv = [](double u, double v) { return u * std::exp(-v); };
    s.h = [](double u) { return u; };
    s.h1 = [](double) { return 1.0; };
    s.h2 = [](double) { return 0.0; };
    s.h3 = [](double) { return 0.0; };
    CHECK_THROWS_AS(Kinetics::custom(s), std::invalid_argument);
}

TEST_CASE("validate_conditions input checks") {
    CHECK_THROWS_AS(validate_conditions(Kinetics::linear(1.0), -1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(validate_conditions(Kinetics::linear(1.0), 1.0, 1.0, 1), std::invalid_argument);
}

TEST_CASE("model params positivity") {
    CHECK_THROWS_AS(ModelParams(0.0, 1, 1, 1, 1, Kinetics::linear(1.0)), std::invalid_argument);
    CHECK_THROWS_AS(ModelParams(1, 1, -0.5, 1, 1, Kinetics::linear(1.0)), std::invalid_argument);
    const ModelParams p(1, 1, 0, 2.0, 1, Kinetics::linear(3.0));
    CHECK(p.vbar() == 6.0);  // vbar is derived, never stored
}
