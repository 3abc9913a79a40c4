#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlfilt/parametrix.hpp>

using namespace nlfilt;

// shared engine for the oscillating-coefficient cases (built once)
static const LeviSeries& sine_series() {
    static LeviSeries S = [] {
        ParametrixGrids pg;
        pg.L = 10.0;
        pg.n_x = 128;
        pg.n_s = 11;
        return levi_series(CoefficientField::sine(1.0, 0.25), 1.0, pg, 1e-3, 6);
    }();
    return S;
}

TEST_CASE("poisson kernel: Cauchy closed forms and scaling") {
    for (double t : {0.3, 1.0, 4.0})
        for (double x : {0.0, 0.7, 2.0, 15.0}) {
            double exact = t / (pi * (t * t + x * x));
            CHECK(poisson_kernel(1.0, x, t) == doctest::Approx(exact).epsilon(1e-7));
            double dexact = (x * x - t * t) / (pi * std::pow(t * t + x * x, 2));
            CHECK(poisson_kernel_dt(1.0, x, t) ==
                  doctest::Approx(dexact).epsilon(1e-6));
        }
    CHECK(poisson_kernel(1.0, 0.5, -1.0) == 0.0);
    CHECK_THROWS(poisson_kernel(1.0, 0.5, 0.0));
    CHECK_THROWS(poisson_kernel_dt(1.0, 0.5, 0.0));

    // time derivative against a centered difference for non-Cauchy orders
    for (double s : {0.7, 1.5})
        for (double x : {0.0, 1.3, 6.0}) {
            double t = 0.8, dt = 1e-4;
            double fd = (poisson_kernel(s, x, t + dt) -
                         poisson_kernel(s, x, t - dt)) /
                        (2 * dt);
            CHECK(poisson_kernel_dt(s, x, t) ==
                  doctest::Approx(fd).epsilon(1e-6).scale(0.1));
        }
}

TEST_CASE("poisson kernel: mass and semigroup convolution") {
    double s = 1.3, t = 0.7;
    auto f = [&](double y) { return poisson_kernel(s, y, t); };
    double mass = adaptive_simpson(f, -100.0, 0.0, 1e-10) +
                  adaptive_simpson(f, 0.0, 100.0, 1e-10) +
                  2.0 * StableDensity::get(s).tail_integral(
                            100.0 * std::pow(t, -1.0 / s));
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));

    for (double x : {0.0, 1.7}) {
        auto conv = [&](double y) {
            return poisson_kernel(s, y, 0.4) * poisson_kernel(s, x - y, 0.6);
        };
        double got = adaptive_simpson(conv, -80.0, 0.0, 1e-10) +
                     adaptive_simpson(conv, 0.0, x, 1e-10) +
                     adaptive_simpson(conv, x, 80.0, 1e-10);
        CHECK(got == doctest::Approx(poisson_kernel(s, x, 1.0)).epsilon(1e-4));
    }
}

TEST_CASE("quasimetric: closed forms and triangle behaviour") {
    CHECK(quasimetric(3.0, 4.0, 1.0) == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(quasimetric(0.0, -8.0, 1.0) == doctest::Approx(8.0).epsilon(1e-14));
    CHECK(quasimetric(0.0, 0.5, 0.5) == doctest::Approx(0.25).epsilon(1e-14));
    // order two: plain Euclidean distance, true triangle inequality
    CHECK(quasi_triangle_constant(2.0) <= 1.0 + 1e-9);
    // rough order: only a quasi-triangle inequality, constant above one
    double C = quasi_triangle_constant(0.5);
    CHECK(C > 1.1);
    CHECK(C < 10.0);
}

TEST_CASE("coefficient fields: bounds, forms, expression and csv") {
    auto c = CoefficientField::constant(0.7);
    CHECK(c(3.0, 1.0) == 0.7);
    CHECK(c.lambda1 == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(c.lambda2 == doctest::Approx(0.7).epsilon(1e-12));

    auto s = CoefficientField::sine(1.0, 0.25);
    CHECK(s(0.3, 0.0) == doctest::Approx(1.0 + 0.25 * std::sin(0.3)));
    CHECK(s.lambda1 == doctest::Approx(0.75).epsilon(0.01));
    CHECK(s.lambda2 == doctest::Approx(1.25).epsilon(0.01));
    CHECK(s.holder_seminorm > 0.0);
    CHECK(s.holder_alpha > 0.2);

    auto b = CoefficientField::bump(0.5, 0.5, 2.0);
    CHECK(b(0.0, 0.0) == doctest::Approx(1.0));
    CHECK(b.lambda1 >= 0.5 - 1e-9);

    CHECK_THROWS(CoefficientField::sine(1.0, 1.5));  // loses ellipticity

    nlohmann::json j = {{"form", "sine"}, {"base", 2.0}, {"amplitude", 0.5}};
    auto e = CoefficientField::from_expression(j);
    CHECK(e(1.0, 0.0) == doctest::Approx(2.0 + 0.5 * std::sin(1.0)));
    CHECK_THROWS(CoefficientField::from_expression({{"form", "mystery"}}));

    {
        std::ofstream out("coef_test.csv");
        out << "x,t,value\n";
        for (double x : {-1.0, 0.0, 1.0})
            for (double t : {0.0, 1.0})
                out << x << ',' << t << ',' << (2.0 + x + t) << '\n';
    }
    auto f = CoefficientField::from_csv("coef_test.csv");
    CHECK(f.time_dependent);
    CHECK(f(0.0, 0.0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(f(0.5, 0.5) == doctest::Approx(3.0).epsilon(1e-12));  // bilinear
    CHECK(f(1.0, 1.0) == doctest::Approx(4.0).epsilon(1e-12));
    std::remove("coef_test.csv");

    {
        std::ofstream out("coef_bad.csv");
        out << "x,t,value\n0,0,1\n1,0,2\n1,1,3\n";  // incomplete lattice
    }
    CHECK_THROWS(CoefficientField::from_csv("coef_bad.csv"));
    std::remove("coef_bad.csv");
}

TEST_CASE("parametrix: frozen kernel and its equation") {
    auto a = CoefficientField::sine(1.0, 0.25);
    CHECK_THROWS(parametrix_Z(a, 1.0, 0.0, 1.0, 0.0, 1.0));  // t <= tau

    auto ac = CoefficientField::constant(0.8);
    for (double x : {0.0, 1.1})
        CHECK(parametrix_Z(ac, 1.2, x, 2.0, 0.5, 0.5) ==
              doctest::Approx(poisson_kernel(1.2, x - 0.5, 0.8 * 1.5))
                  .epsilon(1e-13));

    // (d/dt + a(x) (-Lap)^{sigma/2}) Z = -psi_0, checked against a Fourier
    // space operator and a centered time difference on a wide periodic grid
    double xi = 1.2, t = 0.5, dt = t / 128.0;
    Grid g(1, 40.0, 1024, Boundary::periodic);
    auto col = [&](double tt) {
        Field f(g);
        for (int i = 0; i < g.size(); ++i)
            f.v[i] = parametrix_Z(a, 1.0, g.coord(i), tt, xi, 0.0);
        return f;
    };
    Field lo = col(t - dt), mid = col(t), hi = col(t + dt);
    Field Lmid = fourier_apply(1.0, mid);
    for (int i = 0; i < g.size(); ++i) {
        double x = g.coord(i);
        if (std::abs(x) > 10.0) continue;
        double res = (hi.v[i] - lo.v[i]) / (2 * dt) + a(x, 0.0) * Lmid.v[i];
        double psi0 = (a(x, 0.0) - a(xi, 0.0)) *
                      poisson_kernel_dt(1.0, x - xi, a(xi, 0.0) * t);
        CHECK(res == doctest::Approx(-psi0).epsilon(1e-3).scale(1.0));
    }
}

TEST_CASE("levi series: constant coefficient collapses to the parametrix") {
    ParametrixGrids pg;
    pg.L = 10.0;
    pg.n_x = 96;
    pg.n_s = 7;
    auto a = CoefficientField::constant(0.7);
    auto S = levi_series(a, 1.0, pg, 1e-3, 6);
    CHECK(S.K == 0);
    CHECK(S.norms.size() == 1);
    CHECK(S.norms[0] == 0.0);
    auto G = fundamental_solution(S);
    for (double s : {0.05, 0.4, 1.0})
        for (int i = 10; i < pg.n_x; i += 17)
            for (int j = 5; j < pg.n_x; j += 23)
                CHECK(G.at_nodes(i, j, s) ==
                      G.z_val(S.grid.coord(i), S.grid.coord(j), s));
    CHECK(G(0.33, 0.7, -1.2, 0.2) ==
          doctest::Approx(poisson_kernel(1.0, 0.33 + 1.2, 0.7 * 0.5))
              .epsilon(1e-13));
    CHECK(G.conservation(0.3, 0.5) == doctest::Approx(1.0).epsilon(2e-4));
    CHECK(G.conservation(0.0, 0.05) == doctest::Approx(1.0).epsilon(2e-4));
}

TEST_CASE("levi series: oscillating coefficient decays fast") {
    const LeviSeries& S = sine_series();
    CHECK(S.K >= 2);
    CHECK(S.K <= 4);
    REQUIRE(S.norms.size() == size_t(S.K) + 1);
    for (int k = 0; k < S.K; ++k) CHECK(S.norms[k + 1] <= S.norms[k] / 5.0);
    CHECK(S.norms.back() <= S.tol);

    S.write_norms_csv("levi_norms.csv");
    std::ifstream in("levi_norms.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "k,psi_norm");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == S.K + 1);
    std::remove("levi_norms.csv");
}

TEST_CASE("levi series: rejected inputs and divergence reporting") {
    ParametrixGrids pg;
    pg.L = 10.0;
    pg.n_x = 96;
    pg.n_s = 7;

    CoefficientField tdep;
    tdep.a = [](double x, double t) { return 2.0 + std::sin(x - t); };
    tdep.time_dependent = true;
    tdep.measure(10.0, 1.0);
    CHECK_THROWS_AS(levi_series(tdep, 1.0, pg), std::invalid_argument);

    CoefficientField unmeasured;
    unmeasured.a = [](double, double) { return 1.0; };
    CHECK_THROWS_AS(levi_series(unmeasured, 1.0, pg), std::invalid_argument);

    // barely elliptic coefficient over a long gap range: norms stall and the
    // failure message carries the history
    ParametrixGrids pr = pg;
    pr.s_max = 40.0;
    auto rough = CoefficientField::sine(1.0, 0.99);
    try {
        levi_series(rough, 1.0, pr, 1e-12, 3);
        CHECK(false);
    } catch (const std::runtime_error& err) {
        CHECK(std::string(err.what()).find("not decaying") != std::string::npos);
        CHECK(std::string(err.what()).find("1.4") != std::string::npos);
    }
}

TEST_CASE("levi series: graded time quadrature beats uniform at matched cost") {
    ParametrixGrids pg;
    pg.L = 10.0;
    pg.n_x = 64;
    pg.n_s = 5;
    pg.levels = 3;
    auto a = CoefficientField::sine(1.0, 0.25);
    auto Sg = levi_series(a, 1.5, pg, 1e-12, 1, true);
    auto Su = levi_series(a, 1.5, pg, 1e-12, 1, false);
    ParametrixGrids pr = pg;
    pr.levels = 16;
    auto Sr = levi_series(a, 1.5, pr, 1e-12, 1, true);
    double eg = 0.0, eu = 0.0;
    for (int m = 0; m < pg.n_s; ++m)
        for (size_t q = 0; q < Sr.terms[0][m].size(); ++q) {
            eg = std::max(eg, std::abs(Sg.terms[0][m][q] - Sr.terms[0][m][q]));
            eu = std::max(eu, std::abs(Su.terms[0][m][q] - Sr.terms[0][m][q]));
        }
    CHECK(2.0 * eg <= eu);
}

TEST_CASE("fundamental solution: conservation, positivity, gap range") {
    auto G = fundamental_solution(sine_series());
    CHECK(G.conservation(0.0, 0.1) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(G.conservation(0.0, 0.5) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(G.conservation(3.1, 0.5) == doctest::Approx(1.0).epsilon(1e-3));

    const Grid& g = G.grid();
    for (int i = 20; i < g.size(); i += 31)
        for (int j = 16; j < g.size(); j += 29)
            CHECK(G.at_nodes(i, j, 0.3) > 0.0);

    // evaluator agrees with the node values on the lattice
    CHECK(G(g.coord(40), 0.3, g.coord(70), 0.0) ==
          doctest::Approx(G.at_nodes(40, 70, 0.3)).epsilon(1e-11));

    CHECK_THROWS(G(0.0, 0.005, 0.0, 0.0));  // below the resolved gap
    CHECK_THROWS(G.conservation(0.0, 2.0)); // above it
}

TEST_CASE("fundamental solution: equation residual at random probes") {
    auto G = fundamental_solution(sine_series());
    auto rep = residual_check(G, 8, 12);
    CHECK(rep.points == 96);
    CHECK(rep.max_rel <= 1e-2);

    // too coarse a grid for the Fourier oracle is refused
    ParametrixGrids pg;
    pg.L = 10.0;
    pg.n_x = 96;
    pg.n_s = 5;
    auto S = levi_series(CoefficientField::constant(0.5), 1.0, pg);
    auto Gc = fundamental_solution(S);
    CHECK_THROWS_AS(residual_check(Gc, 2, 2), std::invalid_argument);
}

TEST_CASE("solve_nondiv: semigroup oracle, forcing, bounds") {
    ParametrixGrids pg;
    pg.L = 10.0;
    pg.n_x = 128;
    pg.n_s = 11;
    auto S1 = levi_series(CoefficientField::constant(1.0), 1.0, pg);
    auto G1 = fundamental_solution(S1);
    const StableDensity& P = StableDensity::get(1.0);
    Field f0(S1.grid);
    for (int i = 0; i < pg.n_x; ++i)
        f0.v[i] = P.density(S1.grid.coord(i), 1.0);
    auto zero = [](double, double) { return 0.0; };
    auto sol = solve_nondiv(G1, f0, zero, 0.8, 2);
    REQUIRE(sol.times.size() == 2);
    for (size_t q = 0; q < sol.times.size(); ++q)
        for (int i = pg.n_x / 4; i < 3 * pg.n_x / 4; ++i)
            CHECK(sol.states[q].v[i] ==
                  doctest::Approx(P.density(S1.grid.coord(i),
                                            1.0 + sol.times[q]))
                      .epsilon(1e-3).scale(1.0));
    CHECK(sol.weighted_norm_f0 > 0.0);
    CHECK(std::isfinite(sol.sup_half_energy));
    CHECK(sol.sup_half_energy > 0.0);
    CHECK(std::isfinite(sol.dissipation));
    CHECK(sol.max_principle_bound ==
          doctest::Approx(f0.linf()).epsilon(1e-12));

    // unit forcing from rest reproduces f = t away from the box edges
    auto G = fundamental_solution(sine_series());
    auto solF = solve_nondiv(G, Field(G.grid()), [](double, double) { return 1.0; },
                             0.3, 1);
    CHECK(solF.max_principle_bound == doctest::Approx(0.3).epsilon(1e-12));
    for (double x : {0.0, -2.3, 4.7})
        CHECK(solF.states[0].sample1(x) ==
              doctest::Approx(0.3).epsilon(3e-3).scale(1.0));

    CHECK_THROWS(solve_nondiv(G1, f0, zero, 0.001));  // below resolved gap
    CHECK_THROWS(solve_nondiv(G1, f0, zero, 5.0));    // beyond tabulated gaps
    Grid other(1, 10.0, 64, Boundary::extended_by_zero);
    CHECK_THROWS(solve_nondiv(G1, Field(other), zero, 0.5));
    Field bad = f0;
    bad.v[0] = std::nan("");
    CHECK_THROWS(solve_nondiv(G1, bad, zero, 0.5));
}
