// Acceptance gate: eleven pinned criteria, one PASS/FAIL line each.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlfilt/discretize.hpp>
#include <nlfilt/evolve.hpp>
#include <nlfilt/fft.hpp>
#include <nlfilt/model.hpp>
#include <nlfilt/parametrix.hpp>
#include <nlfilt/regularity.hpp>
#include <nlfilt/selfsimilar.hpp>

using namespace nlfilt;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

static clk::time_point tic() { return clk::now(); }
static double toc(clk::time_point t0) {
    return std::chrono::duration<double>(clk::now() - t0).count();
}

static void verdict(int num, const char* label, bool ok, double secs) {
    std::printf("[acceptance] criterion %2d  %-34s %s  (%.1fs)\n", num, label,
                ok ? "PASS" : "FAIL", secs);
    std::fflush(stdout);
    CHECK_MESSAGE(ok, "criterion ", num, " (", label, ")");
}

static Field random_field(const Grid& g, std::uint64_t seed, double lo = -1.0,
                          double hi = 1.0) {
    Rng rng(seed);
    std::uniform_real_distribution<double> U(lo, hi);
    Field f(g);
    for (auto& v : f.v) v = U(rng);
    return f;
}

TEST_CASE("criterion 1: operator vs Fourier multiplier") {
    auto t0 = tic();
    bool ok = true;
    for (double s : {0.5, 1.0, 1.5}) {
        Grid g(1, pi, 256, Boundary::periodic);
        Grid g2(1, pi, 512, Boundary::periodic);
        auto L = assemble(KernelSpec::fractional(1, s), g);
        auto L2 = assemble(KernelSpec::fractional(1, s), g2);
        for (int k : {1, 2, 4, 8}) {
            auto worst = [&](const DiscreteOperator& Lop, const Grid& gg) {
                Field f(gg);
                for (int i = 0; i < gg.size(); ++i)
                    f.v[i] = std::cos(k * gg.coord(i));
                Field Lf = apply(Lop, f);
                double lam = std::pow(double(k), s), err = 0.0;
                for (int i = 0; i < gg.size(); ++i)
                    err = std::max(err, std::abs(Lf.v[i] - lam * f.v[i]));
                return err / lam;
            };
            double e1 = worst(L, g), e2 = worst(L2, g2);
            ok = ok && e1 <= 0.02 && e2 < e1;
        }
    }
    double secs = toc(t0);
    verdict(1, "operator oracle (2%, refining)", ok && secs < 5.0, secs);
}

TEST_CASE("criterion 2: maximum principle and T-contraction") {
    auto t0 = tic();
    Grid g(1, 10.0, 128, Boundary::extended_by_zero);
    auto L = assemble(KernelSpec::fractional(1, 1.0), g);
    Nonlinearity nl = Nonlinearity::power_law(2.0);
    bool ok = true;
    for (int pair = 0; pair < 20 && ok; ++pair) {
        Field u = random_field(g, 100 + pair), v = random_field(g, 200 + pair);
        double scale = std::max({1.0, u.linf(), v.linf()});
        double linf_u = u.linf(), linf_v = v.linf();
        double tc = t_contraction(u, v);
        for (int k = 0; k < 100; ++k) {
            u = step(u, L, nl, 0.01);
            v = step(v, L, nl, 0.01);
            double lu = u.linf(), lv = v.linf(), t = t_contraction(u, v);
            ok = ok && lu <= linf_u + 1e-8 * scale &&
                 lv <= linf_v + 1e-8 * scale && t <= tc + 1e-8 * scale;
            linf_u = lu;
            linf_v = lv;
            tc = t;
        }
    }
    double secs = toc(t0);
    verdict(2, "max principle + contraction", ok && secs < 60.0, secs);
}

TEST_CASE("criterion 3: mass conservation with leakage accounting") {
    auto t0 = tic();
    Grid g(1, 40.0, 800, Boundary::extended_by_zero);
    auto L = assemble(KernelSpec::fractional(1, 1.0), g);
    Nonlinearity nl = Nonlinearity::power_law(2.0);
    Field u0 = make_box(g, 0.0, 2.0, 1.0);
    EvolveConfig cfg;
    cfg.tau = 0.01;
    cfg.T = 10.0;
    cfg.snapshot_every = 100;
    Trajectory traj = evolve(u0, L, nl, cfg);
    double drift = std::abs(traj.rows.back().mass - traj.rows.front().mass);
    bool ok = drift <= 1e-6 + traj.leakage && traj.leakage < 1e-3;
    double secs = toc(t0);
    verdict(3, "mass drift vs leakage", ok && secs < 120.0, secs);
}

TEST_CASE("criterion 4: smoothing exponent for three parameter sets") {
    auto t0 = tic();
    struct Case {
        double m, sigma, R;
        int n;
    };
    bool ok = true;
    for (Case c : {Case{2.0, 1.0, 60.0, 600}, Case{1.0, 1.0, 150.0, 1200},
                   Case{2.0, 0.5, 60.0, 600}}) {
        Grid g(1, c.R, c.n, Boundary::extended_by_zero);
        auto L = assemble(KernelSpec::fractional(1, c.sigma), g);
        Nonlinearity nl = Nonlinearity::power_law(c.m);
        Field u0 = make_box(g, 0.0, 2.0, 1.0);
        EvolveConfig cfg;
        cfg.tau = 0.05;
        cfg.T = 50.0;
        cfg.snapshot_every = 1000;
        Trajectory traj = evolve(u0, L, nl, cfg);
        DecayFit fit = fit_decay_exponent(traj, 1.0, 50.0);
        double gamma = 1.0 / ((c.m - 1.0) + c.sigma);  // N/(N(m-1)+sigma), N=1
        bool this_ok = std::abs(fit.gamma_hat - gamma) <= 0.10 * gamma;
        if (!this_ok)
            std::printf("  [criterion 4] m=%g sigma=%g: gamma_hat=%.4f "
                        "theory=%.4f\n",
                        c.m, c.sigma, fit.gamma_hat, gamma);
        ok = ok && this_ok;
    }
    double secs = toc(t0);
    verdict(4, "smoothing exponent (10%)", ok && secs < 600.0, secs);
}

TEST_CASE("criterion 5: self-similar profile oracle (m=1)") {
    auto t0 = tic();
    // sigma=1.5: profile vs an independent spectral heat-semigroup evaluation
    BarenblattOptions opt;
    opt.R_y = 50.0;
    opt.n_y = 512;
    BarenblattResult B = barenblatt(1.0, 1.5, 1.0, opt);

    Grid gp(1, 100.0, 8192, Boundary::periodic);
    std::vector<double> delta(gp.size(), 0.0);
    delta[gp.size() / 2] = 1.0 / gp.h;  // unit mass at x = 0
    auto heat = spectral_apply(delta, gp.length(), [&](double xi) {
        return std::exp(-std::pow(xi, 1.5));
    });
    Field ref(gp, 1.0);
    ref.v = heat;
    double gap = 0.0;
    for (int i = 0; i < B.profile.grid.size(); ++i)
        gap = std::max(gap, std::abs(B.profile.v[i] -
                                     ref.sample1(B.profile.grid.coord(i))));
    bool ok = gap <= 1e-3;

    // sigma=1: Cauchy closed form to 1e-6
    BarenblattResult C = barenblatt(1.0, 1.0, 1.0, opt);
    double cgap = 0.0;
    for (int i = 0; i < C.profile.grid.size(); ++i) {
        double y = C.profile.grid.coord(i);
        cgap = std::max(cgap,
                        std::abs(C.profile.v[i] - 1.0 / (pi * (1.0 + y * y))));
    }
    ok = ok && cgap <= 1e-6;
    double secs = toc(t0);
    verdict(5, "profile oracle (1e-3 / Cauchy 1e-6)", ok && secs < 60.0, secs);
}

TEST_CASE("criterion 6: rescaled convergence to the self-similar profile") {
    auto t0 = tic();
    double m = 2.0, sigma = 1.0, M = 1.0;
    auto e = exponents(1, sigma, m);
    BarenblattOptions opt;
    opt.R_dom = 200.0;
    opt.n = 2000;
    opt.R_y = 50.0;
    opt.n_y = 1000;
    opt.T = 64.0;
    opt.tau0 = 0.01;
    BarenblattResult B = barenblatt(m, sigma, M, opt);

    Grid g(1, 200.0, 2000, Boundary::extended_by_zero);
    auto L = assemble(KernelSpec::fractional(1, sigma), g);
    Nonlinearity nl = Nonlinearity::power_law(m);
    Field u = make_box(g, 0.0, 2.0, M);
    auto run_to = [&](double t_end, double tau) {
        while (u.time < t_end - 1e-12)
            u = step(u, L, nl, std::min(tau, t_end - u.time));
    };
    std::vector<double> ts, ms;
    run_to(1.0, 0.01);
    for (double t = 1.0; t <= 64.0 + 1e-12; t *= 2.0) {
        if (t > 1.0) run_to(t, 0.01 * t / 2.0);
        Field Z = rescale(u, t, e.alpha, e.beta, B.profile.grid);
        double metric = 0.0;
        for (int i = 0; i < Z.grid.size(); ++i)
            metric = std::max(metric, std::abs(Z.v[i] - B.profile.v[i]));
        ts.push_back(t);
        ms.push_back(metric);
    }
    bool ok = ms.back() < 0.1 * ms.front();
    for (size_t q = 1; q < ms.size(); ++q)
        if (ts[q] > 2.0 + 1e-12) ok = ok && ms[q] <= ms[q - 1] + 1e-12;
    if (!ok)
        for (size_t q = 0; q < ms.size(); ++q)
            std::printf("  [criterion 6] t=%g metric=%.5f\n", ts[q], ms[q]);
    double secs = toc(t0);
    verdict(6, "asymptotic metric (<0.1x at t=64)", ok && secs < 900.0, secs);
}

TEST_CASE("criterion 7: Stroock-Varopoulos for the power triples") {
    auto t0 = tic();
    Grid g(1, 5.0, 64, Boundary::extended_by_zero);
    auto L = assemble(KernelSpec::fractional(1, 1.0), g);
    bool ok = true;
    int trial = 0;
    for (double m : {2.0, 3.0}) {
        SVTriple triple = SVTriple::power(m);
        for (int q = 0; q < 500; ++q, ++trial) {
            Field w = random_field(g, 1000 + trial);
            auto rep = check_stroock_varopoulos(L, w, triple);
            ok = ok && rep.passed;
        }
    }
    double secs = toc(t0);
    verdict(7, "SV inequality (1000 trials)", ok && secs < 60.0, secs);
}

TEST_CASE("criterion 8: barrier energy sandwich") {
    auto t0 = tic();
    Grid g(1, 5.0, 64, Boundary::extended_by_zero);
    bool ok = true;
    ThetaMap maps[2] = {ThetaMap::linear(), ThetaMap::beta_of_power(2.0)};
    for (int q = 0; q < 200; ++q) {
        Field w = random_field(g, 5000 + q, 0.0, 2.0);
        Field psi = random_field(g, 6000 + q, 0.0, 1.0);
        for (auto& th : maps) {
            auto rep = energy_Bpsi(w, psi, th);
            ok = ok && rep.sandwich_ok;
        }
    }
    double secs = toc(t0);
    verdict(8, "B_psi sandwich (200 pairs)", ok && secs < 60.0, secs);
}

TEST_CASE("criterion 9: Holder diagnostics stable under refinement") {
    auto t0 = tic();
    auto run = [&](int n) {
        Grid g(1, 20.0, n, Boundary::extended_by_zero);
        auto L = assemble(KernelSpec::fractional(1, 1.0), g);
        Nonlinearity nl = Nonlinearity::power_law(2.0);
        Field u0 = make_two_bump(g, 6.0, 2.0, 1.0, 1.0);
        EvolveConfig cfg;
        cfg.tau = 0.005;
        cfg.T = 2.0;
        cfg.snapshot_every = 1;
        return evolve(u0, L, nl, cfg);
    };
    Trajectory coarse = run(256), fine = run(512);
    const double probes[5][2] = {
        {0.0, 1.0}, {-3.0, 1.0}, {3.0, 1.0}, {-1.5, 1.0}, {1.5, 1.0}};
    bool ok = true;
    for (auto& p : probes) {
        auto rc = holder_fit(coarse, p[0], p[1], 2.0, 0.6, 5);
        auto rf = holder_fit(fine, p[0], p[1], 2.0, 0.6, 5);
        bool this_ok = !rc.flat && !rf.flat && rc.alpha_hat > 0.0 &&
                       rf.alpha_hat > 0.0 &&
                       std::abs(rf.alpha_hat - rc.alpha_hat) <=
                           0.20 * std::abs(rc.alpha_hat);
        if (!this_ok)
            std::printf("  [criterion 9] probe x=%g: coarse=%.4f fine=%.4f\n",
                        p[0], rc.alpha_hat, rf.alpha_hat);
        ok = ok && this_ok;
    }
    double secs = toc(t0);
    verdict(9, "Holder exponents (5 probes, 20%)", ok && secs < 600.0, secs);
}

TEST_CASE("criterion 10: fundamental solution via the Levi construction") {
    auto t0 = tic();
    ParametrixGrids pg;  // L=15, n_x=192, gaps [0.02, 1]
    bool ok = true;

    // constant coefficient: Gamma coincides with the frozen kernel
    {
        auto S = levi_series(CoefficientField::constant(0.7), 1.0, pg);
        auto G = fundamental_solution(S);
        double worst = 0.0;
        for (double s : {0.05, 0.3, 0.9})
            for (int i = 20; i < pg.n_x; i += 17)
                for (int j = 10; j < pg.n_x; j += 23)
                    worst = std::max(worst,
                                     std::abs(G.at_nodes(i, j, s) -
                                              G.z_val(S.grid.coord(i),
                                                      S.grid.coord(j), s)));
        ok = ok && worst <= 1e-10;
    }

    // oscillating coefficient: decay, conservation, residual
    double tol = 1e-3;
    auto S = levi_series(CoefficientField::sine(1.0, 0.25), 1.0, pg, tol, 8);
    for (size_t k = 1; k + 1 < S.norms.size(); ++k)
        ok = ok && S.norms[k + 1] <= S.norms[k] / 2.0;
    auto G = fundamental_solution(S);
    for (auto [x, s] : {std::pair{0.0, 0.1}, {0.0, 0.5}, {3.1, 1.0}})
        ok = ok && std::abs(G.conservation(x, s) - 1.0) <= 1e-3;
    auto rep = residual_check(G, 10, 10);
    ok = ok && rep.points == 100 && rep.max_rel <= 10.0 * tol;

    // semigroup oracle through the nondivergence solver
    {
        auto S1 = levi_series(CoefficientField::constant(1.0), 1.0, pg);
        auto G1 = fundamental_solution(S1);
        const StableDensity& P = StableDensity::get(1.0);
        Field f0(S1.grid);
        for (int i = 0; i < pg.n_x; ++i)
            f0.v[i] = P.density(S1.grid.coord(i), 1.0);
        auto sol = solve_nondiv(G1, f0, [](double, double) { return 0.0; },
                                0.8, 2);
        for (size_t q = 0; q < sol.times.size(); ++q)
            for (int i = pg.n_x / 4; i < 3 * pg.n_x / 4; ++i)
                ok = ok && std::abs(sol.states[q].v[i] -
                                    P.density(S1.grid.coord(i),
                                              1.0 + sol.times[q])) <= 1e-3;
    }
    double secs = toc(t0);
    verdict(10, "parametrix suite", ok && secs < 600.0, secs);
}

TEST_CASE("criterion 11: preset reruns are byte-identical") {
    auto t0 = tic();
    fs::path w = fs::temp_directory_path() / "nlfilt_acceptance";
    fs::create_directories(w);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    bool ok = true;
    int run = 0;
    for (const char* preset : {"thm1.1-mass", "thm1.2-holder"}) {
        fs::path o1 = w / ("a" + std::to_string(run)),
                 o2 = w / ("b" + std::to_string(run));
        ++run;
        for (const fs::path& o : {o1, o2}) {
            std::string cmd = std::string(NLFILT_BIN) + " run " + preset +
                              " --seed 7 --out " + o.string() +
                              " > /dev/null 2>&1";
            ok = ok && std::system(cmd.c_str()) == 0;
        }
        for (auto& entry : fs::directory_iterator(o1)) {
            if (entry.path().extension() != ".csv") continue;
            ok = ok && slurp(entry.path()) ==
                           slurp(o2 / entry.path().filename());
        }
    }
    double secs = toc(t0);
    verdict(11, "determinism (byte-identical CSVs)", ok, secs);
}
