// nlfilt: command-line front end.
//
//   nlfilt run <config.json|preset-name> [--out DIR] [--seed N] [--verbose]
//   nlfilt presets
//
// Exit codes: 0 success, 2 configuration/validation failure (unknown keys are
// listed), 3 solver failure. Identical config + seed reproduces byte-identical
// CSV outputs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <nlfilt/discretize.hpp>
#include <nlfilt/evolve.hpp>
#include <nlfilt/grid.hpp>
#include <nlfilt/io.hpp>
#include <nlfilt/model.hpp>
#include <nlfilt/parametrix.hpp>
#include <nlfilt/regularity.hpp>
#include <nlfilt/selfsimilar.hpp>

using nlohmann::json;
using namespace nlfilt;
namespace fs = std::filesystem;

// ---- presets ---------------------------------------------------------------

static const std::vector<std::pair<std::string, std::string>> kPresets = {
    {"thm1.1-mass",
     "mass conservation: m=2 box data, fractional kernel, drift vs leakage"},
    {"thm1.3-smoothing",
     "L^inf decay exponent: fitted gamma vs N/(N(m-1)+sigma)"},
    {"thm1.4-asymptotics",
     "rescaled convergence to the self-similar profile, t,metric table"},
    {"thm1.2-holder",
     "interior Holder diagnostics on a two-bump run with a degeneracy probe"},
    {"appendix-parametrix",
     "Levi construction of the fundamental solution, norms and residuals"},
};

static json preset_config(const std::string& name) {
    if (name == "thm1.1-mass")
        return json{
            {"experiment", "evolve"},
            {"kernel", {{"form", "fractional"}, {"sigma", 1.0}}},
            {"nonlinearity", {{"m", 2.0}}},
            {"grid", {{"R_dom", 40.0}, {"n", 400}}},
            {"initial",
             {{"type", "box"}, {"center", 0.0}, {"width", 2.0}, {"mass", 1.0}}},
            {"time", {{"tau", 0.05}, {"T", 10.0}, {"snapshot_every", 20}}},
        };
    if (name == "thm1.3-smoothing")
        return json{
            {"experiment", "evolve"},
            {"kernel", {{"form", "fractional"}, {"sigma", 1.0}}},
            {"nonlinearity", {{"m", 2.0}}},
            {"grid", {{"R_dom", 60.0}, {"n", 600}}},
            {"initial",
             {{"type", "box"}, {"center", 0.0}, {"width", 2.0}, {"mass", 1.0}}},
            {"time", {{"tau", 0.05}, {"T", 50.0}, {"snapshot_every", 100}}},
        };
    if (name == "thm1.4-asymptotics")
        return json{
            {"experiment", "asymptotics"},
            {"kernel", {{"form", "fractional"}, {"sigma", 1.0}}},
            {"nonlinearity", {{"m", 2.0}}},
            {"grid", {{"R_dom", 100.0}, {"n", 1000}}},
            {"initial",
             {{"type", "box"}, {"center", 0.0}, {"width", 2.0}, {"mass", 1.0}}},
            {"time", {{"tau", 0.02}, {"T", 16.0}}},
            {"barenblatt",
             {{"R_dom", 100.0}, {"n", 1000}, {"R_y", 30.0}, {"n_y", 600},
              {"T", 16.0}, {"tau0", 0.02}}},
        };
    if (name == "thm1.2-holder")
        return json{
            {"experiment", "regularity"},
            {"kernel", {{"form", "fractional"}, {"sigma", 1.0}}},
            {"nonlinearity", {{"m", 2.0}}},
            {"grid", {{"R_dom", 20.0}, {"n", 256}}},
            {"initial",
             {{"type", "two_bump"}, {"sep", 6.0}, {"width", 2.0},
              {"m_pos", 1.0}, {"m_neg", 1.0}}},
            {"time", {{"tau", 0.005}, {"T", 2.0}, {"snapshot_every", 1}}},
            {"regularity",
             {{"probes", json::array({json::array({0.0, 1.0}),
                                      json::array({-3.0, 1.0}),
                                      json::array({1.5, 1.0})})},
              {"R0", 2.0}, {"ratio", 0.6}, {"levels", 5}}},
        };
    if (name == "appendix-parametrix")
        return json{
            {"experiment", "parametrix"},
            {"parametrix",
             {{"coefficient",
               {{"form", "sine"}, {"base", 1.0}, {"amplitude", 0.25}}},
              {"sigma", 1.0}, {"L", 10.0}, {"n_x", 128},
              {"s_min", 0.02}, {"s_max", 1.0}, {"n_s", 11},
              {"tol", 1e-3}, {"K_max", 6},
              {"residual_cols", 4}, {"residual_pts", 8}}},
        };
    throw std::invalid_argument("unknown preset: " + name);
}

// ---- schema validation -----------------------------------------------------

static void collect_unknown(const json& j, const std::string& path,
                            std::vector<std::string>& bad);

static const std::map<std::string, std::set<std::string>> kSchema = {
    {"", {"experiment", "out", "seed", "verbose", "kernel", "nonlinearity",
          "grid", "initial", "time", "barenblatt", "regularity", "parametrix",
          "hypotheses"}},
    {"kernel", {"form", "sigma", "dim", "epsilon", "seed", "Lambda"}},
    {"nonlinearity", {"m", "a"}},
    {"grid", {"R_dom", "n", "boundary"}},
    {"initial",
     {"type", "center", "width", "mass", "sep", "m_pos", "m_neg", "sd"}},
    {"time", {"tau", "T", "snapshot_every"}},
    {"barenblatt", {"R_dom", "n", "R_y", "n_y", "T", "tau0"}},
    {"regularity", {"probes", "R0", "ratio", "levels"}},
    {"parametrix",
     {"coefficient", "sigma", "L", "n_x", "s_min", "s_max", "n_s", "levels",
      "tol", "K_max", "residual_cols", "residual_pts"}},
    {"parametrix.coefficient",
     {"form", "value", "base", "amplitude", "frequency", "width", "csv"}},
    {"hypotheses", {"n_pairs", "n_scalar", "extent", "scalar_max"}},
};

static void collect_unknown(const json& j, const std::string& path,
                            std::vector<std::string>& bad) {
    auto it = kSchema.find(path);
    if (it == kSchema.end() || !j.is_object()) return;
    for (auto& [key, val] : j.items()) {
        if (!it->second.count(key)) {
            bad.push_back(path.empty() ? key : path + "." + key);
            continue;
        }
        std::string sub = path.empty() ? key : path + "." + key;
        if (kSchema.count(sub)) collect_unknown(val, sub, bad);
    }
}

// ---- config readers --------------------------------------------------------

static Grid grid_from(const json& cfg) {
    json g = cfg.value("grid", json::object());
    Boundary b = g.value("boundary", std::string("extended")) == "periodic"
                     ? Boundary::periodic
                     : Boundary::extended_by_zero;
    return Grid(1, g.value("R_dom", 40.0), g.value("n", 400), b);
}

static KernelSpec kernel_from(const json& cfg, std::uint64_t seed) {
    json k = cfg.value("kernel", json{{"form", "fractional"}, {"sigma", 1.0}});
    if (!k.contains("form")) k["form"] = "fractional";
    if (!k.contains("sigma")) k["sigma"] = 1.0;
    KernelSpec spec = KernelSpec::from_json(k);
    if (!k.contains("seed")) spec.seed = seed;
    return spec;
}

static Field initial_from(const json& cfg, const Grid& g) {
    json in = cfg.value("initial", json::object());
    std::string type = in.value("type", std::string("box"));
    if (type == "box")
        return make_box(g, in.value("center", 0.0), in.value("width", 2.0),
                        in.value("mass", 1.0));
    if (type == "gaussian")
        return make_gaussian(g, in.value("center", 0.0), in.value("sd", 1.0),
                             in.value("mass", 1.0));
    if (type == "two_bump")
        return make_two_bump(g, in.value("sep", 6.0), in.value("width", 2.0),
                             in.value("m_pos", 1.0), in.value("m_neg", 1.0));
    if (type == "near_delta") return make_near_delta(g, in.value("mass", 1.0));
    throw std::invalid_argument("unknown initial data type: " + type);
}

static CoefficientField coefficient_from(const json& pc) {
    json c = pc.value("coefficient",
                      json{{"form", "constant"}, {"value", 1.0}});
    if (c.contains("csv")) return CoefficientField::from_csv(c.at("csv"));
    return CoefficientField::from_expression(c);
}

// ---- experiment runners (each returns headline metrics) --------------------

struct RunContext {
    fs::path out;
    bool verbose = false;
    std::uint64_t seed = 1;
    std::vector<std::string> outputs;

    std::string emit(const std::string& name) {
        outputs.push_back(name);
        return (out / name).string();
    }
    void log(const std::string& msg) const {
        if (verbose) std::cerr << msg << '\n';
    }
};

static void write_diag_csv(const std::vector<DiagnosticsRow>& rows,
                           const std::string& path) {
    CsvWriter csv(path, "t,mass,linf,l1,energy,pos_mass,neg_mass,iters");
    for (auto& r : rows)
        csv.row({r.t, r.mass, r.linf, r.l1, r.energy, r.pos_mass, r.neg_mass,
                 double(r.iters)});
}

static json run_evolve(const json& cfg, RunContext& ctx) {
    Grid g = grid_from(cfg);
    KernelSpec k = kernel_from(cfg, ctx.seed);
    Nonlinearity nl = Nonlinearity::from_json(
        cfg.value("nonlinearity", json::object()));
    auto L = assemble(k, g);
    Field u0 = initial_from(cfg, g);
    json tm = cfg.value("time", json::object());
    EvolveConfig ec;
    ec.tau = tm.value("tau", 0.01);
    ec.T = tm.value("T", 1.0);
    ec.snapshot_every = tm.value("snapshot_every", 1);

    json metrics;
    if (ec.T == 0.0) {
        // no steps: a single diagnostic row of the initial state
        Field pu(g);
        for (int i = 0; i < g.size(); ++i) pu.v[i] = phi_apply(nl, u0.v[i]);
        DiagnosticsRow row;
        row.t = 0.0;
        row.mass = u0.mass();
        row.linf = u0.linf();
        row.l1 = u0.l1();
        row.energy = quadratic(L, pu);
        row.pos_mass = u0.pos_mass();
        row.neg_mass = u0.neg_mass();
        write_diag_csv({row}, ctx.emit("diagnostics.csv"));
        write_field_binary(u0, ctx.emit("field_final.bin"));
        metrics["mass_drift"] = 0.0;
        metrics["rows"] = 1;
        return metrics;
    }

    ctx.log("evolving to T=" + std::to_string(ec.T));
    Trajectory traj = evolve(u0, L, nl, ec);
    write_diag_csv(traj.rows, ctx.emit("diagnostics.csv"));
    write_field_binary(traj.snapshots.back(), ctx.emit("field_final.bin"));
    write_field_csv(traj.snapshots.back(), ctx.emit("field_final.csv"));
    metrics["mass_drift"] =
        std::abs(traj.rows.back().mass - traj.rows.front().mass);
    metrics["boundary_leakage"] = traj.leakage;
    metrics["rows"] = traj.rows.size();
    double t0 = std::max(1.0, 2.0 * ec.tau), t1 = ec.T;
    try {
        DecayFit fit = fit_decay_exponent(traj, t0, t1);
        metrics["gamma_hat"] = fit.gamma_hat;
        metrics["gamma_fit_residual"] = fit.residual;
        auto e = exponents(1, k.sigma, nl.m);
        metrics["gamma_theory"] = e.alpha;  // N/(N(m-1)+sigma) in 1D
    } catch (const std::exception&) {
        // fit window smaller than three rows: report the raw series only
    }
    return metrics;
}

static json run_asymptotics(const json& cfg, RunContext& ctx) {
    KernelSpec k = kernel_from(cfg, ctx.seed);
    Nonlinearity nl = Nonlinearity::from_json(
        cfg.value("nonlinearity", json::object()));
    json in = cfg.value("initial", json::object());
    double M = in.value("mass", 1.0);
    json bb = cfg.value("barenblatt", json::object());
    BarenblattOptions opt;
    opt.R_dom = bb.value("R_dom", 100.0);
    opt.n = bb.value("n", 1000);
    opt.R_y = bb.value("R_y", 30.0);
    opt.n_y = bb.value("n_y", 600);
    opt.T = bb.value("T", 16.0);
    opt.tau0 = bb.value("tau0", 0.02);

    ctx.log("constructing the self-similar profile");
    BarenblattResult B = barenblatt(nl.m, k.sigma, M, opt);
    write_field_binary(B.profile, ctx.emit("profile.bin"));
    {
        CsvWriter csv((ctx.out / "profile_gaps.csv").string(), "t,gap");
        ctx.outputs.push_back("profile_gaps.csv");
        for (size_t q = 0; q < B.times.size(); ++q)
            csv.row({B.times[q], B.gaps[q]});
    }

    Grid g = grid_from(cfg);
    auto L = assemble(k, g);
    Field u = initial_from(cfg, g);
    json tm = cfg.value("time", json::object());
    double T = tm.value("T", 16.0), tau0 = tm.value("tau", 0.02);
    auto e = exponents(1, k.sigma, nl.m);

    auto run_to = [&](double t_end, double tau) {
        while (u.time < t_end - 1e-12)
            u = step(u, L, nl, std::min(tau, t_end - u.time));
    };
    std::vector<double> ts, ms;
    ctx.log("evolving through dyadic times");
    run_to(1.0, tau0);
    for (double t = 1.0; t <= T + 1e-12; t *= 2.0) {
        if (t > 1.0) run_to(t, tau0 * t / 2.0);
        Field Z = rescale(u, t, e.alpha, e.beta, B.profile.grid);
        double metric = 0.0;
        for (int i = 0; i < Z.grid.size(); ++i)
            metric = std::max(metric, std::abs(Z.v[i] - B.profile.v[i]));
        ts.push_back(t);
        ms.push_back(metric);
    }
    {
        CsvWriter csv((ctx.out / "asymptotics.csv").string(), "t,metric");
        ctx.outputs.push_back("asymptotics.csv");
        for (size_t q = 0; q < ts.size(); ++q) csv.row({ts[q], ms[q]});
    }
    json metrics;
    metrics["alpha"] = e.alpha;
    metrics["beta"] = e.beta;
    metrics["metric_t"] = ts;
    metrics["metric"] = ms;
    metrics["final_over_initial"] = ms.back() / std::max(ms.front(), 1e-300);
    metrics["profile_final_gap"] = B.final_gap;
    return metrics;
}

static json run_regularity(const json& cfg, RunContext& ctx) {
    Grid g = grid_from(cfg);
    KernelSpec k = kernel_from(cfg, ctx.seed);
    Nonlinearity nl = Nonlinearity::from_json(
        cfg.value("nonlinearity", json::object()));
    auto L = assemble(k, g);
    Field u0 = initial_from(cfg, g);
    json tm = cfg.value("time", json::object());
    EvolveConfig ec;
    ec.tau = tm.value("tau", 0.005);
    ec.T = tm.value("T", 2.0);
    ec.snapshot_every = tm.value("snapshot_every", 1);
    ctx.log("evolving the diagnostic trajectory");
    Trajectory traj = evolve(u0, L, nl, ec);

    json rg = cfg.value("regularity", json::object());
    double R0 = rg.value("R0", 2.0), ratio = rg.value("ratio", 0.6);
    int levels = rg.value("levels", 5);
    json probes = rg.value(
        "probes", json::array({json::array({0.0, ec.T / 2.0})}));

    json metrics;
    metrics["probes"] = json::array();
    for (size_t p = 0; p < probes.size(); ++p) {
        double x0 = probes[p][0], t0 = probes[p][1];
        OscillationReport rep = holder_fit(traj, x0, t0, R0, ratio, levels);
        std::string name = "oscillation_probe" + std::to_string(p) + ".csv";
        rep.write_csv(ctx.emit(name));
        json entry = rep.summary();
        entry["x0"] = x0;
        entry["t0"] = t0;
        metrics["probes"].push_back(entry);
    }
    write_diag_csv(traj.rows, ctx.emit("diagnostics.csv"));
    return metrics;
}

static json run_parametrix(const json& cfg, RunContext& ctx) {
    json pc = cfg.value("parametrix", json::object());
    CoefficientField a = coefficient_from(pc);
    double sigma = pc.value("sigma", 1.0);
    ParametrixGrids pg;
    pg.L = pc.value("L", 10.0);
    pg.n_x = pc.value("n_x", 128);
    pg.s_min = pc.value("s_min", 0.02);
    pg.s_max = pc.value("s_max", 1.0);
    pg.n_s = pc.value("n_s", 11);
    pg.levels = pc.value("levels", 12);
    double tol = pc.value("tol", 1e-3);
    int K_max = pc.value("K_max", 6);

    ctx.log("building the Levi series");
    LeviSeries S = levi_series(a, sigma, pg, tol, K_max);
    S.write_norms_csv(ctx.emit("levi_norms.csv"));
    auto G = fundamental_solution(S);

    // central column of Gamma at the largest resolved gap
    int j0 = pg.n_x / 2;
    {
        CsvWriter csv((ctx.out / "gamma_slice.csv").string(), "x,gamma");
        ctx.outputs.push_back("gamma_slice.csv");
        for (int i = 0; i < pg.n_x; ++i)
            csv.row({S.grid.coord(i), G.at_nodes(i, j0, pg.s_max)});
    }

    json metrics;
    metrics["levi_terms"] = S.K;
    metrics["levi_norms"] = S.norms;
    metrics["conservation_mid_gap"] = G.conservation(0.0, 0.5 * pg.s_max);
    int rc = pc.value("residual_cols", 4), rp = pc.value("residual_pts", 8);
    if (rc > 0) {
        try {
            auto rep = residual_check(G, rc, rp);
            metrics["residual_max_abs"] = rep.max_abs;
            metrics["residual_max_rel"] = rep.max_rel;
            metrics["residual_points"] = rep.points;
        } catch (const std::invalid_argument& err) {
            metrics["residual_skipped"] = err.what();
        }
    }
    return metrics;
}

static json run_hypotheses(const json& cfg, RunContext& ctx) {
    KernelSpec k = kernel_from(cfg, ctx.seed);
    Nonlinearity nl = Nonlinearity::from_json(
        cfg.value("nonlinearity", json::object()));
    json hp = cfg.value("hypotheses", json::object());
    SamplePlan plan;
    plan.n_pairs = hp.value("n_pairs", 1000);
    plan.n_scalar = hp.value("n_scalar", 400);
    plan.extent = hp.value("extent", 5.0);
    plan.scalar_max = hp.value("scalar_max", 10.0);
    plan.seed = ctx.seed;
    ValidationReport rep = validate_hypotheses(k, nl, plan);
    {
        std::ofstream out(ctx.out / "hypothesis_checks.csv");
        ctx.outputs.push_back("hypothesis_checks.csv");
        out << "name,passed,worst_ratio\n";
        for (auto& c : rep.checks)
            out << '"' << c.name << "\"," << (c.passed ? 1 : 0) << ','
                << fmt_double(c.worst_ratio) << '\n';
    }
    json metrics;
    metrics["all_passed"] = rep.all_passed();
    metrics["checks"] = json::array();
    for (auto& c : rep.checks)
        metrics["checks"].push_back({{"name", c.name},
                                     {"passed", c.passed},
                                     {"worst_ratio", c.worst_ratio},
                                     {"detail", c.detail}});
    return metrics;
}

// ---- driver ----------------------------------------------------------------

static int run_command(const std::string& config_arg, const std::string& out_flag,
                       bool has_seed, std::uint64_t seed_flag, bool verbose) {
    json cfg;
    bool is_preset = false;
    for (auto& [name, desc] : kPresets)
        if (name == config_arg) {
            cfg = preset_config(name);
            is_preset = true;
        }
    if (!is_preset) {
        std::ifstream in(config_arg);
        if (!in) {
            std::cerr << "error: cannot open config " << config_arg << '\n';
            return 2;
        }
        try {
            in >> cfg;
        } catch (const json::exception& err) {
            std::cerr << "error: malformed JSON: " << err.what() << '\n';
            return 2;
        }
    }
    if (!cfg.is_object()) {
        std::cerr << "error: config must be a JSON object\n";
        return 2;
    }

    std::vector<std::string> bad;
    collect_unknown(cfg, "", bad);
    if (!bad.empty()) {
        std::cerr << "error: unknown configuration keys:";
        for (auto& b : bad) std::cerr << ' ' << b;
        std::cerr << '\n';
        return 2;
    }

    static const std::set<std::string> kExperiments = {
        "evolve", "barenblatt", "asymptotics", "regularity", "parametrix",
        "check-hypotheses"};
    std::string exp = cfg.value("experiment", std::string());
    if (!kExperiments.count(exp)) {
        std::cerr << "error: experiment must be one of:";
        for (auto& e : kExperiments) std::cerr << ' ' << e;
        std::cerr << '\n';
        return 2;
    }

    RunContext ctx;
    ctx.out = !out_flag.empty() ? fs::path(out_flag)
                                : fs::path(cfg.value("out", std::string(".")));
    ctx.seed = has_seed ? seed_flag : cfg.value("seed", std::uint64_t(1));
    ctx.verbose = verbose || cfg.value("verbose", false);
    cfg["out"] = ctx.out.string();
    cfg["seed"] = ctx.seed;
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec || !fs::is_directory(ctx.out)) {
        std::cerr << "error: cannot create output directory " << ctx.out << '\n';
        return 2;
    }

    json summary;
    summary["experiment"] = exp;
    summary["inputs"] = cfg;
    summary["partial"] = false;
    int code = 0;
    try {
        if (exp == "evolve")
            summary["metrics"] = run_evolve(cfg, ctx);
        else if (exp == "asymptotics" || exp == "barenblatt")
            summary["metrics"] = run_asymptotics(cfg, ctx);
        else if (exp == "regularity")
            summary["metrics"] = run_regularity(cfg, ctx);
        else if (exp == "parametrix")
            summary["metrics"] = run_parametrix(cfg, ctx);
        else
            summary["metrics"] = run_hypotheses(cfg, ctx);
    } catch (const std::exception& err) {
        summary["partial"] = true;
        summary["error"] = err.what();
        std::cerr << "solver failure: " << err.what() << '\n';
        code = 3;
    }
    summary["outputs"] = ctx.outputs;
    {
        std::ofstream out(ctx.out / "summary.json");
        out << summary.dump(2) << '\n';
    }
    if (code == 0 && ctx.verbose) std::cerr << "run complete\n";
    return code;
}

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for nonlocal nonlinear diffusion"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "execute a config file or preset");
    std::string config_arg, out_flag;
    std::uint64_t seed_flag = 0;
    bool verbose = false;
    run->add_option("config", config_arg, "JSON config path or preset name")
        ->required();
    run->add_option("--out", out_flag, "output directory");
    auto* seed_opt = run->add_option("--seed", seed_flag, "random seed");
    run->add_flag("--verbose", verbose, "progress logging to stderr");

    auto* presets = app.add_subcommand("presets", "list built-in experiments");

    CLI11_PARSE(app, argc, argv);

    if (presets->parsed()) {
        for (auto& [name, desc] : kPresets)
            std::cout << name << "  -  " << desc << '\n';
        return 0;
    }
    try {
        return run_command(config_arg, out_flag, seed_opt->count() > 0,
                           seed_flag, verbose);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    }
}
