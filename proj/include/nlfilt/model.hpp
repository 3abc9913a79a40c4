#pragma once

// Kernels and nonlinearities, plus validation of the structural hypotheses
// they are supposed to satisfy (two-sided singular bounds, symmetry,
// monotonicity and slope control of the nonlinearity).

#include <array>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"

namespace nlfilt {

using Point = std::array<double, 2>;  // second entry unused in 1D

inline double dist(const Point& a, const Point& b, int dim) {
    double dx = a[0] - b[0];
    if (dim == 1) return std::abs(dx);
    double dy = a[1] - b[1];
    return std::sqrt(dx * dx + dy * dy);
}

enum class KernelForm { fractional, truncated, oscillating, custom };

struct KernelSpec {
    KernelForm form = KernelForm::fractional;
    int dim = 1;
    double sigma = 1.0;        // order in (0,2)
    double lambda_ell = 1.0;   // ellipticity constant, >= 1
    double mu = 0.0;           // far-field constant (fractional prefactor)
    double normalization = 0.0;  // the |xi|^sigma-symbol constant
    double epsilon = 0.0;      // oscillation amplitude
    std::uint64_t seed = 0;
    bool translation_invariant = true;
    bool radially_symmetric = true;
    bool pointwise_symmetric = true;  // J(x, x+y) = J(x, x-y)
    std::function<double(const Point&, const Point&)> custom;

    static KernelSpec fractional(int N, double s) {
        KernelSpec k;
        k.form = KernelForm::fractional;
        k.dim = N;
        k.sigma = s;
        k.normalization = frac_normalization(N, s);
        k.mu = k.normalization;
        k.lambda_ell = std::max({1.0, k.mu, 1.0 / k.mu});
        return k;
    }
    static KernelSpec truncated(int N, double s) {
        KernelSpec k;
        k.form = KernelForm::truncated;
        k.dim = N;
        k.sigma = s;
        k.normalization = frac_normalization(N, s);
        k.mu = 1.0;
        k.lambda_ell = 1.0;
        return k;
    }
    static KernelSpec oscillating(int N, double s, double eps) {
        if (std::abs(eps) >= 1.0) throw std::invalid_argument("|epsilon| must be < 1");
        KernelSpec k;
        k.form = KernelForm::oscillating;
        k.dim = N;
        k.sigma = s;
        k.normalization = frac_normalization(N, s);
        k.mu = 1.0;
        k.epsilon = eps;
        k.lambda_ell = 1.0 / (1.0 - std::abs(eps));
        k.translation_invariant = false;
        k.radially_symmetric = false;
        k.pointwise_symmetric = false;
        return k;
    }

    nlohmann::json to_json() const {
        const char* names[] = {"fractional", "truncated", "oscillating", "custom"};
        nlohmann::json j;
        j["form"] = names[int(form)];
        j["dim"] = dim;
        j["sigma"] = sigma;
        j["Lambda"] = lambda_ell;
        j["epsilon"] = epsilon;
        j["seed"] = seed;
        return j;
    }
    static KernelSpec from_json(const nlohmann::json& j) {
        std::string f = j.at("form");
        int N = j.value("dim", 1);
        double s = j.at("sigma");
        KernelSpec k;
        if (f == "fractional") k = fractional(N, s);
        else if (f == "truncated") k = truncated(N, s);
        else if (f == "oscillating") k = oscillating(N, s, j.value("epsilon", 0.0));
        else throw std::invalid_argument("unknown kernel form: " + f);
        if (j.contains("Lambda")) k.lambda_ell = j["Lambda"];
        k.seed = j.value("seed", std::uint64_t(0));
        return k;
    }
};

inline double kernel_eval(const KernelSpec& k, const Point& x, const Point& y) {
    double d = dist(x, y, k.dim);
    if (d == 0.0) throw std::domain_error("kernel undefined at coincident points");
    if (k.custom) return k.custom(x, y);
    double pw = std::pow(d, -double(k.dim) - k.sigma);
    switch (k.form) {
        case KernelForm::fractional:
            return k.mu * pw;
        case KernelForm::truncated:
            return d <= 3.0 ? pw : 0.0;
        case KernelForm::oscillating:
            return pw * (1.0 + k.epsilon * std::sin(1.0 / d) * std::sin(x[0] + y[0]));
        case KernelForm::custom:
            break;
    }
    throw std::logic_error("custom kernel without evaluator");
}

struct Nonlinearity {
    double m = 1.0;   // power exponent (>= 1 when power-law)
    double a = 1.0;   // power-law coefficient
    bool is_power = true;
    bool declares_Hphi = true;  // phi'(s) > 0 for s != 0 claimed
    std::function<double(double)> phi_fn, dphi_fn, beta_fn;

    static Nonlinearity power_law(double m_, double a_ = 1.0) {
        if (m_ < 1.0 || a_ <= 0.0) throw std::invalid_argument("need m >= 1, a > 0");
        Nonlinearity n;
        n.m = m_;
        n.a = a_;
        return n;
    }
    static Nonlinearity custom(std::function<double(double)> phi,
                               std::function<double(double)> dphi,
                               std::function<double(double)> beta,
                               bool declares = true) {
        Nonlinearity n;
        n.is_power = false;
        n.declares_Hphi = declares;
        n.phi_fn = std::move(phi);
        n.dphi_fn = std::move(dphi);
        n.beta_fn = std::move(beta);
        return n;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["m"] = m;
        j["a"] = a;
        return j;
    }
    static Nonlinearity from_json(const nlohmann::json& j) {
        return power_law(j.value("m", 1.0), j.value("a", 1.0));
    }
};

inline double phi_apply(const Nonlinearity& n, double u) {
    if (n.is_power) {
        if (n.m == 1.0) return n.a * u;
        return n.a * std::copysign(std::pow(std::abs(u), n.m), u);
    }
    return n.phi_fn(u);
}

inline double phi_prime(const Nonlinearity& n, double u) {
    if (n.is_power) {
        if (n.m == 1.0) return n.a;
        return n.a * n.m * std::pow(std::abs(u), n.m - 1.0);
    }
    return n.dphi_fn(u);
}

inline double beta_apply(const Nonlinearity& n, double w) {
    if (n.is_power) {
        double r = w / n.a;
        if (n.m == 1.0) return r;
        return std::copysign(std::pow(std::abs(r), 1.0 / n.m), r);
    }
    if (!n.beta_fn) throw std::domain_error("no inverse available");
    return n.beta_fn(w);
}

// ---- hypothesis validation -------------------------------------------------

struct SamplePlan {
    int n_pairs = 1000;
    int n_scalar = 400;
    double extent = 5.0;      // pair coordinates drawn from [-extent, extent]
    double scalar_max = 10.0;
    double margin = 1e-8;     // exclusion radius around x = y and s = 0
    std::uint64_t seed = 1;
    std::vector<std::pair<Point, Point>> extra_pairs;
};

struct HypothesisCheck {
    std::string name;
    bool passed = true;
    double worst_ratio = 0.0;
    std::string detail;
};

struct ValidationReport {
    std::vector<HypothesisCheck> checks;
    bool all_passed() const {
        for (auto& c : checks) if (!c.passed) return false;
        return true;
    }
    std::string summary() const {
        std::ostringstream os;
        for (auto& c : checks)
            os << c.name << ": " << (c.passed ? "pass" : "FAIL")
               << " (worst " << c.worst_ratio << ") " << c.detail << '\n';
        return os.str();
    }
};

inline ValidationReport validate_hypotheses(const KernelSpec& k, const Nonlinearity& n,
                                            const SamplePlan& plan) {
    if (plan.n_pairs <= 0 || plan.n_scalar <= 0)
        throw std::invalid_argument("empty sample plan");
    ValidationReport rep;
    Rng rng(plan.seed);
    std::uniform_real_distribution<double> U(-plan.extent, plan.extent);

    std::vector<std::pair<Point, Point>> pairs = plan.extra_pairs;
    while (int(pairs.size()) < plan.n_pairs + int(plan.extra_pairs.size())) {
        Point x{U(rng), k.dim == 2 ? U(rng) : 0.0};
        Point y{U(rng), k.dim == 2 ? U(rng) : 0.0};
        if (dist(x, y, k.dim) > plan.margin) pairs.push_back({x, y});
    }

    HypothesisCheck sym{"kernel symmetry J(x,y)=J(y,x)"};
    HypothesisCheck upper{"kernel upper bound Lambda/|x-y|^{N+sigma}"};
    HypothesisCheck lower{"kernel lower bound on |x-y|<=3"};
    for (auto& [x, y] : pairs) {
        double v = kernel_eval(k, x, y), vr = kernel_eval(k, y, x);
        double gap = std::abs(v - vr) / (1.0 + std::abs(v));
        if (gap > sym.worst_ratio) sym.worst_ratio = gap;
        if (gap > 1e-12) {
            sym.passed = false;
        }
        double d = dist(x, y, k.dim);
        double ref = std::pow(d, -double(k.dim) - k.sigma);
        double r_up = v / (k.lambda_ell * ref);
        if (r_up > upper.worst_ratio) {
            upper.worst_ratio = r_up;
            if (r_up > 1.0 + 1e-12) {
                upper.passed = false;
                std::ostringstream os;
                os << "violated at x=" << x[0] << " y=" << y[0];
                upper.detail = os.str();
            }
        }
        if (d <= 3.0) {
            double r_lo = (ref / k.lambda_ell) / std::max(v, 1e-300);
            if (r_lo > lower.worst_ratio) {
                lower.worst_ratio = r_lo;
                if (r_lo > 1.0 + 1e-12) {
                    lower.passed = false;
                    std::ostringstream os;
                    os << "violated at x=" << x[0] << " y=" << y[0];
                    lower.detail = os.str();
                }
            }
        }
    }
    rep.checks.push_back(sym);
    rep.checks.push_back(upper);
    rep.checks.push_back(lower);

    HypothesisCheck zero{"phi(0) = 0"};
    double p0 = std::abs(phi_apply(n, 0.0));
    zero.worst_ratio = p0;
    zero.passed = p0 <= 1e-14;
    rep.checks.push_back(zero);

    HypothesisCheck mono{"phi' strictly increasing off zero (strict slope)"};
    HypothesisCheck inv{"beta(phi(s)) = s"};
    std::uniform_real_distribution<double> S(-plan.scalar_max, plan.scalar_max);
    for (int i = 0; i < plan.n_scalar; ++i) {
        double s = S(rng);
        if (std::abs(s) < plan.margin) continue;
        double dp = phi_prime(n, s);
        if (n.declares_Hphi || true) {
            if (dp <= 0.0) {
                mono.passed = false;
                std::ostringstream os;
                os << "phi'(" << s << ") = " << dp;
                mono.detail = os.str();
            }
        }
        double w = phi_apply(n, s);
        double back;
        bool ok = true;
        try {
            back = beta_apply(n, w);
        } catch (const std::domain_error&) {
            ok = false;
            back = 0.0;
        }
        double err = ok ? std::abs(back - s) / (1.0 + std::abs(s)) : 1.0;
        if (err > inv.worst_ratio) inv.worst_ratio = err;
        if (err > 1e-9) inv.passed = false;
    }
    rep.checks.push_back(mono);
    rep.checks.push_back(inv);

    // slope-oscillation control: on dyadic r the derivative between |r|/4 and
    // 3|r| should be comparable to phi(r)/r; report the worst empirical spread
    HypothesisCheck osc{"slope comparable to phi(r)/r near zero (empirical C1,C2)"};
    double worstC2 = 0.0, worstC1 = 1e300;
    for (int jexp = 1; jexp <= 20; ++jexp) {
        double r = std::pow(2.0, -jexp);
        double chord = phi_apply(n, r) / r;
        if (chord <= 0.0) { osc.passed = false; continue; }
        for (int q = 0; q < 16; ++q) {
            double s = (0.25 + (3.0 - 0.25) * (q + 0.5) / 16.0) * r;
            double dp = phi_prime(n, s);
            worstC2 = std::max(worstC2, dp / chord);
            worstC1 = std::min(worstC1, dp / chord);
        }
    }
    osc.worst_ratio = worstC2;
    {
        std::ostringstream os;
        os << "C1=" << worstC1 << " C2=" << worstC2;
        osc.detail = os.str();
    }
    if (!(worstC1 > 0.0) || !std::isfinite(worstC2)) osc.passed = false;
    rep.checks.push_back(osc);

    if (n.is_power && n.m > 1.0) {
        HypothesisCheck env{"power envelope c|u|^{m-1} <= phi'(u) <= C|u|^{m-1}"};
        double lo = 1e300, hi = 0.0;
        for (int i = 0; i < plan.n_scalar; ++i) {
            double s = S(rng);
            if (std::abs(s) < plan.margin) continue;
            double ratio = phi_prime(n, s) / std::pow(std::abs(s), n.m - 1.0);
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
        env.worst_ratio = hi / lo;
        env.passed = lo > 0.0 && std::isfinite(hi);
        rep.checks.push_back(env);
    }
    return rep;
}

}  // namespace nlfilt
