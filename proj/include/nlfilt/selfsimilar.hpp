#pragma once

// Self-similar structure: scaling exponents, the symmetric stable profile,
// trajectory rescaling, and the source-type profile obtained as the fixed
// point of rescaled evolution under horizon doubling.
//
// The stable profile at unit time comes from one large FFT of exp(-|xi|^sigma)
// (spacing 1e-3, period ~4194). The DFT returns the periodization of the
// density, so the images at +-period are subtracted using the far-field
// expansion; the same expansion serves as the evaluator beyond the table.

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "common.hpp"
#include "evolve.hpp"
#include "fft.hpp"
#include "grid.hpp"

namespace nlfilt {

struct Exponents {
    double alpha = 0.0;  // amplitude: u(x,t) = t^-alpha F(x t^-beta)
    double beta = 0.0;   // spread
};

inline Exponents exponents(int N, double sigma, double m) {
    if (sigma <= 0.0 || sigma >= 2.0) throw std::domain_error("sigma outside (0,2)");
    if (m < 1.0) throw std::domain_error("fast-diffusion range m < 1 not covered");
    double denom = N * (m - 1.0) + sigma;
    return {N / denom, 1.0 / denom};
}

class StableDensity {
  public:
    static const StableDensity& get(double sigma) {
        static std::mutex mu;
        static std::map<double, std::unique_ptr<StableDensity>> cache;
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(sigma);
        if (it == cache.end())
            it = cache.emplace(sigma, std::unique_ptr<StableDensity>(
                                          new StableDensity(sigma))).first;
        return *it->second;
    }

    double sigma() const { return sigma_; }
    double switch_radius() const { return xs_; }

    // density of the unit-mass profile at (x, t); t^{-1/sigma} scaling is exact
    double density(double x, double t) const {
        double s = std::pow(t, -1.0 / sigma_);
        double y = std::abs(x) * s;
        return s * (y <= xs_ ? interp(y) : far_field(y));
    }

    // derivative of the unit-time profile, odd in y
    double profile_derivative(double y) const {
        double ay = std::abs(y);
        double d;
        if (ay <= xs_) {
            double p = ay / dx_;
            int i = int(p);
            if (i >= int(tab_.size()) - 3) i = int(tab_.size()) - 3;
            double f = p - i;
            double m1 = i == 0 ? tab_[1] : tab_[i - 1];
            double a0 = tab_[i], a1 = tab_[i + 1], a2 = tab_[i + 2];
            double c1 = 0.5 * (a1 - m1);
            double c2 = m1 - 2.5 * a0 + 2.0 * a1 - 0.5 * a2;
            double c3 = 0.5 * (a2 - m1) + 1.5 * (a0 - a1);
            d = (c1 + (2.0 * c2 + 3.0 * c3 * f) * f) / dx_;
        } else {
            d = far_field_derivative(ay);
        }
        return y < 0 ? -d : d;
    }

    double far_field_derivative(double y) const {
        double sum = 0.0, prev = 1e300, ys = std::pow(y, -sigma_), p = 1.0;
        double inv2 = 1.0 / (y * y);
        for (int k = 1; k <= 60; ++k) {
            p *= ys;
            double mag = cmag_[k] * p * inv2;
            if (mag > prev) break;
            prev = mag;
            sum -= csgn_[k] * (1.0 + k * sigma_) * p * inv2;
            if (mag < 1e-17 * std::abs(sum)) break;
        }
        return sum / pi;
    }

    // far-field expansion (1/pi) sum (-1)^{k+1} Gamma(1+k s) sin(k pi s/2) y^{-1-ks}/k!
    double far_field(double y) const {
        double sum = 0.0, prev = 1e300, ys = std::pow(y, -sigma_), p = 1.0;
        double inv = 1.0 / y;
        for (int k = 1; k <= 60; ++k) {
            p *= ys;
            double mag = cmag_[k] * p * inv;
            if (mag > prev) break;  // asymptotic regime for sigma > 1
            prev = mag;
            sum += csgn_[k] * p * inv;
            if (mag < 1e-17 * std::abs(sum)) break;
        }
        return sum / pi;
    }

    // integral of the profile over (X, infinity), termwise from the expansion
    double tail_integral(double X) const {
        double sum = 0.0, prev = 1e300, xs = std::pow(X, -sigma_), p = 1.0;
        for (int k = 1; k <= 60; ++k) {
            p *= xs;
            double mag = cmag_[k] * p / (k * sigma_);
            if (mag > prev) break;
            prev = mag;
            sum += csgn_[k] * p / (k * sigma_);
            if (mag < 1e-17 * std::abs(sum)) break;
        }
        return sum / pi;
    }

    double total_mass() const {
        size_t last = size_t(std::llround(xs_ / dx_));  // node at exactly xs_
        double s = 0.5 * (tab_[0] + tab_[last]);
        for (size_t i = 1; i < last; ++i) s += tab_[i];
        return 2.0 * s * dx_ + 2.0 * tail_integral(xs_);
    }

  private:
    explicit StableDensity(double sigma) : sigma_(sigma) {
        if (sigma <= 0.0 || sigma >= 2.0)
            throw std::domain_error("sigma outside (0,2)");
        cmag_.resize(61);
        csgn_.resize(61);
        for (int k = 1; k <= 60; ++k) {
            cmag_[k] = std::exp(std::lgamma(1.0 + k * sigma) - std::lgamma(k + 1.0));
            csgn_[k] = cmag_[k] * std::sin(k * pi * sigma / 2.0) *
                       (k % 2 == 1 ? 1.0 : -1.0);
        }
        const int N = 1 << 22;
        dx_ = 1e-3;
        double period = N * dx_;
        double dxi = 2.0 * pi / period;
        std::vector<cplx> a(N);
        for (int j = 0; j < N; ++j) {
            int jj = j <= N / 2 ? j : j - N;
            a[j] = std::exp(-std::pow(std::abs(jj) * dxi, sigma));
        }
        fft_inplace(a, -1);
        xs_ = 50.0;
        int ntab = int(xs_ / dx_) + 3;
        tab_.resize(ntab);
        for (int i = 0; i < ntab; ++i) {
            double v = a[i].real() * dxi / (2.0 * pi);
            double x = i * dx_;
            // remove the periodization images; midpoint-rule remainder for k > K
            const int K = 6;
            for (int k = 1; k <= K; ++k)
                v -= far_field(k * period - x) + far_field(k * period + x);
            v -= (tail_integral((K + 0.5) * period - x) +
                  tail_integral((K + 0.5) * period + x)) /
                 period;
            tab_[i] = v;
        }
    }

    // Catmull-Rom on the uniform table; even reflection at the origin
    double interp(double y) const {
        double p = y / dx_;
        int i = int(p);
        if (i >= int(tab_.size()) - 3) i = int(tab_.size()) - 3;
        double f = p - i;
        double m1 = i == 0 ? tab_[1] : tab_[i - 1];
        double a0 = tab_[i], a1 = tab_[i + 1], a2 = tab_[i + 2];
        double c0 = a0;
        double c1 = 0.5 * (a1 - m1);
        double c2 = m1 - 2.5 * a0 + 2.0 * a1 - 0.5 * a2;
        double c3 = 0.5 * (a2 - m1) + 1.5 * (a0 - a1);
        return ((c3 * f + c2) * f + c1) * f + c0;
    }

    double sigma_ = 0.0, dx_ = 0.0, xs_ = 0.0;
    std::vector<double> tab_;
    std::vector<double> cmag_, csgn_;  // series magnitudes and signed terms
};

// Z(y) = t^alpha u(t^beta y), resampled onto the profile grid
inline Field rescale(const Field& u, double t, double alpha, double beta,
                     const Grid& profile_grid) {
    if (t <= 0.0) throw std::invalid_argument("rescale needs t > 0");
    Field Z(profile_grid, t);
    double amp = std::pow(t, alpha), spread = std::pow(t, beta);
    for (int i = 0; i < profile_grid.size(); ++i)
        Z.v[i] = amp * u.sample1(spread * profile_grid.coord(i));
    return Z;
}

// L1 distance between profiles on a shared grid
inline double convergence_metric(const Field& a, const Field& b) {
    require_same_grid(a, b);
    double s = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) s += std::abs(a.v[i] - b.v[i]);
    return s * a.cell();
}

struct BarenblattOptions {
    double R_dom = 400.0;  // physical half-extent
    int n = 8000;
    double R_y = 100.0;  // profile half-extent
    int n_y = 1000;
    double T = 64.0;   // final horizon (power of two)
    double tau0 = 0.01;
};

struct BarenblattResult {
    Field profile;  // F with u(x,t) = t^-alpha F(x t^-beta)
    double m = 0.0, sigma = 0.0, M = 0.0;
    double alpha = 0.0, beta = 0.0;
    std::vector<double> times, gaps;  // horizon ends and successive L1 gaps
    double final_gap = 0.0;
};

inline BarenblattResult barenblatt(double m, double sigma, double M,
                                   const BarenblattOptions& opt = {}) {
    auto e = exponents(1, sigma, m);
    BarenblattResult res;
    res.m = m;
    res.sigma = sigma;
    res.M = M;
    res.alpha = e.alpha;
    res.beta = e.beta;
    Grid gy(1, opt.R_y, opt.n_y, Boundary::extended_by_zero);
    res.profile = Field(gy, 1.0);

    if (m == 1.0) {
        const StableDensity& P = StableDensity::get(sigma);
        for (int i = 0; i < gy.size(); ++i)
            res.profile.v[i] = M * P.density(gy.coord(i), 1.0);
        return res;
    }

    Grid g(1, opt.R_dom, opt.n, Boundary::extended_by_zero);
    auto L = assemble(KernelSpec::fractional(1, sigma), g);
    Nonlinearity nl = Nonlinearity::power_law(m);
    Field u = make_near_delta(g, M);

    auto run_to = [&](double t_end, double tau) {
        while (u.time < t_end - 1e-12) {
            double step_tau = std::min(tau, t_end - u.time);
            u = step(u, L, nl, step_tau);
        }
    };
    run_to(1.0, opt.tau0);
    Field Z_prev = rescale(u, 1.0, e.alpha, e.beta, gy);
    for (double t = 1.0; t < opt.T - 1e-12; t *= 2.0) {
        run_to(2.0 * t, opt.tau0 * t);
        Field Z = rescale(u, 2.0 * t, e.alpha, e.beta, gy);
        res.times.push_back(2.0 * t);
        res.gaps.push_back(convergence_metric(Z, Z_prev));
        Z_prev = Z;
    }
    res.profile = Z_prev;
    res.final_gap = res.gaps.empty() ? 0.0 : res.gaps.back();
    return res;
}

}  // namespace nlfilt
