#pragma once

// Regularity diagnostics: oscillation over space-time cylinders scaled like
// order-sigma diffusion, empirical Holder exponents from nested-cylinder fits,
// the barrier energy functional with its two-sided bound, and the degeneracy
// quotient of a monotone map.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "evolve.hpp"
#include "grid.hpp"
#include "io.hpp"

namespace nlfilt {

struct SigmaCylinder {
    double x0 = 0.0, t0 = 0.0;
    double R = 0.0;
    double sigma = 1.0;  // time window scales like R^sigma
};

// sup - inf of u over grid nodes and stored snapshot times inside the cylinder
inline double oscillation(const Trajectory& traj, const SigmaCylinder& cyl) {
    if (cyl.R <= 0.0) throw std::invalid_argument("cylinder radius must be positive");
    double tw = std::pow(cyl.R, cyl.sigma);
    double lo = 1e300, hi = -1e300;
    bool any = false;
    for (const Field& u : traj.snapshots) {
        if (std::abs(u.time - cyl.t0) >= tw) continue;
        const Grid& g = u.grid;
        for (int i = 0; i < g.size(); ++i) {
            if (std::abs(g.coord(i) - cyl.x0) >= cyl.R) continue;
            any = true;
            lo = std::min(lo, u.v[i]);
            hi = std::max(hi, u.v[i]);
        }
    }
    if (!any) throw std::invalid_argument("cylinder misses every stored state");
    return hi - lo;
}

struct OscillationReport {
    std::vector<double> radii, oscs;
    double gamma = 0.5;
    double alpha_hat = 0.0;
    double varpi_hat = 0.0;  // oscillation reduction factor gamma^alpha
    double residual = 0.0;
    bool flat = false;

    nlohmann::json summary() const {
        return {{"alpha_hat", alpha_hat},
                {"varpi_hat", varpi_hat},
                {"residual", residual},
                {"flat", flat}};
    }
    void write_csv(const std::string& path) const {
        CsvWriter csv(path, "R,osc");
        for (size_t j = 0; j < radii.size(); ++j) csv.row({radii[j], oscs[j]});
    }
};

inline OscillationReport holder_fit(const Trajectory& traj, double x0, double t0,
                                    double R0, double gamma_ratio, int levels) {
    if (levels < 4) throw std::invalid_argument("holder_fit needs >= 4 levels");
    if (gamma_ratio <= 0.0 || gamma_ratio >= 1.0)
        throw std::invalid_argument("radius ratio must lie in (0,1)");
    if (traj.snapshots.size() < 2)
        throw std::invalid_argument("need at least two stored states");
    double R_min = R0 * std::pow(gamma_ratio, levels - 1);
    double tw_min = std::pow(R_min, traj.sigma);

    // stored cadence must resolve the smallest cylinder's time window
    double max_gap = 0.0;
    for (size_t k = 1; k < traj.snapshots.size(); ++k)
        max_gap = std::max(max_gap,
                           traj.snapshots[k].time - traj.snapshots[k - 1].time);
    if (max_gap > tw_min / 2.0 + 1e-12)
        throw std::invalid_argument("snapshot cadence too coarse for the "
                                    "smallest cylinder");
    const Grid& g = traj.snapshots.front().grid;
    int nodes = 0, snaps = 0;
    for (int i = 0; i < g.size(); ++i)
        if (std::abs(g.coord(i) - x0) < R_min) ++nodes;
    for (const Field& u : traj.snapshots)
        if (std::abs(u.time - t0) < tw_min) ++snaps;
    if (nodes < 3 || snaps < 2)
        throw std::invalid_argument("smallest cylinder underresolved");

    OscillationReport rep;
    rep.gamma = gamma_ratio;
    for (int j = 0; j < levels; ++j) {
        double R = R0 * std::pow(gamma_ratio, j);
        rep.radii.push_back(R);
        rep.oscs.push_back(oscillation(traj, SigmaCylinder{x0, t0, R, traj.sigma}));
    }
    std::vector<double> lx, ly;
    for (int j = 0; j < levels; ++j)
        if (rep.oscs[j] > 1e-12) {
            lx.push_back(std::log(rep.radii[j]));
            ly.push_back(std::log(rep.oscs[j]));
        }
    if (lx.size() < 2) {
        rep.flat = true;
        return rep;
    }
    LineFit fit = fit_line(lx, ly);
    rep.alpha_hat = fit.slope;
    rep.varpi_hat = std::pow(gamma_ratio, rep.alpha_hat);
    rep.residual = fit.residual;
    return rep;
}

// ---- barrier energy and degeneracy quotient --------------------------------

struct ThetaMap {
    std::function<double(double)> theta, dtheta;
    bool is_power = false;
    double p = 1.0;  // when is_power: theta(s) = sign(s)|s|^p

    static ThetaMap linear() {
        ThetaMap t;
        t.theta = [](double s) { return s; };
        t.dtheta = [](double) { return 1.0; };
        t.is_power = true;
        t.p = 1.0;
        return t;
    }
    // inverse of the power nonlinearity: theta(s) = sign(s)|s|^{1/m}
    static ThetaMap beta_of_power(double m) {
        ThetaMap t;
        double p = 1.0 / m;
        t.theta = [p](double s) {
            return std::copysign(std::pow(std::abs(s), p), s);
        };
        t.dtheta = [p](double s) { return p * std::pow(std::abs(s), p - 1.0); };
        t.is_power = true;
        t.p = p;
        return t;
    }
};

struct BpsiReport {
    Field value;
    double Lambda1 = 0.0;  // half the infimum of theta' on the active range
    double Lambda2 = 0.0;  // theta(M) - theta(ell)
    bool sandwich_ok = true;
    int violations = 0;
};

inline BpsiReport energy_Bpsi(const Field& w, const Field& psi, const ThetaMap& th) {
    require_same_grid(w, psi);
    int n = w.grid.size();
    BpsiReport rep;
    rep.value = Field(w.grid, w.time);

    double ell = 1e300, M = -1e300, lo = 1e300;
    bool active = false;
    for (int i = 0; i < n; ++i)
        if (w.v[i] >= psi.v[i]) {
            active = true;
            ell = std::min(ell, w.v[i]);
            M = std::max(M, w.v[i]);
            lo = std::min(lo, psi.v[i]);
        }
    if (!active) return rep;

    if (!th.is_power) {
        // reject maps whose derivative blows up inside the needed range:
        // zoom on the sampled maximum and see whether it keeps growing
        double a = lo, b = M, peak = 0.0, at = a;
        for (int round = 0; round < 4; ++round) {
            double prev_peak = peak;
            peak = 0.0;
            for (int q = 0; q <= 2000; ++q) {
                double s = a + (b - a) * q / 2000.0;
                double d = th.dtheta(s);
                if (!std::isfinite(d)) throw std::domain_error(
                        "theta' not finite on the integration range");
                if (std::abs(d) > peak) { peak = std::abs(d); at = s; }
            }
            if (round > 0 && peak > 5.0 * prev_peak)
                throw std::domain_error("theta' unbounded on the integration range");
            double span = (b - a) / 20.0;
            a = at - span;
            b = at + span;
        }
    }

    for (int i = 0; i < n; ++i) {
        double a = w.v[i] - psi.v[i];
        if (a <= 0.0) continue;
        double ps = psi.v[i];
        if (th.is_power) {
            // B = theta(a+psi)a - [Theta(a+psi) - Theta(psi)], Theta = int theta
            auto Theta = [&](double x) {
                return std::pow(std::abs(x), th.p + 1.0) / (th.p + 1.0);
            };
            rep.value.v[i] = th.theta(a + ps) * a - (Theta(a + ps) - Theta(ps));
        } else {
            rep.value.v[i] = adaptive_simpson(
                [&](double s) { return th.dtheta(s + ps) * s; }, 0.0, a, 1e-10);
        }
    }

    double inf_d = 1e300;
    for (int q = 0; q <= 10000; ++q) {
        double s = lo + (M - lo) * q / 10000.0;
        double d = th.dtheta(s);
        if (std::isfinite(d)) inf_d = std::min(inf_d, d);
    }
    rep.Lambda1 = 0.5 * inf_d;
    rep.Lambda2 = th.theta(M) - th.theta(ell);
    for (int i = 0; i < n; ++i) {
        double a = std::max(w.v[i] - psi.v[i], 0.0);
        double B = rep.value.v[i];
        double tol = 1e-8 * (1.0 + std::abs(B));
        if (B < rep.Lambda1 * a * a - tol || B > rep.Lambda2 * a + tol)
            ++rep.violations;
    }
    rep.sandwich_ok = rep.violations == 0;
    return rep;
}

// inf of theta' over [0,2] (or [1/4,2]) divided by 1 + theta(2) - theta(0)
inline double delta_theta(const ThetaMap& th, bool restricted = false) {
    double a = restricted ? 0.25 : 0.0, b = 2.0;
    double inf_d = 1e300;
    for (int q = 0; q <= 200000; ++q) {
        double s = a + (b - a) * q / 200000.0;
        double d = th.dtheta(s);
        if (std::isfinite(d)) inf_d = std::min(inf_d, d);
    }
    return inf_d / (1.0 + th.theta(2.0) - th.theta(0.0));
}

}  // namespace nlfilt
