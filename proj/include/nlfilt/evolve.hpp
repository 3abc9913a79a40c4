#pragma once

// Implicit time stepping for u_t + L phi(u) = 0.
//
// Each step solves the elliptic problem u + tau*L phi(u) = g by damped Newton.
// The Newton correction (I + tau*L*D) delta = r, D = diag(phi'(u)), is
// symmetrized with S = sqrt(D): solve (I + tau*S L S) y = S r by CG and
// recover delta = r - tau*L(S y). The symmetrized matrix is SPD because L is.
// phi' is floored at 1e-12 so degenerate nonlinearities keep an SPD system.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "common.hpp"
#include "discretize.hpp"
#include "grid.hpp"
#include "model.hpp"

namespace nlfilt {

struct EvolveConfig {
    double tau = 0.01;
    double T = 1.0;
    double tol = 0.0;        // solver residual target; 0 = 1e-11 * data scale
    int snapshot_every = 1;  // store every k-th state (diagnostics every step)
    int max_newton = 100;
};

struct DiagnosticsRow {
    double t = 0.0;
    double mass = 0.0;
    double linf = 0.0;
    double l1 = 0.0;
    double energy = 0.0;  // quadratic(L, phi(u))
    double pos_mass = 0.0;
    double neg_mass = 0.0;
    int iters = 0;  // Newton iterations spent on the step
};

struct Trajectory {
    std::vector<DiagnosticsRow> rows;
    std::vector<Field> snapshots;
    double leakage = 0.0;          // accumulated boundary emission estimate
    double energy_integral = 0.0;  // tau * sum of per-step energies
    double sigma = 1.0;
    int dim = 1;
};

namespace ev_detail {

// CG on (I + tau*S L S) y = b; one operator apply per iteration.
inline std::vector<double> cg_spd(const DiscreteOperator& L, double tau,
                                  const std::vector<double>& S,
                                  const std::vector<double>& b, double tol,
                                  int max_iter) {
    int n = int(b.size());
    auto Mv = [&](const std::vector<double>& v) {
        Field t(L.grid);
        for (int i = 0; i < n; ++i) t.v[i] = S[i] * v[i];
        Field Lt = apply(L, t);
        std::vector<double> out(n);
        for (int i = 0; i < n; ++i) out[i] = v[i] + tau * S[i] * Lt.v[i];
        return out;
    };
    std::vector<double> y(n, 0.0), r = b, p = b;
    double rr = 0.0;
    for (double v : r) rr += v * v;
    double target = tol * tol * std::max(rr, 1e-300);
    for (int it = 0; it < max_iter && rr > target; ++it) {
        auto Mp = Mv(p);
        double pMp = 0.0;
        for (int i = 0; i < n; ++i) pMp += p[i] * Mp[i];
        if (pMp <= 0.0) break;
        double alpha = rr / pMp;
        double rr_new = 0.0;
        for (int i = 0; i < n; ++i) {
            y[i] += alpha * p[i];
            r[i] -= alpha * Mp[i];
            rr_new += r[i] * r[i];
        }
        double beta = rr_new / rr;
        for (int i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
        rr = rr_new;
    }
    return y;
}

// residual g - u - tau*L phi(u); returns its sup norm
inline double residual(const DiscreteOperator& L, const Nonlinearity& n,
                       const Field& g, const Field& u, double tau,
                       std::vector<double>& r) {
    Field pu(u.grid);
    for (int i = 0; i < u.grid.size(); ++i) pu.v[i] = phi_apply(n, u.v[i]);
    Field Lp = apply(L, pu);
    double rn = 0.0;
    r.resize(u.v.size());
    for (size_t i = 0; i < u.v.size(); ++i) {
        r[i] = g.v[i] - u.v[i] - tau * Lp.v[i];
        rn = std::max(rn, std::abs(r[i]));
    }
    return rn;
}

// kernel mass beyond radius d, used by the boundary-emission estimate
inline double tail_mass(const KernelSpec& k, double d) {
    if (k.form == KernelForm::fractional)
        return 2.0 * k.mu * std::pow(d, -k.sigma) / k.sigma;
    if (k.form == KernelForm::truncated)
        return d >= 3.0 ? 0.0
                        : 2.0 * (std::pow(d, -k.sigma) - std::pow(3.0, -k.sigma)) /
                              k.sigma;
    double total = 0.0, lo = d;
    for (int p = 0; p < 40; ++p) {
        double hi = 2.0 * lo;
        total += 2.0 * gauss7(
                           [&](double y) {
                               return kernel_eval(k, Point{0.0, 0.0}, Point{y, 0.0});
                           },
                           lo, hi);
        lo = hi;
        if (lo > 1e6) break;
    }
    return total;
}

}  // namespace ev_detail

inline Field elliptic_solve(const DiscreteOperator& L, const Nonlinearity& nl,
                            const Field& g, double tau, double tol = 0.0,
                            int* iters_out = nullptr) {
    if (!g.grid.same_as(L.grid)) throw std::invalid_argument("grid mismatch");
    if (tol <= 0.0) tol = 1e-11 * std::max(1.0, g.linf());
    int n = g.grid.size();
    Field u = g;
    std::vector<double> r;
    double rn = ev_detail::residual(L, nl, g, u, tau, r);
    int it = 0;
    for (; it < 100 && rn > tol; ++it) {
        std::vector<double> S(n);
        for (int i = 0; i < n; ++i)
            S[i] = std::sqrt(std::max(phi_prime(nl, u.v[i]), 1e-12));
        std::vector<double> Sr(n);
        for (int i = 0; i < n; ++i) Sr[i] = S[i] * r[i];
        auto y = ev_detail::cg_spd(L, tau, S, Sr, 1e-12, 2 * n + 100);
        Field t(g.grid);
        for (int i = 0; i < n; ++i) t.v[i] = S[i] * y[i];
        Field Lt = apply(L, t);
        std::vector<double> delta(n);
        for (int i = 0; i < n; ++i) delta[i] = r[i] - tau * Lt.v[i];

        double lam = 1.0;
        Field trial(g.grid, g.time);
        std::vector<double> rt;
        for (int bs = 0; bs < 40; ++bs) {
            for (int i = 0; i < n; ++i) trial.v[i] = u.v[i] + lam * delta[i];
            double rtn = ev_detail::residual(L, nl, g, trial, tau, rt);
            if (rtn <= (1.0 - 0.25 * lam) * rn || rtn <= tol) {
                u = trial;
                r = rt;
                rn = rtn;
                break;
            }
            lam *= 0.5;
            if (bs == 39) throw std::runtime_error("elliptic solve: line search stalled");
        }
        if (!u.finite()) throw std::runtime_error("elliptic solve: diverged");
    }
    if (rn > tol) throw std::runtime_error("elliptic solve: no convergence");
    if (iters_out) *iters_out = it;
    return u;
}

inline Field step(const Field& u, const DiscreteOperator& L, const Nonlinearity& nl,
                  double tau, double tol = 0.0, int* iters_out = nullptr) {
    Field next = elliptic_solve(L, nl, u, tau, tol, iters_out);
    next.time = u.time + tau;
    return next;
}

// integral of the positive part of u - v
inline double t_contraction(const Field& u, const Field& v) {
    require_same_grid(u, v);
    double s = 0.0;
    for (size_t i = 0; i < u.v.size(); ++i) s += std::max(u.v[i] - v.v[i], 0.0);
    return s * u.cell();
}

inline Trajectory evolve(const Field& u0, const DiscreteOperator& L,
                         const Nonlinearity& nl, const EvolveConfig& cfg) {
    if (cfg.tau <= 0 || cfg.T <= 0) throw std::invalid_argument("bad time step");
    Trajectory traj;
    traj.sigma = L.kernel.sigma;
    traj.dim = L.grid.dim;
    int steps = int(std::llround(cfg.T / cfg.tau));
    double tol = cfg.tol > 0 ? cfg.tol : 1e-11 * std::max(1.0, u0.linf());

    // boundary-emission rates for the outermost 10% shell (1D bounded box)
    std::vector<int> shell;
    std::vector<double> kappa;
    if (L.grid.dim == 1 && L.grid.boundary == Boundary::extended_by_zero) {
        for (int i = 0; i < L.grid.size(); ++i) {
            double x = L.grid.coord(i);
            if (std::abs(x) >= 0.9 * L.grid.R_dom) {
                shell.push_back(i);
                double d = std::max(L.grid.R_dom - std::abs(x), L.grid.h / 2);
                kappa.push_back(ev_detail::tail_mass(L.kernel, d));
            }
        }
    }

    Field u = u0;
    auto record = [&](const Field& f, int iters) {
        DiagnosticsRow row;
        row.t = f.time;
        row.mass = f.mass();
        row.linf = f.linf();
        row.l1 = f.l1();
        Field pf(f.grid);
        for (int i = 0; i < f.grid.size(); ++i) pf.v[i] = phi_apply(nl, f.v[i]);
        row.energy = quadratic(L, pf);
        row.pos_mass = f.pos_mass();
        row.neg_mass = f.neg_mass();
        row.iters = iters;
        traj.rows.push_back(row);
    };
    record(u, 0);
    traj.snapshots.push_back(u);

    for (int k = 1; k <= steps; ++k) {
        int iters = 0;
        u = step(u, L, nl, cfg.tau, tol, &iters);
        if (!u.finite()) throw std::runtime_error("evolve: non-finite state");
        record(u, iters);
        traj.energy_integral += cfg.tau * traj.rows.back().energy;
        for (size_t q = 0; q < shell.size(); ++q)
            traj.leakage += cfg.tau * L.grid.h *
                            std::abs(phi_apply(nl, u.v[shell[q]])) * kappa[q];
        if (k % cfg.snapshot_every == 0 || k == steps) traj.snapshots.push_back(u);
    }
    return traj;
}

// ---- initial data ----------------------------------------------------------

inline Field make_box(const Grid& g, double center, double width, double mass) {
    Field f(g);
    int cnt = 0;
    for (int i = 0; i < g.size(); ++i)
        if (std::abs(g.coord(i) - center) < width / 2) ++cnt;
    if (cnt == 0) throw std::invalid_argument("box narrower than the grid spacing");
    for (int i = 0; i < g.size(); ++i)
        if (std::abs(g.coord(i) - center) < width / 2) f.v[i] = mass / (cnt * g.h);
    return f;
}

inline Field make_gaussian(const Grid& g, double center, double sd, double mass) {
    Field f(g);
    double s = 0.0;
    for (int i = 0; i < g.size(); ++i) {
        double z = (g.coord(i) - center) / sd;
        f.v[i] = std::exp(-0.5 * z * z);
        s += f.v[i];
    }
    for (auto& v : f.v) v *= mass / (s * g.h);
    return f;
}

// positive bump of mass m_pos at -sep/2, negative bump of mass m_neg at +sep/2
inline Field make_two_bump(const Grid& g, double sep, double width, double m_pos,
                           double m_neg) {
    Field f = make_box(g, -sep / 2, width, m_pos);
    Field neg = make_box(g, sep / 2, width, m_neg);
    for (int i = 0; i < g.size(); ++i) f.v[i] -= neg.v[i];
    return f;
}

inline Field make_near_delta(const Grid& g, double mass) {
    return make_box(g, 0.0, 4.0 * g.h, mass);
}

// ---- diagnostics on trajectories -------------------------------------------

struct DecayFit {
    double gamma_hat = 0.0;  // |u(t)|_inf ~ C t^{-gamma}
    double delta_hat = 0.0;  // mass exponent via delta = sigma*gamma/N
    double residual = 0.0;
};

inline DecayFit fit_decay_exponent(const Trajectory& traj, double t0, double t1) {
    std::vector<double> lx, ly;
    for (auto& r : traj.rows)
        if (r.t >= t0 && r.t <= t1 && r.linf > 0) {
            lx.push_back(std::log(r.t));
            ly.push_back(std::log(r.linf));
        }
    if (lx.size() < 3) throw std::invalid_argument("too few rows in the fit window");
    LineFit fit = fit_line(lx, ly);
    DecayFit out;
    out.gamma_hat = -fit.slope;
    out.delta_hat = traj.sigma * out.gamma_hat / traj.dim;
    out.residual = fit.residual;
    return out;
}

struct MassProbe {
    double R = 0.0;
    double cutoff_drift = 0.0;          // |<u(T), phi_R> - <u(0), phi_R>|
    double cutoff_operator_norm = 0.0;  // |L phi_R|_inf
    double empirical_exponent = 0.0;    // log2 ratio under R -> 2R
    double bound = 0.0;                 // T * sup_t |phi(u)|_1 * |L phi_R|_inf
};

// smooth cutoff: 1 on [0,R], 0 beyond 2R, cubic in between
inline double cutoff_value(double r, double R) {
    if (r <= R) return 1.0;
    if (r >= 2.0 * R) return 0.0;
    double s = (r - R) / R;
    return 1.0 - 3.0 * s * s + 2.0 * s * s * s;
}

inline MassProbe mass_conservation_probe(const Trajectory& traj,
                                         const DiscreteOperator& L, double R) {
    if (traj.snapshots.size() < 2)
        throw std::invalid_argument("trajectory has no stored states");
    if (L.grid.dim != 1) throw std::invalid_argument("probe is 1D only");
    const Grid& g = L.grid;
    auto cutoff_field = [&](double Rc) {
        Field f(g);
        for (int i = 0; i < g.size(); ++i)
            f.v[i] = cutoff_value(std::abs(g.coord(i)), Rc);
        return f;
    };
    Field phiR = cutoff_field(R), phi2R = cutoff_field(2.0 * R);
    auto pairing = [&](const Field& u, const Field& c) {
        double s = 0.0;
        for (int i = 0; i < g.size(); ++i) s += u.v[i] * c.v[i];
        return s * g.h;
    };
    MassProbe p;
    p.R = R;
    p.cutoff_drift = std::abs(pairing(traj.snapshots.back(), phiR) -
                              pairing(traj.snapshots.front(), phiR));
    p.cutoff_operator_norm = apply(L, phiR).linf();
    double norm2 = apply(L, phi2R).linf();
    p.empirical_exponent =
        std::log(std::max(norm2, 1e-300) / std::max(p.cutoff_operator_norm, 1e-300)) /
        std::log(2.0);
    double phimax = 0.0;
    for (auto& r : traj.rows) phimax = std::max(phimax, r.l1);
    double T = traj.rows.back().t - traj.rows.front().t;
    p.bound = T * phimax * p.cutoff_operator_norm;
    return p;
}

}  // namespace nlfilt
