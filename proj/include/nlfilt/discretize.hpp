#pragma once

// Grid realization of the nonlocal operator and its energy form.
//
// 1D weights integrate the radial kernel exactly against a piecewise-linear
// interpolant of the second difference (quadratic ramp on the first cell,
// where the second difference vanishes to second order), so the plane-wave
// error stays within the 2% oracle tolerance up to order 1.5. Truncated and
// custom radial kernels use midpoint weights with the singular cell folded
// into the nearest lag. Periodic grids fold the whole-line lattice into
// per-lag weights; the fractional far field beyond the folding radius enters
// as a rank-one (diagonal minus mean) term so constants stay in the kernel.
//
// Bounded non-periodic grids keep only node pairs inside the box. The pair
// form is antisymmetric in (i,j), so the discrete mass is conserved exactly;
// values outside the box still read as zero wherever fields are sampled.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "common.hpp"
#include "fft.hpp"
#include "grid.hpp"
#include "model.hpp"

namespace nlfilt {

struct DiscreteOperator {
    Grid grid;
    KernelSpec kernel;
    bool symmetric = true;

    // 1D data: lag weights w[l-1] couples nodes at |i-j| = l
    std::vector<double> w;
    std::vector<double> diag;  // per-node pair-weight row sums
    double rank1 = 0.0;        // periodic far-field mass (diag minus mean)

    // 2D data: per-offset weights on the half stencil (dx,dy) lexicographic > 0
    std::vector<int> off_dx, off_dy;
    std::vector<double> w2;

    double pair_weight(int i, int j) const {
        if (i == j) return 0.0;
        int n = grid.n_axis;
        if (grid.dim == 1) {
            if (grid.boundary == Boundary::periodic) {
                int l = ((j - i) % n + n) % n;
                return w[l - 1] + rank1 / n;
            }
            return w[std::abs(i - j) - 1];
        }
        int ix = i / n, iy = i % n, jx = j / n, jy = j % n;
        int dx = jx - ix, dy = jy - iy;
        for (size_t q = 0; q < w2.size(); ++q) {
            if ((off_dx[q] == dx && off_dy[q] == dy) ||
                (off_dx[q] == -dx && off_dy[q] == -dy))
                return w2[q];
        }
        return 0.0;
    }
};

namespace disc_detail {

// closed-form cell integrals of the fractional radial kernel mu*y^{-1-s} (1D)
struct FracInts {
    double mu, s;
    double I1(double a, double b) const {  // int J
        return mu * (std::pow(a, -s) - std::pow(b, -s)) / s;
    }
    double I0(double a, double b) const {  // int y*J
        if (std::abs(s - 1.0) < 1e-13) return mu * std::log(b / a);
        return mu * (std::pow(b, 1.0 - s) - std::pow(a, 1.0 - s)) / (1.0 - s);
    }
};

// int_0^b y^2 J(y) dy for a radial kernel with an integrable second moment,
// via geometrically graded panels toward the origin
inline double y2_moment(const std::function<double(double)>& Jr, double b) {
    double total = 0.0;
    double hi = b;
    for (int l = 0; l < 60 && hi > 1e-300; ++l) {
        double lo = hi / 2;
        total += gauss7([&](double y) { return y * y * Jr(y); }, lo, hi);
        hi = lo;
    }
    return total;
}

// lattice second-difference weights w[j-1] at distances j*h, j = 1..J
inline std::vector<double> lattice_weights(const KernelSpec& k, double h, int J) {
    std::vector<double> w(J, 0.0);
    if (k.form == KernelForm::fractional) {
        FracInts F{k.mu, k.sigma};
        for (int j = 1; j <= J; ++j) {
            double a = (j - 1) * h, b = j * h, c = (j + 1) * h;
            double rise = j == 1 ? k.mu * std::pow(h, -k.sigma) / (2.0 - k.sigma)
                                 : (F.I0(a, b) - a * F.I1(a, b)) / h;
            double fall = (c * F.I1(b, c) - F.I0(b, c)) / h;
            w[j - 1] = rise + fall;
        }
        return w;
    }
    std::function<double(double)> Jr = [&k](double d) {
        return kernel_eval(k, Point{0.0, 0.0}, Point{d, 0.0});
    };
    for (int j = 1; j <= J; ++j) w[j - 1] = Jr(j * h) * h;
    w[0] += y2_moment(Jr, h / 2) / (h * h);
    return w;
}

}  // namespace disc_detail

inline DiscreteOperator assemble(const KernelSpec& k, const Grid& g) {
    if (!k.pointwise_symmetric && !k.translation_invariant)
        throw std::invalid_argument(
            "kernel is not pointwise-symmetric: only the weak form is defined "
            "for it and no Galerkin discretization is built");
    DiscreteOperator L;
    L.grid = g;
    L.kernel = k;
    int n = g.n_axis;
    double h = g.h;

    if (g.dim == 1) {
        if (g.boundary == Boundary::periodic) {
            double fold_radius =
                k.form == KernelForm::fractional ? 1000.0 : std::max(4.0, g.length());
            int J = int(fold_radius / h) + 1;
            auto lat = disc_detail::lattice_weights(k, h, J);
            L.w.assign(n - 1, 0.0);
            for (int j = 1; j <= J; ++j) {
                int l = j % n;
                if (l != 0) {
                    L.w[l - 1] += lat[j - 1];
                    L.w[(n - l) - 1] += lat[j - 1];
                }
            }
            if (k.form == KernelForm::fractional)
                L.rank1 = 2.0 * k.mu * std::pow((J + 1) * h, -k.sigma) / k.sigma;
        } else {
            L.w = disc_detail::lattice_weights(k, h, n - 1);
            if (k.form == KernelForm::truncated) {
                // keep the indicator support sharp: no coupling past 3
                for (int j = 1; j <= n - 1; ++j)
                    if (j * h > 3.0) L.w[j - 1] = 0.0;
            }
            L.diag.assign(n, 0.0);
            std::vector<double> prefix(n, 0.0);
            for (int l = 1; l < n; ++l) prefix[l] = prefix[l - 1] + L.w[l - 1];
            for (int i = 0; i < n; ++i) L.diag[i] = prefix[i] + prefix[n - 1 - i];
        }
        return L;
    }

    // 2D: shared offset stencil, midpoint weights + singular-cell fold
    std::function<double(double)> Jr = [&k](double d) {
        return kernel_eval(k, Point{0.0, 0.0}, Point{d, 0.0});
    };
    double c0 = 2.0 * pi *
                gauss7([&](double r) { return r * r * r * Jr(r); }, 1e-12, h / 2);
    // graded panels toward zero for the singular part
    {
        double hi = h / 2;
        c0 = 0.0;
        for (int l = 0; l < 60; ++l) {
            double lo = hi / 2;
            c0 += 2.0 * pi * gauss7([&](double r) { return r * r * r * Jr(r); }, lo, hi);
            hi = lo;
        }
    }
    int maxoff = n - 1;
    for (int dx = 0; dx <= maxoff; ++dx) {
        for (int dy = (dx == 0 ? 1 : -maxoff); dy <= maxoff; ++dy) {
            double d = h * std::sqrt(double(dx) * dx + double(dy) * dy);
            double wt = 0.0;
            if (k.form == KernelForm::truncated && d > 3.0) continue;
            wt = Jr(d) * h * h;
            if ((dx == 1 && dy == 0) || (dx == 0 && dy == 1)) wt += c0 / (4.0 * h * h);
            if (wt != 0.0) {
                L.off_dx.push_back(dx);
                L.off_dy.push_back(dy);
                L.w2.push_back(wt);
            }
        }
    }
    return L;
}

inline Field apply(const DiscreteOperator& L, const Field& f) {
    if (!f.grid.same_as(L.grid)) throw std::invalid_argument("grid mismatch");
    const Grid& g = L.grid;
    int n = g.n_axis;
    Field out(g, f.time);

    if (g.dim == 1) {
        if (g.boundary == Boundary::periodic) {
            std::vector<double> kern(n, 0.0);
            double S = 0.0;
            for (int l = 1; l < n; ++l) {
                kern[l] = L.w[l - 1];
                S += L.w[l - 1];
            }
            auto conv = circular_convolve(f.v, kern);
            double mean = 0.0;
            for (double v : f.v) mean += v;
            mean /= n;
            for (int i = 0; i < n; ++i)
                out.v[i] = (S + L.rank1) * f.v[i] - conv[i] - L.rank1 * mean;
        } else {
            auto conv = symmetric_linear_convolve(f.v, 0.0, L.w);
            for (int i = 0; i < n; ++i) out.v[i] = L.diag[i] * f.v[i] - conv[i];
        }
        return out;
    }

    bool per = g.boundary == Boundary::periodic;
    for (size_t q = 0; q < L.w2.size(); ++q) {
        int dx = L.off_dx[q], dy = L.off_dy[q];
        double wt = L.w2[q];
        for (int ix = 0; ix < n; ++ix) {
            int jx = ix + dx;
            if (per) jx = (jx % n + n) % n;
            else if (jx < 0 || jx >= n) continue;
            for (int iy = 0; iy < n; ++iy) {
                int jy = iy + dy;
                if (per) jy = (jy % n + n) % n;
                else if (jy < 0 || jy >= n) continue;
                double dfl = f.v[ix * n + iy] - f.v[jx * n + jy];
                out.v[ix * n + iy] += wt * dfl;
                out.v[jx * n + jy] -= wt * dfl;
            }
        }
    }
    return out;
}

inline double bilinear(const DiscreteOperator& L, const Field& f, const Field& g) {
    require_same_grid(f, g);
    Field Lg = apply(L, g);
    double s = 0.0;
    for (int i = 0; i < int(f.v.size()); ++i) s += f.v[i] * Lg.v[i];
    return s * f.cell();
}

inline double quadratic(const DiscreteOperator& L, const Field& f) {
    return bilinear(L, f, f);
}

inline Field fourier_apply(double sigma, const Field& f) {
    if (f.grid.boundary != Boundary::periodic)
        throw std::invalid_argument("Fourier multiplier needs a periodic grid");
    Field out(f.grid, f.time);
    if (f.grid.dim == 1) {
        out.v = spectral_apply(f.v, f.grid.length(),
                               [sigma](double x) { return std::pow(x, sigma); });
        return out;
    }
    int n = f.grid.n_axis;
    std::vector<cplx> a(f.v.begin(), f.v.end());
    fftw_plan pf = fftw_plan_dft_2d(n, n, reinterpret_cast<fftw_complex*>(a.data()),
                                    reinterpret_cast<fftw_complex*>(a.data()),
                                    FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_execute(pf);
    fftw_destroy_plan(pf);
    double L2 = f.grid.length();
    for (int i = 0; i < n; ++i) {
        int ii = i <= n / 2 ? i : i - n;
        for (int j = 0; j < n; ++j) {
            int jj = j <= n / 2 ? j : j - n;
            double xi = 2.0 * pi / L2 * std::sqrt(double(ii) * ii + double(jj) * jj);
            a[i * n + j] *= std::pow(xi, sigma);
        }
    }
    fftw_plan pb = fftw_plan_dft_2d(n, n, reinterpret_cast<fftw_complex*>(a.data()),
                                    reinterpret_cast<fftw_complex*>(a.data()),
                                    FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_execute(pb);
    fftw_destroy_plan(pb);
    for (int i = 0; i < n * n; ++i) out.v[i] = a[i].real() / (n * n);
    return out;
}

// ---- Stroock-Varopoulos ----------------------------------------------------

struct SVTriple {
    std::function<double(double)> F, G, H, dF, dG, dH;

    static SVTriple identity() {
        SVTriple t;
        t.F = t.G = t.H = [](double s) { return s; };
        t.dF = t.dG = t.dH = [](double) { return 1.0; };
        return t;
    }
    // F(s)=|s|^{m-1}s, G(s)=s, H(s)=(2 sqrt(m)/(m+1))|s|^{(m-1)/2}s; then
    // (H')^2 = m|s|^{m-1} = F'G' with equality.
    static SVTriple power(double m) {
        SVTriple t;
        t.F = [m](double s) { return std::copysign(std::pow(std::abs(s), m), s); };
        t.dF = [m](double s) { return m * std::pow(std::abs(s), m - 1.0); };
        t.G = [](double s) { return s; };
        t.dG = [](double) { return 1.0; };
        double c = 2.0 * std::sqrt(m) / (m + 1.0);
        t.H = [m, c](double s) {
            return c * std::copysign(std::pow(std::abs(s), (m + 1.0) / 2.0), s);
        };
        t.dH = [m](double s) {
            return std::sqrt(m) * std::pow(std::abs(s), (m - 1.0) / 2.0);
        };
        return t;
    }
};

struct SVReport {
    double lhs = 0.0;   // quadratic(H(u))
    double rhs = 0.0;   // bilinear(F(u), G(u))
    double gap = 0.0;   // lhs - rhs, expected <= 0
    double scale = 1.0;
    bool passed = false;
};

inline SVReport check_stroock_varopoulos(const DiscreteOperator& L, const Field& u,
                                         const SVTriple& t) {
    for (double s : u.v) {
        double lhsq = t.dH(s) * t.dH(s), rhsq = t.dF(s) * t.dG(s);
        if (lhsq > rhsq + 1e-10 * (1.0 + std::abs(rhsq)))
            throw std::invalid_argument("triple violates (H')^2 <= F'G' on the data");
    }
    Field Fu(u.grid, u.time), Gu(u.grid, u.time), Hu(u.grid, u.time);
    for (int i = 0; i < int(u.v.size()); ++i) {
        Fu.v[i] = t.F(u.v[i]);
        Gu.v[i] = t.G(u.v[i]);
        Hu.v[i] = t.H(u.v[i]);
    }
    SVReport r;
    r.lhs = quadratic(L, Hu);
    r.rhs = bilinear(L, Fu, Gu);
    r.gap = r.lhs - r.rhs;
    r.scale = std::max(1.0, std::abs(r.lhs) + std::abs(r.rhs));
    r.passed = r.gap <= 1e-10 * r.scale;
    return r;
}

}  // namespace nlfilt
