#pragma once

// Shared small utilities: constants, deterministic RNG, quadrature helpers,
// least-squares line fit.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlfilt {

inline constexpr double pi = 3.14159265358979323846;

// Normalization constant of the fractional Laplacian of order s in dimension N,
// chosen so that the operator has Fourier symbol |xi|^s.
inline double frac_normalization(int N, double s) {
    if (s <= 0.0 || s >= 2.0) throw std::domain_error("order must lie in (0,2)");
    return std::pow(2.0, s) * std::tgamma((N + s) / 2.0) /
           (std::pow(pi, N / 2.0) * std::abs(std::tgamma(-s / 2.0)));
}

using Rng = std::mt19937_64;

// 7-point Gauss-Legendre nodes/weights on [-1,1].
struct Gauss7 {
    static constexpr double x[7] = {
        -0.9491079123427585, -0.7415311855993945, -0.4058451513773972, 0.0,
        0.4058451513773972,  0.7415311855993945,  0.9491079123427585};
    static constexpr double w[7] = {
        0.1294849661688697, 0.2797053914892766, 0.3818300505051189,
        0.4179591836734694, 0.3818300505051189, 0.2797053914892766,
        0.1294849661688697};
};

template <class F>
double gauss7(F&& f, double a, double b) {
    double c = 0.5 * (a + b), r = 0.5 * (b - a), s = 0.0;
    for (int i = 0; i < 7; ++i) s += Gauss7::w[i] * f(c + r * Gauss7::x[i]);
    return r * s;
}

namespace detail {
template <class F>
double simpson_rec(F& f, double a, double b, double fa, double fm, double fb,
                   double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

// Adaptive Simpson on [a,b] to absolute tolerance tol.
template <class F>
double adaptive_simpson(F f, double a, double b, double tol, int max_depth = 40) {
    if (a == b) return 0.0;
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  // rms of fit residuals
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_line needs >= 2 matched points");
    double n = double(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i]; sy += y[i]; sxx += x[i] * x[i]; sxy += x[i] * y[i];
    }
    double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("degenerate abscissae");
    LineFit out;
    out.slope = (n * sxy - sx * sy) / denom;
    out.intercept = (sy - out.slope * sx) / n;
    double ss = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        double r = y[i] - (out.slope * x[i] + out.intercept);
        ss += r * r;
    }
    out.residual = std::sqrt(ss / n);
    return out;
}

}  // namespace nlfilt
