#pragma once

// Uniform grids (1D/2D) and scalar fields on them.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace nlfilt {

enum class Boundary { periodic, extended_by_zero };

struct Grid {
    int dim = 1;              // 1 or 2
    double h = 0.0;           // spacing
    double R_dom = 0.0;       // half-extent; nodes at i*h - R_dom
    int n_axis = 0;           // nodes per axis
    Boundary boundary = Boundary::extended_by_zero;

    Grid() = default;
    Grid(int dim_, double R, int n, Boundary b)
        : dim(dim_), R_dom(R), n_axis(n), boundary(b) {
        if (dim != 1 && dim != 2) throw std::invalid_argument("dim must be 1 or 2");
        if (R <= 0 || n < 2) throw std::invalid_argument("bad grid extent");
        h = 2.0 * R / n;
        std::int64_t total = dim == 1 ? n : std::int64_t(n) * n;
        if (total > (std::int64_t(1) << 26))
            throw std::invalid_argument("grid exceeds memory budget");
    }

    int size() const { return dim == 1 ? n_axis : n_axis * n_axis; }
    double coord(int i) const { return i * h - R_dom; }
    double length() const { return 2.0 * R_dom; }  // period in periodic mode

    bool same_as(const Grid& o) const {
        return dim == o.dim && n_axis == o.n_axis && h == o.h &&
               R_dom == o.R_dom && boundary == o.boundary;
    }
};

struct Field {
    Grid grid;
    std::vector<double> v;
    double time = 0.0;

    Field() = default;
    explicit Field(const Grid& g, double t = 0.0) : grid(g), v(g.size(), 0.0), time(t) {}

    double& operator()(int i) { return v[i]; }
    double operator()(int i) const { return v[i]; }
    double& at2(int i, int j) { return v[i * grid.n_axis + j]; }
    double at2(int i, int j) const { return v[i * grid.n_axis + j]; }

    double cell() const { return grid.dim == 1 ? grid.h : grid.h * grid.h; }

    double mass() const {
        double s = 0;
        for (double x : v) s += x;
        return s * cell();
    }
    double linf() const {
        double m = 0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    }
    double l1() const {
        double s = 0;
        for (double x : v) s += std::abs(x);
        return s * cell();
    }
    double l2sq() const {
        double s = 0;
        for (double x : v) s += x * x;
        return s * cell();
    }
    double pos_mass() const {
        double s = 0;
        for (double x : v) if (x > 0) s += x;
        return s * cell();
    }
    double neg_mass() const {
        double s = 0;
        for (double x : v) if (x < 0) s -= x;
        return s * cell();
    }
    bool finite() const {
        for (double x : v) if (!std::isfinite(x)) return false;
        return true;
    }

    // Piecewise-linear sample at x (1D); outside values read as zero
    // (periodic grids wrap instead).
    double sample1(double x) const {
        double p = (x + grid.R_dom) / grid.h;
        if (grid.boundary == Boundary::periodic) {
            p = p - std::floor(p / grid.n_axis) * grid.n_axis;
            int i0 = int(std::floor(p));
            double f = p - i0;
            int i1 = (i0 + 1) % grid.n_axis;
            return (1 - f) * v[i0 % grid.n_axis] + f * v[i1];
        }
        if (p < 0 || p > grid.n_axis - 1) {
            if (p > -1 && p < 0) return (1 + p) * v[0];
            if (p > grid.n_axis - 1 && p < grid.n_axis)
                return (grid.n_axis - p) * v[grid.n_axis - 1];
            return 0.0;
        }
        int i0 = int(std::floor(p));
        if (i0 == grid.n_axis - 1) return v[i0];
        double f = p - i0;
        return (1 - f) * v[i0] + f * v[i0 + 1];
    }
};

inline void require_same_grid(const Field& a, const Field& b) {
    if (!a.grid.same_as(b.grid)) throw std::invalid_argument("grid mismatch");
}

}  // namespace nlfilt
