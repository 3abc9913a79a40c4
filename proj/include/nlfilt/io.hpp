#pragma once

// Serialization: field CSV (coordinates...,value), compact binary dumps,
// diagnostics CSV. Doubles are printed with %.17g so that reruns are
// byte-identical.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"

namespace nlfilt {

inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_field_csv(const Field& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    if (f.grid.dim == 1) {
        out << "x,value\n";
        for (int i = 0; i < f.grid.size(); ++i)
            out << fmt_double(f.grid.coord(i)) << ',' << fmt_double(f.v[i]) << '\n';
    } else {
        out << "x,y,value\n";
        for (int i = 0; i < f.grid.n_axis; ++i)
            for (int j = 0; j < f.grid.n_axis; ++j)
                out << fmt_double(f.grid.coord(i)) << ',' << fmt_double(f.grid.coord(j))
                    << ',' << fmt_double(f.at2(i, j)) << '\n';
    }
}

// Binary layout: int64 dim, int64 nodes per axis, f64 h, f64 R_dom, f64 time,
// then row-major values as little-endian f64.
inline void write_field_binary(const Field& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    std::int64_t dim = f.grid.dim, n = f.grid.n_axis;
    double h = f.grid.h, R = f.grid.R_dom, t = f.time;
    out.write(reinterpret_cast<const char*>(&dim), 8);
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(&h), 8);
    out.write(reinterpret_cast<const char*>(&R), 8);
    out.write(reinterpret_cast<const char*>(&t), 8);
    out.write(reinterpret_cast<const char*>(f.v.data()),
              std::streamsize(f.v.size() * 8));
}

inline Field read_field_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::int64_t dim = 0, n = 0;
    double h = 0, R = 0, t = 0;
    in.read(reinterpret_cast<char*>(&dim), 8);
    in.read(reinterpret_cast<char*>(&n), 8);
    in.read(reinterpret_cast<char*>(&h), 8);
    in.read(reinterpret_cast<char*>(&R), 8);
    in.read(reinterpret_cast<char*>(&t), 8);
    if (!in || dim < 1 || dim > 2 || n < 2) throw std::runtime_error("bad dump header");
    Grid g(int(dim), R, int(n), Boundary::extended_by_zero);
    Field f(g, t);
    in.read(reinterpret_cast<char*>(f.v.data()), std::streamsize(f.v.size() * 8));
    if (!in) throw std::runtime_error("truncated dump");
    return f;
}

struct CsvWriter {
    std::ofstream out;
    explicit CsvWriter(const std::string& path, const std::string& header) : out(path) {
        if (!out) throw std::runtime_error("cannot open " + path);
        out << header << '\n';
    }
    void row(const std::vector<double>& vals) {
        for (size_t i = 0; i < vals.size(); ++i)
            out << (i ? "," : "") << fmt_double(vals[i]);
        out << '\n';
    }
};

}  // namespace nlfilt
