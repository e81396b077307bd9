#pragma once

#include <cmath>

#include "stowave/util.hpp"

namespace stowave {

// Discretized cylinder [-L,L] x T^{d-1}. The x-grid has Nx intervals and
// Nx+1 nodes including both boundaries (dx = 2L/Nx); each transverse
// dimension is periodic with Ny nodes (dy = |T|/Ny, no duplicate endpoint).
struct Grid {
    double L = 20.0;
    int Nx = 256;
    int d = 1;
    double torus = 1.0;
    int Ny = 1;

    Grid() = default;
    Grid(double L_, int Nx_, int d_, double torus_ = 1.0, int Ny_ = 1)
        : L(L_), Nx(Nx_), d(d_), torus(torus_), Ny(Ny_) {
        validate();
    }

    void validate() const {
        if (!(L > 0.0)) throw ValidationError("grid: L must be positive");
        if (d < 1 || d > 3) throw ValidationError("grid: d must be 1, 2 or 3");
        if (Nx < 8 || !is_pow2(Nx)) throw ValidationError("grid: Nx must be a power of two >= 8");
        if (d >= 2) {
            if (!(torus > 0.0)) throw ValidationError("grid: torus size must be positive");
            if (Ny < 8 || !is_pow2(Ny)) throw ValidationError("grid: Ny must be a power of two >= 8");
        }
    }

    int nx() const { return Nx + 1; }
    int dims_y() const { return d - 1; }
    int ny_total() const {
        int t = 1;
        for (int i = 0; i < dims_y(); ++i) t *= Ny;
        return t;
    }
    double dx() const { return 2.0 * L / Nx; }
    double dy() const { return torus / Ny; }
    double x(int i) const { return -L + i * dx(); }
    // quadrature: trapezoid in x, rectangle in y
    double wx(int i) const { return (i == 0 || i == Nx) ? 0.5 * dx() : dx(); }
    double wy() const {
        double w = 1.0;
        for (int i = 0; i < dims_y(); ++i) w *= dy();
        return w;
    }
    double transverse_measure() const {
        double m = 1.0;
        for (int i = 0; i < dims_y(); ++i) m *= torus;
        return m;
    }
    double lambda1() const {
        const double pi = 3.14159265358979323846;
        return 4.0 * pi * pi / (torus * torus);
    }
    // signed integer frequency of transverse linear index along dimension dim
    int freq(int ylin, int dim) const {
        for (int i = 0; i < dim; ++i) ylin /= Ny;
        int k = ylin % Ny;
        return (k <= Ny / 2 - 1) ? k : k - Ny;
    }
    // |xi|^2 for transverse linear index
    double freq_sq(int ylin) const {
        double s = 0.0;
        for (int i = 0; i < dims_y(); ++i) s += sq(static_cast<double>(freq(ylin, i)));
        return s;
    }

    bool same(const Grid& o) const {
        return L == o.L && Nx == o.Nx && d == o.d &&
               (d == 1 || (torus == o.torus && Ny == o.Ny));
    }
};

} // namespace stowave
