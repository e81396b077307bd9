#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <complex>
#include <unsupported/Eigen/FFT>
#include <vector>

#include "stowave/grid.hpp"
#include "stowave/util.hpp"

namespace stowave {

using Profile = Eigen::ArrayXXd; // 1D x-profile, shape (nx, n components)

// n-component real field on the discrete cylinder. Component c is an
// (nx, ny_total) array; transverse dims are flattened column-major
// (linear index j = j0 + Ny*j1).
struct Field {
    Grid grid;
    int n = 1;
    std::vector<Eigen::ArrayXXd> comp;

    Field() = default;
    Field(const Grid& g, int ncomp) : grid(g), n(ncomp) {
        comp.assign(n, Eigen::ArrayXXd::Zero(g.nx(), g.ny_total()));
    }

    static Field zero(const Grid& g, int ncomp = 1) { return Field(g, ncomp); }

    // extend a 1D profile constantly in the transverse directions
    static Field extend(const Grid& g, const Profile& p) {
        Field f(g, static_cast<int>(p.cols()));
        for (int c = 0; c < f.n; ++c) f.comp[c].colwise() = p.col(c);
        return f;
    }

    Profile x_slice(int ylin = 0) const {
        Profile p(grid.nx(), n);
        for (int c = 0; c < n; ++c) p.col(c) = comp[c].col(ylin);
        return p;
    }

    bool finite() const {
        for (const auto& a : comp)
            if (!a.isFinite().all()) return false;
        return true;
    }
    double sup() const {
        double m = 0.0;
        for (const auto& a : comp) m = std::max(m, a.abs().maxCoeff());
        return m;
    }

    Field& operator+=(const Field& o) {
        for (int c = 0; c < n; ++c) comp[c] += o.comp[c];
        return *this;
    }
    Field& operator-=(const Field& o) {
        for (int c = 0; c < n; ++c) comp[c] -= o.comp[c];
        return *this;
    }
    Field& operator*=(double s) {
        for (int c = 0; c < n; ++c) comp[c] *= s;
        return *this;
    }
    friend Field operator+(Field a, const Field& b) { return a += b; }
    friend Field operator-(Field a, const Field& b) { return a -= b; }
    friend Field operator*(double s, Field a) { return a *= s; }
};

inline void require_same_shape(const Field& a, const Field& b) {
    if (!a.grid.same(b.grid) || a.n != b.n)
        throw ValidationError("field shape mismatch");
}

// ---- quadrature -----------------------------------------------------------

inline double inner_product_L2(const Field& a, const Field& b) {
    require_same_shape(a, b);
    const Grid& g = a.grid;
    const double wy = g.wy();
    double s = 0.0;
    for (int c = 0; c < a.n; ++c) {
        Eigen::ArrayXd rows = (a.comp[c] * b.comp[c]).rowwise().sum();
        double sx = 0.0;
        for (int i = 0; i < g.nx(); ++i) sx += g.wx(i) * rows[i];
        s += sx * wy;
    }
    return s;
}

inline double norm_L2(const Field& a) { return std::sqrt(std::max(0.0, inner_product_L2(a, a))); }

// x-pairing against a 1D profile, one value per transverse point:
// out[j] = sum_c int a_c(x, y_j) p_c(x) dx
inline Eigen::ArrayXd pair_x(const Field& a, const Profile& p) {
    const Grid& g = a.grid;
    Eigen::ArrayXd out = Eigen::ArrayXd::Zero(g.ny_total());
    Eigen::ArrayXd w(g.nx());
    for (int i = 0; i < g.nx(); ++i) w[i] = g.wx(i);
    for (int c = 0; c < a.n; ++c)
        out += (a.comp[c].colwise() * (w * p.col(c))).colwise().sum().transpose();
    return out;
}

// full-cylinder pairing against an extended 1D profile
inline double pair_cyl(const Field& a, const Profile& p) {
    return pair_x(a, p).sum() * a.grid.wy();
}

inline double inner_product_x(const Grid& g, const Profile& a, const Profile& b) {
    double s = 0.0;
    for (int c = 0; c < a.cols(); ++c)
        for (int i = 0; i < g.nx(); ++i) s += g.wx(i) * a(i, c) * b(i, c);
    return s;
}

// ---- x-derivatives --------------------------------------------------------
// 4th-order central stencils in the interior, 2nd-order central at the two
// near-boundary nodes, one-sided at the boundary nodes. The same stencils
// back every discrete x-operator in the project (norms, wave solver,
// linearization), so solved profiles satisfy the discrete identities exactly.

inline void deriv_x_col(const double* u, double* out, int nx, double dx, int order) {
    if (order == 1) {
        const double c1 = 1.0 / (12.0 * dx), c2 = 1.0 / (2.0 * dx);
        out[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) * c2;
        out[1] = (u[2] - u[0]) * c2;
        for (int i = 2; i < nx - 2; ++i)
            out[i] = (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]) * c1;
        out[nx - 2] = (u[nx - 1] - u[nx - 3]) * c2;
        out[nx - 1] = (3.0 * u[nx - 1] - 4.0 * u[nx - 2] + u[nx - 3]) * c2;
    } else {
        const double c1 = 1.0 / (12.0 * dx * dx), c2 = 1.0 / (dx * dx);
        out[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) * c2;
        out[1] = (u[0] - 2.0 * u[1] + u[2]) * c2;
        for (int i = 2; i < nx - 2; ++i)
            out[i] = (-u[i - 2] + 16.0 * u[i - 1] - 30.0 * u[i] + 16.0 * u[i + 1] - u[i + 2]) * c1;
        out[nx - 2] = (u[nx - 3] - 2.0 * u[nx - 2] + u[nx - 1]) * c2;
        out[nx - 1] = (2.0 * u[nx - 1] - 5.0 * u[nx - 2] + 4.0 * u[nx - 3] - u[nx - 4]) * c2;
    }
}

inline Field deriv_x(const Field& a, int order) {
    if (order != 1 && order != 2) throw ValidationError("deriv_x: order must be 1 or 2");
    Field out(a.grid, a.n);
    const int nx = a.grid.nx();
    const double dx = a.grid.dx();
    for (int c = 0; c < a.n; ++c)
        for (int j = 0; j < a.grid.ny_total(); ++j)
            deriv_x_col(a.comp[c].col(j).data(), out.comp[c].col(j).data(), nx, dx, order);
    return out;
}

inline Profile deriv_x_profile(const Grid& g, const Profile& p, int order) {
    Profile out(p.rows(), p.cols());
    for (int c = 0; c < p.cols(); ++c) {
        Eigen::ArrayXd col = p.col(c);
        Eigen::ArrayXd o(col.size());
        deriv_x_col(col.data(), o.data(), g.nx(), g.dx(), order);
        out.col(c) = o;
    }
    return out;
}

// The same stencils as an explicit sparse operator (rows match deriv_x_col
// exactly; asserted in tests). Used wherever a Jacobian is assembled.
inline Eigen::SparseMatrix<double> deriv_x_matrix(const Grid& g, int order) {
    if (order != 1 && order != 2) throw ValidationError("deriv_x_matrix: order must be 1 or 2");
    const int nx = g.nx();
    const double dx = g.dx();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(5 * nx));
    auto add = [&](int i, int j, double v) { trip.emplace_back(i, j, v); };
    if (order == 1) {
        const double c1 = 1.0 / (12.0 * dx), c2 = 1.0 / (2.0 * dx);
        add(0, 0, -3.0 * c2); add(0, 1, 4.0 * c2); add(0, 2, -c2);
        add(1, 0, -c2); add(1, 2, c2);
        for (int i = 2; i < nx - 2; ++i) {
            add(i, i - 2, c1); add(i, i - 1, -8.0 * c1);
            add(i, i + 1, 8.0 * c1); add(i, i + 2, -c1);
        }
        add(nx - 2, nx - 3, -c2); add(nx - 2, nx - 1, c2);
        add(nx - 1, nx - 3, c2); add(nx - 1, nx - 2, -4.0 * c2); add(nx - 1, nx - 1, 3.0 * c2);
    } else {
        const double c1 = 1.0 / (12.0 * dx * dx), c2 = 1.0 / (dx * dx);
        add(0, 0, 2.0 * c2); add(0, 1, -5.0 * c2); add(0, 2, 4.0 * c2); add(0, 3, -c2);
        add(1, 0, c2); add(1, 1, -2.0 * c2); add(1, 2, c2);
        for (int i = 2; i < nx - 2; ++i) {
            add(i, i - 2, -c1); add(i, i - 1, 16.0 * c1); add(i, i, -30.0 * c1);
            add(i, i + 1, 16.0 * c1); add(i, i + 2, -c1);
        }
        add(nx - 2, nx - 3, c2); add(nx - 2, nx - 2, -2.0 * c2); add(nx - 2, nx - 1, c2);
        add(nx - 1, nx - 4, -c2); add(nx - 1, nx - 3, 4.0 * c2);
        add(nx - 1, nx - 2, -5.0 * c2); add(nx - 1, nx - 1, 2.0 * c2);
    }
    Eigen::SparseMatrix<double> M(nx, nx);
    M.setFromTriplets(trip.begin(), trip.end());
    M.makeCompressed();
    return M;
}

// ---- transverse spectral calculus -----------------------------------------

// Complex transverse Fourier coefficients per x-node. Mode ordering along
// each transverse dimension is FFT-natural: 0, 1, .., Ny/2-1, -Ny/2, .., -1.
// Normalisation: hat v(x, xi) = |T|^{1-d} * int v(x,y) e^{-2 pi i <xi,y>/|T|} dy,
// i.e. a plain DFT divided by the number of transverse points.
struct SpectralField {
    Grid grid;
    int n = 1;
    std::vector<Eigen::ArrayXXcd> comp; // (nx, ny_total) each
};

namespace detail {

// FFT along the transverse linear index for every x-row; dir=+1 forward DFT
// (unscaled), dir=-1 inverse DFT (unscaled sum over modes).
inline void transverse_dft(Eigen::ArrayXXcd& a, const Grid& g, int dir) {
    Eigen::FFT<double> fft;
    const int ny = g.Ny;
    std::vector<std::complex<double>> in(ny), out(ny);
    const int dims = g.dims_y();
    const int nyt = g.ny_total();
    for (int dim = 0; dim < dims; ++dim) {
        int stride = 1;
        for (int i = 0; i < dim; ++i) stride *= ny;
        const int outer = nyt / (stride * ny);
        for (int r = 0; r < a.rows(); ++r) {
            for (int o = 0; o < outer; ++o) {
                for (int s = 0; s < stride; ++s) {
                    const int base = o * stride * ny + s;
                    for (int k = 0; k < ny; ++k) in[k] = a(r, base + k * stride);
                    if (dir > 0) {
                        fft.fwd(out, in);
                    } else {
                        for (auto& z : in) z = std::conj(z);
                        fft.fwd(out, in);
                        for (auto& z : out) z = std::conj(z);
                    }
                    for (int k = 0; k < ny; ++k) a(r, base + k * stride) = out[k];
                }
            }
        }
    }
}

} // namespace detail

inline SpectralField transverse_fft(const Field& a) {
    if (a.grid.d < 2) throw ValidationError("transverse_fft: needs d >= 2");
    SpectralField s;
    s.grid = a.grid;
    s.n = a.n;
    s.comp.resize(a.n);
    const double norm = 1.0 / a.grid.ny_total();
    for (int c = 0; c < a.n; ++c) {
        s.comp[c] = a.comp[c].cast<std::complex<double>>();
        detail::transverse_dft(s.comp[c], a.grid, +1);
        s.comp[c] *= norm;
    }
    return s;
}

inline Field transverse_ifft(const SpectralField& s) {
    Field f(s.grid, s.n);
    for (int c = 0; c < s.n; ++c) {
        Eigen::ArrayXXcd tmp = s.comp[c];
        detail::transverse_dft(tmp, s.grid, -1);
        f.comp[c] = tmp.real();
    }
    return f;
}

// spectral transverse Laplacian: multiply mode xi by -lambda1*|xi|^2
inline Field laplacian_y(const Field& a) {
    if (a.grid.d < 2) return Field::zero(a.grid, a.n);
    SpectralField s = transverse_fft(a);
    const double l1 = a.grid.lambda1();
    for (int c = 0; c < a.n; ++c)
        for (int j = 0; j < a.grid.ny_total(); ++j)
            s.comp[c].col(j) *= -l1 * a.grid.freq_sq(j);
    return transverse_ifft(s);
}

// first derivative along transverse dimension `dim` (spectral)
inline Field deriv_y(const Field& a, int dim) {
    if (a.grid.d < 2) throw ValidationError("deriv_y: needs d >= 2");
    SpectralField s = transverse_fft(a);
    const double two_pi = 6.283185307179586476925286766559;
    const std::complex<double> I(0.0, 1.0);
    for (int c = 0; c < a.n; ++c)
        for (int j = 0; j < a.grid.ny_total(); ++j) {
            int k = a.grid.freq(j, dim);
            // drop the unpaired Nyquist mode of a real signal: its i*k
            // derivative is not real-representable
            if (k == -a.grid.Ny / 2) k = 0;
            s.comp[c].col(j) *= I * (two_pi * k / a.grid.torus);
        }
    return transverse_ifft(s);
}

// ---- Sobolev norms ---------------------------------------------------------
// || a ||_{H^k}^2 = sum over all multi-indices |alpha| <= k of the squared
// L2 norm of the mixed partial; x-derivatives by the stencils above,
// transverse derivatives spectral.

inline double sobolev_norm(const Field& a, int k) {
    if (k < 0 || k > 2) throw ValidationError("sobolev_norm: k must be 0, 1 or 2");
    double s2 = inner_product_L2(a, a);
    if (k >= 1) {
        Field ax = deriv_x(a, 1);
        s2 += inner_product_L2(ax, ax);
        for (int dim = 0; dim < a.grid.dims_y(); ++dim) {
            Field ay = deriv_y(a, dim);
            s2 += inner_product_L2(ay, ay);
            if (k >= 2) {
                Field axy = deriv_x(ay, 1);
                s2 += inner_product_L2(axy, axy);
                Field ayy = deriv_y(ay, dim);
                s2 += inner_product_L2(ayy, ayy);
                for (int dim2 = dim + 1; dim2 < a.grid.dims_y(); ++dim2) {
                    Field aym = deriv_y(ay, dim2);
                    s2 += inner_product_L2(aym, aym);
                }
            }
        }
        if (k >= 2) {
            Field axx = deriv_x(a, 2);
            s2 += inner_product_L2(axx, axx);
        }
    }
    return std::sqrt(std::max(0.0, s2));
}

inline double sobolev_norm_x(const Grid& g, const Profile& p, int k) {
    if (k < 0 || k > 2) throw ValidationError("sobolev_norm: k must be 0, 1 or 2");
    double s2 = inner_product_x(g, p, p);
    if (k >= 1) {
        Profile p1 = deriv_x_profile(g, p, 1);
        s2 += inner_product_x(g, p1, p1);
        if (k >= 2) {
            Profile p2 = deriv_x_profile(g, p, 2);
            s2 += inner_product_x(g, p2, p2);
        }
    }
    return std::sqrt(std::max(0.0, s2));
}

// ---- shift -----------------------------------------------------------------
// (T_delta a)(x,y) = a(x - delta, y). Default cubic Lagrange interpolation on
// the x-grid; positions beyond the domain take the nearest boundary value.

enum class ShiftMethod { cubic, spectral };

inline void shift_col(const double* u, double* out, int nx, double L, double dx, double delta) {
    for (int i = 0; i < nx; ++i) {
        const double p = (-L + i * dx) - delta;
        if (p <= -L) {
            out[i] = u[0];
            continue;
        }
        if (p >= L) {
            out[i] = u[nx - 1];
            continue;
        }
        int j = static_cast<int>(std::floor((p + L) / dx));
        j = std::min(std::max(j, 1), nx - 3); // 4-point stencil j-1..j+2
        const double t = (p + L) / dx - j;
        const double um = u[j - 1], u0 = u[j], u1 = u[j + 1], u2 = u[j + 2];
        out[i] = um * (-t * (t - 1.0) * (t - 2.0) / 6.0) + u0 * ((t * t - 1.0) * (t - 2.0) / 2.0) +
                 u1 * (-t * (t + 1.0) * (t - 2.0) / 2.0) + u2 * (t * (t * t - 1.0) / 6.0);
    }
}

namespace detail {

// band-limited variant: even reflection to a 2*Nx periodic signal, phase
// shift in Fourier space; accurate for fields flat near the boundary
inline void shift_col_spectral(const double* u, double* out, int nx, double dx, double delta) {
    const int m = 2 * (nx - 1);
    std::vector<std::complex<double>> buf(m), spec(m);
    for (int i = 0; i < nx; ++i) buf[i] = u[i];
    for (int i = nx; i < m; ++i) buf[i] = u[m - i];
    Eigen::FFT<double> fft;
    fft.fwd(spec, buf);
    const double two_pi = 6.283185307179586476925286766559;
    for (int k = 0; k < m; ++k) {
        const int kk = (k <= m / 2) ? k : k - m;
        spec[k] *= std::exp(std::complex<double>(0.0, -two_pi * kk * delta / (m * dx)));
    }
    for (auto& z : spec) z = std::conj(z);
    fft.fwd(buf, spec);
    for (int i = 0; i < nx; ++i) out[i] = buf[i].real() / m;
}

} // namespace detail

inline Field shift(const Field& a, double delta, ShiftMethod method = ShiftMethod::cubic) {
    if (std::abs(delta) >= a.grid.L) throw ValidationError("shift: |delta| must be < L");
    Field out(a.grid, a.n);
    const int nx = a.grid.nx();
    for (int c = 0; c < a.n; ++c)
        for (int j = 0; j < a.grid.ny_total(); ++j) {
            if (method == ShiftMethod::cubic)
                shift_col(a.comp[c].col(j).data(), out.comp[c].col(j).data(), nx, a.grid.L,
                          a.grid.dx(), delta);
            else
                detail::shift_col_spectral(a.comp[c].col(j).data(), out.comp[c].col(j).data(), nx,
                                           a.grid.dx(), delta);
        }
    return out;
}

inline Profile shift_profile(const Grid& g, const Profile& p, double delta) {
    if (std::abs(delta) >= g.L) throw ValidationError("shift: |delta| must be < L");
    Profile out(p.rows(), p.cols());
    for (int c = 0; c < p.cols(); ++c) {
        Eigen::ArrayXd col = p.col(c);
        Eigen::ArrayXd o(col.size());
        shift_col(col.data(), o.data(), g.nx(), g.L, g.dx(), delta);
        out.col(c) = o;
    }
    return out;
}

} // namespace stowave
