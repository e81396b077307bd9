#pragma once

// Translation-invariant noise with a factorised kernel q(x,y) = q_wv(x) *
// prod_dim q_perp(y_dim). The x-direction lives on a doubled periodic lattice
// (circulant embedding of [-L,L] into length 4L) so that restricted samples
// carry the exact lattice covariance up to the kernel tail beyond 2L.
// Spectra use the continuum scaling q_hat = step * DFT(samples), under which
// white noise scaled by (dx dy^{d-1})^{-1/2} and multiplied by sqrt(q_hat) in
// Fourier space reproduces Cov(dW(z), dW(z')) = dt q(z - z').

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "field.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "util.hpp"
#include "wave.hpp"

namespace stowave {

struct NoiseSpec {
    enum class Kind { gaussian, compact_bump };
    Kind kind = Kind::gaussian;
    double ell_x = 1.0;
    double ell_y = 1.0;
    double amplitude = 1.0;
    double radius = 1.0;       // half-width of the tent bump
    bool homogeneous_y = true; // q_perp == 1
    int m = 1;

    void validate() const {
        if (m < 1 || m > Model::kMaxComp) throw ValidationError("NoiseSpec: bad component count");
        if (!(amplitude >= 0.0)) throw ValidationError("NoiseSpec: negative amplitude");
        if (kind == Kind::gaussian && (!(ell_x > 0.0) || !(ell_y > 0.0)))
            throw ValidationError("NoiseSpec: correlation lengths must be positive");
        if (kind == Kind::compact_bump && !(radius > 0.0))
            throw ValidationError("NoiseSpec: bump radius must be positive");
    }
};

struct NoiseKernel {
    Grid grid;
    int m = 1;
    Eigen::ArrayXd q_wv;       // Mx = 2 Nx samples, circulant first row
    Eigen::ArrayXd q_wv_hat;   // dx * DFT, clipped at the round-off floor
    Eigen::ArrayXd p_hat_x;    // sqrt(q_wv_hat)
    Eigen::ArrayXd q_perp;     // Ny samples per transverse dimension (d >= 2)
    Eigen::ArrayXd q_perp_hat; // dy * DFT
    Eigen::ArrayXd p_hat_y;
    double q0 = 0.0;
    double q_avg = 1.0;

    int embed() const { return 2 * grid.Nx; }
    int offset() const { return grid.Nx / 2; } // node i of [-L,L] sits at embed index i + offset
};

namespace detail {

// continuum-scaled spectrum of an even sample vector; negative modes beyond
// round-off are an indefiniteness error, round-off negatives clip to zero
inline Eigen::ArrayXd spectrum_checked(const Eigen::ArrayXd& samples, double step) {
    const int n = static_cast<int>(samples.size());
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> in(n), out(n);
    for (int k = 0; k < n; ++k) in[k] = samples(k);
    fft.fwd(out, in);
    Eigen::ArrayXd hat(n);
    for (int k = 0; k < n; ++k) {
        const double v = step * out[k].real();
        if (v < -1e-6) throw ValidationError("noise kernel: spectrum has a negative mode, kernel not non-negative definite");
        hat(k) = std::max(v, 0.0);
    }
    return hat;
}

inline double kernel_value(const NoiseSpec& spec, double ell, double r) {
    if (spec.kind == NoiseSpec::Kind::gaussian)
        return std::exp(-0.5 * r * r / (ell * ell));
    return std::max(0.0, 1.0 - std::abs(r) / spec.radius);
}

// periodized samples on a lattice of n points with spacing step and period n*step
inline Eigen::ArrayXd periodized_samples(const NoiseSpec& spec, double ell, int n, double step) {
    const double period = n * step;
    Eigen::ArrayXd q(n);
    for (int k = 0; k < n; ++k) {
        const double base = (k <= n / 2) ? k * step : (k - n) * step;
        double acc = 0.0;
        for (int img = -3; img <= 3; ++img) acc += kernel_value(spec, ell, base + img * period);
        q(k) = acc;
    }
    return q;
}

// x-direction spectral multiply on the embedded lattice: columns of `data`
// are independent x-vectors of length Mx; multiplies DFT by `mult` in place
inline void embedded_multiply_x(Eigen::ArrayXXd& data, const Eigen::ArrayXd& mult) {
    const int mxn = static_cast<int>(data.rows());
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> in(mxn), out(mxn);
    for (int j = 0; j < data.cols(); ++j) {
        for (int k = 0; k < mxn; ++k) in[k] = data(k, j);
        fft.fwd(out, in);
        for (int k = 0; k < mxn; ++k) out[k] *= mult(k);
        fft.inv(in, out);
        for (int k = 0; k < mxn; ++k) data(k, j) = in[k].real();
    }
}

// transverse spectral multiply: per x-row DFT along the flattened transverse
// index, scale mode (l0, l1, ..) by prod_dim mult(l_dim), inverse DFT
inline void transverse_multiply(Eigen::ArrayXXd& data, const Grid& g, const Eigen::ArrayXd& mult) {
    if (g.d < 2) return;
    Eigen::ArrayXXcd a = data.cast<std::complex<double>>();
    transverse_dft(a, g, +1);
    for (int j = 0; j < data.cols(); ++j) {
        double f = 1.0;
        for (int dim = 0; dim < g.dims_y(); ++dim) {
            int idx = j;
            for (int q = 0; q < dim; ++q) idx /= g.Ny;
            f *= mult(idx % g.Ny);
        }
        a.col(j) *= f;
    }
    transverse_dft(a, g, -1);
    data = a.real() / g.ny_total();
}

// window content placed at [off, off+nx); the pads continue the boundary
// values so fields with x-limits (fronts, constants) convolve as on the line,
// with the seam at the antipode of the embedded circle
inline Eigen::ArrayXXd embed_extend(const Eigen::ArrayXXd& w, int mxn, int off) {
    const int nx = static_cast<int>(w.rows());
    Eigen::ArrayXXd pad(mxn, w.cols());
    pad.topRows(off).rowwise() = w.row(0);
    pad.block(off, 0, nx, w.cols()) = w;
    pad.bottomRows(mxn - off - nx).rowwise() = w.row(nx - 1);
    return pad;
}

} // namespace detail

inline NoiseKernel build_kernel(const NoiseSpec& spec, const Grid& g) {
    spec.validate();
    g.validate();
    if (spec.kind == NoiseSpec::Kind::compact_bump && spec.radius > 2.0 * g.L)
        throw ValidationError("build_kernel: bump wider than the embedded domain");

    NoiseKernel k;
    k.grid = g;
    k.m = spec.m;

    const int mxn = k.embed();
    Eigen::ArrayXd qx = detail::periodized_samples(spec, spec.ell_x, mxn, g.dx());
    k.q_wv = spec.amplitude * qx;
    k.q_wv_hat = detail::spectrum_checked(k.q_wv, g.dx());
    k.p_hat_x = k.q_wv_hat.sqrt();

    if (g.d >= 2) {
        if (spec.homogeneous_y) {
            k.q_perp = Eigen::ArrayXd::Ones(g.Ny);
        } else {
            k.q_perp = detail::periodized_samples(spec, spec.ell_y, g.Ny, g.dy());
        }
        k.q_perp_hat = detail::spectrum_checked(k.q_perp, g.dy());
        k.p_hat_y = k.q_perp_hat.sqrt();
        const double integral = g.dy() * k.q_perp.sum(); // exact, q_perp_hat(0)
        k.q_avg = std::pow(integral / g.torus, g.dims_y());
        k.q0 = k.q_wv(0) * std::pow(k.q_perp(0), g.dims_y());
    } else {
        k.q_avg = 1.0;
        k.q0 = k.q_wv(0);
    }
    return k;
}

// [Q w](x,y) = int q(x-x', y-y') w(x',y') dx' dy': linear convolution in x via
// the embedding, circular convolution in each transverse dimension
inline Field apply_Q(const NoiseKernel& k, const Field& w) {
    if (!w.grid.same(k.grid)) throw ValidationError("apply_Q: grid mismatch");
    if (w.n != k.m) throw ValidationError("apply_Q: component count does not match the kernel");
    const Grid& g = k.grid;
    const int mxn = k.embed(), off = k.offset(), nx = g.nx();
    Field out(g, w.n);
    for (int c = 0; c < w.n; ++c) {
        Eigen::ArrayXXd pad = detail::embed_extend(w.comp[c], mxn, off);
        detail::embedded_multiply_x(pad, k.q_wv_hat);
        Eigen::ArrayXXd res = pad.block(off, 0, nx, g.ny_total());
        detail::transverse_multiply(res, g, g.d >= 2 ? k.q_perp_hat : Eigen::ArrayXd());
        out.comp[c] = res;
    }
    return out;
}

// x-part of the operator alone, acting on 1D profiles
inline Profile apply_Q_profile(const NoiseKernel& k, const Profile& p) {
    const Grid& g = k.grid;
    if (p.rows() != g.nx()) throw ValidationError("apply_Q_profile: profile length mismatch");
    const int mxn = k.embed(), off = k.offset();
    Profile out(p.rows(), p.cols());
    Eigen::ArrayXXd pad = detail::embed_extend(p, mxn, off);
    detail::embedded_multiply_x(pad, k.q_wv_hat);
    out = pad.block(off, 0, g.nx(), p.cols());
    return out;
}

// one increment of the Q-Wiener process: sqrt(dt) * (sqrt-kernel * white noise),
// m independent components; draws are consumed in a fixed node order
inline Field sample_increment(const NoiseKernel& k, CounterRng& rng, double dt) {
    if (!(dt > 0.0)) throw ValidationError("sample_increment: dt must be positive");
    const Grid& g = k.grid;
    const int mxn = k.embed(), off = k.offset(), ny = g.ny_total();
    const double scale = std::sqrt(dt) / std::sqrt(g.dx() * g.wy());
    Field out(g, k.m);
    for (int c = 0; c < k.m; ++c) {
        Eigen::ArrayXXd white(mxn, ny);
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < mxn; ++i) white(i, j) = rng.gauss();
        detail::embedded_multiply_x(white, k.p_hat_x);
        Eigen::ArrayXXd res = white.block(off, 0, g.nx(), ny);
        if (g.d >= 2) detail::transverse_multiply(res, g, k.p_hat_y);
        out.comp[c] = scale * res;
    }
    return out;
}

// q_avg * sum_j <G_j, Q_wv G_j>_x with G_j = sum_c g(Phi)_{c j} psi_c:
// the predicted linear growth rate of the phase variance per unit time
inline double phase_diffusion_slope(const Model& mod, const WaveProfile& wave, const NoiseKernel& k) {
    if (wave.psi_tw.size() == 0)
        throw ValidationError("phase_diffusion_slope: adjoint mode not available");
    if (wave.grid.L != k.grid.L || wave.grid.Nx != k.grid.Nx)
        throw ValidationError("phase_diffusion_slope: grid mismatch");
    const Grid& g = wave.grid;
    const int nx = g.nx();
    Eigen::ArrayXXd gk = eval_g_profile(mod, wave.phi); // (nx, n*m), row-major (c,j)
    Profile G(nx, mod.m);
    G.setZero();
    for (int j = 0; j < mod.m; ++j)
        for (int c = 0; c < mod.n; ++c) G.col(j) += gk.col(c * mod.m + j) * wave.psi_tw.col(c);
    Profile QG = apply_Q_profile(k, G);
    double s = 0.0;
    for (int j = 0; j < mod.m; ++j) {
        double acc = 0.0;
        for (int i = 0; i < nx; ++i) acc += g.wx(i) * G(i, j) * QG(i, j);
        s += acc;
    }
    return k.q_avg * s;
}

} // namespace stowave
