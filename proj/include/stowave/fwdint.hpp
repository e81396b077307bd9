#pragma once

// Forward Riemann sums against stored Brownian mode paths, and the pathwise
// representation of stochastic convolutions with the evolution family: the
// propagated Ito term plus the s-derivative correction integrated against the
// tail integrals. Stored paths are read as piecewise-linear interpolants and
// integrals against them are evaluated exactly, so quadrature error enters
// only through the smooth evolution factors.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "field.hpp"
#include "linearop.hpp"
#include "noise.hpp"
#include "rng.hpp"
#include "util.hpp"

namespace stowave {

// ---- covariance eigenmodes -------------------------------------------------

// Real Fourier modes of the circulant x-embedding times real torus modes,
// restricted to the grid window. Each mode diagonalises the covariance with
// spectral value weight^2; sampling sum_k weight_k mode_k beta_k reproduces
// the lattice covariance of the noise module up to the dropped tail.
struct ModeBasis {
    Grid grid;
    std::vector<Field> mode;  // unit norm on the embedded domain
    Eigen::ArrayXd weight;    // sqrt of the spectral value, descending
    double kept_mass = 0.0;
    double total_mass = 0.0;
    double tail_mass = 0.0;

    int size() const { return static_cast<int>(mode.size()); }
    Field scaled(int k) const { return weight(k) * mode[k]; }
};

namespace detail {

struct RealMode1D {
    Eigen::ArrayXd values;  // per node of the dimension
    double qhat = 0.0;
};

// real modes of a circulant spectrum: constant, cos/sin pairs, alternating
inline std::vector<RealMode1D> real_modes(const Eigen::ArrayXd& qhat, int npts, int period,
                                          int shift, double step) {
    std::vector<RealMode1D> out;
    const double pi = 3.14159265358979323846;
    const double plen = period * step;
    auto fill = [&](int k, bool sine, double amp) {
        RealMode1D m;
        m.qhat = qhat(k);
        m.values.resize(npts);
        for (int i = 0; i < npts; ++i) {
            const double ang = 2.0 * pi * k * (i + shift) / period;
            m.values(i) = amp * (sine ? std::sin(ang) : std::cos(ang));
        }
        out.push_back(std::move(m));
    };
    fill(0, false, 1.0 / std::sqrt(plen));
    for (int k = 1; k < period / 2; ++k) {
        fill(k, false, std::sqrt(2.0 / plen));
        fill(k, true, std::sqrt(2.0 / plen));
    }
    if (period % 2 == 0 && period >= 2) fill(period / 2, false, 1.0 / std::sqrt(plen));
    return out;
}

} // namespace detail

// top K_modes eigenmodes of the kernel by spectral value; the dropped mass is
// the truncation budget callers should compare against
inline ModeBasis noise_modes(const NoiseKernel& ker, int K_modes = 64) {
    if (K_modes < 1) throw ValidationError("noise_modes: need at least one mode");
    const Grid& g = ker.grid;
    const int dims = g.dims_y();
    if (dims > 3) throw ValidationError("noise_modes: at most three transverse dimensions");

    const auto xmodes = detail::real_modes(ker.q_wv_hat, g.nx(), ker.embed(), ker.offset(), g.dx());
    std::vector<detail::RealMode1D> ymodes;
    if (dims > 0) ymodes = detail::real_modes(ker.q_perp_hat, g.Ny, g.Ny, 0, g.dy());

    struct Combo {
        double q;
        int c, ix;
        std::array<int, 3> iy;
    };
    std::vector<Combo> combos;
    const long ycount = dims > 0 ? static_cast<long>(std::pow(double(ymodes.size()), dims)) : 1;
    combos.reserve(static_cast<size_t>(ker.m) * xmodes.size() * ycount);
    for (int c = 0; c < ker.m; ++c)
        for (int ix = 0; ix < static_cast<int>(xmodes.size()); ++ix)
            for (long yl = 0; yl < ycount; ++yl) {
                Combo cb{xmodes[ix].qhat, c, ix, {0, 0, 0}};
                long rest = yl;
                for (int dmn = 0; dmn < dims; ++dmn) {
                    cb.iy[dmn] = static_cast<int>(rest % ymodes.size());
                    rest /= static_cast<long>(ymodes.size());
                    cb.q *= ymodes[cb.iy[dmn]].qhat;
                }
                combos.push_back(cb);
            }

    // deterministic order: weight descending, enumeration order on ties
    std::vector<size_t> idx(combos.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return combos[a].q > combos[b].q; });
    const int K = std::min<int>(K_modes, static_cast<int>(combos.size()));

    ModeBasis basis;
    basis.grid = g;
    basis.weight.resize(K);
    basis.mode.reserve(K);
    for (const auto& cb : combos) basis.total_mass += cb.q;
    for (int k = 0; k < K; ++k) {
        const Combo& cb = combos[idx[k]];
        basis.kept_mass += cb.q;
        basis.weight(k) = std::sqrt(std::max(0.0, cb.q));
        Field f(g, ker.m);
        for (int j = 0; j < g.ny_total(); ++j) {
            double yfac = 1.0;
            int rest = j;
            for (int dmn = 0; dmn < dims; ++dmn) {
                yfac *= ymodes[cb.iy[dmn]].values(rest % g.Ny);
                rest /= g.Ny;
            }
            f.comp[cb.c].col(j) = yfac * xmodes[cb.ix].values;
        }
        basis.mode.push_back(std::move(f));
    }
    basis.tail_mass = std::max(0.0, basis.total_mass - basis.kept_mass);
    return basis;
}

// ---- Brownian mode paths ---------------------------------------------------

// One realisation of independent standard Brownian motions, one per mode,
// stored at uniform resolution on [0, 2*horizon]: the forward sum reads one
// averaging window past the horizon. Off-grid values are the linear
// interpolant of the stored samples.
struct BrownianPaths {
    double horizon = 0.0;
    int steps = 0;       // per [0, horizon]
    Eigen::MatrixXd b;   // (modes) x (2*steps + 1), column j holds time j*dt

    int modes() const { return static_cast<int>(b.rows()); }
    double dt() const { return horizon / steps; }

    void validate() const {
        if (!(horizon > 0.0) || steps < 2)
            throw ValidationError("BrownianPaths: need a positive horizon and >= 2 steps");
        if (b.rows() < 1 || b.cols() != 2 * steps + 1)
            throw ValidationError("BrownianPaths: sample table shape mismatch");
    }

    double value(int k, double s) const {
        const int last = 2 * steps;
        double u = s / dt();
        if (u < 0.0) {
            if (u < -1e-9) throw ValidationError("BrownianPaths: time before the origin");
            u = 0.0;
        }
        if (u > last) {
            if (u > last + 1e-9) throw ValidationError("BrownianPaths: time past the stored extension");
            u = last;
        }
        const int j = std::min(static_cast<int>(u), last - 1);
        const double w = u - j;
        return (1.0 - w) * b(k, j) + w * b(k, j + 1);
    }
};

// increments are consumed time-major (all modes per step); one stream per path
inline BrownianPaths sample_mode_paths(int K, int M, double T, std::uint64_t seed,
                                       std::uint64_t path_id) {
    if (K < 1 || M < 2 || !(T > 0.0)) throw ValidationError("sample_mode_paths: bad shape");
    BrownianPaths p;
    p.horizon = T;
    p.steps = M;
    p.b.resize(K, 2 * M + 1);
    CounterRng rng(seed, path_id);
    const double rt = std::sqrt(T / M);
    p.b.col(0).setZero();
    for (int j = 1; j <= 2 * M; ++j)
        for (int k = 0; k < K; ++k) p.b(k, j) = p.b(k, j - 1) + rt * rng.gauss();
    return p;
}

// ---- mode processes --------------------------------------------------------

// Time-dependent forcing recorded through its action on each noise mode.
// Step processes hold one field per knot interval and are constant on
// (knots[i], knots[i+1]]; sampled processes hold one field per knot and
// interpolate linearly in between.
struct ModeProcess {
    std::vector<double> knots;               // increasing, front() == 0
    std::vector<std::vector<Field>> values;  // [interval or knot][mode]
    bool step = true;

    int modes() const { return values.empty() ? 0 : static_cast<int>(values[0].size()); }
    double horizon() const { return knots.empty() ? 0.0 : knots.back(); }

    void validate() const {
        if (knots.size() < 2) throw ValidationError("ModeProcess: need at least one interval");
        if (knots.front() != 0.0) throw ValidationError("ModeProcess: knots must start at 0");
        for (size_t i = 1; i < knots.size(); ++i)
            if (!(knots[i] > knots[i - 1]))
                throw ValidationError("ModeProcess: knots must increase strictly");
        const size_t want = step ? knots.size() - 1 : knots.size();
        if (values.size() != want)
            throw ValidationError("ModeProcess: value rows do not match the knot layout");
        const int L = modes();
        if (L < 1) throw ValidationError("ModeProcess: need at least one mode");
        const Field& ref = values[0][0];
        for (const auto& row : values) {
            if (static_cast<int>(row.size()) != L)
                throw ValidationError("ModeProcess: ragged mode rows");
            for (const Field& f : row)
                if (!f.grid.same(ref.grid) || f.n != ref.n)
                    throw ValidationError("ModeProcess: value shape mismatch");
        }
    }

    // step kind: index i with s in (knots[i], knots[i+1]]; s <= 0 maps to 0
    int interval_of(double s) const {
        const auto it = std::lower_bound(knots.begin(), knots.end(), s);
        int i = static_cast<int>(it - knots.begin()) - 1;
        return std::clamp(i, 0, static_cast<int>(values.size()) - 1);
    }

    Field at(double s, int l) const {
        if (step) return values[static_cast<size_t>(interval_of(s))][static_cast<size_t>(l)];
        const auto it = std::lower_bound(knots.begin(), knots.end(), s);
        const size_t j = static_cast<size_t>(it - knots.begin());
        if (j == 0) return values.front()[static_cast<size_t>(l)];
        if (j >= knots.size()) return values.back()[static_cast<size_t>(l)];
        const double w = (s - knots[j - 1]) / (knots[j] - knots[j - 1]);
        Field f = values[j - 1][static_cast<size_t>(l)];
        f *= (1.0 - w);
        f += w * values[j][static_cast<size_t>(l)];
        return f;
    }
};

// Ito integral of a step process over (a, b]: exact sum of value * increment
inline Field ito_step_integral(const ModeProcess& B, const BrownianPaths& paths, double a,
                               double b) {
    B.validate();
    paths.validate();
    if (!B.step) throw ValidationError("ito_step_integral: step processes only");
    if (B.modes() > paths.modes())
        throw ValidationError("ito_step_integral: more process modes than stored paths");
    const Field& ref = B.values[0][0];
    Field acc(ref.grid, ref.n);
    if (b <= a) return acc;
    const int L = B.modes();
    for (size_t i = 0; i < B.values.size(); ++i) {
        const double lo = std::max(a, B.knots[i]);
        const double hi = std::min(b, B.knots[i + 1]);
        if (hi <= lo) continue;
        for (int l = 0; l < L; ++l) {
            const double inc = paths.value(l, hi) - paths.value(l, lo);
            if (inc != 0.0) acc += inc * B.values[i][static_cast<size_t>(l)];
        }
    }
    return acc;
}

// int_a^b sum_l ||B(s)[mode l]||_L2^2 ds for a step process
inline double process_l2_mass(const ModeProcess& B, double a, double b) {
    B.validate();
    if (!B.step) throw ValidationError("process_l2_mass: step processes only");
    double acc = 0.0;
    for (size_t i = 0; i < B.values.size(); ++i) {
        const double lo = std::max(a, B.knots[i]);
        const double hi = std::min(b, B.knots[i + 1]);
        if (hi <= lo) continue;
        double sq = 0.0;
        for (const Field& f : B.values[i]) sq += inner_product_L2(f, f);
        acc += (hi - lo) * sq;
    }
    return acc;
}

// ---- forward Riemann sum ---------------------------------------------------

// n * sum_l int_0^T G(s)[mode l] (beta_l(s + 1/n) - beta_l(s)) ds with the
// trapezoid rule on the stored path grid. The averaging window is 1/n; the
// path must resolve it with at least 4 samples and extend past horizon + 1/n.
inline Field forward_riemann(const ModeProcess& G, int n, const BrownianPaths& paths) {
    G.validate();
    paths.validate();
    if (n < 1) throw ValidationError("forward_riemann: n must be positive");
    const double T = paths.horizon;
    const double h = 1.0 / n;
    if (G.modes() > paths.modes())
        throw ValidationError("forward_riemann: more process modes than stored paths");
    if (G.horizon() < T - 1e-12)
        throw ValidationError("forward_riemann: process ends before the path horizon");
    if (paths.dt() > 0.25 * h * (1.0 + 1e-12))
        throw ValidationError("forward_riemann: path resolution below 4 samples per window");
    if (h > T + 1e-12)
        throw ValidationError("forward_riemann: averaging window exceeds the stored extension");

    const int M = paths.steps;
    const double dtp = paths.dt();
    const int L = G.modes();
    // accumulate scalar coefficients per stored field, then one pass of axpys
    std::vector<std::vector<double>> coef(G.values.size(), std::vector<double>(L, 0.0));
    for (int j = 0; j <= M; ++j) {
        const double s = j * dtp;
        const double w = (j == 0 || j == M) ? 0.5 : 1.0;
        size_t row = 0;
        double wl = 1.0, wr = 0.0;
        if (G.step) {
            row = static_cast<size_t>(G.interval_of(s));
        } else {
            const auto it = std::lower_bound(G.knots.begin(), G.knots.end(), s);
            size_t k = static_cast<size_t>(it - G.knots.begin());
            if (k == 0) {
                row = 0;
            } else if (k >= G.knots.size()) {
                row = G.knots.size() - 1;
            } else {
                row = k - 1;
                wr = (s - G.knots[k - 1]) / (G.knots[k] - G.knots[k - 1]);
                wl = 1.0 - wr;
            }
        }
        for (int l = 0; l < L; ++l) {
            const double inc = paths.value(l, s + h) - paths.b(l, j);
            if (inc == 0.0) continue;
            const double base = w * dtp * n * inc;
            coef[row][l] += wl * base;
            if (wr != 0.0 && row + 1 < coef.size()) coef[row + 1][l] += wr * base;
        }
    }
    const Field& ref = G.values[0][0];
    Field acc(ref.grid, ref.n);
    for (size_t i = 0; i < coef.size(); ++i)
        for (int l = 0; l < L; ++l)
            if (coef[i][l] != 0.0) acc += coef[i][l] * G.values[i][static_cast<size_t>(l)];
    return acc;
}

// ---- pathwise convolution --------------------------------------------------

namespace detail {

// d/ds of s -> E(t, s) v by second-order differencing; the stencil folds to
// one-sided at the ends so that evaluation times stay inside [0, t]
inline Field ds_evolution(const Linearisation& lin, const Field& v, double s, double t,
                          const EvolutionCoefficient& nu, double delta) {
    if (s - delta >= 0.0 && s + delta <= t) {
        Field hi = evolution_E(lin, v, s + delta, t, nu);
        hi -= evolution_E(lin, v, s - delta, t, nu);
        hi *= 1.0 / (2.0 * delta);
        return hi;
    }
    if (s - delta < 0.0) {
        Field f0 = evolution_E(lin, v, s, t, nu);
        Field f1 = evolution_E(lin, v, s + delta, t, nu);
        Field f2 = evolution_E(lin, v, s + 2.0 * delta, t, nu);
        f0 *= -3.0;
        f1 *= 4.0;
        f0 += f1;
        f0 -= f2;
        f0 *= 1.0 / (2.0 * delta);
        return f0;
    }
    Field f0 = evolution_E(lin, v, s, t, nu);
    Field f1 = evolution_E(lin, v, s - delta, t, nu);
    Field f2 = evolution_E(lin, v, s - 2.0 * delta, t, nu);
    f0 *= 3.0;
    f1 *= -4.0;
    f0 += f1;
    f0 += f2;
    f0 *= 1.0 / (2.0 * delta);
    return f0;
}

// exact moments of the path interpolant: m0 = int_a^b beta, m1 = int_a^b (s-a) beta
inline void path_moments(const BrownianPaths& p, int l, double a, double b, double& m0,
                         double& m1) {
    m0 = 0.0;
    m1 = 0.0;
    if (b <= a) return;
    const double dtp = p.dt();
    int j = std::max(0, static_cast<int>(std::floor(a / dtp * (1.0 - 1e-15))));
    for (; j * dtp < b; ++j) {
        const double lo = std::max(a, j * dtp);
        const double hi = std::min(b, (j + 1) * dtp);
        if (hi <= lo) continue;
        const double bl = p.value(l, lo), bh = p.value(l, hi), w = hi - lo;
        m0 += 0.5 * (bl + bh) * w;
        m1 += (lo - a) * 0.5 * (bl + bh) * w + w * w * (bl / 6.0 + bh / 3.0);
    }
}

// int_sigma^tau E(t_out, s) B(s) dW^-(s): the Ito term propagated from the
// window start plus the quadrature of d/ds E applied to the tail integrals.
// Within each segment the path enters through its exact moments while the
// evolution factor is interpolated linearly, so nodes only need to resolve
// the smooth factor. Nodes sit on the global grid of the given spacing plus
// the window ends and interior knots; callers splitting one window across
// several evaluations must share spacing and delta for the pieces to cancel.
inline Field conv_window(const Linearisation& lin, const ModeProcess& B, double sigma,
                         double tau, double t_out, const EvolutionCoefficient& nu,
                         const BrownianPaths& paths, double spacing, double delta) {
    Field out(lin.grid, lin.n);
    if (tau <= sigma) return out;
    out = evolution_E(lin, ito_step_integral(B, paths, sigma, tau), sigma, t_out, nu);

    std::vector<double> nodes;
    nodes.push_back(sigma);
    for (double k : B.knots)
        if (k > sigma && k < tau) nodes.push_back(k);
    for (long q = static_cast<long>(std::floor(sigma / spacing)) + 1; q * spacing < tau; ++q)
        if (q * spacing > sigma) nodes.push_back(q * spacing);
    nodes.push_back(tau);
    std::sort(nodes.begin(), nodes.end());
    const double tol = 1e-9 * t_out;
    nodes.erase(std::unique(nodes.begin(), nodes.end(),
                            [&](double x, double y) { return std::abs(x - y) < tol; }),
                nodes.end());
    if (std::abs(nodes.back() - tau) < tol) nodes.back() = tau;
    nodes.front() = sigma;

    const int P = static_cast<int>(nodes.size());
    const int L = B.modes();
    std::vector<Field> agg(static_cast<size_t>(P), Field(lin.grid, lin.n));

    // J(s, tau) = C_i - sum_l h_il beta_l(s) on each knot interval i
    for (size_t i = 0; i < B.values.size(); ++i) {
        const double lo = std::max(sigma, B.knots[i]);
        const double hi = std::min(tau, B.knots[i + 1]);
        if (hi <= lo + tol) continue;
        Field C = ito_step_integral(B, paths, lo, tau);
        for (int l = 0; l < L; ++l) {
            const double bv = paths.value(l, lo);
            if (bv != 0.0) C += bv * B.values[i][static_cast<size_t>(l)];
        }
        const auto plo = std::lower_bound(nodes.begin(), nodes.end(), lo - tol);
        int pa = static_cast<int>(plo - nodes.begin());
        for (int p = pa; p + 1 < P && nodes[p + 1] <= hi + tol; ++p) {
            const double a = nodes[p], b = nodes[p + 1];
            const double w = b - a;
            if (w <= tol) continue;
            agg[static_cast<size_t>(p)] += (0.5 * w) * C;
            agg[static_cast<size_t>(p + 1)] += (0.5 * w) * C;
            for (int l = 0; l < L; ++l) {
                double m0 = 0.0, m1 = 0.0;
                path_moments(paths, l, a, b, m0, m1);
                const double ca = m0 - m1 / w, cb = m1 / w;
                if (ca != 0.0) agg[static_cast<size_t>(p)] -= ca * B.values[i][static_cast<size_t>(l)];
                if (cb != 0.0)
                    agg[static_cast<size_t>(p + 1)] -= cb * B.values[i][static_cast<size_t>(l)];
            }
        }
    }
    for (int p = 0; p < P; ++p)
        out += ds_evolution(lin, agg[static_cast<size_t>(p)], nodes[static_cast<size_t>(p)],
                            t_out, nu, delta);
    return out;
}

inline void check_conv_inputs(const Linearisation& lin, const ModeProcess& B, double t,
                              const BrownianPaths& paths) {
    B.validate();
    paths.validate();
    if (!B.step)
        throw ValidationError("conv_pathwise: only piecewise-constant step processes are supported");
    const Field& ref = B.values[0][0];
    if (!ref.grid.same(lin.grid) || ref.n != lin.n)
        throw ValidationError("conv_pathwise: process values do not match the linearisation");
    if (B.modes() > paths.modes())
        throw ValidationError("conv_pathwise: more process modes than stored paths");
    if (!(t >= 0.0)) throw ValidationError("conv_pathwise: negative time");
    if (t > B.horizon() + 1e-12)
        throw ValidationError("conv_pathwise: process ends before the requested time");
    if (t > paths.horizon * (1.0 + 1e-12))
        throw ValidationError("conv_pathwise: time past the path horizon");
}

} // namespace detail

// E(t,0) int_0^t B dW + int_0^t d/ds E(t,s) int_s^t B dW ds on one stored path
inline Field conv_pathwise(const Linearisation& lin, const ModeProcess& B, double t,
                           const EvolutionCoefficient& nu, const BrownianPaths& paths,
                           int quad_target = 192) {
    detail::check_conv_inputs(lin, B, t, paths);
    if (quad_target < 8 || quad_target > 1 << 14)
        throw ValidationError("conv_pathwise: quadrature target out of range");
    if (t == 0.0) return Field(lin.grid, lin.n);
    return detail::conv_window(lin, B, 0.0, t, t, nu, paths, t / quad_target, 1e-4 * t);
}

struct SplitReport {
    double residual = 0.0;
    double magnitude = 0.0;
};

// Residual of splitting the convolution window at sigma and tau: the direct
// window integral against E(t, .) versus the two propagated prefix
// convolutions. All three evaluations share the outer grid spacing and
// differencing step, so the residual isolates the splitting defect.
inline SplitReport splitting_check(const Linearisation& lin, const ModeProcess& B, double sigma,
                                   double tau, double t, const EvolutionCoefficient& nu,
                                   const BrownianPaths& paths, int quad_target = 192) {
    detail::check_conv_inputs(lin, B, t, paths);
    if (!(0.0 <= sigma && sigma <= tau && tau <= t))
        throw ValidationError("splitting_check: need 0 <= sigma <= tau <= t");
    if (quad_target < 8 || quad_target > 1 << 14)
        throw ValidationError("splitting_check: quadrature target out of range");
    SplitReport rep;
    if (t == 0.0) return rep;
    const double spacing = t / quad_target;
    const double delta = 1e-4 * t;
    Field direct = detail::conv_window(lin, B, sigma, tau, t, nu, paths, spacing, delta);
    Field pre_tau = detail::conv_window(lin, B, 0.0, tau, tau, nu, paths, spacing, delta);
    Field pre_sig = detail::conv_window(lin, B, 0.0, sigma, sigma, nu, paths, spacing, delta);
    Field recomb = evolution_E(lin, pre_tau, tau, t, nu);
    recomb -= evolution_E(lin, pre_sig, sigma, t, nu);
    rep.magnitude = std::max(norm_L2(direct), norm_L2(recomb));
    direct -= recomb;
    rep.residual = norm_L2(direct);
    return rep;
}

} // namespace stowave
