#pragma once

// Linearization of the reaction-diffusion flow at a travelling front, its
// adjoint, the induced x-semigroup, and the two-parameter evolution family
// obtained by damping each transverse Fourier mode. Operators are stored on
// the interior x-nodes (boundary values pinned to zero); profiles returned
// to callers live on the full node set with zero boundary entries.

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/MatrixFunctions>

#include "field.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "util.hpp"
#include "wave.hpp"

namespace stowave {

// Scalar damping coefficient nu(t) as a sampled series on an increasing time
// grid, with certified bounds 0 < k_nu <= nu <= K_nu. Integrals are exact for
// the piecewise-linear interpolant (trapezoid on the stored samples).
struct EvolutionCoefficient {
    Eigen::ArrayXd times;
    Eigen::ArrayXd values;
    double k_nu = 0.0;
    double K_nu = 0.0;

    void validate() const {
        if (times.size() != values.size() || times.size() < 2)
            throw ValidationError("EvolutionCoefficient: need matching series with >= 2 samples");
        for (Eigen::Index i = 1; i < times.size(); ++i)
            if (!(times(i) > times(i - 1)))
                throw ValidationError("EvolutionCoefficient: times must increase strictly");
        if (!(k_nu > 0.0))
            throw ValidationError("EvolutionCoefficient: lower bound k_nu must be positive");
        if (!(K_nu >= k_nu))
            throw ValidationError("EvolutionCoefficient: bounds out of order");
        if ((values < k_nu - 1e-12).any() || (values > K_nu + 1e-12).any())
            throw ValidationError("EvolutionCoefficient: samples leave [k_nu, K_nu]");
    }

    double value(double t) const {
        const Eigen::Index m = times.size();
        if (t <= times(0)) return values(0);
        if (t >= times(m - 1)) return values(m - 1);
        Eigen::Index lo = 0, hi = m - 1;
        while (hi - lo > 1) {
            Eigen::Index mid = (lo + hi) / 2;
            (times(mid) <= t ? lo : hi) = mid;
        }
        const double s = (t - times(lo)) / (times(hi) - times(lo));
        return (1.0 - s) * values(lo) + s * values(hi);
    }

    // integral of the interpolant over [s,t]; [s,t] must lie in the sampled range
    double integral(double s, double t) const {
        const Eigen::Index m = times.size();
        if (t < s) throw ValidationError("EvolutionCoefficient: reversed interval");
        if (s < times(0) - 1e-12 || t > times(m - 1) + 1e-12)
            throw ValidationError("EvolutionCoefficient: interval outside sampled range");
        if (t == s) return 0.0;
        double acc = 0.0;
        for (Eigen::Index i = 0; i + 1 < m; ++i) {
            const double a = std::max(s, times(i)), b = std::min(t, times(i + 1));
            if (b <= a) continue;
            acc += 0.5 * (value(a) + value(b)) * (b - a);
        }
        return acc;
    }

    static EvolutionCoefficient constant(double v, double t0, double t1) {
        EvolutionCoefficient nu;
        nu.times = Eigen::ArrayXd::LinSpaced(2, t0, t1);
        nu.values = Eigen::ArrayXd::Constant(2, v);
        nu.k_nu = v;
        nu.K_nu = v;
        nu.validate();
        return nu;
    }
};

namespace detail {

// interior restriction (drop first/last row and column) of an x-operator
inline Eigen::SparseMatrix<double> interior_submatrix(const Eigen::SparseMatrix<double>& M) {
    const int nx = static_cast<int>(M.rows());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(M.nonZeros()));
    for (int k = 0; k < M.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(M, k); it; ++it) {
            if (it.row() < 1 || it.row() > nx - 2) continue;
            if (it.col() < 1 || it.col() > nx - 2) continue;
            trip.emplace_back(it.row() - 1, it.col() - 1, it.value());
        }
    Eigen::SparseMatrix<double> out(nx - 2, nx - 2);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

inline Eigen::VectorXd interior_flatten(const Grid& g, const Profile& p) {
    const int nx = g.nx(), n = static_cast<int>(p.cols());
    Eigen::VectorXd v((nx - 2) * n);
    for (int i = 1; i <= nx - 2; ++i)
        for (int c = 0; c < n; ++c) v((i - 1) * n + c) = p(i, c);
    return v;
}

inline Profile interior_unflatten(const Grid& g, int n, const Eigen::VectorXd& v) {
    const int nx = g.nx();
    Profile p = Profile::Zero(nx, n);
    for (int i = 1; i <= nx - 2; ++i)
        for (int c = 0; c < n; ++c) p(i, c) = v((i - 1) * n + c);
    return p;
}

struct SemigroupCache {
    std::mutex mu;
    bool has_dense = false;
    Eigen::MatrixXd dense;                      // dense copy of A for expm
    std::map<long long, Eigen::MatrixXd> expm;  // keyed by rounded t
    std::map<long long, std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>>> cn_lu;
    std::map<long long, Eigen::SparseMatrix<double>> cn_rhs;
};

} // namespace detail

struct Linearisation {
    Grid grid;     // full cylinder grid; operators act on the x-part
    int n = 1;
    double c = 0.0;
    Eigen::SparseMatrix<double> A;      // interior nodes, index (i-1)*n + comp
    Eigen::SparseMatrix<double> A_adj;  // formal adjoint, same stencils
    Profile phi_x;                      // d/dx of the front, full node set
    Profile psi_tw;                     // adjoint zero mode, <phi_x, psi_tw>_x = 1
    double beta = 0.0;                  // spectral gap off the neutral direction
    double lambda1 = 0.0;               // leading transverse eigenvalue 4 pi^2 / |T|^2
    std::vector<std::complex<double>> rightmost; // gap eigenvalue cluster, Re descending

    std::shared_ptr<detail::SemigroupCache> cache;

    int interior_size() const { return (grid.nx() - 2) * n; }
};

namespace detail {

// dense (or implicit, for large systems) application of exp(t A) to a block
// of interior-flattened column vectors, in place
inline void semigroup_apply(const Linearisation& lin, double t, Eigen::MatrixXd& cols) {
    if (t == 0.0) return;
    const int N = lin.interior_size();
    const long long key = std::llround(t * 1e12);
    if (N <= 1100) {
        const Eigen::MatrixXd* E = nullptr;
        {
            std::lock_guard<std::mutex> lk(lin.cache->mu);
            auto& cc = *lin.cache;
            if (!cc.has_dense) {
                cc.dense = Eigen::MatrixXd(lin.A);
                cc.has_dense = true;
            }
            auto it = cc.expm.find(key);
            if (it == cc.expm.end())
                it = cc.expm.emplace(key, Eigen::MatrixXd((t * cc.dense).exp())).first;
            E = &it->second;
        }
        cols = (*E) * cols;
        return;
    }
    // implicit midpoint stepping for grids too large for a dense exponential
    const int nsub = std::max(1, static_cast<int>(std::ceil(t / 1e-3)));
    const double dt = t / nsub;
    const long long dtkey = std::llround(dt * 1e12);
    Eigen::SparseLU<Eigen::SparseMatrix<double>>* lu = nullptr;
    const Eigen::SparseMatrix<double>* rhs = nullptr;
    {
        std::lock_guard<std::mutex> lk(lin.cache->mu);
        auto& cc = *lin.cache;
        auto it = cc.cn_lu.find(dtkey);
        if (it == cc.cn_lu.end()) {
            Eigen::SparseMatrix<double> I(N, N);
            I.setIdentity();
            Eigen::SparseMatrix<double> lhs = I - (0.5 * dt) * lin.A;
            auto fac = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
            fac->compute(lhs);
            if (fac->info() != Eigen::Success)
                throw SolverError("semigroup: implicit step factorization failed");
            it = cc.cn_lu.emplace(dtkey, std::move(fac)).first;
            cc.cn_rhs.emplace(dtkey, Eigen::SparseMatrix<double>(I + (0.5 * dt) * lin.A));
        }
        lu = it->second.get();
        rhs = &cc.cn_rhs.at(dtkey);
    }
    for (int k = 0; k < nsub; ++k) cols = lu->solve((*rhs) * cols);
}

// smooth localized random field: gaussian bumps in x times low transverse modes
inline Field random_smooth_field(const Grid& g, int n, CounterRng& rng) {
    Field f(g, n);
    const double pi = 3.14159265358979323846;
    for (int c = 0; c < n; ++c)
        for (int k = 0; k < 4; ++k) {
            const double amp = rng.gauss();
            const double x0 = (2.0 * rng.uniform() - 1.0) * g.L / 3.0;
            const double w = 1.0 + 2.0 * rng.uniform();
            const int mmax = (g.d >= 2) ? std::min(3, g.Ny / 2 - 1) : 0;
            int m = (mmax > 0) ? static_cast<int>(rng.uniform() * (mmax + 1)) : 0;
            m = std::min(m, mmax);
            const double ph = 2.0 * pi * rng.uniform();
            for (int j = 0; j < g.ny_total(); ++j) {
                const double y0 = (g.d >= 2) ? (j % g.Ny) * g.dy() : 0.0;
                const double ang = 2.0 * pi * m * y0 / g.torus + ph;
                for (int i = 0; i < g.nx(); ++i) {
                    const double xr = (g.x(i) - x0) / w;
                    f.comp[c](i, j) += amp * std::exp(-xr * xr) * std::cos(ang);
                }
            }
        }
    return f;
}

} // namespace detail

// Assemble the linearization at the front, compute the normalized adjoint
// zero mode by inverse iteration, and estimate the spectral gap from the 20
// rightmost eigenvalues of a shift-inverted Arnoldi run deflated against the
// neutral direction. Fills wave.psi_tw as a side effect.
inline Linearisation build_linearisation(WaveProfile& wave, const Model& mod, const Grid& grid) {
    mod.validate();
    grid.validate();
    if (grid.L != wave.grid.L || grid.Nx != wave.grid.Nx)
        throw ValidationError("build_linearisation: x-grid does not match the wave profile");
    if (static_cast<int>(wave.phi.cols()) != mod.n)
        throw ValidationError("build_linearisation: component mismatch");

    const int nx = grid.nx(), n = mod.n;
    const int N = (nx - 2) * n;

    Linearisation lin;
    lin.grid = grid;
    lin.n = n;
    lin.c = wave.c;
    lin.phi_x = wave.phi_x(1);
    lin.lambda1 = grid.lambda1();
    lin.cache = std::make_shared<detail::SemigroupCache>();

    const Eigen::SparseMatrix<double> D1 = detail::interior_submatrix(deriv_x_matrix(grid, 1));
    const Eigen::SparseMatrix<double> D2 = detail::interior_submatrix(deriv_x_matrix(grid, 2));
    const Eigen::ArrayXXd J = eval_df_profile(mod, wave.phi); // row i = row-major Jacobian

    std::vector<Eigen::Triplet<double>> ta, tj;
    ta.reserve(static_cast<size_t>(D1.nonZeros() + D2.nonZeros()) * n + static_cast<size_t>(N) * n);
    tj.reserve(ta.capacity());
    for (int c = 0; c < n; ++c) {
        const double dc = mod.diffusion.size() > 0 ? mod.diffusion(c) : 1.0;
        for (int k = 0; k < D2.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(D2, k); it; ++it) {
                const int r = static_cast<int>(it.row()) * n + c, q = static_cast<int>(it.col()) * n + c;
                ta.emplace_back(r, q, dc * it.value());
                tj.emplace_back(r, q, dc * it.value());
            }
        for (int k = 0; k < D1.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(D1, k); it; ++it) {
                const int r = static_cast<int>(it.row()) * n + c, q = static_cast<int>(it.col()) * n + c;
                ta.emplace_back(r, q, wave.c * it.value());
                tj.emplace_back(r, q, -wave.c * it.value());
            }
    }
    for (int i = 1; i <= nx - 2; ++i)
        for (int c1 = 0; c1 < n; ++c1)
            for (int c2 = 0; c2 < n; ++c2) {
                const double v = J(i, c1 * n + c2);
                if (v == 0.0) continue;
                ta.emplace_back((i - 1) * n + c1, (i - 1) * n + c2, v);
                tj.emplace_back((i - 1) * n + c2, (i - 1) * n + c1, v);
            }
    lin.A.resize(N, N);
    lin.A.setFromTriplets(ta.begin(), ta.end());
    lin.A_adj.resize(N, N);
    lin.A_adj.setFromTriplets(tj.begin(), tj.end());

    // adjoint zero mode by shifted inverse iteration
    Eigen::SparseMatrix<double> I(N, N);
    I.setIdentity();
    {
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(Eigen::SparseMatrix<double>(lin.A_adj - 1e-8 * I));
        if (lu.info() != Eigen::Success)
            throw SolverError("build_linearisation: adjoint factorization failed");
        CounterRng rng(0x517e57a1u, 0);
        Eigen::VectorXd w(N);
        for (int i = 0; i < N; ++i) w(i) = rng.gauss();
        w.normalize();
        double lam = 0.0;
        for (int it = 0; it < 50; ++it) {
            Eigen::VectorXd w1 = lu.solve(w);
            const double nrm = w1.norm();
            if (!(nrm > 0.0) || !std::isfinite(nrm))
                throw SolverError("build_linearisation: inverse iteration broke down");
            w1 /= nrm;
            lam = w1.dot(lin.A_adj * w1);
            const double res = (lin.A_adj * w1 - lam * w1).norm();
            w = w1;
            if (res < 1e-12 * std::max(1.0, std::abs(lam))) break;
        }
        Profile psi = detail::interior_unflatten(grid, n, w);
        const double s = inner_product_x(grid, lin.phi_x, psi);
        if (std::abs(s) < 1e-12)
            throw SolverError("build_linearisation: adjoint mode orthogonal to the neutral direction");
        lin.psi_tw = psi / s;
    }
    wave.psi_tw = lin.psi_tw;

    // spectral gap: shift-invert Arnoldi on the complement of the neutral direction
    {
        const double sigma = 1.0;
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(Eigen::SparseMatrix<double>(lin.A - sigma * I));
        if (lu.info() != Eigen::Success)
            throw SolverError("build_linearisation: gap factorization failed");

        Eigen::VectorXd phi1 = detail::interior_flatten(grid, lin.phi_x);
        Eigen::VectorXd wpsi(N); // weighted adjoint: <psi, v>_h = wpsi . v
        for (int i = 1; i <= nx - 2; ++i)
            for (int c = 0; c < n; ++c) wpsi((i - 1) * n + c) = grid.wx(i) * lin.psi_tw(i, c);
        const double z = wpsi.dot(phi1);
        auto deflate = [&](Eigen::VectorXd& v) { v -= (wpsi.dot(v) / z) * phi1; };

        const int m = std::min(120, N - 2);
        Eigen::MatrixXd V(N, m + 1);
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
        CounterRng rng(0x0a2201d1u, 0);
        Eigen::VectorXd v0(N);
        for (int i = 0; i < N; ++i) v0(i) = rng.gauss();
        deflate(v0);
        v0.normalize();
        V.col(0) = v0;
        int mm = m;
        for (int j = 0; j < m; ++j) {
            Eigen::VectorXd w = lu.solve(V.col(j));
            deflate(w);
            for (int pass = 0; pass < 2; ++pass)
                for (int i = 0; i <= j; ++i) {
                    const double h = V.col(i).dot(w);
                    w -= h * V.col(i);
                    H(i, j) += h;
                }
            const double nrm = w.norm();
            H(j + 1, j) = nrm;
            if (nrm < 1e-12) { mm = j + 1; break; }
            V.col(j + 1) = w / nrm;
        }
        Eigen::EigenSolver<Eigen::MatrixXd> es(H.topLeftCorner(mm, mm));
        std::vector<std::complex<double>> lams;
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
            const std::complex<double> mu = es.eigenvalues()(i);
            if (std::abs(mu) < 1e-12) continue; // artifact of the deflated direction
            lams.push_back(sigma + 1.0 / mu);
        }
        std::sort(lams.begin(), lams.end(),
                  [](const std::complex<double>& a, const std::complex<double>& b) {
                      return a.real() > b.real();
                  });
        if (lams.empty())
            throw SolverError("build_linearisation: no gap eigenvalues found");
        lams.resize(std::min<size_t>(lams.size(), 20));
        lin.rightmost = lams;
        lin.beta = -lams.front().real();
        if (lin.beta <= 0.0)
            throw SolverError("build_linearisation: spectral gap violation, nontrivial eigenvalue with nonnegative real part");
    }
    return lin;
}

// exp(t A) applied to an x-profile; boundary values are pinned to zero
inline Profile semigroup_Stw(const Linearisation& lin, const Profile& v0, double t) {
    if (t < 0.0) throw ValidationError("semigroup_Stw: negative time");
    if (v0.rows() != lin.grid.nx() || static_cast<int>(v0.cols()) != lin.n)
        throw ValidationError("semigroup_Stw: profile shape mismatch");
    if (t == 0.0) return v0;
    Eigen::MatrixXd cols = detail::interior_flatten(lin.grid, v0);
    detail::semigroup_apply(lin, t, cols);
    return detail::interior_unflatten(lin.grid, lin.n, cols.col(0));
}

// Two-parameter evolution family: x-semigroup on each transverse Fourier
// mode, damped by exp(-lambda1 |xi|^2 int_s^t nu). E(s,s) is the identity.
inline Field evolution_E(const Linearisation& lin, const Field& v0, double s, double t,
                         const EvolutionCoefficient& nu) {
    if (t < s) throw ValidationError("evolution_E: reversed time interval");
    if (!v0.grid.same(lin.grid)) throw ValidationError("evolution_E: grid mismatch");
    if (v0.n != lin.n) throw ValidationError("evolution_E: component mismatch");
    nu.validate();
    if (t == s) return v0;

    const Grid& g = lin.grid;
    const int nx = g.nx(), n = lin.n, N = lin.interior_size();
    const double base = nu.integral(s, t);

    if (g.d < 2) {
        Eigen::MatrixXd cols = detail::interior_flatten(g, v0.x_slice(0));
        detail::semigroup_apply(lin, t - s, cols);
        Field out(g, n);
        Profile p = detail::interior_unflatten(g, n, cols.col(0));
        for (int c = 0; c < n; ++c) out.comp[c].col(0) = p.col(c);
        return out;
    }

    SpectralField sp = transverse_fft(v0);
    const int ny = g.ny_total();
    Eigen::MatrixXd cols(N, 2 * ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 1; i <= nx - 2; ++i)
            for (int c = 0; c < n; ++c) {
                cols((i - 1) * n + c, j) = sp.comp[c](i, j).real();
                cols((i - 1) * n + c, ny + j) = sp.comp[c](i, j).imag();
            }
    detail::semigroup_apply(lin, t - s, cols);
    for (int j = 0; j < ny; ++j) {
        const double fac = std::exp(-lin.lambda1 * g.freq_sq(j) * base);
        cols.col(j) *= fac;
        cols.col(ny + j) *= fac;
    }
    for (int c = 0; c < n; ++c) {
        sp.comp[c].row(0).setZero();
        sp.comp[c].row(nx - 1).setZero();
    }
    for (int j = 0; j < ny; ++j)
        for (int i = 1; i <= nx - 2; ++i)
            for (int c = 0; c < n; ++c)
                sp.comp[c](i, j) = std::complex<double>(cols((i - 1) * n + c, j),
                                                        cols((i - 1) * n + c, ny + j));
    return transverse_ifft(sp);
}

enum class Projector { tw, avg, full, perp };

// Rank-one phase projector P_tw, transverse average P_avg, their product,
// and the complementary projector.
inline Field project(const Linearisation& lin, const Field& u, Projector which) {
    if (!u.grid.same(lin.grid)) throw ValidationError("project: grid mismatch");
    if (u.n != lin.n) throw ValidationError("project: component mismatch");
    switch (which) {
        case Projector::avg: {
            Field out(u.grid, u.n);
            for (int c = 0; c < u.n; ++c) {
                Eigen::ArrayXd mean = u.comp[c].rowwise().mean();
                out.comp[c].colwise() = mean;
            }
            return out;
        }
        case Projector::tw: {
            Eigen::ArrayXd q = pair_x(u, lin.psi_tw);
            Field out(u.grid, u.n);
            for (int c = 0; c < u.n; ++c)
                for (int j = 0; j < u.grid.ny_total(); ++j)
                    out.comp[c].col(j) = q(j) * lin.phi_x.col(c);
            return out;
        }
        case Projector::full:
            return project(lin, project(lin, u, Projector::avg), Projector::tw);
        case Projector::perp: {
            Field out = u;
            out -= project(lin, u, Projector::full);
            return out;
        }
    }
    throw ValidationError("project: unknown projector");
}

struct DecayFit {
    double M = 0.0;
    double mu_hat = 0.0;
};

// Least-squares fit of log ||E(t,0) P_perp v|| over sampled times and random
// smooth fields; returns the amplitude M and decay rate mu_hat.
inline DecayFit decay_check(const Linearisation& lin, const EvolutionCoefficient& nu,
                            int trials, double t_max, int nsamples = 12) {
    if (nsamples < 5) throw ValidationError("decay_check: fit needs at least 5 sample times");
    if (trials < 1 || !(t_max > 0.0)) throw ValidationError("decay_check: bad parameters");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    long cnt = 0;
    for (int trial = 0; trial < trials; ++trial) {
        CounterRng rng(0xdecaf00du, static_cast<uint64_t>(trial));
        Field w = detail::random_smooth_field(lin.grid, lin.n, rng);
        w = project(lin, w, Projector::perp);
        const double n0 = norm_L2(w);
        if (n0 < 1e-12) continue;
        for (int j = 0; j < nsamples; ++j) {
            const double tj = t_max * j / (nsamples - 1);
            const Field v = evolution_E(lin, w, 0.0, tj, nu);
            const double nrm = norm_L2(v);
            if (!(nrm > 0.0)) continue;
            const double y = std::log(nrm / n0);
            sx += tj; sy += y; sxx += tj * tj; sxy += tj * y;
            ++cnt;
        }
    }
    if (cnt < 5) throw SolverError("decay_check: not enough valid samples for the fit");
    const double det = cnt * sxx - sx * sx;
    if (std::abs(det) < 1e-30) throw SolverError("decay_check: degenerate fit");
    const double slope = (cnt * sxy - sx * sy) / det;
    const double icpt = (sy - slope * sx) / cnt;
    return DecayFit{std::exp(icpt), -slope};
}

} // namespace stowave
