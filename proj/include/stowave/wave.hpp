#pragma once

// Travelling wave (Phi0, c0) by damped Newton, spatial decay rates at the
// rest states, and the initial-phase root-find gamma0.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <sstream>
#include <utility>

#include "field.hpp"
#include "model.hpp"

namespace stowave {

struct WaveProfile {
    Grid grid;
    Profile phi;         // (nx, n)
    double c = 0.0;
    double nu_minus = 0.0;
    double nu_plus = 0.0;
    Profile psi_tw;      // adjoint eigenfunction, filled by the linear module

    Profile phi_x(int order = 1) const { return deriv_x_profile(grid, phi, order); }
};

// Monotone seed connecting u_- (left) to u_+ (right).
inline Profile tanh_seed(const Model& mod, const Grid& g, double width = 3.0) {
    Profile p(g.nx(), mod.n);
    for (int i = 0; i < g.nx(); ++i) {
        const double s = 0.5 * (1.0 - std::tanh(g.x(i) / width)); // 1 at -inf, 0 at +inf
        for (int c = 0; c < mod.n; ++c)
            p(i, c) = mod.u_plus[c] + s * (mod.u_minus[c] - mod.u_plus[c]);
    }
    return p;
}

// Spatial rates at the rest states: eigenvalues of the first-order form of
// D lambda^2 + c lambda + Df(u_rest) = 0. The slowest decaying direction on
// each side is reported (growth rates toward -inf, decay rates toward +inf).
inline std::pair<double, double> decay_rates(const WaveProfile& wave, const Model& mod) {
    auto slowest = [&](const Eigen::VectorXd& urest, bool plus_side) {
        const int n = mod.n;
        Eigen::MatrixXd J(n, n);
        {
            std::array<double, Model::kMaxComp * Model::kMaxComp> jb{};
            mod.df(urest.data(), jb.data());
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) J(i, j) = jb[static_cast<size_t>(i * n + j)];
        }
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * n, 2 * n);
        M.block(0, n, n, n).setIdentity();
        const Eigen::VectorXd dinv = mod.diffusion.cwiseInverse();
        M.block(n, 0, n, n) = -(dinv.asDiagonal() * J);
        M.block(n, n, n, n).diagonal() = -wave.c * dinv;
        Eigen::EigenSolver<Eigen::MatrixXd> es(M);
        double best = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 2 * n; ++k) {
            const double re = es.eigenvalues()[k].real();
            if (std::abs(re) < 1e-10)
                throw SolverError("decay_rates: non-hyperbolic rest state");
            if (plus_side && re < 0.0) best = std::min(best, -re);
            if (!plus_side && re > 0.0) best = std::min(best, re);
        }
        if (!std::isfinite(best))
            throw SolverError("decay_rates: no decaying direction at rest state");
        return best;
    };
    return {slowest(mod.u_minus, false), slowest(mod.u_plus, true)};
}

// Newton on D Phi'' + c Phi' + f(Phi) = 0 with pinned boundary values and the
// phase condition <Phi - guess, guess'> = 0. Unknowns: all node values and c.
inline WaveProfile solve_wave(const Model& mod, const Grid& grid, const Profile& guess,
                              int max_iter = 50) {
    mod.validate();
    const int nx = grid.nx(), n = mod.n;
    if (guess.rows() != nx || guess.cols() != n)
        throw ValidationError("solve_wave: guess has wrong shape");
    const int N = nx * n;          // node unknowns, index i*n + c
    const int NC = N;              // column of the wavespeed unknown

    const Eigen::SparseMatrix<double> D1 = deriv_x_matrix(grid, 1);
    const Eigen::SparseMatrix<double> D2 = deriv_x_matrix(grid, 2);
    const Profile gp = deriv_x_profile(grid, guess, 1);

    // residual of the full system at (U, c)
    auto residual = [&](const Profile& U, double c) {
        Eigen::VectorXd r(N + 1);
        const Profile d1 = deriv_x_profile(grid, U, 1);
        const Profile d2 = deriv_x_profile(grid, U, 2);
        const Profile fU = eval_f_profile(mod, U);
        for (int i = 0; i < nx; ++i)
            for (int comp = 0; comp < n; ++comp) {
                double v;
                if (i == 0) v = U(i, comp) - mod.u_minus[comp];
                else if (i == nx - 1) v = U(i, comp) - mod.u_plus[comp];
                else v = mod.diffusion[comp] * d2(i, comp) + c * d1(i, comp) + fU(i, comp);
                r[i * n + comp] = v;
            }
        double ph = 0.0;
        for (int i = 0; i < nx; ++i)
            for (int comp = 0; comp < n; ++comp)
                ph += grid.wx(i) * (U(i, comp) - guess(i, comp)) * gp(i, comp);
        r[N] = ph;
        return r;
    };

    Profile U = guess;
    double c = 0.0;
    // seed the speed from the guess itself: least squares on <guess eq>
    {
        const Profile d1 = deriv_x_profile(grid, guess, 1);
        const Profile d2 = deriv_x_profile(grid, guess, 2);
        const Profile fU = eval_f_profile(mod, guess);
        double num = 0.0, den = 0.0;
        for (int i = 1; i < nx - 1; ++i)
            for (int comp = 0; comp < n; ++comp) {
                num -= d1(i, comp) * (mod.diffusion[comp] * d2(i, comp) + fU(i, comp));
                den += d1(i, comp) * d1(i, comp);
            }
        if (den > 0.0) c = num / den;
    }

    Eigen::SparseMatrix<double> J(N + 1, N + 1);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    std::vector<Eigen::Triplet<double>> trip;
    bool analyzed = false;

    Eigen::VectorXd r = residual(U, c);
    double rnorm = r.cwiseAbs().maxCoeff();
    const double tol = 1e-10;

    for (int iter = 0; iter < max_iter && rnorm > tol; ++iter) {
        trip.clear();
        const Profile d1 = deriv_x_profile(grid, U, 1);
        const Eigen::ArrayXXd dfU = eval_df_profile(mod, U);
        // interior rows: D*D2 + c*D1 acting per component, Df block per node
        for (int col = 0; col < nx; ++col) {
            for (Eigen::SparseMatrix<double>::InnerIterator it2(D2, col); it2; ++it2) {
                const int row = static_cast<int>(it2.row());
                if (row == 0 || row == nx - 1) continue;
                for (int comp = 0; comp < n; ++comp)
                    trip.emplace_back(row * n + comp, col * n + comp,
                                      mod.diffusion[comp] * it2.value());
            }
            for (Eigen::SparseMatrix<double>::InnerIterator it1(D1, col); it1; ++it1) {
                const int row = static_cast<int>(it1.row());
                if (row == 0 || row == nx - 1) continue;
                for (int comp = 0; comp < n; ++comp)
                    trip.emplace_back(row * n + comp, col * n + comp, c * it1.value());
            }
        }
        for (int i = 1; i < nx - 1; ++i)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b)
                    trip.emplace_back(i * n + a, i * n + b, dfU(i, a * n + b));
        for (int comp = 0; comp < n; ++comp) {
            trip.emplace_back(comp, comp, 1.0);
            trip.emplace_back((nx - 1) * n + comp, (nx - 1) * n + comp, 1.0);
        }
        // wavespeed column and phase row
        for (int i = 1; i < nx - 1; ++i)
            for (int comp = 0; comp < n; ++comp)
                trip.emplace_back(i * n + comp, NC, d1(i, comp));
        for (int i = 0; i < nx; ++i)
            for (int comp = 0; comp < n; ++comp)
                trip.emplace_back(N, i * n + comp, grid.wx(i) * gp(i, comp));

        J.setZero();
        J.setFromTriplets(trip.begin(), trip.end());
        J.makeCompressed();
        if (!analyzed) {
            lu.analyzePattern(J);
            analyzed = true;
        }
        lu.factorize(J);
        if (lu.info() != Eigen::Success)
            throw SolverError("solve_wave: singular Newton system");
        const Eigen::VectorXd dz = lu.solve(-r);

        // damped update
        double step = 1.0;
        for (int ls = 0; ls < 12; ++ls) {
            Profile Utry = U;
            for (int i = 0; i < nx; ++i)
                for (int comp = 0; comp < n; ++comp)
                    Utry(i, comp) += step * dz[i * n + comp];
            const double ctry = c + step * dz[N];
            Eigen::VectorXd rtry = residual(Utry, ctry);
            const double rt = rtry.cwiseAbs().maxCoeff();
            if (rt < rnorm || step < 1e-3) {
                U = Utry;
                c = ctry;
                r = rtry;
                rnorm = rt;
                break;
            }
            step *= 0.5;
        }
    }
    if (rnorm > tol) {
        std::ostringstream os;
        os << "solve_wave: Newton stalled, residual " << rnorm << " after " << max_iter
           << " iterations";
        throw SolverError(os.str());
    }

    WaveProfile w;
    w.grid = grid;
    w.phi = U;
    w.c = c;
    auto nu = decay_rates(w, mod);
    w.nu_minus = nu.first;
    w.nu_plus = nu.second;
    return w;
}

// G(gamma) = <T_{-gamma} u0 - Phi, psi_tw>_{L2(D)}; safeguarded Newton within
// a sign-change bracket found by scanning [-radius, radius].
inline double init_phase(const Field& u0, const WaveProfile& wave, double search_radius = 1.0) {
    if (wave.psi_tw.size() == 0)
        throw ValidationError("init_phase: wave has no adjoint eigenfunction attached");
    const Grid& g = u0.grid;
    if (g.Nx != wave.grid.Nx || g.L != wave.grid.L)
        throw ValidationError("init_phase: x-grid mismatch");
    const int n = u0.n;
    if (wave.phi.cols() != n) throw ValidationError("init_phase: component mismatch");

    // transverse average once; shifting commutes with the average
    Profile avg(g.nx(), n);
    for (int c = 0; c < n; ++c) avg.col(c) = u0.comp[static_cast<size_t>(c)].rowwise().mean();
    const double meas = g.transverse_measure();

    auto G = [&](double gamma) {
        const Profile shifted = shift_profile(wave.grid, avg, -gamma);
        return meas * inner_product_x(wave.grid, shifted - wave.phi, wave.psi_tw);
    };
    auto dG = [&](double gamma) {
        const Profile shifted = shift_profile(wave.grid, avg, -gamma);
        const Profile sx = deriv_x_profile(wave.grid, shifted, 1);
        return meas * inner_product_x(wave.grid, sx, wave.psi_tw);
    };

    // bracket by scanning
    const int nscan = 64;
    double a = 0.0, b = 0.0, Ga = 0.0, Gb = 0.0;
    bool found = false;
    double prev_g = -search_radius, prev_v = G(prev_g);
    for (int i = 1; i <= nscan && !found; ++i) {
        const double gg = -search_radius + 2.0 * search_radius * i / nscan;
        const double vv = G(gg);
        if (prev_v == 0.0 || prev_v * vv < 0.0) {
            a = prev_g; b = gg; Ga = prev_v; Gb = vv;
            found = true;
        }
        prev_g = gg;
        prev_v = vv;
    }
    if (!found)
        throw SolverError("init_phase: no sign change of the phase functional in bracket");

    double x = (std::abs(Ga) < std::abs(Gb)) ? a : b;
    double fx = (x == a) ? Ga : Gb;
    for (int it = 0; it < 100; ++it) {
        if (std::abs(fx) <= 1e-10) return x;
        const double d = dG(x);
        double xn = (d != 0.0) ? x - fx / d : 0.5 * (a + b);
        if (!(xn > a && xn < b)) xn = 0.5 * (a + b); // bisection safeguard
        const double fn = G(xn);
        if (Ga * fn <= 0.0) { b = xn; Gb = fn; } else { a = xn; Ga = fn; }
        x = xn;
        fx = fn;
    }
    if (std::abs(fx) <= 1e-10) return x;
    throw SolverError("init_phase: root refinement did not reach tolerance");
}

} // namespace stowave
