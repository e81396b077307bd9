#pragma once
// Phase-tracking function stack: the cutoff pair, the noise-induced phase
// coefficients, the Ito correction fields, the frame drift/diffusion, the
// frozen-frame nonlinearities, and the instantaneous stochastic wave.
//
// All formulas are written for unit diffusion; entry points reject models
// with any other diagonal. Pairings against the adjoint profile are full
// cylinder inner products, so torus size enters every threshold and norm.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "field.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "wave.hpp"

namespace stowave {

namespace detail {

inline double torus_area(const Grid& g) { return g.transverse_measure(); }

inline void require_unit_diffusion(const Model& mod, const char* op) {
    if ((mod.diffusion.array() != 1.0).any())
        throw ValidationError(std::string(op) + ": phase stack requires unit diffusion");
}

inline void require_x_match(const Grid& a, const Grid& b, const char* op) {
    if (a.nx() != b.nx() || a.L != b.L)
        throw ValidationError(std::string(op) + ": x-grids do not match");
}

// C^2 quintic step on [0,1], clamped outside
inline double smoothstep5(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

// Df(base(x)) v, the linearised reaction frozen at a 1D profile
inline Field apply_df_profile(const Model& mod, const Profile& base, const Field& v) {
    const Eigen::ArrayXXd df = eval_df_profile(mod, base);
    Field out = Field::zero(v.grid, mod.n);
    for (int a = 0; a < mod.n; ++a)
        for (int b = 0; b < mod.n; ++b)
            out.comp[a] += v.comp[b].colwise() * Eigen::ArrayXd(df.col(a * mod.n + b));
    return out;
}

} // namespace detail

// smooth non-decreasing floor: the constant A = area/4 below A, the identity
// above 2A, quintic blend between (C^2 at both knots)
inline double chi_low(double theta, double torus_area) {
    const double A = 0.25 * torus_area;
    if (theta <= A) return A;
    if (theta >= 2.0 * A) return theta;
    const double s = (theta - A) / A;
    return A * (1.0 + s * detail::smoothstep5(s));
}

// smooth non-increasing window: 1 below 2 + ref_offset, 0 above 3 + ref_offset
inline double chi_high(double theta, double ref_offset = 0.0) {
    return 1.0 - detail::smoothstep5(theta - 2.0 - ref_offset);
}

struct Cutoffs {
    double chi_h = 1.0;
    double chi_l = 1.0;
};

// chi_h gates on the L2 distance to the translated reference profile; chi_l
// is the reciprocal of the floored pairing <d_x u, T_gamma psi> (evaluated
// with the derivative moved onto u so the discrete orthogonality identities
// downstream cancel exactly)
inline Cutoffs cutoffs(const Field& u, double gamma, const WaveProfile& ref,
                       double ref_offset = 0.0) {
    detail::require_x_match(u.grid, ref.grid, "cutoffs");
    if (ref.psi_tw.size() == 0)
        throw ValidationError("cutoffs: adjoint profile not set, build the linearisation first");
    if (u.n != static_cast<int>(ref.phi.cols()))
        throw ValidationError("cutoffs: component count does not match the reference wave");
    const Grid& g = u.grid;
    const Profile phi_s = gamma == 0.0 ? ref.phi : shift_profile(g, ref.phi, gamma);
    Profile psi_s = gamma == 0.0 ? ref.psi_tw : shift_profile(g, ref.psi_tw, gamma);
    const double theta_h = norm_L2(u - Field::extend(g, phi_s));
    const double theta_l = pair_cyl(deriv_x(u, 1), psi_s);
    Cutoffs c;
    c.chi_h = chi_high(theta_h, ref_offset);
    c.chi_l = 1.0 / chi_low(theta_l, detail::torus_area(g));
    return c;
}

namespace detail {

// shared assembly: cutoffs, g(u)^T T_gamma psi, its Q image, and kappa
struct PhaseAssembly {
    Cutoffs cut;
    Profile psi, dpsi, ddpsi; // T_gamma psi_tw and x-derivatives
    Field w;                  // g(u)^T T_gamma psi, m components
    Field Qw;
    double quad = 0.0; // <Q w, w>
    double b_norm_sq = 0.0;
    double kappa = 1.0;
};

inline PhaseAssembly assemble(const Field& u, double gamma, double sigma, const Model& mod,
                              const WaveProfile& wave, const NoiseKernel& kernel,
                              double ref_offset, const char* op) {
    require_x_match(u.grid, wave.grid, op);
    require_x_match(u.grid, kernel.grid, op);
    if (mod.m != kernel.m)
        throw ValidationError(std::string(op) + ": noise component count mismatch");
    if (wave.psi_tw.size() == 0)
        throw ValidationError(std::string(op) + ": adjoint profile not set");

    PhaseAssembly A;
    A.cut = cutoffs(u, gamma, wave, ref_offset);
    const Grid& g = u.grid;
    A.psi = wave.psi_tw;
    A.dpsi = deriv_x_profile(g, A.psi, 1);
    A.ddpsi = deriv_x_profile(g, A.psi, 2);
    if (gamma != 0.0) {
        A.psi = shift_profile(g, A.psi, gamma);
        A.dpsi = shift_profile(g, A.dpsi, gamma);
        A.ddpsi = shift_profile(g, A.ddpsi, gamma);
    }
    A.w = apply_gT(mod, u, Field::extend(g, A.psi));
    A.Qw = apply_Q(kernel, A.w);
    A.quad = inner_product_L2(A.Qw, A.w);
    if (A.quad < -1e-8)
        throw SolverError(std::string(op) + ": covariance quadrature came out indefinite");
    A.quad = std::max(A.quad, 0.0);
    const double hl = A.cut.chi_h * A.cut.chi_h * A.cut.chi_l;
    A.b_norm_sq = hl * hl * A.quad;
    A.kappa = 1.0 + 0.5 * sigma * sigma * A.b_norm_sq;
    return A;
}

} // namespace detail

struct NoisePhaseCoeffs {
    double chi_h = 1.0, chi_l = 1.0;
    double b_norm_sq = 0.0;
    double kappa = 1.0;
    double nu_p1 = 0.0, nu_m1 = 0.0, nu_mh = 0.0; // kappa^t - 1, t in {1,-1,-1/2}
};

inline NoisePhaseCoeffs noise_phase_coeffs(const Field& u, double gamma, double sigma,
                                           const Model& mod, const WaveProfile& wave,
                                           const NoiseKernel& kernel, double ref_offset = 0.0) {
    const auto A = detail::assemble(u, gamma, sigma, mod, wave, kernel, ref_offset,
                                    "noise_phase_coeffs");
    NoisePhaseCoeffs out;
    out.chi_h = A.cut.chi_h;
    out.chi_l = A.cut.chi_l;
    out.b_norm_sq = A.b_norm_sq;
    out.kappa = A.kappa;
    out.nu_p1 = A.kappa - 1.0;
    out.nu_m1 = 1.0 / A.kappa - 1.0;
    out.nu_mh = 1.0 / std::sqrt(A.kappa) - 1.0;
    return out;
}

struct ItoCorrection {
    Field Ktilde; // m components, lives on the noise side
    Field KC;     // n components
};

inline ItoCorrection ito_correction_field(const Field& u, double gamma, const Model& mod,
                                          const WaveProfile& wave, const NoiseKernel& kernel,
                                          double ref_offset = 0.0) {
    const auto A = detail::assemble(u, gamma, 0.0, mod, wave, kernel, ref_offset,
                                    "ito_correction_field");
    ItoCorrection out;
    out.Ktilde = (A.cut.chi_l * A.cut.chi_h) * A.Qw;
    out.KC = (-A.cut.chi_h) * apply_g(mod, u, out.Ktilde);
    return out;
}

namespace detail {

inline double a_from_parts(const PhaseAssembly& A, const Field& u, double c, double sigma,
                           const Model& mod, const Field& KC) {
    const double s2 = sigma * sigma;
    Field reaction = eval_f(mod, u);
    if (s2 != 0.0) reaction += s2 * eval_h(mod, u);
    Field transported = c * u;
    if (s2 != 0.0) transported += s2 * KC;
    const double t1 = pair_cyl(reaction, A.psi);
    const double t2 = pair_cyl(transported, A.dpsi);
    const double t3 = A.kappa * pair_cyl(u, A.ddpsi);
    return -A.cut.chi_l * (t1 - t2 + t3);
}

inline Field KC_from(const PhaseAssembly& A, const Field& u, const Model& mod) {
    Field Kt = (A.cut.chi_l * A.cut.chi_h) * A.Qw;
    return (-A.cut.chi_h) * apply_g(mod, u, Kt);
}

} // namespace detail

// all derivatives fall on the adjoint profile, so u only needs L2 regularity
inline double a_sigma(const Field& u, double gamma, double c, double sigma, const Model& mod,
                      const WaveProfile& wave, const NoiseKernel& kernel,
                      double ref_offset = 0.0) {
    detail::require_unit_diffusion(mod, "a_sigma");
    const Model m = stratonovich_correction(mod, kernel.q0);
    const auto A = detail::assemble(u, gamma, sigma, m, wave, kernel, ref_offset, "a_sigma");
    return detail::a_from_parts(A, u, c, sigma, m, detail::KC_from(A, u, m));
}

inline Field J_sigma(const Field& u, double gamma, double c, double sigma, const Model& mod,
                     const WaveProfile& wave, const NoiseKernel& kernel,
                     double ref_offset = 0.0) {
    detail::require_unit_diffusion(mod, "J_sigma");
    const Model m = stratonovich_correction(mod, kernel.q0);
    const auto A = detail::assemble(u, gamma, sigma, m, wave, kernel, ref_offset, "J_sigma");
    const double s2 = sigma * sigma;
    Field num = eval_f(m, u) + c * deriv_x(u, 1);
    if (s2 != 0.0) {
        num += s2 * eval_h(m, u);
        num += s2 * deriv_x(detail::KC_from(A, u, m), 1);
    }
    return (1.0 / A.kappa) * num;
}

// the full coefficient bundle at one frame state, sharing a single assembly
struct PhaseCoefficients {
    double chi_h = 1.0, chi_l = 1.0;
    double b_norm_sq = 0.0;
    double kappa = 1.0;
    double nu_p1 = 0.0, nu_m1 = 0.0, nu_mh = 0.0;
    Field Ktilde, KC;
    double a = 0.0;
};

inline PhaseCoefficients phase_coefficients(const Field& u, double gamma, double c, double sigma,
                                            const Model& mod, const WaveProfile& wave,
                                            const NoiseKernel& kernel, double ref_offset = 0.0) {
    detail::require_unit_diffusion(mod, "phase_coefficients");
    const Model m = stratonovich_correction(mod, kernel.q0);
    const auto A =
        detail::assemble(u, gamma, sigma, m, wave, kernel, ref_offset, "phase_coefficients");
    PhaseCoefficients out;
    out.chi_h = A.cut.chi_h;
    out.chi_l = A.cut.chi_l;
    out.b_norm_sq = A.b_norm_sq;
    out.kappa = A.kappa;
    out.nu_p1 = A.kappa - 1.0;
    out.nu_m1 = 1.0 / A.kappa - 1.0;
    out.nu_mh = 1.0 / std::sqrt(A.kappa) - 1.0;
    out.Ktilde = (A.cut.chi_l * A.cut.chi_h) * A.Qw;
    out.KC = (-A.cut.chi_h) * apply_g(m, u, out.Ktilde);
    out.a = detail::a_from_parts(A, u, c, sigma, m, out.KC);
    return out;
}

struct StochasticWave {
    Grid grid;          // 1D x-grid of the profile
    Profile phi_sigma;  // (nx, n)
    double c_sigma = 0.0;
    double sigma = 0.0;
};

// S[xi] = g(u) xi + d_x u * b[xi] with b[xi] = -chi_h^2 chi_l <g(u) xi, psi>;
// scale = kappa^{-1/2} turns this into the frozen-frame diffusion map
struct DiffusionOp {
    Model mod; // copy with the Ito shift installed, keeps the map self-contained
    Field u, du;
    Profile psi;
    double pref = 0.0;
    double scale = 1.0;

    Field operator()(const Field& xi) const {
        Field gxi = apply_g(mod, u, xi);
        const double b = -pref * pair_cyl(gxi, psi);
        gxi += b * du;
        if (scale != 1.0) gxi *= scale;
        return gxi;
    }
    double b_of(const Field& xi) const {
        return -pref * pair_cyl(apply_g(mod, u, xi), psi);
    }
};

struct FrameDrift {
    Field R;
    DiffusionOp S;
    PhaseCoefficients coeffs;
};

// drift of the perturbation in the co-moving frame (gamma = 0) and the
// matching noise map; u = Phi_sigma + v throughout
inline FrameDrift drift_and_diffusion(const Field& v, const StochasticWave& sw, double sigma,
                                      const Model& mod, const WaveProfile& wave0,
                                      const NoiseKernel& kernel) {
    detail::require_unit_diffusion(mod, "drift_and_diffusion");
    detail::require_x_match(v.grid, sw.grid, "drift_and_diffusion");
    if (!v.finite()) throw BlowupError("drift_and_diffusion: non-finite perturbation state");
    const Grid& g = v.grid;
    const Model m = stratonovich_correction(mod, kernel.q0);

    Field u = Field::extend(g, sw.phi_sigma);
    u += v;
    const auto A = detail::assemble(u, 0.0, sigma, m, wave0, kernel, 0.0, "drift_and_diffusion");
    PhaseCoefficients co;
    co.chi_h = A.cut.chi_h;
    co.chi_l = A.cut.chi_l;
    co.b_norm_sq = A.b_norm_sq;
    co.kappa = A.kappa;
    co.nu_p1 = A.kappa - 1.0;
    co.nu_m1 = 1.0 / A.kappa - 1.0;
    co.nu_mh = 1.0 / std::sqrt(A.kappa) - 1.0;
    co.Ktilde = (A.cut.chi_l * A.cut.chi_h) * A.Qw;
    co.KC = (-A.cut.chi_h) * apply_g(m, u, co.Ktilde);
    co.a = detail::a_from_parts(A, u, sw.c_sigma, sigma, m, co.KC);

    const double s2 = sigma * sigma;
    Field num = eval_f(m, u) + sw.c_sigma * deriv_x(u, 1);
    if (s2 != 0.0) {
        num += s2 * eval_h(m, u);
        num += s2 * deriv_x(co.KC, 1);
    }
    Field J = (1.0 / A.kappa) * num;

    Field du = Field::extend(g, deriv_x_profile(g, sw.phi_sigma, 1));
    du += deriv_x(v, 1);

    FrameDrift out;
    out.R = laplacian_y(v);
    Field bracket = deriv_x(v, 2);
    bracket += Field::extend(g, deriv_x_profile(g, sw.phi_sigma, 2));
    bracket += J;
    out.R += A.kappa * bracket;
    out.R += co.a * du;
    out.S = DiffusionOp{m, u, du, A.psi, A.cut.chi_h * A.cut.chi_h * A.cut.chi_l, 1.0};
    out.coeffs = std::move(co);
    return out;
}

struct FrozenParts {
    Field N;
    DiffusionOp M;
};

// second-derivative-free nonlinearity of the frozen frame, projected so the
// pairing with the adjoint profile cancels identically, and the kappa^{-1/2}
// scaled diffusion map
inline FrozenParts frozen_nonlinearities(const Field& v, const StochasticWave& sw, double sigma,
                                         const Model& mod, const WaveProfile& wave0,
                                         const NoiseKernel& kernel) {
    detail::require_unit_diffusion(mod, "frozen_nonlinearities");
    detail::require_x_match(v.grid, sw.grid, "frozen_nonlinearities");
    if (!v.finite()) throw BlowupError("frozen_nonlinearities: non-finite perturbation state");
    const Grid& g = v.grid;
    const Model m = stratonovich_correction(mod, kernel.q0);

    Field u = Field::extend(g, sw.phi_sigma);
    u += v;
    const auto A = detail::assemble(u, 0.0, sigma, m, wave0, kernel, 0.0, "frozen_nonlinearities");

    const double s2 = sigma * sigma;
    Field num = eval_f(m, u) + sw.c_sigma * deriv_x(u, 1);
    if (s2 != 0.0) {
        num += s2 * eval_h(m, u);
        num += s2 * deriv_x(detail::KC_from(A, u, m), 1);
    }
    Field NI = (1.0 / A.kappa) * num;
    NI += Field::extend(g, deriv_x_profile(g, sw.phi_sigma, 2));
    NI -= wave0.c * deriv_x(v, 1);
    NI -= detail::apply_df_profile(m, wave0.phi, v);

    Field du = Field::extend(g, deriv_x_profile(g, sw.phi_sigma, 1));
    du += deriv_x(v, 1);

    FrozenParts out;
    const double proj = A.cut.chi_l * pair_cyl(NI, A.psi);
    out.N = NI;
    out.N -= proj * du;
    out.M = DiffusionOp{m, u, du, A.psi, A.cut.chi_h * A.cut.chi_h * A.cut.chi_l,
                        1.0 / std::sqrt(A.kappa)};
    return out;
}

// Newton for the sigma-corrected profile and speed: f(Phi) + c Phi' enter the
// Jacobian, the order-sigma^2 nonlocal terms only enter the residual, so the
// iteration contracts at rate O(sigma^2) toward the full solution
inline StochasticWave solve_stochastic_wave(const Model& mod, const WaveProfile& wave0,
                                            double sigma, const NoiseKernel& kernel,
                                            double delta_sigma = 0.2, int max_iter = 60) {
    mod.validate();
    detail::require_unit_diffusion(mod, "solve_stochastic_wave");
    detail::require_x_match(wave0.grid, kernel.grid, "solve_stochastic_wave");
    if (!(sigma >= 0.0))
        throw ValidationError("solve_stochastic_wave: sigma must be non-negative");
    if (sigma > delta_sigma) {
        std::ostringstream os;
        os << "solve_stochastic_wave: sigma = " << sigma << " exceeds the trust bound "
           << delta_sigma;
        throw ValidationError(os.str());
    }
    const Model m = stratonovich_correction(mod, kernel.q0);
    const Grid& g = wave0.grid;
    const Grid& gc = kernel.grid; // cylinder geometry the pairings live on
    const int nx = g.nx(), n = m.n;
    const int N = nx * n;

    const Eigen::SparseMatrix<double> D1 = deriv_x_matrix(g, 1);
    const Eigen::SparseMatrix<double> D2 = deriv_x_matrix(g, 2);
    const Profile gp = wave0.phi_x(1);

    double kappa_now = 1.0;
    auto residual = [&](const Profile& U, double c) {
        Field u = Field::extend(gc, U);
        const auto A = detail::assemble(u, 0.0, sigma, m, wave0, kernel, 0.0,
                                        "solve_stochastic_wave");
        kappa_now = A.kappa;
        const double s2 = sigma * sigma;
        Field num = eval_f(m, u);
        if (s2 != 0.0) {
            num += s2 * eval_h(m, u);
            num += s2 * deriv_x(detail::KC_from(A, u, m), 1);
        }
        const Profile Jp = num.x_slice(0);
        const Profile d1 = deriv_x_profile(g, U, 1);
        const Profile d2 = deriv_x_profile(g, U, 2);
        Eigen::VectorXd r(N + 1);
        for (int i = 0; i < nx; ++i)
            for (int comp = 0; comp < n; ++comp) {
                double val;
                if (i == 0) val = U(i, comp) - m.u_minus[comp];
                else if (i == nx - 1) val = U(i, comp) - m.u_plus[comp];
                else val = d2(i, comp) + (Jp(i, comp) + c * d1(i, comp)) / A.kappa;
                r[i * n + comp] = val;
            }
        double ph = 0.0;
        for (int i = 0; i < nx; ++i)
            for (int comp = 0; comp < n; ++comp)
                ph += g.wx(i) * (U(i, comp) - wave0.phi(i, comp)) * gp(i, comp);
        r[N] = ph;
        return r;
    };

    Profile U = wave0.phi;
    double c = wave0.c;
    Eigen::VectorXd r = residual(U, c);
    double rnorm = r.cwiseAbs().maxCoeff();
    const double tol = 1e-10;

    Eigen::SparseMatrix<double> J(N + 1, N + 1);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    std::vector<Eigen::Triplet<double>> trip;
    bool analyzed = false;

    for (int iter = 0; iter < max_iter && rnorm > tol; ++iter) {
        trip.clear();
        const Profile d1 = deriv_x_profile(g, U, 1);
        const Eigen::ArrayXXd dfU = eval_df_profile(m, U);
        const double ik = 1.0 / kappa_now;
        for (int col = 0; col < nx; ++col) {
            for (Eigen::SparseMatrix<double>::InnerIterator it2(D2, col); it2; ++it2) {
                const int row = static_cast<int>(it2.row());
                if (row == 0 || row == nx - 1) continue;
                for (int comp = 0; comp < n; ++comp)
                    trip.emplace_back(row * n + comp, col * n + comp, it2.value());
            }
            for (Eigen::SparseMatrix<double>::InnerIterator it1(D1, col); it1; ++it1) {
                const int row = static_cast<int>(it1.row());
                if (row == 0 || row == nx - 1) continue;
                for (int comp = 0; comp < n; ++comp)
                    trip.emplace_back(row * n + comp, col * n + comp, ik * c * it1.value());
            }
        }
        for (int i = 1; i < nx - 1; ++i)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b)
                    trip.emplace_back(i * n + a, i * n + b, ik * dfU(i, a * n + b));
        for (int comp = 0; comp < n; ++comp) {
            trip.emplace_back(comp, comp, 1.0);
            trip.emplace_back((nx - 1) * n + comp, (nx - 1) * n + comp, 1.0);
        }
        for (int i = 1; i < nx - 1; ++i)
            for (int comp = 0; comp < n; ++comp)
                trip.emplace_back(i * n + comp, N, ik * d1(i, comp));
        for (int i = 0; i < nx; ++i)
            for (int comp = 0; comp < n; ++comp)
                trip.emplace_back(N, i * n + comp, g.wx(i) * gp(i, comp));

        J.setZero();
        J.setFromTriplets(trip.begin(), trip.end());
        J.makeCompressed();
        if (!analyzed) {
            lu.analyzePattern(J);
            analyzed = true;
        }
        lu.factorize(J);
        if (lu.info() != Eigen::Success)
            throw SolverError("solve_stochastic_wave: singular Newton system");
        const Eigen::VectorXd dz = lu.solve(-r);

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
        os << "solve_stochastic_wave: Newton stalled at sigma = " << sigma << ", residual "
           << rnorm;
        throw SolverError(os.str());
    }

    StochasticWave out;
    out.grid = g;
    out.phi_sigma = U;
    out.c_sigma = c;
    out.sigma = sigma;
    return out;
}

} // namespace stowave
