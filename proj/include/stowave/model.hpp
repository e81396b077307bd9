#pragma once

// Reaction nonlinearity f, noise amplitude g, interpretation correction h,
// their derivatives, and the preset catalogue.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "field.hpp"
#include "util.hpp"

namespace stowave {

// Pointwise callable on raw node values. Layouts:
//   f  : u[n]  -> out[n]
//   df : u[n]  -> out[n*n]   row-major, (i,j) = d f_i / d u_j
//   g  : u[n]  -> out[n*m]   row-major, (i,j)
//   dg : u[n]  -> out[n*m*n] index ((i*m + j)*n + k) = d g_ij / d u_k
//   h  : u[n]  -> out[n]
using PointFn = std::function<void(const double*, double*)>;

struct Model {
    std::string name;
    int n = 1;  // state components
    int m = 1;  // noise components
    int mu = 0; // 0 = Ito, 1 = Stratonovich

    Eigen::VectorXd u_minus;   // rest state at x -> -inf
    Eigen::VectorXd u_plus;    // rest state at x -> +inf
    Eigen::VectorXd diffusion; // diagonal of the diffusion matrix, size n

    // Advertised pointwise Lipschitz bound for f (inf when the raw
    // nonlinearity is used uncut, as for the Nagumo cubic).
    double lipschitz_f = std::numeric_limits<double>::infinity();
    bool gap_unverified = false; // spectral gap not confirmed at construction
    bool has_user_h = false;     // h supplied by the caller, not a preset/correction

    PointFn f, df, g, dg, h;

    static constexpr int kMaxComp = 8;

    void validate() const {
        if (n < 1 || n > kMaxComp || m < 1 || m > kMaxComp)
            throw ValidationError("model: component counts out of range");
        if (u_minus.size() != n || u_plus.size() != n)
            throw ValidationError("model: rest state dimension mismatch");
        if (diffusion.size() != n)
            throw ValidationError("model: diffusion diagonal dimension mismatch");
        if ((diffusion.array() <= 0.0).any())
            throw ValidationError("model: diffusion coefficients must be positive");
        if (!f || !df || !g || !dg || !h)
            throw ValidationError("model: missing callable");
    }
};

namespace detail {

inline void require_finite_input(const Field& u, const char* op) {
    if (!u.finite())
        throw ValidationError(std::string(op) + ": non-finite value in input field");
}

inline void require_components(const Field& u, int n, const char* op) {
    if (static_cast<int>(u.comp.size()) != n)
        throw ValidationError(std::string(op) + ": field has wrong component count");
}

} // namespace detail

// f applied node-by-node.
inline Field eval_f(const Model& mod, const Field& u) {
    detail::require_components(u, mod.n, "eval_f");
    detail::require_finite_input(u, "eval_f");
    Field out = Field::zero(u.grid, mod.n);
    const Eigen::Index nx = u.comp[0].rows(), ny = u.comp[0].cols();
    std::array<double, Model::kMaxComp> ub{}, fb{};
    for (Eigen::Index j = 0; j < ny; ++j)
        for (Eigen::Index i = 0; i < nx; ++i) {
            for (int c = 0; c < mod.n; ++c) ub[static_cast<size_t>(c)] = u.comp[static_cast<size_t>(c)](i, j);
            mod.f(ub.data(), fb.data());
            for (int c = 0; c < mod.n; ++c) out.comp[static_cast<size_t>(c)](i, j) = fb[static_cast<size_t>(c)];
        }
    return out;
}

inline Field eval_h(const Model& mod, const Field& u) {
    detail::require_components(u, mod.n, "eval_h");
    detail::require_finite_input(u, "eval_h");
    Field out = Field::zero(u.grid, mod.n);
    const Eigen::Index nx = u.comp[0].rows(), ny = u.comp[0].cols();
    std::array<double, Model::kMaxComp> ub{}, hb{};
    for (Eigen::Index j = 0; j < ny; ++j)
        for (Eigen::Index i = 0; i < nx; ++i) {
            for (int c = 0; c < mod.n; ++c) ub[static_cast<size_t>(c)] = u.comp[static_cast<size_t>(c)](i, j);
            mod.h(ub.data(), hb.data());
            for (int c = 0; c < mod.n; ++c) out.comp[static_cast<size_t>(c)](i, j) = hb[static_cast<size_t>(c)];
        }
    return out;
}

// g as a field of n x m matrices, flattened row-major into n*m components.
inline Field eval_g(const Model& mod, const Field& u) {
    detail::require_components(u, mod.n, "eval_g");
    detail::require_finite_input(u, "eval_g");
    Field out = Field::zero(u.grid, mod.n * mod.m);
    const Eigen::Index nx = u.comp[0].rows(), ny = u.comp[0].cols();
    std::array<double, Model::kMaxComp> ub{};
    std::array<double, Model::kMaxComp * Model::kMaxComp> gb{};
    for (Eigen::Index j = 0; j < ny; ++j)
        for (Eigen::Index i = 0; i < nx; ++i) {
            for (int c = 0; c < mod.n; ++c) ub[static_cast<size_t>(c)] = u.comp[static_cast<size_t>(c)](i, j);
            mod.g(ub.data(), gb.data());
            for (int c = 0; c < mod.n * mod.m; ++c) out.comp[static_cast<size_t>(c)](i, j) = gb[static_cast<size_t>(c)];
        }
    return out;
}

// g(u) xi with xi an m-component field; returns n components.
inline Field apply_g(const Model& mod, const Field& u, const Field& xi) {
    detail::require_components(u, mod.n, "apply_g");
    detail::require_components(xi, mod.m, "apply_g");
    if (!u.grid.same(xi.grid)) throw ValidationError("apply_g: grid mismatch");
    detail::require_finite_input(u, "apply_g");
    Field out = Field::zero(u.grid, mod.n);
    const Eigen::Index nx = u.comp[0].rows(), ny = u.comp[0].cols();
    std::array<double, Model::kMaxComp> ub{};
    std::array<double, Model::kMaxComp * Model::kMaxComp> gb{};
    for (Eigen::Index j = 0; j < ny; ++j)
        for (Eigen::Index i = 0; i < nx; ++i) {
            for (int c = 0; c < mod.n; ++c) ub[static_cast<size_t>(c)] = u.comp[static_cast<size_t>(c)](i, j);
            mod.g(ub.data(), gb.data());
            for (int c = 0; c < mod.n; ++c) {
                double acc = 0.0;
                for (int k = 0; k < mod.m; ++k)
                    acc += gb[static_cast<size_t>(c * mod.m + k)] * xi.comp[static_cast<size_t>(k)](i, j);
                out.comp[static_cast<size_t>(c)](i, j) = acc;
            }
        }
    return out;
}

// g(u)^T zeta with zeta an n-component field; returns m components.
inline Field apply_gT(const Model& mod, const Field& u, const Field& zeta) {
    detail::require_components(u, mod.n, "apply_gT");
    detail::require_components(zeta, mod.n, "apply_gT");
    if (!u.grid.same(zeta.grid)) throw ValidationError("apply_gT: grid mismatch");
    detail::require_finite_input(u, "apply_gT");
    Field out = Field::zero(u.grid, mod.m);
    const Eigen::Index nx = u.comp[0].rows(), ny = u.comp[0].cols();
    std::array<double, Model::kMaxComp> ub{};
    std::array<double, Model::kMaxComp * Model::kMaxComp> gb{};
    for (Eigen::Index j = 0; j < ny; ++j)
        for (Eigen::Index i = 0; i < nx; ++i) {
            for (int c = 0; c < mod.n; ++c) ub[static_cast<size_t>(c)] = u.comp[static_cast<size_t>(c)](i, j);
            mod.g(ub.data(), gb.data());
            for (int k = 0; k < mod.m; ++k) {
                double acc = 0.0;
                for (int c = 0; c < mod.n; ++c)
                    acc += gb[static_cast<size_t>(c * mod.m + k)] * zeta.comp[static_cast<size_t>(c)](i, j);
                out.comp[static_cast<size_t>(k)](i, j) = acc;
            }
        }
    return out;
}

// Profile variants (x-only data, columns are components).
inline Profile eval_f_profile(const Model& mod, const Profile& u) {
    if (u.cols() != mod.n) throw ValidationError("eval_f_profile: component mismatch");
    if (!u.isFinite().all()) throw ValidationError("eval_f_profile: non-finite input");
    Profile out(u.rows(), mod.n);
    std::array<double, Model::kMaxComp> ub{}, fb{};
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        for (int c = 0; c < mod.n; ++c) ub[static_cast<size_t>(c)] = u(i, c);
        mod.f(ub.data(), fb.data());
        for (int c = 0; c < mod.n; ++c) out(i, c) = fb[static_cast<size_t>(c)];
    }
    return out;
}

// g along a profile; row i holds the n*m noise matrix at node i, row-major.
inline Eigen::ArrayXXd eval_g_profile(const Model& mod, const Profile& u) {
    if (u.cols() != mod.n) throw ValidationError("eval_g_profile: component mismatch");
    if (!u.isFinite().all()) throw ValidationError("eval_g_profile: non-finite input");
    Eigen::ArrayXXd out(u.rows(), mod.n * mod.m);
    std::array<double, Model::kMaxComp> ub{};
    std::array<double, Model::kMaxComp * Model::kMaxComp> gb{};
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        for (int c = 0; c < mod.n; ++c) ub[static_cast<size_t>(c)] = u(i, c);
        mod.g(ub.data(), gb.data());
        for (int c = 0; c < mod.n * mod.m; ++c) out(i, c) = gb[static_cast<size_t>(c)];
    }
    return out;
}

// Df along a profile; row i holds the n*n Jacobian at node i, row-major.
inline Eigen::ArrayXXd eval_df_profile(const Model& mod, const Profile& u) {
    if (u.cols() != mod.n) throw ValidationError("eval_df_profile: component mismatch");
    Eigen::ArrayXXd out(u.rows(), mod.n * mod.n);
    std::array<double, Model::kMaxComp> ub{};
    std::array<double, Model::kMaxComp * Model::kMaxComp> jb{};
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        for (int c = 0; c < mod.n; ++c) ub[static_cast<size_t>(c)] = u(i, c);
        mod.df(ub.data(), jb.data());
        for (int c = 0; c < mod.n * mod.n; ++c) out(i, c) = jb[static_cast<size_t>(c)];
    }
    return out;
}

// h(u) = (mu/2) q(0) g'(u) g(u), scalar models only.
inline Model stratonovich_correction(Model mod, double q0) {
    if (mod.mu == 1 && (mod.n > 1 || mod.m > 1)) {
        if (!mod.has_user_h)
            throw ValidationError("stratonovich_correction: unsupported for n>1 or m>1 "
                                  "without a user-supplied h");
        return mod; // keep the caller's h
    }
    if (mod.mu == 0) {
        mod.h = [n = mod.n](const double*, double* out) {
            for (int c = 0; c < n; ++c) out[c] = 0.0;
        };
        return mod;
    }
    auto g = mod.g;
    auto dg = mod.dg;
    const double fac = 0.5 * mod.mu * q0;
    mod.h = [g, dg, fac](const double* u, double* out) {
        double gv = 0.0, dgv = 0.0;
        g(u, &gv);
        dg(u, &dgv);
        out[0] = fac * dgv * gv;
    };
    return mod;
}

// ---- preset catalogue ----

inline Model make_nagumo(double a = 0.25) {
    Model mod;
    {
        std::ostringstream os;
        os << "nagumo(" << a << ")";
        mod.name = os.str();
    }
    mod.n = mod.m = 1;
    mod.mu = 0;
    mod.u_minus = Eigen::VectorXd::Constant(1, 1.0);
    mod.u_plus = Eigen::VectorXd::Zero(1);
    mod.diffusion = Eigen::VectorXd::Ones(1);
    mod.f = [a](const double* u, double* o) {
        const double x = u[0];
        o[0] = x * (1.0 - x) * (x - a);
    };
    mod.df = [a](const double* u, double* o) {
        const double x = u[0];
        o[0] = -3.0 * x * x + 2.0 * (1.0 + a) * x - a;
    };
    mod.g = [](const double* u, double* o) { o[0] = u[0] * (1.0 - u[0]); };
    mod.dg = [](const double* u, double* o) { o[0] = 1.0 - 2.0 * u[0]; };
    mod.h = [](const double*, double* o) { o[0] = 0.0; };
    mod.validate();
    return mod;
}

namespace detail {

// Quintic blend of a scalar function toward its tangent line at y = hi,
// active on [lo, hi]; exact below lo, exactly linear above hi.
struct TangentCut {
    double lo, hi;        // blend window on |u|
    double val_hi, slope_hi;

    template <class F, class DF>
    double value(double y, F&& base, DF&& dbase) const {
        if (y <= lo) return base(y);
        const double lin = val_hi + slope_hi * (y - hi);
        if (y >= hi) return lin;
        const double t = (y - lo) / (hi - lo);
        const double s = smoothstep5(t);
        return (1.0 - s) * base(y) + s * lin;
    }
    template <class F, class DF>
    double deriv(double y, F&& base, DF&& dbase) const {
        if (y <= lo) return dbase(y);
        if (y >= hi) return slope_hi;
        const double t = (y - lo) / (hi - lo);
        const double s = smoothstep5(t);
        const double ds = smoothstep5_d(t) / (hi - lo);
        const double lin = val_hi + slope_hi * (y - hi);
        return (1.0 - s) * dbase(y) + s * slope_hi + ds * (lin - base(y));
    }
};

} // namespace detail

// f(u) = u - u^3 and g(u) = 1 - u^2, both blended to their tangent lines at
// |u| = 3 over |u| in [2, 3]; exactly linear growth beyond |u| = 3.
inline Model make_allen_cahn_cutoff() {
    Model mod;
    mod.name = "allen_cahn_cutoff";
    mod.n = mod.m = 1;
    mod.mu = 0;
    mod.u_minus = Eigen::VectorXd::Constant(1, 1.0);
    mod.u_plus = Eigen::VectorXd::Constant(1, -1.0);
    mod.diffusion = Eigen::VectorXd::Ones(1);
    mod.lipschitz_f = 30.0;

    const auto fb = [](double y) { return y - y * y * y; };
    const auto dfb = [](double y) { return 1.0 - 3.0 * y * y; };
    const auto gb = [](double y) { return 1.0 - y * y; };
    const auto dgb = [](double y) { return -2.0 * y; };
    const detail::TangentCut fcut{2.0, 3.0, fb(3.0), dfb(3.0)};
    const detail::TangentCut gcut{2.0, 3.0, gb(3.0), dgb(3.0)};

    // f odd, g even: evaluate on |u| and restore symmetry.
    mod.f = [fcut, fb, dfb](const double* u, double* o) {
        const double y = std::abs(u[0]);
        const double sgn = u[0] < 0.0 ? -1.0 : 1.0;
        o[0] = sgn * fcut.value(y, fb, dfb);
    };
    mod.df = [fcut, fb, dfb](const double* u, double* o) {
        o[0] = fcut.deriv(std::abs(u[0]), fb, dfb);
    };
    mod.g = [gcut, gb, dgb](const double* u, double* o) {
        o[0] = gcut.value(std::abs(u[0]), gb, dgb);
    };
    mod.dg = [gcut, gb, dgb](const double* u, double* o) {
        const double sgn = u[0] < 0.0 ? -1.0 : 1.0;
        o[0] = sgn * gcut.deriv(std::abs(u[0]), gb, dgb);
    };
    mod.h = [](const double*, double* o) { o[0] = 0.0; };
    mod.validate();
    return mod;
}

struct OregonatorParams {
    double alpha = 0.25;
    double beta = 0.1;
    double gamma = 0.02;
    double delta = 0.01;
    double eps = 0.1;
};

namespace detail {

// (u - gamma)/(u + gamma) with the pole branch removed: exact for
// u >= -gamma/2, blended to the constant value at u = -3 gamma/4 below.
struct RegularisedRatio {
    double gamma;
    double u0() const { return -0.75 * gamma; }
    double u1() const { return -0.5 * gamma; }
    double cap() const { return (u0() - gamma) / (u0() + gamma); } // = -7

    double value(double u) const {
        if (u >= u1()) return (u - gamma) / (u + gamma);
        if (u <= u0()) return cap();
        const double t = (u - u0()) / (u1() - u0());
        return cap() + smoothstep5(t) * ((u - gamma) / (u + gamma) - cap());
    }
    double deriv(double u) const {
        const double q = u + gamma;
        if (u >= u1()) return 2.0 * gamma / (q * q);
        if (u <= u0()) return 0.0;
        const double t = (u - u0()) / (u1() - u0());
        const double s = smoothstep5(t);
        const double ds = smoothstep5_d(t) / (u1() - u0());
        return ds * ((u - gamma) / q - cap()) + s * (2.0 * gamma / (q * q));
    }
};

// 1 on |y| <= 2, 0 beyond |y| >= 3, quintic in between.
inline double unit_window(double y) {
    const double a = std::abs(y);
    if (a <= 2.0) return 1.0;
    if (a >= 3.0) return 0.0;
    return 1.0 - smoothstep5(a - 2.0);
}
inline double unit_window_d(double y) {
    const double a = std::abs(y);
    if (a <= 2.0 || a >= 3.0) return 0.0;
    const double sgn = y < 0.0 ? -1.0 : 1.0;
    return -smoothstep5_d(a - 2.0) * sgn;
}

} // namespace detail

// Light-sensitive Oregonator under quasi-steady reduction. Kinetics carry a
// window in both variables for global Lipschitz bounds; the ratio pole at
// u = -gamma is blended away below the physical branch. Noise enters the u
// component only, gated by a bump that vanishes at the computed rest states.
inline Model make_oregonator(OregonatorParams p = {}) {
    if (!(p.alpha > 0 && p.beta > 0 && p.gamma > 0 && p.delta > 0 && p.eps > 0))
        throw ValidationError("oregonator: parameters must be positive");

    const detail::RegularisedRatio srat{p.gamma};

    // Homogeneous rest states solve u - u^2 - (alpha u + beta) s(u) = 0 on
    // the branch u > -gamma. Scan for sign changes, polish by Newton, and
    // keep the outermost pair (the stable ones when three roots exist).
    const auto R = [&](double u) {
        return u - u * u - (p.alpha * u + p.beta) * srat.value(u);
    };
    const auto dR = [&](double u) {
        return 1.0 - 2.0 * u - p.alpha * srat.value(u) -
               (p.alpha * u + p.beta) * srat.deriv(u);
    };
    std::vector<double> roots;
    {
        const double a0 = -0.4 * p.gamma, a1 = 1.5;
        const int nscan = 6000;
        double prev_u = a0, prev_r = R(a0);
        for (int i = 1; i <= nscan; ++i) {
            const double u = a0 + (a1 - a0) * i / nscan;
            const double r = R(u);
            if (prev_r == 0.0) roots.push_back(prev_u);
            else if (prev_r * r < 0.0) {
                double x = 0.5 * (prev_u + u);
                for (int it = 0; it < 60; ++it) {
                    const double step = R(x) / dR(x);
                    x -= step;
                    if (std::abs(step) < 1e-16) break;
                }
                roots.push_back(x);
            }
            prev_u = u;
            prev_r = r;
        }
    }
    if (roots.size() < 3)
        throw SolverError("oregonator: kinetics not bistable for these parameters");
    const double ulo = roots.front(), uhi = roots.back();
    if (!(dR(ulo) < 0.0 && dR(uhi) < 0.0))
        throw SolverError("oregonator: outer rest states not stable");

    Model mod;
    mod.name = "oregonator";
    mod.n = 2;
    mod.m = 1;
    mod.mu = 0;
    mod.u_minus = (Eigen::VectorXd(2) << uhi, uhi).finished();
    mod.u_plus = (Eigen::VectorXd(2) << ulo, ulo).finished();
    mod.diffusion = (Eigen::VectorXd(2) << 1.0, p.delta).finished();
    mod.gap_unverified = true;
    mod.lipschitz_f = 1e4; // window-bounded support; generous cap

    const double wb = 0.15 * (uhi - ulo); // bump shoulder width
    const auto bump = [ulo, uhi, wb](double u) {
        return smoothstep5((u - ulo) / wb) * smoothstep5((uhi - u) / wb);
    };
    const auto bump_d = [ulo, uhi, wb](double u) {
        const double ta = (u - ulo) / wb, tb = (uhi - u) / wb;
        return smoothstep5_d(ta) / wb * smoothstep5(tb) -
               smoothstep5(ta) * smoothstep5_d(tb) / wb;
    };

    const double ieps = 1.0 / p.eps;
    const double alpha = p.alpha, beta = p.beta;
    mod.f = [srat, ieps, alpha, beta](const double* uv, double* o) {
        const double u = uv[0], v = uv[1];
        const double core = u - u * u - (alpha * v + beta) * srat.value(u);
        o[0] = ieps * core * detail::unit_window(u) * detail::unit_window(v);
        o[1] = u - v;
    };
    mod.df = [srat, ieps, alpha, beta](const double* uv, double* o) {
        const double u = uv[0], v = uv[1];
        const double s = srat.value(u), ds = srat.deriv(u);
        const double core = u - u * u - (alpha * v + beta) * s;
        const double dcore_du = 1.0 - 2.0 * u - (alpha * v + beta) * ds;
        const double wu = detail::unit_window(u), wv = detail::unit_window(v);
        const double dwu = detail::unit_window_d(u), dwv = detail::unit_window_d(v);
        o[0] = ieps * (dcore_du * wu + core * dwu) * wv;     // d f1 / d u
        o[1] = ieps * (-alpha * s * wv + core * dwv) * wu;   // d f1 / d v
        o[2] = 1.0;                                          // d f2 / d u
        o[3] = -1.0;                                         // d f2 / d v
    };
    mod.g = [srat, bump](const double* uv, double* o) {
        o[0] = srat.value(uv[0]) * bump(uv[0]);
        o[1] = 0.0;
    };
    mod.dg = [srat, bump, bump_d](const double* uv, double* o) {
        const double u = uv[0];
        o[0] = srat.deriv(u) * bump(u) + srat.value(u) * bump_d(u); // d g00 / d u
        o[1] = 0.0;                                                 // d g00 / d v
        o[2] = 0.0;                                                 // d g10 / d u
        o[3] = 0.0;                                                 // d g10 / d v
    };
    mod.h = [](const double*, double* o) { o[0] = o[1] = 0.0; };
    mod.validate();
    return mod;
}

// Dispatch by catalogue name, e.g. "nagumo(0.25)", "allen_cahn_cutoff",
// "oregonator" or "oregonator(alpha,beta,gamma,delta,eps)".
inline Model preset(const std::string& name) {
    std::string head = name;
    std::vector<double> args;
    const auto lp = name.find('(');
    if (lp != std::string::npos) {
        if (name.back() != ')')
            throw ValidationError("model catalogue: malformed preset name '" + name + "'");
        head = name.substr(0, lp);
        std::string inner = name.substr(lp + 1, name.size() - lp - 2);
        std::stringstream ss(inner);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                size_t pos = 0;
                const double v = std::stod(tok, &pos);
                args.push_back(v);
            } catch (const std::exception&) {
                throw ValidationError("model catalogue: bad parameter '" + tok + "'");
            }
        }
    }
    if (head == "nagumo") {
        if (args.size() > 1) throw ValidationError("model catalogue: nagumo takes one parameter");
        return make_nagumo(args.empty() ? 0.25 : args[0]);
    }
    if (head == "allen_cahn_cutoff") {
        if (!args.empty()) throw ValidationError("model catalogue: allen_cahn_cutoff takes no parameters");
        return make_allen_cahn_cutoff();
    }
    if (head == "oregonator") {
        OregonatorParams p;
        if (!args.empty()) {
            if (args.size() != 5)
                throw ValidationError("model catalogue: oregonator takes 5 parameters (alpha,beta,gamma,delta,eps)");
            p.alpha = args[0];
            p.beta = args[1];
            p.gamma = args[2];
            p.delta = args[3];
            p.eps = args[4];
        }
        return make_oregonator(p);
    }
    throw ValidationError("model catalogue: unknown preset '" + name + "'");
}

} // namespace stowave
