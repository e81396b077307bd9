#pragma once
// Time integration of the coupled field/phase system: semi-implicit
// Euler-Maruyama for the field (x-diffusion and each transverse mode solved
// implicitly, reaction and noise explicit), the phase updated with the SAME
// increment, and the discounted Sobolev accumulator driving exit decisions.

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "field.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "phasefun.hpp"
#include "wave.hpp"

namespace stowave {

enum class Scheme { imex_em, explicit_em };

struct SimConfig {
    double sigma = 0.1;
    double dt = 1e-3;
    double t_end = 1.0;
    int k = 0;              // Sobolev index of the monitored norm
    double epsilon = 0.1;   // discount rate of the running integral
    double eta = 1.0;       // exit threshold on the accumulator
    std::uint64_t seed = 1;
    Scheme scheme = Scheme::imex_em;
    int record_stride = 1;
    bool snapshots = false;
    double blowup_guard = 1e3;

    void validate() const {
        if (!(dt > 0.0)) throw ValidationError("SimConfig: dt must be positive");
        if (!(t_end >= dt)) throw ValidationError("SimConfig: t_end shorter than one step");
        if (!(sigma >= 0.0)) throw ValidationError("SimConfig: sigma must be non-negative");
        if (k < 0 || k > 2) throw ValidationError("SimConfig: monitor index k must be 0, 1 or 2");
        if (!(epsilon > 0.0)) throw ValidationError("SimConfig: discount rate must be positive");
        if (!(eta > 0.0)) throw ValidationError("SimConfig: exit threshold must be positive");
        if (record_stride < 1) throw ValidationError("SimConfig: record stride must be >= 1");
        if (!(blowup_guard > 0.0)) throw ValidationError("SimConfig: blowup guard must be positive");
    }
};

struct SimState {
    Field u;
    double gamma = 0.0;        // frame shift relative to the current centering
    double gamma_offset = 0.0; // accumulated recenterings
    double I_accum = 0.0;      // discounted integral of ||v||_{H^{k+1}}^2
    double t = 0.0;

    double gamma_abs() const { return gamma + gamma_offset; }
};

struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<double> gamma_series;
    std::vector<double> N_series;
    double exit_time = std::numeric_limits<double>::infinity();
    std::vector<double> snapshot_times;
    std::vector<Field> v_snapshots;
    std::string terminal = "completed"; // completed | exited | blowup
    int recenter_count = 0;
    std::uint64_t trajectory_id = 0;
};

// v = T_{-gamma} u - Phi_sigma: the perturbation seen from the frame riding
// at the tracked phase
inline Field freeze(const Field& u, double gamma, const StochasticWave& sw) {
    if (u.grid.nx() != sw.grid.nx() || u.grid.L != sw.grid.L)
        throw ValidationError("freeze: x-grid does not match the wave");
    if (std::abs(gamma) >= 0.5 * u.grid.L)
        throw ValidationError("freeze: |gamma| >= L/2, recentering required");
    Field v = gamma == 0.0 ? u : shift(u, -gamma);
    v -= Field::extend(u.grid, sw.phi_sigma);
    return v;
}

namespace detail {

// H^{k} norm of the accumulator integrand; k = 3 composes the second- and
// first-derivative stencils, one term per multi-index as in sobolev_norm
inline double monitor_norm(const Field& v, int k) {
    if (k <= 2) return sobolev_norm(v, k);
    double s2;
    {
        const double h2 = sobolev_norm(v, 2);
        s2 = h2 * h2;
    }
    Field axx = deriv_x(v, 2);
    Field axxx = deriv_x(axx, 1);
    s2 += inner_product_L2(axxx, axxx);
    const int dy = v.grid.dims_y();
    for (int i = 0; i < dy; ++i) {
        Field ai = deriv_y(v, i);
        Field axxi = deriv_y(axx, i);
        s2 += inner_product_L2(axxi, axxi);
        for (int j = i; j < dy; ++j) {
            Field aij = deriv_y(ai, j);
            Field axij = deriv_x(aij, 1);
            s2 += inner_product_L2(axij, axij);
            for (int l = j; l < dy; ++l) {
                Field aijl = deriv_y(aij, l);
                s2 += inner_product_L2(aijl, aijl);
            }
        }
    }
    return std::sqrt(s2);
}

// cached factorizations of I - dt*D_c*(d_x^2 - lambda1 |xi|^2) with identity
// boundary rows; one LU per component and transverse mode
class ImexSolver {
public:
    ImexSolver(const Grid& g, double dt, const Eigen::VectorXd& diffusion) : grid_(g) {
        const int nx = g.nx(), ny = g.ny_total(), n = static_cast<int>(diffusion.size());
        const Eigen::SparseMatrix<double> D2 = deriv_x_matrix(g, 2);
        lu_.resize(static_cast<size_t>(n) * ny);
        std::vector<Eigen::Triplet<double>> trip;
        for (int c = 0; c < n; ++c)
            for (int j = 0; j < ny; ++j) {
                trip.clear();
                const double shift = g.d >= 2 ? g.lambda1() * g.freq_sq(j) : 0.0;
                for (int col = 0; col < nx; ++col)
                    for (Eigen::SparseMatrix<double>::InnerIterator it(D2, col); it; ++it) {
                        const int row = static_cast<int>(it.row());
                        if (row == 0 || row == nx - 1) continue;
                        trip.emplace_back(row, col, -dt * diffusion[c] * it.value());
                    }
                for (int i = 0; i < nx; ++i)
                    trip.emplace_back(i, i, (i == 0 || i == nx - 1)
                                                ? 1.0
                                                : 1.0 + dt * diffusion[c] * shift);
                Eigen::SparseMatrix<double> M(nx, nx);
                M.setFromTriplets(trip.begin(), trip.end());
                M.makeCompressed();
                auto f = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
                f->compute(M);
                if (f->info() != Eigen::Success)
                    throw SolverError("ImexSolver: implicit operator factorization failed");
                lu_[static_cast<size_t>(c) * ny + j] = std::move(f);
            }
    }

    // solve (I - dt D Delta) out = rhs; boundary rows pass rhs through, so the
    // caller encodes Dirichlet data in the rhs boundary entries
    Field solve(const Field& rhs) const {
        const Grid& g = rhs.grid;
        const int nx = g.nx(), ny = g.ny_total();
        Field out(g, rhs.n);
        if (g.d < 2) {
            for (int c = 0; c < rhs.n; ++c) {
                const Eigen::VectorXd b = rhs.comp[c].col(0).matrix();
                out.comp[c].col(0) = lu_[static_cast<size_t>(c)]->solve(b).array();
            }
            return out;
        }
        SpectralField s = transverse_fft(rhs);
        for (int c = 0; c < rhs.n; ++c)
            for (int j = 0; j < ny; ++j) {
                const auto& lu = *lu_[static_cast<size_t>(c) * ny + j];
                const Eigen::VectorXd br = s.comp[c].col(j).real().matrix();
                const Eigen::VectorXd bi = s.comp[c].col(j).imag().matrix();
                const Eigen::VectorXd xr = lu.solve(br);
                const Eigen::VectorXd xi = lu.solve(bi);
                for (int i = 0; i < nx; ++i) s.comp[c](i, j) = std::complex<double>(xr[i], xi[i]);
            }
        return transverse_ifft(s);
    }

private:
    Grid grid_;
    std::vector<std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>>> lu_;
};

} // namespace detail

// one-trajectory integrator; holds the implicit factorization and the
// Ito-shifted model so repeated steps stay cheap
class Stepper {
public:
    Stepper(const SimConfig& cfg, const Model& mod, const StochasticWave& sw,
            const WaveProfile& wave0, const NoiseKernel& kernel)
        : cfg_(cfg),
          mod_(stratonovich_correction(mod, kernel.q0)),
          sw_(sw),
          wave0_(wave0),
          kernel_(kernel) {
        cfg.validate();
        mod.validate();
        if (kernel.grid.nx() != sw.grid.nx() || kernel.grid.L != sw.grid.L)
            throw ValidationError("Stepper: kernel grid does not match the wave");
        if (cfg.scheme == Scheme::imex_em)
            imex_ = std::make_unique<detail::ImexSolver>(kernel.grid, cfg.dt, mod_.diffusion);
    }

    void step(SimState& st, CounterRng& rng) {
        step_with(st, sample_increment(kernel_, rng, cfg_.dt));
    }

    void step_with(SimState& st, const Field& dW) {
        advance(st, dW, freeze(st.u, st.gamma, sw_));
    }

    // v_pre must be freeze(st.u, st.gamma) of the incoming state
    void advance(SimState& st, const Field& dW, const Field& v_pre) {
        const double dt = cfg_.dt, sigma = cfg_.sigma, s2 = sigma * sigma;
        const Grid& g = st.u.grid;

        const double nv1 = detail::monitor_norm(v_pre, cfg_.k + 1);
        st.I_accum = std::exp(-cfg_.epsilon * dt) * st.I_accum + dt * nv1 * nv1;

        // phase pieces at the incoming state, one shared assembly
        const auto A = phase_detail_assemble(st.u, st.gamma);
        const double a =
            detail::a_from_parts(A, st.u, sw_.c_sigma, sigma, mod_, detail::KC_from(A, st.u, mod_));
        const double b =
            -(A.cut.chi_h * A.cut.chi_h * A.cut.chi_l) * pair_cyl(apply_g(mod_, st.u, dW), A.psi);

        Field expl = eval_f(mod_, st.u);
        if (s2 != 0.0) expl += s2 * eval_h(mod_, st.u);

        if (cfg_.scheme == Scheme::imex_em) {
            Field rhs = st.u;
            rhs += dt * expl;
            if (sigma != 0.0) rhs += sigma * apply_g(mod_, st.u, dW);
            pin_boundaries(rhs);
            st.u = imex_->solve(rhs);
        } else {
            Field lap = deriv_x(st.u, 2);
            if (g.d >= 2) lap += laplacian_y(st.u);
            for (int c = 0; c < st.u.n; ++c) lap.comp[c] *= mod_.diffusion[c];
            Field unew = st.u;
            unew += dt * lap;
            unew += dt * expl;
            if (sigma != 0.0) unew += sigma * apply_g(mod_, st.u, dW);
            pin_boundaries(unew);
            st.u = unew;
        }
        st.gamma += (sw_.c_sigma + a) * dt + sigma * b;
        st.t += dt;

        if (!st.u.finite() || st.u.sup() > cfg_.blowup_guard) {
            std::ostringstream os;
            os << "step: field exceeded the blow-up guard at t = " << st.t;
            throw BlowupError(os.str());
        }
        if (std::abs(st.gamma) > 0.25 * g.L) recenter(st);
    }

    // shift the frame so the tracked front returns to the origin
    void recenter(SimState& st) const {
        st.u = shift(st.u, -st.gamma);
        st.gamma_offset += st.gamma;
        st.gamma = 0.0;
    }

    const Model& corrected_model() const { return mod_; }
    const StochasticWave& wave() const { return sw_; }

private:
    detail::PhaseAssembly phase_detail_assemble(const Field& u, double gamma) const {
        return detail::assemble(u, gamma, cfg_.sigma, mod_, wave0_, kernel_, 0.0, "step");
    }

    void pin_boundaries(Field& f) const {
        const int nx = f.grid.nx();
        for (int c = 0; c < f.n; ++c) {
            f.comp[c].row(0) = mod_.u_minus[c];
            f.comp[c].row(nx - 1) = mod_.u_plus[c];
        }
    }

    SimConfig cfg_;
    Model mod_;
    StochasticWave sw_;
    WaveProfile wave0_;
    NoiseKernel kernel_;
    std::unique_ptr<detail::ImexSolver> imex_;
};

// integrate one trajectory from the corrected front (plus an optional initial
// perturbation), recording the phase and the discounted norm until the
// horizon, the first threshold crossing, or blow-up
inline TrajectoryRecord run_trajectory(const SimConfig& cfg, const Model& mod,
                                       const StochasticWave& sw, const WaveProfile& wave0,
                                       const NoiseKernel& kernel, std::uint64_t trajectory_id,
                                       const Field* v0 = nullptr) {
    cfg.validate();
    const Grid& g = kernel.grid;
    Stepper stepper(cfg, mod, sw, wave0, kernel);
    CounterRng rng(cfg.seed, trajectory_id);

    SimState st;
    st.u = Field::extend(g, sw.phi_sigma);
    if (v0) {
        if (!v0->grid.same(g)) throw ValidationError("run_trajectory: v0 grid mismatch");
        st.u += *v0;
    }
    // phase-match against the corrected profile so the initial perturbation
    // starts with a vanishing adjoint pairing; the coupled drift conserves it
    WaveProfile frame = wave0;
    frame.phi = sw.phi_sigma;
    st.gamma = init_phase(st.u, frame);

    TrajectoryRecord rec;
    rec.trajectory_id = trajectory_id;
    const long nsteps = std::lround(cfg.t_end / cfg.dt);

    for (long n = 0;; ++n) {
        Field v = freeze(st.u, st.gamma, sw);
        const double nk = sobolev_norm(v, cfg.k);
        const double N = nk * nk + st.I_accum;
        const bool exited = N > cfg.eta;
        if (n % cfg.record_stride == 0 || exited || n == nsteps) {
            rec.times.push_back(st.t);
            rec.gamma_series.push_back(st.gamma_abs());
            rec.N_series.push_back(N);
            if (cfg.snapshots) {
                rec.snapshot_times.push_back(st.t);
                rec.v_snapshots.push_back(v);
            }
        }
        if (exited) {
            rec.exit_time = st.t;
            rec.terminal = "exited";
            break;
        }
        if (n == nsteps) break;
        const double off = st.gamma_offset;
        try {
            stepper.advance(st, sample_increment(kernel, rng, cfg.dt), v);
        } catch (const BlowupError&) {
            rec.terminal = "blowup";
            rec.times.push_back(st.t);
            rec.gamma_series.push_back(st.gamma_abs());
            rec.N_series.push_back(N); // last finite value, diagnostic tail
            if (cfg.snapshots && st.u.finite() && std::abs(st.gamma) < 0.5 * g.L) {
                rec.snapshot_times.push_back(st.t);
                rec.v_snapshots.push_back(freeze(st.u, st.gamma, sw));
            }
            break;
        }
        if (st.gamma_offset != off) ++rec.recenter_count;
    }
    return rec;
}

struct CrossReport {
    double max_discrepancy = 0.0;
    long steps = 0;
};

// integrate the tracked formulation and the frame formulation against the
// same noise path (the frame sees the increments translated by the running
// phase) and report the largest L2 gap between the two perturbations over
// the first unit of time
inline CrossReport cross_validate(const SimConfig& cfg, const Model& mod,
                                  const StochasticWave& sw, const WaveProfile& wave0,
                                  const NoiseKernel& kernel, std::uint64_t trajectory_id,
                                  const Field* v0 = nullptr) {
    cfg.validate();
    const Grid& g = kernel.grid;
    Stepper stepper(cfg, mod, sw, wave0, kernel);
    CounterRng rng(cfg.seed, trajectory_id);
    const Model m = stratonovich_correction(mod, kernel.q0);
    // the frame splitting peels off a unit-coefficient Laplacian; kappa times
    // the remainder stays explicit
    detail::ImexSolver imex(g, cfg.dt, Eigen::VectorXd::Ones(m.n));

    SimState st;
    st.u = Field::extend(g, sw.phi_sigma);
    Field v = Field::zero(g, m.n);
    if (v0) {
        if (!v0->grid.same(g)) throw ValidationError("cross_validate: v0 grid mismatch");
        st.u += *v0;
        v = *v0;
    }

    CrossReport rep;
    const long nsteps = std::lround(cfg.t_end / cfg.dt);
    const double sigma = cfg.sigma, dt = cfg.dt;
    for (long n = 0; n < nsteps; ++n) {
        Field dW = sample_increment(kernel, rng, dt);
        const double gamma_n = st.gamma;

        // frame formulation: implicit x/transverse diffusion at unit
        // coefficient, everything else explicit
        FrameDrift fd = drift_and_diffusion(v, sw, sigma, mod, wave0, kernel);
        Field expl = fd.R - deriv_x(v, 2);
        if (g.d >= 2) expl -= laplacian_y(v);
        Field rhs = v;
        rhs += dt * expl;
        if (sigma != 0.0) {
            Field dWs = gamma_n == 0.0 ? dW : shift(dW, -gamma_n);
            rhs += sigma * fd.S(dWs);
        }
        for (int c = 0; c < rhs.n; ++c) { // perturbation vanishes at the x ends
            rhs.comp[c].row(0) = 0.0;
            rhs.comp[c].row(g.nx() - 1) = 0.0;
        }
        v = imex.solve(rhs);

        stepper.step_with(st, dW);

        if (st.t <= 1.0 + 1e-12) {
            const double gap = norm_L2(v - freeze(st.u, st.gamma, sw));
            if (gap > rep.max_discrepancy) rep.max_discrepancy = gap;
        }
        ++rep.steps;
    }
    return rep;
}

} // namespace stowave
