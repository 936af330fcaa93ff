// trajectories.hpp — Stochastic engines for the continuous measurement:
// the linear equation for the unnormalized state under the reference measure
// and the nonlinear equation for the posterior state under the physical
// measure, plus ensemble aggregation and instrument estimates.
//
// Linear engine. One step of the unnormalized state is
//     sigma' = M sigma M† + dt sum_h S_h sigma S_h†,
//     M = 1 + B dt + sum_j exp(i w_j t) L_j dW_j,
//     B = -iH - (1/2) sum_j L_j†L_j - (1/2) sum_h S_h†S_h
//         - (1/2) sum_k J_k*[1] + (1/2) (sum_k lambda_k) 1,
// with sigma <- J_k[sigma]/lambda_k at the pre-sampled Poisson jump times.
// Expanding in dt reproduces the linear Ito equation at Euler order while
// keeping sigma positive semidefinite exactly, so the stored weight
// Tr sigma coincides with the trace norm and stays an unbiased martingale
// estimate under the reference measure.
//
// Posterior engine. Euler-Maruyama on the nonlinear equation with the
// diffusion coefficients G_j = L~_j rho + rho L~_j† - m_j rho, plus the
// symmetric Milstein quadratic term; counting channels jump by per-step
// thinning at the stochastic intensity nu_k = Tr J_k[rho]. Each step the
// state is rehermitized, eigenvalue-clamped, and renormalized; a clamp
// beyond the repair tolerance aborts with advice to reduce dt.

#pragma once

#include "qcm/errors.hpp"
#include "qcm/grid.hpp"
#include "qcm/info.hpp"
#include "qcm/matrix.hpp"
#include "qcm/model.hpp"
#include "qcm/noise.hpp"
#include "qcm/parallel.hpp"
#include "qcm/state.hpp"

#include <Eigen/Eigenvalues>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace qcm {

enum class Engine { Linear, Posterior };

inline constexpr double kWeightUnderflow = 1e-300;
// Abort line for posterior cone excursions. Euler-order steps leave the cone
// by O(channel rate * dt); 1e-2 covers the reference suite at dt = 1e-3 with
// an order of magnitude to spare, and any negative eigenvalue below the line
// is still clamped and counted.
inline constexpr double kDefaultRepairTol = 1e-2;
inline constexpr double kMaxThinningProbability = 0.1;

struct TrajectoryRecord {
    Engine engine = Engine::Linear;
    std::vector<double> times;
    std::vector<Matrix> states;                    // sigma (linear) or rho (posterior)
    std::vector<double> weights;                   // Tr sigma, linear engine only
    std::vector<std::vector<double>> wiener;       // per diffusive channel: reference W~_j
    std::vector<std::vector<double>> shifted;      // per diffusive channel: W_j = W~_j - int m_j
    std::vector<std::vector<double>> signal_m;     // per diffusive channel: m_j at sample times
    std::vector<std::vector<long>> counts;         // per counting channel: N_k
    std::vector<std::vector<double>> signal_nu;    // per counting channel: nu_k at sample times
    std::vector<std::vector<double>> nu_integral;  // per counting channel: int_0^t nu_k ds

    bool terminated_zero = false;   // weight hit exactly zero (annihilating jump)
    bool weight_underflow = false;  // weight collapsed below kWeightUnderflow
    long repair_count = 0;
    double max_repair = 0.0;
    long skipped_jumps = 0;         // driven jumps arriving while nu ~ 0
};

namespace detail {

struct EngineContext {
    Index d = 0;
    double dt = 0.0;
    Matrix drift;  // B above
    std::vector<Matrix> diffusive_ops;
    std::vector<double> omegas;
    std::vector<Matrix> unobserved;
    std::vector<const JumpChannel*> jumps;
    std::vector<Matrix> effects;
    std::vector<double> rates;
    double rate_sum = 0.0;

    EngineContext(const MeasurementModel& model, const TimeGrid& grid) {
        model.validate();
        d = model.dim;
        dt = grid.dt;
        Matrix b = -kI * model.hamiltonian;
        for (const auto& ch : model.diffusive) {
            diffusive_ops.push_back(ch.op);
            omegas.push_back(ch.omega);
            b -= 0.5 * ch.op.adjoint() * ch.op;
        }
        for (const auto& s : model.unobserved) {
            unobserved.push_back(s);
            b -= 0.5 * s.adjoint() * s;
        }
        for (const auto& jc : model.jumps) {
            jumps.push_back(&jc);
            effects.push_back(jc.effect());
            rates.push_back(jc.rate);
            rate_sum += jc.rate;
            b -= 0.5 * effects.back();
        }
        b += 0.5 * rate_sum * identity(d);
        drift = std::move(b);
    }

    Complex phase(size_t j, double t) const { return std::polar(1.0, omegas[j] * t); }
};

// Full generator using the precomputed channel data (equals apply_generator).
inline Matrix apply_full_generator(const MeasurementModel& model, const EngineContext& ctx,
                                   const Matrix& x) {
    Matrix y = -kI * commutator(model.hamiltonian, x);
    for (const auto& l : ctx.diffusive_ops) {
        y += l * x * l.adjoint() - 0.5 * anticommutator(l.adjoint() * l, x);
    }
    for (const auto& s : ctx.unobserved) {
        y += s * x * s.adjoint() - 0.5 * anticommutator(s.adjoint() * s, x);
    }
    for (size_t k = 0; k < ctx.jumps.size(); ++k) {
        y += ctx.jumps[k]->apply(x) - 0.5 * anticommutator(ctx.effects[k], x);
    }
    return y;
}

struct SampleWriter {
    const TimeGrid& grid;
    std::vector<long> sample_steps;
    size_t cursor = 0;
    TrajectoryRecord* rec;

    SampleWriter(const TimeGrid& g, Engine engine, size_t n_diff, size_t n_jump,
                 TrajectoryRecord& out)
        : grid(g), sample_steps(g.sample_steps()), rec(&out) {
        rec->engine = engine;
        rec->wiener.assign(n_diff, {});
        rec->shifted.assign(n_diff, {});
        rec->signal_m.assign(n_diff, {});
        rec->counts.assign(n_jump, {});
        rec->signal_nu.assign(n_jump, {});
        rec->nu_integral.assign(n_jump, {});
    }

    bool due(long step) const {
        return cursor < sample_steps.size() && sample_steps[cursor] == step;
    }

    void write(long step, const Matrix& state, double weight,
               const std::vector<double>& wiener, const std::vector<double>& int_m,
               const std::vector<double>& m, const std::vector<long>& n_counts,
               const std::vector<double>& nu, const std::vector<double>& int_nu,
               bool linear) {
        rec->times.push_back(grid.time_of(step));
        rec->states.push_back(state);
        if (linear) rec->weights.push_back(weight);
        for (size_t j = 0; j < wiener.size(); ++j) {
            rec->wiener[j].push_back(wiener[j]);
            rec->shifted[j].push_back(wiener[j] - int_m[j]);
            rec->signal_m[j].push_back(m[j]);
        }
        for (size_t k = 0; k < nu.size(); ++k) {
            rec->counts[k].push_back(n_counts[k]);
            rec->signal_nu[k].push_back(nu[k]);
            rec->nu_integral[k].push_back(int_nu[k]);
        }
        ++cursor;
    }
};

} // namespace detail

// --------------------------- linear engine ----------------------------------

// Integrates the linear equation under the reference measure along the given
// noise path. When capture_shifted is non-null, the per-step Girsanov-shifted
// increments dW_j = dW~_j - m_j dt (with m_j read off the normalized state at
// the step start) and the jump times are exported for coupled runs.
inline TrajectoryRecord simulate_linear(const MeasurementModel& model, const Matrix& rho0,
                                        const TimeGrid& grid, const NoisePath& noise,
                                        DrivenNoise* capture_shifted = nullptr) {
    detail::EngineContext ctx(model, grid);
    const size_t n_diff = ctx.diffusive_ops.size();
    const size_t n_jump = ctx.jumps.size();
    if (noise.n_steps != grid.n_steps() || noise.n_diffusive != static_cast<int>(n_diff) ||
        noise.jump_times.size() != n_jump) {
        throw std::invalid_argument("simulate_linear: noise path does not match model/grid");
    }

    Matrix sigma = validate_state(rho0).matrix;
    const double dt = grid.dt;

    TrajectoryRecord rec;
    detail::SampleWriter writer(grid, Engine::Linear, n_diff, n_jump, rec);

    if (capture_shifted) {
        capture_shifted->n_steps = grid.n_steps();
        capture_shifted->n_diffusive = static_cast<int>(n_diff);
        capture_shifted->dw.assign(static_cast<size_t>(grid.n_steps()) * n_diff, 0.0);
        capture_shifted->jump_times = noise.jump_times;
    }

    std::vector<double> wiener(n_diff, 0.0), int_m(n_diff, 0.0), m(n_diff, 0.0);
    std::vector<long> n_counts(n_jump, 0);
    std::vector<size_t> next_jump(n_jump, 0);
    std::vector<double> nu(n_jump, 0.0), int_nu(n_jump, 0.0);

    bool dead = false;
    double weight = real_trace(sigma);

    for (long step = 0;; ++step) {
        // Posterior signals from the normalized state at the current time.
        const double t = grid.time_of(step);
        if (!dead && weight > 0.0) {
            for (size_t j = 0; j < n_diff; ++j) {
                m[j] = 2.0 * (ctx.phase(j, t) * (sigma * ctx.diffusive_ops[j]).trace()).real() / weight;
            }
            for (size_t k = 0; k < n_jump; ++k) {
                nu[k] = (sigma * ctx.effects[k]).trace().real() / weight;
            }
        } else {
            std::fill(m.begin(), m.end(), 0.0);
            std::fill(nu.begin(), nu.end(), 0.0);
        }

        if (writer.due(step)) {
            writer.write(step, sigma, weight, wiener, int_m, m, n_counts, nu, int_nu, true);
        }
        if (step == grid.n_steps()) break;

        if (!dead) {
            Matrix prop = identity(ctx.d) + dt * ctx.drift;
            for (size_t j = 0; j < n_diff; ++j) {
                prop += (ctx.phase(j, t) * noise.increment(step, j)) * ctx.diffusive_ops[j];
            }
            Matrix next = prop * sigma * prop.adjoint();
            for (const auto& s : ctx.unobserved) next += dt * (s * sigma * s.adjoint());
            sigma = hermitize(next);

            // Jumps that landed inside this step, in time order.
            const double t_end = t + dt;
            for (size_t k = 0; k < n_jump; ++k) {
                auto& pos = next_jump[k];
                const auto& times = noise.jump_times[k];
                while (pos < times.size() && times[pos] < t_end) {
                    sigma = ctx.jumps[k]->apply(sigma) / ctx.rates[k];
                    ++n_counts[k];
                    ++pos;
                }
            }

            weight = real_trace(sigma);
            if (weight <= 0.0) {
                rec.terminated_zero = true;
                dead = true;
                sigma.setZero();
                weight = 0.0;
            } else if (weight < kWeightUnderflow) {
                rec.weight_underflow = true;
                dead = true;
                sigma.setZero();
                weight = 0.0;
            }
        }

        for (size_t j = 0; j < n_diff; ++j) {
            wiener[j] += noise.increment(step, j);
            int_m[j] += m[j] * dt;
            if (capture_shifted) {
                capture_shifted->dw[step * n_diff + j] = noise.increment(step, j) - m[j] * dt;
            }
        }
        for (size_t k = 0; k < n_jump; ++k) int_nu[k] += nu[k] * dt;
    }
    return rec;
}

// rho_t = sigma_t / ||sigma_t|| per sample; the weight history is retained.
inline TrajectoryRecord normalize_path(const TrajectoryRecord& linear) {
    if (linear.engine != Engine::Linear || linear.weights.size() != linear.states.size()) {
        throw std::invalid_argument("normalize_path: expected a linear-engine record");
    }
    TrajectoryRecord out = linear;
    for (size_t s = 0; s < out.states.size(); ++s) {
        const double w = linear.weights[s];
        if (w <= 0.0) {
            if (!linear.terminated_zero && !linear.weight_underflow) {
                throw NumericError("normalize_path: zero weight at t=" + std::to_string(out.times[s]));
            }
            continue;  // annihilated path: state left as zero
        }
        out.states[s] /= w;
    }
    return out;
}

// --------------------------- posterior engine -------------------------------

struct PosteriorOptions {
    double repair_tol = kDefaultRepairTol;
    bool milstein = true;
};

namespace detail {

// One nonlinear step shared by the self-driven and externally-driven modes.
inline void posterior_step(const MeasurementModel& model, const EngineContext& ctx, Matrix& rho,
                           double t, const std::vector<double>& dw,
                           const std::vector<int>& jumps_now, const std::vector<double>& m,
                           const std::vector<double>& nu, const PosteriorOptions& opt,
                           TrajectoryRecord& rec) {
    const size_t n_diff = ctx.diffusive_ops.size();
    const double dt = ctx.dt;

    Matrix delta = dt * apply_full_generator(model, ctx, rho);

    std::vector<Matrix> g(n_diff);
    std::vector<Matrix> mod(n_diff);
    for (size_t j = 0; j < n_diff; ++j) {
        mod[j] = ctx.phase(j, t) * ctx.diffusive_ops[j];
        g[j] = mod[j] * rho + rho * mod[j].adjoint() - m[j] * rho;
        delta += dw[j] * g[j];
    }

    if (opt.milstein) {
        auto derivative = [&](size_t jc, size_t jd) {
            // Directional derivative of G_jc along G_jd.
            const double inner = 2.0 * (g[jd] * mod[jc]).trace().real();
            return Matrix(mod[jc] * g[jd] + g[jd] * mod[jc].adjoint() - inner * rho - m[jc] * g[jd]);
        };
        for (size_t j = 0; j < n_diff; ++j) {
            delta += 0.5 * (dw[j] * dw[j] - dt) * derivative(j, j);
            for (size_t j2 = j + 1; j2 < n_diff; ++j2) {
                delta += 0.5 * dw[j] * dw[j2] * (derivative(j, j2) + derivative(j2, j));
            }
        }
    }

    for (size_t k = 0; k < ctx.jumps.size(); ++k) {
        delta -= dt * (ctx.jumps[k]->apply(rho) - nu[k] * rho);
    }

    rho = hermitize(rho + delta);

    // Jump-adapted splitting: the jump map acts on the continuously updated
    // state, mirroring the within-step ordering of the linear engine.
    for (size_t k = 0; k < ctx.jumps.size(); ++k) {
        for (int r = 0; r < jumps_now[k]; ++r) {
            const Matrix jk = ctx.jumps[k]->apply(rho);
            const double tr = jk.trace().real();
            if (tr > 1e-14) {
                rho = jk / tr;
            } else {
                ++rec.skipped_jumps;
            }
        }
    }

    // Repair: clamp small negative eigenvalues, renormalize the trace.
    Eigen::SelfAdjointEigenSolver<Matrix> es;
    if (ctx.d <= 3) es.computeDirect(rho);
    else es.compute(rho);
    RealVector ev = es.eigenvalues();
    const double min_ev = ev.minCoeff();
    if (min_ev < -opt.repair_tol) {
        throw NumericError("simulate_posterior: state left the positive cone by " +
                           std::to_string(-min_ev) + " at t=" + std::to_string(t) +
                           "; reduce dt or raise repair_tol");
    }
    double repair = 0.0;
    if (min_ev < 0.0) {
        for (Index i = 0; i < ev.size(); ++i) {
            if (ev(i) < 0.0) {
                repair = std::max(repair, -ev(i));
                ev(i) = 0.0;
            }
        }
        rho = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
        ++rec.repair_count;
    }
    const double tr = real_trace(rho);
    if (!(tr > 0.0)) throw NumericError("simulate_posterior: state trace collapsed");
    rho /= tr;
    rec.max_repair = std::max(rec.max_repair, std::max(repair, std::abs(tr - 1.0)));
}

inline TrajectoryRecord run_posterior(const MeasurementModel& model, const Matrix& rho0,
                                      const TimeGrid& grid, Rng* rng, const DrivenNoise* driven,
                                      const PosteriorOptions& opt) {
    EngineContext ctx(model, grid);
    const size_t n_diff = ctx.diffusive_ops.size();
    const size_t n_jump = ctx.jumps.size();
    if (driven && (driven->n_steps != grid.n_steps() ||
                   driven->n_diffusive != static_cast<int>(n_diff) ||
                   driven->jump_times.size() != n_jump)) {
        throw std::invalid_argument("simulate_posterior: driven noise does not match model/grid");
    }

    Matrix rho = validate_state(rho0).matrix;
    const double dt = grid.dt;
    const double root_dt = std::sqrt(dt);

    TrajectoryRecord rec;
    detail::SampleWriter writer(grid, Engine::Posterior, n_diff, n_jump, rec);

    std::vector<double> wiener(n_diff, 0.0), int_m(n_diff, 0.0), m(n_diff, 0.0), dw(n_diff, 0.0);
    std::vector<long> n_counts(n_jump, 0);
    std::vector<double> nu(n_jump, 0.0), int_nu(n_jump, 0.0);
    std::vector<int> jumps_now(n_jump, 0);
    std::vector<size_t> next_jump(n_jump, 0);

    for (long step = 0;; ++step) {
        const double t = grid.time_of(step);
        for (size_t j = 0; j < n_diff; ++j) {
            m[j] = 2.0 * (ctx.phase(j, t) * (rho * ctx.diffusive_ops[j]).trace()).real();
        }
        for (size_t k = 0; k < n_jump; ++k) {
            nu[k] = (rho * ctx.effects[k]).trace().real();
            if (nu[k] < 0.0) nu[k] = 0.0;
        }

        if (writer.due(step)) {
            // For the posterior engine the reference output is reconstructed
            // from the physical noise: W~ = W + int m ds.
            std::vector<double> wtilde(n_diff);
            for (size_t j = 0; j < n_diff; ++j) wtilde[j] = wiener[j] + int_m[j];
            writer.write(step, rho, 1.0, wtilde, int_m, m, n_counts, nu, int_nu, false);
        }
        if (step == grid.n_steps()) break;

        for (size_t k = 0; k < n_jump; ++k) {
            jumps_now[k] = 0;
            if (driven) {
                auto& pos = next_jump[k];
                const auto& times = driven->jump_times[k];
                while (pos < times.size() && times[pos] < t + dt) {
                    ++jumps_now[k];
                    ++pos;
                }
            } else {
                const double p = nu[k] * dt;
                if (p > kMaxThinningProbability) {
                    throw NumericError("simulate_posterior: thinning probability nu*dt = " +
                                       std::to_string(p) + " exceeds 0.1; reduce dt");
                }
            }
        }
        if (!driven) {
            for (size_t j = 0; j < n_diff; ++j) dw[j] = root_dt * rng->normal();
            for (size_t k = 0; k < n_jump; ++k) {
                jumps_now[k] = (nu[k] > 0.0 && rng->uniform() < nu[k] * dt) ? 1 : 0;
            }
        } else {
            for (size_t j = 0; j < n_diff; ++j) dw[j] = driven->increment(step, j);
        }

        posterior_step(model, ctx, rho, t, dw, jumps_now, m, nu, opt, rec);

        for (size_t j = 0; j < n_diff; ++j) {
            wiener[j] += dw[j];
            int_m[j] += m[j] * dt;
        }
        for (size_t k = 0; k < n_jump; ++k) {
            int_nu[k] += nu[k] * dt;
            n_counts[k] += jumps_now[k];
        }
    }
    return rec;
}

} // namespace detail

// Self-driven posterior run: generates physical-measure noise internally.
inline TrajectoryRecord simulate_posterior(const MeasurementModel& model, const Matrix& rho0,
                                           const TimeGrid& grid, std::uint64_t seed,
                                           const PosteriorOptions& opt = {}) {
    Rng rng(seed);
    return detail::run_posterior(model, rho0, grid, &rng, nullptr, opt);
}

// Coupled run: consumes externally supplied Wiener increments and jump times
// (typically the Girsanov-shifted output of a linear run).
inline TrajectoryRecord simulate_posterior(const MeasurementModel& model, const Matrix& rho0,
                                           const TimeGrid& grid, const DrivenNoise& noise,
                                           const PosteriorOptions& opt = {}) {
    return detail::run_posterior(model, rho0, grid, nullptr, &noise, opt);
}

// --------------------------- ensembles --------------------------------------

inline constexpr std::uint64_t kLinearSalt = 0;
inline constexpr std::uint64_t kPosteriorSalt = 1;

struct EnsembleSummary {
    Engine engine = Engine::Linear;
    char measure = 'Q';  // 'Q' for the linear engine, 'P' for the posterior one
    long n = 0;
    std::uint64_t master_seed = 0;
    std::vector<double> times;

    std::vector<Matrix> mean_state;     // E_Q[sigma] or E_P[rho]
    std::vector<double> se_state;       // Frobenius-aggregated standard error
    std::vector<double> mean_weight;    // linear: E_Q[Tr sigma]; posterior: 1
    std::vector<double> se_weight;
    // Physical-measure functionals: the linear engine estimates them as
    // E_Q[w f(sigma/w)], the posterior engine as plain averages of f(rho).
    std::vector<double> mean_purity_deficit;
    std::vector<double> se_purity_deficit;
    std::vector<double> mean_entropy;
    std::vector<double> se_entropy;

    long n_zero_weight = 0;
    long n_underflow = 0;
    long repair_count = 0;
    double max_repair = 0.0;
    bool unreliable = false;
    bool se_defined = true;  // false when n == 1
};

struct EnsembleOptions {
    int threads = 1;
    PosteriorOptions posterior;
};

namespace detail {

struct ChunkAccumulator {
    std::vector<Matrix> state_sum;
    std::vector<double> state_sq;  // sum of squared Frobenius norms
    std::vector<double> w_sum, w_sq, pur_sum, pur_sq, ent_sum, ent_sq;
    long zero_weight = 0, underflow = 0, repairs = 0;
    double max_repair = 0.0;

    void init(size_t samples, Index d) {
        state_sum.assign(samples, Matrix::Zero(d, d));
        state_sq.assign(samples, 0.0);
        w_sum.assign(samples, 0.0);
        w_sq.assign(samples, 0.0);
        pur_sum.assign(samples, 0.0);
        pur_sq.assign(samples, 0.0);
        ent_sum.assign(samples, 0.0);
        ent_sq.assign(samples, 0.0);
    }

    void add(const TrajectoryRecord& rec, Engine engine) {
        const bool linear = engine == Engine::Linear;
        for (size_t s = 0; s < rec.states.size(); ++s) {
            const Matrix& x = rec.states[s];
            state_sum[s] += x;
            state_sq[s] += x.squaredNorm();
            const double w = linear ? rec.weights[s] : 1.0;
            w_sum[s] += w;
            w_sq[s] += w * w;
            double pur = 0.0, ent = 0.0;
            if (w > 0.0) {
                const Matrix rho = linear ? Matrix(x / w) : x;
                pur = w * purity_deficit_unchecked(rho);
                ent = w * von_neumann_entropy_unchecked(rho);
            }
            pur_sum[s] += pur;
            pur_sq[s] += pur * pur;
            ent_sum[s] += ent;
            ent_sq[s] += ent * ent;
        }
        if (rec.terminated_zero) ++zero_weight;
        if (rec.weight_underflow) ++underflow;
        repairs += rec.repair_count;
        max_repair = std::max(max_repair, rec.max_repair);
    }
};

} // namespace detail

// Runs n independent trajectories; trajectory i derives its stream from
// (master_seed, i), and the reduction is over fixed 64-trajectory chunks in
// index order, so the result is bit-identical for any thread count.
inline EnsembleSummary run_ensemble(const MeasurementModel& model, const Matrix& rho0,
                                    const TimeGrid& grid, long n, Engine engine,
                                    std::uint64_t master_seed, const EnsembleOptions& opt = {}) {
    if (n < 1) throw ConfigError("run_ensemble: n must be >= 1");
    detail::EngineContext ctx(model, grid);
    const auto samples = grid.sample_steps();
    const long chunk_size = 64;
    const long n_chunks = (n + chunk_size - 1) / chunk_size;

    std::vector<detail::ChunkAccumulator> chunks(n_chunks);
    std::vector<double> rates = ctx.rates;
    const int n_diff = static_cast<int>(ctx.diffusive_ops.size());

    auto run_chunk = [&](long c) {
        auto& acc = chunks[c];
        acc.init(samples.size(), model.dim);
        const long lo = c * chunk_size;
        const long hi = std::min(n, lo + chunk_size);
        for (long i = lo; i < hi; ++i) {
            TrajectoryRecord rec;
            if (engine == Engine::Linear) {
                NoisePath noise = sample_noise_path(n_diff, rates, grid, master_seed,
                                                    static_cast<std::uint64_t>(i), kLinearSalt);
                rec = simulate_linear(model, rho0, grid, noise);
            } else {
                rec = simulate_posterior(model, rho0, grid,
                                         derive_seed(master_seed, static_cast<std::uint64_t>(i),
                                                     kPosteriorSalt),
                                         opt.posterior);
            }
            acc.add(rec, engine);
        }
    };

    detail::indexed_parallel(n_chunks, opt.threads, run_chunk);

    EnsembleSummary out;
    out.engine = engine;
    out.measure = engine == Engine::Linear ? 'Q' : 'P';
    out.n = n;
    out.master_seed = master_seed;
    out.se_defined = n > 1;

    const double dn = static_cast<double>(n);
    auto se_of = [&](double sum, double sq) {
        if (n <= 1) return 0.0;
        const double mean = sum / dn;
        const double var = std::max(0.0, sq / dn - mean * mean);
        return std::sqrt(var / (dn - 1.0));
    };

    for (size_t s = 0; s < samples.size(); ++s) {
        out.times.push_back(grid.time_of(samples[s]));
        Matrix sum = Matrix::Zero(model.dim, model.dim);
        double sq = 0, w = 0, w2 = 0, p = 0, p2 = 0, e = 0, e2 = 0;
        for (const auto& acc : chunks) {
            sum += acc.state_sum[s];
            sq += acc.state_sq[s];
            w += acc.w_sum[s];
            w2 += acc.w_sq[s];
            p += acc.pur_sum[s];
            p2 += acc.pur_sq[s];
            e += acc.ent_sum[s];
            e2 += acc.ent_sq[s];
        }
        out.mean_state.push_back(sum / dn);
        const double var_state = std::max(0.0, sq / dn - (sum / dn).squaredNorm());
        out.se_state.push_back(n > 1 ? std::sqrt(var_state / (dn - 1.0)) : 0.0);
        out.mean_weight.push_back(w / dn);
        out.se_weight.push_back(se_of(w, w2));
        out.mean_purity_deficit.push_back(p / dn);
        out.se_purity_deficit.push_back(se_of(p, p2));
        out.mean_entropy.push_back(e / dn);
        out.se_entropy.push_back(se_of(e, e2));
    }
    for (const auto& acc : chunks) {
        out.n_zero_weight += acc.zero_weight;
        out.n_underflow += acc.underflow;
        out.repair_count += acc.repairs;
        out.max_repair = std::max(out.max_repair, acc.max_repair);
    }
    out.unreliable = out.n_underflow > 0 && out.n_underflow * 1000 > n;
    return out;
}

// --------------------------- instrument estimates ---------------------------

struct InstrumentEstimate {
    Matrix operator_part;   // E_Q[1_F sigma_t]
    double probability = 0; // E_Q[1_F Tr sigma_t]
    double probability_se = 0;
    long n_selected = 0;
};

// The predicate must depend only on the record up to time t; the record it
// receives is truncated to the samples with time <= t.
inline InstrumentEstimate instrument_estimate(
    const MeasurementModel& model, const Matrix& rho0, const TimeGrid& grid,
    const std::function<bool(const TrajectoryRecord&)>& predicate, double t, long n,
    std::uint64_t master_seed) {
    if (n < 1) throw ConfigError("instrument_estimate: n must be >= 1");
    detail::EngineContext ctx(model, grid);
    const auto samples = grid.sample_steps();
    size_t t_idx = 0;
    while (t_idx + 1 < samples.size() && grid.time_of(samples[t_idx + 1]) <= t + 1e-12) ++t_idx;

    InstrumentEstimate out;
    out.operator_part = Matrix::Zero(model.dim, model.dim);
    double p_sum = 0.0, p_sq = 0.0;
    for (long i = 0; i < n; ++i) {
        NoisePath noise = sample_noise_path(static_cast<int>(ctx.diffusive_ops.size()), ctx.rates,
                                            grid, master_seed, static_cast<std::uint64_t>(i),
                                            kLinearSalt);
        TrajectoryRecord rec = simulate_linear(model, rho0, grid, noise);

        TrajectoryRecord upto = rec;  // truncate to F_t-measurable data
        const size_t keep = t_idx + 1;
        upto.times.resize(keep);
        upto.states.resize(keep);
        upto.weights.resize(keep);
        for (auto& v : upto.wiener) v.resize(keep);
        for (auto& v : upto.shifted) v.resize(keep);
        for (auto& v : upto.signal_m) v.resize(keep);
        for (auto& v : upto.counts) v.resize(keep);
        for (auto& v : upto.signal_nu) v.resize(keep);
        for (auto& v : upto.nu_integral) v.resize(keep);

        if (predicate(upto)) {
            out.operator_part += rec.states[t_idx];
            const double w = rec.weights[t_idx];
            p_sum += w;
            p_sq += w * w;
            ++out.n_selected;
        }
    }
    const double dn = static_cast<double>(n);
    out.operator_part /= dn;
    out.probability = p_sum / dn;
    out.probability_se =
        n > 1 ? std::sqrt(std::max(0.0, p_sq / dn - out.probability * out.probability) / (dn - 1.0))
              : 0.0;
    return out;
}

} // namespace qcm
