// moments.hpp — Deterministic output statistics: the characteristic operator
// of the measurement record and the closed first/second moment formulas, with
// Monte Carlo estimators for cross-validation.

#pragma once

#include "qcm/grid.hpp"
#include "qcm/lindblad.hpp"
#include "qcm/matrix.hpp"
#include "qcm/model.hpp"
#include "qcm/trajectories.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace qcm {

// Real test functions per output channel, sampled on a time grid and read as
// piecewise constant on each step.
struct TestFunction {
    TimeGrid grid;
    std::vector<std::vector<double>> diffusive;  // per diffusive channel, per step
    std::vector<std::vector<double>> jump;       // per counting channel, per step

    static TestFunction zero(const MeasurementModel& model, const TimeGrid& grid) {
        TestFunction h;
        h.grid = grid;
        h.diffusive.assign(model.diffusive.size(), std::vector<double>(grid.n_steps(), 0.0));
        h.jump.assign(model.jumps.size(), std::vector<double>(grid.n_steps(), 0.0));
        return h;
    }

    static TestFunction sampled(const MeasurementModel& model, const TimeGrid& grid,
                                const std::function<double(int, double)>& diffusive_fn,
                                const std::function<double(int, double)>& jump_fn) {
        TestFunction h = zero(model, grid);
        for (long s = 0; s < grid.n_steps(); ++s) {
            const double t = grid.time_of(s);
            for (size_t j = 0; j < h.diffusive.size(); ++j) {
                h.diffusive[j][s] = diffusive_fn(static_cast<int>(j), t);
            }
            for (size_t k = 0; k < h.jump.size(); ++k) {
                h.jump[k][s] = jump_fn(static_cast<int>(k), t);
            }
        }
        return h;
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& v : diffusive)
            for (double x : v) m = std::max(m, std::abs(x));
        for (const auto& v : jump)
            for (double x : v) m = std::max(m, std::abs(x));
        return m;
    }
};

// Fourier-domain generator at fixed h: complex and non-trace-preserving.
//   K_t(h)[x] = L[x] + i sum_j h_j1 (L~_j x + x L~_j†)
//               - (1/2) sum_j h_j1^2 x + sum_k (exp(i h_k2) - 1) J_k[x]
inline Matrix evolve_characteristic(const MeasurementModel& model, const TestFunction& h,
                                    const Matrix& rho0, double t) {
    model.validate();
    if (t < 0.0 || t > h.grid.t_max + 1e-12) {
        throw std::invalid_argument("evolve_characteristic: t outside the test-function grid");
    }
    Matrix x = validate_state(rho0).matrix;
    const double dt = h.grid.dt;
    const long n = std::lround(t / dt);
    if (std::abs(n * dt - t) > 1e-9 * std::max(1.0, t)) {
        throw std::invalid_argument("evolve_characteristic: t must sit on the grid");
    }

    // Norm-growth guard from model and test-function scales.
    double bound_rate = generator_matrix(model).mat.norm();
    const double hmax = h.max_abs();
    for (const auto& ch : model.diffusive) bound_rate += 2.0 * hmax * ch.op.norm() + 0.5 * hmax * hmax;
    for (const auto& jc : model.jumps) bound_rate += 2.0 * jc.effect().norm();
    const double norm0 = std::max(x.norm(), 1e-30);

    auto k_apply = [&](const Matrix& y, long step, double tau) {
        Matrix out = apply_generator(model, y);
        for (size_t j = 0; j < model.diffusive.size(); ++j) {
            const double hj = h.diffusive[j][step];
            if (hj == 0.0) continue;
            const Matrix mod = model.diffusive[j].modulated(tau);
            out += kI * hj * (mod * y + y * mod.adjoint());
            out -= 0.5 * hj * hj * y;
        }
        for (size_t k = 0; k < model.jumps.size(); ++k) {
            const double hk = h.jump[k][step];
            if (hk == 0.0) continue;
            out += (std::polar(1.0, hk) - Complex(1.0, 0.0)) * model.jumps[k].apply(y);
        }
        return out;
    };

    for (long s = 0; s < n; ++s) {
        const double tau = h.grid.time_of(s);
        const Matrix k1 = k_apply(x, s, tau);
        const Matrix k2 = k_apply(x + 0.5 * dt * k1, s, tau + 0.5 * dt);
        const Matrix k3 = k_apply(x + 0.5 * dt * k2, s, tau + 0.5 * dt);
        const Matrix k4 = k_apply(x + dt * k3, s, tau + dt);
        x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (x.norm() > 10.0 * norm0 * std::exp(bound_rate * h.grid.time_of(s + 1))) {
            throw NumericError("evolve_characteristic: norm growth exceeds the stability bound; "
                               "reduce dt");
        }
    }
    return x;
}

struct McEstimate {
    Complex value{0.0, 0.0};
    double se = 0.0;
    long n = 0;
};

// Monte Carlo characteristic functional under the reference measure:
// mean of exp(i sum_j int h_j1 dW~_j + i sum_k int h_k2 dN_k) times Tr sigma_t.
inline McEstimate mc_characteristic(const MeasurementModel& model, const TestFunction& h,
                                    const Matrix& rho0, double t, long n,
                                    std::uint64_t master_seed) {
    if (n < 1) throw ConfigError("mc_characteristic: n must be >= 1");
    if (t <= 0.0 || t > h.grid.t_max + 1e-12) {
        throw std::invalid_argument("mc_characteristic: t outside the test-function grid");
    }
    TimeGrid grid(t, h.grid.dt, 1);

    std::vector<double> rates;
    for (const auto& jc : model.jumps) rates.push_back(jc.rate);

    Complex sum{0.0, 0.0};
    double sum_re2 = 0.0, sum_im2 = 0.0;
    for (long i = 0; i < n; ++i) {
        NoisePath noise = sample_noise_path(static_cast<int>(model.diffusive.size()), rates, grid,
                                            master_seed, static_cast<std::uint64_t>(i), kLinearSalt);
        TrajectoryRecord rec = simulate_linear(model, rho0, grid, noise);
        double phase = 0.0;
        for (size_t j = 0; j < model.diffusive.size(); ++j) {
            for (long s = 0; s < grid.n_steps(); ++s) {
                phase += h.diffusive[j][s] * noise.increment(s, static_cast<int>(j));
            }
        }
        for (size_t k = 0; k < model.jumps.size(); ++k) {
            for (double tau : noise.jump_times[k]) {
                if (tau < t) phase += h.jump[k][std::min<long>(std::lround(std::floor(tau / grid.dt)),
                                                               grid.n_steps() - 1)];
            }
        }
        const Complex z = std::polar(rec.weights.back(), phase);
        sum += z;
        sum_re2 += z.real() * z.real();
        sum_im2 += z.imag() * z.imag();
    }
    McEstimate out;
    out.n = n;
    out.value = sum / static_cast<double>(n);
    if (n > 1) {
        const double dn = static_cast<double>(n);
        const double var_re = std::max(0.0, sum_re2 / dn - out.value.real() * out.value.real());
        const double var_im = std::max(0.0, sum_im2 / dn - out.value.imag() * out.value.imag());
        out.se = std::sqrt((var_re + var_im) / (dn - 1.0));
    }
    return out;
}

// --------------------------- moment formulas --------------------------------

namespace detail {

// A priori states on a uniform grid of n steps of width h (n+1 nodes), plus
// the half-step states used by the local Simpson increments.
struct MasterGrid {
    double h = 0.0;
    std::vector<Matrix> eta;       // nodes 0..n
    std::vector<Matrix> eta_half;  // midpoints 0..n-1
    Superoperator full_step;
    Superoperator half_step;
};

inline MasterGrid master_grid(const MeasurementModel& model, const Matrix& rho0, double t_end,
                              long n) {
    MasterGrid g;
    g.h = t_end / static_cast<double>(n);
    g.half_step = propagator(model, 0.5 * g.h);
    g.full_step.dim = model.dim;
    g.full_step.mat = g.half_step.mat * g.half_step.mat;
    g.eta.reserve(n + 1);
    g.eta_half.reserve(n);
    g.eta.push_back(validate_state(rho0).matrix);
    for (long i = 0; i < n; ++i) {
        g.eta_half.push_back(g.half_step.apply(g.eta.back()));
        g.eta.push_back(g.half_step.apply(g.eta_half.back()));
    }
    return g;
}

inline double simpson(const std::vector<double>& f, double h) {
    const size_t n = f.size() - 1;
    double acc = 0.0;
    size_t i = 0;
    for (; i + 2 <= n; i += 2) acc += (h / 3.0) * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
    if (i + 1 <= n) acc += 0.5 * h * (f[n - 1] + f[n]);  // odd tail
    return acc;
}

} // namespace detail

struct MeanOutputs {
    std::vector<double> wiener;  // E[W~_j(t)]
    std::vector<double> counts;  // E[N_k(t)]
};

// First moments from the a priori states:
//   E[W~_j(t)] = int_0^t Tr{eta_s (L~_j(s) + L~_j(s)†)} ds,
//   E[N_k(t)]  = int_0^t Tr{J_k[eta_s]} ds,
// by composite Simpson quadrature on the master-equation grid.
inline MeanOutputs mean_outputs(const MeasurementModel& model, const Matrix& rho0, double t,
                                double dt = 1e-3) {
    model.validate();
    MeanOutputs out;
    out.wiener.assign(model.diffusive.size(), 0.0);
    out.counts.assign(model.jumps.size(), 0.0);
    if (t == 0.0) return out;
    if (t < 0.0 || !(dt > 0.0)) throw std::invalid_argument("mean_outputs: bad t or dt");

    long n = std::max(2L, std::lround(t / dt));
    if (n % 2 == 1) ++n;
    auto g = detail::master_grid(model, rho0, t, n);

    for (size_t j = 0; j < model.diffusive.size(); ++j) {
        std::vector<double> f(n + 1);
        for (long i = 0; i <= n; ++i) {
            const double s = g.h * static_cast<double>(i);
            f[i] = 2.0 * (model.diffusive[j].phase(s) * (g.eta[i] * model.diffusive[j].op).trace())
                             .real();
        }
        out.wiener[j] = detail::simpson(f, g.h);
    }
    for (size_t k = 0; k < model.jumps.size(); ++k) {
        const Matrix effect = model.jumps[k].effect();
        std::vector<double> f(n + 1);
        for (long i = 0; i <= n; ++i) f[i] = (g.eta[i] * effect).trace().real();
        out.counts[k] = detail::simpson(f, g.h);
    }
    return out;
}

// Per-sample Monte Carlo means of the outputs from a posterior ensemble,
// used to cross-validate the quadrature formulas.
struct McMeanOutputs {
    std::vector<double> times;
    std::vector<std::vector<double>> wiener_mean, wiener_se;  // per diffusive channel
    std::vector<std::vector<double>> count_mean, count_se;    // per counting channel
    std::vector<std::vector<double>> wiener_second, wiener_second_se;  // E[W~^2]
};

inline McMeanOutputs mc_mean_outputs(const MeasurementModel& model, const Matrix& rho0,
                                     const TimeGrid& grid, long n, std::uint64_t master_seed) {
    if (n < 1) throw ConfigError("mc_mean_outputs: n must be >= 1");
    model.validate();
    const size_t n_diff = model.diffusive.size();
    const size_t n_jump = model.jumps.size();
    const auto samples = grid.sample_steps();
    const size_t n_samples = samples.size();

    McMeanOutputs out;
    for (long s : samples) out.times.push_back(grid.time_of(s));
    auto zeros = [&] { return std::vector<double>(n_samples, 0.0); };
    std::vector<std::vector<double>> w1(n_diff, zeros()), w2(n_diff, zeros());
    std::vector<std::vector<double>> q1(n_diff, zeros()), q2(n_diff, zeros());
    std::vector<std::vector<double>> c1(n_jump, zeros()), c2(n_jump, zeros());

    for (long i = 0; i < n; ++i) {
        auto rec = simulate_posterior(model, rho0, grid,
                                      derive_seed(master_seed, static_cast<std::uint64_t>(i),
                                                  kPosteriorSalt));
        for (size_t j = 0; j < n_diff; ++j) {
            for (size_t s = 0; s < n_samples; ++s) {
                const double w = rec.wiener[j][s];
                w1[j][s] += w;
                w2[j][s] += w * w;
                q1[j][s] += w * w;
                q2[j][s] += w * w * w * w;
            }
        }
        for (size_t k = 0; k < n_jump; ++k) {
            for (size_t s = 0; s < n_samples; ++s) {
                const double c = static_cast<double>(rec.counts[k][s]);
                c1[k][s] += c;
                c2[k][s] += c * c;
            }
        }
    }
    const double dn = static_cast<double>(n);
    auto finalize = [&](std::vector<std::vector<double>>& sum, std::vector<std::vector<double>>& sq,
                        std::vector<std::vector<double>>& mean, std::vector<std::vector<double>>& se) {
        mean.assign(sum.size(), zeros());
        se.assign(sum.size(), zeros());
        for (size_t c = 0; c < sum.size(); ++c) {
            for (size_t s = 0; s < n_samples; ++s) {
                mean[c][s] = sum[c][s] / dn;
                if (n > 1) {
                    const double var = std::max(0.0, sq[c][s] / dn - mean[c][s] * mean[c][s]);
                    se[c][s] = std::sqrt(var / (dn - 1.0));
                }
            }
        }
    };
    finalize(w1, w2, out.wiener_mean, out.wiener_se);
    finalize(q1, q2, out.wiener_second, out.wiener_second_se);
    finalize(c1, c2, out.count_mean, out.count_se);
    return out;
}

enum class OutputKind { Diffusive = 1, Counting = 2 };

struct OutputIndex {
    int channel = 0;
    OutputKind kind = OutputKind::Diffusive;
};

namespace detail {

inline Matrix channel_map(const MeasurementModel& model, OutputIndex idx, double tau,
                          const Matrix& x) {
    if (idx.kind == OutputKind::Diffusive) {
        const Matrix mod = model.diffusive[idx.channel].modulated(tau);
        return mod * x + x * mod.adjoint();
    }
    return model.jumps[idx.channel].apply(x);
}

// int_0^t dtau1 Tr{ A_a(tau1) e^{L(tau1-tau2)} A_b(tau2)[eta_tau2] } dtau2
// with the inner integral capped at min(s, tau1), evaluated by a one-pass
// recurrence: F(tau1) solves dF/dtau1 = L F + 1{tau1<=s} A_b(tau1)[eta_tau1].
inline double cross_term(const MeasurementModel& model, const MasterGrid& g, OutputIndex a,
                         OutputIndex b, long t_idx, long s_idx) {
    const Index d = model.dim;
    Matrix f_run = Matrix::Zero(d, d);
    std::vector<double> outer(t_idx + 1);
    outer[0] = 0.0;
    for (long i = 0; i < t_idx; ++i) {
        const double tau_i = g.h * static_cast<double>(i);
        f_run = g.full_step.apply(f_run);
        if (i < s_idx) {
            // Local Simpson: source values at the left node, midpoint, right node.
            const Matrix g0 = g.full_step.apply(channel_map(model, b, tau_i, g.eta[i]));
            const Matrix gm =
                g.half_step.apply(channel_map(model, b, tau_i + 0.5 * g.h, g.eta_half[i]));
            const Matrix g1 = channel_map(model, b, tau_i + g.h, g.eta[i + 1]);
            f_run += (g.h / 6.0) * (g0 + 4.0 * gm + g1);
        }
        const double tau1 = tau_i + g.h;
        outer[i + 1] = channel_map(model, a, tau1, f_run).trace().real();
    }
    return simpson(outer, g.h);
}

} // namespace detail

// Second moment E[X_a(t) X_b(s)] of the outputs, X_j1 = W~_j and X_k2 = N_k:
// the equal-channel quadratic-variation term plus the two time-ordered
// correlation integrals through the semigroup.
inline double second_moment(const MeasurementModel& model, const Matrix& rho0, OutputIndex a,
                            OutputIndex b, double t, double s, double dt = 1e-3) {
    model.validate();
    if (t < 0.0 || s < 0.0 || !(dt > 0.0)) throw std::invalid_argument("second_moment: bad args");
    if (t == 0.0 || s == 0.0) return 0.0;

    const double t_end = std::max(t, s);
    long n = std::max(2L, std::lround(t_end / dt));
    if (n % 2 == 1) ++n;
    const double h = t_end / static_cast<double>(n);
    const long t_idx = std::lround(t / h);
    const long s_idx = std::lround(s / h);
    if (std::abs(t_idx * h - t) > 1e-9 * std::max(1.0, t) ||
        std::abs(s_idx * h - s) > 1e-9 * std::max(1.0, s)) {
        throw std::invalid_argument("second_moment: t and s must be commensurate with dt");
    }

    auto g = detail::master_grid(model, rho0, t_end, n);

    double term1 = 0.0;
    if (a.channel == b.channel && a.kind == b.kind) {
        const long m_idx = std::min(t_idx, s_idx);
        std::vector<double> f(m_idx + 1);
        if (a.kind == OutputKind::Diffusive) {
            std::fill(f.begin(), f.end(), 1.0);
        } else {
            const Matrix effect = model.jumps[a.channel].effect();
            for (long i = 0; i <= m_idx; ++i) f[i] = (g.eta[i] * effect).trace().real();
        }
        term1 = detail::simpson(f, g.h);
    }

    const double term2 = detail::cross_term(model, g, a, b, t_idx, s_idx);
    const double term3 = detail::cross_term(model, g, b, a, s_idx, t_idx);
    return term1 + term2 + term3;
}

} // namespace qcm
