// info_report.hpp — Entropy/information analyses over trajectory ensembles:
// mean a posteriori entropy, information gain, the entropy balance, the
// classical information of the output law, and its growth rate.

#pragma once

#include "qcm/info.hpp"
#include "qcm/lindblad.hpp"
#include "qcm/parallel.hpp"
#include "qcm/trajectories.hpp"

#include <cmath>
#include <vector>

namespace qcm {

namespace detail {

// sum_{lambda > floor} ln(lambda) v v†; the floor keeps logs of numerical
// zeros out of the entropy balance.
inline Matrix matrix_log_floored(const Matrix& x) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(x);
    Matrix out = Matrix::Zero(x.rows(), x.cols());
    for (Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double ev = es.eigenvalues()(i);
        if (ev > kEigenvalueFloor) {
            out += std::log(ev) * (es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint());
        }
    }
    return out;
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe out;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) out.mean += x;
    out.mean /= n;
    if (xs.size() > 1) {
        double acc = 0.0;
        for (double x : xs) acc += (x - out.mean) * (x - out.mean);
        out.se = std::sqrt(acc / (n * (n - 1.0)));
    }
    return out;
}

} // namespace detail

// Classical information of the output law, c-I, with the growth-rate
// estimator. The mixture and every spectral component of rho0 are driven by
// one shared reference-measure noise stream per trajectory, so the pathwise
// identity sigma = sum_a w_a sigma^a holds exactly and the estimator
//   c-I(t) = E_Q[ sum_a w_a ||sigma^a|| ln ||sigma^a|| - ||sigma|| ln ||sigma|| ]
// needs no measure change. Component expectations for the rate are taken
// under the component laws via the ||sigma^a|| likelihood weights.
struct ClassicalInfoSeries {
    std::vector<double> times;
    std::vector<double> value;
    std::vector<double> se;
    std::vector<double> rate;      // d/dt c-I estimate at each sample time
    std::vector<double> rate_se;
    std::vector<long> rate_excluded;  // samples dropped where nu = 0 but nu^a > 0
    std::vector<double> weights;      // spectral weights of rho0
    long n = 0;
    std::uint64_t master_seed = 0;

    // Paired centered finite difference of c-I around fd_center (when
    // requested): the per-path pairing shares all noise with the rate
    // estimator, so rate_minus_fd carries an honest standard error.
    bool fd_defined = false;
    double fd_center = 0.0;
    double fd_value = 0.0;
    double fd_se = 0.0;
    double rate_at_center = 0.0;
    double rate_minus_fd = 0.0;
    double rate_minus_fd_se = 0.0;
};

struct InfoOptions {
    int threads = 1;
    PosteriorOptions posterior;
    double decomposition_tol = 1e-12;
    // When fd_halfwidth > 0, classical_information also reports the paired
    // centered difference (c-I(c+d) - c-I(c-d)) / 2d at c = fd_center.
    double fd_center = 0.0;
    double fd_halfwidth = 0.0;
};

inline ClassicalInfoSeries classical_information(const MeasurementModel& model, const Matrix& rho0,
                                                 const TimeGrid& grid, long n,
                                                 std::uint64_t master_seed,
                                                 const InfoOptions& opt = {}) {
    if (n < 1) throw ConfigError("classical_information: n must be >= 1");
    model.validate();
    SpectralDecomposition dec = spectral_decompose(rho0, opt.decomposition_tol);
    if (dec.weights.size() == 1) {
        // Pure input: the decomposition is the state itself; using it verbatim
        // keeps the mixture and component paths bit-identical, so the two
        // terms of the estimator cancel exactly.
        dec.components[0] = validate_state(rho0).matrix;
    }
    const size_t n_alpha = dec.weights.size();
    const size_t n_diff = model.diffusive.size();
    const size_t n_jump = model.jumps.size();
    const auto samples = grid.sample_steps();
    const size_t n_samples = samples.size();

    std::vector<double> rates;
    for (const auto& jc : model.jumps) rates.push_back(jc.rate);

    // The finite-difference request needs the rate integrand at every step in
    // the window, so those runs record the whole grid densely.
    const bool with_fd = opt.fd_halfwidth > 0.0;
    const TimeGrid sim_grid = with_fd ? TimeGrid(grid.t_max, grid.dt, 1) : grid;
    long fd_lo = 0, fd_hi = 0;
    if (with_fd) {
        fd_lo = std::lround((opt.fd_center - opt.fd_halfwidth) / grid.dt);
        fd_hi = std::lround((opt.fd_center + opt.fd_halfwidth) / grid.dt);
        if (fd_lo < 0 || fd_hi > grid.n_steps()) {
            throw ConfigError("classical_information: finite-difference window leaves the grid");
        }
    }

    // Per-trajectory, per-sample: the c-I integrand and the rate integrand;
    // per-trajectory: the rate integrand integrated over the window.
    std::vector<std::vector<double>> ci(n, std::vector<double>(n_samples, 0.0));
    std::vector<std::vector<double>> ri(n, std::vector<double>(n_samples, 0.0));
    std::vector<std::vector<char>> valid(n, std::vector<char>(n_samples, 1));
    std::vector<double> window_integral(n, 0.0);

    auto bracket = [](double r) {
        if (r <= 0.0) return 1.0;
        return 1.0 - r + r * std::log(r);
    };
    auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };

    detail::indexed_parallel(n, opt.threads, [&](long i) {
        NoisePath noise = sample_noise_path(static_cast<int>(n_diff), rates, sim_grid, master_seed,
                                            static_cast<std::uint64_t>(i), kLinearSalt);
        TrajectoryRecord mix = simulate_linear(model, rho0, sim_grid, noise);
        std::vector<TrajectoryRecord> comp;
        comp.reserve(n_alpha);
        for (size_t a = 0; a < n_alpha; ++a) {
            comp.push_back(simulate_linear(model, dec.components[a], sim_grid, noise));
        }

        // Rate integrand of the record at dense-or-coarse sample index s.
        auto rate_integrand = [&](size_t s, bool* ok) {
            double acc = 0.0;
            for (size_t a = 0; a < n_alpha; ++a) {
                const double wa = comp[a].weights[s];
                double x = 0.0;
                for (size_t j = 0; j < n_diff; ++j) {
                    const double dm = comp[a].signal_m[j][s] - mix.signal_m[j][s];
                    x += 0.5 * dm * dm;
                }
                for (size_t k = 0; k < n_jump; ++k) {
                    const double nu = mix.signal_nu[k][s];
                    const double nua = comp[a].signal_nu[k][s];
                    if (nu <= 0.0) {
                        if (nua > 1e-12 && ok) *ok = false;
                        continue;
                    }
                    x += nu * bracket(nua / nu);
                }
                acc += dec.weights[a] * wa * x;
            }
            return acc;
        };

        for (size_t sc = 0; sc < n_samples; ++sc) {
            // With dense recording, sample index equals the step number.
            const size_t s = with_fd ? static_cast<size_t>(samples[sc]) : sc;
            const double w = mix.weights[s];
            double acc = -xlogx(w);
            Matrix recon = Matrix::Zero(model.dim, model.dim);
            for (size_t a = 0; a < n_alpha; ++a) {
                acc += dec.weights[a] * xlogx(comp[a].weights[s]);
                recon += dec.weights[a] * comp[a].states[s];
            }
            bool ok = true;
            ci[i][sc] = acc;
            ri[i][sc] = rate_integrand(s, &ok);
            valid[i][sc] = ok ? 1 : 0;
            if ((recon - mix.states[s]).cwiseAbs().maxCoeff() > 1e-10) {
                throw NumericError("classical_information: pathwise mixture decomposition broke");
            }
        }

        if (with_fd) {
            // Pathwise time integral of the first-form rate integrand: the
            // c-I increment over the window minus an exactly-zero-mean
            // martingale. First form per unit time:
            //   sum_a w_a w^a [ (1/2) sum_j (m_j^a)^2 + sum_k nu_k^a ln nu_k^a ]
            //   - w [ (1/2) sum_j m_j^2 + sum_k nu_k ln nu_k ].
            double acc = 0.0;
            for (long s = fd_lo; s < fd_hi; ++s) {
                double first_form = 0.0;
                for (size_t a = 0; a < n_alpha; ++a) {
                    const double wa = comp[a].weights[s];
                    double x = 0.0;
                    for (size_t j = 0; j < n_diff; ++j) {
                        const double ma = comp[a].signal_m[j][s];
                        x += 0.5 * ma * ma;
                    }
                    for (size_t k = 0; k < n_jump; ++k) x += xlogx(comp[a].signal_nu[k][s]);
                    first_form += dec.weights[a] * wa * x;
                }
                double xm = 0.0;
                for (size_t j = 0; j < n_diff; ++j) {
                    const double mj = mix.signal_m[j][s];
                    xm += 0.5 * mj * mj;
                }
                for (size_t k = 0; k < n_jump; ++k) xm += xlogx(mix.signal_nu[k][s]);
                first_form -= mix.weights[s] * xm;
                acc += first_form * grid.dt;
            }
            window_integral[i] = acc;
        }
    });

    ClassicalInfoSeries out;
    out.n = n;
    out.master_seed = master_seed;
    out.weights = dec.weights;
    for (size_t s = 0; s < n_samples; ++s) {
        out.times.push_back(grid.time_of(samples[s]));
        std::vector<double> col(n);
        for (long i = 0; i < n; ++i) col[i] = ci[i][s];
        auto ms = detail::mean_se(col);
        out.value.push_back(ms.mean);
        out.se.push_back(ms.se);

        std::vector<double> rcol;
        long excluded = 0;
        for (long i = 0; i < n; ++i) {
            if (valid[i][s]) rcol.push_back(ri[i][s]);
            else ++excluded;
        }
        if (rcol.empty()) rcol.push_back(0.0);
        auto rs = detail::mean_se(rcol);
        out.rate.push_back(rs.mean);
        out.rate_se.push_back(rs.se);
        out.rate_excluded.push_back(excluded);
    }

    if (with_fd) {
        size_t c = 0;
        bool found = false;
        for (size_t s = 0; s < n_samples; ++s) {
            if (std::abs(out.times[s] - opt.fd_center) <= 1e-9 * std::max(1.0, opt.fd_center)) {
                c = s;
                found = true;
            }
        }
        if (!found) {
            throw ConfigError("classical_information: fd_center is not a recorded sample time");
        }
        const double width = 2.0 * opt.fd_halfwidth;
        std::vector<double> fd(n), diff(n);
        for (long i = 0; i < n; ++i) {
            fd[i] = window_integral[i] / width;
            diff[i] = ri[i][c] - fd[i];
        }
        auto fms = detail::mean_se(fd);
        auto dms = detail::mean_se(diff);
        out.fd_defined = true;
        out.fd_center = opt.fd_center;
        out.fd_value = fms.mean;
        out.fd_se = fms.se;
        out.rate_at_center = out.rate[c];
        out.rate_minus_fd = dms.mean;
        out.rate_minus_fd_se = dms.se;
    }
    return out;
}

struct RateEstimate {
    double rate = 0.0;
    double se = 0.0;
    long excluded = 0;
};

// Point estimate of d/dt c-I at time t.
inline RateEstimate classical_information_rate(const MeasurementModel& model, const Matrix& rho0,
                                               double t, long n, std::uint64_t master_seed,
                                               double dt = 1e-3, const InfoOptions& opt = {}) {
    if (!(t > 0.0)) {
        // At t = 0 every component shares the initial signals of its own pure
        // state; the estimator is the spread of the initial signals.
        TimeGrid tiny(dt, dt, 1);
        auto series = classical_information(model, rho0, tiny, n, master_seed, opt);
        return {series.rate.front(), series.rate_se.front(), series.rate_excluded.front()};
    }
    TimeGrid grid(t, dt, std::max(1L, TimeGrid(t, dt, 1).n_steps()));
    auto series = classical_information(model, rho0, grid, n, master_seed, opt);
    return {series.rate.back(), series.rate_se.back(), series.rate_excluded.back()};
}

// Full entropy/information report over one posterior ensemble.
struct InfoReport {
    std::vector<double> times;
    double s_initial = 0.0;                 // S[rho0]
    std::vector<double> s_eta;              // S[eta_t], master equation
    std::vector<double> s_eta_hat;          // S of the empirical ensemble mean
    std::vector<double> mean_entropy;       // E[S[rho_t]]
    std::vector<double> se_entropy;
    std::vector<double> mean_rel_entropy;   // E[S[rho_t | eta_t]]
    std::vector<double> se_rel_entropy;
    std::vector<double> mean_rel_entropy_hat;  // E[S[rho_t | eta_hat_t]]
    std::vector<double> balance_residual;   // S[eta_hat] - E[S] - E[S[.|eta_hat]]
    std::vector<double> info_gain;          // I = S[rho0] - E[S[rho_t]]
    std::vector<double> classical_info;
    std::vector<double> se_classical_info;
    std::vector<double> rate;
    std::vector<double> rate_se;
    std::vector<double> mean_purity_deficit;
    std::vector<double> se_purity_deficit;
    std::vector<double> decomposition_weights;
    long n = 0;
    std::uint64_t master_seed = 0;
    long repair_count = 0;
    double max_repair = 0.0;
};

inline InfoReport info_report(const MeasurementModel& model, const Matrix& rho0,
                              const TimeGrid& grid, long n, std::uint64_t master_seed,
                              const InfoOptions& opt = {}) {
    if (n < 1) throw ConfigError("info_report: n must be >= 1");
    model.validate();
    const Matrix rho_init = validate_state(rho0).matrix;
    const auto samples = grid.sample_steps();
    const size_t n_samples = samples.size();

    // Posterior ensemble, states retained at sample times.
    std::vector<std::vector<Matrix>> states(n);
    std::vector<long> repairs(n, 0);
    std::vector<double> max_repairs(n, 0.0);
    detail::indexed_parallel(n, opt.threads, [&](long i) {
        auto rec = simulate_posterior(model, rho_init, grid,
                                      derive_seed(master_seed, static_cast<std::uint64_t>(i),
                                                  kPosteriorSalt),
                                      opt.posterior);
        states[i] = std::move(rec.states);
        repairs[i] = rec.repair_count;
        max_repairs[i] = rec.max_repair;
    });

    InfoReport out;
    out.n = n;
    out.master_seed = master_seed;
    out.s_initial = von_neumann_entropy_unchecked(rho_init);
    for (long i = 0; i < n; ++i) {
        out.repair_count += repairs[i];
        out.max_repair = std::max(out.max_repair, max_repairs[i]);
    }

    for (size_t s = 0; s < n_samples; ++s) {
        const double t = grid.time_of(samples[s]);
        out.times.push_back(t);
        const Matrix eta = evolve_master(model, rho_init, t);
        const Matrix log_eta = detail::matrix_log_floored(eta);
        out.s_eta.push_back(von_neumann_entropy_unchecked(eta));

        Matrix eta_hat = Matrix::Zero(model.dim, model.dim);
        for (long i = 0; i < n; ++i) eta_hat += states[i][s];
        eta_hat /= static_cast<double>(n);
        const Matrix log_eta_hat = detail::matrix_log_floored(eta_hat);
        const double s_hat = von_neumann_entropy_unchecked(eta_hat);
        out.s_eta_hat.push_back(s_hat);

        std::vector<double> ent(n), rel(n), rel_hat(n), pur(n);
        for (long i = 0; i < n; ++i) {
            const Matrix& rho = states[i][s];
            const double si = von_neumann_entropy_unchecked(rho);
            ent[i] = si;
            rel[i] = std::max(0.0, -si - (rho * log_eta).trace().real());
            rel_hat[i] = -si - (rho * log_eta_hat).trace().real();
            pur[i] = purity_deficit_unchecked(rho);
        }
        auto ems = detail::mean_se(ent);
        auto rms = detail::mean_se(rel);
        auto rhm = detail::mean_se(rel_hat);
        auto pms = detail::mean_se(pur);
        out.mean_entropy.push_back(ems.mean);
        out.se_entropy.push_back(ems.se);
        out.mean_rel_entropy.push_back(rms.mean);
        out.se_rel_entropy.push_back(rms.se);
        out.mean_rel_entropy_hat.push_back(rhm.mean);
        out.balance_residual.push_back(s_hat - ems.mean - rhm.mean);
        out.info_gain.push_back(out.s_initial - ems.mean);
        out.mean_purity_deficit.push_back(pms.mean);
        out.se_purity_deficit.push_back(pms.se);
    }

    auto ci = classical_information(model, rho_init, grid, n, master_seed, opt);
    out.classical_info = ci.value;
    out.se_classical_info = ci.se;
    out.rate = ci.rate;
    out.rate_se = ci.rate_se;
    out.decomposition_weights = ci.weights;
    return out;
}

} // namespace qcm
