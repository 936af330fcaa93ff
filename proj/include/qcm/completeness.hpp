// completeness.hpp — Structural classification of the measurement: the
// quasi-completeness test (posterior states stay pure from pure initial
// conditions), the asymptotic-purification hypothesis check, and the
// purification experiment.
//
// Quasi-completeness holds iff the unobserved part of the generator vanishes
// and every counting channel is pure-preserving, which splits the channels
// into two classes:
//   A1 — a single effective Kraus operator R (all Kraus operators span one
//        ray in operator space), J[rho] = R rho R†;
//   A2 — effect-times-projection: every Kraus operator is |p><v_m| with one
//        shared output ray, J[rho] = Tr{rho J*[1]} |p><p|.

#pragma once

#include "qcm/info.hpp"
#include "qcm/lindblad.hpp"
#include "qcm/model.hpp"
#include "qcm/noise.hpp"
#include "qcm/state.hpp"
#include "qcm/trajectories.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <optional>
#include <string>
#include <vector>

namespace qcm {

enum class JumpClass { A1, A2 };

struct ChannelClassification {
    JumpClass cls = JumpClass::A1;
    Matrix effective_kraus;  // A1: R with J[rho] = R rho R†
    Matrix projection;       // A2: the fixed output projection P
};

enum class CompletenessReason { Passes, UnobservedChannelPresent, JumpNotPurePreserving };

struct CompletenessVerdict {
    bool quasi_complete = false;
    CompletenessReason reason = CompletenessReason::Passes;
    int failing_channel = -1;
    Matrix witness_state;  // pure input whose jump image is mixed, when failing
    std::vector<ChannelClassification> channels;
};

namespace detail {

// Random pure input whose (normalized) channel image has a second eigenvalue
// above the tolerance; used as a counterexample to pure preservation.
inline Matrix mixed_image_witness(const JumpChannel& jc, double tol) {
    const Index d = jc.kraus.front().rows();
    Rng rng(0x5EEDULL);
    Matrix witness = Matrix::Zero(d, d);
    for (int trial = 0; trial < 256; ++trial) {
        Vector psi(d);
        for (Index c = 0; c < d; ++c) psi(c) = Complex(rng.normal(), rng.normal());
        psi.normalize();
        const Matrix img = jc.apply(psi * psi.adjoint());
        const double tr = img.trace().real();
        if (tr < 1e-12) continue;
        Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(img / tr), Eigen::EigenvaluesOnly);
        RealVector ev = es.eigenvalues();
        std::sort(ev.data(), ev.data() + ev.size());
        if (ev(ev.size() - 2) > 10.0 * tol) {
            witness = psi * psi.adjoint();
            break;
        }
    }
    return witness;
}

// Tries to classify one counting channel; nullopt when it is not
// pure-preserving, with a counterexample stored in *witness.
inline std::optional<ChannelClassification> classify_jump(const JumpChannel& jc, double tol,
                                                          Matrix* witness) {
    const Index d = jc.kraus.front().rows();
    const size_t m = jc.kraus.size();

    // A1: the stacked vec'd Kraus operators have numerical rank one, so a
    // single effective operator R reproduces the map: vec(R_m) = c_m u with
    // sum |c_m|^2 = s0^2, hence R = s0 unvec(u).
    Matrix stacked(m, d * d);
    for (size_t r = 0; r < m; ++r) stacked.row(r) = vectorize(jc.kraus[r]).transpose();
    Eigen::JacobiSVD<Matrix> svd(stacked, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv(0) <= tol) {
        ChannelClassification out;
        out.cls = JumpClass::A1;
        out.effective_kraus = Matrix::Zero(d, d);
        return out;
    }
    if (sv.size() == 1 || sv(1) / sv(0) <= tol) {
        ChannelClassification out;
        out.cls = JumpClass::A1;
        const Vector u = fix_phase(svd.matrixV().col(0).conjugate());
        out.effective_kraus = sv(0) * unvectorize(u, d);
        return out;
    }

    // A2: every Kraus operator is rank one with a common output (left) ray.
    Vector shared_left;
    for (size_t r = 0; r < m; ++r) {
        Eigen::JacobiSVD<Matrix> ks(jc.kraus[r], Eigen::ComputeThinU);
        const auto& ksv = ks.singularValues();
        if (ksv(0) <= tol) continue;  // zero operator constrains nothing
        const bool rank_one = ksv.size() == 1 || ksv(1) / ksv(0) <= tol;
        if (rank_one) {
            const Vector left = ks.matrixU().col(0);
            if (shared_left.size() == 0) {
                shared_left = fix_phase(left);
                continue;
            }
            if (1.0 - std::abs(shared_left.dot(left)) <= tol) continue;
        }
        if (witness) *witness = mixed_image_witness(jc, tol);
        return std::nullopt;
    }
    ChannelClassification out;
    out.cls = JumpClass::A2;
    if (shared_left.size() == 0) shared_left = Vector::Unit(d, 0);
    out.projection = shared_left * shared_left.adjoint();
    return out;
}

} // namespace detail

inline CompletenessVerdict check_quasi_complete(const MeasurementModel& model, double tol = 1e-9) {
    model.validate();
    CompletenessVerdict out;

    // The unobserved part must vanish as a map (a scalar S contributes
    // nothing, so the superoperator norm is the faithful test).
    const double l1_norm = generator_matrix(model, GeneratorPart::L1).mat.norm();
    double scale = 1.0;
    for (const auto& s : model.unobserved) scale = std::max(scale, s.squaredNorm());
    if (l1_norm > tol * scale) {
        out.quasi_complete = false;
        out.reason = CompletenessReason::UnobservedChannelPresent;
        return out;
    }

    for (size_t k = 0; k < model.jumps.size(); ++k) {
        Matrix witness;
        auto cls = detail::classify_jump(model.jumps[k], tol, &witness);
        if (!cls) {
            out.quasi_complete = false;
            out.reason = CompletenessReason::JumpNotPurePreserving;
            out.failing_channel = static_cast<int>(k);
            out.witness_state = witness;
            return out;
        }
        out.channels.push_back(*cls);
    }
    out.quasi_complete = true;
    out.reason = CompletenessReason::Passes;
    return out;
}

// --------------------------- purification hypothesis ------------------------

struct ProjectionSearchResult {
    bool found = false;
    double residual = 0.0;
    Matrix projection;
    std::vector<double> scalars;  // compression scalars Tr{P A}/2 per operator
};

struct PurificationHypothesisTime {
    double t = 0.0;
    ProjectionSearchResult search;
};

struct PurificationHypothesisReport {
    bool hypothesis_holds = false;  // no compressing projection found at any time
    bool inconclusive = false;      // heuristic search limits (d > 6)
    std::vector<PurificationHypothesisTime> per_time;
};

namespace detail {

// Minimizes sum_A || V†AV - (tr V†AV / 2) I ||² over d×2 isometries V by
// projected gradient descent with QR retraction; deterministic multi-start.
inline ProjectionSearchResult find_compressing_projection(const std::vector<Matrix>& family,
                                                          Index d, double tol, int starts = 64) {
    ProjectionSearchResult best;
    best.residual = std::numeric_limits<double>::infinity();
    if (d < 2) return best;

    auto objective = [&](const Matrix& v) {
        double f = 0.0;
        for (const Matrix& a : family) {
            Matrix c = v.adjoint() * a * v;
            c -= 0.5 * c.trace() * Matrix::Identity(2, 2);
            f += c.squaredNorm();
        }
        return f;
    };
    auto euclidean_gradient = [&](const Matrix& v) {
        Matrix g = Matrix::Zero(d, 2);
        for (const Matrix& a : family) {
            Matrix c = v.adjoint() * a * v;
            c -= 0.5 * c.trace() * Matrix::Identity(2, 2);
            // d/dV* of ||C||²: A V C† + A† V C, with the traceless projection
            // folded in (C is already traceless).
            g += 2.0 * (a * v * c.adjoint() + a.adjoint() * v * c);
        }
        return g;
    };
    auto retract = [&](const Matrix& v) {
        Eigen::HouseholderQR<Matrix> qr(v);
        Matrix q = qr.householderQ() * Matrix::Identity(d, 2);
        return q;
    };

    Rng rng(0xC0FFEEULL);
    for (int s = 0; s < starts; ++s) {
        Matrix v(d, 2);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < 2; ++j) v(i, j) = Complex(rng.normal(), rng.normal());
        v = retract(v);

        double step = 0.1;
        double f = objective(v);
        for (int it = 0; it < 400 && f > 1e-18; ++it) {
            Matrix g = euclidean_gradient(v);
            Matrix v_next = retract(v - step * g);
            const double f_next = objective(v_next);
            if (f_next < f) {
                v = v_next;
                f = f_next;
                step *= 1.2;
            } else {
                step *= 0.5;
                if (step < 1e-14) break;
            }
        }
        if (f < best.residual) {
            best.residual = f;
            best.projection = v * v.adjoint();
            best.scalars.clear();
            for (const Matrix& a : family) {
                best.scalars.push_back(0.5 * (v.adjoint() * a * v).trace().real());
            }
        }
    }
    best.found = best.residual <= tol;
    return best;
}

} // namespace detail

// Searches, at each listed time, for a rank-2 projection P compressing every
// operator in {L~_j(t) + L~_j(t)†} ∪ {J_k*[1]} to a multiple of P. The
// asymptotic-purification hypothesis holds when no such projection exists at
// any time. For d = 2 the test is exact: the only rank-2 projection is the
// identity, so the hypothesis holds iff some operator has two distinct
// eigenvalues.
inline PurificationHypothesisReport check_purification_hypothesis(const MeasurementModel& model,
                                                                  const std::vector<double>& times,
                                                                  double tol = 1e-9) {
    model.validate();
    PurificationHypothesisReport out;
    out.hypothesis_holds = true;
    out.inconclusive = model.dim > 6;

    for (double t : times) {
        std::vector<Matrix> family;
        for (const auto& ch : model.diffusive) {
            const Matrix mod = ch.modulated(t);
            family.push_back(mod + mod.adjoint());
        }
        for (const auto& jc : model.jumps) family.push_back(jc.effect());

        PurificationHypothesisTime entry;
        entry.t = t;
        if (model.dim == 2) {
            // Exact branch: P = 1, so the condition fails only if every
            // family member is a multiple of the identity.
            bool all_scalar = true;
            ProjectionSearchResult res;
            res.projection = identity(2);
            double residual = 0.0;
            for (const Matrix& a : family) {
                Matrix c = a - 0.5 * a.trace() * identity(2);
                residual += c.squaredNorm();
                res.scalars.push_back(0.5 * a.trace().real());
                if (c.norm() > tol) all_scalar = false;
            }
            res.residual = residual;
            res.found = all_scalar;
            entry.search = res;
        } else {
            entry.search = detail::find_compressing_projection(family, model.dim, tol);
        }
        if (entry.search.found) out.hypothesis_holds = false;
        out.per_time.push_back(std::move(entry));
    }
    return out;
}

// Time grid for the hypothesis check: at least 16 samples per modulation
// period of every channel, and a single t = 0 when nothing is modulated.
inline std::vector<double> hypothesis_check_times(const MeasurementModel& model, double t_max) {
    double max_omega = 0.0;
    for (const auto& ch : model.diffusive) max_omega = std::max(max_omega, std::abs(ch.omega));
    if (max_omega == 0.0) return {0.0};
    const double period = 2.0 * M_PI / max_omega;
    const double step = period / 16.0;
    std::vector<double> times;
    for (double t = 0.0; t <= std::min(t_max, period) + 1e-12; t += step) times.push_back(t);
    return times;
}

// --------------------------- purification experiment ------------------------

struct PurificationReport {
    CompletenessVerdict verdict;
    PurificationHypothesisReport hypothesis;
    std::vector<double> times;
    std::vector<double> mean_purity_deficit;
    std::vector<double> se_purity_deficit;
    double final_window_deficit = 0.0;  // average over the last tenth of the run
    double threshold = 0.05;
    bool purified = false;
    double s_initial = 0.0;
    double info_gain_final = 0.0;  // S[rho0] - E[S[rho_t]] at the final time
    long n = 0;
    std::uint64_t master_seed = 0;
};

struct PurificationOptions {
    double threshold = 0.05;
    int threads = 1;
    PosteriorOptions posterior;
};

// Posterior ensemble watching the mean purity deficit; the structural verdict
// and hypothesis check ride along for interpretation.
inline PurificationReport purification_experiment(const MeasurementModel& model, const Matrix& rho0,
                                                  const TimeGrid& grid, long n,
                                                  std::uint64_t master_seed,
                                                  const PurificationOptions& opt = {}) {
    PurificationReport out;
    out.verdict = check_quasi_complete(model);
    out.hypothesis = check_purification_hypothesis(model, hypothesis_check_times(model, grid.t_max));
    out.threshold = opt.threshold;
    out.n = n;
    out.master_seed = master_seed;

    EnsembleOptions eopt;
    eopt.threads = opt.threads;
    eopt.posterior = opt.posterior;
    auto sum = run_ensemble(model, rho0, grid, n, Engine::Posterior, master_seed, eopt);
    out.times = sum.times;
    out.mean_purity_deficit = sum.mean_purity_deficit;
    out.se_purity_deficit = sum.se_purity_deficit;
    out.s_initial = von_neumann_entropy(rho0);
    out.info_gain_final = out.s_initial - sum.mean_entropy.back();

    const size_t count = out.times.size();
    const size_t window = std::max<size_t>(1, count / 10);
    double acc = 0.0;
    for (size_t s = count - window; s < count; ++s) acc += out.mean_purity_deficit[s];
    out.final_window_deficit = acc / static_cast<double>(window);
    out.purified = out.final_window_deficit <= opt.threshold;
    return out;
}

} // namespace qcm
