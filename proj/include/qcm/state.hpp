// state.hpp — Density-operator validation, repair, and spectral decomposition.

#pragma once

#include "qcm/errors.hpp"
#include "qcm/matrix.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>
#include <vector>

namespace qcm {

inline constexpr double kDefaultStateTol = 1e-9;

// A state matrix together with the repair applied to make it one: Hermitian,
// eigenvalues clamped to [0, inf), trace renormalized to 1.
struct ValidatedState {
    Matrix matrix;
    double repair_magnitude = 0.0;  // max of hermiticity defect, eigenvalue clamp, trace deviation
};

// Accepts x iff it is Hermitian, has eigenvalues >= -tol and |Tr - 1| <= tol.
// Violations within tol are repaired (clamp + renormalize); larger ones throw.
inline ValidatedState validate_state(const Matrix& x, double tol = kDefaultStateTol) {
    require_square(x, "validate_state");
    if (tol <= 0.0) throw std::invalid_argument("validate_state: tol must be > 0");

    const double herm_defect = (x - x.adjoint()).cwiseAbs().maxCoeff();
    if (herm_defect > tol) {
        throw NumericError("validate_state: Hermiticity violation " + std::to_string(herm_defect));
    }
    Matrix h = hermitize(x);

    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    RealVector ev = es.eigenvalues();
    const double min_ev = ev.minCoeff();
    if (min_ev < -tol) {
        throw NumericError("validate_state: negative eigenvalue " + std::to_string(min_ev));
    }
    double clamp = 0.0;
    for (Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < 0.0) {
            clamp = std::max(clamp, -ev(i));
            ev(i) = 0.0;
        }
    }

    const double tr = ev.sum();
    const double tr_defect = std::abs(tr - 1.0);
    if (tr_defect > tol) {
        throw NumericError("validate_state: trace deviation " + std::to_string(tr_defect));
    }

    // Rebuilding the state for rounding-level defects would perturb exact
    // inputs, so repairs below a few ulps pass the hermitized input through.
    constexpr double fp_noise = 1e-14;
    ValidatedState out;
    if (clamp <= fp_noise && tr_defect <= fp_noise) {
        out.matrix = h;
    } else {
        out.matrix = es.eigenvectors() * (ev / tr).asDiagonal() * es.eigenvectors().adjoint();
    }
    out.repair_magnitude = std::max({herm_defect, clamp, tr_defect});
    return out;
}

// Orthogonal decomposition rho = sum_a w_a |v_a><v_a| with w_a sorted
// descending. Eigenvalues below tol are dropped and the weights renormalized.
struct SpectralDecomposition {
    std::vector<double> weights;
    std::vector<Matrix> components;  // rank-one projectors, mutually orthogonal
    std::vector<Vector> vectors;
};

// Degenerate eigenvalues make the decomposition non-unique; runs are kept
// reproducible by fixing the eigenvector phase so that the first component
// above a small magnitude threshold is real and positive.
inline Vector fix_phase(Vector v) {
    const double scale = v.cwiseAbs().maxCoeff();
    for (Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > 1e-8 * scale) {
            v *= std::polar(1.0, -std::arg(v(i)));
            break;
        }
    }
    return v;
}

inline SpectralDecomposition spectral_decompose(const Matrix& rho, double tol = 1e-12) {
    const ValidatedState st = validate_state(rho);
    Eigen::SelfAdjointEigenSolver<Matrix> es(st.matrix);

    std::vector<std::pair<double, Vector>> pairs;
    for (Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double w = es.eigenvalues()(i);
        if (w >= tol) pairs.emplace_back(w, fix_phase(es.eigenvectors().col(i)));
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });

    double total = 0.0;
    for (const auto& p : pairs) total += p.first;
    if (total <= 0.0) throw NumericError("spectral_decompose: no eigenvalue above tol");

    SpectralDecomposition out;
    for (auto& [w, v] : pairs) {
        out.weights.push_back(w / total);
        out.components.push_back(v * v.adjoint());
        out.vectors.push_back(v);
    }
    return out;
}

} // namespace qcm
