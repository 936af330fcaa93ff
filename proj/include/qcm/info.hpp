// info.hpp — Scalar entropy and information functionals of states.

#pragma once

#include "qcm/matrix.hpp"
#include "qcm/state.hpp"

#include <Eigen/Eigenvalues>

#include <limits>

namespace qcm {

// Eigenvalues below this floor are treated as zero before logarithms.
inline constexpr double kEigenvalueFloor = 1e-14;

namespace detail {

inline RealVector state_spectrum(const Matrix& x) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(x, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

} // namespace detail

// -Tr x ln x with 0 ln 0 = 0; assumes x is already a valid state.
inline double von_neumann_entropy_unchecked(const Matrix& x) {
    const RealVector ev = detail::state_spectrum(x);
    double s = 0.0;
    for (Index i = 0; i < ev.size(); ++i) {
        if (ev(i) > kEigenvalueFloor) s -= ev(i) * std::log(ev(i));
    }
    return s < 0.0 ? 0.0 : s;
}

inline double von_neumann_entropy(const Matrix& x, double tol = kDefaultStateTol) {
    return von_neumann_entropy_unchecked(validate_state(x, tol).matrix);
}

// Tr x - Tr x^2; zero exactly on pure states.
inline double purity_deficit_unchecked(const Matrix& x) {
    return real_trace(x) - (x * x).trace().real();
}

inline double purity_deficit(const Matrix& x, double tol = kDefaultStateTol) {
    return purity_deficit_unchecked(validate_state(x, tol).matrix);
}

// Tr{x ln x - x ln y}; +infinity when the support of x is not contained in
// the support of y (support test at tolerance 1e-10).
inline double relative_entropy(const Matrix& x, const Matrix& y, double tol = kDefaultStateTol) {
    const Matrix xs = validate_state(x, tol).matrix;
    const Matrix ys = validate_state(y, tol).matrix;
    if (xs.rows() != ys.rows()) throw std::invalid_argument("relative_entropy: dimension mismatch");

    Eigen::SelfAdjointEigenSolver<Matrix> es(ys);
    const RealVector ev = es.eigenvalues();

    constexpr double support_tol = 1e-10;
    double outside = 0.0;
    Matrix log_y = Matrix::Zero(ys.rows(), ys.cols());
    for (Index i = 0; i < ev.size(); ++i) {
        const Vector v = es.eigenvectors().col(i);
        const double overlap = (v.adjoint() * xs * v).value().real();
        if (ev(i) <= support_tol) {
            outside += std::max(0.0, overlap);
        } else {
            log_y += std::log(ev(i)) * (v * v.adjoint());
        }
    }
    if (outside > support_tol) return std::numeric_limits<double>::infinity();

    const double cross = -(xs * log_y).trace().real();
    return std::max(0.0, cross - von_neumann_entropy_unchecked(xs));
}

} // namespace qcm
