// matrix.hpp — Dense complex matrix helpers: adjoints, norms, vectorization,
// and the small operator zoo used throughout the library and its tests.

#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <complex>
#include <stdexcept>

namespace qcm {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr Complex kI{0.0, 1.0};

inline Matrix identity(Index d) { return Matrix::Identity(d, d); }

inline Matrix dagger(const Matrix& a) { return a.adjoint(); }

inline Matrix commutator(const Matrix& a, const Matrix& b) { return a * b - b * a; }

inline Matrix anticommutator(const Matrix& a, const Matrix& b) { return a * b + b * a; }

inline void require_square(const Matrix& a, const char* who) {
    if (a.rows() != a.cols() || a.rows() < 1) {
        throw std::invalid_argument(std::string(who) + ": matrix must be square, d >= 1");
    }
}

inline bool is_hermitian(const Matrix& a, double tol) {
    if (a.rows() != a.cols()) return false;
    return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline Matrix hermitize(const Matrix& a) { return 0.5 * (a + a.adjoint()); }

// Trace norm Tr sqrt(A† A): the sum of singular values. For positive
// semidefinite A this equals Tr A.
inline double trace_norm(const Matrix& a) {
    require_square(a, "trace_norm");
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues().sum();
}

inline double trace_distance(const Matrix& a, const Matrix& b) {
    return 0.5 * trace_norm(a - b);
}

inline double real_trace(const Matrix& a) { return a.trace().real(); }

// Column-stacking vectorization; vec(A X B) = (Bᵀ ⊗ A) vec(X).
inline Vector vectorize(const Matrix& a) {
    return Eigen::Map<const Vector>(a.data(), a.size());
}

inline Matrix unvectorize(const Vector& v, Index d) {
    if (v.size() != d * d) throw std::invalid_argument("unvectorize: size mismatch");
    return Eigen::Map<const Matrix>(v.data(), d, d);
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    return Eigen::kroneckerProduct(a, b).eval();
}

// --------------------------- small operator zoo -----------------------------

// |i><j| in d dimensions
inline Matrix basis_op(Index d, Index i, Index j) {
    if (i < 0 || j < 0 || i >= d || j >= d) throw std::out_of_range("basis_op: index out of range");
    Matrix m = Matrix::Zero(d, d);
    m(i, j) = 1.0;
    return m;
}

inline Matrix projector(Index d, Index i) { return basis_op(d, i, i); }

inline Matrix sigma_x() {
    Matrix m(2, 2);
    m << 0.0, 1.0, 1.0, 0.0;
    return m;
}

inline Matrix sigma_y() {
    Matrix m(2, 2);
    m << 0.0, Complex(0.0, -1.0), Complex(0.0, 1.0), 0.0;
    return m;
}

inline Matrix sigma_z() {
    Matrix m(2, 2);
    m << 1.0, 0.0, 0.0, -1.0;
    return m;
}

// Qubit basis convention used by the fixtures: index 0 = excited, 1 = ground.
// sigma_minus |e> = |g>.
inline Matrix sigma_minus() { return basis_op(2, 1, 0); }

inline Matrix sigma_plus() { return basis_op(2, 0, 1); }

} // namespace qcm
