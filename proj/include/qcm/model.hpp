// model.hpp — The measurement model: Hamiltonian, observed diffusive channels,
// unobserved channels, and counting (jump) channels in Kraus form.

#pragma once

#include "qcm/errors.hpp"
#include "qcm/matrix.hpp"

#include <Eigen/Eigenvalues>

#include <string>
#include <utility>
#include <vector>

namespace qcm {

// Homodyne-type channel with operator L and detector modulation frequency
// omega; the modulated operator is exp(i omega t) L.
struct DiffusiveChannel {
    Matrix op;
    double omega = 0.0;

    Complex phase(double t) const { return std::polar(1.0, omega * t); }
    Matrix modulated(double t) const { return phase(t) * op; }
};

// Counting channel: completely positive map J[rho] = sum_m R_m rho R_m† with
// reference-measure intensity rate > 0.
struct JumpChannel {
    std::vector<Matrix> kraus;
    double rate = 1.0;

    // J*[1] = sum_m R_m† R_m, independent of the state.
    Matrix effect() const {
        Matrix e = Matrix::Zero(kraus.front().rows(), kraus.front().cols());
        for (const Matrix& r : kraus) e += r.adjoint() * r;
        return e;
    }

    Matrix apply(const Matrix& x) const {
        Matrix y = Matrix::Zero(x.rows(), x.cols());
        for (const Matrix& r : kraus) y += r * x * r.adjoint();
        return y;
    }
};

// Applies a jump channel and also returns the (state-independent) effect.
inline std::pair<Matrix, Matrix> cp_apply(const JumpChannel& j, const Matrix& x) {
    require_square(x, "cp_apply");
    for (const Matrix& r : j.kraus) {
        if (r.rows() != x.rows() || r.cols() != x.cols()) {
            throw std::invalid_argument("cp_apply: Kraus operator dimension mismatch");
        }
    }
    return {j.apply(x), j.effect()};
}

struct MeasurementModel {
    Index dim = 0;
    Matrix hamiltonian;
    std::vector<DiffusiveChannel> diffusive;
    std::vector<Matrix> unobserved;
    std::vector<JumpChannel> jumps;
    std::string name;
    std::string description;

    void validate(double tol = 1e-9) const {
        if (dim < 1) throw ModelError("model: dim must be >= 1");
        auto check_dim = [&](const Matrix& m, const std::string& what) {
            if (m.rows() != dim || m.cols() != dim) {
                throw ModelError("model: " + what + " has dimension " +
                                 std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                 ", expected " + std::to_string(dim));
            }
        };
        check_dim(hamiltonian, "H");
        if (!is_hermitian(hamiltonian, tol)) throw ModelError("model: H is not Hermitian");
        for (size_t j = 0; j < diffusive.size(); ++j) {
            check_dim(diffusive[j].op, "diffusive[" + std::to_string(j) + "]");
        }
        for (size_t h = 0; h < unobserved.size(); ++h) {
            check_dim(unobserved[h], "unobserved[" + std::to_string(h) + "]");
        }
        for (size_t k = 0; k < jumps.size(); ++k) {
            const auto& jc = jumps[k];
            if (jc.kraus.empty()) throw ModelError("model: jumps[" + std::to_string(k) + "] has no Kraus operators");
            if (!(jc.rate > 0.0)) {
                throw ModelError("model: jumps[" + std::to_string(k) + "] rate must be > 0");
            }
            for (const Matrix& r : jc.kraus) check_dim(r, "jumps[" + std::to_string(k) + "] Kraus");
            Eigen::SelfAdjointEigenSolver<Matrix> es(jc.effect());
            if (es.eigenvalues().minCoeff() < -tol) {
                throw ModelError("model: jumps[" + std::to_string(k) + "] effect is not positive semidefinite");
            }
        }
    }
};

} // namespace qcm
