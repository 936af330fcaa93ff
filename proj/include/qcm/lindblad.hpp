// lindblad.hpp — Deterministic layer: generator pieces, superoperator matrices,
// master-equation evolution, semigroup propagator, and equilibrium states.
//
// The generator splits as L = L0 + L1, where L0 carries the Hamiltonian, the
// observed diffusive channels and the counting channels, and L1 the unobserved
// channels. The detector modulation phases cancel in L (exp(i w t) L rho
// L† exp(-i w t) = L rho L†), so the generator is time independent and uses
// the unmodulated channel operators.

#pragma once

#include "qcm/errors.hpp"
#include "qcm/matrix.hpp"
#include "qcm/model.hpp"
#include "qcm/state.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <vector>

namespace qcm {

enum class GeneratorPart { L0, L1, Full };

namespace detail {

inline Matrix dissipator(const Matrix& l, const Matrix& x) {
    return l * x * l.adjoint() - 0.5 * anticommutator(l.adjoint() * l, x);
}

inline Matrix apply_l0(const MeasurementModel& model, const Matrix& x) {
    Matrix y = -kI * commutator(model.hamiltonian, x);
    for (const auto& ch : model.diffusive) y += dissipator(ch.op, x);
    for (const auto& jc : model.jumps) {
        y += jc.apply(x) - 0.5 * anticommutator(jc.effect(), x);
    }
    return y;
}

inline Matrix apply_l1(const MeasurementModel& model, const Matrix& x) {
    Matrix y = Matrix::Zero(x.rows(), x.cols());
    for (const auto& s : model.unobserved) y += dissipator(s, x);
    return y;
}

} // namespace detail

inline Matrix apply_generator(const MeasurementModel& model, const Matrix& x,
                              GeneratorPart part = GeneratorPart::Full) {
    require_square(x, "apply_generator");
    if (x.rows() != model.dim) throw std::invalid_argument("apply_generator: dimension mismatch");
    switch (part) {
        case GeneratorPart::L0: return detail::apply_l0(model, x);
        case GeneratorPart::L1: return detail::apply_l1(model, x);
        case GeneratorPart::Full:
            // Kept as the sum of the two pieces so L == L0 + L1 holds bit-exactly.
            return detail::apply_l0(model, x) + detail::apply_l1(model, x);
    }
    throw std::invalid_argument("apply_generator: bad part");
}

// d²×d² matrix acting on column-stacked operators.
struct Superoperator {
    Index dim = 0;
    Matrix mat;

    Matrix apply(const Matrix& x) const { return unvectorize(mat * vectorize(x), dim); }
};

inline Superoperator generator_matrix(const MeasurementModel& model,
                                      GeneratorPart part = GeneratorPart::Full) {
    const Index d = model.dim;
    const Matrix id = identity(d);
    Matrix m = Matrix::Zero(d * d, d * d);

    auto add_dissipator = [&](const Matrix& l) {
        const Matrix ll = l.adjoint() * l;
        m += kron(l.conjugate(), l);
        m -= 0.5 * (kron(id, ll) + kron(ll.transpose(), id));
    };

    if (part == GeneratorPart::L0 || part == GeneratorPart::Full) {
        m += -kI * (kron(id, model.hamiltonian) - kron(model.hamiltonian.transpose(), id));
        for (const auto& ch : model.diffusive) add_dissipator(ch.op);
        for (const auto& jc : model.jumps) {
            for (const Matrix& r : jc.kraus) m += kron(r.conjugate(), r);
            const Matrix e = jc.effect();
            m -= 0.5 * (kron(id, e) + kron(e.transpose(), id));
        }
    }
    if (part == GeneratorPart::L1 || part == GeneratorPart::Full) {
        for (const auto& s : model.unobserved) add_dissipator(s);
    }
    return Superoperator{d, std::move(m)};
}

// exp(L tau) as a superoperator matrix.
inline Superoperator propagator(const MeasurementModel& model, double tau) {
    if (tau < 0.0) throw std::invalid_argument("propagator: tau must be >= 0");
    Superoperator gen = generator_matrix(model, GeneratorPart::Full);
    gen.mat = (gen.mat * tau).exp();
    return gen;
}

enum class MasterMethod { Auto, RungeKutta4, Propagator };

// A priori state at time t: d eta/dt = L[eta], eta_0 = rho0. Auto uses the
// matrix exponential for d² <= 1024 and RK4 stepping otherwise.
inline Matrix evolve_master(const MeasurementModel& model, const Matrix& rho0, double t,
                            double dt = 1e-3, MasterMethod method = MasterMethod::Auto,
                            double repair_tol = kDefaultStateTol) {
    if (t < 0.0) throw std::invalid_argument("evolve_master: t must be >= 0");
    Matrix rho = validate_state(rho0, repair_tol).matrix;
    if (t == 0.0) return rho;
    if (!(dt > 0.0)) throw std::invalid_argument("evolve_master: dt must be > 0");

    if (method == MasterMethod::Auto) {
        method = (model.dim * model.dim <= 1024) ? MasterMethod::Propagator
                                                 : MasterMethod::RungeKutta4;
    }
    if (method == MasterMethod::Propagator) {
        rho = propagator(model, t).apply(rho);
        return validate_state(rho, std::max(repair_tol, 1e-8)).matrix;
    }

    const long n = std::max(1L, std::lround(t / dt));
    const double h = t / static_cast<double>(n);
    for (long i = 0; i < n; ++i) {
        const Matrix k1 = apply_generator(model, rho);
        const Matrix k2 = apply_generator(model, rho + 0.5 * h * k1);
        const Matrix k3 = apply_generator(model, rho + 0.5 * h * k2);
        const Matrix k4 = apply_generator(model, rho + h * k3);
        rho = hermitize(rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        try {
            rho = validate_state(rho, repair_tol).matrix;
        } catch (const NumericError& e) {
            throw NumericError(std::string("evolve_master: ") + e.what() + "; reduce dt");
        }
    }
    return rho;
}

struct EquilibriumResult {
    bool unique = false;
    Matrix state;                // valid when unique
    std::vector<Matrix> basis;   // Hermitian basis of the stationary subspace
};

// Null space of the generator matrix intersected with Hermitian unit-trace
// positive matrices.
inline EquilibriumResult equilibrium_state(const MeasurementModel& model, double tol = 1e-9) {
    const Superoperator gen = generator_matrix(model, GeneratorPart::Full);
    Eigen::JacobiSVD<Matrix> svd(gen.mat, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double scale = sv.size() > 0 ? std::max(sv(0), 1.0) : 1.0;

    EquilibriumResult out;
    for (Index i = 0; i < sv.size(); ++i) {
        if (sv(i) <= tol * scale) {
            // Null space is adjoint-closed; keep Hermitian representatives.
            Matrix x = unvectorize(svd.matrixV().col(i), model.dim);
            Matrix xh = hermitize(x);
            Matrix xa = hermitize(kI * x);  // anti-Hermitian part, made Hermitian
            for (Matrix* cand : {&xh, &xa}) {
                if (cand->cwiseAbs().maxCoeff() < 1e-12) continue;
                // Deflate against basis already collected.
                Matrix r = *cand;
                for (const Matrix& b : out.basis) {
                    r -= b * (b.cwiseProduct(r.conjugate()).sum());
                }
                if (r.norm() > 1e-8) out.basis.push_back(r / r.norm());
            }
        }
    }
    if (out.basis.empty()) throw NumericError("equilibrium_state: empty null space at tol");

    if (out.basis.size() == 1) {
        Matrix x = out.basis.front();
        const double tr = real_trace(x);
        if (std::abs(tr) < 1e-10) {
            throw NumericError("equilibrium_state: stationary direction is traceless");
        }
        x /= tr;
        Eigen::SelfAdjointEigenSolver<Matrix> es(x);
        if (es.eigenvalues().minCoeff() < -1e-8) {
            throw NumericError("equilibrium_state: stationary direction is not positive");
        }
        out.unique = true;
        out.state = validate_state(x, 1e-7).matrix;
    }
    return out;
}

} // namespace qcm
