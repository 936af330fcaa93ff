// test_completeness.cpp — quasi-completeness classifier, purification
// hypothesis checker, purification experiment.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qcm/completeness.hpp"
#include "test_helpers.hpp"

#include <random>

using namespace qcm;

TEST_CASE("classifier: unobserved channel defeats quasi-completeness") {
    auto verdict = check_quasi_complete(test::dephasing_unobserved());
    CHECK_FALSE(verdict.quasi_complete);
    CHECK(verdict.reason == CompletenessReason::UnobservedChannelPresent);

    // A scalar unobserved operator contributes nothing to the generator and
    // must not trip the test.
    MeasurementModel scalar = test::amp_damp_diffusive();
    scalar.unobserved.push_back(0.7 * identity(2));
    auto v2 = check_quasi_complete(scalar);
    CHECK(v2.quasi_complete);
}

TEST_CASE("classifier: single-Kraus channel lands in the single-operator class") {
    auto verdict = check_quasi_complete(test::amp_damp_jump());
    REQUIRE(verdict.quasi_complete);
    REQUIRE(verdict.channels.size() == 1);
    CHECK(verdict.channels[0].cls == JumpClass::A1);

    // The effective operator reproduces the map on random states.
    std::mt19937_64 rng(8);
    const Matrix r = verdict.channels[0].effective_kraus;
    for (int it = 0; it < 20; ++it) {
        Matrix x = test::random_state(2, rng);
        Matrix via_r = r * x * r.adjoint();
        Matrix via_map = test::amp_damp_jump().jumps[0].apply(x);
        CHECK((via_r - via_map).norm() <= 1e-10);
    }
}

TEST_CASE("classifier: effect-times-projection channel") {
    auto verdict = check_quasi_complete(test::a2_jump());
    REQUIRE(verdict.quasi_complete);
    REQUIRE(verdict.channels.size() == 1);
    CHECK(verdict.channels[0].cls == JumpClass::A2);
    CHECK((verdict.channels[0].projection - test::ground()).norm() <= 1e-10);

    // Oracle: J[rho] = Tr{rho J*[1]} P on random pure states.
    std::mt19937_64 rng(15);
    const MeasurementModel a2 = test::a2_jump();
    const JumpChannel& jc = a2.jumps[0];
    const Matrix effect = jc.effect();
    for (int it = 0; it < 20; ++it) {
        Vector psi = test::random_pure(2, rng);
        Matrix rho = psi * psi.adjoint();
        Matrix expected = (rho * effect).trace().real() * test::ground();
        CHECK((jc.apply(rho) - expected).norm() <= 1e-10);
    }
}

TEST_CASE("classifier: genuinely mixing channel fails with a witness") {
    MeasurementModel bad;
    bad.dim = 2;
    bad.hamiltonian = Matrix::Zero(2, 2);
    // Two rank-one Kraus operators with different output rays.
    bad.jumps.push_back({{std::sqrt(0.5) * basis_op(2, 1, 0), std::sqrt(0.5) * basis_op(2, 0, 1)}, 1.0});
    auto verdict = check_quasi_complete(bad);
    CHECK_FALSE(verdict.quasi_complete);
    CHECK(verdict.reason == CompletenessReason::JumpNotPurePreserving);
    CHECK(verdict.failing_channel == 0);

    // The witness is a pure state with a genuinely mixed image.
    REQUIRE(verdict.witness_state.rows() == 2);
    const Matrix img = bad.jumps[0].apply(verdict.witness_state);
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(img / img.trace().real()));
    CHECK(es.eigenvalues().minCoeff() > 1e-6);
}

TEST_CASE("classifier is invariant under Kraus rephasing and channel permutation") {
    MeasurementModel base;
    base.dim = 2;
    base.hamiltonian = Matrix::Zero(2, 2);
    base.jumps.push_back({{std::sqrt(0.8) * sigma_minus()}, 1.0});
    base.jumps.push_back({{basis_op(2, 1, 0), basis_op(2, 1, 1)}, 0.5});

    auto v0 = check_quasi_complete(base);
    REQUIRE(v0.quasi_complete);
    REQUIRE(v0.channels.size() == 2);

    MeasurementModel rephased = base;
    rephased.jumps[0].kraus[0] *= std::polar(1.0, 1.234);
    rephased.jumps[1].kraus[1] *= std::polar(1.0, -2.1);
    auto v1 = check_quasi_complete(rephased);
    REQUIRE(v1.quasi_complete);
    CHECK(v1.channels[0].cls == v0.channels[0].cls);
    CHECK(v1.channels[1].cls == v0.channels[1].cls);

    MeasurementModel permuted = base;
    std::swap(permuted.jumps[0], permuted.jumps[1]);
    auto v2 = check_quasi_complete(permuted);
    REQUIRE(v2.quasi_complete);
    CHECK(v2.channels[0].cls == v0.channels[1].cls);
    CHECK(v2.channels[1].cls == v0.channels[0].cls);
}

TEST_CASE("purification hypothesis on qubits is exact") {
    auto qnd = check_purification_hypothesis(test::qnd_qubit(), {0.0});
    CHECK(qnd.hypothesis_holds);
    CHECK_FALSE(qnd.inconclusive);

    // No channels at all: the compression condition is vacuous, any rank-2
    // projection qualifies, and the hypothesis fails.
    MeasurementModel empty;
    empty.dim = 2;
    empty.hamiltonian = Matrix::Zero(2, 2);
    auto vac = check_purification_hypothesis(empty, {0.0});
    CHECK_FALSE(vac.hypothesis_holds);

    // A channel proportional to the identity compresses trivially.
    MeasurementModel scalar;
    scalar.dim = 2;
    scalar.hamiltonian = Matrix::Zero(2, 2);
    scalar.diffusive.push_back({0.5 * identity(2), 0.0});
    auto sc = check_purification_hypothesis(scalar, {0.0});
    CHECK_FALSE(sc.hypothesis_holds);
}

TEST_CASE("purification hypothesis search finds the d = 3 block witness") {
    MeasurementModel m;
    m.dim = 3;
    m.hamiltonian = Matrix::Zero(3, 3);
    Matrix l = Matrix::Zero(3, 3);
    l(0, 0) = 1.0;
    l(1, 1) = 1.0;
    m.diffusive.push_back({l, 0.0});

    auto rep = check_purification_hypothesis(m, {0.0}, 1e-9);
    REQUIRE(rep.per_time.size() == 1);
    CHECK_FALSE(rep.hypothesis_holds);
    REQUIRE(rep.per_time[0].search.found);

    // The found projection compresses L + L† to a scalar.
    const Matrix p = rep.per_time[0].search.projection;
    const Matrix a = l + l.adjoint();
    const double c = (p * a).trace().real() / 2.0;
    CHECK((p * a * p - c * p).norm() <= 1e-5);
    CHECK(c == doctest::Approx(2.0).epsilon(1e-4));

    // A single Hermitian operator always admits a compression on d >= 3
    // (two orthogonal vectors with a common Rayleigh quotient), so a
    // non-compressible family needs at least two generic operators.
    MeasurementModel single;
    single.dim = 3;
    single.hamiltonian = Matrix::Zero(3, 3);
    Matrix diag3 = Matrix::Zero(3, 3);
    diag3(0, 0) = 1.0;
    diag3(1, 1) = 0.4;
    diag3(2, 2) = -0.7;
    single.diffusive.push_back({diag3, 0.0});
    auto rep_single = check_purification_hypothesis(single, {0.0}, 1e-9);
    CHECK_FALSE(rep_single.hypothesis_holds);

    MeasurementModel pair = single;
    Matrix ladder = Matrix::Zero(3, 3);
    ladder(0, 1) = 1.0;
    ladder(1, 2) = 0.5;
    ladder(0, 2) = Complex(0.0, 0.3);
    pair.diffusive.push_back({ladder, 0.0});
    auto rep_pair = check_purification_hypothesis(pair, {0.0}, 1e-9);
    CHECK(rep_pair.hypothesis_holds);
}

TEST_CASE("modulated channels are checked across the modulation period") {
    MeasurementModel m = test::amp_damp_diffusive(1.0, 2.0 * M_PI);
    auto times = hypothesis_check_times(m, 2.0);
    CHECK(times.size() >= 16);
    auto rep = check_purification_hypothesis(m, times);
    CHECK(rep.hypothesis_holds);
    CHECK(rep.per_time.size() == times.size());
}

TEST_CASE("purification experiment: nondemolition measurement purifies") {
    TimeGrid grid(4.0, 1e-3, 500);
    PurificationOptions opt;
    opt.threads = 2;
    auto rep = purification_experiment(test::qnd_qubit(), test::maximally_mixed(), grid, 300, 77,
                                       opt);
    CHECK(rep.verdict.quasi_complete);
    CHECK(rep.hypothesis.hypothesis_holds);
    CHECK(rep.purified);
    CHECK(rep.final_window_deficit <= 0.05);
    // The deficit decays from its maximally mixed start.
    CHECK(rep.mean_purity_deficit.front() == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(rep.mean_purity_deficit.back() < 0.1 * rep.mean_purity_deficit.front());
}

TEST_CASE("purification experiment: pure initial states stay pure when quasi-complete") {
    TimeGrid grid(1.0, 1e-3, 100);
    std::mt19937_64 rng(61);
    for (const MeasurementModel& m : {test::qnd_qubit(), test::amp_damp_diffusive()}) {
        REQUIRE(check_quasi_complete(m).quasi_complete);
        for (int it = 0; it < 10; ++it) {
            Vector psi = test::random_pure(2, rng);
            auto rec = simulate_posterior(m, psi * psi.adjoint(), grid,
                                          derive_seed(3000, it, kPosteriorSalt));
            for (const auto& rho : rec.states) {
                CHECK(purity_deficit_unchecked(rho) <= 10.0 * kDefaultRepairTol);
            }
        }
    }
}

TEST_CASE("purification experiment: unobserved noise keeps the deficit away from zero") {
    TimeGrid grid(2.0, 1e-3, 500);
    auto rep = purification_experiment(test::qnd_flip(), test::maximally_mixed(), grid, 300, 19);
    CHECK_FALSE(rep.verdict.quasi_complete);
    CHECK_FALSE(rep.purified);
    CHECK(rep.final_window_deficit > 0.1);
}
