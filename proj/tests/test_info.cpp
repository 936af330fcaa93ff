// test_info.cpp — entropy functionals, information gain, classical
// information and its rate.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qcm/info_report.hpp"
#include "test_helpers.hpp"

#include <cmath>

using namespace qcm;

namespace {

// Closed-form oracles for the nondemolition qubit observed from the
// maximally mixed state (gamma = 1): the component weights solve
// dp± = ±2 p± dW~, so p± = exp(±2W~ - 2t) and everything reduces to
// one-dimensional Gaussian expectations.
double qnd_classical_info_oracle(double t) {
    return 4.0 * t - test::gaussian_expectation(
                         [](double w) {
                             // ln cosh with overflow-safe tail
                             const double a = std::abs(2.0 * w);
                             return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
                         },
                         2.0 * t, t);
}

double qnd_rate_oracle(double t) {
    return 2.0 * test::gaussian_expectation(
                     [](double w) {
                         const double d = 1.0 - std::tanh(2.0 * w);
                         return d * d;
                     },
                     2.0 * t, t);
}

} // namespace

TEST_CASE("entropy functionals on reference states") {
    CHECK(von_neumann_entropy(test::excited()) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(von_neumann_entropy(test::maximally_mixed()) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    Matrix d(2, 2);
    d << 0.7, 0.0, 0.0, 0.3;
    CHECK(von_neumann_entropy(d) == doctest::Approx(0.6108643020548935).epsilon(1e-12));

    CHECK(purity_deficit(test::excited()) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(purity_deficit(test::maximally_mixed()) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(purity_deficit(d) == doctest::Approx(0.42).epsilon(1e-14));
}

TEST_CASE("relative entropy: zero on equal states, ln 2 against the mixed state, divergence") {
    Matrix d(2, 2);
    d << 0.7, 0.0, 0.0, 0.3;
    CHECK(relative_entropy(d, d) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(relative_entropy(test::excited(), test::maximally_mixed()) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(std::isinf(relative_entropy(test::excited(), test::ground())));
    CHECK(relative_entropy(test::maximally_mixed(), d) > 0.0);
}

TEST_CASE("purity deficit stays within its dimensional bounds") {
    std::mt19937_64 rng(23);
    for (int it = 0; it < 40; ++it) {
        const Index dim = 2 + it % 3;
        const double p = purity_deficit(test::random_state(dim, rng));
        CHECK(p >= 0.0);
        CHECK(p <= (dim - 1.0) / dim + 1e-12);
    }
}

TEST_CASE("classical information vanishes identically for pure initial states") {
    MeasurementModel m = test::amp_damp_diffusive();
    TimeGrid grid(0.5, 1e-3, 100);
    auto ci = classical_information(m, test::plus_state(), grid, 50, 3);
    CHECK(ci.weights.size() == 1);
    for (double v : ci.value) CHECK(v == 0.0);
    for (double r : ci.rate) CHECK(r == 0.0);

    // Counting channels exercise the intensity bracket, which vanishes when
    // the component intensity equals the mixture intensity.
    MeasurementModel jm = test::amp_damp_jump();
    auto cij = classical_information(jm, test::excited(), grid, 50, 3);
    for (double v : cij.value) CHECK(v == 0.0);
    for (double r : cij.rate) CHECK(r == 0.0);
    for (long e : cij.rate_excluded) CHECK(e == 0);
}

TEST_CASE("classical information of the nondemolition qubit matches the Gaussian oracle") {
    MeasurementModel m = test::qnd_qubit();
    TimeGrid grid(0.8, 1e-3, 100);
    const long n = 600;
    auto ci = classical_information(m, test::maximally_mixed(), grid, n, 314);

    CHECK(ci.value.front() == doctest::Approx(0.0).epsilon(1e-12));
    for (size_t s = 0; s < ci.times.size(); ++s) {
        CHECK(ci.value[s] >= -3.0 * ci.se[s] - 1e-12);
        const double oracle = qnd_classical_info_oracle(ci.times[s]);
        CHECK(std::abs(ci.value[s] - oracle) <= 3.5 * ci.se[s] + 5e-3);
    }
    // Non-decreasing within noise.
    for (size_t s = 1; s < ci.times.size(); ++s) {
        CHECK(ci.value[s] >= ci.value[s - 1] - 3.0 * std::hypot(ci.se[s], ci.se[s - 1]) - 1e-3);
    }
}

TEST_CASE("information growth rate: Gaussian oracle and finite differences") {
    MeasurementModel m = test::qnd_qubit();
    TimeGrid grid(0.8, 1e-3, 50);  // samples every 0.05
    const long n = 1500;
    InfoOptions opt;
    opt.fd_center = 0.5;
    opt.fd_halfwidth = 0.15;
    auto ci = classical_information(m, test::maximally_mixed(), grid, n, 197, opt);

    const size_t mid = 10;  // t = 0.5
    REQUIRE(ci.times[mid] == doctest::Approx(0.5));
    const double oracle = qnd_rate_oracle(0.5);
    CHECK(std::abs(ci.rate[mid] - oracle) <= 3.5 * ci.rate_se[mid] + 0.01);
    CHECK(ci.rate[mid] >= -3.0 * ci.rate_se[mid]);

    // Paired centered difference: the discrepancy carries its own SE.
    REQUIRE(ci.fd_defined);
    CHECK(std::abs(ci.rate_minus_fd) <= 3.5 * ci.rate_minus_fd_se + 0.02 * std::abs(ci.rate[mid]));

    auto point = classical_information_rate(m, test::maximally_mixed(), 0.5, n, 197);
    CHECK(point.rate == doctest::Approx(ci.rate[mid]).epsilon(0.05));
}

TEST_CASE("the two reference-measure forms of c-I coincide on the same samples") {
    MeasurementModel m = test::qnd_qubit();
    TimeGrid grid(0.4, 1e-3, 200);
    const long n = 60;
    const std::uint64_t seed = 2718;
    auto ci = classical_information(m, test::maximally_mixed(), grid, n, seed);

    auto dec = spectral_decompose(test::maximally_mixed());
    double line2 = 0.0;  // sum_a w_a E_Q[ w^a (ln w^a - ln w) ]
    for (long i = 0; i < n; ++i) {
        NoisePath noise = sample_noise_path(1, {}, grid, seed, i, kLinearSalt);
        auto mix = simulate_linear(m, test::maximally_mixed(), grid, noise);
        for (size_t a = 0; a < dec.weights.size(); ++a) {
            auto compo = simulate_linear(m, dec.components[a], grid, noise);
            const double wa = compo.weights.back();
            const double w = mix.weights.back();
            if (wa > 0.0 && w > 0.0) line2 += dec.weights[a] * wa * (std::log(wa) - std::log(w));
        }
    }
    line2 /= static_cast<double>(n);
    CHECK(line2 == doctest::Approx(ci.value.back()).epsilon(1e-10));
}

TEST_CASE("info_report: initial values, bounds, and the empirical entropy balance") {
    MeasurementModel m = test::qnd_qubit();
    TimeGrid grid(0.6, 1e-3, 150);
    const long n = 300;
    InfoOptions opt;
    opt.threads = 2;
    auto report = info_report(m, test::maximally_mixed(), grid, n, 4242, opt);

    CHECK(report.s_initial == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(report.info_gain.front() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(report.classical_info.front() == doctest::Approx(0.0).epsilon(1e-12));

    for (size_t s = 0; s < report.times.size(); ++s) {
        CHECK(report.info_gain[s] <= report.s_initial + 1e-10);
        // Maximally mixed is stationary here, so the gain is a mean relative
        // entropy and must be nonnegative.
        CHECK(report.info_gain[s] >= -3.0 * report.se_entropy[s] - 1e-10);
        CHECK(std::abs(report.balance_residual[s]) <= 1e-8);
        CHECK(report.mean_rel_entropy[s] >= 0.0);
        CHECK(report.s_eta[s] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    }

    // Quasi-complete model: information gain dominates classical information.
    for (size_t s = 0; s < report.times.size(); ++s) {
        const double slack =
            3.0 * std::hypot(report.se_entropy[s], report.se_classical_info[s]) + 1e-9;
        CHECK(report.info_gain[s] >= report.classical_info[s] - slack);
    }
}

TEST_CASE("info_report on a model with an unobserved channel keeps states mixed") {
    MeasurementModel m = test::qnd_flip();
    TimeGrid grid(1.0, 1e-3, 250);
    auto report = info_report(m, test::maximally_mixed(), grid, 200, 11);
    CHECK(report.mean_purity_deficit.back() > 0.1);
    CHECK(report.info_gain.back() < std::log(2.0) - 0.1);
}
