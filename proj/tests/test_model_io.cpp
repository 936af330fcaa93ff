// test_model_io.cpp — model document parsing, emission, hashing.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qcm/model_io.hpp"
#include "test_helpers.hpp"

#include <cstdlib>
#include <fstream>

using namespace qcm;

namespace {

std::string fixture_dir() {
    const char* env = std::getenv("QCM_MODELS_DIR");
    return env ? env : "models";
}

} // namespace

TEST_CASE("minimal qubit document parses") {
    const std::string doc = R"({
        "dim": 2,
        "H": [[[0,0],[0,0]],[[0,0],[0,0]]],
        "diffusive": [{"L": [[[0,0],[0,0]],[[1,0],[0,0]]], "omega": 0}]
    })";
    MeasurementModel m = parse_model(doc);
    CHECK(m.dim == 2);
    CHECK(m.diffusive.size() == 1);
    CHECK((m.diffusive[0].op - sigma_minus()).norm() == 0.0);
}

TEST_CASE("parse errors carry positions and categories") {
    CHECK_THROWS_AS(parse_model("{ not json"), ModelError);
    try {
        parse_model("{\n \"dim\": 2,\n \"H\": [[[0,0],[0,0]],[[0,0],[0,0]]\n");
    } catch (const ModelError& e) {
        CHECK(std::string(e.what()).find("model document") != std::string::npos);
    }

    // Non-Hermitian Hamiltonian.
    const std::string bad_h = R"({
        "dim": 2,
        "H": [[[0,0],[0.5,0]],[[0.4,0],[0,0]]]
    })";
    CHECK_THROWS_AS(parse_model(bad_h), ModelError);

    // Nonpositive reference intensity.
    const std::string bad_rate = R"({
        "dim": 2,
        "H": [[[0,0],[0,0]],[[0,0],[0,0]]],
        "jumps": [{"kraus": [[[[0,0],[0,0]],[[1,0],[0,0]]]], "rate": 0}]
    })";
    try {
        parse_model(bad_rate);
        CHECK(false);
    } catch (const ModelError& e) {
        CHECK(std::string(e.what()).find("/jumps/0/rate") != std::string::npos);
    }

    // Dimension mismatch gives the offending path.
    const std::string bad_dim = R"({
        "dim": 2,
        "H": [[[0,0],[0,0]],[[0,0],[0,0]]],
        "unobserved": [[[[0,0]],[[0,0]]]]
    })";
    try {
        parse_model(bad_dim);
        CHECK(false);
    } catch (const ModelError& e) {
        CHECK(std::string(e.what()).find("/unobserved/0") != std::string::npos);
    }
}

TEST_CASE("emit then parse round-trips bit-exactly") {
    std::mt19937_64 rng(99);
    MeasurementModel m = test::mixed_qubit();
    m.unobserved.push_back(test::random_hermitian(2, rng));
    m.name = "round trip";
    m.description = "irrational entries included";

    MeasurementModel back = parse_model(emit_model(m));
    CHECK(back.dim == m.dim);
    CHECK((back.hamiltonian - m.hamiltonian).norm() == 0.0);
    CHECK((back.diffusive[0].op - m.diffusive[0].op).norm() == 0.0);
    CHECK(back.diffusive[0].omega == m.diffusive[0].omega);
    CHECK((back.unobserved[0] - m.unobserved[0]).norm() == 0.0);
    CHECK((back.jumps[0].kraus[0] - m.jumps[0].kraus[0]).norm() == 0.0);
    CHECK(back.jumps[0].rate == m.jumps[0].rate);
    CHECK(back.name == m.name);

    CHECK(model_hash(back) == model_hash(m));
}

TEST_CASE("hash tracks semantics, not metadata") {
    MeasurementModel a = test::mixed_qubit();
    MeasurementModel b = a;
    b.name = "renamed";
    b.description = "different words";
    CHECK(model_hash(a) == model_hash(b));

    MeasurementModel c = a;
    c.jumps[0].rate += 1e-9;
    CHECK(model_hash(a) != model_hash(c));
}

TEST_CASE("shipped fixture files parse to the reference models") {
    struct Expect {
        const char* file;
        MeasurementModel model;
    };
    const std::vector<Expect> expects = {
        {"amp_damp_diffusive.json", test::amp_damp_diffusive()},
        {"amp_damp_jump.json", test::amp_damp_jump()},
        {"qnd_qubit.json", test::qnd_qubit()},
        {"mixed_qubit.json", test::mixed_qubit()},
        {"dephasing_unobserved.json", test::dephasing_unobserved()},
        {"a2_jump.json", test::a2_jump()},
        {"qnd_flip.json", test::qnd_flip()},
    };
    for (const auto& e : expects) {
        CAPTURE(e.file);
        MeasurementModel m = load_model_file(fixture_dir() + "/" + e.file);
        CHECK(m.dim == e.model.dim);
        CHECK((m.hamiltonian - e.model.hamiltonian).norm() <= 1e-15);
        REQUIRE(m.diffusive.size() == e.model.diffusive.size());
        for (size_t j = 0; j < m.diffusive.size(); ++j) {
            CHECK((m.diffusive[j].op - e.model.diffusive[j].op).norm() <= 1e-15);
            CHECK(m.diffusive[j].omega == e.model.diffusive[j].omega);
        }
        REQUIRE(m.unobserved.size() == e.model.unobserved.size());
        for (size_t h = 0; h < m.unobserved.size(); ++h) {
            CHECK((m.unobserved[h] - e.model.unobserved[h]).norm() <= 1e-15);
        }
        REQUIRE(m.jumps.size() == e.model.jumps.size());
        for (size_t k = 0; k < m.jumps.size(); ++k) {
            CHECK(m.jumps[k].rate == e.model.jumps[k].rate);
            REQUIRE(m.jumps[k].kraus.size() == e.model.jumps[k].kraus.size());
            for (size_t r = 0; r < m.jumps[k].kraus.size(); ++r) {
                CHECK((m.jumps[k].kraus[r] - e.model.jumps[k].kraus[r]).norm() <= 1e-15);
            }
        }
    }
}
