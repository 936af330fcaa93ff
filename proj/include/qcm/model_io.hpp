// model_io.hpp — Model documents: JSON parsing with positioned errors,
// canonical emission (bit-exact round trip), and a content hash.
//
// Document layout: complex entries are always [re, im] pairs in nested
// row-major arrays.
//
//   {
//     "name": "...", "description": "...",   // optional metadata
//     "dim": 2,
//     "H": [[[0,0],[0,0]], [[0,0],[0,0]]],
//     "diffusive": [ {"L": <matrix>, "omega": 0.0} ],
//     "unobserved": [ <matrix> ],
//     "jumps": [ {"kraus": [<matrix>], "rate": 1.0} ]
//   }

#pragma once

#include "qcm/errors.hpp"
#include "qcm/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

namespace qcm {

namespace detail {

using nlohmann::json;

inline Matrix parse_matrix(const json& j, Index dim, const std::string& where) {
    if (!j.is_array() || static_cast<Index>(j.size()) != dim) {
        throw ModelError(where + ": expected " + std::to_string(dim) + " rows");
    }
    Matrix m(dim, dim);
    for (Index r = 0; r < dim; ++r) {
        const json& row = j[r];
        if (!row.is_array() || static_cast<Index>(row.size()) != dim) {
            throw ModelError(where + "/" + std::to_string(r) + ": expected " +
                             std::to_string(dim) + " entries");
        }
        for (Index c = 0; c < dim; ++c) {
            const json& entry = row[c];
            if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number() ||
                !entry[1].is_number()) {
                throw ModelError(where + "/" + std::to_string(r) + "/" + std::to_string(c) +
                                 ": complex entries are [re, im] pairs");
            }
            m(r, c) = Complex(entry[0].get<double>(), entry[1].get<double>());
        }
    }
    return m;
}

inline json emit_matrix(const Matrix& m) {
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) {
            row.push_back(json::array({m(r, c).real(), m(r, c).imag()}));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace detail

inline MeasurementModel parse_model(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ModelError(std::string("model document: ") + e.what());
    }
    if (!doc.is_object()) throw ModelError("model document: top level must be an object");

    MeasurementModel m;
    if (!doc.contains("dim") || !doc["dim"].is_number_integer() || doc["dim"].get<long>() < 1) {
        throw ModelError("/dim: positive integer required");
    }
    m.dim = doc["dim"].get<long>();
    if (!doc.contains("H")) throw ModelError("/H: missing Hamiltonian");
    m.hamiltonian = detail::parse_matrix(doc["H"], m.dim, "/H");

    if (doc.contains("name")) m.name = doc["name"].get<std::string>();
    if (doc.contains("description")) m.description = doc["description"].get<std::string>();

    if (doc.contains("diffusive")) {
        const auto& arr = doc["diffusive"];
        if (!arr.is_array()) throw ModelError("/diffusive: expected an array");
        for (size_t i = 0; i < arr.size(); ++i) {
            const std::string where = "/diffusive/" + std::to_string(i);
            const auto& ch = arr[i];
            if (!ch.is_object() || !ch.contains("L")) throw ModelError(where + ": needs an L matrix");
            DiffusiveChannel out;
            out.op = detail::parse_matrix(ch["L"], m.dim, where + "/L");
            out.omega = ch.value("omega", 0.0);
            m.diffusive.push_back(std::move(out));
        }
    }
    if (doc.contains("unobserved")) {
        const auto& arr = doc["unobserved"];
        if (!arr.is_array()) throw ModelError("/unobserved: expected an array");
        for (size_t i = 0; i < arr.size(); ++i) {
            m.unobserved.push_back(
                detail::parse_matrix(arr[i], m.dim, "/unobserved/" + std::to_string(i)));
        }
    }
    if (doc.contains("jumps")) {
        const auto& arr = doc["jumps"];
        if (!arr.is_array()) throw ModelError("/jumps: expected an array");
        for (size_t i = 0; i < arr.size(); ++i) {
            const std::string where = "/jumps/" + std::to_string(i);
            const auto& ch = arr[i];
            if (!ch.is_object() || !ch.contains("kraus") || !ch["kraus"].is_array() ||
                ch["kraus"].empty()) {
                throw ModelError(where + ": needs a nonempty kraus array");
            }
            JumpChannel out;
            for (size_t r = 0; r < ch["kraus"].size(); ++r) {
                out.kraus.push_back(detail::parse_matrix(
                    ch["kraus"][r], m.dim, where + "/kraus/" + std::to_string(r)));
            }
            if (!ch.contains("rate") || !ch["rate"].is_number()) {
                throw ModelError(where + "/rate: number required");
            }
            out.rate = ch["rate"].get<double>();
            if (!(out.rate > 0.0)) throw ModelError(where + "/rate: must be > 0");
            m.jumps.push_back(std::move(out));
        }
    }

    try {
        m.validate();
    } catch (const ModelError& e) {
        throw ModelError(std::string("model document: ") + e.what());
    }
    return m;
}

inline std::string emit_model(const MeasurementModel& m) {
    nlohmann::json doc;
    if (!m.name.empty()) doc["name"] = m.name;
    if (!m.description.empty()) doc["description"] = m.description;
    doc["dim"] = static_cast<long>(m.dim);
    doc["H"] = detail::emit_matrix(m.hamiltonian);
    doc["diffusive"] = nlohmann::json::array();
    for (const auto& ch : m.diffusive) {
        doc["diffusive"].push_back({{"L", detail::emit_matrix(ch.op)}, {"omega", ch.omega}});
    }
    doc["unobserved"] = nlohmann::json::array();
    for (const auto& s : m.unobserved) doc["unobserved"].push_back(detail::emit_matrix(s));
    doc["jumps"] = nlohmann::json::array();
    for (const auto& jc : m.jumps) {
        nlohmann::json kraus = nlohmann::json::array();
        for (const auto& r : jc.kraus) kraus.push_back(detail::emit_matrix(r));
        doc["jumps"].push_back({{"kraus", std::move(kraus)}, {"rate", jc.rate}});
    }
    return doc.dump(2) + "\n";
}

inline MeasurementModel load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open model file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_model(buf.str());
}

// FNV-1a over the canonical serialization of the semantic fields (metadata
// excluded), so equal physics means equal hash.
inline std::uint64_t model_hash(const MeasurementModel& m) {
    MeasurementModel bare = m;
    bare.name.clear();
    bare.description.clear();
    const std::string canon = emit_model(bare);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace qcm
