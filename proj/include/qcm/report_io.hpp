// report_io.hpp — CSV and JSON emission for every analysis product. Numbers
// are printed with 17 significant digits so the files round-trip exactly;
// each file carries the model hash, seed, grid, and tool version.

#pragma once

#include "qcm/completeness.hpp"
#include "qcm/info_report.hpp"
#include "qcm/model_io.hpp"
#include "qcm/moments.hpp"
#include "qcm/trajectories.hpp"
#include "qcm/version.hpp"

#include <json.hpp>

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace qcm {

struct RunMeta {
    std::uint64_t model_hash = 0;
    std::uint64_t seed = 0;
    double t_max = 0.0;
    double dt = 0.0;
    long stride = 1;
    long n = 0;
};

namespace detail {

inline std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string hex64(std::uint64_t x) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(x));
    return buf;
}

inline void csv_header(std::ostream& os, const char* schema, const RunMeta& meta) {
    os << "# qcm " << schema << " schema_version=" << kSchemaVersion << " version=" << kVersion
       << "\n";
    os << "# model_hash=" << hex64(meta.model_hash) << " seed=" << meta.seed
       << " t_max=" << fmt(meta.t_max) << " dt=" << fmt(meta.dt) << " stride=" << meta.stride
       << " n=" << meta.n << "\n";
}

inline void state_columns(std::ostream& os, Index d, const char* prefix) {
    for (Index r = 0; r < d; ++r) {
        for (Index c = 0; c < d; ++c) {
            os << "," << prefix << r << c << "_re," << prefix << r << c << "_im";
        }
    }
}

inline void state_values(std::ostream& os, const Matrix& m) {
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) {
            os << "," << fmt(m(r, c).real()) << "," << fmt(m(r, c).imag());
        }
    }
}

inline nlohmann::json meta_json(const RunMeta& meta) {
    return {{"schema_version", kSchemaVersion},
            {"version", kVersion},
            {"model_hash", hex64(meta.model_hash)},
            {"seed", meta.seed},
            {"t_max", meta.t_max},
            {"dt", meta.dt},
            {"stride", meta.stride},
            {"n", meta.n}};
}

} // namespace detail

// t, flattened state (re/im interleaved, row major)
inline void write_states_csv(std::ostream& os, const char* schema, const RunMeta& meta,
                             const std::vector<double>& times, const std::vector<Matrix>& states) {
    detail::csv_header(os, schema, meta);
    const Index d = states.front().rows();
    os << "t";
    detail::state_columns(os, d, "rho_");
    os << "\n";
    for (size_t s = 0; s < times.size(); ++s) {
        os << detail::fmt(times[s]);
        detail::state_values(os, states[s]);
        os << "\n";
    }
}

// Per-sample rows: time, state, weight (linear engine), outputs, signals.
inline void write_trajectory_csv(std::ostream& os, const RunMeta& meta,
                                 const TrajectoryRecord& rec) {
    detail::csv_header(os, rec.engine == Engine::Linear ? "trajectory-linear" : "trajectory-posterior",
                       meta);
    const Index d = rec.states.front().rows();
    const bool linear = rec.engine == Engine::Linear;
    os << "t";
    detail::state_columns(os, d, linear ? "sigma_" : "rho_");
    if (linear) os << ",weight";
    for (size_t j = 0; j < rec.wiener.size(); ++j) {
        os << ",wiener_" << j << ",shifted_" << j << ",m_" << j;
    }
    for (size_t k = 0; k < rec.counts.size(); ++k) {
        os << ",count_" << k << ",nu_" << k << ",nu_int_" << k;
    }
    os << "\n";
    for (size_t s = 0; s < rec.times.size(); ++s) {
        os << detail::fmt(rec.times[s]);
        detail::state_values(os, rec.states[s]);
        if (linear) os << "," << detail::fmt(rec.weights[s]);
        for (size_t j = 0; j < rec.wiener.size(); ++j) {
            os << "," << detail::fmt(rec.wiener[j][s]) << "," << detail::fmt(rec.shifted[j][s])
               << "," << detail::fmt(rec.signal_m[j][s]);
        }
        for (size_t k = 0; k < rec.counts.size(); ++k) {
            os << "," << rec.counts[k][s] << "," << detail::fmt(rec.signal_nu[k][s]) << ","
               << detail::fmt(rec.nu_integral[k][s]);
        }
        os << "\n";
    }
}

inline void write_ensemble_csv(std::ostream& os, const RunMeta& meta, const EnsembleSummary& sum) {
    detail::csv_header(os, sum.engine == Engine::Linear ? "ensemble-Q" : "ensemble-P", meta);
    const Index d = sum.mean_state.front().rows();
    os << "t";
    detail::state_columns(os, d, "mean_");
    os << ",se_state,mean_weight,se_weight,mean_purity_deficit,se_purity_deficit"
       << ",mean_entropy,se_entropy\n";
    auto se = [&](double v) { return sum.se_defined ? detail::fmt(v) : std::string(); };
    for (size_t s = 0; s < sum.times.size(); ++s) {
        os << detail::fmt(sum.times[s]);
        detail::state_values(os, sum.mean_state[s]);
        os << "," << se(sum.se_state[s]) << "," << detail::fmt(sum.mean_weight[s]) << ","
           << se(sum.se_weight[s]) << "," << detail::fmt(sum.mean_purity_deficit[s]) << ","
           << se(sum.se_purity_deficit[s]) << "," << detail::fmt(sum.mean_entropy[s]) << ","
           << se(sum.se_entropy[s]) << "\n";
    }
}

struct MomentsTable {
    // One row per (time, channel, kind).
    struct Row {
        double t = 0.0;
        int channel = 0;
        int kind = 1;  // 1 diffusive, 2 counting
        double mean = 0.0;
        double second_moment = 0.0;
        double mc_estimate = 0.0;
        double mc_se = 0.0;
    };
    std::vector<Row> rows;
};

inline void write_moments_csv(std::ostream& os, const RunMeta& meta, const MomentsTable& table) {
    detail::csv_header(os, "moments", meta);
    os << "t,channel,kind,mean,second_moment,mc_estimate,mc_se\n";
    for (const auto& r : table.rows) {
        os << detail::fmt(r.t) << "," << r.channel << "," << r.kind << "," << detail::fmt(r.mean)
           << "," << detail::fmt(r.second_moment) << "," << detail::fmt(r.mc_estimate) << ","
           << detail::fmt(r.mc_se) << "\n";
    }
}

inline void write_info_csv(std::ostream& os, const RunMeta& meta, const InfoReport& rep) {
    detail::csv_header(os, "info", meta);
    os << "t,s_eta,s_eta_hat,mean_entropy,se_entropy,mean_rel_entropy,se_rel_entropy"
       << ",balance_residual,info_gain,classical_info,se_classical_info,rate,rate_se"
       << ",mean_purity_deficit,se_purity_deficit\n";
    for (size_t s = 0; s < rep.times.size(); ++s) {
        os << detail::fmt(rep.times[s]) << "," << detail::fmt(rep.s_eta[s]) << ","
           << detail::fmt(rep.s_eta_hat[s]) << "," << detail::fmt(rep.mean_entropy[s]) << ","
           << detail::fmt(rep.se_entropy[s]) << "," << detail::fmt(rep.mean_rel_entropy[s]) << ","
           << detail::fmt(rep.se_rel_entropy[s]) << "," << detail::fmt(rep.balance_residual[s])
           << "," << detail::fmt(rep.info_gain[s]) << "," << detail::fmt(rep.classical_info[s])
           << "," << detail::fmt(rep.se_classical_info[s]) << "," << detail::fmt(rep.rate[s])
           << "," << detail::fmt(rep.rate_se[s]) << ","
           << detail::fmt(rep.mean_purity_deficit[s]) << ","
           << detail::fmt(rep.se_purity_deficit[s]) << "\n";
    }
}

inline nlohmann::json info_json(const RunMeta& meta, const InfoReport& rep,
                                const std::string& timestamp) {
    nlohmann::json j = detail::meta_json(meta);
    j["timestamp"] = timestamp;
    j["s_initial"] = rep.s_initial;
    j["decomposition_weights"] = rep.decomposition_weights;
    j["final"] = {{"t", rep.times.back()},
                  {"s_eta", rep.s_eta.back()},
                  {"mean_entropy", rep.mean_entropy.back()},
                  {"se_entropy", rep.se_entropy.back()},
                  {"info_gain", rep.info_gain.back()},
                  {"classical_info", rep.classical_info.back()},
                  {"se_classical_info", rep.se_classical_info.back()},
                  {"rate", rep.rate.back()},
                  {"rate_se", rep.rate_se.back()},
                  {"mean_purity_deficit", rep.mean_purity_deficit.back()}};
    j["max_balance_residual"] = 0.0;
    for (double r : rep.balance_residual) {
        j["max_balance_residual"] = std::max(j["max_balance_residual"].get<double>(), std::abs(r));
    }
    j["repair_count"] = rep.repair_count;
    j["max_repair"] = rep.max_repair;
    return j;
}

inline nlohmann::json verdict_json(const RunMeta& meta, const CompletenessVerdict& verdict,
                                   const PurificationHypothesisReport& hyp,
                                   const std::string& timestamp) {
    nlohmann::json j = detail::meta_json(meta);
    j["timestamp"] = timestamp;
    j["quasi_complete"] = verdict.quasi_complete;
    switch (verdict.reason) {
        case CompletenessReason::Passes: j["reason"] = "passes"; break;
        case CompletenessReason::UnobservedChannelPresent:
            j["reason"] = "unobserved channel present";
            break;
        case CompletenessReason::JumpNotPurePreserving:
            j["reason"] = "jump channel " + std::to_string(verdict.failing_channel) +
                          " not pure-preserving";
            break;
    }
    j["channels"] = nlohmann::json::array();
    for (size_t k = 0; k < verdict.channels.size(); ++k) {
        j["channels"].push_back(
            {{"index", k}, {"class", verdict.channels[k].cls == JumpClass::A1 ? "A1" : "A2"}});
    }
    j["hypothesis"] = {{"holds", hyp.hypothesis_holds}, {"inconclusive", hyp.inconclusive}};
    nlohmann::json per_time = nlohmann::json::array();
    for (const auto& entry : hyp.per_time) {
        per_time.push_back({{"t", entry.t},
                            {"projection_found", entry.search.found},
                            {"residual", entry.search.residual}});
    }
    j["hypothesis"]["per_time"] = std::move(per_time);
    return j;
}

inline nlohmann::json purification_json(const RunMeta& meta, const PurificationReport& rep,
                                        const std::string& timestamp) {
    nlohmann::json j = detail::meta_json(meta);
    j["timestamp"] = timestamp;
    j["quasi_complete"] = rep.verdict.quasi_complete;
    j["hypothesis_holds"] = rep.hypothesis.hypothesis_holds;
    j["hypothesis_inconclusive"] = rep.hypothesis.inconclusive;
    j["final_window_deficit"] = rep.final_window_deficit;
    j["threshold"] = rep.threshold;
    j["purified"] = rep.purified;
    j["s_initial"] = rep.s_initial;
    j["info_gain_final"] = rep.info_gain_final;
    return j;
}

} // namespace qcm
