// qcm_cli.cpp — command-line front end: parses a model document, runs the
// requested analysis, and writes CSV/JSON artifacts into the output
// directory. Exit codes: 0 success, 2 configuration, 3 numerics, 4 model.

#include "qcm/completeness.hpp"
#include "qcm/info_report.hpp"
#include "qcm/lindblad.hpp"
#include "qcm/model_io.hpp"
#include "qcm/moments.hpp"
#include "qcm/report_io.hpp"
#include "qcm/trajectories.hpp"
#include "qcm/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace qcm;

struct Cli {
    std::string model_path;
    std::string initial_path;
    double t_max = 1.0;
    double dt = 1e-3;
    long stride = 10;
    long n = 1000;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    int parallel = 1;
    double repair_tol = kDefaultRepairTol;
    std::string engine = "posterior";
    double threshold = 0.05;
};

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

struct LoadedModel {
    MeasurementModel model;
    Matrix rho0;
    std::uint64_t hash = 0;
};

Matrix parse_state_json(const nlohmann::json& j, Index dim, const std::string& where) {
    const Matrix raw = qcm::detail::parse_matrix(j, dim, where);
    return validate_state(raw, 1e-6).matrix;
}

LoadedModel load_inputs(const Cli& cli) {
    LoadedModel out;
    std::ifstream in(cli.model_path);
    if (!in) throw ModelError("cannot open model file: " + cli.model_path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    out.model = parse_model(text);
    out.hash = model_hash(out.model);

    bool have_state = false;
    if (!cli.initial_path.empty()) {
        std::ifstream sin(cli.initial_path);
        if (!sin) throw ModelError("cannot open initial-state file: " + cli.initial_path);
        nlohmann::json sj;
        try {
            sin >> sj;
        } catch (const nlohmann::json::parse_error& e) {
            throw ModelError(std::string("initial-state file: ") + e.what());
        }
        out.rho0 = parse_state_json(sj, out.model.dim, "initial state");
        have_state = true;
    } else {
        const auto doc = nlohmann::json::parse(text);
        if (doc.contains("initial_state")) {
            out.rho0 = parse_state_json(doc["initial_state"], out.model.dim, "/initial_state");
            have_state = true;
        }
    }
    if (!have_state) {
        out.rho0 = Matrix::Identity(out.model.dim, out.model.dim) /
                   static_cast<double>(out.model.dim);
    }
    // Fold the initial state into the run hash so outputs are traceable.
    std::uint64_t h = out.hash;
    for (Index r = 0; r < out.model.dim; ++r) {
        for (Index c = 0; c < out.model.dim; ++c) {
            for (double part : {out.rho0(r, c).real(), out.rho0(r, c).imag()}) {
                std::uint64_t bits;
                std::memcpy(&bits, &part, sizeof(bits));
                h ^= bits;
                h *= 0x100000001b3ULL;
            }
        }
    }
    out.hash = h;
    return out;
}

RunMeta meta_for(const Cli& cli, const LoadedModel& lm) {
    RunMeta meta;
    meta.model_hash = lm.hash;
    meta.seed = cli.seed;
    meta.t_max = cli.t_max;
    meta.dt = cli.dt;
    meta.stride = cli.stride;
    meta.n = cli.n;
    return meta;
}

std::ofstream open_out(const Cli& cli, const std::string& name) {
    std::filesystem::create_directories(cli.out_dir);
    const auto path = std::filesystem::path(cli.out_dir) / name;
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    return os;
}

void write_json(const Cli& cli, const std::string& name, const nlohmann::json& j) {
    auto os = open_out(cli, name);
    os << j.dump(2) << "\n";
}

Engine engine_of(const Cli& cli) {
    if (cli.engine == "linear") return Engine::Linear;
    if (cli.engine == "posterior") return Engine::Posterior;
    throw ConfigError("engine must be 'linear' or 'posterior'");
}

void cmd_master(const Cli& cli) {
    const LoadedModel lm = load_inputs(cli);
    const TimeGrid grid(cli.t_max, cli.dt, cli.stride);
    std::vector<double> times;
    std::vector<Matrix> states;
    const Superoperator step = propagator(lm.model, cli.dt);
    Matrix eta = lm.rho0;
    long next = 0;
    const auto samples = grid.sample_steps();
    for (long s = 0; s <= grid.n_steps(); ++s) {
        if (next < static_cast<long>(samples.size()) && samples[next] == s) {
            times.push_back(grid.time_of(s));
            states.push_back(eta);
            ++next;
        }
        if (s < grid.n_steps()) eta = step.apply(eta);
    }
    auto os = open_out(cli, "master.csv");
    write_states_csv(os, "master", meta_for(cli, lm), times, states);
}

void cmd_traj(const Cli& cli) {
    const LoadedModel lm = load_inputs(cli);
    const TimeGrid grid(cli.t_max, cli.dt, cli.stride);
    TrajectoryRecord rec;
    if (engine_of(cli) == Engine::Linear) {
        std::vector<double> rates;
        for (const auto& jc : lm.model.jumps) rates.push_back(jc.rate);
        const NoisePath noise = sample_noise_path(static_cast<int>(lm.model.diffusive.size()),
                                                  rates, grid, cli.seed, 0, kLinearSalt);
        rec = simulate_linear(lm.model, lm.rho0, grid, noise);
    } else {
        PosteriorOptions popt;
        popt.repair_tol = cli.repair_tol;
        rec = simulate_posterior(lm.model, lm.rho0, grid, derive_seed(cli.seed, 0, kPosteriorSalt),
                                 popt);
    }
    auto os = open_out(cli, "traj.csv");
    RunMeta meta = meta_for(cli, lm);
    meta.n = 1;
    write_trajectory_csv(os, meta, rec);
}

void cmd_ensemble(const Cli& cli) {
    const LoadedModel lm = load_inputs(cli);
    const TimeGrid grid(cli.t_max, cli.dt, cli.stride);
    EnsembleOptions opt;
    opt.threads = cli.parallel;
    opt.posterior.repair_tol = cli.repair_tol;
    const auto sum = run_ensemble(lm.model, lm.rho0, grid, cli.n, engine_of(cli), cli.seed, opt);
    auto os = open_out(cli, "ensemble.csv");
    write_ensemble_csv(os, meta_for(cli, lm), sum);
    if (sum.unreliable) {
        std::cerr << "warning: " << sum.n_underflow
                  << " trajectories hit weight underflow; the run is marked unreliable\n";
    }
}

void cmd_moments(const Cli& cli) {
    const LoadedModel lm = load_inputs(cli);
    const TimeGrid grid(cli.t_max, cli.dt, cli.stride);
    const auto mc = mc_mean_outputs(lm.model, lm.rho0, grid, cli.n, cli.seed);

    MomentsTable table;
    for (size_t s = 0; s < mc.times.size(); ++s) {
        const double t = mc.times[s];
        MeanOutputs mo;
        if (t > 0.0) mo = mean_outputs(lm.model, lm.rho0, t, cli.dt);
        for (size_t j = 0; j < lm.model.diffusive.size(); ++j) {
            MomentsTable::Row row;
            row.t = t;
            row.channel = static_cast<int>(j);
            row.kind = 1;
            row.mean = t > 0.0 ? mo.wiener[j] : 0.0;
            row.second_moment =
                t > 0.0 ? second_moment(lm.model, lm.rho0, {static_cast<int>(j), OutputKind::Diffusive},
                                        {static_cast<int>(j), OutputKind::Diffusive}, t, t, cli.dt)
                        : 0.0;
            row.mc_estimate = mc.wiener_mean[j][s];
            row.mc_se = mc.wiener_se[j][s];
            table.rows.push_back(row);
        }
        for (size_t k = 0; k < lm.model.jumps.size(); ++k) {
            MomentsTable::Row row;
            row.t = t;
            row.channel = static_cast<int>(k);
            row.kind = 2;
            row.mean = t > 0.0 ? mo.counts[k] : 0.0;
            row.second_moment =
                t > 0.0 ? second_moment(lm.model, lm.rho0, {static_cast<int>(k), OutputKind::Counting},
                                        {static_cast<int>(k), OutputKind::Counting}, t, t, cli.dt)
                        : 0.0;
            row.mc_estimate = mc.count_mean[k][s];
            row.mc_se = mc.count_se[k][s];
            table.rows.push_back(row);
        }
    }
    auto os = open_out(cli, "moments.csv");
    write_moments_csv(os, meta_for(cli, lm), table);
}

void cmd_info(const Cli& cli) {
    const LoadedModel lm = load_inputs(cli);
    const TimeGrid grid(cli.t_max, cli.dt, cli.stride);
    InfoOptions opt;
    opt.threads = cli.parallel;
    opt.posterior.repair_tol = cli.repair_tol;
    const auto report = info_report(lm.model, lm.rho0, grid, cli.n, cli.seed, opt);
    auto os = open_out(cli, "info.csv");
    write_info_csv(os, meta_for(cli, lm), report);
    write_json(cli, "info.json", info_json(meta_for(cli, lm), report, timestamp_now()));
}

void cmd_check(const Cli& cli) {
    const LoadedModel lm = load_inputs(cli);
    const auto verdict = check_quasi_complete(lm.model);
    const auto hyp =
        check_purification_hypothesis(lm.model, hypothesis_check_times(lm.model, cli.t_max));
    write_json(cli, "check.json", verdict_json(meta_for(cli, lm), verdict, hyp, timestamp_now()));
}

void cmd_purify(const Cli& cli) {
    const LoadedModel lm = load_inputs(cli);
    const TimeGrid grid(cli.t_max, cli.dt, cli.stride);
    PurificationOptions opt;
    opt.threads = cli.parallel;
    opt.threshold = cli.threshold;
    opt.posterior.repair_tol = cli.repair_tol;
    const auto report = purification_experiment(lm.model, lm.rho0, grid, cli.n, cli.seed, opt);

    auto os = open_out(cli, "purify.csv");
    detail::csv_header(os, "purify", meta_for(cli, lm));
    os << "t,mean_purity_deficit,se_purity_deficit\n";
    for (size_t s = 0; s < report.times.size(); ++s) {
        os << detail::fmt(report.times[s]) << "," << detail::fmt(report.mean_purity_deficit[s])
           << "," << detail::fmt(report.se_purity_deficit[s]) << "\n";
    }
    write_json(cli, "purify.json",
               purification_json(meta_for(cli, lm), report, timestamp_now()));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"qcm — continuous quantum measurement simulator"};
    app.set_version_flag("--version", qcm::kVersion);
    app.require_subcommand(1);

    Cli cli;
    auto add_common = [&](CLI::App* cmd, bool needs_grid = true) {
        cmd->add_option("--model", cli.model_path, "model document (JSON)")->required();
        cmd->add_option("--initial", cli.initial_path, "initial state file (JSON matrix)");
        cmd->add_option("--out", cli.out_dir, "output directory");
        cmd->add_option("--seed", cli.seed, "master seed");
        if (needs_grid) {
            cmd->add_option("--t-max", cli.t_max, "horizon");
            cmd->add_option("--dt", cli.dt, "step size");
            cmd->add_option("--stride", cli.stride, "recording stride");
        }
        return cmd;
    };

    auto* master = add_common(app.add_subcommand("master", "a priori state evolution"));
    auto* traj = add_common(app.add_subcommand("traj", "single trajectory dump"));
    traj->add_option("--engine", cli.engine, "linear|posterior");
    traj->add_option("--repair-tol", cli.repair_tol, "posterior repair tolerance");
    auto* ensemble = add_common(app.add_subcommand("ensemble", "trajectory ensemble summary"));
    ensemble->add_option("--engine", cli.engine, "linear|posterior");
    ensemble->add_option("--n", cli.n, "trajectory count");
    ensemble->add_option("--parallel", cli.parallel, "worker threads");
    ensemble->add_option("--repair-tol", cli.repair_tol, "posterior repair tolerance");
    auto* moments = add_common(app.add_subcommand("moments", "output moment tables"));
    moments->add_option("--n", cli.n, "Monte Carlo trajectory count");
    auto* info = add_common(app.add_subcommand("info", "entropy/information report"));
    info->add_option("--n", cli.n, "trajectory count");
    info->add_option("--parallel", cli.parallel, "worker threads");
    info->add_option("--repair-tol", cli.repair_tol, "posterior repair tolerance");
    auto* check = add_common(app.add_subcommand("check", "structural completeness verdict"), false);
    check->add_option("--t-max", cli.t_max, "modulation horizon for the hypothesis scan");
    auto* purify = add_common(app.add_subcommand("purify", "asymptotic purification experiment"));
    purify->add_option("--n", cli.n, "trajectory count");
    purify->add_option("--parallel", cli.parallel, "worker threads");
    purify->add_option("--threshold", cli.threshold, "final purity-deficit threshold");
    purify->add_option("--repair-tol", cli.repair_tol, "posterior repair tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (master->parsed()) cmd_master(cli);
        else if (traj->parsed()) cmd_traj(cli);
        else if (ensemble->parsed()) cmd_ensemble(cli);
        else if (moments->parsed()) cmd_moments(cli);
        else if (info->parsed()) cmd_info(cli);
        else if (check->parsed()) cmd_check(cli);
        else if (purify->parsed()) cmd_purify(cli);
    } catch (const qcm::ConfigError& e) {
        std::cerr << "error(config): " << e.what() << "\n";
        return 2;
    } catch (const qcm::ModelError& e) {
        std::cerr << "error(model): " << e.what() << "\n";
        return 4;
    } catch (const qcm::NumericError& e) {
        std::cerr << "error(numeric): " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error(config): " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
