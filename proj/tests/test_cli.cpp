// test_cli.cpp — end-to-end checks of the command-line tool: artifacts,
// determinism, exit codes. The binary path arrives via QCM_CLI env.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string cli_path() {
    const char* env = std::getenv("QCM_CLI");
    REQUIRE_MESSAGE(env != nullptr, "QCM_CLI must point at the built binary");
    return env;
}

std::string models_dir() {
    const char* env = std::getenv("QCM_MODELS_DIR");
    return env ? env : "models";
}

int run(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE_MESSAGE(in.good(), "missing output file: " << p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// JSON summaries carry a timestamp; drop those lines before comparing.
std::string without_timestamp(const std::string& text) {
    std::stringstream in(text), out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find("\"timestamp\"") == std::string::npos) out << line << "\n";
    }
    return out.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "qcm_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("master: first row reproduces the input state") {
    const auto dir = fresh_dir("master");
    const int rc = run("master --model " + models_dir() + "/amp_damp_diffusive.json --t-max 0.5 " +
                       "--dt 1e-3 --stride 100 --out " + dir.string());
    REQUIRE(rc == 0);
    std::stringstream in(slurp(dir / "master.csv"));
    std::string line;
    std::getline(in, line);  // schema comment
    CHECK(line.find("# qcm master") == 0);
    std::getline(in, line);  // meta comment
    CHECK(line.find("model_hash=") != std::string::npos);
    std::getline(in, line);  // column names
    std::getline(in, line);  // t = 0 row
    CHECK(line == "0,0.5,0,0.5,0,0.5,0,0.5,0");
}

TEST_CASE("check: unobserved-channel fixture is rejected as not quasi-complete") {
    const auto dir = fresh_dir("check");
    REQUIRE(run("check --model " + models_dir() + "/dephasing_unobserved.json --out " +
                dir.string()) == 0);
    const std::string doc = slurp(dir / "check.json");
    CHECK(doc.find("\"quasi_complete\": false") != std::string::npos);
    CHECK(doc.find("unobserved channel present") != std::string::npos);

    REQUIRE(run("check --model " + models_dir() + "/amp_damp_jump.json --out " + dir.string()) ==
            0);
    const std::string doc2 = slurp(dir / "check.json");
    CHECK(doc2.find("\"quasi_complete\": true") != std::string::npos);
    CHECK(doc2.find("\"class\": \"A1\"") != std::string::npos);
}

TEST_CASE("identical invocations are byte-identical; parallelism does not matter") {
    const auto dir1 = fresh_dir("det1");
    const auto dir2 = fresh_dir("det2");
    const auto dir3 = fresh_dir("det3");
    const std::string common = "ensemble --model " + models_dir() +
                               "/mixed_qubit.json --t-max 0.4 --dt 1e-3 --stride 100 --n 120 "
                               "--seed 99 --engine posterior";
    REQUIRE(run(common + " --parallel 1 --out " + dir1.string()) == 0);
    REQUIRE(run(common + " --parallel 1 --out " + dir2.string()) == 0);
    REQUIRE(run(common + " --parallel 4 --out " + dir3.string()) == 0);
    const std::string a = slurp(dir1 / "ensemble.csv");
    CHECK(a == slurp(dir2 / "ensemble.csv"));
    CHECK(a == slurp(dir3 / "ensemble.csv"));
}

TEST_CASE("info and purify emit CSV plus JSON summaries") {
    const auto dir = fresh_dir("info");
    REQUIRE(run("info --model " + models_dir() + "/qnd_qubit.json --t-max 0.3 --dt 1e-3 "
                "--stride 100 --n 60 --seed 7 --parallel 2 --out " + dir.string()) == 0);
    const std::string csv = slurp(dir / "info.csv");
    CHECK(csv.find("info_gain,classical_info") != std::string::npos);
    const std::string json = slurp(dir / "info.json");
    CHECK(json.find("\"schema_version\"") != std::string::npos);
    CHECK(json.find("\"timestamp\"") != std::string::npos);

    const auto dir2 = fresh_dir("purify");
    REQUIRE(run("purify --model " + models_dir() + "/qnd_qubit.json --t-max 0.5 --dt 1e-3 "
                "--stride 100 --n 60 --seed 7 --out " + dir2.string()) == 0);
    CHECK(slurp(dir2 / "purify.csv").find("mean_purity_deficit") != std::string::npos);
    CHECK(slurp(dir2 / "purify.json").find("\"purified\"") != std::string::npos);

    // JSON determinism modulo the timestamp field.
    const auto dir3 = fresh_dir("purify2");
    REQUIRE(run("purify --model " + models_dir() + "/qnd_qubit.json --t-max 0.5 --dt 1e-3 "
                "--stride 100 --n 60 --seed 7 --out " + dir3.string()) == 0);
    CHECK(without_timestamp(slurp(dir2 / "purify.json")) ==
          without_timestamp(slurp(dir3 / "purify.json")));
}

TEST_CASE("traj and moments produce the documented columns") {
    const auto dir = fresh_dir("traj");
    REQUIRE(run("traj --model " + models_dir() + "/mixed_qubit.json --engine linear --t-max 0.2 "
                "--dt 1e-3 --stride 50 --out " + dir.string()) == 0);
    const std::string traj = slurp(dir / "traj.csv");
    CHECK(traj.find(",weight,wiener_0,shifted_0,m_0,count_0,nu_0,nu_int_0") != std::string::npos);

    REQUIRE(run("moments --model " + models_dir() + "/amp_damp_jump.json --t-max 0.3 --dt 1e-3 "
                "--stride 150 --n 80 --out " + dir.string()) == 0);
    const std::string moments = slurp(dir / "moments.csv");
    CHECK(moments.find("t,channel,kind,mean,second_moment,mc_estimate,mc_se") != std::string::npos);
}

TEST_CASE("exit codes: config 2, numeric 3, model 4") {
    CHECK(run("ensemble --model does_not_exist.json") == 4);
    const auto dir = fresh_dir("codes");
    CHECK(run("ensemble --model " + models_dir() + "/qnd_qubit.json --t-max 1 --dt 0.3 --out " +
              dir.string()) == 2);  // grid does not divide
    CHECK(run("nonsense") == 2);

    // Ill-formed model document.
    const fs::path bad = dir / "bad.json";
    std::ofstream(bad) << "{\"dim\": 2, \"H\": [[[0,0],[0.5,0]],[[0.4,0],[0,0]]]}";
    CHECK(run("master --model " + bad.string() + " --out " + dir.string()) == 4);

    // A counting intensity far above 0.1/dt trips the thinning guard.
    const fs::path hot = dir / "hot.json";
    std::ofstream(hot) << R"({"dim": 2, "H": [[[0,0],[0,0]],[[0,0],[0,0]]],
        "jumps": [{"kraus": [[[[0,0],[6,0]],[[6,0],[0,0]]]], "rate": 1}],
        "initial_state": [[[1,0],[0,0]],[[0,0],[0,0]]]})";
    CHECK(run("traj --model " + hot.string() + " --engine posterior --t-max 0.1 --dt 1e-2 --out " +
              dir.string()) == 3);
}
