// End-to-end checks of the command-line binary: exit codes, JSON summary
// content, and CSV artifacts, driven through std::system.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "test_markets.hpp"

using namespace regime_riccati;
using Catch::Approx;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = RR_CLI_PATH;
const std::string kMarkets = RR_MARKETS_DIR;

struct RunResult {
    int exit_code = -1;
    std::string stdout_text;
};

RunResult run_cli(const std::string& args, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const fs::path stdout_file = out_dir / "stdout.txt";
    const std::string cmd =
        kCli + " " + args + " > " + stdout_file.string() + " 2> " +
        (out_dir / "stderr.txt").string();
    const int raw = std::system(cmd.c_str());
    RunResult res;
    res.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(stdout_file);
    std::ostringstream buf;
    buf << in.rdbuf();
    res.stdout_text = buf.str();
    return res;
}

json summary_of(const fs::path& out_dir) {
    std::ifstream in(out_dir / "summary.json");
    REQUIRE(in.good());
    return json::parse(in);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "rr_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("validate accepts every shipped market") {
    const fs::path dir = fresh_dir("validate");
    for (const auto& entry : fs::directory_iterator(kMarkets)) {
        if (entry.path().extension() != ".toml") continue;
        const RunResult res = run_cli("validate " + entry.path().string(), dir);
        INFO(entry.path().string());
        CHECK(res.exit_code == 0);
        CHECK(res.stdout_text.find("OK") != std::string::npos);
    }
}

TEST_CASE("validate rejects a broken generator") {
    const fs::path dir = fresh_dir("validate_bad");
    const fs::path bad = dir / "bad.toml";
    {
        std::ofstream out(bad);
        out << "[generator]\nell = 1\nrows = [[0.5]]\n";
        out << "[grid]\nT = 1.0\nn_steps = 8\n[regularity]\ndelta = 0.01\n";
        out << "[cone]\nkind = \"full\"\n[initial]\nx = 1.0\ni0 = 0\n";
        out << "[[regime]]\nindex = 0\nr = 0.05\nmu = [0.1]\nsigma = [0.2]\n";
    }
    const RunResult res = run_cli("validate " + bad.string(), dir);
    CHECK(res.exit_code == 1);
}

TEST_CASE("missing or unparsable input exits with the validation code") {
    const fs::path dir = fresh_dir("missing");
    CHECK(run_cli("validate " + dir.string() + "/nope.toml", dir).exit_code == 1);
    CHECK(run_cli("frontier", dir).exit_code == 1);  // missing required args
}

TEST_CASE("frontier on the canonical market reports the closed-form slope") {
    const fs::path dir = fresh_dir("frontier");
    const RunResult res =
        run_cli("frontier " + kMarkets + "/single_regime.toml --x 1 --z 1.2 --out-dir " +
                    dir.string(),
                dir);
    REQUIRE(res.exit_code == 0);
    const json summary = summary_of(dir);
    CHECK(summary.at("M").get<double>() == Approx(0.221199).epsilon(1e-5));
    CHECK(summary.at("v0").get<double>() == Approx(0.0).margin(1e-10));
    CHECK(summary.at("zmin").get<double>() == Approx(std::exp(0.05)).epsilon(1e-9));
    CHECK(summary.at("feasible").get<bool>());
    CHECK(fs::exists(dir / "frontier.csv"));
    CHECK(fs::exists(dir / "policy.csv"));
}

TEST_CASE("feasibility exit codes distinguish reachable and unreachable targets") {
    const fs::path dir = fresh_dir("feasibility");
    CHECK(run_cli("feasibility " + kMarkets + "/noshort_negative_b.toml --out-dir " +
                      dir.string(),
                  dir)
              .exit_code == 2);
    CHECK(run_cli("feasibility " + kMarkets + "/noshort_two_regime.toml --out-dir " +
                      dir.string(),
                  dir)
              .exit_code == 0);
    const json summary = summary_of(dir);
    CHECK(summary.at("feasible").get<bool>());
    CHECK(summary.at("mass").get<double>() > 0.0);
}

TEST_CASE("solve artifacts round-trip against an in-process solve") {
    const fs::path dir = fresh_dir("solve");
    const RunResult res = run_cli(
        "solve " + kMarkets + "/lq_standard.toml --out-dir " + dir.string(), dir);
    REQUIRE(res.exit_code == 0);

    const ProblemSpec spec = load_problem_file(kMarkets + "/lq_standard.toml");
    const EsreSolution sol = solve_esre(spec);

    std::ifstream csv(dir / "esre.csv");
    REQUIRE(csv.good());
    std::vector<std::string> header;
    const auto rows = read_csv_numeric(csv, &header);
    REQUIRE(rows.size() == static_cast<std::size_t>(spec.grid.n_nodes() * 2));
    std::size_t idx = 0;
    for (int k = 0; k < spec.grid.n_nodes(); ++k)
        for (int i = 0; i < 2; ++i, ++idx) {
            CHECK(rows[idx][2] == sol.P1[k][i]);
            CHECK(rows[idx][3] == sol.P2[k][i]);
        }

    const json summary = summary_of(dir);
    CHECK(summary.at("P1_0").get<double>() == sol.P1[0][0]);
    CHECK(summary.at("P2_0").get<double>() == sol.P2[0][0]);
}

TEST_CASE("simulate writes a report and honors the path cap") {
    const fs::path dir = fresh_dir("simulate");
    const RunResult res = run_cli("simulate " + kMarkets +
                                      "/lq_standard.toml --paths 2000 --seed 9 "
                                      "--grid-steps 50 --dump-paths --out-dir " +
                                      dir.string(),
                                  dir);
    REQUIRE(res.exit_code == 0);
    const json summary = summary_of(dir);
    const auto& sim = summary.at("simulation");
    CHECK(sim.at("n_paths").get<int>() == 2000);
    CHECK(sim.at("stderr_mean").get<double>() > 0.0);
    const double cost = sim.at("cost_estimate").get<double>();
    const double se = sim.at("stderr_cost").get<double>();
    const double optimal = summary.at("optimal_value").get<double>();
    CHECK(std::abs(cost - optimal) < 6.0 * se);

    std::ifstream paths(dir / "paths.csv");
    REQUIRE(paths.good());
    std::vector<std::string> header;
    const auto rows = read_csv_numeric(paths, &header);
    CHECK(rows.size() == static_cast<std::size_t>(1000 * 51));
}

TEST_CASE("simulate follows the no-shorting frontier rule") {
    const fs::path dir = fresh_dir("simulate_ns");
    const RunResult res = run_cli("simulate " + kMarkets +
                                      "/noshort_two_regime.toml --z 1.15 --paths 20000 "
                                      "--seed 17 --antithetic --out-dir " +
                                      dir.string(),
                                  dir);
    REQUIRE(res.exit_code == 0);
    const json summary = summary_of(dir);
    CHECK(summary.contains("rho2"));
    const auto& sim = summary.at("simulation");
    const double mean = sim.at("mean_XT").get<double>();
    const double se = sim.at("stderr_mean").get<double>();
    CHECK(std::abs(mean - 1.15) < 5.0 * se);
    const double var = sim.at("var_XT").get<double>();
    const double analytic = summary.at("analytic_variance").get<double>();
    CHECK(std::abs(var - analytic) <
          std::max(5.0 * sim.at("stderr_var").get<double>(), 0.05 * analytic));
}

TEST_CASE("mutual-fund reports the blended return") {
    const fs::path dir = fresh_dir("mutualfund");
    const RunResult res = run_cli("mutual-fund " + kMarkets +
                                      "/two_regime.toml --z 1.4 --rho 0.25 --out-dir " +
                                      dir.string(),
                                  dir);
    REQUIRE(res.exit_code == 0);
    const json summary = summary_of(dir);
    const double zmin = summary.at("zmin").get<double>();
    CHECK(summary.at("expected_return").get<double>() ==
          Approx(0.75 * zmin + 0.25 * 1.4));
    CHECK(summary.at("max_affinity_gap").get<double>() <= 1e-10);
}

TEST_CASE("solve on a market writes the auxiliary system tables") {
    const fs::path dir = fresh_dir("solve_mv");
    const RunResult res = run_cli("solve " + kMarkets +
                                      "/single_regime.toml --grid-steps 100 --out-dir " +
                                      dir.string(),
                                  dir);
    REQUIRE(res.exit_code == 0);
    for (const char* name : {"psi.csv", "H.csv", "K.csv", "esre.csv", "policy.csv"}) {
        INFO(name);
        CHECK(fs::exists(dir / name));
    }
    std::ifstream h_csv(dir / "H.csv");
    std::vector<std::string> header;
    const auto rows = read_csv_numeric(h_csv, &header);
    REQUIRE(header == std::vector<std::string>{"t", "regime", "H"});
    REQUIRE(rows.size() == 101);
    CHECK(rows[0][2] == Approx(std::exp(-0.05)).epsilon(1e-9));
    CHECK(rows.back()[2] == 1.0);
}

TEST_CASE("numeric failures exit with code 3") {
    const fs::path dir = fresh_dir("numeric");
    const fs::path market = dir / "decay.toml";
    {
        // Valid singular-regime data whose value function decays below the
        // positivity guard before the horizon.
        std::ofstream out(market);
        out << "[generator]\nell = 1\nrows = [[0.0]]\n";
        out << "[grid]\nT = 1.0\nn_steps = 50\n";
        out << "[regularity]\ndelta = 0.01\nflag = \"singular\"\n";
        out << "[cone]\nkind = \"full\"\n[initial]\nx = 1.0\ni0 = 0\n";
        out << "[[regime]]\nindex = 0\nA = -20.0\nB = [0.0]\nC = [0.0]\nD = [1.0]\n";
        out << "Q = 0.0\nR = [0.0]\nG = 0.01\n";
    }
    CHECK(run_cli("validate " + market.string(), dir).exit_code == 0);
    CHECK(run_cli("solve " + market.string() + " --out-dir " + dir.string(), dir)
              .exit_code == 3);
}

TEST_CASE("frontier below the risk-free reference exits as infeasible") {
    const fs::path dir = fresh_dir("below_ref");
    const RunResult res = run_cli(
        "frontier " + kMarkets + "/single_regime.toml --z 0.5 --out-dir " + dir.string(),
        dir);
    CHECK(res.exit_code == 2);
}
