// Command-line front end: parses market description files, dispatches the
// solve / frontier / simulate / feasibility / mutual-fund pipelines, writes
// CSV artifacts and a machine-readable JSON summary.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "regime_riccati/regime_riccati.hpp"

namespace rr = regime_riccati;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitNumeric = 3;

struct Options {
    std::string file;
    int grid_steps = 0;  // 0: take the value from the file
    std::string out_dir = ".";
    std::optional<double> x;
    std::optional<double> z;
    double rho = 0.5;
    int paths = 100000;
    std::uint64_t seed = 42;
    double dt_sim = 0.0;
    bool antithetic = false;
    bool dump_paths = false;
};

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void write_summary(const Options& opt, const json& summary) {
    std::cout << summary.dump(2) << std::endl;
    std::filesystem::create_directories(opt.out_dir);
    std::ofstream out(std::filesystem::path(opt.out_dir) / "summary.json");
    out << summary.dump(2) << "\n";
}

void write_file(const Options& opt, const std::string& name, auto&& writer) {
    std::filesystem::create_directories(opt.out_dir);
    std::ofstream out(std::filesystem::path(opt.out_dir) / name);
    writer(out);
}

rr::ProblemSpec load_and_validate(const Options& opt) {
    rr::ProblemSpec spec = rr::load_problem_file(opt.file, opt.grid_steps);
    const rr::ValidationReport report = rr::validate(spec);
    if (!report.ok()) {
        for (const auto& v : report.violations) std::cerr << "violation: " << v.message << "\n";
        throw rr::InvalidMarket("market file failed validation");
    }
    return spec;
}

int run_validate(const Options& opt) {
    rr::ProblemSpec spec = rr::load_problem_file(opt.file, opt.grid_steps);
    const rr::ValidationReport report = rr::validate(spec);
    if (!report.ok()) {
        for (const auto& v : report.violations) std::cerr << "violation: " << v.message << "\n";
        return kExitValidation;
    }
    std::cout << "OK" << std::endl;
    return kExitOk;
}

int run_solve(const Options& opt) {
    Stopwatch total;
    rr::ProblemSpec spec = load_and_validate(opt);
    Stopwatch solve_watch;
    auto sol = std::make_shared<rr::EsreSolution>(rr::solve_esre(spec));
    const double solve_ms = solve_watch.ms();

    write_file(opt, "esre.csv", [&](std::ostream& os) { rr::write_esre_csv(os, *sol); });
    rr::FeedbackPolicy policy(sol, spec.cone);
    write_file(opt, "policy.csv", [&](std::ostream& os) { rr::write_policy_csv(os, policy); });

    if (spec.is_mv()) {
        const rr::LinearSystemSolution psi =
            rr::solve_psi(spec.generator, spec.mv->r, spec.grid);
        write_file(opt, "psi.csv", [&](std::ostream& os) {
            rr::write_scalar_table_csv(os, spec.grid, psi.values, "psi");
        });
        if (spec.cone.kind() == rr::ConeKind::Full) {
            const rr::LinearSystemSolution H = rr::solve_risk_adjust(*sol, spec);
            const rr::ScalarTable K = rr::solve_K(*sol, H);
            write_file(opt, "H.csv", [&](std::ostream& os) {
                rr::write_scalar_table_csv(os, spec.grid, H.values, "H");
            });
            write_file(opt, "K.csv", [&](std::ostream& os) {
                rr::write_scalar_table_csv(os, spec.grid, K, "K");
            });
        }
    }

    const double x = opt.x.value_or(spec.x);
    json summary = {
        {"command", "solve"},
        {"P1_0", sol->P1[0][spec.i0]},
        {"P2_0", sol->P2[0][spec.i0]},
        {"optimal_value", rr::optimal_value(policy, x, spec.i0)},
        {"x", x},
        {"bound_M", sol->bound_M},
        {"timings", {{"solve_ms", solve_ms}, {"total_ms", total.ms()}}},
    };
    write_summary(opt, summary);
    return kExitOk;
}

int run_feasibility(const Options& opt) {
    Stopwatch total;
    rr::ProblemSpec spec = load_and_validate(opt);
    const rr::FeasibilityReport report = rr::check_feasibility(spec);
    json summary = {
        {"command", "feasibility"},
        {"feasible", report.feasible},
        {"mass", report.mass},
        {"timings", {{"total_ms", total.ms()}}},
    };
    if (report.witness)
        summary["witness"] = {{"t", report.witness->t}, {"regime", report.witness->regime}};
    else
        summary["witness"] = nullptr;
    write_summary(opt, summary);
    return report.feasible ? kExitOk : kExitInfeasible;
}

rr::FrontierResult compute_frontier(const rr::ProblemSpec& spec, const Options& opt,
                                    double x, double z) {
    switch (spec.cone.kind()) {
    case rr::ConeKind::Full:
        return rr::unconstrained_frontier(spec, x, z);
    case rr::ConeKind::Orthant:
        return rr::noshort_frontier(spec, x, z);
    default:
        throw rr::InvalidMarket("frontier analysis covers the full and orthant cones only");
    }
    (void)opt;
}

json frontier_summary(const rr::FrontierResult& fr) {
    json summary = {
        {"P1_0", fr.P1_0},
        {"P2_0", fr.P2_0},
        {"lambda_star", fr.lambda_star},
        {"a", fr.a},
        {"z0", fr.z0},
        {"v0", fr.v0},
        {"zmin", fr.zmin},
        {"varmin", fr.varmin},
        {"z", fr.z},
        {"x", fr.x},
        {"variance_at_z", fr.variance_at(fr.z)},
        {"feasible", true},
    };
    if (fr.kind == rr::FrontierKind::Unconstrained)
        summary["M"] = fr.M;
    else
        summary["rho2"] = fr.M;
    return summary;
}

int run_frontier(const Options& opt) {
    Stopwatch total;
    rr::ProblemSpec spec = load_and_validate(opt);
    if (!opt.z) throw rr::InvalidMarket("frontier needs a target return --z");
    const double x = opt.x.value_or(spec.x);

    Stopwatch solve_watch;
    const rr::FrontierResult fr = compute_frontier(spec, opt, x, *opt.z);
    const double solve_ms = solve_watch.ms();

    write_file(opt, "frontier.csv", [&](std::ostream& os) { rr::write_frontier_csv(os, fr); });
    write_file(opt, "policy.csv",
               [&](std::ostream& os) { rr::write_policy_csv(os, fr.policy); });

    json summary = frontier_summary(fr);
    summary["command"] = "frontier";
    summary["timings"] = {{"solve_ms", solve_ms}, {"total_ms", total.ms()}};
    write_summary(opt, summary);
    return kExitOk;
}

int run_simulate(const Options& opt) {
    Stopwatch total;
    rr::ProblemSpec spec = load_and_validate(opt);
    const double x = opt.x.value_or(spec.x);
    spec.x = x;

    rr::SimConfig sim;
    sim.n_paths = opt.paths;
    sim.master_seed = opt.seed;
    sim.dt_sim = opt.dt_sim;
    sim.antithetic = opt.antithetic;

    std::vector<rr::PathRecord> records;
    std::vector<rr::PathRecord>* dump = opt.dump_paths ? &records : nullptr;

    json summary = {{"command", "simulate"}, {"x", x}};
    Stopwatch solve_watch;
    rr::SimulationReport report;
    if (spec.is_mv() && opt.z) {
        const rr::FrontierResult fr = compute_frontier(spec, opt, x, *opt.z);
        report = rr::simulate_wealth(fr.policy, spec, sim, dump);
        summary.update(frontier_summary(fr));
        summary["analytic_variance"] = fr.variance_at(*opt.z);
    } else {
        auto sol = std::make_shared<rr::EsreSolution>(rr::solve_esre(spec));
        rr::FeedbackPolicy policy(sol, spec.cone);
        report = rr::simulate_wealth(policy, spec, sim, dump);
        summary["P1_0"] = sol->P1[0][spec.i0];
        summary["P2_0"] = sol->P2[0][spec.i0];
        summary["optimal_value"] = rr::optimal_value(policy, x, spec.i0);
    }
    const double sim_ms = solve_watch.ms();

    summary["simulation"] = {
        {"mean_XT", report.mean_XT},       {"var_XT", report.var_XT},
        {"stderr_mean", report.stderr_mean}, {"stderr_var", report.stderr_var},
        {"cost_estimate", report.cost_estimate}, {"stderr_cost", report.stderr_cost},
        {"n_paths", report.n_paths},       {"dt_sim", report.dt_sim},
        {"seed", opt.seed},                {"antithetic", opt.antithetic},
    };
    summary["timings"] = {{"simulate_ms", sim_ms}, {"total_ms", total.ms()}};

    if (opt.dump_paths)
        write_file(opt, "paths.csv",
                   [&](std::ostream& os) { rr::write_paths_csv(os, records); });
    write_summary(opt, summary);
    return kExitOk;
}

int run_mutual_fund(const Options& opt) {
    Stopwatch total;
    rr::ProblemSpec spec = load_and_validate(opt);
    if (!opt.z) throw rr::InvalidMarket("mutual-fund needs a target return --z");
    const double x = opt.x.value_or(spec.x);

    const rr::FrontierResult fr = rr::unconstrained_frontier(spec, x, *opt.z);
    const rr::MutualFundResult mf = rr::mutual_fund(fr, *opt.z, opt.rho);

    write_file(opt, "policy.csv",
               [&](std::ostream& os) { rr::write_policy_csv(os, mf.policy); });

    json summary = frontier_summary(fr);
    summary["command"] = "mutual-fund";
    summary["rho"] = opt.rho;
    summary["expected_return"] = mf.expected_return;
    summary["max_affinity_gap"] = mf.max_affinity_gap;
    summary["timings"] = {{"total_ms", total.ms()}};
    write_summary(opt, summary);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cone-constrained LQ control and mean-variance frontiers "
                 "under Markov regime switching"};
    app.require_subcommand(1);

    Options opt;
    std::string command;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("file", opt.file, "market description file (TOML)")
            ->required();
        sub->add_option("--grid-steps", opt.grid_steps,
                        "override the solver grid step count");
        sub->add_option("--out-dir", opt.out_dir, "directory for CSV/JSON artifacts");
        sub->add_option("--x", opt.x, "initial state/wealth (defaults to the file value)");
    };

    auto* validate_cmd = app.add_subcommand("validate", "check a market file");
    validate_cmd->add_option("file", opt.file)->required();
    validate_cmd->add_option("--grid-steps", opt.grid_steps);

    auto* solve_cmd = app.add_subcommand("solve", "solve the Riccati systems");
    add_common(solve_cmd);

    auto* frontier_cmd = app.add_subcommand("frontier", "compute the efficient frontier");
    add_common(frontier_cmd);
    frontier_cmd->add_option("--z", opt.z, "target expected terminal wealth")->required();

    auto* feasibility_cmd = app.add_subcommand("feasibility", "test target reachability");
    add_common(feasibility_cmd);

    auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo under the optimal rule");
    add_common(simulate_cmd);
    simulate_cmd->add_option("--z", opt.z, "frontier target (market problems)");
    simulate_cmd->add_option("--paths", opt.paths, "number of Monte Carlo paths");
    simulate_cmd->add_option("--seed", opt.seed, "master seed");
    simulate_cmd->add_option("--dt-sim", opt.dt_sim, "simulation step (divides the grid step)");
    simulate_cmd->add_flag("--antithetic", opt.antithetic, "antithetic variates");
    simulate_cmd->add_flag("--dump-paths", opt.dump_paths,
                           "write the first 1000 paths to paths.csv");

    auto* mutual_cmd = app.add_subcommand("mutual-fund", "two-fund decomposition");
    add_common(mutual_cmd);
    mutual_cmd->add_option("--z", opt.z, "target return of the second fund")->required();
    mutual_cmd->add_option("--rho", opt.rho, "mixing weight");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (validate_cmd->parsed()) return run_validate(opt);
        if (solve_cmd->parsed()) return run_solve(opt);
        if (frontier_cmd->parsed()) return run_frontier(opt);
        if (feasibility_cmd->parsed()) return run_feasibility(opt);
        if (simulate_cmd->parsed()) return run_simulate(opt);
        if (mutual_cmd->parsed()) return run_mutual_fund(opt);
    } catch (const rr::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const rr::InvalidMarket& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const rr::InvalidTarget& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const rr::Infeasible& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const rr::TargetBelowReference& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const rr::Error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitValidation;
}
