#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "regime_riccati/errors.hpp"
#include "regime_riccati/market.hpp"
#include "regime_riccati/types.hpp"

namespace regime_riccati {

/// Monte Carlo run configuration. dt_sim must divide the solver grid step;
/// every path derives its own RNG streams from master_seed, so results do
/// not depend on execution order or worker count.
struct SimConfig {
    int n_paths = 100000;
    double dt_sim = 0.0;  ///< 0 means "use the solver grid step"
    std::uint64_t master_seed = 42;
    bool antithetic = false;
};

struct SimulationReport {
    double mean_XT = 0.0;
    double var_XT = 0.0;
    double stderr_mean = 0.0;
    double stderr_var = 0.0;
    double cost_estimate = 0.0;
    double stderr_cost = 0.0;
    int n_paths = 0;
    double dt_sim = 0.0;
};

/// One sampled trajectory, captured when path dumping is on.
struct PathRecord {
    int path_id = 0;
    std::vector<double> t;
    std::vector<int> regime;
    std::vector<double> X;
    std::vector<std::vector<double>> u;  ///< [sim node][component]
};

/// Exact-jump simulation of the chain sampled onto a uniform grid of step
/// dt_sim: holding times are exponential with rate -q_ii, jump targets drawn
/// from q_ij / (-q_ii). Node k carries the regime in force on [t_k, t_{k+1}).
inline std::vector<int> simulate_chain(const Generator& gen, int i0, double T,
                                       double dt_sim, std::uint64_t path_seed) {
    const int n_sim = static_cast<int>(std::llround(T / dt_sim));
    std::vector<int> regimes(n_sim + 1, i0);
    if (gen.ell == 1) return regimes;

    std::mt19937_64 rng(path_seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    double t = 0.0;
    int state = i0;
    int node = 0;
    while (true) {
        const double rate = -gen.q(state, state);
        double t_next;
        if (rate <= 0.0) {
            t_next = T + 1.0;  // absorbing
        } else {
            std::exponential_distribution<double> expo(rate);
            t_next = t + expo(rng);
        }
        // Fill nodes whose interval starts before the jump.
        while (node <= n_sim && node * dt_sim < t_next) {
            regimes[node] = state;
            ++node;
        }
        if (node > n_sim || t_next > T) break;
        t = t_next;
        // Jump distribution over the other states.
        double u = unif(rng) * rate;
        int target = state;
        for (int j = 0; j < gen.ell; ++j) {
            if (j == state) continue;
            u -= gen.q(state, j);
            if (u <= 0.0) { target = j; break; }
            target = j;  // numerical guard: fall through to the last candidate
        }
        state = target;
    }
    return regimes;
}

namespace detail {

/// Per-(node, regime) coefficient rows flattened for the hot loop.
struct SimTables {
    int ell = 0, m = 0, n = 0, n_steps = 0;
    double dt = 0.0;
    std::vector<double> A;       // [node*ell + i]
    std::vector<double> Qcost;   // [node*ell + i]
    std::vector<double> B;       // [(node*ell + i)*m + j]
    std::vector<double> C;       // [(node*ell + i)*n + j]
    std::vector<double> D;       // [(node*ell + i)*n*m + row*m + col], row-major n x m
    std::vector<double> R;       // [(node*ell + i)*m*m + ...]
    std::vector<double> G;       // [i]

    static SimTables build(const LqCoefficients& lq, const Generator& gen,
                           const TimeGrid& grid) {
        SimTables t;
        t.ell = gen.ell;
        t.m = lq.m;
        t.n = lq.n;
        t.n_steps = grid.n_steps;
        t.dt = grid.dt();
        const int cells = grid.n_nodes() * gen.ell;
        t.A.resize(cells);
        t.Qcost.resize(cells);
        t.B.resize(cells * lq.m);
        t.C.resize(cells * lq.n);
        t.D.resize(cells * lq.n * lq.m);
        t.R.resize(cells * lq.m * lq.m);
        t.G.resize(gen.ell);
        for (int i = 0; i < gen.ell; ++i) t.G[i] = lq.G[i];
        for (int k = 0; k < grid.n_nodes(); ++k)
            for (int i = 0; i < gen.ell; ++i) {
                const int cell = k * gen.ell + i;
                t.A[cell] = lq.A[k][i];
                t.Qcost[cell] = lq.Qcost[k][i];
                for (int j = 0; j < lq.m; ++j) t.B[cell * lq.m + j] = lq.B[k][i](j);
                for (int j = 0; j < lq.n; ++j) t.C[cell * lq.n + j] = lq.C[k][i](j);
                for (int r = 0; r < lq.n; ++r)
                    for (int c = 0; c < lq.m; ++c)
                        t.D[cell * lq.n * lq.m + r * lq.m + c] = lq.D[k][i](r, c);
                for (int r = 0; r < lq.m; ++r)
                    for (int c = 0; c < lq.m; ++c)
                        t.R[cell * lq.m * lq.m + r * lq.m + c] = lq.R[k][i](r, c);
            }
        return t;
    }
};

struct PathResult {
    double XT = 0.0;
    double cost = 0.0;
};

/// Euler-Maruyama along one realized chain path with supplied Gaussian
/// increments (scaled by sqrt(dt_sim)); sign flips them for the antithetic
/// mirror. Returns X(T) and the left-endpoint cost quadrature.
template <typename Policy>
PathResult run_path(const SimTables& tab, const Policy& policy, double x0,
                    const std::vector<int>& chain, const std::vector<double>& dW,
                    double sign, double dt_sim, int substeps, int path_id,
                    std::vector<double>& u_buf, std::vector<double>& du_buf,
                    PathRecord* record) {
    const int m = tab.m, n = tab.n, ell = tab.ell;
    double X = x0;
    double cost = 0.0;
    int sim_node = 0;
    for (int k = 0; k < tab.n_steps; ++k) {
        const int base_cell = k * ell;
        for (int s = 0; s < substeps; ++s, ++sim_node) {
            const int regime = chain[sim_node];
            const int cell = base_cell + regime;
            policy.eval(k, X, regime, u_buf.data());

            if (record) {
                record->t.push_back(sim_node * dt_sim);
                record->regime.push_back(regime);
                record->X.push_back(X);
                record->u.emplace_back(u_buf.begin(), u_buf.end());
            }

            double drift = tab.A[cell] * X;
            for (int j = 0; j < m; ++j) drift += tab.B[cell * m + j] * u_buf[j];

            double diffusion = 0.0;
            const double* Drow = &tab.D[cell * n * m];
            const double* Crow = &tab.C[cell * n];
            for (int r = 0; r < n; ++r) {
                double dr = Crow[r] * X;
                for (int c = 0; c < m; ++c) dr += Drow[r * m + c] * u_buf[c];
                diffusion += dr * sign * dW[sim_node * n + r];
            }

            double running = tab.Qcost[cell] * X * X;
            const double* Rrow = &tab.R[cell * m * m];
            for (int r = 0; r < m; ++r) {
                double acc = 0.0;
                for (int c = 0; c < m; ++c) acc += Rrow[r * m + c] * u_buf[c];
                du_buf[r] = acc;
            }
            for (int r = 0; r < m; ++r) running += u_buf[r] * du_buf[r];
            cost += running * dt_sim;

            X += drift * dt_sim + diffusion;
            if (std::abs(X) > 1e12)
                throw NumericalBlowup("path " + std::to_string(path_id) +
                                      " exceeded 1e12 at t = " +
                                      std::to_string((sim_node + 1) * dt_sim));
        }
    }
    const int regime_T = chain[sim_node];
    if (record) {
        policy.eval(tab.n_steps, X, regime_T, u_buf.data());
        record->t.push_back(sim_node * dt_sim);
        record->regime.push_back(regime_T);
        record->X.push_back(X);
        record->u.emplace_back(u_buf.begin(), u_buf.end());
    }
    cost += tab.G[regime_T] * X * X;
    return {X, cost};
}

struct Accumulator {
    // One entry per independent unit (a path, or an antithetic pair).
    std::vector<double> u;  // unit mean of X(T)
    std::vector<double> w;  // unit mean of X(T)^2
    std::vector<double> c;  // unit mean of cost
};

inline double sample_sd(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / (v.size() - 1));
}

} // namespace detail

/// Simulate the state/wealth equation under a feedback rule and aggregate
/// terminal moments plus the quadratic cost with standard errors. Paths are
/// seeded independently from master_seed and aggregated in index order, so a
/// given configuration is bit-reproducible for any worker count.
///
/// The policy must expose eval(solver_node, X, regime, double* u_out).
template <typename Policy>
SimulationReport simulate_wealth(const Policy& policy, const ProblemSpec& spec,
                                 const SimConfig& sim,
                                 std::vector<PathRecord>* dump = nullptr,
                                 int n_workers = 1) {
    if (sim.n_paths < 100) throw InvalidMarket("need at least 100 paths");
    LqCoefficients storage;
    const LqCoefficients& lq = detail::lq_view(spec, storage);
    const double dt = spec.grid.dt();
    const double dt_sim = sim.dt_sim > 0.0 ? sim.dt_sim : dt;
    const double ratio = dt / dt_sim;
    const int substeps = static_cast<int>(std::llround(ratio));
    if (substeps < 1 || std::abs(ratio - substeps) > 1e-9)
        throw InvalidMarket("dt_sim must divide the solver grid step");
    const double dt_eff = dt / substeps;
    const int n_sim = spec.grid.n_steps * substeps;

    const detail::SimTables tab = detail::SimTables::build(lq, spec.generator, spec.grid);

    const bool anti = sim.antithetic;
    if (anti && sim.n_paths % 2 != 0)
        throw InvalidMarket("antithetic runs need an even path count");
    const int n_units = anti ? sim.n_paths / 2 : sim.n_paths;

    detail::Accumulator acc;
    acc.u.resize(n_units);
    acc.w.resize(n_units);
    acc.c.resize(n_units);

    const int dump_cap = 1000;
    if (dump) dump->resize(std::min(sim.n_paths, dump_cap));

    std::exception_ptr failure;
    auto worker = [&](int unit_begin, int unit_end) {
        std::vector<double> u_buf(tab.m), du_buf(tab.m);
        std::vector<double> dW(static_cast<std::size_t>(n_sim) * tab.n);
        try {
            for (int unit = unit_begin; unit < unit_end; ++unit) {
                const std::uint64_t chain_seed =
                    detail::mix_seed(sim.master_seed, 2 * static_cast<std::uint64_t>(unit));
                const std::uint64_t noise_seed =
                    detail::mix_seed(sim.master_seed, 2 * static_cast<std::uint64_t>(unit) + 1);
                const std::vector<int> chain =
                    simulate_chain(spec.generator, spec.i0, spec.grid.T, dt_eff, chain_seed);

                std::mt19937_64 rng(noise_seed);
                std::normal_distribution<double> gauss(0.0, std::sqrt(dt_eff));
                for (auto& g : dW) g = gauss(rng);

                const int reps = anti ? 2 : 1;
                double su = 0.0, sw = 0.0, sc = 0.0;
                for (int r = 0; r < reps; ++r) {
                    const int path_id = anti ? 2 * unit + r : unit;
                    PathRecord* rec = nullptr;
                    if (dump && path_id < dump_cap && path_id < sim.n_paths) {
                        rec = &(*dump)[path_id];
                        rec->path_id = path_id;
                    }
                    const detail::PathResult pr =
                        detail::run_path(tab, policy, spec.x, chain, dW,
                                         r == 0 ? 1.0 : -1.0, dt_eff, substeps,
                                         path_id, u_buf, du_buf, rec);
                    su += pr.XT;
                    sw += pr.XT * pr.XT;
                    sc += pr.cost;
                }
                acc.u[unit] = su / reps;
                acc.w[unit] = sw / reps;
                acc.c[unit] = sc / reps;
            }
        } catch (...) {
            failure = std::current_exception();
        }
    };

    if (n_workers <= 1) {
        worker(0, n_units);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n_units + n_workers - 1) / n_workers;
        for (int w = 0; w < n_workers; ++w) {
            const int lo = w * chunk;
            const int hi = std::min(n_units, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(worker, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    SimulationReport rep;
    rep.n_paths = sim.n_paths;
    rep.dt_sim = dt_eff;
    double mu = 0.0, mw = 0.0, mc = 0.0;
    for (int j = 0; j < n_units; ++j) {
        mu += acc.u[j];
        mw += acc.w[j];
        mc += acc.c[j];
    }
    mu /= n_units;
    mw /= n_units;
    mc /= n_units;
    rep.mean_XT = mu;
    rep.var_XT = std::max(mw - mu * mu, 0.0);
    rep.cost_estimate = mc;
    rep.stderr_mean = detail::sample_sd(acc.u, mu) / std::sqrt(double(n_units));
    rep.stderr_cost = detail::sample_sd(acc.c, mc) / std::sqrt(double(n_units));
    // Delta method for Var = E[X^2] - (E[X])^2 over independent units.
    std::vector<double> g(n_units);
    for (int j = 0; j < n_units; ++j) g[j] = acc.w[j] - 2.0 * mu * acc.u[j];
    double mg = 0.0;
    for (double v : g) mg += v;
    mg /= n_units;
    rep.stderr_var = detail::sample_sd(g, mg) / std::sqrt(double(n_units));
    return rep;
}

/// Cost of a rule on a quadratic-cost problem: the sample mean of the
/// per-path cost quadrature with its standard error.
template <typename Policy>
std::pair<double, double> estimate_cost(const Policy& policy, const ProblemSpec& spec,
                                        const SimConfig& sim) {
    const SimulationReport rep = simulate_wealth(policy, spec, sim);
    return {rep.cost_estimate, rep.stderr_cost};
}

} // namespace regime_riccati
