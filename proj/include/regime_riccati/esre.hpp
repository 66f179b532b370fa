#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "regime_riccati/cone.hpp"
#include "regime_riccati/errors.hpp"
#include "regime_riccati/market.hpp"
#include "regime_riccati/types.hpp"

namespace regime_riccati {

/// Backward solution of the two coupled Riccati systems on the grid.
/// With coefficients deterministic in (t, regime) the martingale integrands
/// vanish, so the Lambda tables are stored as exact zeros.
struct EsreSolution {
    TimeGrid grid;
    int ell = 0, m = 0, n = 0;
    Regularity flag = Regularity::Standard;
    double bound_M = 0.0;  ///< a priori upper bound ((c l + 1) e^{c l T} - 1) / l
    double bound_c = 0.0;  ///< positive floor in the singular regime, else 0

    ScalarTable P1;  ///< [node][regime]
    ScalarTable P2;
    VectorTable Lambda1;  ///< identically zero, n
    VectorTable Lambda2;
    VectorTable vhat1;  ///< cached minimizers of the +linear-term Hamiltonian, m
    VectorTable vhat2;  ///< cached minimizers of the -linear-term Hamiltonian, m
};

/// Backward solution of one of the coupled linear systems (psi or the
/// risk-adjust discount H); eta is the zero martingale integrand.
struct LinearSystemSolution {
    TimeGrid grid;
    int ell = 0;
    ScalarTable values;
    VectorTable eta;  ///< identically zero, n
};

namespace detail {

/// Right-hand side of d P / d tau (tau = T - t) for one Riccati system:
///   g_i(P) = (2A_i + |C_i|^2) P_i + Q_i + H_sign(P_i, i) + sum_j q_ij P_j.
/// Coefficient rows are looked up per grid node; the Hamiltonian is evaluated
/// exactly through the cone module at every stage.
struct EsreRhs {
    const LqCoefficients* lq;
    const Generator* gen;
    const Cone* cone;
    HamiltonianSign sign;
    double hamiltonian_cap = 0.0;  ///< 0 disables the diagnostic lower cap

    VectorXd operator()(const VectorXd& p, int node) const {
        const int ell = gen->ell;
        VectorXd g(ell);
        for (int i = 0; i < ell; ++i) {
            HamiltonianInput in;
            in.P = p(i);
            in.Lambda = VectorXd::Zero(lq->n);
            in.B = lq->B[node][i];
            in.C = lq->C[node][i];
            in.D = lq->D[node][i];
            in.R = lq->R[node][i];
            const MatrixXd M = in.quadratic_matrix();
            if (min_eigenvalue(M) <= 1e-12)
                throw PositivityLost("R + P D'D lost positive definiteness at node " +
                                     std::to_string(node) + ", regime " + std::to_string(i) +
                                     " (P = " + std::to_string(p(i)) + ")");
            double h = h_min(in, *cone, sign).value;
            if (hamiltonian_cap > 0.0) h = std::max(h, -hamiltonian_cap);
            const double cc = lq->C[node][i].squaredNorm();
            g(i) = (2.0 * lq->A[node][i] + cc) * p(i) + lq->Qcost[node][i] + h +
                   gen->q.row(i).dot(p);
        }
        return g;
    }
};

/// One classical step of size h for y' = f(y, node), all stages using the
/// same coefficient node (tables are piecewise constant per interval).
template <typename Rhs>
VectorXd rk4_step(const Rhs& f, const VectorXd& y, double h, int node) {
    const VectorXd k1 = f(y, node);
    const VectorXd k2 = f(y + 0.5 * h * k1, node);
    const VectorXd k3 = f(y + 0.5 * h * k2, node);
    const VectorXd k4 = f(y + h * k3, node);
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Constant of the comparison bound: c >= 2A + |C|^2 + max |q_kj|, c >= Q, c >= G.
inline double comparison_constant(const LqCoefficients& lq, const Generator& gen) {
    double qmax = 0.0;
    for (int i = 0; i < gen.ell; ++i)
        for (int j = 0; j < gen.ell; ++j) qmax = std::max(qmax, std::abs(gen.q(i, j)));
    double c = 0.0;
    for (std::size_t k = 0; k < lq.A.size(); ++k)
        for (int i = 0; i < gen.ell; ++i) {
            c = std::max(c, 2.0 * lq.A[k][i] + lq.C[k][i].squaredNorm() + qmax);
            c = std::max(c, lq.Qcost[k][i]);
        }
    for (double g : lq.G) c = std::max(c, g);
    return std::max(c, 0.0);
}

inline double upper_bound(double c, int ell, double T) {
    return ((c * ell + 1.0) * std::exp(c * ell * T) - 1.0) / ell;
}

/// Positive floor for the singular regime: half of the decoupled per-regime
/// lower-bound solution min_i G(i) e^{-kappa T}, where kappa absorbs the
/// worst linear decay rate including the Hamiltonian estimate c_b^2 / delta.
inline double lower_bound_singular(const LqCoefficients& lq, const Generator& gen,
                                   double T) {
    double cb = 0.0;
    for (std::size_t k = 0; k < lq.B.size(); ++k)
        for (int i = 0; i < gen.ell; ++i)
            cb = std::max(cb, (lq.B[k][i] + lq.D[k][i].transpose() * lq.C[k][i]).norm());
    double kappa = 0.0;
    for (std::size_t k = 0; k < lq.A.size(); ++k)
        for (int i = 0; i < gen.ell; ++i) {
            const double rate = -(2.0 * lq.A[k][i] + lq.C[k][i].squaredNorm() +
                                  gen.q(i, i) - cb * cb / lq.delta);
            kappa = std::max(kappa, rate);
        }
    double gmin = lq.G.empty() ? 0.0 : *std::min_element(lq.G.begin(), lq.G.end());
    return 0.5 * gmin * std::exp(-kappa * T);
}

} // namespace detail

namespace diagnostics {

/// Diagnostic solve with the Hamiltonian clipped below at -cap. The clipped
/// generator dominates the exact one, so the result lies above the exact
/// solution and decreases toward it as the cap grows.
inline ScalarTable solve_p1_capped(const ProblemSpec& spec, double cap) {
    LqCoefficients storage;
    const LqCoefficients& lq = detail::lq_view(spec, storage);
    const Generator& gen = spec.generator;
    const int ell = gen.ell;
    const int n = spec.grid.n_steps;
    const double dt = spec.grid.dt();

    detail::EsreRhs rhs{&lq, &gen, &spec.cone, HamiltonianSign::Plus, cap};
    ScalarTable table(n + 1, std::vector<double>(ell));
    VectorXd y(ell);
    for (int i = 0; i < ell; ++i) y(i) = lq.G[i];
    for (int i = 0; i < ell; ++i) table[n][i] = y(i);
    for (int step = 1; step <= n; ++step) {
        const int node = n - step;
        y = detail::rk4_step(rhs, y, dt, node);
        for (int i = 0; i < ell; ++i) table[node][i] = y(i);
    }
    return table;
}

} // namespace diagnostics

/// Solve both coupled Riccati systems backward from P(T, i) = G(i) with fixed
/// step RK4, caching the Hamiltonian minimizers at every accepted node so the
/// feedback law can be read off without re-solving the cone problems.
inline EsreSolution solve_esre(const ProblemSpec& spec) {
    LqCoefficients storage;
    const LqCoefficients& lq = detail::lq_view(spec, storage);
    const Generator& gen = spec.generator;
    const int ell = gen.ell;
    const int n_steps = spec.grid.n_steps;
    const double dt = spec.grid.dt();

    EsreSolution sol;
    sol.grid = spec.grid;
    sol.ell = ell;
    sol.m = lq.m;
    sol.n = lq.n;
    sol.flag = lq.flag;
    const double c = detail::comparison_constant(lq, gen);
    sol.bound_M = detail::upper_bound(c, ell, spec.grid.T);
    sol.bound_c =
        lq.flag == Regularity::Singular ? detail::lower_bound_singular(lq, gen, spec.grid.T) : 0.0;

    sol.P1.assign(n_steps + 1, std::vector<double>(ell));
    sol.P2.assign(n_steps + 1, std::vector<double>(ell));
    sol.Lambda1.assign(n_steps + 1, std::vector<VectorXd>(ell, VectorXd::Zero(lq.n)));
    sol.Lambda2.assign(n_steps + 1, std::vector<VectorXd>(ell, VectorXd::Zero(lq.n)));
    sol.vhat1.assign(n_steps + 1, std::vector<VectorXd>(ell));
    sol.vhat2.assign(n_steps + 1, std::vector<VectorXd>(ell));

    detail::EsreRhs rhs1{&lq, &gen, &spec.cone, HamiltonianSign::Plus, 0.0};
    detail::EsreRhs rhs2{&lq, &gen, &spec.cone, HamiltonianSign::Minus, 0.0};

    VectorXd y1(ell), y2(ell);
    for (int i = 0; i < ell; ++i) y1(i) = y2(i) = lq.G[i];

    const double upper_tol = sol.bound_M * (1.0 + 1e-6) + 1e-12;
    auto accept = [&](const VectorXd& y1v, const VectorXd& y2v, int node) {
        for (int i = 0; i < ell; ++i) {
            for (double v : {y1v(i), y2v(i)}) {
                if (v < -1e-8 || v > upper_tol)
                    throw BoundViolated("P = " + std::to_string(v) + " outside [0, " +
                                        std::to_string(sol.bound_M) + "] at node " +
                                        std::to_string(node) + ", regime " + std::to_string(i));
            }
            sol.P1[node][i] = y1v(i);
            sol.P2[node][i] = y2v(i);

            HamiltonianInput in;
            in.Lambda = VectorXd::Zero(lq.n);
            in.B = lq.B[node][i];
            in.C = lq.C[node][i];
            in.D = lq.D[node][i];
            in.R = lq.R[node][i];
            for (double p : {y1v(i), y2v(i)}) {
                in.P = p;
                if (detail::min_eigenvalue(in.quadratic_matrix()) <= 1e-12)
                    throw PositivityLost("R + P D'D lost positive definiteness at node " +
                                         std::to_string(node) + ", regime " +
                                         std::to_string(i) + " (P = " + std::to_string(p) +
                                         ")");
            }
            in.P = y1v(i);
            sol.vhat1[node][i] = h_min(in, spec.cone, HamiltonianSign::Plus).minimizer;
            in.P = y2v(i);
            sol.vhat2[node][i] = h_min(in, spec.cone, HamiltonianSign::Minus).minimizer;
        }
    };

    accept(y1, y2, n_steps);
    for (int step = 1; step <= n_steps; ++step) {
        const int node = n_steps - step;  // coefficients of the interval being crossed
        y1 = detail::rk4_step(rhs1, y1, dt, node);
        y2 = detail::rk4_step(rhs2, y2, dt, node);
        accept(y1, y2, node);
    }
    return sol;
}

/// Backward solve of d psi(i) = -(r(i) psi(i) + sum_j q_ij psi(j)) dt with
/// psi(T, i) = 1. By the Feynman-Kac identity psi(t, i) is the conditional
/// expectation of exp(int_t^T r(s, alpha_s) ds) given alpha_t = i.
inline LinearSystemSolution solve_psi(const Generator& gen, const ScalarTable& r,
                                      const TimeGrid& grid) {
    const int ell = gen.ell;
    const int n_steps = grid.n_steps;
    const double dt = grid.dt();

    auto rhs = [&](const VectorXd& y, int node) {
        VectorXd g(ell);
        for (int i = 0; i < ell; ++i) g(i) = r[node][i] * y(i) + gen.q.row(i).dot(y);
        return g;
    };

    LinearSystemSolution sol;
    sol.grid = grid;
    sol.ell = ell;
    sol.values.assign(n_steps + 1, std::vector<double>(ell));
    sol.eta.assign(n_steps + 1, std::vector<VectorXd>(ell, VectorXd()));

    VectorXd y = VectorXd::Ones(ell);
    for (int i = 0; i < ell; ++i) sol.values[n_steps][i] = 1.0;
    for (int step = 1; step <= n_steps; ++step) {
        const int node = n_steps - step;
        y = detail::rk4_step(rhs, y, dt, node);
        for (int i = 0; i < ell; ++i) sol.values[node][i] = y(i);
    }
    return sol;
}

/// Backward solve of the risk-adjust system
///   d H(i) = [ r(i) H(i) - (1/P(i)) sum_{j != i} q_ij P(j) (H(j) - H(i)) ] dt,
/// H(T, i) = 1, with P the unconstrained Riccati solution of the same market.
/// P is re-integrated jointly with H so that every RK stage sees stage-exact
/// P values; the passed-in solution provides the division floor and a
/// consistency cross-check.
inline LinearSystemSolution solve_risk_adjust(const EsreSolution& p_sol,
                                              const ProblemSpec& spec) {
    if (!spec.mv) throw InvalidMarket("risk-adjust system needs market coefficients");
    LqCoefficients storage;
    const LqCoefficients& lq = detail::lq_view(spec, storage);
    const Generator& gen = spec.generator;
    const int ell = gen.ell;
    const int n_steps = spec.grid.n_steps;
    const double dt = spec.grid.dt();
    const Cone cone = Cone::full(lq.m);
    const double floor = p_sol.bound_c > 0.0 ? 0.5 * p_sol.bound_c : 1e-300;

    detail::EsreRhs rhs_p{&lq, &gen, &cone, HamiltonianSign::Plus, 0.0};
    auto rhs = [&](const VectorXd& y, int node) {
        const VectorXd p = y.head(ell);
        const VectorXd h = y.tail(ell);
        for (int i = 0; i < ell; ++i)
            if (p(i) < floor)
                throw DivisionGuard("P fell to " + std::to_string(p(i)) +
                                    " below the floor " + std::to_string(floor) +
                                    " in the risk-adjust solve");
        VectorXd g(2 * ell);
        g.head(ell) = rhs_p(p, node);
        for (int i = 0; i < ell; ++i) {
            double coupling = 0.0;
            for (int j = 0; j < ell; ++j)
                if (j != i) coupling += gen.q(i, j) * p(j) * (h(j) - h(i));
            g(ell + i) = -spec.mv->r[node][i] * h(i) + coupling / p(i);
        }
        return g;
    };

    LinearSystemSolution sol;
    sol.grid = spec.grid;
    sol.ell = ell;
    sol.values.assign(n_steps + 1, std::vector<double>(ell));
    sol.eta.assign(n_steps + 1, std::vector<VectorXd>(ell, VectorXd::Zero(lq.n)));

    VectorXd y(2 * ell);
    for (int i = 0; i < ell; ++i) {
        y(i) = lq.G[i];
        y(ell + i) = 1.0;
        sol.values[n_steps][i] = 1.0;
    }
    for (int step = 1; step <= n_steps; ++step) {
        const int node = n_steps - step;
        y = detail::rk4_step(rhs, y, dt, node);
        for (int i = 0; i < ell; ++i) {
            if (std::abs(y(i) - p_sol.P1[node][i]) > 1e-9 * (1.0 + std::abs(y(i))))
                throw DivisionGuard("risk-adjust P re-integration diverged from the "
                                    "supplied solution; mismatched problem?");
            sol.values[node][i] = y(ell + i);
        }
    }
    return sol;
}

/// K = P H, the change of variables the frontier formulas are written in.
inline ScalarTable solve_K(const EsreSolution& p_sol, const LinearSystemSolution& h_sol) {
    if (p_sol.grid.n_steps != h_sol.grid.n_steps)
        throw Error("P and H live on different grids");
    ScalarTable K(p_sol.P1.size(), std::vector<double>(p_sol.ell));
    for (std::size_t k = 0; k < p_sol.P1.size(); ++k)
        for (int i = 0; i < p_sol.ell; ++i) K[k][i] = p_sol.P1[k][i] * h_sol.values[k][i];
    return K;
}

/// Solve the same problem under two terminal weights G_low <= G_high and
/// check the solutions stay ordered nodewise. Exposed as a direct probe of
/// the solver's comparison-theorem monotonicity.
inline std::pair<EsreSolution, EsreSolution> comparison_probe(
    const ProblemSpec& spec, const std::vector<double>& G_low,
    const std::vector<double>& G_high) {
    if (!spec.lq) throw InvalidMarket("comparison probe expects explicit LQ coefficients");
    for (std::size_t i = 0; i < G_low.size(); ++i)
        if (G_low[i] > G_high[i])
            throw InvalidMarket("G_low must be below G_high pointwise");

    ProblemSpec lo = spec;
    lo.lq->G = G_low;
    ProblemSpec hi = spec;
    hi.lq->G = G_high;
    EsreSolution sol_lo = solve_esre(lo);
    EsreSolution sol_hi = solve_esre(hi);

    for (std::size_t k = 0; k < sol_lo.P1.size(); ++k)
        for (int i = 0; i < sol_lo.ell; ++i) {
            if (sol_lo.P1[k][i] > sol_hi.P1[k][i] + 1e-9 ||
                sol_lo.P2[k][i] > sol_hi.P2[k][i] + 1e-9)
                throw MonotonicityViolated("ordering lost at node " + std::to_string(k) +
                                           ", regime " + std::to_string(i));
        }
    return {std::move(sol_lo), std::move(sol_hi)};
}

} // namespace regime_riccati
