#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "regime_riccati/cone.hpp"
#include "regime_riccati/errors.hpp"
#include "regime_riccati/types.hpp"

namespace regime_riccati {

/// Coefficients of the controlled scalar state equation and quadratic cost,
/// tabulated per grid node and regime. Tables are piecewise constant in time
/// with left-node sampling.
struct LqCoefficients {
    int m = 0;  ///< control dimension
    int n = 0;  ///< driving noise dimension
    Regularity flag = Regularity::Standard;
    double delta = 0.0;  ///< uniformity constant the flag is checked against

    ScalarTable A;      ///< state drift rate
    VectorTable B;      ///< control drift loading, m
    VectorTable C;      ///< state diffusion loading, n
    MatrixTable D;      ///< control diffusion loading, n x m
    ScalarTable Qcost;  ///< running state weight, >= 0
    MatrixTable R;      ///< running control weight, m x m symmetric
    std::vector<double> G;  ///< terminal weight per regime, >= 0
};

/// Market primitives of the portfolio problem: interest rate, appreciation
/// rates and volatilities per grid node and regime.
struct MvMarket {
    int m = 0;  ///< number of risky assets
    int n = 0;  ///< noise dimension, m <= n
    double delta = 0.0;  ///< sigma sigma' >= delta I floor

    ScalarTable r;      ///< interest rate
    VectorTable mu;     ///< appreciation rates, m
    MatrixTable sigma;  ///< volatility, m x n

    /// Excess appreciation b = mu - r 1.
    VectorXd b(int node, int regime) const {
        return mu[node][regime].array() - r[node][regime];
    }
};

/// Full problem statement: chain, grid, coefficients, control cone, start.
struct ProblemSpec {
    Generator generator;
    TimeGrid grid;
    std::optional<LqCoefficients> lq;
    std::optional<MvMarket> mv;
    Cone cone = Cone::full(1);
    int i0 = 0;
    double x = 0.0;

    bool is_mv() const { return mv.has_value(); }
};

struct Violation {
    std::string message;
    int regime = -1;  ///< -1 when not tied to a regime
    int node = -1;    ///< -1 when not tied to a grid node
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

namespace detail {

template <typename Table>
inline bool table_shape_ok(const Table& t, int n_nodes, int ell) {
    if (static_cast<int>(t.size()) != n_nodes) return false;
    for (const auto& row : t)
        if (static_cast<int>(row.size()) != ell) return false;
    return true;
}

} // namespace detail

/// Structural and regularity checks over the whole problem. Every violated
/// invariant is reported with its location; nothing is thrown.
inline ValidationReport validate(const ProblemSpec& spec) {
    ValidationReport report;
    auto& out = report.violations;

    const int ell = spec.generator.ell;
    if (ell < 1) out.push_back({"generator needs at least one regime", -1, -1});
    const MatrixXd& q = spec.generator.q;
    if (q.rows() != ell || q.cols() != ell) {
        out.push_back({"generator matrix is not ell x ell", -1, -1});
        return report;
    }
    for (int i = 0; i < ell; ++i) {
        for (int j = 0; j < ell; ++j)
            if (i != j && q(i, j) < 0.0)
                out.push_back({"generator rate q[" + std::to_string(i) + "][" +
                                   std::to_string(j) + "] is negative",
                               i, -1});
        if (std::abs(q.row(i).sum()) > 1e-12)
            out.push_back({"generator row " + std::to_string(i) + " sum != 0", i, -1});
    }

    if (!(spec.grid.T > 0.0)) out.push_back({"horizon T must be positive", -1, -1});
    if (spec.grid.n_steps < 2) out.push_back({"grid needs n_steps >= 2", -1, -1});
    if (spec.i0 < 0 || spec.i0 >= ell)
        out.push_back({"initial regime index out of range", -1, -1});
    if (!std::isfinite(spec.x)) out.push_back({"initial state is not finite", -1, -1});

    if (spec.lq.has_value() == spec.mv.has_value()) {
        out.push_back({"problem must carry exactly one of LQ or market coefficients", -1, -1});
        return report;
    }
    const int n_nodes = spec.grid.n_nodes();

    if (spec.mv) {
        const MvMarket& mv = *spec.mv;
        if (mv.m < 1 || mv.n < 1) out.push_back({"market dimensions must be positive", -1, -1});
        if (mv.m > mv.n) out.push_back({"market needs m <= n", -1, -1});
        if (!(mv.delta > 0.0)) out.push_back({"market delta must be positive", -1, -1});
        if (!detail::table_shape_ok(mv.r, n_nodes, ell) ||
            !detail::table_shape_ok(mv.mu, n_nodes, ell) ||
            !detail::table_shape_ok(mv.sigma, n_nodes, ell)) {
            out.push_back({"market tables must be n_nodes x ell", -1, -1});
            return report;
        }
        for (int k = 0; k < n_nodes; ++k) {
            for (int i = 0; i < ell; ++i) {
                if (mv.mu[k][i].size() != mv.m)
                    out.push_back({"mu has wrong dimension", i, k});
                if (mv.sigma[k][i].rows() != mv.m || mv.sigma[k][i].cols() != mv.n)
                    out.push_back({"sigma has wrong dimensions", i, k});
                else {
                    const MatrixXd ss = mv.sigma[k][i] * mv.sigma[k][i].transpose();
                    if (detail::min_eigenvalue(ss) < mv.delta * (1.0 - 1e-9))
                        out.push_back({"sigma sigma' not uniformly positive definite, regime " +
                                           std::to_string(i),
                                       i, k});
                }
            }
        }
        if (spec.cone.dim() != mv.m)
            out.push_back({"cone dimension does not match number of assets", -1, -1});
    }

    if (spec.lq) {
        const LqCoefficients& lq = *spec.lq;
        if (lq.m < 1 || lq.n < 1) out.push_back({"control/noise dimensions must be positive", -1, -1});
        if (!(lq.delta > 0.0)) out.push_back({"regularity delta must be positive", -1, -1});
        if (!detail::table_shape_ok(lq.A, n_nodes, ell) ||
            !detail::table_shape_ok(lq.B, n_nodes, ell) ||
            !detail::table_shape_ok(lq.C, n_nodes, ell) ||
            !detail::table_shape_ok(lq.D, n_nodes, ell) ||
            !detail::table_shape_ok(lq.Qcost, n_nodes, ell) ||
            !detail::table_shape_ok(lq.R, n_nodes, ell) ||
            static_cast<int>(lq.G.size()) != ell) {
            out.push_back({"coefficient tables must be n_nodes x ell", -1, -1});
            return report;
        }
        for (int i = 0; i < ell; ++i)
            if (lq.G[i] < 0.0)
                out.push_back({"terminal weight G must be nonnegative", i, -1});
        for (int k = 0; k < n_nodes; ++k) {
            for (int i = 0; i < ell; ++i) {
                if (lq.B[k][i].size() != lq.m) out.push_back({"B has wrong dimension", i, k});
                if (lq.C[k][i].size() != lq.n) out.push_back({"C has wrong dimension", i, k});
                if (lq.D[k][i].rows() != lq.n || lq.D[k][i].cols() != lq.m)
                    out.push_back({"D has wrong dimensions", i, k});
                if (lq.R[k][i].rows() != lq.m || lq.R[k][i].cols() != lq.m) {
                    out.push_back({"R has wrong dimensions", i, k});
                    continue;
                }
                if ((lq.R[k][i] - lq.R[k][i].transpose()).lpNorm<Eigen::Infinity>() > 1e-12)
                    out.push_back({"R is not symmetric", i, k});
                if (lq.Qcost[k][i] < 0.0)
                    out.push_back({"state weight Q must be nonnegative", i, k});
                if (lq.flag == Regularity::Standard) {
                    if (detail::min_eigenvalue(lq.R[k][i]) < lq.delta * (1.0 - 1e-9))
                        out.push_back({"R below the standard-case floor delta*I", i, k});
                } else {
                    if (lq.D[k][i].rows() == lq.n && lq.D[k][i].cols() == lq.m &&
                        detail::min_eigenvalue(lq.D[k][i].transpose() * lq.D[k][i]) <
                            lq.delta * (1.0 - 1e-9))
                        out.push_back({"D'D below the singular-case floor delta*I", i, k});
                }
            }
        }
        if (lq.flag == Regularity::Singular)
            for (int i = 0; i < ell; ++i)
                if (lq.G[i] < lq.delta * (1.0 - 1e-9))
                    out.push_back({"G below the singular-case floor delta", i, -1});
        if (spec.cone.dim() != lq.m)
            out.push_back({"cone dimension does not match control dimension", -1, -1});
    }

    if (spec.cone.kind() == ConeKind::Rays) {
        for (std::size_t k = 0; k < spec.cone.ray_directions().size(); ++k)
            if (std::abs(spec.cone.ray_directions()[k].norm() - 1.0) > 1e-12)
                out.push_back({"ray direction " + std::to_string(k) + " is not unit length", -1, -1});
    }

    return report;
}

/// Wealth dynamics as a control problem: A <- r, B <- mu - r 1, C <- 0,
/// D <- sigma', no running cost, unit terminal weight. The result is in the
/// singular regularity regime with floor delta inherited from the market.
inline LqCoefficients lq_from_mv(const MvMarket& mv, const Generator& gen,
                                 const TimeGrid& grid) {
    const int ell = gen.ell;
    const int n_nodes = grid.n_nodes();

    LqCoefficients lq;
    lq.m = mv.m;
    lq.n = mv.n;
    lq.flag = Regularity::Singular;
    lq.delta = mv.delta;
    lq.A.assign(n_nodes, std::vector<double>(ell));
    lq.B.assign(n_nodes, std::vector<VectorXd>(ell));
    lq.C.assign(n_nodes, std::vector<VectorXd>(ell));
    lq.D.assign(n_nodes, std::vector<MatrixXd>(ell));
    lq.Qcost.assign(n_nodes, std::vector<double>(ell, 0.0));
    lq.R.assign(n_nodes, std::vector<MatrixXd>(ell));
    lq.G.assign(ell, 1.0);
    for (int k = 0; k < n_nodes; ++k) {
        for (int i = 0; i < ell; ++i) {
            lq.A[k][i] = mv.r[k][i];
            lq.B[k][i] = mv.b(k, i);
            lq.C[k][i] = VectorXd::Zero(mv.n);
            lq.D[k][i] = mv.sigma[k][i].transpose();
            lq.R[k][i] = MatrixXd::Zero(mv.m, mv.m);
        }
    }
    return lq;
}

/// Same mapping, validating the market first.
inline LqCoefficients lq_from_mv(const ProblemSpec& spec) {
    if (!spec.mv) throw InvalidMarket("spec carries no market coefficients");
    ValidationReport rep = validate(spec);
    if (!rep.ok()) {
        std::ostringstream oss;
        oss << "market failed validation: " << rep.violations.front().message;
        throw InvalidMarket(oss.str());
    }
    return lq_from_mv(*spec.mv, spec.generator, spec.grid);
}

namespace detail {

/// The LQ coefficients of a spec, mapping a market through lq_from_mv into
/// caller-provided storage when needed.
inline const LqCoefficients& lq_view(const ProblemSpec& spec, LqCoefficients& storage) {
    if (spec.lq) return *spec.lq;
    storage = lq_from_mv(spec);
    return storage;
}

} // namespace detail

/// Occupancy probabilities p[k][i] = P(alpha_{t_k} = i | alpha_0 = i0),
/// the i0-th row of exp(Q t_k) computed by uniformization at every node.
inline ScalarTable chain_marginals(const Generator& gen, int i0, const TimeGrid& grid) {
    const int ell = gen.ell;
    ScalarTable p(grid.n_nodes(), std::vector<double>(ell, 0.0));
    for (int k = 0; k < grid.n_nodes(); ++k) {
        const MatrixXd e = detail::generator_expm(gen.q, grid.node(k));
        for (int i = 0; i < ell; ++i) p[k][i] = std::max(e(i0, i), 0.0);
    }
    return p;
}

} // namespace regime_riccati
