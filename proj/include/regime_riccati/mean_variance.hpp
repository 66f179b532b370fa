#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "regime_riccati/esre.hpp"
#include "regime_riccati/market.hpp"

namespace regime_riccati {

/// Portfolio rule affine in wealth: pi(t, X, i) = slope(t, i) X + intercept(t, i).
/// Both frontier policies (unconstrained and no-shorting) take this shape.
struct AffinePolicy {
    TimeGrid grid;
    int ell = 0, m = 0;
    VectorTable slope;      ///< [node][regime], m
    VectorTable intercept;  ///< [node][regime], m

    static AffinePolicy zero(const TimeGrid& grid, int ell, int m) {
        AffinePolicy p;
        p.grid = grid;
        p.ell = ell;
        p.m = m;
        p.slope.assign(grid.n_nodes(), std::vector<VectorXd>(ell, VectorXd::Zero(m)));
        p.intercept = p.slope;
        return p;
    }

    VectorXd at(double t, double X, int regime) const {
        const int k = grid.left_node(t);
        return slope[k][regime] * X + intercept[k][regime];
    }

    void eval(int node, double X, int regime, double* u_out) const {
        const VectorXd& s = slope[node][regime];
        const VectorXd& c = intercept[node][regime];
        for (int j = 0; j < m; ++j) u_out[j] = s(j) * X + c(j);
    }
};

struct FeasibilityWitness {
    double t = 0.0;
    int regime = 0;
};

/// Result of the target-reachability test: the time mass on which the
/// discounted excess return leaves the polar cone.
struct FeasibilityReport {
    bool feasible = false;
    double mass = 0.0;
    std::optional<FeasibilityWitness> witness;
};

enum class FrontierKind { Unconstrained, NoShort };

namespace detail {

/// Shared tables a frontier result needs to re-evaluate itself at other
/// target returns. Immutable after construction.
struct FrontierData {
    FrontierKind kind = FrontierKind::Unconstrained;
    TimeGrid grid;
    int ell = 0, m = 0;
    double x = 0.0;
    int i0 = 0;

    // Unconstrained case.
    double M = 0.0;            ///< slope integral, in (0, 1)
    double one_minus_M = 0.0;  ///< stored directly to avoid cancellation
    double K0 = 0.0;
    VectorTable w;             ///< (sigma sigma')^{-1} b
    ScalarTable K_over_P;

    // No-shorting case.
    double rho2 = 0.0;
    double growth = 0.0;            ///< exp(int_0^T r)
    double P2_0 = 0.0;
    std::vector<double> disc_to_T;  ///< exp(-int_{t_k}^T r) per node
    VectorTable vhat2;

    double lambda_for(double z) const {
        if (kind == FrontierKind::Unconstrained)
            return (z * one_minus_M - K0 * x) / M;
        return P2_0 * (1.0 / growth) * (z / growth - x) / (1.0 - rho2);
    }

    AffinePolicy policy_for(double z) const {
        AffinePolicy p;
        p.grid = grid;
        p.ell = ell;
        p.m = m;
        p.slope.assign(grid.n_nodes(), std::vector<VectorXd>(ell));
        p.intercept.assign(grid.n_nodes(), std::vector<VectorXd>(ell));
        if (kind == FrontierKind::Unconstrained) {
            const double zl = (z - K0 * x) / M;  // z + lambda*
            for (int k = 0; k < grid.n_nodes(); ++k)
                for (int i = 0; i < ell; ++i) {
                    p.slope[k][i] = -w[k][i];
                    p.intercept[k][i] = (zl * K_over_P[k][i]) * w[k][i];
                }
        } else {
            const double zl = z + lambda_for(z);
            for (int k = 0; k < grid.n_nodes(); ++k)
                for (int i = 0; i < ell; ++i) {
                    p.slope[k][i] = -vhat2[k][i];
                    p.intercept[k][i] = (zl * disc_to_T[k]) * vhat2[k][i];
                }
        }
        return p;
    }
};

inline double trapezoid(const std::vector<double>& f, double dt) {
    double s = 0.5 * (f.front() + f.back());
    for (std::size_t k = 1; k + 1 < f.size(); ++k) s += f[k];
    return s * dt;
}

} // namespace detail

/// Efficient-frontier summary: Var(X(T)) = a (z - z0)^2 + v0, the multiplier
/// lambda_star attaining the requested target, and the optimal rule for it.
struct FrontierResult {
    FrontierKind kind = FrontierKind::Unconstrained;
    double M = 0.0;  ///< slope integral in (0,1), or the discount ratio rho2
    double lambda_star = 0.0;
    double a = 0.0, z0 = 0.0, v0 = 0.0;
    double zmin = 0.0, varmin = 0.0;
    double z = 0.0, x = 0.0;
    double P1_0 = 0.0, P2_0 = 0.0, H0 = 0.0, K0 = 0.0, psi0 = 0.0;
    AffinePolicy policy;

    std::shared_ptr<const detail::FrontierData> data;

    double variance_at(double target) const { return a * (target - z0) * (target - z0) + v0; }
    double lambda_for(double target) const { return data->lambda_for(target); }
    AffinePolicy policy_for(double target) const { return data->policy_for(target); }
};

/// Deterministic quadrature of the feasibility condition: the target chain
/// is reachable iff psi(t, i) b(t, i) spends positive time mass outside the
/// polar cone. For the orthant this reduces to some asset having positive
/// excess return under positive occupancy.
inline FeasibilityReport check_feasibility(const ProblemSpec& spec) {
    if (!spec.mv) throw InvalidMarket("feasibility test needs market coefficients");
    const MvMarket& mv = *spec.mv;
    const int ell = spec.generator.ell;

    const LinearSystemSolution psi = solve_psi(spec.generator, mv.r, spec.grid);
    const ScalarTable p = chain_marginals(spec.generator, spec.i0, spec.grid);

    FeasibilityReport report;
    std::vector<double> f(spec.grid.n_nodes(), 0.0);
    for (int k = 0; k < spec.grid.n_nodes(); ++k) {
        for (int i = 0; i < ell; ++i) {
            const VectorXd y = psi.values[k][i] * mv.b(k, i);
            if (!spec.cone.polar_contains(y)) {
                f[k] += p[k][i];
                if (!report.witness && p[k][i] > 0.0)
                    report.witness = FeasibilityWitness{spec.grid.node(k), i};
            }
        }
    }
    report.mass = detail::trapezoid(f, spec.grid.dt());
    report.feasible = report.mass > 0.0;
    return report;
}

/// Direct quadrature of the frontier slope integral E int_0^T O(t, alpha_t) dt
/// with O = K^2 b'(sigma sigma')^{-1} b / P. Kept as an independent route for
/// cross-checking the production value, which comes from the exact identity
/// 1 - M = P(0,i0) H(0,i0)^2 + chain-spread term.
inline double frontier_slope_direct(const ProblemSpec& spec, const EsreSolution& P,
                                    const LinearSystemSolution& H) {
    const MvMarket& mv = *spec.mv;
    const ScalarTable p = chain_marginals(spec.generator, spec.i0, spec.grid);
    std::vector<double> f(spec.grid.n_nodes(), 0.0);
    for (int k = 0; k < spec.grid.n_nodes(); ++k)
        for (int i = 0; i < spec.generator.ell; ++i) {
            const VectorXd b = mv.b(k, i);
            const MatrixXd ss = mv.sigma[k][i] * mv.sigma[k][i].transpose();
            const double theta2 = b.dot(ss.ldlt().solve(b));
            const double K = P.P1[k][i] * H.values[k][i];
            f[k] += p[k][i] * K * K * theta2 / P.P1[k][i];
        }
    return detail::trapezoid(f, spec.grid.dt());
}

/// Frontier of the unconstrained market. Solves the single Riccati system,
/// the risk-adjust discount and the K change of variables, then assembles
/// Var(X(T)) = ((1-M)/M) (z - K0 x / (1-M))^2 + (P0 - K0^2/(1-M)) x^2 and the
/// optimal rule for the requested target z.
inline FrontierResult unconstrained_frontier(const ProblemSpec& spec, double x, double z) {
    if (!spec.mv) throw InvalidMarket("frontier needs market coefficients");
    if (spec.cone.kind() != ConeKind::Full)
        throw InvalidMarket("unconstrained frontier needs the full cone");
    const MvMarket& mv = *spec.mv;
    const Generator& gen = spec.generator;
    const int ell = gen.ell;
    const int n_nodes = spec.grid.n_nodes();

    const LinearSystemSolution psi = solve_psi(gen, mv.r, spec.grid);
    const double psi0 = psi.values[0][spec.i0];
    if (z < x * psi0 - 1e-9 * (1.0 + std::abs(x * psi0)))
        throw TargetBelowReference("target z = " + std::to_string(z) +
                                   " below the risk-free reference " +
                                   std::to_string(x * psi0));

    const FeasibilityReport feas = check_feasibility(spec);
    if (!feas.feasible)
        throw Infeasible("market cannot reach any return above the risk-free reference");

    auto esre = std::make_shared<EsreSolution>(solve_esre(spec));
    const LinearSystemSolution H = solve_risk_adjust(*esre, spec);
    const ScalarTable K = solve_K(*esre, H);
    const ScalarTable p = chain_marginals(gen, spec.i0, spec.grid);

    // Chain-spread contribution to 1 - M; zero when the discount is
    // regime-independent.
    std::vector<double> spread(n_nodes, 0.0);
    for (int k = 0; k < n_nodes; ++k)
        for (int i = 0; i < ell; ++i) {
            double s = 0.0;
            for (int j = 0; j < ell; ++j)
                if (j != i) {
                    const double dh = H.values[k][i] - H.values[k][j];
                    s += gen.q(i, j) * esre->P1[k][j] * dh * dh;
                }
            spread[k] += p[k][i] * s;
        }
    const double spread_integral = detail::trapezoid(spread, spec.grid.dt());

    const double P0 = esre->P1[0][spec.i0];
    const double H0 = H.values[0][spec.i0];
    const double K0 = K[0][spec.i0];
    const double one_minus_M = K0 * H0 + spread_integral;  // = P0 H0^2 + spread
    const double M = 1.0 - one_minus_M;
    if (M <= 1e-12 || one_minus_M <= 1e-12)
        throw DegenerateM("frontier slope integral M = " + std::to_string(M) +
                          " outside (0, 1)");

    auto data = std::make_shared<detail::FrontierData>();
    data->kind = FrontierKind::Unconstrained;
    data->grid = spec.grid;
    data->ell = ell;
    data->m = mv.m;
    data->x = x;
    data->i0 = spec.i0;
    data->M = M;
    data->one_minus_M = one_minus_M;
    data->K0 = K0;
    data->w.assign(n_nodes, std::vector<VectorXd>(ell));
    data->K_over_P.assign(n_nodes, std::vector<double>(ell));
    for (int k = 0; k < n_nodes; ++k)
        for (int i = 0; i < ell; ++i) {
            const MatrixXd ss = mv.sigma[k][i] * mv.sigma[k][i].transpose();
            data->w[k][i] = ss.ldlt().solve(mv.b(k, i));
            data->K_over_P[k][i] = K[k][i] / esre->P1[k][i];
        }

    FrontierResult fr;
    fr.kind = FrontierKind::Unconstrained;
    fr.M = M;
    fr.a = one_minus_M / M;
    fr.z0 = K0 * x / one_minus_M;
    fr.v0 = (P0 - K0 * K0 / one_minus_M) * x * x;
    fr.zmin = fr.z0;
    fr.varmin = fr.v0;
    fr.z = z;
    fr.x = x;
    fr.P1_0 = P0;
    fr.P2_0 = esre->P2[0][spec.i0];
    fr.H0 = H0;
    fr.K0 = K0;
    fr.psi0 = psi0;
    fr.lambda_star = data->lambda_for(z);
    fr.policy = data->policy_for(z);
    fr.data = std::move(data);
    return fr;
}

struct MinVariancePoint {
    double varmin = 0.0;
    double zmin = 0.0;
    AffinePolicy policy;
};

/// Vertex of the frontier parabola and the rule attaining it.
inline MinVariancePoint minimum_variance_point(const FrontierResult& fr) {
    return MinVariancePoint{fr.varmin, fr.zmin, fr.policy_for(fr.zmin)};
}

/// Frontier under the no-shorting constraint with deterministic interest.
/// Var(X(T)) = (rho2 / (1 - rho2)) (z - x e^{int r})^2 with
/// rho2 = P2(0, i0) e^{-2 int r}; the rule tracks the discounted target with
/// the cached minus-branch minimizers.
inline FrontierResult noshort_frontier(const ProblemSpec& spec, double x, double z) {
    if (!spec.mv) throw InvalidMarket("frontier needs market coefficients");
    if (spec.cone.kind() != ConeKind::Orthant)
        throw InvalidMarket("no-shorting frontier needs the orthant cone");
    const MvMarket& mv = *spec.mv;
    const int ell = spec.generator.ell;
    const int n_steps = spec.grid.n_steps;
    const double dt = spec.grid.dt();

    for (int k = 0; k < spec.grid.n_nodes(); ++k)
        for (int i = 1; i < ell; ++i)
            if (std::abs(mv.r[k][i] - mv.r[k][0]) > 1e-12 * (1.0 + std::abs(mv.r[k][0])))
                throw InterestNotDeterministic(
                    "no-shorting frontier requires a regime-independent interest rate");

    const FeasibilityReport feas = check_feasibility(spec);
    if (!feas.feasible)
        throw Infeasible("no asset ever offers a positive excess return");

    // exp(-int_{t_k}^T r) under the piecewise-constant convention.
    std::vector<double> int_to_T(n_steps + 1, 0.0);
    for (int k = n_steps - 1; k >= 0; --k) int_to_T[k] = int_to_T[k + 1] + dt * mv.r[k][0];
    const double growth = std::exp(int_to_T[0]);

    if (z < x * growth - 1e-9 * (1.0 + std::abs(x * growth)))
        throw TargetBelowReference("target z = " + std::to_string(z) +
                                   " below the risk-free reference " +
                                   std::to_string(x * growth));

    auto esre = std::make_shared<EsreSolution>(solve_esre(spec));
    const double P2_0 = esre->P2[0][spec.i0];
    const double rho2 = P2_0 / (growth * growth);
    if (rho2 >= 1.0 - 1e-12)
        throw DegenerateDiscount("discount ratio rho2 = " + std::to_string(rho2) +
                                 " reached 1; the constrained market is degenerate");

    auto data = std::make_shared<detail::FrontierData>();
    data->kind = FrontierKind::NoShort;
    data->grid = spec.grid;
    data->ell = ell;
    data->m = mv.m;
    data->x = x;
    data->i0 = spec.i0;
    data->rho2 = rho2;
    data->growth = growth;
    data->P2_0 = P2_0;
    data->disc_to_T.resize(n_steps + 1);
    for (int k = 0; k <= n_steps; ++k) data->disc_to_T[k] = std::exp(-int_to_T[k]);
    data->vhat2 = esre->vhat2;

    FrontierResult fr;
    fr.kind = FrontierKind::NoShort;
    fr.M = rho2;
    fr.a = rho2 / (1.0 - rho2);
    fr.z0 = x * growth;
    fr.v0 = 0.0;
    fr.zmin = fr.z0;
    fr.varmin = 0.0;
    fr.z = z;
    fr.x = x;
    fr.P1_0 = esre->P1[0][spec.i0];
    fr.P2_0 = P2_0;
    fr.H0 = 1.0 / growth;
    fr.K0 = fr.P1_0 / growth;
    fr.psi0 = growth;
    fr.lambda_star = data->lambda_for(z);
    fr.policy = data->policy_for(z);
    fr.data = std::move(data);
    return fr;
}

struct MutualFundResult {
    AffinePolicy policy;
    double expected_return = 0.0;
    double max_affinity_gap = 0.0;  ///< largest nodewise deviation from the direct rule
};

/// Two-fund combination (1 - rho) pi_min + rho pi_star. Because the rule is
/// affine in the target and the multiplier is affine in z, the combination
/// equals the frontier rule at the blended return; that identity is checked
/// nodewise before returning.
inline MutualFundResult mutual_fund(const FrontierResult& fr, double z_star, double rho) {
    if (fr.kind != FrontierKind::Unconstrained)
        throw InvalidMarket("mutual fund decomposition applies to the unconstrained frontier");
    if (!(z_star > fr.zmin))
        throw InvalidTarget("z_star must exceed the minimum-variance return " +
                            std::to_string(fr.zmin));
    if (rho < 0.0) throw InvalidTarget("rho must be nonnegative");

    const AffinePolicy pol_min = fr.policy_for(fr.zmin);
    const AffinePolicy pol_star = fr.policy_for(z_star);
    const double z_mix = (1.0 - rho) * fr.zmin + rho * z_star;
    const AffinePolicy reference = fr.policy_for(z_mix);

    MutualFundResult out;
    out.expected_return = z_mix;
    out.policy = pol_min;
    double gap = 0.0;
    for (int k = 0; k < pol_min.grid.n_nodes(); ++k)
        for (int i = 0; i < pol_min.ell; ++i) {
            out.policy.slope[k][i] =
                (1.0 - rho) * pol_min.slope[k][i] + rho * pol_star.slope[k][i];
            out.policy.intercept[k][i] =
                (1.0 - rho) * pol_min.intercept[k][i] + rho * pol_star.intercept[k][i];
            gap = std::max(gap, (out.policy.slope[k][i] - reference.slope[k][i])
                                    .lpNorm<Eigen::Infinity>());
            gap = std::max(gap, (out.policy.intercept[k][i] - reference.intercept[k][i])
                                    .lpNorm<Eigen::Infinity>());
        }
    out.max_affinity_gap = gap;
    if (gap > 1e-10)
        throw Error("mutual fund combination deviates from the frontier rule by " +
                    std::to_string(gap));
    return out;
}

} // namespace regime_riccati
