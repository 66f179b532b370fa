#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <utility>

#include "regime_riccati/esre.hpp"
#include "regime_riccati/market.hpp"

namespace regime_riccati {

/// Optimal state feedback u*(t, X, i) = vhat1(t, i) X^+ + vhat2(t, i) X^-,
/// read from the minimizer tables cached during the Riccati solve. The map is
/// positively homogeneous in X and always lands inside the control cone.
class FeedbackPolicy {
public:
    FeedbackPolicy(std::shared_ptr<const EsreSolution> solution, Cone cone)
        : sol_(std::move(solution)), cone_(std::move(cone)) {}

    const EsreSolution& solution() const { return *sol_; }
    const Cone& cone() const { return cone_; }
    int control_dim() const { return sol_->m; }

    VectorXd feedback(double t, double X, int regime) const {
        return at_node(sol_->grid.left_node(t), X, regime);
    }

    /// Node-indexed evaluation; the simulator keeps integer node bookkeeping
    /// so time-to-node rounding never enters the hot loop.
    VectorXd at_node(int node, double X, int regime) const {
        const double xp = X > 0.0 ? X : 0.0;
        const double xm = X < 0.0 ? -X : 0.0;
        return sol_->vhat1[node][regime] * xp + sol_->vhat2[node][regime] * xm;
    }

    void eval(int node, double X, int regime, double* u_out) const {
        const double xp = X > 0.0 ? X : 0.0;
        const double xm = X < 0.0 ? -X : 0.0;
        const VectorXd& v1 = sol_->vhat1[node][regime];
        const VectorXd& v2 = sol_->vhat2[node][regime];
        for (int j = 0; j < sol_->m; ++j) u_out[j] = v1(j) * xp + v2(j) * xm;
    }

private:
    std::shared_ptr<const EsreSolution> sol_;
    Cone cone_;
};

inline VectorXd feedback(const FeedbackPolicy& policy, double t, double X, int regime) {
    return policy.feedback(t, X, regime);
}

/// min J = P1(0, i0) (x^+)^2 + P2(0, i0) (x^-)^2.
inline double optimal_value(const FeedbackPolicy& policy, double x, int i0) {
    const auto& sol = policy.solution();
    const double xp = x > 0.0 ? x : 0.0;
    const double xm = x < 0.0 ? -x : 0.0;
    return sol.P1[0][i0] * xp * xp + sol.P2[0][i0] * xm * xm;
}

} // namespace regime_riccati
