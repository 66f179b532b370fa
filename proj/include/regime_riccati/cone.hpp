#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "regime_riccati/errors.hpp"
#include "regime_riccati/types.hpp"

namespace regime_riccati {

enum class ConeKind { Full, Orthant, Rays };

enum class HamiltonianSign { Plus, Minus };

/// Closed cone of admissible control directions: the whole space, the
/// nonnegative orthant, or a finite union of rays. Ray directions are
/// normalized to unit length on construction.
class Cone {
public:
    static Cone full(int m) { return Cone(ConeKind::Full, m, {}); }
    static Cone orthant(int m) { return Cone(ConeKind::Orthant, m, {}); }

    static Cone rays(std::vector<VectorXd> directions) {
        if (directions.empty())
            throw InvalidMarket("ray cone needs at least one direction");
        const int m = static_cast<int>(directions.front().size());
        for (auto& d : directions) {
            if (d.size() != m)
                throw InvalidMarket("ray directions have inconsistent dimensions");
            const double nrm = d.norm();
            if (nrm < 1e-12)
                throw InvalidMarket("ray direction has zero norm");
            d /= nrm;
        }
        return Cone(ConeKind::Rays, m, std::move(directions));
    }

    ConeKind kind() const { return kind_; }
    int dim() const { return dim_; }
    const std::vector<VectorXd>& ray_directions() const { return rays_; }

    /// True when -v is in the cone whenever v is. Used to detect the
    /// P1 == P2 collapse of the two Riccati systems.
    bool is_symmetric() const {
        switch (kind_) {
        case ConeKind::Full:
            return true;
        case ConeKind::Orthant:
            return false;
        case ConeKind::Rays:
            for (const auto& d : rays_) {
                bool has_neg = false;
                for (const auto& e : rays_)
                    if ((d + e).norm() <= 1e-9) { has_neg = true; break; }
                if (!has_neg) return false;
            }
            return true;
        }
        return false;
    }

    bool contains(const VectorXd& v, double tol) const {
        switch (kind_) {
        case ConeKind::Full:
            return true;
        case ConeKind::Orthant:
            return (v.array() >= -tol).all();
        case ConeKind::Rays: {
            for (const auto& d : rays_) {
                const double lam = v.dot(d);
                if (lam >= -tol && (v - lam * d).norm() <= tol) return true;
            }
            return false;
        }
        }
        return false;
    }

    /// Membership in the polar cone {y : x'y <= 0 for all x in the cone}.
    bool polar_contains(const VectorXd& y) const {
        switch (kind_) {
        case ConeKind::Full:
            return y.lpNorm<Eigen::Infinity>() <= 1e-12;
        case ConeKind::Orthant:
            return (y.array() <= 1e-12).all();
        case ConeKind::Rays:
            for (const auto& d : rays_)
                if (y.dot(d) > 1e-12) return false;
            return true;
        }
        return false;
    }

private:
    Cone(ConeKind kind, int dim, std::vector<VectorXd> rays)
        : kind_(kind), dim_(dim), rays_(std::move(rays)) {}

    ConeKind kind_;
    int dim_;
    std::vector<VectorXd> rays_;
};

/// Data of one constrained quadratic minimization
///   inf_{v in cone} v'Mv +/- 2 v'q,  M = P D'D + R,  q = P B + P D'C + D'Lambda.
struct HamiltonianInput {
    double P = 0.0;
    VectorXd Lambda;  ///< n-vector; identically zero for deterministic coefficients
    VectorXd B;       ///< m
    VectorXd C;       ///< n
    MatrixXd D;       ///< n x m
    MatrixXd R;       ///< m x m symmetric

    MatrixXd quadratic_matrix() const { return P * (D.transpose() * D) + R; }
    VectorXd linear_vector() const {
        return P * B + P * (D.transpose() * C) + D.transpose() * Lambda;
    }
};

struct HamiltonianResult {
    double value = 0.0;    ///< the attained infimum, always <= 0
    VectorXd minimizer;    ///< an attaining point inside the cone
};

namespace detail {

inline double min_eigenvalue(const MatrixXd& m) {
    if (m.rows() == 1) return m(0, 0);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

} // namespace detail

/// Exact minimizer of v'Mv + 2 v'q over the nonnegative orthant by active-set
/// enumeration. M must be SPD. Every subset of coordinates is tried as the
/// free set; the KKT-consistent candidate with the lowest objective wins.
inline std::pair<VectorXd, double> orthant_qp(const MatrixXd& M, const VectorXd& q) {
    const int m = static_cast<int>(q.size());
    if (m > 16)
        throw DimensionTooLarge("orthant QP limited to m <= 16, got m = " +
                                std::to_string(m));

    const double scale = std::max({1.0, M.lpNorm<Eigen::Infinity>(), q.lpNorm<Eigen::Infinity>()});
    const double tol = 1e-11 * scale;

    VectorXd best = VectorXd::Zero(m);
    double best_value = 0.0;  // v = 0 is always feasible with objective 0

    for (unsigned mask = 1; mask < (1u << m); ++mask) {
        std::vector<int> free_idx;
        for (int i = 0; i < m; ++i)
            if (mask & (1u << i)) free_idx.push_back(i);
        const int f = static_cast<int>(free_idx.size());

        MatrixXd Mff(f, f);
        VectorXd qf(f);
        for (int a = 0; a < f; ++a) {
            qf(a) = q(free_idx[a]);
            for (int b = 0; b < f; ++b) Mff(a, b) = M(free_idx[a], free_idx[b]);
        }
        const VectorXd vf = Mff.ldlt().solve(-qf);
        if ((vf.array() < -tol).any()) continue;

        VectorXd v = VectorXd::Zero(m);
        for (int a = 0; a < f; ++a) v(free_idx[a]) = std::max(vf(a), 0.0);

        // Gradient condition on the clamped coordinates.
        const VectorXd grad = M * v + q;
        bool kkt = true;
        for (int i = 0; i < m; ++i) {
            if (v(i) == 0.0 && grad(i) < -tol) { kkt = false; break; }
        }
        if (!kkt) continue;

        const double value = v.dot(M * v) + 2.0 * v.dot(q);
        if (value < best_value) {
            best_value = value;
            best = v;
        }
    }
    return {best, best_value};
}

/// Constrained Hamiltonian infimum and its attaining minimizer.
/// sign Plus uses the +2v'q linear term, Minus the -2v'q term.
inline HamiltonianResult h_min(const HamiltonianInput& input, const Cone& cone,
                               HamiltonianSign sign) {
    const MatrixXd M = input.quadratic_matrix();
    if (detail::min_eigenvalue(M) <= 1e-12)
        throw NotPositiveDefinite("P*D'D + R is not positive definite (P = " +
                                  std::to_string(input.P) + ")");

    const VectorXd q_raw = input.linear_vector();
    const VectorXd q = (sign == HamiltonianSign::Plus) ? q_raw : VectorXd(-q_raw);

    HamiltonianResult res;
    switch (cone.kind()) {
    case ConeKind::Full: {
        const VectorXd w = M.ldlt().solve(q_raw);
        res.value = -q_raw.dot(w);
        res.minimizer = (sign == HamiltonianSign::Plus) ? VectorXd(-w) : w;
        break;
    }
    case ConeKind::Orthant: {
        auto [v, value] = orthant_qp(M, q);
        res.value = value;
        res.minimizer = std::move(v);
        break;
    }
    case ConeKind::Rays: {
        // On each ray {lam d : lam >= 0} the objective is
        // lam^2 d'Md + 2 lam d'q, minimized at lam = (d'q)^- / d'Md.
        const auto& dirs = cone.ray_directions();
        double best_value = 0.0;
        int best_k = -1;
        double best_lam = 0.0;
        for (int k = 0; k < static_cast<int>(dirs.size()); ++k) {
            const double dq = dirs[k].dot(q);
            if (dq >= 0.0) continue;
            const double dMd = dirs[k].dot(M * dirs[k]);
            const double value = -dq * dq / dMd;
            // Strict improvement only: ties resolve to the earliest ray,
            // and the zero minimizer wins when no ray goes below zero.
            if (value < best_value) {
                best_value = value;
                best_k = k;
                best_lam = -dq / dMd;
            }
        }
        res.value = best_value;
        res.minimizer = (best_k >= 0) ? VectorXd(best_lam * dirs[best_k])
                                      : VectorXd(VectorXd::Zero(cone.dim()));
        break;
    }
    }
    return res;
}

inline bool cone_membership(const Cone& cone, const VectorXd& v, double tol) {
    return cone.contains(v, tol);
}

inline bool polar_cone_membership(const Cone& cone, const VectorXd& y) {
    return cone.polar_contains(y);
}

} // namespace regime_riccati
