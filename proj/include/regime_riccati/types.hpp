#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "regime_riccati/errors.hpp"

namespace regime_riccati {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Generator matrix of a finite-state continuous-time Markov chain.
/// Off-diagonal entries are nonnegative transition rates, rows sum to zero.
struct Generator {
    int ell = 0;   ///< number of regimes
    MatrixXd q;    ///< ell x ell rate matrix

    Generator() = default;
    Generator(int ell_, MatrixXd q_) : ell(ell_), q(std::move(q_)) {}

    /// Single absorbing regime (no switching).
    static Generator single() {
        return Generator{1, MatrixXd::Zero(1, 1)};
    }
};

/// Uniform grid on [0, T] with n_steps intervals.
struct TimeGrid {
    double T = 0.0;
    int n_steps = 0;

    TimeGrid() = default;
    TimeGrid(double T_, int n_steps_) : T(T_), n_steps(n_steps_) {}

    double dt() const { return T / n_steps; }
    int n_nodes() const { return n_steps + 1; }
    double node(int k) const { return k * dt(); }

    /// Index of the node whose interval [t_k, t_{k+1}) contains t.
    /// Coefficient tables are piecewise constant with left-node sampling,
    /// so this is the lookup used everywhere a time must be mapped to a row.
    int left_node(double t) const {
        if (t < -1e-12 || t > T * (1.0 + 1e-12) + 1e-12)
            throw OutOfGrid("time " + std::to_string(t) + " outside [0, " +
                            std::to_string(T) + "]");
        int k = static_cast<int>(std::floor(t / dt() + 1e-9));
        if (k < 0) k = 0;
        if (k > n_steps) k = n_steps;
        return k;
    }
};

/// Regularity regime of the cost data.
enum class Regularity {
    Standard,  ///< R(t,i) uniformly positive definite
    Singular   ///< R only PSD; G and D'D uniformly positive definite instead
};

/// Scalar table indexed [node][regime].
using ScalarTable = std::vector<std::vector<double>>;
/// Vector table indexed [node][regime].
using VectorTable = std::vector<std::vector<VectorXd>>;
/// Matrix table indexed [node][regime].
using MatrixTable = std::vector<std::vector<MatrixXd>>;

namespace detail {

/// exp(Q*t) for a generator matrix via uniformization.
/// All series terms are nonnegative, so entries come out nonnegative and
/// rows sum to 1 up to the truncation tolerance (< 1e-12).
inline MatrixXd generator_expm(const MatrixXd& q, double t) {
    const int ell = static_cast<int>(q.rows());
    double lambda = 0.0;
    for (int i = 0; i < ell; ++i) lambda = std::max(lambda, -q(i, i));
    if (lambda * t < 1e-300) return MatrixXd::Identity(ell, ell);

    // Halve t until the Poisson rate is small enough for the plain series,
    // then square back up. Stochastic-matrix products stay nonnegative.
    int squarings = 0;
    double x = lambda * t;
    while (x > 64.0) {
        x *= 0.5;
        ++squarings;
    }
    const MatrixXd stoch = MatrixXd::Identity(ell, ell) + q / lambda;

    MatrixXd term = MatrixXd::Identity(ell, ell);
    MatrixXd acc = MatrixXd::Zero(ell, ell);
    double w = std::exp(-x);
    double cum = 0.0;
    const int jmax = static_cast<int>(x + 40.0 * std::sqrt(x + 1.0) + 60.0);
    for (int j = 0; j <= jmax; ++j) {
        acc += w * term;
        cum += w;
        if (1.0 - cum < 1e-13) break;
        term = term * stoch;
        w *= x / (j + 1);
    }
    for (int k = 0; k < squarings; ++k) acc = acc * acc;
    return acc;
}

/// SplitMix64 finalizer; used to derive independent per-path RNG seeds.
inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream));
}

} // namespace detail

} // namespace regime_riccati
