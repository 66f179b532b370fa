#pragma once

#include <stdexcept>
#include <string>

namespace regime_riccati {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Input file or document could not be parsed.
struct ParseError : Error {
    using Error::Error;
};

/// Market/problem data failed validation where a valid input is required.
struct InvalidMarket : Error {
    using Error::Error;
};

/// P*D'D + R is not positive definite at a Hamiltonian evaluation point.
struct NotPositiveDefinite : Error {
    using Error::Error;
};

/// Orthant QP requested beyond the active-set enumeration limit.
struct DimensionTooLarge : Error {
    using Error::Error;
};

/// R + P*D'D lost positive definiteness during backward integration.
struct PositivityLost : Error {
    using Error::Error;
};

/// A Riccati value left its a priori admissible interval.
struct BoundViolated : Error {
    using Error::Error;
};

/// Comparison probe found an ordering violation between two solves.
struct MonotonicityViolated : Error {
    using Error::Error;
};

/// A divisor fell below its guaranteed positive floor.
struct DivisionGuard : Error {
    using Error::Error;
};

/// Mean-variance target is unreachable under the given cone.
struct Infeasible : Error {
    using Error::Error;
};

/// Frontier slope integral M collapsed to 0 or 1.
struct DegenerateM : Error {
    using Error::Error;
};

/// Discount ratio P2(0,i0)*exp(-2*int r) reached 1.
struct DegenerateDiscount : Error {
    using Error::Error;
};

/// No-shorting pipeline requires a regime-independent interest rate.
struct InterestNotDeterministic : Error {
    using Error::Error;
};

/// Expected return target below the minimum-variance return.
struct InvalidTarget : Error {
    using Error::Error;
};

/// Expected return target below the risk-free reference x*E[exp(int r)].
struct TargetBelowReference : Error {
    using Error::Error;
};

/// Time argument outside the solution grid.
struct OutOfGrid : Error {
    using Error::Error;
};

/// A simulated path exceeded the magnitude guard.
struct NumericalBlowup : Error {
    using Error::Error;
};

} // namespace regime_riccati
