#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "test_markets.hpp"

using namespace regime_riccati;
using Catch::Approx;

TEST_CASE("feasibility") {
    SECTION("full cone with zero excess return is infeasible") {
        Generator gen(2, (MatrixXd(2, 2) << -1.0, 1.0, 2.0, -2.0).finished());
        const ProblemSpec spec = testmarkets::mv_spec(
            gen, TimeGrid(1.0, 32), {0.05, 0.03},
            {VectorXd::Constant(1, 0.05), VectorXd::Constant(1, 0.03)},
            {MatrixXd::Constant(1, 1, 0.2), MatrixXd::Constant(1, 1, 0.3)}, Cone::full(1),
            0, 1.0, 0.039);
        const FeasibilityReport rep = check_feasibility(spec);
        CHECK_FALSE(rep.feasible);
        CHECK(rep.mass == 0.0);
        CHECK_FALSE(rep.witness.has_value());
    }
    SECTION("no-shorting with a negative excess return is infeasible") {
        const ProblemSpec spec = testmarkets::mv_spec(
            Generator::single(), TimeGrid(1.0, 32), {0.05}, {VectorXd::Constant(1, -0.05)},
            {MatrixXd::Constant(1, 1, 0.2)}, Cone::orthant(1), 0, 1.0, 0.039);
        const FeasibilityReport rep = check_feasibility(spec);
        CHECK_FALSE(rep.feasible);
    }
    SECTION("an irreducible chain makes the mixed-sign market feasible") {
        const ProblemSpec spec = testmarkets::mixed_sign_two_regime(Cone::orthant(1), 128);
        const FeasibilityReport rep = check_feasibility(spec);
        CHECK(rep.feasible);
        CHECK(rep.mass > 0.0);
        REQUIRE(rep.witness.has_value());
        CHECK(rep.witness->regime == 1);

        // Occupancy-weighted indicator mass against the closed-form
        // two-state marginals: regime 1 is good for every t > 0, so the mass
        // is the integral of p_1(t).
        const double a = 0.6, b = 0.9;
        auto p1 = [&](double t) {
            return a / (a + b) * (1.0 - std::exp(-(a + b) * t));
        };
        const int n = spec.grid.n_steps;
        double expected = 0.5 * (p1(0.0) + p1(1.0));
        for (int k = 1; k < n; ++k) expected += p1(spec.grid.node(k));
        expected *= spec.grid.dt();
        CHECK(rep.mass == Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("single-regime frontier has the classical closed form") {
    const ProblemSpec spec = testmarkets::canonical_single_regime(2000);
    const double x = 1.0;
    const double z = 1.2;
    const FrontierResult fr = unconstrained_frontier(spec, x, z);

    const double theta2 = 0.25;
    const double M_expected = 1.0 - std::exp(-theta2);
    CHECK(fr.M == Approx(M_expected).epsilon(1e-10));
    CHECK(fr.z0 == Approx(std::exp(0.05)).epsilon(1e-12));
    CHECK(std::abs(fr.v0) < 1e-12);
    CHECK(fr.a == Approx(std::exp(-theta2) / (1.0 - std::exp(-theta2))).epsilon(1e-10));
    CHECK(fr.lambda_star ==
          Approx((z - M_expected * z - fr.K0 * x) / M_expected).epsilon(1e-10));

    SECTION("vertex evaluates to the minimum variance") {
        CHECK(fr.variance_at(fr.z0) == Approx(fr.v0).margin(1e-15));
        const MinVariancePoint mv = minimum_variance_point(fr);
        CHECK(mv.zmin == fr.z0);
        CHECK(mv.varmin == fr.v0);
        CHECK(mv.zmin == Approx(std::exp(0.05)).epsilon(1e-12));
        CHECK(std::abs(mv.varmin) < 1e-12);
    }
    SECTION("identical regimes reproduce the single-regime frontier") {
        Generator gen(2, (MatrixXd(2, 2) << -1.0, 1.0, 2.0, -2.0).finished());
        const ProblemSpec twin = testmarkets::mv_spec(
            gen, TimeGrid(1.0, 2000), {0.05, 0.05},
            {VectorXd::Constant(1, 0.15), VectorXd::Constant(1, 0.15)},
            {MatrixXd::Constant(1, 1, 0.2), MatrixXd::Constant(1, 1, 0.2)}, Cone::full(1),
            0, 1.0, 0.039);
        const FrontierResult fr2 = unconstrained_frontier(twin, x, z);
        CHECK(fr2.M == Approx(fr.M).epsilon(1e-12));
        CHECK(fr2.a == Approx(fr.a).epsilon(1e-12));
        CHECK(fr2.z0 == Approx(fr.z0).epsilon(1e-12));
        CHECK(std::abs(fr2.v0) < 1e-12);
    }
}

TEST_CASE("incomplete market keeps a positive minimum variance") {
    const ProblemSpec spec = testmarkets::incomplete_two_regime(400);
    const FrontierResult fr = unconstrained_frontier(spec, 1.0, 1.3);
    CHECK(fr.v0 > 0.0);
    CHECK(fr.varmin == fr.v0);
    CHECK(fr.M > 0.0);
    CHECK(fr.M < 1.0);
    // the identity route and the direct quadrature agree to quadrature order
    const EsreSolution sol = solve_esre(spec);
    const LinearSystemSolution H = solve_risk_adjust(sol, spec);
    const double direct = frontier_slope_direct(spec, sol, H);
    CHECK(fr.M == Approx(direct).margin(1e-5));
}

TEST_CASE("deterministic rate with matching dimensions closes the frontier gap") {
    // Regime-independent coefficients, m = n: no unhedgeable risk remains.
    Generator gen(3, (MatrixXd(3, 3) << -1.0, 0.6, 0.4, 0.5, -0.9, 0.4, 0.2, 0.3, -0.5)
                         .finished());
    const ProblemSpec spec = testmarkets::mv_spec(
        gen, TimeGrid(1.0, 200), {0.04, 0.04, 0.04},
        {VectorXd::Constant(1, 0.12), VectorXd::Constant(1, 0.12),
         VectorXd::Constant(1, 0.12)},
        {MatrixXd::Constant(1, 1, 0.25), MatrixXd::Constant(1, 1, 0.25),
         MatrixXd::Constant(1, 1, 0.25)},
        Cone::full(1), 0, 1.0, 0.06);
    const FrontierResult fr = unconstrained_frontier(spec, 1.0, 1.2);
    CHECK(std::abs(fr.v0) < 1e-9);
    CHECK(1.0 - fr.M >= fr.P1_0 * fr.H0 * fr.H0 - 1e-12);
}

TEST_CASE("zero endowment collapses the frontier to the origin") {
    const ProblemSpec spec = testmarkets::incomplete_two_regime(64);
    const FrontierResult fr = unconstrained_frontier(spec, 0.0, 0.1);
    CHECK(fr.zmin == 0.0);
    CHECK(fr.varmin == 0.0);
    const MinVariancePoint mv = minimum_variance_point(fr);
    CHECK(mv.zmin == 0.0);
    CHECK(mv.varmin == 0.0);
}

TEST_CASE("targets below the risk-free reference are rejected") {
    const ProblemSpec spec = testmarkets::canonical_single_regime(200);
    CHECK_THROWS_AS(unconstrained_frontier(spec, 1.0, 1.0), TargetBelowReference);
    CHECK_NOTHROW(unconstrained_frontier(spec, 1.0, std::exp(0.05)));
}

TEST_CASE("no-shorting frontier") {
    SECTION("positive excess return: constraint never binds") {
        ProblemSpec spec = testmarkets::canonical_single_regime(2000);
        const FrontierResult unc = unconstrained_frontier(spec, 1.0, 1.2);
        spec.cone = Cone::orthant(1);
        const FrontierResult ns = noshort_frontier(spec, 1.0, 1.2);
        CHECK(ns.a == Approx(unc.a).epsilon(1e-9));
        CHECK(ns.z0 == Approx(unc.z0).epsilon(1e-12));
        CHECK(std::abs(ns.v0) < 1e-12);
        CHECK(ns.lambda_star == Approx(unc.lambda_star).epsilon(1e-8));
        CHECK(ns.M < 1.0);  // discount ratio rho2
    }
    SECTION("negative excess return is reported infeasible") {
        const ProblemSpec spec = testmarkets::mv_spec(
            Generator::single(), TimeGrid(1.0, 64), {0.05}, {VectorXd::Constant(1, -0.05)},
            {MatrixXd::Constant(1, 1, 0.2)}, Cone::orthant(1), 0, 1.0, 0.039);
        CHECK_THROWS_AS(noshort_frontier(spec, 1.0, 1.2), Infeasible);
    }
    SECTION("bond target needs no risk at all") {
        const ProblemSpec spec = testmarkets::mixed_sign_two_regime(Cone::orthant(1), 256);
        const double growth = std::exp(0.04);
        const FrontierResult fr = noshort_frontier(spec, 1.0, growth);
        CHECK(fr.variance_at(growth) == Approx(0.0).margin(1e-15));
        CHECK(std::abs(fr.lambda_star) < 1e-12);
        // along the bond path the rule invests nothing
        for (double t : {0.0, 0.5, 0.99}) {
            const int k = spec.grid.left_node(t);
            const double bond_X = std::exp(0.04 * spec.grid.node(k));
            const VectorXd pi = fr.policy.at(spec.grid.node(k), bond_X, 0);
            CHECK(pi.lpNorm<Eigen::Infinity>() < 1e-12);
        }
    }
    SECTION("regime-dependent rates are refused") {
        const ProblemSpec spec = testmarkets::incomplete_two_regime(64);
        ProblemSpec orthant = spec;
        orthant.cone = Cone::orthant(1);
        CHECK_THROWS_AS(noshort_frontier(orthant, 1.0, 1.3), InterestNotDeterministic);
    }
    SECTION("the constraint can only steepen the frontier") {
        const ProblemSpec ns_spec = testmarkets::mixed_sign_two_regime(Cone::orthant(1), 256);
        const ProblemSpec unc_spec = testmarkets::mixed_sign_two_regime(Cone::full(1), 256);
        const FrontierResult ns = noshort_frontier(ns_spec, 1.0, 1.25);
        const FrontierResult unc = unconstrained_frontier(unc_spec, 1.0, 1.25);
        CHECK(ns.a >= unc.a - 1e-12);
        CHECK(ns.variance_at(1.25) >= unc.variance_at(1.25) - 1e-12);
    }
}

TEST_CASE("lagrange multiplier dominates the degenerate corner") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 5; ++trial) {
        const ProblemSpec spec = testmarkets::mixed_sign_two_regime(Cone::orthant(1), 96);
        const double growth = std::exp(0.04);
        const double z = growth + 0.05 + 0.1 * trial;
        const FrontierResult fr = noshort_frontier(spec, 1.0, z);
        CHECK(fr.lambda_star >= 1.0 * growth - z - 1e-12);
        CHECK(fr.M < 1.0);
    }
    (void)rng;
}

TEST_CASE("frontier invariants across random feasible markets") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 5; ++trial) {
        const ProblemSpec spec =
            testmarkets::random_mv(rng, 2 + trial % 2, 1 + trial % 2, 2, Cone::full(1 + trial % 2), 96);
        const double z = 1.25;
        FrontierResult fr = unconstrained_frontier(spec, 1.0, z);
        CHECK(fr.M > 0.0);
        CHECK(fr.M < 1.0);
        CHECK(fr.a > 0.0);
        CHECK(fr.v0 >= -1e-12);
        CHECK(1.0 - fr.M >= fr.P1_0 * fr.H0 * fr.H0 - 1e-12);
        CHECK(fr.variance_at(fr.z0) == Approx(fr.v0).margin(1e-12));
    }
}

TEST_CASE("mutual fund decomposition") {
    const ProblemSpec spec = testmarkets::incomplete_two_regime(200);
    const double z_star = 1.35;
    const FrontierResult fr = unconstrained_frontier(spec, 1.0, z_star);

    SECTION("endpoints reproduce the two funds") {
        const MutualFundResult at_zero = mutual_fund(fr, z_star, 0.0);
        const AffinePolicy ref_min = fr.policy_for(fr.zmin);
        CHECK(at_zero.expected_return == fr.zmin);
        CHECK((at_zero.policy.intercept[7][1] - ref_min.intercept[7][1]).norm() == 0.0);

        const MutualFundResult at_one = mutual_fund(fr, z_star, 1.0);
        CHECK(at_one.expected_return == z_star);
        CHECK((at_one.policy.intercept[3][0] - fr.policy_for(z_star).intercept[3][0]).norm() ==
              0.0);
    }
    SECTION("midpoint matches the frontier rule nodewise") {
        const MutualFundResult mid = mutual_fund(fr, z_star, 0.5);
        CHECK(mid.expected_return == Approx(0.5 * fr.zmin + 0.5 * z_star));
        CHECK(mid.max_affinity_gap <= 1e-10);
    }
    SECTION("targets at or below the vertex are rejected") {
        CHECK_THROWS_AS(mutual_fund(fr, fr.zmin, 0.5), InvalidTarget);
        CHECK_THROWS_AS(mutual_fund(fr, z_star, -0.1), InvalidTarget);
    }
}
