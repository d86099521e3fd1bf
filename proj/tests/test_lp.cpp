#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "conerisk/lp.hpp"
#include "support/oracles.hpp"

using namespace conerisk::lp;

namespace {

// One-period binomial martingale weight: maximize q with
// 2q + 0.5(1-q) = 1 forcing q = 1/3.
LinearProgram binomial_weight_lp() {
    LinearProgram lp;
    const int q = lp.add_var(0.0, 1.0, 1.0);
    lp.set_sense(Sense::Maximize);
    lp.add_row(Rel::EQ, 0.5, {{q, 1.5}});
    return lp;
}

}  // namespace

TEST_CASE("binomial martingale weight solves to one third") {
    const LpSolution s = solve(binomial_weight_lp());
    REQUIRE(s.status == Status::Optimal);
    CHECK(s.value == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
    CHECK(s.x[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
}

TEST_CASE("strict margin certifies interior points") {
    SUBCASE("unique martingale measure of the binomial model") {
        LinearProgram lp;
        const int q1 = lp.add_var(-kInf, kInf);
        const int q2 = lp.add_var(-kInf, kInf);
        const int s1 = lp.add_row(Rel::GE, 0.0, {{q1, 1.0}});
        const int s2 = lp.add_row(Rel::GE, 0.0, {{q2, 1.0}});
        lp.add_row(Rel::EQ, 1.0, {{q1, 1.0}, {q2, 1.0}});
        lp.add_row(Rel::EQ, 1.0, {{q1, 2.0}, {q2, 0.5}});
        const FeasibilityReport r = feasibility_with_margin(lp, {s1, s2});
        REQUIRE(r.feasible);
        CHECK(r.margin == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
        CHECK(r.witness[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
        CHECK(r.witness[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    }
    SUBCASE("single mass point has margin one") {
        LinearProgram lp;
        const int q = lp.add_var(-kInf, kInf);
        const int s = lp.add_row(Rel::GE, 0.0, {{q, 1.0}});
        lp.add_row(Rel::EQ, 1.0, {{q, 1.0}});
        const FeasibilityReport r = feasibility_with_margin(lp, {s});
        REQUIRE(r.feasible);
        CHECK(r.margin == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(r.witness[0] == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("degenerate point is reported infeasible with zero margin") {
        LinearProgram lp;
        const int q = lp.add_var(-kInf, kInf);
        const int s = lp.add_row(Rel::GE, 0.0, {{q, 1.0}});
        lp.add_row(Rel::LE, 0.0, {{q, 1.0}});
        const FeasibilityReport r = feasibility_with_margin(lp, {s});
        CHECK_FALSE(r.feasible);
        CHECK(r.margin == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("strict set must reference GE rows") {
        LinearProgram lp;
        const int q = lp.add_var(-kInf, kInf);
        const int e = lp.add_row(Rel::EQ, 1.0, {{q, 1.0}});
        CHECK_THROWS_AS(feasibility_with_margin(lp, {e}), std::invalid_argument);
        CHECK_THROWS_AS(feasibility_with_margin(lp, {7}), std::invalid_argument);
    }
}

TEST_CASE("infeasible and unbounded programs are classified") {
    SUBCASE("contradictory rows") {
        LinearProgram lp;
        const int x = lp.add_var(-kInf, kInf, 1.0);
        lp.add_row(Rel::GE, 1.0, {{x, 1.0}});
        lp.add_row(Rel::LE, 0.0, {{x, 1.0}});
        CHECK(solve(lp).status == Status::Infeasible);
    }
    SUBCASE("empty bound box") {
        LinearProgram lp;
        lp.add_var(1.0, 0.0, 1.0);
        CHECK(solve(lp).status == Status::Infeasible);
    }
    SUBCASE("unbounded ray") {
        LinearProgram lp;
        const int x = lp.add_var(0.0, kInf, 1.0);
        lp.set_sense(Sense::Maximize);
        lp.add_row(Rel::GE, 0.0, {{x, 1.0}});
        CHECK(solve(lp).status == Status::Unbounded);
    }
}

TEST_CASE("Beale's cycling example terminates at the optimum") {
    // Classic degenerate program that cycles under naive Dantzig pricing.
    LinearProgram lp;
    const int x1 = lp.add_var(0.0, kInf, -0.75);
    const int x2 = lp.add_var(0.0, kInf, 150.0);
    const int x3 = lp.add_var(0.0, kInf, -0.02);
    const int x4 = lp.add_var(0.0, kInf, 6.0);
    lp.add_row(Rel::LE, 0.0, {{x1, 0.25}, {x2, -60.0}, {x3, -0.04}, {x4, 9.0}});
    lp.add_row(Rel::LE, 0.0, {{x1, 0.5}, {x2, -90.0}, {x3, -0.02}, {x4, 3.0}});
    lp.add_row(Rel::LE, 1.0, {{x3, 1.0}});
    const LpSolution s = solve(lp);
    REQUIRE(s.status == Status::Optimal);
    CHECK(s.value == doctest::Approx(-0.05).epsilon(1e-9));
}

TEST_CASE("randomized programs agree with vertex enumeration") {
    std::mt19937_64 rng(424242);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    std::uniform_int_distribution<int> nvars(2, 5);
    std::uniform_int_distribution<int> nrows(0, 6);
    std::uniform_int_distribution<int> relpick(0, 2);

    int feasible_seen = 0;
    for (int trial = 0; trial < 400; ++trial) {
        LinearProgram lp;
        const int n = nvars(rng);
        for (int j = 0; j < n; ++j) lp.add_var(-2.0, 3.0, coef(rng));
        const int m = nrows(rng);
        for (int i = 0; i < m; ++i) {
            RowCoeffs c;
            for (int j = 0; j < n; ++j) c.emplace_back(j, coef(rng));
            const Rel rel = static_cast<Rel>(relpick(rng));
            lp.add_row(rel, coef(rng), std::move(c));
        }
        if (trial % 2) lp.set_sense(Sense::Maximize);

        const LpSolution s = solve(lp);
        const auto oracle = testsupport::vertex_enum_optimum(lp);
        if (!oracle) {
            CHECK(s.status == Status::Infeasible);
            continue;
        }
        ++feasible_seen;
        REQUIRE_MESSAGE(s.status == Status::Optimal, "trial ", trial);
        CHECK_MESSAGE(s.value == doctest::Approx(*oracle).epsilon(1e-6), "trial ", trial);

        // Solver invariants on every optimal solve.
        CHECK(feasibility_residual(lp, s.x) <= 1e-8);
        const double dv = dual_objective_value(lp, s);
        CHECK(std::abs(dv - s.value) <= 1e-7 * std::max(1.0, std::abs(s.value)));
    }
    CHECK(feasible_seen > 100);
}

TEST_CASE("row and objective scaling changes values but never status") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> coef(-1.5, 1.5);
    for (int trial = 0; trial < 20; ++trial) {
        LinearProgram base;
        for (int j = 0; j < 3; ++j) base.add_var(-1.0, 2.0, coef(rng));
        for (int i = 0; i < 4; ++i) {
            RowCoeffs c;
            for (int j = 0; j < 3; ++j) c.emplace_back(j, coef(rng));
            base.add_row(i % 2 ? Rel::GE : Rel::LE, coef(rng), std::move(c));
        }
        const LpSolution s0 = solve(base);
        for (int k = -3; k <= 3; ++k) {
            const double f = std::pow(10.0, k);
            LinearProgram scaled;
            for (int j = 0; j < 3; ++j) scaled.add_var(-1.0, 2.0, f * base.objective()[j]);
            for (const auto& r : base.rows()) {
                RowCoeffs c = r.coeffs;
                for (auto& [j, a] : c) a *= f;
                scaled.add_row(r.rel, f * r.rhs, std::move(c));
            }
            const LpSolution sk = solve(scaled);
            REQUIRE(sk.status == s0.status);
            if (s0.status == Status::Optimal)
                CHECK(sk.value == doctest::Approx(f * s0.value).epsilon(1e-7));
        }
    }
}

TEST_CASE("duals measure rhs sensitivity") {
    LinearProgram lp;
    const int x = lp.add_var(0.0, kInf, 3.0);
    const int y = lp.add_var(0.0, kInf, 5.0);
    lp.add_row(Rel::GE, 8.0, {{x, 1.0}, {y, 2.0}});
    lp.add_row(Rel::GE, 6.0, {{x, 2.0}, {y, 1.0}});
    const LpSolution s = solve(lp);
    REQUIRE(s.status == Status::Optimal);

    const double h = 1e-4;
    for (int i = 0; i < 2; ++i) {
        LinearProgram bumped;
        bumped.add_var(0.0, kInf, 3.0);
        bumped.add_var(0.0, kInf, 5.0);
        for (int r = 0; r < 2; ++r)
            bumped.add_row(Rel::GE, lp.rows()[r].rhs + (r == i ? h : 0.0), lp.rows()[r].coeffs);
        const LpSolution sb = solve(bumped);
        REQUIRE(sb.status == Status::Optimal);
        CHECK((sb.value - s.value) / h == doctest::Approx(s.duals[i]).epsilon(1e-6));
    }
}
