#include "conerisk/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace conerisk {
namespace lp {

namespace {

constexpr double kPivTol = 1e-9;     // smallest pivot magnitude accepted
constexpr double kCostTol = 1e-9;    // reduced-cost optimality tolerance
constexpr double kPhase1Tol = 1e-9;  // residual infeasibility accepted after phase I
constexpr double kTieTol = 1e-12;    // ratio-test tie window

enum VarState : unsigned char { kBasic, kAtLower, kAtUpper, kFree };

// Dense two-phase bounded-variable simplex working on a row-scaled copy
// of the program. Rows become equalities via one slack each; rows whose
// slack cannot absorb the initial residual get one artificial variable.
struct Simplex {
    int m = 0;        // rows
    int nstruct = 0;  // structural vars
    int N = 0;        // structural + slacks + artificials

    std::vector<double> tab;   // m x N, equals Binv * A throughout
    std::vector<double> bcol;  // Binv * b
    std::vector<double> xb;    // values of basic vars
    std::vector<double> zrow;  // reduced costs for current phase
    std::vector<double> lo, up, val, cost;
    std::vector<int> basis;
    std::vector<VarState> state;
    std::vector<double> rowdiv;  // user row -> scaled row divisor (incl. sign flip)
    std::vector<double> tab0, bcol0;  // pristine scaled data for refactorization
    int nart = 0;
    int first_art = 0;
    int iterations = 0;
    int refactor_every = 0;  // 0 disables drift repair

    double* row(int i) { return tab.data() + static_cast<size_t>(i) * N; }

    double value_of(int j) const {
        if (state[j] == kBasic) {
            for (int i = 0; i < m; ++i)
                if (basis[i] == j) return xb[i];
        }
        return val[j];
    }

    void refresh_xb() {
        for (int i = 0; i < m; ++i) xb[i] = bcol[i];
        for (int j = 0; j < N; ++j) {
            if (state[j] == kBasic || val[j] == 0.0) continue;
            const double v = val[j];
            for (int i = 0; i < m; ++i) xb[i] -= tab[static_cast<size_t>(i) * N + j] * v;
        }
    }

    void refresh_zrow() {
        zrow.assign(N, 0.0);
        for (int j = 0; j < N; ++j) zrow[j] = cost[j];
        for (int i = 0; i < m; ++i) {
            const double cb = cost[basis[i]];
            if (cb == 0.0) continue;
            const double* r = row(i);
            for (int j = 0; j < N; ++j) zrow[j] -= cb * r[j];
        }
    }

    // Rebuilds tab, bcol, xb and zrow for the current basis from the pristine
    // scaled data, discarding accumulated pivot roundoff. Each basis column is
    // eliminated against the unused row where it is largest; a basis that
    // offers no pivot above noise level is reported as singular.
    bool refactorize() {
        tab = tab0;
        bcol = bcol0;
        std::vector<char> used(m, 0);
        const std::vector<int> bvars = basis;
        for (const int j : bvars) {
            int r = -1;
            double mag = 1e-11;
            for (int i = 0; i < m; ++i) {
                if (used[i]) continue;
                const double a = std::abs(tab[static_cast<size_t>(i) * N + j]);
                if (a > mag) { mag = a; r = i; }
            }
            if (r < 0) return false;
            used[r] = 1;
            basis[r] = j;
            double* pr = row(r);
            const double inv = 1.0 / pr[j];
            for (int jj = 0; jj < N; ++jj) pr[jj] *= inv;
            pr[j] = 1.0;
            bcol[r] *= inv;
            for (int i = 0; i < m; ++i) {
                if (i == r) continue;
                double* ri = row(i);
                const double f = ri[j];
                if (f == 0.0) continue;
                for (int jj = 0; jj < N; ++jj) ri[jj] -= f * pr[jj];
                ri[j] = 0.0;
                bcol[i] -= f * bcol[r];
            }
        }
        refresh_xb();
        refresh_zrow();
        return true;
    }

    // Returns Optimal / Unbounded / NumericallyUnstable for this phase.
    // With refactor_every set, the tableau is rebuilt from pristine data at
    // that pivot cadence and any Optimal or Unbounded claim reached on an
    // updated tableau is re-examined on a rebuilt one before being believed.
    Status iterate(long max_iter, long bland_after) {
        long it = 0;
        int since_refactor = 0;
        const auto repair = [&] {
            if (!refactorize()) return false;
            since_refactor = 0;
            return true;
        };
        while (true) {
            if (it >= max_iter) return Status::NumericallyUnstable;
            const bool bland = it >= bland_after;
            ++it;
            ++iterations;
            if (refactor_every > 0 && since_refactor >= refactor_every) {
                if (!repair()) return Status::NumericallyUnstable;
            }

            int enter = -1, dir = 0;
            double best = kCostTol;
            for (int j = 0; j < N; ++j) {
                const VarState st = state[j];
                if (st == kBasic) continue;
                if (lo[j] == up[j]) continue;
                const double z = zrow[j];
                int d = 0;
                if ((st == kAtLower || st == kFree) && z < -kCostTol) d = 1;
                else if ((st == kAtUpper || st == kFree) && z > kCostTol) d = -1;
                if (d == 0) continue;
                if (bland) { enter = j; dir = d; break; }
                if (std::abs(z) > best) { best = std::abs(z); enter = j; dir = d; }
            }
            if (enter < 0) {
                if (refactor_every > 0 && since_refactor > 0) {
                    if (!repair()) return Status::NumericallyUnstable;
                    continue;
                }
                return Status::Optimal;
            }

            // Ratio test: smallest step over basic bound hits and the
            // entering variable's own opposite bound; ties go to the
            // candidate with the lowest variable index.
            double span = up[enter] - lo[enter];
            double delta = std::isfinite(span) ? span : kInf;
            int leave = -1;        // -1 encodes a bound flip
            int leave_var = enter; // tie-break key
            for (int i = 0; i < m; ++i) {
                const double rate = tab[static_cast<size_t>(i) * N + enter] * dir;
                double limit = kInf;
                if (rate > kPivTol) {
                    const double lb = lo[basis[i]];
                    if (std::isfinite(lb)) limit = std::max(0.0, (xb[i] - lb) / rate);
                } else if (rate < -kPivTol) {
                    const double ub = up[basis[i]];
                    if (std::isfinite(ub)) limit = std::max(0.0, (xb[i] - ub) / rate);
                }
                if (limit < delta - kTieTol ||
                    (limit < delta + kTieTol && basis[i] < leave_var)) {
                    delta = limit;
                    leave = i;
                    leave_var = basis[i];
                }
            }
            if (!std::isfinite(delta)) {
                if (refactor_every > 0 && since_refactor > 0) {
                    if (!repair()) return Status::NumericallyUnstable;
                    continue;
                }
                return Status::Unbounded;
            }

            if (leave < 0) {
                // Bound flip, no basis change.
                const double step = dir * delta;
                for (int i = 0; i < m; ++i)
                    xb[i] -= tab[static_cast<size_t>(i) * N + enter] * step;
                val[enter] = (dir > 0) ? up[enter] : lo[enter];
                state[enter] = (dir > 0) ? kAtUpper : kAtLower;
                continue;
            }

            const double step = dir * delta;
            const double enter_val = value_of_nonbasic(enter) + step;
            for (int i = 0; i < m; ++i)
                if (i != leave) xb[i] -= tab[static_cast<size_t>(i) * N + enter] * step;

            const int lv = basis[leave];
            const double lrate = tab[static_cast<size_t>(leave) * N + enter] * dir;
            val[lv] = (lrate > 0) ? lo[lv] : up[lv];
            state[lv] = (lrate > 0) ? kAtLower : kAtUpper;

            // Pivot.
            double* pr = row(leave);
            const double piv = pr[enter];
            const double inv = 1.0 / piv;
            for (int j = 0; j < N; ++j) pr[j] *= inv;
            pr[enter] = 1.0;
            bcol[leave] *= inv;
            for (int i = 0; i < m; ++i) {
                if (i == leave) continue;
                double* ri = row(i);
                const double f = ri[enter];
                if (f == 0.0) continue;
                for (int j = 0; j < N; ++j) ri[j] -= f * pr[j];
                ri[enter] = 0.0;
                bcol[i] -= f * bcol[leave];
            }
            {
                const double f = zrow[enter];
                if (f != 0.0) {
                    for (int j = 0; j < N; ++j) zrow[j] -= f * pr[j];
                    zrow[enter] = 0.0;
                }
            }
            basis[leave] = enter;
            state[enter] = kBasic;
            xb[leave] = enter_val;
            ++since_refactor;

            if ((it & 0xff) == 0) refresh_xb();
        }
    }

    double value_of_nonbasic(int j) const { return val[j]; }
};

// The fast pass trusts the updated tableau; the safe pass repairs drift by
// refactorizing on a fixed cadence and before believing any claim.
LpSolution solve_impl(const LinearProgram& lp, bool safe) {
    const int nstruct = lp.num_vars();
    const int m = lp.num_rows();
    LpSolution sol;
    sol.x.assign(nstruct, 0.0);
    sol.duals.assign(m, 0.0);
    sol.reduced_costs.assign(nstruct, 0.0);

    for (int j = 0; j < nstruct; ++j) {
        if (lp.lower()[j] > lp.upper()[j] + 1e-12) {
            sol.status = Status::Infeasible;
            return sol;
        }
    }

    const double smult = (lp.sense() == Sense::Maximize) ? -1.0 : 1.0;

    Simplex sx;
    sx.m = m;
    sx.nstruct = nstruct;
    sx.lo = lp.lower();
    sx.up = lp.upper();
    sx.val.assign(nstruct, 0.0);
    sx.state.assign(nstruct, kAtLower);
    for (int j = 0; j < nstruct; ++j) {
        if (std::isfinite(sx.lo[j])) {
            sx.val[j] = sx.lo[j];
            sx.state[j] = kAtLower;
        } else if (std::isfinite(sx.up[j])) {
            sx.val[j] = sx.up[j];
            sx.state[j] = kAtUpper;
        } else {
            sx.val[j] = 0.0;
            sx.state[j] = kFree;
        }
    }

    // Row scaling and slack bounds.
    sx.rowdiv.assign(m, 1.0);
    std::vector<double> sb_lo(m), sb_up(m), resid(m);
    for (int i = 0; i < m; ++i) {
        const auto& r = lp.rows()[i];
        double mx = 0.0;
        for (const auto& [j, a] : r.coeffs) mx = std::max(mx, std::abs(a));
        if (mx <= 0.0) mx = 1.0;
        sx.rowdiv[i] = mx;
        switch (r.rel) {
            case Rel::LE: sb_lo[i] = 0.0;   sb_up[i] = kInf; break;
            case Rel::GE: sb_lo[i] = -kInf; sb_up[i] = 0.0;  break;
            case Rel::EQ: sb_lo[i] = 0.0;   sb_up[i] = 0.0;  break;
        }
        double ax = 0.0;
        for (const auto& [j, a] : r.coeffs) ax += a * sx.val[j];
        resid[i] = (r.rhs - ax) / mx;
    }

    // Decide artificials, then lay out the dense tableau.
    std::vector<int> art_of(m, -1);
    int nart = 0;
    for (int i = 0; i < m; ++i) {
        const double s = std::clamp(resid[i], sb_lo[i], sb_up[i]);
        if (std::abs(resid[i] - s) > 0.0) art_of[i] = nart++;
    }
    const int N = nstruct + m + nart;
    sx.N = N;
    sx.nart = nart;
    sx.first_art = nstruct + m;
    sx.tab.assign(static_cast<size_t>(m) * N, 0.0);
    sx.bcol.assign(m, 0.0);
    sx.xb.assign(m, 0.0);
    sx.basis.assign(m, -1);
    sx.lo.resize(N);
    sx.up.resize(N);
    sx.val.resize(N, 0.0);
    sx.state.resize(N, kAtLower);
    sx.cost.assign(N, 0.0);
    for (int j = 0; j < nstruct; ++j) sx.cost[j] = smult * lp.objective()[j];

    for (int i = 0; i < m; ++i) {
        const auto& r = lp.rows()[i];
        const int slack = nstruct + i;
        sx.lo[slack] = sb_lo[i];
        sx.up[slack] = sb_up[i];
        double flip = 1.0;
        const double s = std::clamp(resid[i], sb_lo[i], sb_up[i]);
        if (art_of[i] >= 0) flip = (resid[i] - s > 0.0) ? 1.0 : -1.0;
        sx.rowdiv[i] *= flip;  // total divisor user -> stored row

        double* tr = sx.row(i);
        for (const auto& [j, a] : r.coeffs) tr[j] += flip * a / std::abs(sx.rowdiv[i]);
        tr[slack] = flip;
        sx.bcol[i] = r.rhs / sx.rowdiv[i];

        if (art_of[i] >= 0) {
            const int aj = sx.first_art + art_of[i];
            tr[aj] = 1.0;
            sx.lo[aj] = 0.0;
            sx.up[aj] = kInf;
            sx.cost[aj] = 0.0;
            sx.basis[i] = aj;
            sx.state[aj] = kBasic;
            sx.xb[i] = std::abs(resid[i] - s);
            sx.val[slack] = s;
            sx.state[slack] = (s == sb_lo[i]) ? kAtLower : kAtUpper;
        } else {
            sx.basis[i] = slack;
            sx.state[slack] = kBasic;
            sx.xb[i] = resid[i];
            sx.val[slack] = 0.0;
        }
    }

    if (safe) {
        sx.refactor_every = 32;
        sx.tab0 = sx.tab;
        sx.bcol0 = sx.bcol;
    }

    const long bland_after = 10L * (m + N);
    const long max_iter = 200L * (m + N) + 10000;

    if (nart > 0) {
        std::vector<double> phase2 = sx.cost;
        for (int j = 0; j < N; ++j) sx.cost[j] = (j >= sx.first_art) ? 1.0 : 0.0;
        sx.refresh_zrow();
        const Status st = sx.iterate(max_iter, bland_after);
        if (st != Status::Optimal) {
            // Phase I minimizes a sum of nonnegatives; unboundedness here
            // can only be numerical noise.
            sol.status = Status::NumericallyUnstable;
            sol.iterations = sx.iterations;
            return sol;
        }
        sx.refresh_xb();
        double infeas = 0.0;
        for (int j = sx.first_art; j < N; ++j) infeas += std::abs(sx.value_of(j));
        if (infeas > kPhase1Tol) {
            sol.status = Status::Infeasible;
            sol.iterations = sx.iterations;
            return sol;
        }
        for (int j = sx.first_art; j < N; ++j) {
            sx.lo[j] = 0.0;
            sx.up[j] = 0.0;
            if (sx.state[j] != kBasic) sx.val[j] = 0.0;
        }
        sx.cost = phase2;
    }

    sx.refresh_zrow();
    const Status st = sx.iterate(max_iter, bland_after);
    sol.iterations = sx.iterations;
    if (st != Status::Optimal) {
        sol.status = (st == Status::Unbounded) ? Status::Unbounded : st;
        return sol;
    }
    sx.refresh_xb();

    for (int j = 0; j < nstruct; ++j) sol.x[j] = sx.value_of(j);
    double v = 0.0;
    for (int j = 0; j < nstruct; ++j) v += lp.objective()[j] * sol.x[j];
    sol.value = v;

    if (feasibility_residual(lp, sol.x) > 1e-8) {
        sol.status = Status::NumericallyUnstable;
        return sol;
    }

    // Slack reduced costs carry the row duals: the stored slack column is
    // flip * e_i and the stored rhs divides by flip * scale, so the two
    // flips cancel and only the positive scale remains.
    sx.refresh_zrow();
    for (int i = 0; i < m; ++i)
        sol.duals[i] = -smult * sx.zrow[nstruct + i] / std::abs(sx.rowdiv[i]);

    for (int j = 0; j < nstruct; ++j) sol.reduced_costs[j] = lp.objective()[j];
    for (int i = 0; i < m; ++i) {
        const double y = sol.duals[i];
        if (y == 0.0) continue;
        for (const auto& [j, a] : lp.rows()[i].coeffs) sol.reduced_costs[j] -= y * a;
    }

    sol.status = Status::Optimal;
    return sol;
}

}  // namespace

LpSolution solve(const LinearProgram& lp) {
    LpSolution sol = solve_impl(lp, false);
    if (sol.status == Status::Optimal) return sol;
    // Any other verdict may be an artifact of tableau drift, so it is only
    // reported after a pass whose claims were checked against rebuilt data.
    return solve_impl(lp, true);
}

double feasibility_residual(const LinearProgram& lp, const std::vector<double>& x) {
    double worst = 0.0;
    for (int j = 0; j < lp.num_vars(); ++j) {
        if (std::isfinite(lp.lower()[j])) worst = std::max(worst, lp.lower()[j] - x[j]);
        if (std::isfinite(lp.upper()[j])) worst = std::max(worst, x[j] - lp.upper()[j]);
    }
    for (const auto& r : lp.rows()) {
        double ax = 0.0;
        for (const auto& [j, a] : r.coeffs) ax += a * x[j];
        switch (r.rel) {
            case Rel::LE: worst = std::max(worst, ax - r.rhs); break;
            case Rel::GE: worst = std::max(worst, r.rhs - ax); break;
            case Rel::EQ: worst = std::max(worst, std::abs(ax - r.rhs)); break;
        }
    }
    return worst;
}

double dual_objective_value(const LinearProgram& lp, const LpSolution& sol) {
    double d = 0.0;
    for (int i = 0; i < lp.num_rows(); ++i) d += sol.duals[i] * lp.rows()[i].rhs;
    const bool maximize = lp.sense() == Sense::Maximize;
    for (int j = 0; j < lp.num_vars(); ++j) {
        const double rc = sol.reduced_costs[j];
        if (std::abs(rc) < 1e-11) continue;
        const bool take_lo = maximize ? (rc < 0) : (rc > 0);
        const double b = take_lo ? lp.lower()[j] : lp.upper()[j];
        if (!std::isfinite(b)) return maximize ? kInf : -kInf;
        d += rc * b;
    }
    return d;
}

FeasibilityReport feasibility_with_margin(const LinearProgram& lp,
                                          const std::vector<int>& strict_rows) {
    LinearProgram aug;
    for (int j = 0; j < lp.num_vars(); ++j) aug.add_var(lp.lower()[j], lp.upper()[j], 0.0);
    const int eps = aug.add_var(0.0, 1e9, 1.0);
    aug.set_sense(Sense::Maximize);

    std::vector<bool> strict(lp.num_rows(), false);
    for (int i : strict_rows) {
        if (i < 0 || i >= lp.num_rows())
            throw std::invalid_argument("feasibility_with_margin: strict row out of range");
        if (lp.rows()[i].rel != Rel::GE)
            throw std::invalid_argument("feasibility_with_margin: strict rows must be GE rows");
        strict[i] = true;
    }
    for (int i = 0; i < lp.num_rows(); ++i) {
        RowCoeffs c = lp.rows()[i].coeffs;
        if (strict[i]) c.emplace_back(eps, -1.0);
        aug.add_row(lp.rows()[i].rel, lp.rows()[i].rhs, std::move(c));
    }

    FeasibilityReport rep;
    const LpSolution s = solve(aug);
    if (s.status != Status::Optimal) return rep;
    rep.margin = std::max(0.0, s.value);
    rep.feasible = rep.margin > 1e-9;
    rep.witness.assign(s.x.begin(), s.x.begin() + lp.num_vars());
    return rep;
}

}  // namespace lp
}  // namespace conerisk
