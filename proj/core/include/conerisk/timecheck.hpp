#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "conerisk/riskcore.hpp"

namespace conerisk {

/// Replayable description of a failed consistency check: rerunning the
/// named check on the stored claims reproduces the violation.
struct TcWitness {
    std::vector<double> x;  // claim under test
    std::vector<double> y;  // comparison claim when the check uses a pair
    int t = -1;
    int s = -1;
    long long node = -1;   // external id of the worst node
    long long trial = -1;  // seeded trial index, -1 when not trial-based
};

struct TcReport {
    std::string name;
    bool pass = true;
    double violation = 0.0;  // worst magnitude observed
    std::optional<TcWitness> witness;
};

/// Recursion of the fixed-selection risk: pi_t(X) must match
/// pi_t([pi_s(0) - pi_s(X)] e1) at every time-t node within 1e-6. The
/// selection has to be arbitrage-free so both sides are finite. `skew`
/// offsets the recursed cash payload; it exists so self-tests can watch
/// the check fail.
TcReport pi_recursion_check(const ScenarioTree& tree, const MarketModel& model,
                            const RiskSpec& spec, const std::vector<double>& x_terminal,
                            const PriceSystem& sys, int t, int s, double skew = 0.0);

/// Sample-restricted recursion of the scalar measure: the node-wise max
/// over samples of the recursed value must equal the sampled lower bound
/// of the measure itself, exactly up to LP tolerance.
TcReport rho_recursion_check(const ScenarioTree& tree, const MarketModel& model,
                             const RiskSpec& spec, const std::vector<double>& x_terminal,
                             int t, int s, const std::vector<DualPair>& samples);

/// The penalized value process V_t = pi_t(X) + beta_t must shrink in
/// conditional expectation under the pair's measure. Throws when the
/// penalty or the fixed-selection risk is not finite somewhere. `skew`
/// shifts the terminal slice for self-tests.
TcReport supermartingale_check(const ScenarioTree& tree, const MarketModel& model,
                               const RiskSpec& spec, const std::vector<double>& x_terminal,
                               const DualPair& pair, double skew = 0.0);

/// Minimal extra cash under which X splits into a time-s measurable part
/// acceptable at t plus a remainder acceptable at s. Acceptability is
/// relative to the risk of the zero claim, which folds non-normalized
/// convex penalties back into the normalized statement. Acceptable claims
/// split with near-zero slack; rejected ones report how much cash the
/// split is short.
struct SplitResult {
    bool feasible = false;     // slack within 1e-8
    double slack = 0.0;        // minimized cash shortfall of the split
    std::vector<double> x_ts;  // time-s part, (time-s node, asset) major
};

SplitResult acceptance_split(const ScenarioTree& tree, const MarketModel& model,
                             const RiskSpec& spec, const PriceSystem& sys,
                             const std::vector<double>& x_terminal, int t, int s);

/// Decomposition law of the acceptance sets between two times: random
/// claims shifted onto the acceptance boundary must split, and sums of
/// acceptable parts must stay acceptable. Boundaries and acceptability
/// are relative to the risk of the zero claim, as in acceptance_split.
TcReport acceptance_decomposition_check(const ScenarioTree& tree, const MarketModel& model,
                                        const RiskSpec& spec, const PriceSystem& sys, int t,
                                        int s, int n_random, std::uint64_t seed);

/// Seeded search for an order reversal of the scalar measure across time:
/// a pair with rho_s(X) <= rho_s(Y) everywhere but rho_t(X) > rho_t(Y)
/// somewhere. Each candidate claim is paired with its time-s cash
/// equivalent and both reading orders of the pair are tried. Structured
/// subtree claims run before random ones and the first hit wins, so a
/// given seed always returns the same witness. pass means no reversal
/// surfaced within the trial budget.
TcReport rho_tc_falsify(const ScenarioTree& tree, const MarketModel& model,
                        const RiskSpec& spec, long long trials, std::uint64_t seed);

}  // namespace conerisk
