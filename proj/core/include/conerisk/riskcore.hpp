#pragma once

#include <vector>

#include "conerisk/extended.hpp"
#include "conerisk/market.hpp"
#include "conerisk/pricing.hpp"
#include "conerisk/tree.hpp"

namespace conerisk {

enum class RiskKind { ShpProportional, ShpConvex, AvarComposed };

/// Which acceptance set drives the risk measure. Superhedging under
/// proportional costs wants a cone market, the convex variant a region
/// market; composed AV@R carries one level vector per trading step with
/// entries in [1e-3, 1].
struct RiskSpec {
    RiskKind kind = RiskKind::ShpProportional;
    std::vector<Vec> levels;  // AV@R only, levels[s][i] for step s -> s+1

    static RiskSpec shp_proportional() { return {RiskKind::ShpProportional, {}}; }
    static RiskSpec shp_convex() { return {RiskKind::ShpConvex, {}}; }
    static RiskSpec avar(std::vector<Vec> levels) {
        return {RiskKind::AvarComposed, std::move(levels)};
    }
};

/// Throws Error when the spec does not fit the tree/market: wrong level
/// shape or range, or a market representation mismatching the kind.
void validate_spec(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec);

/// One scalar per time-t node, extended with +inf / -inf flags.
struct RiskValue {
    int t = 0;
    std::vector<ExtValue> v;  // indexed like tree.nodes_at(t)
};

/// Minimal cash added to the claim so that the sum decomposes into
/// node-wise solvent positions over s = t..T; one LP per time-t node.
/// Claims are terminal and leaf-major: x[leaf_pos * d + i].
RiskValue rho_primal(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec,
                     const std::vector<double>& x_terminal, int t);

/// Same value from the dual side: one joint LP per time-t node over
/// leaf-indexed dual weights whose partial sums live in the dual cones.
/// Proportional superhedging only.
RiskValue rho_dual_exact(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec,
                         const std::vector<double>& x_terminal, int t);

/// Penalty of a measure/price pair: 0-or-infinity indicator for the conic
/// and AV@R specs, the summed support-function values of the solvency
/// regions for the convex spec.
RiskValue penalty_beta(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec,
                       const DualPair& pair, int t);

/// Fixed-price risk: sup over measures feasible for S of the penalized
/// negative expected liquidation value. -inf flag where no strictly
/// positive feasible measure exists.
RiskValue pi_S(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec,
               const std::vector<double>& x_terminal, const PriceSystem& sys, int t);

/// Conditional polytope of the measures a fixed selection admits at a
/// node: martingale weights for the superhedging kinds, stepwise
/// level-bounded weights for composed AV@R. The spec must have passed
/// validate_spec; `t` anchors the first constrained trading step.
EmmPolytope feasible_measure_polytope(const ScenarioTree& tree, const RiskSpec& spec,
                                      const PriceSystem& sys, int node, int t);

/// Univariate companion: the cash-embedded payoff zpay (one scalar per
/// leaf position) fed through pi_S.
RiskValue phi_S(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec,
                const std::vector<double>& zpay, const PriceSystem& sys, int t);

/// Node-wise max of pi_S over sampled price systems plus the gap against
/// the exact value; sampling from below keeps every gap >= -1e-6.
struct GapReport {
    RiskValue value;
    RiskValue reference;
    std::vector<double> gap;  // reference - value per time-t node
    double worst_gap = 0.0;   // most negative entry
};

GapReport rho_from_samples(const ScenarioTree& tree, const MarketModel& model,
                           const RiskSpec& spec, const std::vector<double>& x_terminal, int t,
                           const std::vector<DualPair>& samples);

/// Searches terminal atoms D and grid epsilons for a direction the measure
/// is blind to: rho_t(-eps 1_D e1) equal to rho_t(0) at every node.
struct RelevanceReport {
    bool relevant = true;
    long long witness_leaf = -1;  // external id when not relevant
    double witness_epsilon = 0.0;
};

RelevanceReport relevance_check(const ScenarioTree& tree, const MarketModel& model,
                                const RiskSpec& spec, int t,
                                const std::vector<double>& eps_grid);

/// Composed AV@R: per sampled S, backward recursion of one-step LPs over
/// level-constrained transition measures, then the node-wise max over
/// samples. -inf where a one-step dual set is empty.
RiskValue avar_composed(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec,
                        const std::vector<double>& x_terminal, int t,
                        const std::vector<DualPair>& samples);

}  // namespace conerisk
