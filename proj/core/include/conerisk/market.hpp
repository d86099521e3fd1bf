#pragma once

#include <optional>
#include <tuple>
#include <vector>

#include "conerisk/extended.hpp"
#include "conerisk/tree.hpp"

namespace conerisk {

using Vec = std::vector<double>;

/// Bid-ask quotes against the cash asset for assets 2..d (index 0 holds
/// asset 2). Optional cross entries (i, j, rate) allow direct exchange of
/// one unit of asset j for `rate` units of asset i, both 1-based.
struct BidAskSpec {
    Vec bid, ask;
    std::vector<std::tuple<int, int, double>> cross;
};

/// Solvency cone at one node, generated by finitely many directions.
struct SolvencyCone {
    std::vector<Vec> generators;
};

/// Convex solvency region {x : G x >= h} with an explicit recession cone.
struct SolvencyRegion {
    std::vector<Vec> G;
    Vec h;
    std::vector<Vec> recession;
};

enum class MarketKind { Cone, Region };

/// Per-node solvency structure for the whole tree.
class MarketModel {
public:
    static MarketModel cones(const ScenarioTree& tree, std::vector<SolvencyCone> per_node);
    static MarketModel regions(const ScenarioTree& tree, std::vector<SolvencyRegion> per_node);
    static MarketModel from_bid_ask(const ScenarioTree& tree,
                                    const std::vector<BidAskSpec>& per_node);

    MarketKind kind() const { return kind_; }
    int dims() const { return dims_; }
    const SolvencyCone& cone(int node) const { return cones_.at(node); }
    const SolvencyRegion& region(int node) const { return regions_.at(node); }

    /// Conic part at a node: the cone itself, or a region's recession cone.
    const std::vector<Vec>& cone_generators(int node) const;

private:
    MarketKind kind_ = MarketKind::Cone;
    int dims_ = 0;
    std::vector<SolvencyCone> cones_;
    std::vector<SolvencyRegion> regions_;
};

/// Generators {e_1..e_d} plus ask_i e1 - e_i and e_i - bid_i e1 per risky
/// asset; cross quotes add rate e_i - e_j.
SolvencyCone cone_from_bid_ask(const BidAskSpec& spec, int assets);

/// Membership in the dual cone: every generator dot product >= -1e-10.
bool in_dual_cone(const Vec& w, const SolvencyCone& cone);

/// Smallest dot product against unit-normalized generators, skipping
/// generators in the lineality space of the cone (their duals vanish on
/// the whole dual cone, so no margin is achievable there).
double dual_cone_margin(const Vec& w, const SolvencyCone& cone);

/// Whether x lies in the cone spanned by the generators (small LP).
bool in_cone(const std::vector<Vec>& generators, const Vec& x);

/// Flags generators g with -g also in the cone.
std::vector<bool> lineality_flags(const SolvencyCone& cone);

struct MarketReport {
    bool ok = true;
    std::vector<std::string> problems;
};

/// Solvency-side standing assumptions: every node's conic part contains
/// the nonnegative orthant, regions additionally contain the origin, and
/// at the horizon each coordinate direction admits an interior-point
/// certificate (a box of radius > 1e-9 around e_i inside the cone).
MarketReport validate_market(const ScenarioTree& tree, const MarketModel& model);

/// Cone-induced norm of a terminal claim, conditioned at time t, with the
/// trading cone sum starting at time `cone_start` >= t: the smallest
/// F_t-cash c with c e1 - X and X + c e1 both decomposable over the
/// subtree. Claims are stored leaf-major: x[leaf_pos * d + i].
std::vector<double> k_norm(const ScenarioTree& tree, const MarketModel& model,
                           const std::vector<double>& x_terminal, int cone_start, int t);

inline std::vector<double> k_norm(const ScenarioTree& tree, const MarketModel& model,
                                  const std::vector<double>& x_terminal, int t) {
    return k_norm(tree, model, x_terminal, t, t);
}

struct NaReport {
    bool holds = false;
    double margin = 0.0;
    AdaptedProcess witness;  // martingale strictly inside the dual cones
};

/// Margin-LP test for robust absence of arbitrage: an adapted P-martingale
/// Z with Z_{0,1} = 1 lying node-wise in the dual cones, with a uniform
/// positive margin against every generator outside the lineality space.
NaReport robust_na_check(const ScenarioTree& tree, const MarketModel& model);

/// inf{ y . z : z in C_v } for a region node; unbounded regions yield -inf.
std::optional<double> region_inf_value(const MarketModel& model, int node, const Vec& y);

/// sigma_t^s(Y) with Y_v = E[dq/dP | F_s](v) * S_s(v): per time-t node,
/// sum over time-s descendants of the P-weighted per-node infima. Returns
/// one extended value per time-t node (indexed like nodes_at(t)).
std::vector<ExtValue> support_sigma(const ScenarioTree& tree, const MarketModel& model,
                                    const MeasureQ& q, const AdaptedProcess& S, int t, int s);

}  // namespace conerisk
