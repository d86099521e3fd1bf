#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conerisk/market.hpp"
#include "conerisk/tree.hpp"

namespace conerisk {

/// Node-wise frictionless price process with the cash asset as numeraire:
/// S_{t,1} is identically 1.
struct PriceSystem {
    AdaptedProcess S;
};

/// Martingale state-price process: Z is a P-martingale, node-wise in the
/// dual solvency cones, normalized by Z_{0,1} = 1.
struct ConsistentPriceSystem {
    AdaptedProcess Z;
};

/// Membership class of a pair: absolutely continuous measure, equivalent
/// measure, or equivalent measure certified against a fixed arbitrage-free
/// price system.
enum class PairClass { Qt, QtEquivalent, QeOfS };

/// Measure/price pair (q, S) anchored at a starting time; the q-density
/// times S_T reproduces the consistent price system on the q-support.
struct DualPair {
    MeasureQ q;
    PriceSystem S;
    int start = 0;
    PairClass cls = PairClass::Qt;
};

struct PriceReport {
    bool ok = true;
    std::vector<std::string> problems;
};

/// Checks, in this order: unit cash component at every node, node-wise
/// dual-cone membership, and the sup-norm bound per risky asset
/// max(||e_i||_{K_T,0}, 1) derived from worst-case liquidation.
PriceReport validate_price_system(const ScenarioTree& tree, const MarketModel& model,
                                  const PriceSystem& sys);

/// Same invariants for a consistent price system.
PriceReport validate_cps(const ScenarioTree& tree, const MarketModel& model,
                         const ConsistentPriceSystem& cps);

/// Martingale-measure polytope of S over the subtree rooted at `node`:
/// one weight per leaf below the node, a unit mass row, per-node
/// martingale rows, and GE positivity rows whose indices are exported as
/// the strict set for margin queries.
struct EmmPolytope {
    lp::LinearProgram prog;
    std::vector<int> strict_rows;
    std::vector<int> leaf_positions;  // leaves() positions of the weight vars
};

EmmPolytope emm_polytope(const ScenarioTree& tree, const PriceSystem& sys, int node);

inline EmmPolytope emm_polytope(const ScenarioTree& tree, const PriceSystem& sys) {
    return emm_polytope(tree, sys, 0);
}

struct NaCertificate {
    bool holds = false;
    double margin = 0.0;
    MeasureQ witness;
};

/// Arbitrage-freeness of the frictionless market with prices S: existence
/// of an equivalent martingale measure, certified by the margin LP on the
/// root polytope.
NaCertificate na_check(const ScenarioTree& tree, const PriceSystem& sys);

/// Conditional version at time t: every time-t subtree must admit a
/// strictly positive conditional martingale measure.
bool na_check_at(const ScenarioTree& tree, const PriceSystem& sys, int t);

/// (q, S) from a consistent price system started at t: the measure is the
/// terminal cash density against the time-t cash, the prices divide out
/// the cash component; zero-cash nodes fall back to weight 0 / price 1.
DualPair cps_to_pair(const ScenarioTree& tree, const ConsistentPriceSystem& cps, int t);

/// Inverse construction Z_s = xi_bar_{t,s}(q) * S_s for s >= t, extended
/// backward below t by P-conditional expectations.
ConsistentPriceSystem pair_to_cps(const ScenarioTree& tree, const DualPair& pair, int t);

inline ConsistentPriceSystem pair_to_cps(const ScenarioTree& tree, const DualPair& pair) {
    return pair_to_cps(tree, pair, pair.start);
}

struct SampleSet {
    std::vector<DualPair> pairs;
    int requested = 0;
    int accepted = 0;
    int duplicates = 0;
    int rejected = 0;  // vertex mapped to a system failing validation or na_check
};

/// Vertex sampling of the consistent-price-system polytope under seeded
/// random objectives; each vertex maps through cps_to_pair(., 0) and is
/// kept when the resulting S validates and is arbitrage-free. Duplicates
/// are folded by hashing prices rounded to 9 decimals.
SampleSet sample_price_systems(const ScenarioTree& tree, const MarketModel& model, int n,
                               std::uint64_t seed);

/// sup{ |E_q[S_T . X | F_t]| : ||X||_{K_T,t} <= 1 } per time-t node; the
/// pairing of the conditional expectation with the terminal cone norm
/// makes this exactly 1 for any valid pair.
std::vector<double> dual_norm_value(const ScenarioTree& tree, const MarketModel& model,
                                    const DualPair& pair, int t);

}  // namespace conerisk
