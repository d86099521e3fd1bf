#pragma once

// JSON (de)serialization for every artifact the batch tools exchange:
// trees, markets, claims, price systems, certificates, risk values and
// consistency reports. Parsers are strict: unknown node ids, wrong vector
// lengths or type mismatches throw Error with the offending key in the
// message. Writers emit objects with lexicographically sorted keys and a
// fixed two-space indent so identical inputs always produce identical
// bytes.

#include <map>
#include <string>
#include <vector>

#include "conerisk/market.hpp"
#include "conerisk/pricing.hpp"
#include "conerisk/riskcore.hpp"
#include "conerisk/timecheck.hpp"
#include "conerisk/tree.hpp"

namespace conerisk::io {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

/// `{"horizon": T, "assets": d, "nodes": [{"id", "time", "parent", "p"?}]}`
/// with `p` required on terminal nodes. Terminal nodes with p == 0 are
/// pruned at load time together with any branch they empty out.
ScenarioTree tree_from_json(const std::string& text);
std::string tree_to_json(const ScenarioTree& tree);

/// Map from node id to one of `{"bid": [...], "ask": [...], "cross"?}`,
/// `{"generators": [[...], ...]}` or `{"G": [[...]], "h": [...],
/// "recession": [[...]]}`. The two cone forms may be mixed; the region
/// form must cover every node. Every node of the tree must be present.
MarketModel market_from_json(const ScenarioTree& tree, const std::string& text);
std::string market_to_json(const ScenarioTree& tree, const MarketModel& model);

/// `{"X": {leaf-id: [d floats]}}`; leaves absent from the map are zero.
/// Returns the leaf-major terminal vector x[leaf_pos * d + i].
std::vector<double> claim_from_json(const ScenarioTree& tree, const std::string& text);
std::string claim_to_json(const ScenarioTree& tree, const std::vector<double>& x);

/// `{"S": {node-id: [d floats]}}` covering every node.
PriceSystem prices_from_json(const ScenarioTree& tree, const std::string& text);
std::string prices_to_json(const ScenarioTree& tree, const PriceSystem& sys);

/// `{"q": {leaf-id: float}, "margin": float}`.
std::string certificate_to_json(const ScenarioTree& tree, const MeasureQ& q, double margin);

/// `{node-id: {"value": float, "flag": "finite|+inf|-inf"}}`; non-finite
/// entries carry value 0.
std::string risk_to_json(const ScenarioTree& tree, const RiskValue& val);

/// Name, pass flag, worst violation and, when present, the replayable
/// witness with its claims in the claim schema.
std::string tc_report_to_json(const ScenarioTree& tree, const TcReport& rep);

/// `[[l_1 .. l_d], ...]`, one level vector per trading step.
std::vector<Vec> levels_from_json(const std::string& text);

/// Self-contained experiment input: tree and market plus optional named
/// claims and AV@R levels.
struct ModelBundle {
    ScenarioTree tree;
    MarketModel market;
    std::map<std::string, std::vector<double>> claims;
    std::vector<Vec> levels;
};

ModelBundle bundle_from_json(const std::string& text);
ModelBundle load_bundle(const std::string& path);
std::string bundle_to_json(const ModelBundle& bundle);

}  // namespace conerisk::io
