#include "conerisk/io.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include "json.hpp"

namespace conerisk::io {

using nlohmann::json;

namespace {

// json's default object backing is std::map, so every writer below emits
// keys in sorted order and dump() is byte-deterministic.
constexpr int kIndent = 2;

json parse_text(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string(what) + ": invalid JSON: " + e.what());
    }
}

const json& need(const json& j, const char* key, const char* what) {
    const auto it = j.find(key);
    if (it == j.end()) throw Error(std::string(what) + ": missing key \"" + key + "\"");
    return *it;
}

long long need_int(const json& j, const char* key, const char* what) {
    const json& v = need(j, key, what);
    if (!v.is_number_integer())
        throw Error(std::string(what) + ": \"" + key + "\" must be an integer");
    return v.get<long long>();
}

double need_num(const json& j, const char* key, const char* what) {
    const json& v = need(j, key, what);
    if (!v.is_number()) throw Error(std::string(what) + ": \"" + key + "\" must be a number");
    return v.get<double>();
}

Vec num_vec(const json& v, const char* what) {
    if (!v.is_array()) throw Error(std::string(what) + " must be an array of numbers");
    Vec out;
    out.reserve(v.size());
    for (const json& e : v) {
        if (!e.is_number()) throw Error(std::string(what) + " must hold numbers only");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<Vec> num_mat(const json& v, size_t cols, const char* what) {
    if (!v.is_array()) throw Error(std::string(what) + " must be an array of rows");
    std::vector<Vec> out;
    out.reserve(v.size());
    for (const json& row : v) {
        Vec r = num_vec(row, what);
        if (r.size() != cols)
            throw Error(std::string(what) + " rows must have length " + std::to_string(cols));
        out.push_back(std::move(r));
    }
    return out;
}

/// Object keys name nodes by external id; anything that is not a plain
/// integer is rejected so typos never alias onto a valid node.
long long key_to_id(const std::string& key, const char* what) {
    size_t pos = 0;
    long long ext = 0;
    try {
        ext = std::stoll(key, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != key.size())
        throw Error(std::string(what) + ": key \"" + key + "\" is not a node id");
    return ext;
}

std::string id_key(long long ext) { return std::to_string(ext); }

ScenarioTree tree_from_obj(const json& j) {
    if (!j.is_object()) throw Error("tree: top level must be an object");
    const int horizon = static_cast<int>(need_int(j, "horizon", "tree"));
    const int assets = static_cast<int>(need_int(j, "assets", "tree"));
    const json& nodes = need(j, "nodes", "tree");
    if (!nodes.is_array()) throw Error("tree: \"nodes\" must be an array");

    std::vector<NodeSpec> specs;
    specs.reserve(nodes.size());
    std::map<long long, int> fanout;
    for (const json& nj : nodes) {
        if (!nj.is_object()) throw Error("tree: node entries must be objects");
        NodeSpec s;
        s.id = need_int(nj, "id", "tree node");
        s.time = static_cast<int>(need_int(nj, "time", "tree node"));
        s.parent = s.time > 0 ? need_int(nj, "parent", "tree node") : -1;
        if (s.time == horizon && horizon > 0) s.p = need_num(nj, "p", "tree node");
        if (s.time > 0) ++fanout[s.parent];
        specs.push_back(s);
    }

    // Null atoms carry no information: drop p == 0 terminal nodes, then
    // walk upward dropping any inner node whose whole subtree went away.
    // Nodes that were childless in the input are kept for the validator
    // to flag. Remaining masses still sum to whatever they did before.
    std::map<long long, int> alive;
    std::vector<NodeSpec> kept;
    kept.reserve(specs.size());
    for (int t = horizon; t >= 0; --t) {
        for (const NodeSpec& s : specs) {
            if (s.time != t) continue;
            const bool empty_subtree =
                t == horizon ? s.p == 0.0 : fanout.count(s.id) != 0 && alive[s.id] == 0;
            if (empty_subtree) continue;
            kept.push_back(s);
            if (t > 0) ++alive[s.parent];
        }
    }
    return ScenarioTree(horizon, assets, kept);
}

json tree_to_obj(const ScenarioTree& tree) {
    json nodes = json::array();
    for (int v = 0; v < tree.num_nodes(); ++v) {
        json n;
        n["id"] = tree.ext_id(v);
        n["time"] = tree.time(v);
        if (tree.time(v) > 0) n["parent"] = tree.ext_id(tree.parent(v));
        if (tree.time(v) == tree.horizon()) n["p"] = tree.prob(v);
        nodes.push_back(std::move(n));
    }
    json j;
    j["horizon"] = tree.horizon();
    j["assets"] = tree.assets();
    j["nodes"] = std::move(nodes);
    return j;
}

/// Gathers one JSON entry per tree node from an id-keyed object.
std::vector<const json*> per_node_entries(const ScenarioTree& tree, const json& j,
                                          const char* what) {
    if (!j.is_object())
        throw Error(std::string(what) + ": top level must map node ids to entries");
    std::vector<const json*> per(tree.num_nodes(), nullptr);
    for (auto it = j.begin(); it != j.end(); ++it) {
        const long long ext = key_to_id(it.key(), what);
        int v = 0;
        try {
            v = tree.index_of(ext);
        } catch (const Error&) {
            throw Error(std::string(what) + ": unknown node id " + it.key());
        }
        if (per[v] != nullptr)
            throw Error(std::string(what) + ": node " + it.key() + " listed twice");
        per[v] = &it.value();
    }
    for (int v = 0; v < tree.num_nodes(); ++v)
        if (per[v] == nullptr)
            throw Error(std::string(what) + ": node " + id_key(tree.ext_id(v)) + " missing");
    return per;
}

MarketModel market_from_obj(const ScenarioTree& tree, const json& j) {
    const auto per = per_node_entries(tree, j, "market");
    const int n = tree.num_nodes();
    const size_t d = static_cast<size_t>(tree.assets());

    bool any_region = false;
    for (int v = 0; v < n; ++v)
        if (per[v]->is_object() && per[v]->contains("G")) any_region = true;

    if (any_region) {
        std::vector<SolvencyRegion> regions(n);
        for (int v = 0; v < n; ++v) {
            const json& e = *per[v];
            if (!e.is_object() || !e.contains("G"))
                throw Error("market: region nodes cannot be mixed with cone nodes (node " +
                            id_key(tree.ext_id(v)) + ")");
            regions[v].G = num_mat(need(e, "G", "market"), d, "market \"G\"");
            regions[v].h = num_vec(need(e, "h", "market"), "market \"h\"");
            if (regions[v].h.size() != regions[v].G.size())
                throw Error("market: \"h\" must have one entry per row of \"G\"");
            regions[v].recession =
                num_mat(need(e, "recession", "market"), d, "market \"recession\"");
        }
        return MarketModel::regions(tree, std::move(regions));
    }

    std::vector<SolvencyCone> cones(n);
    for (int v = 0; v < n; ++v) {
        const json& e = *per[v];
        if (!e.is_object())
            throw Error("market: node " + id_key(tree.ext_id(v)) + " entry must be an object");
        if (e.contains("generators")) {
            cones[v].generators = num_mat(e["generators"], d, "market \"generators\"");
            continue;
        }
        BidAskSpec spec;
        spec.bid = num_vec(need(e, "bid", "market"), "market \"bid\"");
        spec.ask = num_vec(need(e, "ask", "market"), "market \"ask\"");
        if (spec.bid.size() != d - 1 || spec.ask.size() != d - 1)
            throw Error("market: \"bid\"/\"ask\" must list the " + std::to_string(d - 1) +
                        " risky assets (node " + id_key(tree.ext_id(v)) + ")");
        if (e.contains("cross")) {
            const json& cr = e["cross"];
            if (!cr.is_array()) throw Error("market: \"cross\" must be an array of triples");
            for (const json& c : cr) {
                if (!c.is_array() || c.size() != 3 || !c[0].is_number_integer() ||
                    !c[1].is_number_integer() || !c[2].is_number())
                    throw Error("market: \"cross\" entries must be [i, j, rate]");
                spec.cross.emplace_back(c[0].get<int>(), c[1].get<int>(), c[2].get<double>());
            }
        }
        cones[v] = cone_from_bid_ask(spec, static_cast<int>(d));
    }
    return MarketModel::cones(tree, std::move(cones));
}

json market_to_obj(const ScenarioTree& tree, const MarketModel& model) {
    json j;
    for (int v = 0; v < tree.num_nodes(); ++v) {
        json e;
        if (model.kind() == MarketKind::Cone) {
            e["generators"] = model.cone(v).generators;
        } else {
            e["G"] = model.region(v).G;
            e["h"] = model.region(v).h;
            e["recession"] = model.region(v).recession;
        }
        j[id_key(tree.ext_id(v))] = std::move(e);
    }
    return j;
}

std::vector<double> claim_from_obj(const ScenarioTree& tree, const json& j) {
    if (!j.is_object()) throw Error("claim: top level must be an object");
    const json& X = need(j, "X", "claim");
    if (!X.is_object()) throw Error("claim: \"X\" must map leaf ids to vectors");
    const size_t d = static_cast<size_t>(tree.assets());
    std::vector<double> x(static_cast<size_t>(tree.num_leaves()) * d, 0.0);
    std::vector<bool> seen(static_cast<size_t>(tree.num_leaves()), false);
    for (auto it = X.begin(); it != X.end(); ++it) {
        const long long ext = key_to_id(it.key(), "claim");
        int v = 0;
        try {
            v = tree.index_of(ext);
        } catch (const Error&) {
            throw Error("claim: unknown node id " + it.key());
        }
        if (!tree.is_leaf(v)) throw Error("claim: node " + it.key() + " is not terminal");
        const Vec row = num_vec(it.value(), "claim entry");
        if (row.size() != d)
            throw Error("claim: entries must have length " + std::to_string(d));
        const size_t pos = static_cast<size_t>(tree.leaf_pos(v));
        if (seen[pos]) throw Error("claim: leaf " + it.key() + " listed twice");
        seen[pos] = true;
        for (size_t i = 0; i < d; ++i) x[pos * d + i] = row[i];
    }
    return x;
}

json claim_to_obj(const ScenarioTree& tree, const std::vector<double>& x) {
    const size_t d = static_cast<size_t>(tree.assets());
    if (x.size() != static_cast<size_t>(tree.num_leaves()) * d)
        throw Error("claim: vector has the wrong length for this tree");
    json X;
    for (int leaf : tree.leaves()) {
        const size_t pos = static_cast<size_t>(tree.leaf_pos(leaf));
        X[id_key(tree.ext_id(leaf))] = Vec(x.begin() + pos * d, x.begin() + (pos + 1) * d);
    }
    json j;
    j["X"] = std::move(X);
    return j;
}

PriceSystem prices_from_obj(const ScenarioTree& tree, const json& j) {
    if (!j.is_object()) throw Error("prices: top level must be an object");
    const auto per = per_node_entries(tree, need(j, "S", "prices"), "prices");
    const size_t d = static_cast<size_t>(tree.assets());
    PriceSystem sys{AdaptedProcess(tree, static_cast<int>(d))};
    for (int v = 0; v < tree.num_nodes(); ++v) {
        const Vec row = num_vec(*per[v], "prices entry");
        if (row.size() != d)
            throw Error("prices: entries must have length " + std::to_string(d));
        for (size_t i = 0; i < d; ++i) sys.S.at(v, static_cast<int>(i)) = row[i];
    }
    return sys;
}

json prices_to_obj(const ScenarioTree& tree, const PriceSystem& sys) {
    json S;
    for (int v = 0; v < tree.num_nodes(); ++v) {
        Vec row(static_cast<size_t>(tree.assets()));
        for (int i = 0; i < tree.assets(); ++i) row[static_cast<size_t>(i)] = sys.S.at(v, i);
        S[id_key(tree.ext_id(v))] = std::move(row);
    }
    json j;
    j["S"] = std::move(S);
    return j;
}

json risk_to_obj(const ScenarioTree& tree, const RiskValue& val) {
    const auto& nodes = tree.nodes_at(val.t);
    if (val.v.size() != nodes.size())
        throw Error("risk report: value count does not match the time slice");
    json j;
    for (size_t k = 0; k < nodes.size(); ++k) {
        json e;
        e["value"] = val.v[k].finite_p() ? val.v[k].value() : 0.0;
        e["flag"] = to_string(val.v[k].flag);
        j[id_key(tree.ext_id(nodes[k]))] = std::move(e);
    }
    return j;
}

std::string dump(const json& j) { return j.dump(kIndent) + "\n"; }

}  // namespace

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io: cannot open \"" + path + "\" for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw Error("io: failed reading \"" + path + "\"");
    return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io: cannot open \"" + path + "\" for writing");
    out << text;
    if (!out) throw Error("io: failed writing \"" + path + "\"");
}

ScenarioTree tree_from_json(const std::string& text) {
    return tree_from_obj(parse_text(text, "tree"));
}

std::string tree_to_json(const ScenarioTree& tree) { return dump(tree_to_obj(tree)); }

MarketModel market_from_json(const ScenarioTree& tree, const std::string& text) {
    return market_from_obj(tree, parse_text(text, "market"));
}

std::string market_to_json(const ScenarioTree& tree, const MarketModel& model) {
    return dump(market_to_obj(tree, model));
}

std::vector<double> claim_from_json(const ScenarioTree& tree, const std::string& text) {
    return claim_from_obj(tree, parse_text(text, "claim"));
}

std::string claim_to_json(const ScenarioTree& tree, const std::vector<double>& x) {
    return dump(claim_to_obj(tree, x));
}

PriceSystem prices_from_json(const ScenarioTree& tree, const std::string& text) {
    return prices_from_obj(tree, parse_text(text, "prices"));
}

std::string prices_to_json(const ScenarioTree& tree, const PriceSystem& sys) {
    return dump(prices_to_obj(tree, sys));
}

std::string certificate_to_json(const ScenarioTree& tree, const MeasureQ& q, double margin) {
    if (q.w.size() != static_cast<size_t>(tree.num_leaves()))
        throw Error("certificate: weight count does not match the leaves");
    json qj;
    for (int leaf : tree.leaves())
        qj[id_key(tree.ext_id(leaf))] = q.w[static_cast<size_t>(tree.leaf_pos(leaf))];
    json j;
    j["q"] = std::move(qj);
    j["margin"] = margin;
    return dump(j);
}

std::string risk_to_json(const ScenarioTree& tree, const RiskValue& val) {
    return dump(risk_to_obj(tree, val));
}

std::string tc_report_to_json(const ScenarioTree& tree, const TcReport& rep) {
    json j;
    j["name"] = rep.name;
    j["pass"] = rep.pass;
    j["violation"] = rep.violation;
    if (rep.witness.has_value()) {
        const TcWitness& w = *rep.witness;
        json wj;
        wj["t"] = w.t;
        wj["s"] = w.s;
        wj["node"] = w.node;
        wj["trial"] = w.trial;
        if (!w.x.empty()) wj["x"] = claim_to_obj(tree, w.x);
        if (!w.y.empty()) wj["y"] = claim_to_obj(tree, w.y);
        j["witness"] = std::move(wj);
    }
    return dump(j);
}

std::vector<Vec> levels_from_json(const std::string& text) {
    const json j = parse_text(text, "levels");
    if (!j.is_array()) throw Error("levels: top level must be an array of level vectors");
    std::vector<Vec> out;
    out.reserve(j.size());
    for (const json& row : j) out.push_back(num_vec(row, "levels entry"));
    return out;
}

ModelBundle bundle_from_json(const std::string& text) {
    const json j = parse_text(text, "bundle");
    if (!j.is_object()) throw Error("bundle: top level must be an object");
    ScenarioTree tree = tree_from_obj(need(j, "tree", "bundle"));
    MarketModel market = market_from_obj(tree, need(j, "market", "bundle"));
    ModelBundle bundle{std::move(tree), std::move(market), {}, {}};
    if (j.contains("claims")) {
        const json& cs = j["claims"];
        if (!cs.is_object()) throw Error("bundle: \"claims\" must map names to claims");
        for (auto it = cs.begin(); it != cs.end(); ++it)
            bundle.claims.emplace(it.key(), claim_from_obj(bundle.tree, it.value()));
    }
    if (j.contains("levels")) {
        const json& ls = j["levels"];
        if (!ls.is_array()) throw Error("bundle: \"levels\" must be an array of level vectors");
        for (const json& row : ls) bundle.levels.push_back(num_vec(row, "bundle levels entry"));
    }
    return bundle;
}

ModelBundle load_bundle(const std::string& path) { return bundle_from_json(read_file(path)); }

std::string bundle_to_json(const ModelBundle& bundle) {
    json j;
    j["tree"] = tree_to_obj(bundle.tree);
    j["market"] = market_to_obj(bundle.tree, bundle.market);
    if (!bundle.claims.empty()) {
        json cs;
        for (const auto& [name, x] : bundle.claims) cs[name] = claim_to_obj(bundle.tree, x);
        j["claims"] = std::move(cs);
    }
    if (!bundle.levels.empty()) j["levels"] = bundle.levels;
    return dump(j);
}

}  // namespace conerisk::io
