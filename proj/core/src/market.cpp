#include "conerisk/market.hpp"

#include <algorithm>
#include <cmath>

namespace conerisk {

namespace {

double norm2(const Vec& g) {
    double s = 0.0;
    for (double x : g) s += x * x;
    return std::sqrt(s);
}

Vec unit(int d, int i) {
    Vec e(d, 0.0);
    e[i] = 1.0;
    return e;
}

}  // namespace

SolvencyCone cone_from_bid_ask(const BidAskSpec& spec, int assets) {
    const int d = assets;
    if (static_cast<int>(spec.bid.size()) != d - 1 ||
        static_cast<int>(spec.ask.size()) != d - 1)
        throw Error("bid-ask: need exactly one quote pair per risky asset");
    SolvencyCone cone;
    for (int i = 0; i < d; ++i) cone.generators.push_back(unit(d, i));
    for (int i = 1; i < d; ++i) {
        const double bid = spec.bid[i - 1], ask = spec.ask[i - 1];
        if (!(bid > 0.0) || !(ask >= bid))
            throw Error("bid-ask: quotes must satisfy 0 < bid <= ask");
        Vec buy(d, 0.0);  // pay ask in cash, receive the asset
        buy[0] = ask;
        buy[i] = -1.0;
        Vec sell(d, 0.0);  // deliver the asset, receive bid in cash
        sell[0] = -bid;
        sell[i] = 1.0;
        cone.generators.push_back(std::move(buy));
        cone.generators.push_back(std::move(sell));
    }
    for (const auto& [i, j, rate] : spec.cross) {
        if (i < 1 || i > d || j < 1 || j > d || i == j || !(rate > 0.0))
            throw Error("bid-ask: malformed cross quote");
        Vec g(d, 0.0);  // pay rate units of i, receive one unit of j
        g[i - 1] = rate;
        g[j - 1] = -1.0;
        cone.generators.push_back(std::move(g));
    }
    return cone;
}

MarketModel MarketModel::cones(const ScenarioTree& tree, std::vector<SolvencyCone> per_node) {
    if (static_cast<int>(per_node.size()) != tree.num_nodes())
        throw Error("market: need one cone per node");
    MarketModel m;
    m.kind_ = MarketKind::Cone;
    m.dims_ = tree.assets();
    m.cones_ = std::move(per_node);
    for (const auto& c : m.cones_)
        for (const auto& g : c.generators)
            if (static_cast<int>(g.size()) != m.dims_)
                throw Error("market: generator dimension mismatch");
    return m;
}

MarketModel MarketModel::regions(const ScenarioTree& tree, std::vector<SolvencyRegion> per_node) {
    if (static_cast<int>(per_node.size()) != tree.num_nodes())
        throw Error("market: need one region per node");
    MarketModel m;
    m.kind_ = MarketKind::Region;
    m.dims_ = tree.assets();
    m.regions_ = std::move(per_node);
    for (const auto& r : m.regions_) {
        if (r.G.size() != r.h.size()) throw Error("market: region rows/rhs mismatch");
        for (const auto& row : r.G)
            if (static_cast<int>(row.size()) != m.dims_)
                throw Error("market: region row dimension mismatch");
        for (const auto& g : r.recession)
            if (static_cast<int>(g.size()) != m.dims_)
                throw Error("market: recession generator dimension mismatch");
    }
    return m;
}

MarketModel MarketModel::from_bid_ask(const ScenarioTree& tree,
                                      const std::vector<BidAskSpec>& per_node) {
    std::vector<SolvencyCone> cs;
    cs.reserve(per_node.size());
    for (const auto& s : per_node) cs.push_back(cone_from_bid_ask(s, tree.assets()));
    return cones(tree, std::move(cs));
}

const std::vector<Vec>& MarketModel::cone_generators(int node) const {
    return kind_ == MarketKind::Cone ? cones_.at(node).generators
                                     : regions_.at(node).recession;
}

bool in_dual_cone(const Vec& w, const SolvencyCone& cone) {
    for (const auto& g : cone.generators) {
        double dot = 0.0;
        for (size_t i = 0; i < g.size(); ++i) dot += w[i] * g[i];
        if (dot < -1e-10) return false;
    }
    return true;
}

bool in_cone(const std::vector<Vec>& generators, const Vec& x) {
    const int d = static_cast<int>(x.size());
    lp::LinearProgram prog;
    for (size_t g = 0; g < generators.size(); ++g) prog.add_var(0.0, lp::kInf);
    for (int i = 0; i < d; ++i) {
        lp::RowCoeffs row;
        for (size_t g = 0; g < generators.size(); ++g)
            if (generators[g][i] != 0.0) row.emplace_back(static_cast<int>(g), generators[g][i]);
        prog.add_row(lp::Rel::EQ, x[i], std::move(row));
    }
    return lp::solve(prog).status == lp::Status::Optimal;
}

std::vector<bool> lineality_flags(const SolvencyCone& cone) {
    std::vector<bool> f(cone.generators.size(), false);
    for (size_t g = 0; g < cone.generators.size(); ++g) {
        Vec neg = cone.generators[g];
        for (double& x : neg) x = -x;
        f[g] = in_cone(cone.generators, neg);
    }
    return f;
}

double dual_cone_margin(const Vec& w, const SolvencyCone& cone) {
    const std::vector<bool> lin = lineality_flags(cone);
    double margin = lp::kInf;
    bool any = false;
    for (size_t g = 0; g < cone.generators.size(); ++g) {
        if (lin[g]) continue;
        const double n = norm2(cone.generators[g]);
        if (n <= 0.0) continue;
        double dot = 0.0;
        for (size_t i = 0; i < cone.generators[g].size(); ++i)
            dot += w[i] * cone.generators[g][i];
        margin = std::min(margin, dot / n);
        any = true;
    }
    return any ? margin : 0.0;
}

namespace {

// Interior certificate at a horizon node: the largest delta such that
// e_i +- delta e_j stays in the cone for every axis j. Positive delta
// certifies e_i in the interior (the cross-polytope around e_i embeds).
double interior_radius(const std::vector<Vec>& gens, int d, int i) {
    lp::LinearProgram prog;
    const int delta = prog.add_var(0.0, 1.0, 1.0);
    prog.set_sense(lp::Sense::Maximize);
    const int ng = static_cast<int>(gens.size());
    for (int j = 0; j < d; ++j) {
        for (int sgn = -1; sgn <= 1; sgn += 2) {
            const int base = prog.num_vars();
            for (int g = 0; g < ng; ++g) prog.add_var(0.0, lp::kInf);
            for (int k = 0; k < d; ++k) {
                lp::RowCoeffs row;
                for (int g = 0; g < ng; ++g)
                    if (gens[g][k] != 0.0) row.emplace_back(base + g, gens[g][k]);
                const double target = (k == i ? 1.0 : 0.0);
                if (k == j)
                    row.emplace_back(delta, -static_cast<double>(sgn));
                prog.add_row(lp::Rel::EQ, target, std::move(row));
            }
        }
    }
    const lp::LpSolution s = lp::solve(prog);
    return s.status == lp::Status::Optimal ? s.value : 0.0;
}

}  // namespace

MarketReport validate_market(const ScenarioTree& tree, const MarketModel& model) {
    MarketReport rep;
    auto fail = [&](std::string m) {
        rep.ok = false;
        rep.problems.push_back(std::move(m));
    };
    const int d = model.dims();

    for (int v = 0; v < tree.num_nodes(); ++v) {
        const auto& gens = model.cone_generators(v);
        for (int i = 0; i < d; ++i) {
            if (!in_cone(gens, unit(d, i))) {
                fail("node " + std::to_string(tree.ext_id(v)) +
                     ": conic part misses coordinate direction " + std::to_string(i + 1));
            }
        }
        if (model.kind() == MarketKind::Region) {
            const auto& r = model.region(v);
            for (size_t row = 0; row < r.G.size(); ++row)
                if (r.h[row] > 1e-12)
                    fail("node " + std::to_string(tree.ext_id(v)) +
                         ": region excludes the origin");
            for (const auto& rec : r.recession) {
                for (size_t row = 0; row < r.G.size(); ++row) {
                    double dot = 0.0;
                    for (int k = 0; k < d; ++k) dot += r.G[row][k] * rec[k];
                    if (dot < -1e-10)
                        fail("node " + std::to_string(tree.ext_id(v)) +
                             ": recession generator escapes the region rows");
                }
            }
        }
        if (tree.time(v) == tree.horizon()) {
            for (int i = 0; i < d; ++i) {
                if (interior_radius(model.cone_generators(v), d, i) <= 1e-9)
                    fail("horizon node " + std::to_string(tree.ext_id(v)) +
                         ": no interior certificate for direction " + std::to_string(i + 1));
            }
        }
    }
    return rep;
}

std::vector<double> k_norm(const ScenarioTree& tree, const MarketModel& model,
                           const std::vector<double>& x_terminal, int cone_start, int t) {
    const int d = model.dims();
    if (cone_start < t) throw Error("k_norm: cone_start must be >= conditioning time");
    if (static_cast<int>(x_terminal.size()) != tree.num_leaves() * d)
        throw Error("k_norm: claim size mismatch");

    std::vector<double> out(tree.num_nodes(), 0.0);
    for (int n : tree.nodes_at(t)) {
        lp::LinearProgram prog;
        const int c = prog.add_var(-lp::kInf, lp::kInf, 1.0);

        // weight variable blocks, one per (node, side)
        std::vector<int> base_up(tree.num_nodes(), -1), base_dn(tree.num_nodes(), -1);
        for (int v = 0; v < tree.num_nodes(); ++v) {
            if (tree.time(v) < cone_start || !tree.is_descendant(v, n)) continue;
            const int ng = static_cast<int>(model.cone_generators(v).size());
            base_up[v] = prog.num_vars();
            for (int g = 0; g < ng; ++g) prog.add_var(0.0, lp::kInf);
            base_dn[v] = prog.num_vars();
            for (int g = 0; g < ng; ++g) prog.add_var(0.0, lp::kInf);
        }

        for (int pos = tree.leaf_begin(n); pos < tree.leaf_end(n); ++pos) {
            const int leaf = tree.leaves()[pos];
            for (int i = 0; i < d; ++i) {
                lp::RowCoeffs up, dn;
                for (int v = leaf; v >= 0 && tree.time(v) >= cone_start; v = tree.parent(v)) {
                    if (base_up[v] < 0) continue;
                    const auto& gens = model.cone_generators(v);
                    for (size_t g = 0; g < gens.size(); ++g) {
                        if (gens[g][i] == 0.0) continue;
                        up.emplace_back(base_up[v] + static_cast<int>(g), gens[g][i]);
                        dn.emplace_back(base_dn[v] + static_cast<int>(g), gens[g][i]);
                    }
                }
                if (i == 0) {
                    up.emplace_back(c, -1.0);
                    dn.emplace_back(c, -1.0);
                }
                // c e1 - X = sum k  and  X + c e1 = sum k'
                prog.add_row(lp::Rel::EQ, -x_terminal[static_cast<size_t>(pos) * d + i],
                             std::move(up));
                prog.add_row(lp::Rel::EQ, x_terminal[static_cast<size_t>(pos) * d + i],
                             std::move(dn));
            }
        }

        const lp::LpSolution s = lp::solve(prog);
        if (s.status != lp::Status::Optimal)
            throw Error("k_norm: decomposition failed; solvency assumptions violated");
        out[n] = s.value;
    }
    return out;
}

NaReport robust_na_check(const ScenarioTree& tree, const MarketModel& model) {
    const int d = model.dims();
    lp::LinearProgram prog;
    auto zvar = [&](int v, int i) { return v * d + i; };
    for (int v = 0; v < tree.num_nodes(); ++v)
        for (int i = 0; i < d; ++i) prog.add_var(-lp::kInf, lp::kInf);
    const int eps = prog.add_var(0.0, 1e6, 1.0);
    prog.set_sense(lp::Sense::Maximize);

    prog.add_row(lp::Rel::EQ, 1.0, {{zvar(tree.root(), 0), 1.0}});
    for (int v = 0; v < tree.num_nodes(); ++v) {
        if (tree.is_leaf(v)) continue;
        for (int i = 0; i < d; ++i) {
            lp::RowCoeffs row{{zvar(v, i), 1.0}};
            for (int c : tree.children(v))
                row.emplace_back(zvar(c, i), -tree.prob(c) / tree.prob(v));
            prog.add_row(lp::Rel::EQ, 0.0, std::move(row));
        }
    }
    for (int v = 0; v < tree.num_nodes(); ++v) {
        const SolvencyCone view{model.cone_generators(v)};
        const std::vector<bool> lin = lineality_flags(view);
        for (size_t g = 0; g < view.generators.size(); ++g) {
            const double n2 = norm2(view.generators[g]);
            if (n2 <= 0.0) continue;
            lp::RowCoeffs row;
            for (int i = 0; i < d; ++i)
                if (view.generators[g][i] != 0.0)
                    row.emplace_back(zvar(v, i), view.generators[g][i] / n2);
            if (!lin[g]) row.emplace_back(eps, -1.0);
            prog.add_row(lp::Rel::GE, 0.0, std::move(row));
        }
    }

    NaReport rep;
    rep.witness = AdaptedProcess(tree, d);
    const lp::LpSolution s = lp::solve(prog);
    if (s.status != lp::Status::Optimal) return rep;
    rep.margin = s.value;
    rep.holds = s.value > 1e-9;
    for (int v = 0; v < tree.num_nodes(); ++v)
        for (int i = 0; i < d; ++i) rep.witness.at(v, i) = s.x[zvar(v, i)];
    return rep;
}

std::optional<double> region_inf_value(const MarketModel& model, int node, const Vec& y) {
    const int d = model.dims();
    if (model.kind() == MarketKind::Cone) {
        return in_dual_cone(y, model.cone(node)) ? std::optional<double>(0.0) : std::nullopt;
    }
    const auto& r = model.region(node);
    for (const auto& rec : r.recession) {
        double dot = 0.0;
        for (int i = 0; i < d; ++i) dot += y[i] * rec[i];
        if (dot < -1e-10) return std::nullopt;
    }
    lp::LinearProgram prog;
    for (int i = 0; i < d; ++i) prog.add_var(-lp::kInf, lp::kInf, y[i]);
    for (size_t row = 0; row < r.G.size(); ++row) {
        lp::RowCoeffs c;
        for (int i = 0; i < d; ++i)
            if (r.G[row][i] != 0.0) c.emplace_back(i, r.G[row][i]);
        prog.add_row(lp::Rel::GE, r.h[row], std::move(c));
    }
    const lp::LpSolution s = lp::solve(prog);
    if (s.status == lp::Status::Unbounded) return std::nullopt;
    if (s.status != lp::Status::Optimal)
        throw Error("region support: infeasible solvency region");
    return s.value;
}

std::vector<ExtValue> support_sigma(const ScenarioTree& tree, const MarketModel& model,
                                    const MeasureQ& q, const AdaptedProcess& S, int t, int s) {
    if (t > s) throw Error("support_sigma: need t <= s");
    const int d = model.dims();
    const std::vector<double> qm = node_masses(tree, q);
    const auto& tnodes = tree.nodes_at(t);
    std::vector<ExtValue> out;
    out.reserve(tnodes.size());
    for (int n : tnodes) {
        KahanSum acc;
        bool neg_inf = false;
        for (int v : tree.nodes_at(s)) {
            if (tree.ancestor_at(v, t) != n || qm[v] <= 0.0) continue;
            Vec y(d);
            for (int i = 0; i < d; ++i) y[i] = qm[v] / tree.prob(v) * S.at(v, i);
            const auto c = region_inf_value(model, v, y);
            if (!c) {
                neg_inf = true;
                break;
            }
            acc.add(tree.prob(v) / tree.prob(n) * *c);
        }
        out.push_back(neg_inf ? ExtValue::neg_inf() : ExtValue::finite(acc.get()));
    }
    return out;
}

}  // namespace conerisk
