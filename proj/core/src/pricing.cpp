#include "conerisk/pricing.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <unordered_set>

#include "conerisk/rng.hpp"

namespace conerisk {

namespace {

constexpr double kCashTol = 1e-9;
constexpr double kBoundTol = 1e-9;

std::string node_tag(const ScenarioTree& tree, int v) {
    return "node " + std::to_string(tree.ext_id(v));
}

/// Worst-case liquidation bound per asset: max(||e_i||_{K_T,0}, 1), with
/// the cash slot fixed at 1.
std::vector<double> asset_bounds(const ScenarioTree& tree, const MarketModel& model) {
    const int d = tree.assets();
    std::vector<double> bound(d, 1.0);
    for (int i = 1; i < d; ++i) {
        std::vector<double> unit(static_cast<size_t>(tree.num_leaves()) * d, 0.0);
        for (int p = 0; p < tree.num_leaves(); ++p) unit[static_cast<size_t>(p) * d + i] = 1.0;
        const double n = k_norm(tree, model, unit, tree.horizon(), 0).at(0);
        bound[i] = std::max(n, 1.0);
    }
    return bound;
}

void check_dual_membership(const ScenarioTree& tree, const MarketModel& model,
                           const AdaptedProcess& proc, PriceReport& rep) {
    const int d = tree.assets();
    for (int v = 0; v < tree.num_nodes(); ++v) {
        Vec w(proc.row(v), proc.row(v) + d);
        if (!in_dual_cone(w, SolvencyCone{model.cone_generators(v)})) {
            rep.ok = false;
            rep.problems.push_back("dual-cone membership fails at " + node_tag(tree, v));
        }
    }
}

}  // namespace

PriceReport validate_price_system(const ScenarioTree& tree, const MarketModel& model,
                                  const PriceSystem& sys) {
    PriceReport rep;
    if (sys.S.dims() != tree.assets() || model.dims() != tree.assets()) {
        rep.ok = false;
        rep.problems.push_back("dimension mismatch between tree, market and price system");
        return rep;
    }
    for (int v = 0; v < tree.num_nodes(); ++v) {
        if (std::abs(sys.S.at(v, 0) - 1.0) > kCashTol) {
            rep.ok = false;
            rep.problems.push_back("cash component != 1 at " + node_tag(tree, v));
        }
    }
    check_dual_membership(tree, model, sys.S, rep);
    const auto bound = asset_bounds(tree, model);
    for (int v = 0; v < tree.num_nodes(); ++v) {
        for (int i = 1; i < tree.assets(); ++i) {
            if (std::abs(sys.S.at(v, i)) > bound[i] + kBoundTol) {
                rep.ok = false;
                rep.problems.push_back("price bound exceeded for asset " + std::to_string(i + 1) +
                                       " at " + node_tag(tree, v));
            }
        }
    }
    return rep;
}

PriceReport validate_cps(const ScenarioTree& tree, const MarketModel& model,
                         const ConsistentPriceSystem& cps) {
    PriceReport rep;
    if (cps.Z.dims() != tree.assets() || model.dims() != tree.assets()) {
        rep.ok = false;
        rep.problems.push_back("dimension mismatch between tree, market and price system");
        return rep;
    }
    if (std::abs(cps.Z.at(tree.root(), 0) - 1.0) > kCashTol) {
        rep.ok = false;
        rep.problems.push_back("cash component not normalized to 1 at the root");
    }
    for (int v = 0; v < tree.num_nodes(); ++v) {
        if (tree.is_leaf(v)) continue;
        for (int i = 0; i < tree.assets(); ++i) {
            KahanSum acc;
            for (int c : tree.children(v)) acc.add(tree.prob(c) * cps.Z.at(c, i));
            if (std::abs(acc.get() - tree.prob(v) * cps.Z.at(v, i)) > 1e-8) {
                rep.ok = false;
                rep.problems.push_back("martingale property fails for asset " +
                                       std::to_string(i + 1) + " at " + node_tag(tree, v));
            }
        }
    }
    check_dual_membership(tree, model, cps.Z, rep);
    return rep;
}

EmmPolytope emm_polytope(const ScenarioTree& tree, const PriceSystem& sys, int node) {
    EmmPolytope out;
    auto& prog = out.prog;
    const int d = sys.S.dims();
    const int lb = tree.leaf_begin(node);
    const int le = tree.leaf_end(node);
    for (int p = lb; p < le; ++p) {
        prog.add_var(0.0, 1.0);
        out.leaf_positions.push_back(p);
    }
    for (int k = 0; k < le - lb; ++k)
        out.strict_rows.push_back(prog.add_row(lp::Rel::GE, 0.0, {{k, 1.0}}));
    {
        lp::RowCoeffs mass;
        for (int k = 0; k < le - lb; ++k) mass.emplace_back(k, 1.0);
        prog.add_row(lp::Rel::EQ, 1.0, std::move(mass));
    }
    for (int s = tree.time(node); s < tree.horizon(); ++s) {
        for (int v : tree.nodes_at(s)) {
            if (tree.leaf_begin(v) < lb || tree.leaf_end(v) > le) continue;
            for (int i = 1; i < d; ++i) {
                lp::RowCoeffs row;
                for (int p = tree.leaf_begin(v); p < tree.leaf_end(v); ++p) {
                    const double c = sys.S.at(tree.leaves()[p], i) - sys.S.at(v, i);
                    if (c != 0.0) row.emplace_back(p - lb, c);
                }
                if (!row.empty()) prog.add_row(lp::Rel::EQ, 0.0, std::move(row));
            }
        }
    }
    return out;
}

NaCertificate na_check(const ScenarioTree& tree, const PriceSystem& sys) {
    auto poly = emm_polytope(tree, sys, tree.root());
    const auto rep = lp::feasibility_with_margin(poly.prog, poly.strict_rows);
    NaCertificate out;
    out.holds = rep.feasible;
    out.margin = rep.margin;
    if (rep.feasible) {
        std::vector<double> w(tree.num_leaves(), 0.0);
        for (size_t k = 0; k < poly.leaf_positions.size(); ++k)
            w[poly.leaf_positions[k]] = rep.witness[k];
        out.witness = MeasureQ::from_leaf_weights(tree, std::move(w));
    }
    return out;
}

bool na_check_at(const ScenarioTree& tree, const PriceSystem& sys, int t) {
    for (int v : tree.nodes_at(t)) {
        auto poly = emm_polytope(tree, sys, v);
        if (!lp::feasibility_with_margin(poly.prog, poly.strict_rows).feasible) return false;
    }
    return true;
}

DualPair cps_to_pair(const ScenarioTree& tree, const ConsistentPriceSystem& cps, int t) {
    const int d = cps.Z.dims();
    DualPair out;
    out.start = t;
    out.S.S = AdaptedProcess(tree, d);
    for (int v = 0; v < tree.num_nodes(); ++v) {
        const double cash = cps.Z.at(v, 0);
        out.S.S.at(v, 0) = 1.0;
        for (int i = 1; i < d; ++i) out.S.S.at(v, i) = cash > 0.0 ? cps.Z.at(v, i) / cash : 1.0;
    }
    std::vector<double> w(tree.num_leaves(), 0.0);
    for (int leaf : tree.leaves()) {
        const double anchor = cps.Z.at(tree.ancestor_at(leaf, t), 0);
        if (anchor > 0.0) w[tree.leaf_pos(leaf)] = tree.prob(leaf) * cps.Z.at(leaf, 0) / anchor;
    }
    out.q = MeasureQ::from_leaf_weights(tree, std::move(w));
    out.cls = out.q.kind == MeasureKind::Equivalent ? PairClass::QtEquivalent : PairClass::Qt;
    return out;
}

ConsistentPriceSystem pair_to_cps(const ScenarioTree& tree, const DualPair& pair, int t) {
    const int d = pair.S.S.dims();
    ConsistentPriceSystem out;
    out.Z = AdaptedProcess(tree, d);
    for (int s = t; s <= tree.horizon(); ++s) {
        const auto xi = xi_bar(tree, pair.q, t, s);
        for (int v : tree.nodes_at(s))
            for (int i = 0; i < d; ++i) out.Z.at(v, i) = xi[v] * pair.S.S.at(v, i);
    }
    for (int s = t - 1; s >= 0; --s) {
        for (int v : tree.nodes_at(s)) {
            for (int i = 0; i < d; ++i) {
                KahanSum acc;
                for (int c : tree.children(v)) acc.add(tree.prob(c) * out.Z.at(c, i));
                out.Z.at(v, i) = acc.get() / tree.prob(v);
            }
        }
    }
    return out;
}

SampleSet sample_price_systems(const ScenarioTree& tree, const MarketModel& model, int n,
                               std::uint64_t seed) {
    const int d = tree.assets();
    const int nv = tree.num_nodes();

    // Polytope of consistent price systems in the Z variables. Duals of
    // orthant-containing cones live in the orthant, hence the zero lower
    // bounds; the martingale rows keep everything bounded through the
    // normalized root cash.
    lp::LinearProgram prog;
    for (int k = 0; k < nv * d; ++k) prog.add_var(0.0, lp::kInf);
    const auto var = [d](int v, int i) { return v * d + i; };
    prog.add_row(lp::Rel::EQ, 1.0, {{var(tree.root(), 0), 1.0}});
    for (int v = 0; v < nv; ++v) {
        if (tree.is_leaf(v)) continue;
        for (int i = 0; i < d; ++i) {
            lp::RowCoeffs row{{var(v, i), tree.prob(v)}};
            for (int c : tree.children(v)) row.emplace_back(var(c, i), -tree.prob(c));
            prog.add_row(lp::Rel::EQ, 0.0, std::move(row));
        }
    }
    for (int v = 0; v < nv; ++v) {
        for (const Vec& g : model.cone_generators(v)) {
            lp::RowCoeffs row;
            for (int i = 0; i < d; ++i)
                if (g[i] != 0.0) row.emplace_back(var(v, i), g[i]);
            if (!row.empty()) prog.add_row(lp::Rel::GE, 0.0, std::move(row));
        }
    }
    prog.set_sense(lp::Sense::Maximize);

    SampleSet out;
    out.requested = n;
    std::unordered_set<std::string> seen;
    for (int k = 0; k < n; ++k) {
        auto rng = rng_for(seed, static_cast<std::uint64_t>(k));
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<double> dir(static_cast<size_t>(nv) * d);
        double norm2 = 0.0;
        for (double& c : dir) {
            c = gauss(rng);
            norm2 += c * c;
        }
        const double norm = std::sqrt(norm2);
        for (int j = 0; j < nv * d; ++j) prog.set_objective(j, norm > 0.0 ? dir[j] / norm : 0.0);

        const auto sol = lp::solve(prog);
        if (sol.status == lp::Status::Infeasible)
            throw Error("consistent price system polytope is empty; market admits arbitrage");
        if (!sol.optimal()) {
            ++out.rejected;
            continue;
        }
        ConsistentPriceSystem cps;
        cps.Z = AdaptedProcess(tree, d);
        for (int v = 0; v < nv; ++v)
            for (int i = 0; i < d; ++i) cps.Z.at(v, i) = sol.x[var(v, i)];
        DualPair pair = cps_to_pair(tree, cps, 0);
        if (!validate_price_system(tree, model, pair.S).ok || !na_check(tree, pair.S).holds) {
            ++out.rejected;
            continue;
        }
        if (pair.q.kind == MeasureKind::Equivalent) pair.cls = PairClass::QeOfS;

        std::string key;
        key.reserve(static_cast<size_t>(nv) * d * 13);
        char buf[32];
        for (int v = 0; v < nv; ++v) {
            for (int i = 0; i < d; ++i) {
                std::snprintf(buf, sizeof buf, "%.9f,", pair.S.S.at(v, i));
                key += buf;
            }
        }
        for (double qw : pair.q.w) {
            std::snprintf(buf, sizeof buf, "%.9f,", qw);
            key += buf;
        }
        if (!seen.insert(std::move(key)).second) {
            ++out.duplicates;
            continue;
        }
        out.pairs.push_back(std::move(pair));
        ++out.accepted;
    }
    return out;
}

std::vector<double> dual_norm_value(const ScenarioTree& tree, const MarketModel& model,
                                    const DualPair& pair, int t) {
    const int d = tree.assets();
    const auto qm = node_masses(tree, pair.q);
    std::vector<double> out;
    out.reserve(tree.nodes_at(t).size());
    for (int n : tree.nodes_at(t)) {
        const int lb = tree.leaf_begin(n);
        const int le = tree.leaf_end(n);

        // vars: X per leaf (free), then cone weights for the two unit-ball
        // decompositions e1 - X in K_T and X + e1 in K_T per leaf.
        lp::LinearProgram prog;
        std::vector<int> xv(static_cast<size_t>(le - lb) * d);
        for (int p = lb; p < le; ++p) {
            const int leaf = tree.leaves()[p];
            const double lw = qm[n] > 0.0 ? pair.q.w[p] / qm[n] : tree.prob(leaf) / tree.prob(n);
            for (int i = 0; i < d; ++i)
                xv[static_cast<size_t>(p - lb) * d + i] =
                    prog.add_var(-lp::kInf, lp::kInf, lw * pair.S.S.at(leaf, i));
        }
        for (int p = lb; p < le; ++p) {
            const int leaf = tree.leaves()[p];
            const auto& gens = model.cone_generators(leaf);
            for (int side = 0; side < 2; ++side) {
                std::vector<int> wv;
                wv.reserve(gens.size());
                for (size_t g = 0; g < gens.size(); ++g) wv.push_back(prog.add_var(0.0, lp::kInf));
                const double sgn = side == 0 ? 1.0 : -1.0;
                for (int i = 0; i < d; ++i) {
                    lp::RowCoeffs row{{xv[static_cast<size_t>(p - lb) * d + i], sgn}};
                    for (size_t g = 0; g < gens.size(); ++g)
                        if (gens[g][i] != 0.0) row.emplace_back(wv[g], gens[g][i]);
                    prog.add_row(lp::Rel::EQ, i == 0 ? 1.0 : 0.0, std::move(row));
                }
            }
        }

        double best = 0.0;
        for (lp::Sense sense : {lp::Sense::Maximize, lp::Sense::Minimize}) {
            prog.set_sense(sense);
            const auto sol = lp::solve(prog);
            if (!sol.optimal()) throw Error("dual norm LP did not solve at " + node_tag(tree, n));
            best = std::max(best, std::abs(sol.value));
        }
        out.push_back(best);
    }
    return out;
}

}  // namespace conerisk
