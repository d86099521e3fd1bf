#include "conerisk/riskcore.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace conerisk {

namespace {

constexpr double kLevelFloor = 1e-3;
constexpr double kIndicatorSlack = 1e-10;
constexpr double kStrictGain = 1e-9;

void check_claim(const ScenarioTree& tree, const std::vector<double>& x) {
    if (x.size() != static_cast<size_t>(tree.num_leaves()) * tree.assets())
        throw Error("claim size does not match leaves * assets");
}

void check_time(const ScenarioTree& tree, int t) {
    if (t < 0 || t > tree.horizon()) throw Error("time index out of range");
}

double payoff_under(const PriceSystem& sys, const ScenarioTree& tree, int leaf,
                    const std::vector<double>& x) {
    const int d = tree.assets();
    const double* row = sys.S.row(leaf);
    const double* xi = x.data() + static_cast<size_t>(tree.leaf_pos(leaf)) * d;
    double acc = 0.0;
    for (int i = 0; i < d; ++i) acc += row[i] * xi[i];
    return acc;
}

/// Ancestors of `leaf` from time t down to the horizon, inclusive.
std::vector<int> path_from(const ScenarioTree& tree, int leaf, int t) {
    std::vector<int> path;
    for (int v = leaf; v >= 0 && tree.time(v) >= t; v = tree.parent(v)) path.push_back(v);
    std::reverse(path.begin(), path.end());
    return path;
}

/// Superhedging LP at one node: minimize the cash m with X + m e1 written
/// as a sum of per-node solvent positions along every scenario path.
lp::LpSolution solve_primal_at(const ScenarioTree& tree, const MarketModel& model,
                               const RiskSpec& spec, const std::vector<double>& x, int t,
                               int node) {
    const int d = tree.assets();
    lp::LinearProgram prog;
    const int m = prog.add_var(-lp::kInf, lp::kInf, 1.0);

    // one block of variables per subtree node: generator weights for the
    // conic spec, a free region member plus membership rows otherwise
    std::vector<int> first_var(tree.num_nodes(), -1);
    for (int v = node; v < tree.num_nodes(); ++v) {
        if (!tree.is_descendant(v, node)) continue;
        if (spec.kind == RiskKind::ShpProportional) {
            const auto& gens = model.cone_generators(v);
            first_var[v] = prog.num_vars();
            for (size_t g = 0; g < gens.size(); ++g) prog.add_var(0.0, lp::kInf);
        } else {
            first_var[v] = prog.num_vars();
            for (int i = 0; i < d; ++i) prog.add_var(-lp::kInf, lp::kInf);
            const auto& reg = model.region(v);
            for (size_t r = 0; r < reg.G.size(); ++r) {
                lp::RowCoeffs row;
                for (int i = 0; i < d; ++i)
                    if (reg.G[r][i] != 0.0) row.emplace_back(first_var[v] + i, reg.G[r][i]);
                prog.add_row(lp::Rel::GE, reg.h[r], std::move(row));
            }
        }
    }

    for (int p = tree.leaf_begin(node); p < tree.leaf_end(node); ++p) {
        const int leaf = tree.leaves()[p];
        const auto path = path_from(tree, leaf, t);
        for (int i = 0; i < d; ++i) {
            lp::RowCoeffs row;
            if (i == 0) row.emplace_back(m, -1.0);
            for (int v : path) {
                if (spec.kind == RiskKind::ShpProportional) {
                    const auto& gens = model.cone_generators(v);
                    for (size_t g = 0; g < gens.size(); ++g)
                        if (gens[g][i] != 0.0)
                            row.emplace_back(first_var[v] + static_cast<int>(g), gens[g][i]);
                } else {
                    row.emplace_back(first_var[v] + i, 1.0);
                }
            }
            prog.add_row(lp::Rel::EQ, x[static_cast<size_t>(p) * d + i], std::move(row));
        }
    }
    return lp::solve(prog);
}

/// Conditional feasible-measure polytope of the AV@R dual set on the
/// subtree: terminal weights with unit mass and the linearized per-step
/// level constraints lambda_i S_{s+1,i}(c) q(c) <= S_{s,i}(v) phat(c) q(v).
EmmPolytope avar_polytope(const ScenarioTree& tree, const RiskSpec& spec, const PriceSystem& sys,
                          int node, int t) {
    EmmPolytope out;
    auto& prog = out.prog;
    const int d = tree.assets();
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
    for (int s = t; s < tree.horizon(); ++s) {
        for (int v : tree.nodes_at(s)) {
            if (tree.leaf_begin(v) < lb || tree.leaf_end(v) > le) continue;
            for (int c : tree.children(v)) {
                const double phat = tree.prob(c) / tree.prob(v);
                for (int i = 0; i < d; ++i) {
                    const double up = spec.levels[s][i] * sys.S.at(c, i);
                    const double down = sys.S.at(v, i) * phat;
                    lp::RowCoeffs row;
                    for (int p = tree.leaf_begin(v); p < tree.leaf_end(v); ++p) {
                        double coef = -down;
                        if (p >= tree.leaf_begin(c) && p < tree.leaf_end(c)) coef += up;
                        if (coef != 0.0) row.emplace_back(p - lb, coef);
                    }
                    if (!row.empty()) prog.add_row(lp::Rel::LE, 0.0, std::move(row));
                }
            }
        }
    }
    return out;
}

/// inf over the solvency set at node v priced by y; cone markets yield 0
/// or nothing (unbounded), regions a finite support value or nothing.
std::optional<double> node_support_inf(const ScenarioTree& tree, const MarketModel& model, int v,
                                       const double* y) {
    Vec yy(y, y + tree.assets());
    return region_inf_value(model, v, yy);
}

}  // namespace

void validate_spec(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec) {
    switch (spec.kind) {
        case RiskKind::ShpProportional:
            if (model.kind() != MarketKind::Cone)
                throw Error("proportional superhedging expects a cone market");
            break;
        case RiskKind::ShpConvex:
            if (model.kind() != MarketKind::Region)
                throw Error("convex superhedging expects a region market");
            break;
        case RiskKind::AvarComposed: {
            if (spec.levels.size() != static_cast<size_t>(tree.horizon()))
                throw Error("AV@R needs one level vector per trading step");
            for (const Vec& lv : spec.levels) {
                if (lv.size() != static_cast<size_t>(tree.assets()))
                    throw Error("AV@R level vector has wrong dimension");
                for (double l : lv)
                    if (!(l >= kLevelFloor && l <= 1.0))
                        throw Error("AV@R levels must lie in [1e-3, 1]");
            }
            break;
        }
    }
}

RiskValue rho_primal(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec,
                     const std::vector<double>& x_terminal, int t) {
    if (spec.kind == RiskKind::AvarComposed)
        throw Error("rho_primal handles superhedging specs only");
    validate_spec(tree, model, spec);
    check_claim(tree, x_terminal);
    check_time(tree, t);

    RiskValue out;
    out.t = t;
    for (int node : tree.nodes_at(t)) {
        const auto sol = solve_primal_at(tree, model, spec, x_terminal, t, node);
        if (!sol.optimal())
            throw Error("superhedging LP failed at node " + std::to_string(tree.ext_id(node)) +
                        "; the market violates the no-arbitrage standing assumption");
        out.v.push_back(ExtValue::finite(sol.value));
    }
    return out;
}

RiskValue rho_dual_exact(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec,
                         const std::vector<double>& x_terminal, int t) {
    if (spec.kind != RiskKind::ShpProportional)
        throw Error("exact dual LP is defined for proportional superhedging only");
    validate_spec(tree, model, spec);
    check_claim(tree, x_terminal);
    check_time(tree, t);
    const int d = tree.assets();

    RiskValue out;
    out.t = t;
    for (int node : tree.nodes_at(t)) {
        const int lb = tree.leaf_begin(node);
        const int le = tree.leaf_end(node);

        // leaf-indexed dual weights; duals of orthant-containing cones sit
        // in the orthant, so zero lower bounds lose nothing
        lp::LinearProgram prog;
        for (int p = lb; p < le; ++p)
            for (int i = 0; i < d; ++i)
                prog.add_var(0.0, lp::kInf, -x_terminal[static_cast<size_t>(p) * d + i]);
        const auto var = [&](int p, int i) { return (p - lb) * d + i; };

        lp::RowCoeffs cash;
        for (int p = lb; p < le; ++p) cash.emplace_back(var(p, 0), 1.0);
        prog.add_row(lp::Rel::EQ, 1.0, std::move(cash));

        for (int v = node; v < tree.num_nodes(); ++v) {
            if (!tree.is_descendant(v, node)) continue;
            for (const Vec& g : model.cone_generators(v)) {
                lp::RowCoeffs row;
                for (int p = tree.leaf_begin(v); p < tree.leaf_end(v); ++p)
                    for (int i = 0; i < d; ++i)
                        if (g[i] != 0.0) row.emplace_back(var(p, i), g[i]);
                if (!row.empty()) prog.add_row(lp::Rel::GE, 0.0, std::move(row));
            }
        }
        prog.set_sense(lp::Sense::Maximize);
        const auto sol = lp::solve(prog);
        if (!sol.optimal())
            throw Error("dual superhedging LP failed at node " +
                        std::to_string(tree.ext_id(node)));
        out.v.push_back(ExtValue::finite(sol.value));
    }
    return out;
}

RiskValue penalty_beta(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec,
                       const DualPair& pair, int t) {
    validate_spec(tree, model, spec);
    check_time(tree, t);
    RiskValue out;
    out.t = t;

    if (spec.kind == RiskKind::AvarComposed) {
        const bool equivalent = pair.q.kind == MeasureKind::Equivalent;
        std::vector<std::vector<double>> xi(tree.horizon());
        for (int s = t; s < tree.horizon(); ++s) xi[s] = xi_bar(tree, pair.q, s, s + 1);
        for (int node : tree.nodes_at(t)) {
            bool ok = equivalent;
            for (int s = t; ok && s < tree.horizon(); ++s) {
                for (int v : tree.nodes_at(s)) {
                    if (!tree.is_descendant(v, node)) continue;
                    for (int c : tree.children(v)) {
                        for (int i = 0; i < tree.assets(); ++i) {
                            if (spec.levels[s][i] * xi[s][c] * pair.S.S.at(c, i) >
                                pair.S.S.at(v, i) + kIndicatorSlack) {
                                ok = false;
                            }
                        }
                    }
                }
            }
            out.v.push_back(ok ? ExtValue::finite(0.0) : ExtValue::pos_inf());
        }
        return out;
    }

    // superhedging penalties run through the state-price lift: weight each
    // subtree node by its transition probability and price the solvency
    // set there by Z_s; conic sets give the 0 / +inf indicator for free
    const ConsistentPriceSystem cps = pair_to_cps(tree, pair, t);
    for (int node : tree.nodes_at(t)) {
        KahanSum acc;
        bool infinite = false;
        for (int v = node; v < tree.num_nodes() && !infinite; ++v) {
            if (!tree.is_descendant(v, node) || tree.time(v) < t) continue;
            const auto inf_v = node_support_inf(tree, model, v, cps.Z.row(v));
            if (!inf_v) {
                infinite = true;
                break;
            }
            acc.add(-tree.prob(v) / tree.prob(node) * *inf_v);
        }
        out.v.push_back(infinite ? ExtValue::pos_inf() : ExtValue::finite(acc.get()));
    }
    return out;
}

EmmPolytope feasible_measure_polytope(const ScenarioTree& tree, const RiskSpec& spec,
                                      const PriceSystem& sys, int node, int t) {
    return spec.kind == RiskKind::AvarComposed ? avar_polytope(tree, spec, sys, node, t)
                                               : emm_polytope(tree, sys, node);
}

RiskValue pi_S(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec,
               const std::vector<double>& x_terminal, const PriceSystem& sys, int t) {
    validate_spec(tree, model, spec);
    check_claim(tree, x_terminal);
    check_time(tree, t);
    const int d = tree.assets();

    // region support values per node, shared across the time-t nodes;
    // cone markets contribute nothing here
    std::vector<std::optional<double>> support(tree.num_nodes(), 0.0);
    if (spec.kind == RiskKind::ShpConvex)
        for (int v = 0; v < tree.num_nodes(); ++v)
            if (tree.time(v) >= t) support[v] = node_support_inf(tree, model, v, sys.S.row(v));

    RiskValue out;
    out.t = t;
    for (int node : tree.nodes_at(t)) {
        bool bottomless = false;
        if (spec.kind == RiskKind::ShpConvex)
            for (int v = node; v < tree.num_nodes() && !bottomless; ++v)
                if (tree.is_descendant(v, node) && tree.time(v) >= t && !support[v])
                    bottomless = true;
        if (bottomless) {
            // some reachable solvency set is unbounded against S: every
            // equivalent measure carries an infinite penalty
            out.v.push_back(ExtValue::neg_inf());
            continue;
        }

        EmmPolytope poly = feasible_measure_polytope(tree, spec, sys, node, t);
        if (!lp::feasibility_with_margin(poly.prog, poly.strict_rows).feasible) {
            out.v.push_back(ExtValue::neg_inf());
            continue;
        }

        for (int p = tree.leaf_begin(node); p < tree.leaf_end(node); ++p) {
            const int leaf = tree.leaves()[p];
            double obj = -payoff_under(sys, tree, leaf, x_terminal);
            if (spec.kind == RiskKind::ShpConvex)
                for (int v = leaf; v >= 0 && tree.time(v) >= t; v = tree.parent(v))
                    obj += *support[v];
            poly.prog.set_objective(p - tree.leaf_begin(node), obj);
        }
        poly.prog.set_sense(lp::Sense::Maximize);
        const auto sol = lp::solve(poly.prog);
        if (!sol.optimal())
            throw Error("fixed-price risk LP failed at node " +
                        std::to_string(tree.ext_id(node)));
        out.v.push_back(ExtValue::finite(sol.value));
    }
    return out;
}

RiskValue phi_S(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec,
                const std::vector<double>& zpay, const PriceSystem& sys, int t) {
    if (zpay.size() != static_cast<size_t>(tree.num_leaves()))
        throw Error("scalar payoff size does not match the number of leaves");
    std::vector<double> embedded(static_cast<size_t>(tree.num_leaves()) * tree.assets(), 0.0);
    for (int p = 0; p < tree.num_leaves(); ++p)
        embedded[static_cast<size_t>(p) * tree.assets()] = zpay[p];
    return pi_S(tree, model, spec, embedded, sys, t);
}

GapReport rho_from_samples(const ScenarioTree& tree, const MarketModel& model,
                           const RiskSpec& spec, const std::vector<double>& x_terminal, int t,
                           const std::vector<DualPair>& samples) {
    if (samples.empty()) throw Error("sample list is empty");
    GapReport rep;
    rep.value.t = t;
    rep.value.v.assign(tree.nodes_at(t).size(), ExtValue::neg_inf());
    for (const DualPair& pair : samples) {
        const RiskValue piv = pi_S(tree, model, spec, x_terminal, pair.S, t);
        for (size_t n = 0; n < piv.v.size(); ++n) {
            if (!piv.v[n].finite_p()) continue;
            if (!rep.value.v[n].finite_p() || piv.v[n].v > rep.value.v[n].v)
                rep.value.v[n] = piv.v[n];
        }
    }

    switch (spec.kind) {
        case RiskKind::ShpProportional:
            rep.reference = rho_dual_exact(tree, model, spec, x_terminal, t);
            break;
        case RiskKind::ShpConvex:
            rep.reference = rho_primal(tree, model, spec, x_terminal, t);
            break;
        case RiskKind::AvarComposed:
            rep.reference = avar_composed(tree, model, spec, x_terminal, t, samples);
            break;
    }

    rep.worst_gap = 0.0;
    for (size_t n = 0; n < rep.value.v.size(); ++n) {
        double g;
        const ExtValue& lo = rep.value.v[n];
        const ExtValue& ref = rep.reference.v[n];
        if (ref.finite_p() && lo.finite_p()) g = ref.v - lo.v;
        else if (!ref.finite_p() && !lo.finite_p() && ref.flag == lo.flag) g = 0.0;
        else if (ref.flag == ValueFlag::PosInf || lo.flag == ValueFlag::NegInf)
            g = std::numeric_limits<double>::infinity();
        else g = -std::numeric_limits<double>::infinity();
        rep.gap.push_back(g);
        rep.worst_gap = std::min(rep.worst_gap, g);
    }
    return rep;
}

RelevanceReport relevance_check(const ScenarioTree& tree, const MarketModel& model,
                                const RiskSpec& spec, int t,
                                const std::vector<double>& eps_grid) {
    if (spec.kind == RiskKind::AvarComposed)
        throw Error("relevance check targets the superhedging specs");
    check_time(tree, t);
    const int d = tree.assets();

    std::vector<double> zero(static_cast<size_t>(tree.num_leaves()) * d, 0.0);
    const RiskValue base = rho_primal(tree, model, spec, zero, t);

    RelevanceReport rep;
    for (double eps : eps_grid) {
        for (int leaf : tree.leaves()) {
            auto x = zero;
            x[static_cast<size_t>(tree.leaf_pos(leaf)) * d] = -eps;
            const RiskValue bumped = rho_primal(tree, model, spec, x, t);
            bool somewhere = false;
            for (size_t n = 0; n < bumped.v.size(); ++n)
                somewhere = somewhere || bumped.v[n].value() > base.v[n].value() + kStrictGain;
            if (!somewhere) {
                rep.relevant = false;
                rep.witness_leaf = tree.ext_id(leaf);
                rep.witness_epsilon = eps;
                return rep;
            }
        }
    }
    return rep;
}

RiskValue avar_composed(const ScenarioTree& tree, const MarketModel& model, const RiskSpec& spec,
                        const std::vector<double>& x_terminal, int t,
                        const std::vector<DualPair>& samples) {
    if (spec.kind != RiskKind::AvarComposed) throw Error("avar_composed needs an AV@R spec");
    validate_spec(tree, model, spec);
    check_claim(tree, x_terminal);
    check_time(tree, t);
    if (samples.empty()) throw Error("sample list is empty");
    const int d = tree.assets();

    RiskValue out;
    out.t = t;
    out.v.assign(tree.nodes_at(t).size(), ExtValue::neg_inf());

    std::vector<ExtValue> phi(tree.num_nodes());
    for (const DualPair& pair : samples) {
        const auto& S = pair.S.S;
        for (int leaf : tree.leaves())
            phi[leaf] = ExtValue::finite(-payoff_under(pair.S, tree, leaf, x_terminal));

        for (int s = tree.horizon() - 1; s >= t; --s) {
            for (int v : tree.nodes_at(s)) {
                const auto& kids = tree.children(v);
                bool dead = false;
                for (int c : kids) dead = dead || !phi[c].finite_p();
                if (dead) {
                    // a -inf child poisons every strictly positive
                    // one-step measure
                    phi[v] = ExtValue::neg_inf();
                    continue;
                }
                lp::LinearProgram step;
                lp::RowCoeffs mass;
                for (size_t k = 0; k < kids.size(); ++k) {
                    const int c = kids[k];
                    const double phat = tree.prob(c) / tree.prob(v);
                    double ub = 1.0;
                    for (int i = 0; i < d; ++i) {
                        const double denom = spec.levels[s][i] * S.at(c, i);
                        if (denom > 0.0) ub = std::min(ub, phat * S.at(v, i) / denom);
                    }
                    step.add_var(0.0, ub, phi[c].v);
                    mass.emplace_back(static_cast<int>(k), 1.0);
                }
                step.add_row(lp::Rel::EQ, 1.0, std::move(mass));
                step.set_sense(lp::Sense::Maximize);
                const auto sol = lp::solve(step);
                if (sol.status == lp::Status::Infeasible) {
                    phi[v] = ExtValue::neg_inf();
                } else if (sol.optimal()) {
                    phi[v] = ExtValue::finite(sol.value);
                } else {
                    throw Error("one-step AV@R LP failed at node " +
                                std::to_string(tree.ext_id(v)));
                }
            }
        }
        const auto& nodes = tree.nodes_at(t);
        for (size_t n = 0; n < nodes.size(); ++n) {
            const ExtValue& cand = phi[nodes[n]];
            if (!cand.finite_p()) continue;
            if (!out.v[n].finite_p() || cand.v > out.v[n].v) out.v[n] = cand;
        }
    }
    return out;
}

}  // namespace conerisk
