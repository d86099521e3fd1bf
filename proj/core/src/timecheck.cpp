#include "conerisk/timecheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "conerisk/rng.hpp"

namespace conerisk {

namespace {

constexpr double kDetect = 1e-6;
constexpr double kCertify = 1e-7;
constexpr double kAcceptTol = 1e-9;
constexpr double kSplitSlack = 1e-8;
constexpr double kDominate = 1e-9;

void check_span(const ScenarioTree& tree, int t, int s) {
    if (t < 0 || t > s || s > tree.horizon())
        throw Error("time span must satisfy 0 <= t <= s <= horizon");
}

/// Cash claim constant on every time-s subtree, one value per time-s node.
std::vector<double> embed_cash_at(const ScenarioTree& tree, int s,
                                  const std::vector<double>& per_node) {
    const int d = tree.assets();
    std::vector<double> x(static_cast<size_t>(tree.num_leaves()) * d, 0.0);
    const auto& nodes = tree.nodes_at(s);
    for (size_t n = 0; n < nodes.size(); ++n)
        for (int p = tree.leaf_begin(nodes[n]); p < tree.leaf_end(nodes[n]); ++p)
            x[static_cast<size_t>(p) * d] = per_node[n];
    return x;
}

/// Weak-duality certificate rows: for a payoff linear in the master
/// variables, force  max over the polytope <= bound_const + slack. The
/// polytope vars live in [0, 1]; strong duality makes the bound tight, so
/// the block is satisfiable exactly when the value condition holds.
void add_value_bound_block(lp::LinearProgram& prog, const EmmPolytope& poly,
                           const std::vector<double>& payoff_const,
                           const std::vector<lp::RowCoeffs>& payoff_vars, double bound_const,
                           int slack_var) {
    const int L = poly.prog.num_vars();
    std::vector<int> y(poly.prog.rows().size());
    for (size_t j = 0; j < poly.prog.rows().size(); ++j) {
        switch (poly.prog.rows()[j].rel) {
            case lp::Rel::EQ: y[j] = prog.add_var(-lp::kInf, lp::kInf); break;
            case lp::Rel::LE: y[j] = prog.add_var(0.0, lp::kInf); break;
            case lp::Rel::GE: y[j] = prog.add_var(-lp::kInf, 0.0); break;
        }
    }
    const auto& ub = poly.prog.upper();
    std::vector<int> w(L);
    for (int k = 0; k < L; ++k)
        w[k] = prog.add_var(0.0, ub[k] < lp::kInf ? lp::kInf : 0.0);

    std::vector<lp::RowCoeffs> col(L);
    for (size_t j = 0; j < poly.prog.rows().size(); ++j)
        for (const auto& [k, coef] : poly.prog.rows()[j].coeffs)
            col[k].emplace_back(y[j], coef);
    for (int k = 0; k < L; ++k) {
        lp::RowCoeffs row = std::move(col[k]);
        row.emplace_back(w[k], 1.0);
        for (const auto& [var, coef] : payoff_vars[k]) row.emplace_back(var, -coef);
        prog.add_row(lp::Rel::GE, payoff_const[k], std::move(row));
    }

    lp::RowCoeffs budget;
    for (size_t j = 0; j < poly.prog.rows().size(); ++j)
        if (poly.prog.rows()[j].rhs != 0.0) budget.emplace_back(y[j], poly.prog.rows()[j].rhs);
    for (int k = 0; k < L; ++k)
        if (ub[k] < lp::kInf && ub[k] != 0.0) budget.emplace_back(w[k], ub[k]);
    budget.emplace_back(slack_var, -1.0);
    prog.add_row(lp::Rel::LE, bound_const, std::move(budget));
}

std::vector<double> random_claim_vec(const ScenarioTree& tree, std::uint64_t seed,
                                     std::uint64_t index) {
    auto gen = rng_for(seed, index);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(static_cast<size_t>(tree.num_leaves()) * tree.assets());
    for (double& xi : x) xi = u(gen);
    return x;
}

/// Shift a claim by time-u measurable cash so its fixed-selection risk at
/// u matches the risk of the zero claim, landing it on the acceptance
/// boundary of the normalized measure.
std::vector<double> onto_boundary(const ScenarioTree& tree, const MarketModel& model,
                                  const RiskSpec& spec, const PriceSystem& sys,
                                  std::vector<double> x, int u) {
    const auto val = pi_S(tree, model, spec, x, sys, u);
    const auto base = pi_S(tree, model, spec, std::vector<double>(x.size(), 0.0), sys, u);
    const auto& nodes = tree.nodes_at(u);
    for (size_t n = 0; n < nodes.size(); ++n)
        for (int p = tree.leaf_begin(nodes[n]); p < tree.leaf_end(nodes[n]); ++p)
            x[static_cast<size_t>(p) * tree.assets()] += val.v[n].value() - base.v[n].value();
    return x;
}

}  // namespace

TcReport pi_recursion_check(const ScenarioTree& tree, const MarketModel& model,
                            const RiskSpec& spec, const std::vector<double>& x_terminal,
                            const PriceSystem& sys, int t, int s, double skew) {
    check_span(tree, t, s);
    TcReport rep;
    rep.name = "pi-recursion";

    const auto lhs = pi_S(tree, model, spec, x_terminal, sys, t);
    const std::vector<double> zero(x_terminal.size(), 0.0);
    const auto at_s0 = pi_S(tree, model, spec, zero, sys, s);
    const auto at_sx = pi_S(tree, model, spec, x_terminal, sys, s);

    std::vector<double> payload(tree.nodes_at(s).size());
    for (size_t n = 0; n < payload.size(); ++n)
        payload[n] = at_s0.v[n].value() - at_sx.v[n].value() + skew;
    const auto rhs = pi_S(tree, model, spec, embed_cash_at(tree, s, payload), sys, t);

    long long worst = -1;
    const auto& nodes = tree.nodes_at(t);
    for (size_t n = 0; n < nodes.size(); ++n) {
        const double gap = std::abs(lhs.v[n].value() - rhs.v[n].value());
        if (gap > rep.violation) {
            rep.violation = gap;
            worst = tree.ext_id(nodes[n]);
        }
    }
    rep.pass = rep.violation <= kDetect;
    if (!rep.pass) rep.witness = TcWitness{x_terminal, {}, t, s, worst, -1};
    return rep;
}

TcReport rho_recursion_check(const ScenarioTree& tree, const MarketModel& model,
                             const RiskSpec& spec, const std::vector<double>& x_terminal,
                             int t, int s, const std::vector<DualPair>& samples) {
    check_span(tree, t, s);
    if (t == s) throw Error("the scalar recursion needs t < s");
    if (samples.empty()) throw Error("sample list is empty");
    TcReport rep;
    rep.name = "rho-recursion";

    const auto reference = rho_from_samples(tree, model, spec, x_terminal, t, samples);
    const auto& tnodes = tree.nodes_at(t);
    std::vector<ExtValue> best(tnodes.size(), ExtValue::neg_inf());
    const std::vector<double> zero(x_terminal.size(), 0.0);

    for (const DualPair& pair : samples) {
        const auto direct = pi_S(tree, model, spec, x_terminal, pair.S, t);
        const auto at_s0 = pi_S(tree, model, spec, zero, pair.S, s);
        const auto at_sx = pi_S(tree, model, spec, x_terminal, pair.S, s);
        std::vector<double> payload(tree.nodes_at(s).size(), 0.0);
        for (size_t j = 0; j < payload.size(); ++j)
            if (at_s0.v[j].finite_p() && at_sx.v[j].finite_p())
                payload[j] = at_s0.v[j].v - at_sx.v[j].v;
        const auto rec =
            pi_S(tree, model, spec, embed_cash_at(tree, s, payload), pair.S, t);
        for (size_t n = 0; n < tnodes.size(); ++n) {
            // a selection only competes where its own value is finite; the
            // conditional polytopes below such a node are nonempty, so the
            // zero payload on dead sibling subtrees never leaks in
            if (!direct.v[n].finite_p() || !rec.v[n].finite_p()) continue;
            if (!best[n].finite_p() || rec.v[n].v > best[n].v) best[n] = rec.v[n];
        }
    }

    long long worst = -1;
    for (size_t n = 0; n < tnodes.size(); ++n) {
        double gap = 0.0;
        const ExtValue& a = best[n];
        const ExtValue& b = reference.value.v[n];
        if (a.finite_p() && b.finite_p()) gap = std::abs(a.v - b.v);
        else if (a.flag != b.flag) gap = std::numeric_limits<double>::infinity();
        if (gap > rep.violation) {
            rep.violation = gap;
            worst = tree.ext_id(tnodes[n]);
        }
    }
    rep.pass = rep.violation <= kDetect;
    if (!rep.pass) rep.witness = TcWitness{x_terminal, {}, t, s, worst, -1};
    return rep;
}

TcReport supermartingale_check(const ScenarioTree& tree, const MarketModel& model,
                               const RiskSpec& spec, const std::vector<double>& x_terminal,
                               const DualPair& pair, double skew) {
    TcReport rep;
    rep.name = "supermartingale";
    const int T = tree.horizon();

    std::vector<double> value(tree.num_nodes(), 0.0);
    for (int u = 0; u <= T; ++u) {
        const auto beta = penalty_beta(tree, model, spec, pair, u);
        const auto piv = pi_S(tree, model, spec, x_terminal, pair.S, u);
        const auto& nodes = tree.nodes_at(u);
        for (size_t n = 0; n < nodes.size(); ++n) {
            if (!beta.v[n].finite_p())
                throw Error("penalty is not finite at node " +
                            std::to_string(tree.ext_id(nodes[n])));
            value[nodes[n]] = piv.v[n].value() + beta.v[n].v + (u == T ? skew : 0.0);
        }
    }

    long long worst = -1;
    int worst_t = -1, worst_s = -1;
    for (int s = 1; s <= T; ++s) {
        for (int t = 0; t < s; ++t) {
            const auto expect = cond_expect_at(tree, pair.q, value, s, t);
            for (int n : tree.nodes_at(t)) {
                const double excess = expect[n] - value[n];
                if (excess > rep.violation) {
                    rep.violation = excess;
                    worst = tree.ext_id(n);
                    worst_t = t;
                    worst_s = s;
                }
            }
        }
    }
    rep.pass = rep.violation <= kCertify;
    if (!rep.pass) rep.witness = TcWitness{x_terminal, {}, worst_t, worst_s, worst, -1};
    return rep;
}

SplitResult acceptance_split(const ScenarioTree& tree, const MarketModel& model,
                             const RiskSpec& spec, const PriceSystem& sys,
                             const std::vector<double>& x_terminal, int t, int s) {
    validate_spec(tree, model, spec);
    check_span(tree, t, s);
    const int d = tree.assets();
    if (x_terminal.size() != static_cast<size_t>(tree.num_leaves()) * d)
        throw Error("claim size does not match leaves * assets");

    std::vector<double> sup(tree.num_nodes(), 0.0);
    if (spec.kind == RiskKind::ShpConvex) {
        for (int v = 0; v < tree.num_nodes(); ++v) {
            if (tree.time(v) < t) continue;
            const Vec y(sys.S.row(v), sys.S.row(v) + d);
            const auto iv = region_inf_value(model, v, y);
            if (!iv)
                throw Error("selection support is unbounded at node " +
                            std::to_string(tree.ext_id(v)));
            sup[v] = *iv;
        }
    }
    auto path_sup = [&](int leaf, int from) {
        double acc = 0.0;
        if (spec.kind == RiskKind::ShpConvex)
            for (int v = leaf; v >= 0 && tree.time(v) >= from; v = tree.parent(v))
                acc += sup[v];
        return acc;
    };

    // acceptability is measured against the value of the zero claim, so
    // non-normalized convex penalties reduce to the normalized statement
    const std::vector<double> zero(x_terminal.size(), 0.0);
    const auto base_t = pi_S(tree, model, spec, zero, sys, t);
    const auto base_s = pi_S(tree, model, spec, zero, sys, s);

    lp::LinearProgram prog;
    const int slack = prog.add_var(0.0, lp::kInf, 1.0);
    const auto& snodes = tree.nodes_at(s);
    std::vector<int> ybase(snodes.size());
    for (size_t m = 0; m < snodes.size(); ++m) {
        ybase[m] = prog.num_vars();
        for (int i = 0; i < d; ++i) prog.add_var(-lp::kInf, lp::kInf);
    }
    std::vector<int> srank(tree.num_nodes(), -1);
    for (size_t m = 0; m < snodes.size(); ++m) srank[snodes[m]] = static_cast<int>(m);

    // the time-s part must be acceptable at every time-t node
    const auto& tnodes = tree.nodes_at(t);
    for (size_t nn = 0; nn < tnodes.size(); ++nn) {
        const auto poly = feasible_measure_polytope(tree, spec, sys, tnodes[nn], t);
        const int L = poly.prog.num_vars();
        std::vector<double> cpart(L);
        std::vector<lp::RowCoeffs> vpart(L);
        for (int k = 0; k < L; ++k) {
            const int leaf = tree.leaves()[poly.leaf_positions[k]];
            cpart[k] = path_sup(leaf, t);
            const int m = srank[tree.ancestor_at(leaf, s)];
            for (int i = 0; i < d; ++i)
                vpart[k].emplace_back(ybase[m] + i, -sys.S.at(leaf, i));
        }
        add_value_bound_block(prog, poly, cpart, vpart, base_t.v[nn].value() + kAcceptTol,
                              slack);
    }
    // the remainder must be acceptable at every time-s node
    for (size_t m = 0; m < snodes.size(); ++m) {
        const auto poly = feasible_measure_polytope(tree, spec, sys, snodes[m], s);
        const int L = poly.prog.num_vars();
        std::vector<double> cpart(L);
        std::vector<lp::RowCoeffs> vpart(L);
        for (int k = 0; k < L; ++k) {
            const int pos = poly.leaf_positions[k];
            const int leaf = tree.leaves()[pos];
            double pay = 0.0;
            for (int i = 0; i < d; ++i)
                pay += sys.S.at(leaf, i) * x_terminal[static_cast<size_t>(pos) * d + i];
            cpart[k] = -pay + path_sup(leaf, s);
            for (int i = 0; i < d; ++i)
                vpart[k].emplace_back(ybase[m] + i, sys.S.at(leaf, i));
        }
        add_value_bound_block(prog, poly, cpart, vpart, base_s.v[m].value() + kAcceptTol,
                              slack);
    }

    const auto sol = lp::solve(prog);
    if (!sol.optimal()) throw Error("acceptance split LP did not solve");

    SplitResult out;
    out.slack = sol.value;
    out.feasible = sol.value <= kSplitSlack;
    out.x_ts.assign(snodes.size() * static_cast<size_t>(d), 0.0);
    for (size_t m = 0; m < snodes.size(); ++m)
        for (int i = 0; i < d; ++i) out.x_ts[m * d + i] = sol.x[ybase[m] + i];
    return out;
}

TcReport acceptance_decomposition_check(const ScenarioTree& tree, const MarketModel& model,
                                        const RiskSpec& spec, const PriceSystem& sys, int t,
                                        int s, int n_random, std::uint64_t seed) {
    check_span(tree, t, s);
    TcReport rep;
    rep.name = "acceptance-decomposition";
    const int d = tree.assets();
    const std::vector<double> zero(static_cast<size_t>(tree.num_leaves()) * d, 0.0);
    const auto base_t = pi_S(tree, model, spec, zero, sys, t);

    for (int k = 0; k < n_random; ++k) {
        // inclusion one: boundary-acceptable claims admit a split
        const auto x = onto_boundary(tree, model, spec, sys,
                                     random_claim_vec(tree, seed, 2 * k), t);
        const auto split = acceptance_split(tree, model, spec, sys, x, t, s);
        if (!split.feasible) {
            rep.pass = false;
            if (split.slack > rep.violation) {
                rep.violation = split.slack;
                rep.witness = TcWitness{x, {}, t, s, -1, k};
            }
            continue;
        }

        // inclusion two: a time-s measurable claim acceptable at t plus a
        // remainder acceptable at s lands back in the time-t set
        auto gen = rng_for(seed, 2 * k + 1);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<double> flat(tree.nodes_at(s).size() * static_cast<size_t>(d));
        for (double& f : flat) f = u(gen);
        std::vector<double> part_ts(static_cast<size_t>(tree.num_leaves()) * d);
        const auto& snodes = tree.nodes_at(s);
        for (size_t m = 0; m < snodes.size(); ++m)
            for (int p = tree.leaf_begin(snodes[m]); p < tree.leaf_end(snodes[m]); ++p)
                for (int i = 0; i < d; ++i)
                    part_ts[static_cast<size_t>(p) * d + i] = flat[m * d + i];
        part_ts = onto_boundary(tree, model, spec, sys, std::move(part_ts), t);
        const auto part_s = onto_boundary(tree, model, spec, sys,
                                          random_claim_vec(tree, seed, 2 * k + 1), s);
        std::vector<double> sum(part_ts.size());
        for (size_t j = 0; j < sum.size(); ++j) sum[j] = part_ts[j] + part_s[j];
        const auto back = pi_S(tree, model, spec, sum, sys, t);
        const auto& tnodes = tree.nodes_at(t);
        for (size_t n = 0; n < tnodes.size(); ++n) {
            const double excess = back.v[n].value() - base_t.v[n].value();
            if (excess > kCertify && excess > rep.violation) {
                rep.pass = false;
                rep.violation = excess;
                rep.witness = TcWitness{sum, {}, t, s, tree.ext_id(tnodes[n]), k};
            }
        }
    }
    return rep;
}

TcReport rho_tc_falsify(const ScenarioTree& tree, const MarketModel& model,
                        const RiskSpec& spec, long long trials, std::uint64_t seed) {
    if (spec.kind == RiskKind::AvarComposed)
        throw Error("the falsifier targets the superhedging measures");
    validate_spec(tree, model, spec);
    TcReport rep;
    rep.name = "rho-time-consistency";
    const int T = tree.horizon();
    const int d = tree.assets();
    const size_t claim_len = static_cast<size_t>(tree.num_leaves()) * d;

    // structured candidates: short one unit of cash, then of the second
    // asset, on each subtree; the known failure mode moves risk between
    // sibling subtrees whose cones disagree
    std::vector<std::vector<double>> structured;
    for (int v = 0; v < tree.num_nodes(); ++v) {
        for (int i = 0; i < std::min(d, 2); ++i) {
            std::vector<double> x(claim_len, 0.0);
            for (int p = tree.leaf_begin(v); p < tree.leaf_end(v); ++p)
                x[static_cast<size_t>(p) * d + i] = -1.0;
            structured.push_back(std::move(x));
        }
    }

    std::vector<RiskValue> base(T + 1);
    const std::vector<double> zero(claim_len, 0.0);
    for (int s = 1; s <= T; ++s) base[s] = rho_primal(tree, model, spec, zero, s);

    for (long long k = 0; k < trials; ++k) {
        const auto x = k < static_cast<long long>(structured.size())
                           ? structured[static_cast<size_t>(k)]
                           : random_claim_vec(tree, seed, static_cast<std::uint64_t>(k));
        std::vector<RiskValue> rx(T + 1);
        std::vector<bool> have(T + 1, false);
        auto rho_x = [&](int u) -> const RiskValue& {
            if (!have[u]) {
                rx[u] = rho_primal(tree, model, spec, x, u);
                have[u] = true;
            }
            return rx[u];
        };
        for (int s = 1; s <= T; ++s) {
            // canonical dominator: the time-s cash position with exactly
            // the same time-s risk as the claim
            const auto& rsx = rho_x(s);
            std::vector<double> payload(rsx.v.size());
            for (size_t n = 0; n < payload.size(); ++n)
                payload[n] = base[s].v[n].value() - rsx.v[n].value();
            const auto y = embed_cash_at(tree, s, payload);
            const auto rsy = rho_primal(tree, model, spec, y, s);
            // the dominator matches the claim at s up to LP noise, so both
            // reading orders of the pair can satisfy the premise
            bool fwd = true, rev = true;
            for (size_t n = 0; n < payload.size(); ++n) {
                if (rsx.v[n].value() > rsy.v[n].value() + kDominate) fwd = false;
                if (rsy.v[n].value() > rsx.v[n].value() + kDominate) rev = false;
            }
            if (!fwd && !rev) continue;
            for (int t = 0; t < s; ++t) {
                const auto& rtx = rho_x(t);
                const auto rty = rho_primal(tree, model, spec, y, t);
                const auto& tnodes = tree.nodes_at(t);
                for (size_t n = 0; n < tnodes.size(); ++n) {
                    const double diff = rtx.v[n].value() - rty.v[n].value();
                    const double gap = std::max(fwd ? diff : 0.0, rev ? -diff : 0.0);
                    if (gap > rep.violation) rep.violation = gap;
                    if (gap > kDetect) {
                        rep.pass = false;
                        rep.violation = gap;
                        rep.witness = diff > 0.0
                                          ? TcWitness{x, y, t, s, tree.ext_id(tnodes[n]), k}
                                          : TcWitness{y, x, t, s, tree.ext_id(tnodes[n]), k};
                        return rep;
                    }
                }
            }
        }
    }
    return rep;
}

}  // namespace conerisk
