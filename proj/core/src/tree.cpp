#include "conerisk/tree.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace conerisk {

ScenarioTree::ScenarioTree(int horizon, int assets, const std::vector<NodeSpec>& nodes)
    : horizon_(horizon), assets_(assets) {
    if (horizon < 1) throw Error("tree: horizon must be >= 1");
    if (assets < 1) throw Error("tree: assets must be >= 1");

    std::vector<NodeSpec> sorted = nodes;
    std::stable_sort(sorted.begin(), sorted.end(), [](const NodeSpec& a, const NodeSpec& b) {
        return a.time != b.time ? a.time < b.time : a.id < b.id;
    });

    std::map<long long, int> index;
    const int n = static_cast<int>(sorted.size());
    time_.resize(n);
    parent_.assign(n, -1);
    children_.resize(n);
    ext_id_.resize(n);
    by_time_.assign(horizon + 1, {});
    for (int v = 0; v < n; ++v) {
        const NodeSpec& s = sorted[v];
        if (s.time < 0 || s.time > horizon) throw Error("tree: node time out of range");
        if (!index.emplace(s.id, v).second) throw Error("tree: duplicate node id");
        time_[v] = s.time;
        ext_id_[v] = s.id;
        by_time_[s.time].push_back(v);
    }
    for (int v = 0; v < n; ++v) {
        const NodeSpec& s = sorted[v];
        if (s.time == 0) continue;
        const auto it = index.find(s.parent);
        if (it == index.end()) throw Error("tree: unknown parent id");
        parent_[v] = it->second;
        children_[it->second].push_back(v);
    }
    if (n == 0 || time_[0] != 0) throw Error("tree: missing root");

    // DFS from the root fixes a leaf order in which every subtree is a
    // contiguous block; probabilities then aggregate by suffix sums.
    leaf_begin_.assign(n, 0);
    leaf_end_.assign(n, 0);
    leaf_pos_.assign(n, -1);
    std::vector<int> stack{0};
    std::vector<int> dfs_order;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        dfs_order.push_back(v);
        for (auto it = children_[v].rbegin(); it != children_[v].rend(); ++it)
            stack.push_back(*it);
    }
    if (static_cast<int>(dfs_order.size()) != n)
        throw Error("tree: disconnected nodes present");
    for (int v : dfs_order) {
        if (children_[v].empty()) {
            leaf_begin_[v] = static_cast<int>(leaves_.size());
            leaf_pos_[v] = static_cast<int>(leaves_.size());
            leaves_.push_back(v);
            leaf_end_[v] = static_cast<int>(leaves_.size());
        }
    }
    for (auto it = dfs_order.rbegin(); it != dfs_order.rend(); ++it) {
        const int v = *it;
        if (children_[v].empty()) continue;
        leaf_begin_[v] = leaf_begin_[children_[v].front()];
        leaf_end_[v] = leaf_end_[children_[v].back()];
    }

    prob_.assign(n, 0.0);
    for (int v = 0; v < n; ++v)
        if (children_[v].empty()) prob_[v] = sorted[v].p;
    for (int t = horizon_ - 1; t >= 0; --t) {
        for (int v : by_time_[t]) {
            KahanSum acc;
            for (int c : children_[v]) acc.add(prob_[c]);
            prob_[v] = acc.get();
        }
    }
}

int ScenarioTree::index_of(long long ext) const {
    for (int v = 0; v < num_nodes(); ++v)
        if (ext_id_[v] == ext) return v;
    throw Error("tree: unknown node id " + std::to_string(ext));
}

int ScenarioTree::ancestor_at(int v, int t) const {
    if (t > time_[v]) throw Error("tree: ancestor_at called with later time");
    while (time_[v] > t) v = parent_[v];
    return v;
}

bool ScenarioTree::is_descendant(int v, int anc) const {
    return time_[v] >= time_[anc] && ancestor_at(v, time_[anc]) == anc;
}

TreeReport validate_tree(const ScenarioTree& tree) {
    TreeReport rep;
    auto fail = [&](std::string msg) {
        rep.ok = false;
        rep.problems.push_back(std::move(msg));
    };

    if (tree.nodes_at(0).size() != 1) fail("tree must have exactly one root");
    for (int v = 0; v < tree.num_nodes(); ++v) {
        const bool leaf = tree.is_leaf(v);
        if (leaf && tree.time(v) != tree.horizon())
            fail("terminal node " + std::to_string(tree.ext_id(v)) + " not at the horizon");
        if (!leaf && tree.time(v) == tree.horizon())
            fail("node at the horizon has children");
        if (v != tree.root() && tree.time(tree.parent(v)) != tree.time(v) - 1)
            fail("node " + std::to_string(tree.ext_id(v)) + " skips a time step");
        if (leaf && !(tree.prob(v) > 0.0))
            fail("terminal node " + std::to_string(tree.ext_id(v)) +
                 " has non-positive probability");
    }
    KahanSum total;
    for (int l : tree.leaves()) total.add(tree.prob(l));
    if (std::abs(total.get() - 1.0) > 1e-12)
        fail("terminal probabilities sum to " + std::to_string(total.get()));
    return rep;
}

MeasureQ MeasureQ::from_leaf_weights(const ScenarioTree& tree, std::vector<double> weights) {
    if (static_cast<int>(weights.size()) != tree.num_leaves())
        throw Error("measure: weight count does not match leaf count");
    MeasureQ q;
    q.w = std::move(weights);
    q.kind = MeasureKind::Equivalent;
    for (double v : q.w)
        if (!(v > 0.0)) q.kind = MeasureKind::AbsolutelyContinuous;
    return q;
}

std::vector<double> node_masses(const ScenarioTree& tree, const MeasureQ& q) {
    std::vector<double> m(tree.num_nodes(), 0.0);
    for (int pos = 0; pos < tree.num_leaves(); ++pos) m[tree.leaves()[pos]] = q.w[pos];
    for (int t = tree.horizon() - 1; t >= 0; --t) {
        for (int v : tree.nodes_at(t)) {
            KahanSum acc;
            for (int c : tree.children(v)) acc.add(m[c]);
            m[v] = acc.get();
        }
    }
    return m;
}

std::vector<double> xi_bar(const ScenarioTree& tree, const MeasureQ& q, int s, int sigma) {
    if (s > sigma) throw Error("xi_bar: need s <= sigma");
    const std::vector<double> qm = node_masses(tree, q);
    std::vector<double> out(tree.num_nodes(), 0.0);
    for (int v : tree.nodes_at(sigma)) {
        const int a = tree.ancestor_at(v, s);
        const double den = qm[a] / tree.prob(a);
        out[v] = den > 0.0 ? (qm[v] / tree.prob(v)) / den : 1.0;
    }
    return out;
}

std::vector<double> cond_expect_at(const ScenarioTree& tree, const MeasureQ& q,
                                   const std::vector<double>& values_at_s, int s, int t) {
    if (t > s) throw Error("cond_expect: need t <= s");
    const std::vector<double> qm = node_masses(tree, q);
    std::vector<double> out(tree.num_nodes(), 0.0);
    for (int n : tree.nodes_at(t)) {
        KahanSum acc;
        if (qm[n] > 0.0) {
            for (int v : tree.nodes_at(s))
                if (tree.ancestor_at(v, t) == n) acc.add(qm[v] / qm[n] * values_at_s[v]);
        } else {
            for (int v : tree.nodes_at(s))
                if (tree.ancestor_at(v, t) == n) acc.add(tree.prob(v) / tree.prob(n) * values_at_s[v]);
        }
        out[n] = acc.get();
    }
    return out;
}

std::vector<double> cond_expect(const ScenarioTree& tree, const MeasureQ& q,
                                const std::vector<double>& x_terminal, int t) {
    std::vector<double> at_nodes(tree.num_nodes(), 0.0);
    if (static_cast<int>(x_terminal.size()) == tree.num_leaves()) {
        for (int pos = 0; pos < tree.num_leaves(); ++pos)
            at_nodes[tree.leaves()[pos]] = x_terminal[pos];
    } else if (static_cast<int>(x_terminal.size()) == tree.num_nodes()) {
        at_nodes = x_terminal;
    } else {
        throw Error("cond_expect: value vector has unexpected length");
    }
    return cond_expect_at(tree, q, at_nodes, tree.horizon(), t);
}

}  // namespace conerisk
