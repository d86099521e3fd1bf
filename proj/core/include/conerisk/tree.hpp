#pragma once

#include <string>
#include <vector>

#include "conerisk/lp.hpp"

namespace conerisk {

/// Compensated accumulator; conditional expectations sum small leaf masses
/// and the tree validators pin the probability sum at 1e-12, which plain
/// left-to-right addition does not reliably reach.
struct KahanSum {
    double s = 0.0, c = 0.0;
    void add(double x) {
        const double y = x - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    double get() const { return s; }
};

struct NodeSpec {
    long long id = 0;
    int time = 0;
    long long parent = -1;  // ignored for the root
    double p = 0.0;         // terminal nodes only
};

/// Finite event tree carrying the filtration. Nodes are re-indexed
/// internally by (time, external id); all public functions speak internal
/// indices except ext_id/index_of which translate.
class ScenarioTree {
public:
    ScenarioTree(int horizon, int assets, const std::vector<NodeSpec>& nodes);

    int horizon() const { return horizon_; }
    int assets() const { return assets_; }
    int num_nodes() const { return static_cast<int>(time_.size()); }
    int num_leaves() const { return static_cast<int>(leaves_.size()); }

    int time(int v) const { return time_[v]; }
    int parent(int v) const { return parent_[v]; }
    bool is_leaf(int v) const { return children_[v].empty(); }
    const std::vector<int>& children(int v) const { return children_[v]; }
    const std::vector<int>& nodes_at(int t) const { return by_time_.at(t); }
    const std::vector<int>& leaves() const { return leaves_; }

    long long ext_id(int v) const { return ext_id_[v]; }
    int index_of(long long ext) const;

    double prob(int v) const { return prob_[v]; }
    /// Leaves below v occupy a contiguous range [leaf_begin(v), leaf_end(v))
    /// of positions in leaves().
    int leaf_begin(int v) const { return leaf_begin_[v]; }
    int leaf_end(int v) const { return leaf_end_[v]; }
    int leaf_pos(int leaf) const { return leaf_pos_[leaf]; }

    int ancestor_at(int v, int t) const;
    bool is_descendant(int v, int anc) const;

    int root() const { return 0; }

private:
    int horizon_ = 0;
    int assets_ = 0;
    std::vector<int> time_, parent_;
    std::vector<std::vector<int>> children_;
    std::vector<std::vector<int>> by_time_;
    std::vector<long long> ext_id_;
    std::vector<int> leaves_;          // DFS order: subtrees contiguous
    std::vector<int> leaf_begin_, leaf_end_, leaf_pos_;
    std::vector<double> prob_;
};

struct TreeReport {
    bool ok = true;
    std::vector<std::string> problems;
};

/// Structural and probabilistic invariants: unique root, +1 time steps,
/// terminal nodes exactly at the horizon, strictly positive terminal
/// masses summing to one within 1e-12.
TreeReport validate_tree(const ScenarioTree& tree);

/// Vector values indexed per node; adapted by construction since a node is
/// an atom of its own time slice.
class AdaptedProcess {
public:
    AdaptedProcess() = default;
    AdaptedProcess(const ScenarioTree& tree, int dims)
        : dims_(dims), v_(static_cast<size_t>(tree.num_nodes()) * dims, 0.0) {}

    int dims() const { return dims_; }
    double at(int node, int i) const { return v_[static_cast<size_t>(node) * dims_ + i]; }
    double& at(int node, int i) { return v_[static_cast<size_t>(node) * dims_ + i]; }
    const double* row(int node) const { return v_.data() + static_cast<size_t>(node) * dims_; }

private:
    int dims_ = 0;
    std::vector<double> v_;
};

enum class MeasureKind { AbsolutelyContinuous, Equivalent };

/// Probability measure given by terminal masses, stored in leaves() order.
struct MeasureQ {
    std::vector<double> w;
    MeasureKind kind = MeasureKind::AbsolutelyContinuous;

    static MeasureQ from_leaf_weights(const ScenarioTree& tree, std::vector<double> weights);
};

/// Mass of every node under q (sum of terminal masses below it).
std::vector<double> node_masses(const ScenarioTree& tree, const MeasureQ& q);

/// Density ratio xi_bar_{s,sigma}(q) evaluated at every node of time
/// sigma: conditional density at sigma divided by the one at the time-s
/// ancestor, with the everywhere-defined fallback value 1 where the
/// ancestor carries no q-mass. Entries at other nodes are left at 0.
std::vector<double> xi_bar(const ScenarioTree& tree, const MeasureQ& q, int s, int sigma);

/// E_q[x | F_t] defined P-a.s.-everywhere through xi_bar: on q-null
/// time-t nodes this degrades to the P-conditional expectation, which is
/// exactly what makes the tower identity hold pointwise.
std::vector<double> cond_expect(const ScenarioTree& tree, const MeasureQ& q,
                                const std::vector<double>& x_terminal, int t);

/// Same with the conditioned process sitting at time s (values per time-s
/// node) instead of at the horizon.
std::vector<double> cond_expect_at(const ScenarioTree& tree, const MeasureQ& q,
                                   const std::vector<double>& values_at_s, int s, int t);

}  // namespace conerisk
