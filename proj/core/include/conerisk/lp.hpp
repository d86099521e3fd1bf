#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace conerisk {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { Minimize, Maximize };
enum class Rel { LE, EQ, GE };

enum class Status { Optimal, Infeasible, Unbounded, NumericallyUnstable };

/// Sparse row: list of (variable index, coefficient).
using RowCoeffs = std::vector<std::pair<int, double>>;

/// Linear program over bounded variables.
///
/// Built incrementally: add_var() returns the variable index, add_row()
/// the row index. Rows are stored sparse; the solver densifies internally.
class LinearProgram {
public:
    struct Row {
        RowCoeffs coeffs;
        Rel rel = Rel::EQ;
        double rhs = 0.0;
    };

    int add_var(double lo, double up, double obj = 0.0) {
        lo_.push_back(lo);
        up_.push_back(up);
        obj_.push_back(obj);
        return static_cast<int>(lo_.size()) - 1;
    }

    int add_row(Rel rel, double rhs, RowCoeffs coeffs) {
        rows_.push_back(Row{std::move(coeffs), rel, rhs});
        return static_cast<int>(rows_.size()) - 1;
    }

    void set_objective(int var, double coef) { obj_.at(var) = coef; }
    void set_sense(Sense s) { sense_ = s; }

    Sense sense() const { return sense_; }
    int num_vars() const { return static_cast<int>(lo_.size()); }
    int num_rows() const { return static_cast<int>(rows_.size()); }
    const std::vector<Row>& rows() const { return rows_; }
    const std::vector<double>& lower() const { return lo_; }
    const std::vector<double>& upper() const { return up_; }
    const std::vector<double>& objective() const { return obj_; }

private:
    Sense sense_ = Sense::Minimize;
    std::vector<double> lo_, up_, obj_;
    std::vector<Row> rows_;
};

/// Solver output. `duals` follow the user's sense: dual[i] is the
/// sensitivity of the optimal value to the rhs of row i. `reduced_costs`
/// likewise. Both are meaningful only when status == Optimal.
struct LpSolution {
    Status status = Status::NumericallyUnstable;
    double value = 0.0;
    std::vector<double> x;
    std::vector<double> duals;
    std::vector<double> reduced_costs;
    int iterations = 0;

    bool optimal() const { return status == Status::Optimal; }
};

/// Bounded-variable two-phase simplex. Dantzig pricing with a switch to
/// Bland's rule after 10*(rows+cols) iterations; degenerate ties broken
/// by lowest variable index, so repeated solves are deterministic.
LpSolution solve(const LinearProgram& lp);

struct FeasibilityReport {
    bool feasible = false;
    double margin = 0.0;
    std::vector<double> witness;
};

/// Maximizes a common slack eps subtracted from each row in `strict_rows`
/// (all of which must be GE rows). feasible iff the optimum exceeds 1e-9.
/// Used wherever a statement quantifies over equivalent measures: a point
/// satisfying the strict rows with margin certifies an interior solution.
FeasibilityReport feasibility_with_margin(const LinearProgram& lp,
                                          const std::vector<int>& strict_rows);

/// Primal feasibility residual of a point: max violation over rows and bounds.
double feasibility_residual(const LinearProgram& lp, const std::vector<double>& x);

/// Value of the dual bound implied by (duals, reduced costs) at an optimal
/// solution; equals the primal value at a true optimum (strong duality).
double dual_objective_value(const LinearProgram& lp, const LpSolution& sol);

}  // namespace lp
}  // namespace conerisk
