#pragma once

#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace selfgrid {

enum class Relation { less_equal, greater_equal };

struct LpConstraint {
  std::vector<double> coeffs;
  Relation relation = Relation::less_equal;
  double rhs = 0.0;
};

struct MaximizeMin {};
struct MinimizeMax {};
struct MaximizeLinear {
  std::vector<double> c;
};
using LpObjective = std::variant<MaximizeMin, MinimizeMax, MaximizeLinear>;

struct VarBounds {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

struct LpProblem {
  int n_vars = 0;
  LpObjective objective = MaximizeMin{};
  std::vector<VarBounds> bounds;
  std::vector<LpConstraint> constraints;

  /// Throws InvalidArgument when shapes or entries are inconsistent.
  void check() const;
};

enum class LpStatus { optimal, infeasible, unbounded };
std::string to_string(LpStatus status);

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  std::vector<double> x;       // one value per original variable
  double objective_value = 0.0; // y for max-min, z for min-max, c.x otherwise
  int iterations = 0;
};

struct SimplexOptions {
  double feasibility_tol = 1e-9;
  double pivot_tol = 1e-10;
  int max_iterations = 100000;
};

/// Slack-variable rewrite of a max-min or min-max objective into a linear one.
/// max min{x_i} -> max y with x_i >= y; min max{x_i} -> max -z with x_i <= z.
/// The auxiliary variable is appended last. Throws InvalidArgument for an
/// objective that is already linear.
LpProblem to_standard_form(const LpProblem& problem);

/// Dense bounded-variable primal simplex, two phases, Bland's rule with
/// lowest-index tie-breaking, so the result is a deterministic vertex.
/// Min-max problems are solved through the max-min form of the negated
/// variables.
LpSolution solve(const LpProblem& problem, const SimplexOptions& options = {});

/// Largest constraint or bound violation of `x` (0 when feasible).
double max_violation(const LpProblem& problem, const std::vector<double>& x);

} // namespace selfgrid
