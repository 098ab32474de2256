#include "selfgrid/lp_solver.hpp"

#include "selfgrid/error.hpp"

#include <algorithm>
#include <cmath>

namespace selfgrid {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

// min c.x  s.t.  rows[i].x + s_i = rhs[i],  lower <= x <= upper.
class BoundedSimplex {
public:
  BoundedSimplex(const LpProblem& p, const std::vector<double>& cost, const SimplexOptions& opt)
      : opt_(opt), n_(p.n_vars), m_(static_cast<int>(p.constraints.size())) {
    total_ = n_ + 2 * m_;
    lower_.assign(static_cast<std::size_t>(total_), 0.0);
    upper_.assign(static_cast<std::size_t>(total_), inf);
    value_.assign(static_cast<std::size_t>(total_), 0.0);
    cost_.assign(static_cast<std::size_t>(total_), 0.0);
    for (int j = 0; j < n_; ++j) {
      lower_[j] = p.bounds[static_cast<std::size_t>(j)].lower;
      upper_[j] = p.bounds[static_cast<std::size_t>(j)].upper;
      cost_[j] = cost[static_cast<std::size_t>(j)];
      if (std::isfinite(lower_[j])) value_[j] = lower_[j];
      else if (std::isfinite(upper_[j])) value_[j] = upper_[j];
    }
    a_.assign(static_cast<std::size_t>(m_), std::vector<double>(static_cast<std::size_t>(total_), 0.0));
    rhs_.resize(static_cast<std::size_t>(m_));
    for (const auto& con : p.constraints) rows_.push_back(con.coeffs);
    basis_.resize(static_cast<std::size_t>(m_));
    art_sign_.resize(static_cast<std::size_t>(m_));
    for (int i = 0; i < m_; ++i) {
      const auto& con = p.constraints[static_cast<std::size_t>(i)];
      auto& row = a_[static_cast<std::size_t>(i)];
      double resid = con.rhs;
      for (int j = 0; j < n_; ++j) {
        row[j] = con.coeffs[static_cast<std::size_t>(j)];
        resid -= row[j] * value_[j];
      }
      const int slack = n_ + i;
      row[slack] = 1.0;
      if (con.relation == Relation::less_equal) {
        lower_[slack] = 0.0;
        upper_[slack] = inf;
      } else {
        lower_[slack] = -inf;
        upper_[slack] = 0.0;
      }
      const int art = n_ + m_ + i;
      const double sign = resid >= 0.0 ? 1.0 : -1.0;
      row[art] = sign;
      art_sign_[static_cast<std::size_t>(i)] = sign;
      rhs_[static_cast<std::size_t>(i)] = con.rhs;
      // Basis inverse is diag(sign), so the tableau row is the scaled row.
      for (double& e : row) e *= sign;
      value_[art] = std::abs(resid);
      basis_[static_cast<std::size_t>(i)] = art;
    }
    in_basis_.assign(static_cast<std::size_t>(total_), -1);
    for (int i = 0; i < m_; ++i) in_basis_[basis_[static_cast<std::size_t>(i)]] = i;
  }

  LpSolution run() {
    LpSolution out;
    // Phase I: drive the artificials to zero.
    std::vector<double> phase1(static_cast<std::size_t>(total_), 0.0);
    for (int i = 0; i < m_; ++i) phase1[n_ + m_ + i] = 1.0;
    auto status = iterate(phase1);
    if (status == LpStatus::unbounded) throw NumericalError("phase I reported an unbounded direction");
    refresh_basic_values();
    double infeas = 0.0;
    for (int i = 0; i < m_; ++i) infeas += value_[n_ + m_ + i];
    out.iterations = iterations_;
    if (infeas > opt_.feasibility_tol) {
      out.status = LpStatus::infeasible;
      return out;
    }
    for (int i = 0; i < m_; ++i) {
      const int art = n_ + m_ + i;
      upper_[art] = 0.0;
      value_[art] = 0.0;
    }
    refresh_basic_values();

    status = iterate(cost_);
    refresh_basic_values();
    out.iterations = iterations_;
    out.status = status;
    if (status != LpStatus::optimal) return out;
    out.x.assign(value_.begin(), value_.begin() + n_);
    for (int j = 0; j < n_; ++j) {
      // Snap basic values that drifted past a bound by rounding.
      if (std::isfinite(lower_[j]) && out.x[j] < lower_[j]) out.x[j] = lower_[j];
      if (std::isfinite(upper_[j]) && out.x[j] > upper_[j]) out.x[j] = upper_[j];
    }
    return out;
  }

private:
  LpStatus iterate(const std::vector<double>& cost) {
    for (;;) {
      if (++iterations_ > opt_.max_iterations) throw NumericalError("simplex iteration limit reached");
      // Reduced costs; Bland: first improving nonbasic column.
      int enter = -1;
      double dir = 0.0;
      for (int j = 0; j < total_; ++j) {
        if (in_basis_[j] >= 0) continue;
        if (lower_[j] == upper_[j]) continue;
        double d = cost[j];
        for (int i = 0; i < m_; ++i) d -= cost[basis_[static_cast<std::size_t>(i)]] * a_[static_cast<std::size_t>(i)][j];
        const bool can_up = value_[j] < upper_[j];
        const bool can_down = value_[j] > lower_[j];
        if (d < -opt_.pivot_tol && can_up) {
          enter = j;
          dir = 1.0;
          break;
        }
        if (d > opt_.pivot_tol && can_down) {
          enter = j;
          dir = -1.0;
          break;
        }
      }
      if (enter < 0) return LpStatus::optimal;

      // Ratio test.
      double step = dir > 0 ? upper_[enter] - value_[enter] : value_[enter] - lower_[enter];
      int leave_row = -1;
      constexpr double tie = 1e-12;
      for (int i = 0; i < m_; ++i) {
        const double alpha = a_[static_cast<std::size_t>(i)][enter];
        if (std::abs(alpha) <= opt_.pivot_tol) continue;
        const int b = basis_[static_cast<std::size_t>(i)];
        const double rate = -dir * alpha; // d x_b / d t
        double limit = inf;
        if (rate < 0.0 && std::isfinite(lower_[b])) limit = std::max(0.0, (value_[b] - lower_[b]) / -rate);
        if (rate > 0.0 && std::isfinite(upper_[b])) limit = std::max(0.0, (upper_[b] - value_[b]) / rate);
        if (!std::isfinite(limit)) continue;
        if (limit < step - tie) {
          step = limit;
          leave_row = i;
        } else if (limit <= step + tie && leave_row >= 0 && b < basis_[static_cast<std::size_t>(leave_row)]) {
          leave_row = i;
        }
      }
      if (!std::isfinite(step)) return LpStatus::unbounded;

      for (int i = 0; i < m_; ++i) {
        const int b = basis_[static_cast<std::size_t>(i)];
        value_[b] -= dir * step * a_[static_cast<std::size_t>(i)][enter];
      }
      value_[enter] += dir * step;

      if (leave_row < 0) {
        // Bound flip: the entering variable crosses to its other bound.
        value_[enter] = dir > 0 ? upper_[enter] : lower_[enter];
        continue;
      }
      const int leave = basis_[static_cast<std::size_t>(leave_row)];
      const double alpha = a_[static_cast<std::size_t>(leave_row)][enter];
      const double rate = -dir * alpha;
      value_[leave] = rate < 0.0 ? lower_[leave] : upper_[leave];
      pivot(leave_row, enter);
      in_basis_[leave] = -1;
    }
  }

  void pivot(int r, int col) {
    auto& prow = a_[static_cast<std::size_t>(r)];
    const double piv = prow[col];
    for (double& e : prow) e /= piv;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      auto& row = a_[static_cast<std::size_t>(i)];
      const double f = row[col];
      if (f == 0.0) continue;
      for (int j = 0; j < total_; ++j) row[j] -= f * prow[j];
      row[col] = 0.0;
    }
    basis_[static_cast<std::size_t>(r)] = col;
    in_basis_[col] = r;
  }

  // x_B = B^-1 (rhs - N x_N). B^-1 is read from the artificial columns.
  void refresh_basic_values() {
    std::vector<double> resid(rhs_);
    for (int i = 0; i < m_; ++i) {
      for (int j = 0; j < n_ + m_; ++j) {
        if (in_basis_[j] >= 0) continue;
        resid[static_cast<std::size_t>(i)] -= original(i, j) * value_[j];
      }
      const int art = n_ + m_ + i;
      if (in_basis_[art] < 0) resid[static_cast<std::size_t>(i)] -= art_sign_[static_cast<std::size_t>(i)] * value_[art];
    }
    for (int r = 0; r < m_; ++r) {
      double v = 0.0;
      for (int i = 0; i < m_; ++i) {
        // B^-1(r, i) = tableau(r, art_i) * sign_i
        v += a_[static_cast<std::size_t>(r)][n_ + m_ + i] * art_sign_[static_cast<std::size_t>(i)] *
             resid[static_cast<std::size_t>(i)];
      }
      value_[basis_[static_cast<std::size_t>(r)]] = v;
    }
  }

  double original(int i, int j) const { return j < n_ ? rows_[static_cast<std::size_t>(i)][j] : (j == n_ + i ? 1.0 : 0.0); }

  SimplexOptions opt_;
  int n_;
  int m_;
  int total_ = 0;
  int iterations_ = 0;
  std::vector<std::vector<double>> a_;
  std::vector<std::vector<double>> rows_;
  std::vector<double> rhs_;
  std::vector<double> lower_, upper_, value_, cost_;
  std::vector<double> art_sign_;
  std::vector<int> basis_;
  std::vector<int> in_basis_;
};

LpSolution solve_linear(const LpProblem& p, const SimplexOptions& opt) {
  const auto& c = std::get<MaximizeLinear>(p.objective).c;
  std::vector<double> cost(c.size());
  for (std::size_t j = 0; j < c.size(); ++j) cost[j] = -c[j];
  BoundedSimplex simplex(p, cost, opt);
  auto sol = simplex.run();
  if (sol.status == LpStatus::optimal) {
    sol.objective_value = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) sol.objective_value += c[j] * sol.x[j];
  }
  return sol;
}

LpProblem negated(const LpProblem& p) {
  LpProblem q = p;
  for (auto& b : q.bounds) b = {-b.upper, -b.lower};
  for (auto& con : q.constraints) {
    for (double& a : con.coeffs) a = -a;
  }
  q.objective = MaximizeMin{};
  return q;
}

} // namespace

std::string to_string(LpStatus status) {
  switch (status) {
  case LpStatus::optimal: return "optimal";
  case LpStatus::infeasible: return "infeasible";
  case LpStatus::unbounded: return "unbounded";
  }
  return "?";
}

void LpProblem::check() const {
  if (n_vars < 0) throw InvalidArgument("negative variable count");
  if (bounds.size() != static_cast<std::size_t>(n_vars)) throw InvalidArgument("one bound pair per variable required");
  for (const auto& b : bounds) {
    if (std::isnan(b.lower) || std::isnan(b.upper) || b.lower > b.upper) throw InvalidArgument("inconsistent variable bounds");
  }
  for (const auto& con : constraints) {
    if (con.coeffs.size() != static_cast<std::size_t>(n_vars)) throw InvalidArgument("constraint row length differs from n_vars");
    for (double a : con.coeffs) {
      if (!std::isfinite(a)) throw InvalidArgument("non-finite constraint coefficient");
    }
    if (!std::isfinite(con.rhs)) throw InvalidArgument("non-finite right-hand side");
  }
  if (const auto* lin = std::get_if<MaximizeLinear>(&objective)) {
    if (lin->c.size() != static_cast<std::size_t>(n_vars)) throw InvalidArgument("objective length differs from n_vars");
  }
}

LpProblem to_standard_form(const LpProblem& p) {
  p.check();
  if (std::holds_alternative<MaximizeLinear>(p.objective)) {
    throw InvalidArgument("problem already has a linear objective");
  }
  const bool max_min = std::holds_alternative<MaximizeMin>(p.objective);
  const int n = p.n_vars;
  LpProblem out;
  out.n_vars = n + 1;
  out.bounds = p.bounds;
  out.bounds.push_back({});
  for (const auto& con : p.constraints) {
    auto row = con;
    row.coeffs.push_back(0.0);
    out.constraints.push_back(std::move(row));
  }
  for (int i = 0; i < n; ++i) {
    LpConstraint link;
    link.coeffs.assign(static_cast<std::size_t>(n + 1), 0.0);
    link.coeffs[static_cast<std::size_t>(i)] = 1.0;
    link.coeffs[static_cast<std::size_t>(n)] = -1.0;
    // max-min: x_i - y >= 0; min-max: x_i - z <= 0
    link.relation = max_min ? Relation::greater_equal : Relation::less_equal;
    link.rhs = 0.0;
    out.constraints.push_back(std::move(link));
  }
  MaximizeLinear obj;
  obj.c.assign(static_cast<std::size_t>(n + 1), 0.0);
  obj.c[static_cast<std::size_t>(n)] = max_min ? 1.0 : -1.0;
  out.objective = std::move(obj);
  return out;
}

LpSolution solve(const LpProblem& p, const SimplexOptions& opt) {
  p.check();
  if (std::holds_alternative<MaximizeLinear>(p.objective)) return solve_linear(p, opt);
  if (std::holds_alternative<MinimizeMax>(p.objective)) {
    auto sol = solve(negated(p), opt);
    for (double& v : sol.x) v = -v;
    sol.objective_value = -sol.objective_value;
    return sol;
  }
  if (p.n_vars == 0) throw InvalidArgument("max-min objective over zero variables");
  auto std_form = to_standard_form(p);
  // Bound the auxiliary variable from above by the smallest upper bound so the
  // phase II start is finite whenever the box is.
  double cap = inf;
  for (const auto& b : p.bounds) cap = std::min(cap, b.upper);
  std_form.bounds.back().upper = cap;
  auto sol = solve_linear(std_form, opt);
  if (sol.status == LpStatus::optimal) {
    sol.objective_value = sol.x.back();
    sol.x.pop_back();
  } else {
    sol.x.clear();
  }
  return sol;
}

double max_violation(const LpProblem& p, const std::vector<double>& x) {
  double worst = 0.0;
  for (int j = 0; j < p.n_vars; ++j) {
    worst = std::max(worst, p.bounds[static_cast<std::size_t>(j)].lower - x[static_cast<std::size_t>(j)]);
    worst = std::max(worst, x[static_cast<std::size_t>(j)] - p.bounds[static_cast<std::size_t>(j)].upper);
  }
  for (const auto& con : p.constraints) {
    double lhs = 0.0;
    for (int j = 0; j < p.n_vars; ++j) lhs += con.coeffs[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
    worst = std::max(worst, con.relation == Relation::less_equal ? lhs - con.rhs : con.rhs - lhs);
  }
  return worst;
}

} // namespace selfgrid
