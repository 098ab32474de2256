#include "selfgrid/regulation.hpp"

#include "selfgrid/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace selfgrid {

void VoltageLimits::check() const {
  if (!(v_lower > 0.0 && v_lower < v_upper)) throw InvalidArgument("voltage limits must satisfy 0 < v_lower < v_upper");
  if (!(margin >= 0.0 && 2.0 * margin < v_upper - v_lower))
    throw InvalidArgument("planning margin must be non-negative and narrower than half the band");
}

std::optional<Violation> detect_violation(int bus, double voltage, const VoltageLimits& limits) {
  if (voltage < limits.v_lower) return Violation{bus, voltage, ViolationKind::under};
  if (voltage > limits.v_upper) return Violation{bus, voltage, ViolationKind::over};
  return std::nullopt;
}

namespace {

int index_of(const std::vector<int>& v, int value) {
  auto it = std::lower_bound(v.begin(), v.end(), value);
  return it != v.end() && *it == value ? static_cast<int>(it - v.begin()) : -1;
}

ProtectorCoupling protector_coupling(const Transformer& t, const SensitivityMatrix& sens, const std::vector<int>& dgs,
                                     DgMode mode) {
  ProtectorCoupling pc;
  pc.transformer_id = t.id;
  pc.primary_bus = t.primary_bus;
  pc.secondary_bus = t.secondary_bus;
  pc.theta_shift = t.theta_shift;
  const auto& block = sens.angle_block(mode);
  const int rp = sens.terminal_row(t.primary_bus);
  const int rs = sens.terminal_row(t.secondary_bus);
  for (int dg : dgs) {
    const int c = sens.dg_column(dg);
    pc.d_primary.push_back(rp >= 0 && c >= 0 ? block(rp, c) : 0.0);
    pc.d_secondary.push_back(rs >= 0 && c >= 0 ? block(rs, c) : 0.0);
  }
  return pc;
}

} // namespace

double ControlArea::coefficient(int bus, int dg_id) const {
  const int r = index_of(bus_ids, bus);
  const int c = index_of(dg_ids, dg_id);
  return r >= 0 && c >= 0 ? coupling(r, c) : 0.0;
}

std::vector<int> ControlArea::influence(int dg_id) const {
  std::vector<int> out;
  const int c = index_of(dg_ids, dg_id);
  if (c < 0) return out;
  for (std::size_t r = 0; r < bus_ids.size(); ++r) {
    if (coupling(static_cast<Eigen::Index>(r), c) != 0.0) out.push_back(bus_ids[r]);
  }
  return out;
}

std::vector<int> ControlArea::closest_dgs(int bus) const {
  std::vector<int> out;
  const int r = index_of(bus_ids, bus);
  if (r < 0) return out;
  for (std::size_t c = 0; c < dg_ids.size(); ++c) {
    if (coupling(r, static_cast<Eigen::Index>(c)) != 0.0) out.push_back(dg_ids[c]);
  }
  return out;
}

std::vector<int> ControlArea::measurement_scope() const {
  std::set<int> scope(bus_ids.begin(), bus_ids.end());
  for (const auto& pc : protectors) {
    scope.insert(pc.primary_bus);
    scope.insert(pc.secondary_bus);
  }
  return {scope.begin(), scope.end()};
}

bool ControlArea::contains_bus(int bus) const { return index_of(bus_ids, bus) >= 0; }
bool ControlArea::contains_dg(int dg_id) const { return index_of(dg_ids, dg_id) >= 0; }

ControlArea make_control_area(const Decomposition& dec, int subnetwork_id, const SensitivityMatrix& sens,
                              const GridModel& grid, DgMode mode) {
  const auto& sub = dec.subnetwork(subnetwork_id);
  ControlArea area;
  area.id = sub.id;
  area.mode = mode;
  area.dg_ids = sub.dg_ids;
  area.bus_ids = sub.bus_ids;
  area.coupling = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sub.bus_ids.size()),
                                        static_cast<Eigen::Index>(sub.dg_ids.size()));
  for (std::size_t r = 0; r < sub.bus_ids.size(); ++r) {
    const int dr = dec.row_of(sub.bus_ids[r]);
    for (std::size_t c = 0; c < sub.dg_ids.size(); ++c) {
      area.coupling(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = dec.retained(dr, dec.col_of(sub.dg_ids[c]));
    }
  }
  for (int tid : sub.transformer_ids) {
    const auto& t = grid.transformer(tid);
    if (t.has_protector) area.protectors.push_back(protector_coupling(t, sens, area.dg_ids, mode));
  }
  return area;
}

ControlArea make_global_area(const SensitivityMatrix& sens, const GridModel& grid, DgMode mode) {
  ControlArea area;
  area.id = 0;
  area.mode = mode;
  area.dg_ids = sens.dg_ids;
  std::sort(area.dg_ids.begin(), area.dg_ids.end());
  area.bus_ids = sens.monitored_buses;
  std::sort(area.bus_ids.begin(), area.bus_ids.end());
  const auto& block = sens.voltage_block(mode);
  area.coupling = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(area.bus_ids.size()),
                                        static_cast<Eigen::Index>(area.dg_ids.size()));
  for (std::size_t r = 0; r < area.bus_ids.size(); ++r) {
    for (std::size_t c = 0; c < area.dg_ids.size(); ++c) {
      area.coupling(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          block(sens.monitored_row(area.bus_ids[r]), sens.dg_column(area.dg_ids[c]));
    }
  }
  for (const auto& t : grid.transformers) {
    if (t.has_protector) area.protectors.push_back(protector_coupling(t, sens, area.dg_ids, mode));
  }
  return area;
}

std::vector<int> constrained_buses(const ControlArea& area, const std::vector<int>& involved,
                                   const std::vector<Violation>& violations) {
  std::set<int> buses;
  for (int dg : involved) {
    for (int b : area.influence(dg)) buses.insert(b);
  }
  for (const auto& v : violations) buses.insert(v.bus);
  return {buses.begin(), buses.end()};
}

namespace {

struct Direction {
  bool allow_up = true;
  bool allow_down = true;
  bool max_min = true;
};

// Undervoltage raises output, overvoltage lowers it. PFC follows max-min for
// overvoltage and min-max for undervoltage; UPF uses max-min throughout.
Direction direction_for(const std::vector<Violation>& violations, const VoltageLimits& limits, DgMode mode) {
  bool under = false;
  bool over = false;
  double worst_under = 0.0;
  double worst_over = 0.0;
  for (const auto& v : violations) {
    if (v.kind == ViolationKind::under) {
      under = true;
      worst_under = std::max(worst_under, limits.v_lower - v.voltage);
    } else {
      over = true;
      worst_over = std::max(worst_over, v.voltage - limits.v_upper);
    }
  }
  Direction d;
  d.allow_up = under || !over;
  d.allow_down = over || !under;
  const bool treat_as_over = over && (!under || worst_over > worst_under);
  d.max_min = mode == DgMode::upf || treat_as_over;
  return d;
}

} // namespace

LpAssembly build_lp(const ControlArea& area, const RegulationRequest& req) {
  LpAssembly out;
  out.dg_ids = req.involved;
  std::sort(out.dg_ids.begin(), out.dg_ids.end());
  out.constrained_buses = constrained_buses(area, out.dg_ids, req.violations);
  const Direction dir = direction_for(req.violations, req.limits, area.mode);
  const int n = static_cast<int>(out.dg_ids.size());

  auto& p = out.problem;
  p.n_vars = n;
  if (dir.max_min) p.objective = MaximizeMin{};
  else p.objective = MinimizeMax{};
  for (int dg : out.dg_ids) {
    auto it = req.surplus.find(dg);
    if (it == req.surplus.end()) throw InvalidArgument("no surplus known for dg " + std::to_string(dg));
    VarBounds b;
    b.upper = dir.allow_up ? std::max(0.0, it->second.upper) : 0.0;
    b.lower = dir.allow_down ? std::min(0.0, it->second.lower) : 0.0;
    p.bounds.push_back(b);
  }

  auto measured = [&](int bus) -> const Measurement& {
    auto it = req.measured.find(bus);
    if (it == req.measured.end()) throw InvalidArgument("no measurement for bus " + std::to_string(bus));
    return it->second;
  };

  for (int bus : out.constrained_buses) {
    std::vector<double> row(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) row[static_cast<std::size_t>(k)] = area.coefficient(bus, out.dg_ids[static_cast<std::size_t>(k)]);
    const double v0 = measured(bus).v;
    p.constraints.push_back({row, Relation::greater_equal, req.limits.v_lower + req.limits.margin - v0});
    p.constraints.push_back({row, Relation::less_equal, req.limits.v_upper - req.limits.margin - v0});
    out.voltage_constraints += 2;
  }

  for (const auto& pc : area.protectors) {
    // 0 <= theta_p0 + dp.x - (theta_s0 + shift + ds.x)
    std::vector<double> row(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      const int col = static_cast<int>(std::lower_bound(area.dg_ids.begin(), area.dg_ids.end(), out.dg_ids[static_cast<std::size_t>(k)]) -
                                       area.dg_ids.begin());
      row[static_cast<std::size_t>(k)] = pc.d_primary[static_cast<std::size_t>(col)] - pc.d_secondary[static_cast<std::size_t>(col)];
    }
    const double margin0 = measured(pc.primary_bus).theta - (measured(pc.secondary_bus).theta + pc.theta_shift);
    p.constraints.push_back({row, Relation::greater_equal, -margin0});
    ++out.protector_constraints;
  }
  return out;
}

PlanOutcome plan_regulation(const ControlArea& area, const RegulationRequest& req) {
  if (req.involved.empty()) return Insufficient{"dg_unavailable"};
  const auto lp = build_lp(area, req);
  const auto sol = solve(lp.problem);
  if (sol.status != LpStatus::optimal) return Insufficient{"infeasible"};

  RegulationPlan plan;
  plan.mode = area.mode;
  plan.lp_size = {lp.problem.n_vars, static_cast<int>(lp.problem.constraints.size())};
  plan.constrained_buses = lp.constrained_buses;
  plan.objective_value = sol.objective_value;
  for (std::size_t k = 0; k < lp.dg_ids.size(); ++k) plan.adjustments[lp.dg_ids[k]] = sol.x[k] == 0.0 ? 0.0 : sol.x[k];
  for (int bus : lp.constrained_buses) {
    double v = req.measured.at(bus).v;
    for (std::size_t k = 0; k < lp.dg_ids.size(); ++k) v += area.coefficient(bus, lp.dg_ids[k]) * sol.x[k];
    plan.predicted_v[bus] = v;
  }
  return plan;
}

void apply_adjustment(DgUnit& dg, double delta, DgMode mode) {
  constexpr double slack = 1e-9;
  if (!dg.available) throw InvalidArgument("dg " + std::to_string(dg.id) + " is unavailable");
  const auto box = dg_surplus(dg, mode);
  if (delta > box.upper + slack || delta < box.lower - slack) {
    throw InvalidArgument("adjustment " + std::to_string(delta) + " for dg " + std::to_string(dg.id) +
                          " leaves its surplus range [" + std::to_string(box.lower) + ", " + std::to_string(box.upper) +
                          "]");
  }
  if (mode == DgMode::pfc) {
    dg.q0 = std::clamp(dg.q0 + delta, -dg.q_abs_cap, dg.q_cap);
  } else {
    dg.p0 = std::clamp(dg.p0 + delta, 0.0, dg.p_cap);
  }
}

GridModel apply_plan(const GridModel& grid, const RegulationPlan& plan) {
  GridModel out = grid;
  for (const auto& [id, delta] : plan.adjustments) apply_adjustment(out.dg(id), delta, plan.mode);
  return out;
}

} // namespace selfgrid
