#pragma once

#include "selfgrid/decomposition.hpp"
#include "selfgrid/grid_model.hpp"
#include "selfgrid/lp_solver.hpp"
#include "selfgrid/power_flow.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace selfgrid {

struct VoltageLimits {
  double v_lower = 0.95;
  double v_upper = 1.05;
  // Planned voltages aim this far inside the band; detection uses the band itself.
  double margin = 1e-3;

  void check() const;
  bool operator==(const VoltageLimits&) const = default;
};

enum class ViolationKind { under, over };

struct Violation {
  int bus = 0;
  double voltage = 0.0;
  ViolationKind kind = ViolationKind::under;

  bool operator==(const Violation&) const = default;
};

/// Open test: the closed band [v_lower, v_upper] is acceptable.
std::optional<Violation> detect_violation(int bus, double voltage, const VoltageLimits& limits);

/// Angle sensitivities of one protector transformer's terminals, one entry per
/// DG column of the owning area.
struct ProtectorCoupling {
  int transformer_id = 0;
  int primary_bus = 0;
  int secondary_bus = 0;
  double theta_shift = 0.0;
  std::vector<double> d_primary;
  std::vector<double> d_secondary;

  bool operator==(const ProtectorCoupling&) const = default;
};

/// Everything one LPS agent knows about the electrical behaviour of its
/// subnetwork: the retained voltage couplings between its buses and DGs and
/// the angle couplings at its protector transformers. Nothing outside the
/// subnetwork is reachable from here.
struct ControlArea {
  int id = 0;
  DgMode mode = DgMode::pfc;
  std::vector<int> dg_ids;  // columns, ascending
  std::vector<int> bus_ids; // rows, ascending
  Eigen::MatrixXd coupling; // dV(bus)/dx(dg), retained entries only
  std::vector<ProtectorCoupling> protectors;

  double coefficient(int bus, int dg_id) const;
  std::vector<int> influence(int dg_id) const;
  /// DGs whose influence range contains the bus, ascending.
  std::vector<int> closest_dgs(int bus) const;
  /// Buses whose measurements the area may request: its own buses plus the
  /// terminals of its protector transformers.
  std::vector<int> measurement_scope() const;
  bool contains_bus(int bus) const;
  bool contains_dg(int dg_id) const;
};

ControlArea make_control_area(const Decomposition& dec, int subnetwork_id, const SensitivityMatrix& sens,
                              const GridModel& grid, DgMode mode);

/// Whole-network area over the full (non-decomposed) sensitivities; used by
/// the centralized baseline.
ControlArea make_global_area(const SensitivityMatrix& sens, const GridModel& grid, DgMode mode);

struct Measurement {
  double v = 1.0;
  double theta = 0.0;

  bool operator==(const Measurement&) const = default;
};
using Measurements = std::map<int, Measurement>;

struct RegulationRequest {
  std::vector<Violation> violations;
  std::vector<int> involved;                // DG ids taking part, ascending
  std::map<int, SurplusBounds> surplus;     // per involved DG
  Measurements measured;                    // per constrained bus and protector terminal
  VoltageLimits limits;
};

struct LpAssembly {
  LpProblem problem;
  std::vector<int> dg_ids;            // variable order
  std::vector<int> constrained_buses; // two voltage rows each, in this order
  int voltage_constraints = 0;
  int protector_constraints = 0;
};

/// Buses the LP constrains: union of the involved DGs' influence ranges and
/// every violating bus.
std::vector<int> constrained_buses(const ControlArea& area, const std::vector<int>& involved,
                                   const std::vector<Violation>& violations);

LpAssembly build_lp(const ControlArea& area, const RegulationRequest& request);

struct RegulationPlan {
  DgMode mode = DgMode::pfc;
  std::map<int, double> adjustments; // DG id -> delta pu
  std::map<int, double> predicted_v; // constrained bus -> linear prediction
  std::pair<int, int> lp_size{0, 0}; // (variables, constraints)
  std::vector<int> constrained_buses;
  double objective_value = 0.0;
};

struct Insufficient {
  std::string reason; // "dg_unavailable" or "infeasible"
};

using PlanOutcome = std::variant<RegulationPlan, Insufficient>;

PlanOutcome plan_regulation(const ControlArea& area, const RegulationRequest& request);

/// Adds `delta` to q0 (PFC) or p0 (UPF) of an available unit. Throws
/// InvalidArgument naming the DG when the unit is offline or the delta leaves
/// its surplus box by more than 1e-9 pu.
void apply_adjustment(DgUnit& dg, double delta, DgMode mode);

/// New grid with each adjustment added to q0 (PFC) or p0 (UPF). Throws
/// InvalidArgument naming the DG when an adjustment leaves its surplus box.
GridModel apply_plan(const GridModel& grid, const RegulationPlan& plan);

} // namespace selfgrid
