#pragma once

#include "selfgrid/agents.hpp"
#include "selfgrid/decomposition.hpp"
#include "selfgrid/grid_model.hpp"
#include "selfgrid/power_flow.hpp"
#include "selfgrid/regulation.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace selfgrid {

enum class EventKind { dg_trip, dg_restore, load_scale, force_epsilon };
std::string_view to_string(EventKind kind);

struct ScenarioEvent {
  int round = 0;
  EventKind kind = EventKind::dg_trip;
  int dg = -1;          // dg_trip, dg_restore
  int bus = -1;         // load_scale
  double factor = 1.0;  // load_scale
  double epsilon = 0.0; // force_epsilon
};

enum class Method { proposed, global, local };
std::string_view to_string(Method method);
Method parse_method(std::string_view text);

struct SimConfig {
  DgMode mode = DgMode::pfc;
  EpsilonLadder ladder{{0.5}};
  VoltageLimits limits;
  int max_rounds = 10;
  PowerFlowOptions power_flow;
};

struct Scenario {
  std::string name;
  SimConfig config;
  std::vector<ScenarioEvent> events;
};

/// Scenario document: {"name", "config": {"mode", "ladder", "v_lower",
/// "v_upper", "margin", "max_rounds", "pf_tol", "pf_max_iter"},
/// "events": [...]}.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);

/// Event ids and factors checked against the grid; empty when consistent.
std::vector<std::string> check_events(const GridModel& grid, const Scenario& scenario);

struct RoundPlan {
  int subnetwork = 0;
  double epsilon = 0.0;
  std::vector<int> violating_buses;
  std::vector<int> constrained_buses;
  std::map<int, double> adjustments;
  std::pair<int, int> lp_size{0, 0};
};

struct RoundRecord {
  int round = 0;
  double epsilon = 0.0; // in force at the end of the round
  std::vector<double> v_before;
  std::vector<double> v_after;
  std::vector<double> theta_after;
  std::vector<Violation> violations;
  std::vector<RoundPlan> plans;
  int messages = 0;
  Losses losses;
};

struct SimReport {
  std::string scenario;
  Method method = Method::proposed;
  std::size_t scenario_key = 0; // hash of grid and events
  std::vector<int> monitored_buses;
  std::vector<RoundRecord> rounds;
  bool resolved = false;
  bool failed = false;   // ladder exhausted or no feasible plan
  bool diverged = false; // power flow stopped converging
  std::string divergence;
  int escalations = 0;
  int assignment_messages = 0;
  std::vector<std::string> message_log; // encoded, delivery order
  std::vector<int> message_epochs;      // organization index in force for each logged message
  std::vector<Decomposition> decompositions; // one per organization in force
  GridModel final_grid;
  std::vector<double> final_v;
  std::vector<double> final_theta;
  Losses final_losses;

  std::vector<int> involved_dgs() const;
  std::vector<int> involved_nodes() const;
  int total_messages() const;
};

SimReport run_scenario(const GridModel& grid, const Scenario& scenario);
SimReport run_global_baseline(const GridModel& grid, const Scenario& scenario);
SimReport run_local_baseline(const GridModel& grid, const Scenario& scenario);
SimReport run_method(const GridModel& grid, const Scenario& scenario, Method method);

struct ComparisonRow {
  std::string method;
  int involved_dgs = 0;
  int involved_nodes = 0;
  double p_loss = 0.0;
  double q_loss = 0.0;
  bool resolved = false;
  int escalations = 0;

  bool operator==(const ComparisonRow&) const = default;
};

/// One row per report. Throws InvalidArgument when the reports do not share a
/// grid and event list.
std::vector<ComparisonRow> compare(const std::vector<SimReport>& reports);

} // namespace selfgrid
