#pragma once

#include "selfgrid/decomposition.hpp"
#include "selfgrid/grid_model.hpp"
#include "selfgrid/message.hpp"
#include "selfgrid/power_flow.hpp"
#include "selfgrid/regulation.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace selfgrid {

struct DgKnowledge {
  bool available = true;
  SurplusBounds surplus;
};

/// Snapshot the ED publishes after every (re)decomposition. Agents read only
/// the part that concerns them: an LPS its own ControlArea, a DG the LPS that
/// now owns it.
struct Organization {
  int epoch = 0;
  double epsilon = 0.0;
  DgMode mode = DgMode::pfc;
  VoltageLimits limits;
  Decomposition decomposition;
  std::map<int, ControlArea> areas;        // subnetwork id -> area
  std::map<int, DgKnowledge> dg_registry;  // as known to the ED at start-up
  std::vector<int> monitored_buses;

  std::optional<AgentId> lps_of_bus(int bus) const;
  std::optional<AgentId> lps_of_dg(int dg_id) const;
  /// LPS, VDs and DGs of one subnetwork, in AgentId order.
  std::vector<AgentId> members(int subnetwork) const;
};

std::shared_ptr<const Organization> build_organization(const GridModel& grid, const SensitivityMatrix& sens,
                                                       DgMode mode, const VoltageLimits& limits, double epsilon,
                                                       int epoch);

/// True when the message stays inside one subnetwork under `org`, or is one
/// of the ED's organizational exchanges.
bool message_is_local(const Message& m, const Organization& org);

// ---------------------------------------------------------------- ED agent

struct EdState {
  EpsilonLadder ladder{{0.5}};
  DgMode mode = DgMode::pfc;
  VoltageLimits limits;
  std::shared_ptr<const GridModel> grid;
  std::shared_ptr<const SensitivityMatrix> sensitivity;
  std::shared_ptr<const Organization> org;
  std::set<AgentId> escalation_requesters; // collected during the round
  bool restore_requested = false;
  bool failed = false;
  int escalations = 0;
};

struct EdStart {
  EdState state;
  std::vector<Message> messages;
};

/// Decomposes at the ladder head and emits one SubnetworkAssignment per LPS
/// and per VD.
EdStart ed_initialize(const GridModel& grid, const SensitivityMatrix& sens, DgMode mode, const EpsilonLadder& ladder,
                      const VoltageLimits& limits, long time = 0);

/// Records escalation and restore requests; acting on them waits for the end
/// of the round.
void ed_receive(EdState& ed, const std::vector<Message>& inbox);

/// Escalation steps the ladder finer (or marks terminal failure at the bottom
/// and answers the requesters with failure messages); restore resets the
/// ladder to its head, and is ignored there. Returns ORG notices to every DG
/// and assignments to every LPS and VD.
std::vector<Message> ed_reorganize(EdState& ed, const Content& request, long time);

/// Applies what the round collected: escalation wins over restore.
std::vector<Message> ed_end_of_round(EdState& ed, long time);

/// Jumps to a ladder value named by a scenario event.
std::vector<Message> ed_force_epsilon(EdState& ed, double epsilon, long time);

// ---------------------------------------------------------------- VD agent

struct VdState {
  int bus = 0;
  VoltageLimits limits;
  int subnetwork = -1;
  std::optional<AgentId> lps;
  Measurement reading;
};

/// A violation report to the LPS, or an escalation to the ED when the bus
/// has no LPS at the current epsilon. Silent inside the closed band.
std::optional<Message> vd_monitor(VdState& vd, double v_now, long time);

/// Handles assignments and measurement queries.
std::vector<Message> vd_step(VdState& vd, const std::vector<Message>& inbox, long time);

// --------------------------------------------------------------- LPS agent

enum class LpsPhase { idle, measuring, adjusting, resetting };

struct PlanRecord {
  long time = 0;
  int subnetwork = 0;
  double epsilon = 0.0;
  std::vector<int> violating_buses;
  RegulationPlan plan;
};

struct LpsState {
  int subnetwork = 0;
  double epsilon = 0.0;
  bool assigned = false;
  ControlArea area;
  VoltageLimits limits;
  std::map<int, DgKnowledge> dgs;
  std::map<int, Violation> pending;
  std::vector<Violation> active;            // violations of the attempt in progress
  std::vector<int> involved;                // DGs of the attempt in progress
  std::map<int, double> outage_adjustments; // DG id -> sum applied while a unit was out
  LpsPhase phase = LpsPhase::idle;
  std::set<int> awaiting_measurements;
  std::set<int> awaiting_confirms;
  Measurements readings;
  bool outage_plan = false;
  bool restore_pending = false;
  std::vector<PlanRecord> plans;
};

/// One synchronous step: reads the inbox (sorted by sender), advances the
/// state machine and returns what the LPS sends this tick.
std::vector<Message> lps_handle(LpsState& lps, const std::vector<Message>& inbox, long time,
                                const Organization& published);

// ---------------------------------------------------------------- DG agent

struct DgState {
  DgUnit unit;
  DgMode mode = DgMode::pfc;
  std::optional<AgentId> lps;
};

DgStatus dg_status(const DgState& dg);

/// Applies Adjust commands (confirm or failure back to the sender) and, after
/// a ReorganizeNotice, reports its status to the LPS that now owns it.
std::vector<Message> dg_step(DgState& dg, const std::vector<Message>& inbox, long time,
                             const Organization& published);

/// Availability change from a scenario event; reports to the owning LPS.
std::optional<Message> dg_set_available(DgState& dg, bool available, long time);

// ------------------------------------------------------------ the runtime

struct LoggedMessage {
  Message message;
  int epoch = 0; // organization in force when it was sent
};

/// Synchronous message bus and the full agent population. Messages sent at
/// tick t are delivered at t + 1; within a tick every inbox is processed in
/// (sender role, sender index) order, agents in AgentId order.
class AgentSystem {
public:
  AgentSystem(const GridModel& grid, const SensitivityMatrix& sens, DgMode mode, const EpsilonLadder& ladder,
              const VoltageLimits& limits);

  void observe(const PowerFlowSolution& sol);
  void trip(int dg_id);
  void restore(int dg_id);
  void force_epsilon(double epsilon);
  void run_to_quiescence();
  void end_round();

  /// Copies DG availability and setpoints into the grid.
  void write_setpoints(GridModel& grid) const;

  std::vector<PlanRecord> take_plans();

  long tick() const { return tick_; }
  bool failed() const { return ed_.failed; }
  const EdState& ed() const { return ed_; }
  const Organization& organization() const { return *ed_.org; }
  const std::vector<LoggedMessage>& log() const { return log_; }
  const std::vector<std::shared_ptr<const Organization>>& organizations() const { return orgs_; }
  const std::map<int, VdState>& vds() const { return vds_; }
  const std::map<int, LpsState>& lps_agents() const { return lps_; }
  const std::map<int, DgState>& dgs() const { return dgs_; }

private:
  void send(std::vector<Message> msgs);
  void adopt_organization();

  EdState ed_;
  std::map<int, VdState> vds_;
  std::map<int, LpsState> lps_;
  std::map<int, DgState> dgs_;
  std::vector<PlanRecord> retired_plans_;
  std::vector<LoggedMessage> queue_;
  std::vector<LoggedMessage> log_;
  std::vector<std::shared_ptr<const Organization>> orgs_;
  long tick_ = 0;
};

} // namespace selfgrid
