#include "selfgrid/agents.hpp"

#include "selfgrid/error.hpp"

#include <algorithm>
#include <stdexcept>
#include <type_traits>

namespace selfgrid {

namespace {

constexpr AgentId kEd{Role::ED, 0};

Message make(Performative p, AgentId from, AgentId to, long time, Content content) {
  return Message{p, from, to, time, std::move(content)};
}

template <typename T>
const T* content_as(const Message& m) {
  return std::get_if<T>(&m.content);
}

std::vector<AgentId> without(std::vector<AgentId> members, AgentId self) {
  members.erase(std::remove(members.begin(), members.end(), self), members.end());
  return members;
}

} // namespace

// ------------------------------------------------------------ organization

std::optional<AgentId> Organization::lps_of_bus(int bus) const {
  const int sub = decomposition.subnetwork_of_bus(bus);
  if (sub < 0) return std::nullopt;
  return AgentId{Role::LPS, sub};
}

std::optional<AgentId> Organization::lps_of_dg(int dg_id) const {
  const int sub = decomposition.subnetwork_of_dg(dg_id);
  if (sub < 0) return std::nullopt;
  return AgentId{Role::LPS, sub};
}

std::vector<AgentId> Organization::members(int subnetwork) const {
  const auto& sub = decomposition.subnetwork(subnetwork);
  std::vector<AgentId> out;
  out.push_back({Role::LPS, sub.id});
  for (int b : sub.bus_ids) out.push_back({Role::VD, b});
  for (int d : sub.dg_ids) out.push_back({Role::DG, d});
  std::sort(out.begin(), out.end());
  return out;
}

std::shared_ptr<const Organization> build_organization(const GridModel& grid, const SensitivityMatrix& sens,
                                                       DgMode mode, const VoltageLimits& limits, double epsilon,
                                                       int epoch) {
  auto org = std::make_shared<Organization>();
  org->epoch = epoch;
  org->epsilon = epsilon;
  org->mode = mode;
  org->limits = limits;
  org->decomposition = decompose(sens, grid, mode, epsilon);
  for (const auto& sub : org->decomposition.subnetworks) {
    org->areas.emplace(sub.id, make_control_area(org->decomposition, sub.id, sens, grid, mode));
  }
  for (const auto& dg : grid.dgs) {
    DgKnowledge k;
    k.available = dg.available;
    if (dg.available) k.surplus = dg_surplus(dg, mode);
    org->dg_registry[dg.id] = k;
  }
  org->monitored_buses = sens.monitored_buses;
  std::sort(org->monitored_buses.begin(), org->monitored_buses.end());
  return org;
}

bool message_is_local(const Message& m, const Organization& org) {
  if (m.sender.role == Role::ED || m.destination.role == Role::ED) {
    return std::holds_alternative<EscalationRequest>(m.content) || std::holds_alternative<ReorganizeNotice>(m.content) ||
           std::holds_alternative<SubnetworkAssignment>(m.content) || std::holds_alternative<RestoreRequest>(m.content);
  }
  AgentId lps;
  AgentId other;
  if (m.sender.role == Role::LPS) {
    lps = m.sender;
    other = m.destination;
  } else if (m.destination.role == Role::LPS) {
    lps = m.destination;
    other = m.sender;
  } else {
    return false;
  }
  auto it = org.areas.find(lps.index);
  if (it == org.areas.end()) return false;
  const auto& area = it->second;
  if (other.role == Role::DG) return area.contains_dg(other.index);
  if (other.role == Role::VD) {
    const auto scope = area.measurement_scope();
    return std::binary_search(scope.begin(), scope.end(), other.index);
  }
  return false;
}

// ---------------------------------------------------------------- ED agent

namespace {

std::vector<Message> assignment_messages(const Organization& org, long time) {
  std::vector<Message> out;
  for (const auto& sub : org.decomposition.subnetworks) {
    const AgentId lps{Role::LPS, sub.id};
    out.push_back(make(Performative::inform, kEd, lps, time,
                       SubnetworkAssignment{sub.id, org.epsilon, without(org.members(sub.id), lps)}));
  }
  for (int bus : org.monitored_buses) {
    const AgentId vd{Role::VD, bus};
    const int sub = org.decomposition.subnetwork_of_bus(bus);
    SubnetworkAssignment asg{sub, org.epsilon, {}};
    if (sub >= 0) asg.members = without(org.members(sub), vd);
    out.push_back(make(Performative::inform, kEd, vd, time, std::move(asg)));
  }
  return out;
}

std::vector<Message> republish(EdState& ed, long time) {
  ed.org = build_organization(*ed.grid, *ed.sensitivity, ed.mode, ed.limits, ed.ladder.current(), ed.org->epoch + 1);
  std::vector<Message> out;
  for (const auto& dg : ed.grid->dgs) {
    out.push_back(make(Performative::inform, kEd, {Role::DG, dg.id}, time, ReorganizeNotice{ed.ladder.current()}));
  }
  auto asg = assignment_messages(*ed.org, time);
  out.insert(out.end(), asg.begin(), asg.end());
  return out;
}

} // namespace

EdStart ed_initialize(const GridModel& grid, const SensitivityMatrix& sens, DgMode mode, const EpsilonLadder& ladder,
                      const VoltageLimits& limits, long time) {
  limits.check();
  EdStart start;
  auto& ed = start.state;
  ed.ladder = ladder;
  ed.mode = mode;
  ed.limits = limits;
  ed.grid = std::make_shared<const GridModel>(grid);
  ed.sensitivity = std::make_shared<const SensitivityMatrix>(sens);
  ed.org = build_organization(grid, sens, mode, limits, ladder.current(), 0);
  start.messages = assignment_messages(*ed.org, time);
  return start;
}

void ed_receive(EdState& ed, const std::vector<Message>& inbox) {
  for (const auto& m : inbox) {
    if (content_as<EscalationRequest>(m) && m.performative == Performative::request) {
      ed.escalation_requesters.insert(m.sender);
    } else if (content_as<RestoreRequest>(m)) {
      ed.restore_requested = true;
    }
  }
}

std::vector<Message> ed_reorganize(EdState& ed, const Content& request, long time) {
  if (std::holds_alternative<EscalationRequest>(request)) {
    if (ed.failed) return {};
    if (ed.ladder.at_bottom()) {
      ed.failed = true;
      std::vector<Message> out;
      for (const auto& who : ed.escalation_requesters) {
        out.push_back(make(Performative::failure, kEd, who, time, EscalationRequest{"ladder_exhausted"}));
      }
      return out;
    }
    ed.ladder = ed.ladder.finer();
    ++ed.escalations;
    return republish(ed, time);
  }
  if (std::holds_alternative<RestoreRequest>(request)) {
    if (ed.ladder.index() == 0) return {};
    ed.ladder = ed.ladder.restored();
    return republish(ed, time);
  }
  throw InvalidArgument("the ED reorganizes only on escalation or restore requests");
}

std::vector<Message> ed_end_of_round(EdState& ed, long time) {
  std::vector<Message> out;
  if (!ed.escalation_requesters.empty()) {
    out = ed_reorganize(ed, EscalationRequest{"escalation"}, time);
    ed.escalation_requesters.clear();
  } else if (ed.restore_requested) {
    out = ed_reorganize(ed, RestoreRequest{}, time);
    ed.restore_requested = false;
  }
  return out;
}

std::vector<Message> ed_force_epsilon(EdState& ed, double epsilon, long time) {
  auto next = ed.ladder.at(epsilon);
  if (next == ed.ladder) return {};
  ed.ladder = next;
  return republish(ed, time);
}

// ---------------------------------------------------------------- VD agent

std::optional<Message> vd_monitor(VdState& vd, double v_now, long time) {
  vd.reading.v = v_now;
  if (!detect_violation(vd.bus, v_now, vd.limits)) return std::nullopt;
  const AgentId self{Role::VD, vd.bus};
  if (vd.lps) return make(Performative::inform, self, *vd.lps, time, ViolationReport{v_now});
  return make(Performative::request, self, kEd, time, EscalationRequest{"uncontrollable"});
}

std::vector<Message> vd_step(VdState& vd, const std::vector<Message>& inbox, long time) {
  std::vector<Message> out;
  const AgentId self{Role::VD, vd.bus};
  for (const auto& m : inbox) {
    if (const auto* asg = content_as<SubnetworkAssignment>(m)) {
      vd.subnetwork = asg->subnetwork;
      vd.lps = asg->subnetwork >= 0 ? std::optional<AgentId>(AgentId{Role::LPS, asg->subnetwork}) : std::nullopt;
    } else if (content_as<MeasurementQuery>(m)) {
      out.push_back(make(Performative::inform, self, m.sender, time,
                         MeasurementReport{vd.reading.v, vd.reading.theta}));
    }
  }
  return out;
}

// --------------------------------------------------------------- LPS agent

namespace {

struct LpsContext {
  LpsState& lps;
  long time;
  std::vector<Message>& out;

  AgentId self() const { return {Role::LPS, lps.subnetwork}; }
  void send(Performative p, AgentId to, Content c) { out.push_back(make(p, self(), to, time, std::move(c))); }
  void escalate(const std::string& reason) { send(Performative::request, kEd, EscalationRequest{reason}); }
};

void lps_absorb(LpsState& lps, const Message& m, const Organization& published) {
  if (const auto* asg = content_as<SubnetworkAssignment>(m)) {
    lps.area = published.areas.at(lps.subnetwork);
    lps.epsilon = asg->epsilon;
    lps.limits = published.limits;
    lps.assigned = true;
    std::map<int, DgKnowledge> known;
    for (int d : lps.area.dg_ids) {
      auto it = lps.dgs.find(d);
      known[d] = it != lps.dgs.end() ? it->second : published.dg_registry.at(d);
    }
    lps.dgs = std::move(known);
    return;
  }
  if (const auto* st = content_as<DgStatus>(m)) {
    auto it = lps.dgs.find(st->dg);
    if (it == lps.dgs.end()) return;
    const bool was_out = !it->second.available;
    it->second.available = st->available;
    if (st->surplus_upper && st->surplus_lower) it->second.surplus = {*st->surplus_upper, *st->surplus_lower};
    if (st->available && was_out) lps.restore_pending = true;
    return;
  }
  if (const auto* v = content_as<ViolationReport>(m)) {
    const int bus = m.sender.index;
    if (!lps.area.contains_bus(bus)) return;
    if (auto viol = detect_violation(bus, v->voltage, lps.limits)) lps.pending[bus] = *viol;
    return;
  }
  if (const auto* r = content_as<MeasurementReport>(m)) {
    if (lps.awaiting_measurements.erase(m.sender.index)) lps.readings[m.sender.index] = {r->voltage, r->angle};
    return;
  }
  if (const auto* adj = content_as<AdjustCommand>(m)) {
    if (!lps.awaiting_confirms.erase(adj->dg)) return;
    if (m.performative != Performative::confirm) return;
    auto& k = lps.dgs.at(adj->dg);
    k.surplus.upper -= adj->delta;
    k.surplus.lower -= adj->delta;
    if (lps.phase == LpsPhase::adjusting && lps.outage_plan) lps.outage_adjustments[adj->dg] += adj->delta;
    if (lps.phase == LpsPhase::resetting) lps.outage_adjustments.erase(adj->dg);
  }
}

bool all_available(const LpsState& lps) {
  return std::all_of(lps.dgs.begin(), lps.dgs.end(), [](const auto& kv) { return kv.second.available; });
}

void start_reset(LpsContext& ctx) {
  auto& lps = ctx.lps;
  lps.restore_pending = false;
  if (!all_available(lps)) return;
  bool any = false;
  for (const auto& [dg, acc] : lps.outage_adjustments) {
    ctx.send(Performative::request, {Role::DG, dg}, AdjustCommand{dg, -acc, lps.area.mode});
    lps.awaiting_confirms.insert(dg);
    any = true;
  }
  if (any) {
    lps.phase = LpsPhase::resetting;
  } else {
    lps.outage_adjustments.clear();
    ctx.send(Performative::request, kEd, RestoreRequest{});
  }
}

void start_attempt(LpsContext& ctx) {
  auto& lps = ctx.lps;
  lps.active.clear();
  for (const auto& [bus, v] : lps.pending) lps.active.push_back(v);
  lps.pending.clear();

  std::set<int> involved;
  for (const auto& v : lps.active) {
    const auto closest = lps.area.closest_dgs(v.bus);
    std::vector<int> usable;
    for (int d : closest) {
      if (lps.dgs.at(d).available) usable.push_back(d);
    }
    if (usable.empty()) {
      ctx.escalate(closest.empty() ? "uncontrollable" : "dg_unavailable");
      lps.active.clear();
      return;
    }
    involved.insert(usable.begin(), usable.end());
  }
  lps.involved.assign(involved.begin(), involved.end());

  std::set<int> scope;
  for (int b : constrained_buses(lps.area, lps.involved, lps.active)) scope.insert(b);
  for (const auto& pc : lps.area.protectors) {
    scope.insert(pc.primary_bus);
    scope.insert(pc.secondary_bus);
  }
  lps.readings.clear();
  lps.awaiting_measurements = scope;
  for (int b : scope) ctx.send(Performative::query_if, {Role::VD, b}, MeasurementQuery{});
  lps.phase = LpsPhase::measuring;
}

void finish_attempt(LpsContext& ctx) {
  auto& lps = ctx.lps;
  RegulationRequest req;
  req.violations = lps.active;
  req.involved = lps.involved;
  for (int d : lps.involved) req.surplus[d] = lps.dgs.at(d).surplus;
  req.measured = lps.readings;
  req.limits = lps.limits;
  const auto outcome = plan_regulation(lps.area, req);
  if (const auto* no = std::get_if<Insufficient>(&outcome)) {
    ctx.escalate(no->reason);
    lps.active.clear();
    lps.phase = LpsPhase::idle;
    return;
  }
  const auto& plan = std::get<RegulationPlan>(outcome);
  PlanRecord rec{ctx.time, lps.subnetwork, lps.epsilon, {}, plan};
  for (const auto& v : lps.active) rec.violating_buses.push_back(v.bus);
  lps.plans.push_back(std::move(rec));
  lps.outage_plan = !all_available(lps);
  for (const auto& [dg, delta] : plan.adjustments) {
    ctx.send(Performative::request, {Role::DG, dg}, AdjustCommand{dg, delta, plan.mode});
    lps.awaiting_confirms.insert(dg);
  }
  lps.phase = LpsPhase::adjusting;
}

} // namespace

std::vector<Message> lps_handle(LpsState& lps, const std::vector<Message>& inbox, long time,
                                const Organization& published) {
  std::vector<Message> out;
  for (const auto& m : inbox) lps_absorb(lps, m, published);
  if (!lps.assigned) return out;

  LpsContext ctx{lps, time, out};
  if (lps.phase == LpsPhase::resetting && lps.awaiting_confirms.empty()) {
    lps.outage_adjustments.clear();
    ctx.send(Performative::request, kEd, RestoreRequest{});
    lps.phase = LpsPhase::idle;
  }
  if (lps.phase == LpsPhase::adjusting && lps.awaiting_confirms.empty()) {
    lps.active.clear();
    lps.involved.clear();
    lps.phase = LpsPhase::idle;
  }
  if (lps.phase == LpsPhase::idle && lps.restore_pending) start_reset(ctx);
  if (lps.phase == LpsPhase::idle && !lps.pending.empty()) start_attempt(ctx);
  if (lps.phase == LpsPhase::measuring && lps.awaiting_measurements.empty()) finish_attempt(ctx);
  return out;
}

// ---------------------------------------------------------------- DG agent

DgStatus dg_status(const DgState& dg) {
  DgStatus s;
  s.dg = dg.unit.id;
  s.available = dg.unit.available;
  if (dg.unit.available) {
    const auto b = dg_surplus(dg.unit, dg.mode);
    s.surplus_upper = b.upper;
    s.surplus_lower = b.lower;
  }
  return s;
}

std::vector<Message> dg_step(DgState& dg, const std::vector<Message>& inbox, long time,
                             const Organization& published) {
  std::vector<Message> out;
  const AgentId self{Role::DG, dg.unit.id};
  bool reorganized = false;
  for (const auto& m : inbox) {
    if (const auto* adj = content_as<AdjustCommand>(m)) {
      try {
        if (adj->dg != dg.unit.id) throw InvalidArgument("adjustment addressed to another unit");
        apply_adjustment(dg.unit, adj->delta, adj->mode);
        out.push_back(make(Performative::confirm, self, m.sender, time, *adj));
      } catch (const InvalidArgument&) {
        out.push_back(make(Performative::failure, self, m.sender, time, *adj));
      }
    } else if (content_as<ReorganizeNotice>(m)) {
      reorganized = true;
    }
  }
  if (reorganized) {
    dg.lps = published.lps_of_dg(dg.unit.id);
    if (dg.lps) out.push_back(make(Performative::inform, self, *dg.lps, time, dg_status(dg)));
  }
  return out;
}

std::optional<Message> dg_set_available(DgState& dg, bool available, long time) {
  if (dg.unit.available == available) return std::nullopt;
  dg.unit.available = available;
  if (!dg.lps) return std::nullopt;
  return make(Performative::inform, {Role::DG, dg.unit.id}, *dg.lps, time, dg_status(dg));
}

// ------------------------------------------------------------ the runtime

AgentSystem::AgentSystem(const GridModel& grid, const SensitivityMatrix& sens, DgMode mode, const EpsilonLadder& ladder,
                         const VoltageLimits& limits) {
  auto start = ed_initialize(grid, sens, mode, ladder, limits, tick_);
  ed_ = std::move(start.state);
  orgs_.push_back(ed_.org);
  for (int bus : ed_.org->monitored_buses) vds_.emplace(bus, VdState{bus, limits, -1, std::nullopt, {}});
  for (const auto& unit : grid.dgs) dgs_.emplace(unit.id, DgState{unit, mode, ed_.org->lps_of_dg(unit.id)});
  adopt_organization();
  send(std::move(start.messages));
  run_to_quiescence();
}

void AgentSystem::adopt_organization() {
  std::map<int, DgKnowledge> knowledge;
  std::map<int, double> ledger;
  for (auto& [id, lps] : lps_) {
    knowledge.insert(lps.dgs.begin(), lps.dgs.end());
    ledger.insert(lps.outage_adjustments.begin(), lps.outage_adjustments.end());
    for (auto& rec : lps.plans) retired_plans_.push_back(std::move(rec));
  }
  lps_.clear();
  for (const auto& [id, area] : ed_.org->areas) {
    LpsState s;
    s.subnetwork = id;
    for (int d : area.dg_ids) {
      if (auto it = knowledge.find(d); it != knowledge.end()) s.dgs[d] = it->second;
      if (auto it = ledger.find(d); it != ledger.end()) s.outage_adjustments[d] = it->second;
    }
    lps_.emplace(id, std::move(s));
  }
}

void AgentSystem::send(std::vector<Message> msgs) {
  for (auto& m : msgs) queue_.push_back({std::move(m), ed_.org->epoch});
}

void AgentSystem::observe(const PowerFlowSolution& sol) {
  std::vector<Message> out;
  for (auto& [bus, vd] : vds_) {
    vd.reading.theta = sol.theta.at(static_cast<std::size_t>(bus));
    if (auto m = vd_monitor(vd, sol.v.at(static_cast<std::size_t>(bus)), tick_)) out.push_back(std::move(*m));
  }
  send(std::move(out));
}

void AgentSystem::trip(int dg_id) {
  auto it = dgs_.find(dg_id);
  if (it == dgs_.end()) throw InvalidArgument("no dg " + std::to_string(dg_id));
  if (auto m = dg_set_available(it->second, false, tick_)) send({std::move(*m)});
}

void AgentSystem::restore(int dg_id) {
  auto it = dgs_.find(dg_id);
  if (it == dgs_.end()) throw InvalidArgument("no dg " + std::to_string(dg_id));
  if (auto m = dg_set_available(it->second, true, tick_)) send({std::move(*m)});
}

void AgentSystem::force_epsilon(double epsilon) {
  const int before = ed_.org->epoch;
  auto msgs = ed_force_epsilon(ed_, epsilon, tick_);
  if (ed_.org->epoch != before) {
    orgs_.push_back(ed_.org);
    adopt_organization();
  }
  send(std::move(msgs));
  run_to_quiescence();
}

void AgentSystem::end_round() {
  const int before = ed_.org->epoch;
  auto msgs = ed_end_of_round(ed_, tick_);
  if (ed_.org->epoch != before) {
    orgs_.push_back(ed_.org);
    adopt_organization();
  }
  send(std::move(msgs));
  run_to_quiescence();
}

void AgentSystem::run_to_quiescence() {
  while (!queue_.empty()) {
    ++tick_;
    auto batch = std::move(queue_);
    queue_.clear();
    std::stable_sort(batch.begin(), batch.end(), [](const LoggedMessage& a, const LoggedMessage& b) {
      if (a.message.destination != b.message.destination) return a.message.destination < b.message.destination;
      return a.message.sender < b.message.sender;
    });

    std::map<AgentId, std::vector<Message>> inbox;
    for (const auto& lm : batch) {
      const auto& to = lm.message.destination;
      const bool exists = (to.role == Role::ED && to.index == 0) || (to.role == Role::VD && vds_.count(to.index)) ||
                          (to.role == Role::LPS && lps_.count(to.index)) || (to.role == Role::DG && dgs_.count(to.index));
      if (!exists) throw std::logic_error("message to unknown agent " + to.to_string());
      log_.push_back(lm);
      inbox[to].push_back(lm.message);
    }

    const auto& org = *ed_.org;
    std::vector<Message> out;
    auto collect = [&out](std::vector<Message> msgs) {
      for (auto& m : msgs) out.push_back(std::move(m));
    };
    for (auto& [to, msgs] : inbox) {
      switch (to.role) {
      case Role::ED: ed_receive(ed_, msgs); break;
      case Role::VD: collect(vd_step(vds_.at(to.index), msgs, tick_)); break;
      case Role::LPS: collect(lps_handle(lps_.at(to.index), msgs, tick_, org)); break;
      case Role::DG: collect(dg_step(dgs_.at(to.index), msgs, tick_, org)); break;
      }
    }
    send(std::move(out));
  }
}

void AgentSystem::write_setpoints(GridModel& grid) const {
  for (const auto& [id, dg] : dgs_) {
    auto& unit = grid.dg(id);
    unit.available = dg.unit.available;
    unit.p0 = dg.unit.p0;
    unit.q0 = dg.unit.q0;
  }
}

std::vector<PlanRecord> AgentSystem::take_plans() {
  std::vector<PlanRecord> out = std::move(retired_plans_);
  retired_plans_.clear();
  for (auto& [id, lps] : lps_) {
    for (auto& rec : lps.plans) out.push_back(std::move(rec));
    lps.plans.clear();
  }
  std::stable_sort(out.begin(), out.end(), [](const PlanRecord& a, const PlanRecord& b) {
    return a.time != b.time ? a.time < b.time : a.subnetwork < b.subnetwork;
  });
  return out;
}

} // namespace selfgrid
