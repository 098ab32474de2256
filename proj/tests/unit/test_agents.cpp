#include "selfgrid/agents.hpp"
#include "selfgrid/error.hpp"
#include "selfgrid/scenario.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace selfgrid;

namespace {

struct Bench {
  GridModel grid;
  PowerFlowSolution base;
  SensitivityMatrix sens;
  std::shared_ptr<const Organization> org;

  Bench(const std::string& name, double eps, DgMode mode = DgMode::pfc)
      : grid(testing::fixture_grid(name)), base(solve_power_flow(grid)), sens(compute_sensitivity(grid, base)),
        org(build_organization(grid, sens, mode, VoltageLimits{}, eps, 0)) {}
};

template <typename T>
std::vector<const Message*> with_content(const std::vector<Message>& msgs) {
  std::vector<const Message*> out;
  for (const auto& m : msgs) {
    if (std::holds_alternative<T>(m.content)) out.push_back(&m);
  }
  return out;
}

Message assignment_for(const Organization& org, int sub) {
  return Message{Performative::inform, {Role::ED, 0}, {Role::LPS, sub}, 0,
                 SubnetworkAssignment{sub, org.epsilon, org.members(sub)}};
}

// Drives one LPS through a complete attempt: assignment, statuses and
// violation reports, then answers every measurement query from `now`.
std::vector<Message> drive_attempt(LpsState& lps, const Organization& org, const PowerFlowSolution& now,
                                   const std::vector<int>& tripped) {
  std::vector<Message> inbox{assignment_for(org, lps.subnetwork)};
  lps_handle(lps, inbox, 1, org);
  inbox.clear();
  for (int d : tripped) {
    inbox.push_back({Performative::inform, {Role::DG, d}, {Role::LPS, lps.subnetwork}, 1, DgStatus{d, false, {}, {}}});
  }
  for (int b : lps.area.bus_ids) {
    if (detect_violation(b, now.v[b], org.limits)) {
      inbox.push_back({Performative::inform, {Role::VD, b}, {Role::LPS, lps.subnetwork}, 1, ViolationReport{now.v[b]}});
    }
  }
  auto out = lps_handle(lps, inbox, 2, org);
  const auto queries = with_content<MeasurementQuery>(out);
  if (queries.empty()) return out;
  inbox.clear();
  for (const auto* q : queries) {
    const int b = q->destination.index;
    inbox.push_back({Performative::inform, q->destination, q->sender, 2, MeasurementReport{now.v[b], now.theta[b]}});
  }
  return lps_handle(lps, inbox, 3, org);
}

} // namespace

TEST_CASE("initialization assigns each VD to its own subnetwork only") {
  Bench b("two_singleton", 0.5);
  const auto start = ed_initialize(b.grid, b.sens, DgMode::pfc, EpsilonLadder({0.5}), VoltageLimits{});
  CHECK(start.state.org->areas.size() == 2);
  int to_lps = 0;
  for (const auto& m : start.messages) {
    const auto& asg = std::get<SubnetworkAssignment>(m.content);
    if (m.destination.role == Role::LPS) {
      ++to_lps;
      CHECK(asg.subnetwork == m.destination.index);
      continue;
    }
    REQUIRE(m.destination.role == Role::VD);
    const int sub = start.state.org->decomposition.subnetwork_of_bus(m.destination.index);
    CHECK(asg.subnetwork == sub);
    if (sub < 0) {
      CHECK(asg.members.empty());
      continue;
    }
    for (const auto& who : asg.members) {
      if (who.role == Role::LPS) CHECK(who.index == sub);
      if (who.role == Role::VD) CHECK(start.state.org->decomposition.subnetwork_of_bus(who.index) == sub);
      if (who.role == Role::DG) CHECK(start.state.org->decomposition.subnetwork_of_dg(who.index) == sub);
    }
  }
  CHECK(to_lps == 2);
}

TEST_CASE("assignment count is monitored buses plus subnetworks") {
  Bench b("cs1", 0.4);
  const auto start = ed_initialize(b.grid, b.sens, DgMode::pfc, EpsilonLadder({0.4, 0.3}), VoltageLimits{});
  CHECK(start.messages.size() == b.sens.monitored_buses.size() + start.state.org->areas.size());
  CHECK_THROWS_AS(EpsilonLadder({}), InvalidArgument);
  CHECK_THROWS_AS(ed_initialize(b.grid, b.sens, DgMode::pfc, EpsilonLadder({0.4}), VoltageLimits{1.1, 1.0}),
                  InvalidArgument);
}

TEST_CASE("VD monitoring") {
  VdState vd{7, VoltageLimits{}, 2, AgentId{Role::LPS, 2}, {}};
  const auto m = vd_monitor(vd, 0.9488, 5);
  REQUIRE(m);
  CHECK(encode_message(*m) == "message (inform, VD7, LPS2, 5, V<0.9488>)");
  CHECK_FALSE(vd_monitor(vd, 0.95, 5));
  CHECK_FALSE(vd_monitor(vd, 1.05, 5));

  VdState orphan{9, VoltageLimits{}, -1, std::nullopt, {}};
  const auto esc = vd_monitor(orphan, 1.07, 6);
  REQUIRE(esc);
  CHECK(esc->destination == AgentId{Role::ED, 0});
  CHECK(std::holds_alternative<EscalationRequest>(esc->content));

  const auto replies = vd_step(vd, {{Performative::query_if, {Role::LPS, 2}, {Role::VD, 7}, 5, MeasurementQuery{}}}, 6);
  REQUIRE(replies.size() == 1);
  CHECK(std::get<MeasurementReport>(replies[0].content).voltage == 1.05);
}

TEST_CASE("LPS adjusts the available closest DGs") {
  Bench b("cs1", 0.4);
  auto tripped = b.grid;
  tripped.dg(4).available = false;
  const auto now = solve_power_flow(tripped, b.base);
  REQUIRE(detect_violation(13, now.v[13], VoltageLimits{}));

  LpsState lps;
  lps.subnetwork = b.org->decomposition.subnetwork_of_bus(13);
  const auto out = drive_attempt(lps, *b.org, now, {4});
  const auto adjusts = with_content<AdjustCommand>(out);
  REQUIRE(adjusts.size() == 2);
  CHECK(adjusts[0]->destination == AgentId{Role::DG, 3});
  CHECK(adjusts[1]->destination == AgentId{Role::DG, 5});
  for (const auto* a : adjusts) {
    CHECK(a->performative == Performative::request);
    CHECK(std::get<AdjustCommand>(a->content).delta > 0.0);
  }
  CHECK(lps.phase == LpsPhase::adjusting);
  CHECK(lps.outage_plan);
  REQUIRE(lps.plans.size() == 1);
  CHECK(lps.plans[0].plan.constrained_buses.size() == lps.plans[0].plan.lp_size.second / 2);
}

TEST_CASE("LPS escalates when its only closest DG is out") {
  Bench b("two_singleton", 0.5);
  auto tripped = b.grid;
  const int sub = b.org->decomposition.subnetwork_of_bus(2);
  const int dg = b.org->decomposition.subnetwork(sub).dg_ids.front();
  tripped.dg(dg).available = false;
  auto now = solve_power_flow(tripped, b.base);
  now.v[2] = 0.94; // a dip the grid alone would not produce

  LpsState lps;
  lps.subnetwork = sub;
  const auto out = drive_attempt(lps, *b.org, now, {dg});
  REQUIRE(out.size() == 1);
  CHECK(out[0].destination == AgentId{Role::ED, 0});
  CHECK(std::get<EscalationRequest>(out[0].content).reason == "dg_unavailable");
}

TEST_CASE("a quiet LPS sends nothing") {
  Bench b("cs1", 0.4);
  LpsState lps;
  lps.subnetwork = 0;
  CHECK(drive_attempt(lps, *b.org, b.base, {}).empty());
  CHECK(lps.phase == LpsPhase::idle);
}

TEST_CASE("ED escalation, restore and the ladder bottom") {
  Bench b("cs3", 0.4);
  auto start = ed_initialize(b.grid, b.sens, DgMode::pfc, EpsilonLadder({0.4, 0.2}), VoltageLimits{});
  auto& ed = start.state;
  const AgentId lps{Role::LPS, 0};

  ed_receive(ed, {{Performative::request, lps, {Role::ED, 0}, 3, EscalationRequest{"dg_unavailable"}},
                  {Performative::request, {Role::LPS, 0}, {Role::ED, 0}, 3, RestoreRequest{}}});
  auto out = ed_end_of_round(ed, 4);
  CHECK(ed.ladder.current() == 0.2);
  CHECK(ed.org->epoch == 1);
  CHECK(ed.escalations == 1);
  CHECK(with_content<ReorganizeNotice>(out).size() == b.grid.dgs.size());
  CHECK(with_content<SubnetworkAssignment>(out).size() == b.sens.monitored_buses.size() + ed.org->areas.size());
  // the restore lost to the escalation but stays pending for the next round
  CHECK(ed.restore_requested);

  out = ed_end_of_round(ed, 5);
  CHECK(ed.ladder.current() == 0.4);
  CHECK(ed.org->epoch == 2);
  CHECK(ed_reorganize(ed, RestoreRequest{}, 6).empty());

  ed.ladder = ed.ladder.finer();
  ed.escalation_requesters = {lps};
  out = ed_reorganize(ed, EscalationRequest{"infeasible"}, 7);
  CHECK(ed.failed);
  REQUIRE(out.size() == 1);
  CHECK(out[0].performative == Performative::failure);
  CHECK(out[0].destination == lps);
  CHECK_THROWS_AS(ed_reorganize(ed, MeasurementQuery{}, 8), InvalidArgument);
}

TEST_CASE("DG confirms adjustments and reports status changes") {
  Bench b("cs1", 0.4);
  DgState dg{b.grid.dg(3), DgMode::pfc, b.org->lps_of_dg(3)};
  dg.unit.q0 = 0.0;
  dg.unit.q_cap = 0.5;
  const AgentId owner = *dg.lps;
  auto out = dg_step(dg, {{Performative::request, owner, {Role::DG, 3}, 1, AdjustCommand{3, 0.241, DgMode::pfc}}}, 2,
                     *b.org);
  REQUIRE(out.size() == 1);
  CHECK(out[0].performative == Performative::confirm);
  CHECK(dg.unit.q0 == 0.241);

  out = dg_step(dg, {{Performative::request, owner, {Role::DG, 3}, 3, AdjustCommand{3, 5.0, DgMode::pfc}}}, 4, *b.org);
  CHECK(out[0].performative == Performative::failure);
  CHECK(dg.unit.q0 == 0.241);

  const auto off = dg_set_available(dg, false, 5);
  REQUIRE(off);
  CHECK(std::get<DgStatus>(off->content) == DgStatus{3, false, std::nullopt, std::nullopt});
  CHECK_FALSE(dg_set_available(dg, false, 6));
  const auto on = dg_set_available(dg, true, 7);
  REQUIRE(on);
  CHECK(std::get<DgStatus>(on->content).available);
  CHECK(std::get<DgStatus>(on->content).surplus_upper == doctest::Approx(0.5 - 0.241));

  out = dg_step(dg, {{Performative::inform, {Role::ED, 0}, {Role::DG, 3}, 8, ReorganizeNotice{0.4}}}, 9, *b.org);
  REQUIRE(out.size() == 1);
  CHECK(out[0].destination == owner);
}

TEST_CASE("every exchange stays inside the organization in force") {
  for (const auto& [grid_name, scen_name] : std::vector<std::pair<std::string, std::string>>{
           {"cs1", "trip"}, {"cs2", "both"}, {"cs3", "trip_restore"}, {"cs3", "forced"}, {"protector", "load"}}) {
    CAPTURE(grid_name);
    CAPTURE(scen_name);
    const auto grid = testing::fixture_grid(grid_name);
    const auto scen = load_scenario(testing::fixture(grid_name + "." + scen_name + ".scenario.json"));
    const auto report = run_scenario(grid, scen);
    REQUIRE(report.message_log.size() == report.message_epochs.size());
    const auto base = solve_power_flow(grid);
    const auto sens = compute_sensitivity(grid, base);
    std::vector<std::shared_ptr<const Organization>> orgs;
    for (std::size_t e = 0; e < report.decompositions.size(); ++e) {
      orgs.push_back(build_organization(grid, sens, scen.config.mode, scen.config.limits,
                                        report.decompositions[e].epsilon, static_cast<int>(e)));
    }
    int checked = 0;
    for (std::size_t k = 0; k < report.message_log.size(); ++k) {
      const auto m = decode_message(report.message_log[k]);
      const auto& org = *orgs.at(static_cast<std::size_t>(report.message_epochs[k]));
      if (!message_is_local(m, org)) FAIL_CHECK(report.message_log[k]);
      ++checked;
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("identical runs exchange identical messages") {
  const auto grid = testing::fixture_grid("cs3");
  const auto scen = load_scenario(testing::fixture("cs3.trip_restore.scenario.json"));
  const auto a = run_scenario(grid, scen);
  const auto b = run_scenario(grid, scen);
  CHECK(a.message_log == b.message_log);
  CHECK(a.final_v == b.final_v);
}
