#include "selfgrid/scenario.hpp"

#include "selfgrid/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <set>
#include <sstream>

namespace selfgrid {

using json = nlohmann::json;

std::string_view to_string(EventKind kind) {
  switch (kind) {
  case EventKind::dg_trip: return "dg_trip";
  case EventKind::dg_restore: return "dg_restore";
  case EventKind::load_scale: return "load_scale";
  case EventKind::force_epsilon: return "force_epsilon";
  }
  return "?";
}

std::string_view to_string(Method method) {
  switch (method) {
  case Method::proposed: return "proposed";
  case Method::global: return "global";
  case Method::local: return "local";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "proposed") return Method::proposed;
  if (text == "global") return Method::global;
  if (text == "local") return Method::local;
  throw ParseError("unknown method '" + std::string(text) + "' (expected proposed, global or local)");
}

// ------------------------------------------------------------------ parsing

namespace {

double get_number(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) throw ParseError(where + ": missing or non-numeric '" + key + "'");
  return it->get<double>();
}

int get_int(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_integer()) throw ParseError(where + ": missing or non-integer '" + key + "'");
  return it->get<int>();
}

} // namespace

Scenario parse_scenario(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scenario file: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("scenario file: top level must be an object");

  Scenario sc;
  if (auto it = doc.find("name"); it != doc.end()) {
    if (!it->is_string()) throw ParseError("scenario: 'name' must be a string");
    sc.name = it->get<std::string>();
  }

  const json cfg = doc.value("config", json::object());
  if (!cfg.is_object()) throw ParseError("scenario: 'config' must be an object");
  if (auto it = cfg.find("mode"); it != cfg.end()) {
    if (!it->is_string()) throw ParseError("config: 'mode' must be a string");
    sc.config.mode = parse_mode(it->get<std::string>());
  }
  auto lad = cfg.find("ladder");
  if (lad == cfg.end() || !lad->is_array()) throw ParseError("config: 'ladder' must be a list of epsilon values");
  std::vector<double> values;
  for (const auto& v : *lad) {
    if (!v.is_number()) throw ParseError("config: ladder entries must be numbers");
    values.push_back(v.get<double>());
  }
  try {
    sc.config.ladder = EpsilonLadder(values);
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (cfg.contains("v_lower")) sc.config.limits.v_lower = get_number(cfg, "v_lower", "config");
  if (cfg.contains("v_upper")) sc.config.limits.v_upper = get_number(cfg, "v_upper", "config");
  if (cfg.contains("margin")) sc.config.limits.margin = get_number(cfg, "margin", "config");
  if (cfg.contains("max_rounds")) sc.config.max_rounds = get_int(cfg, "max_rounds", "config");
  if (cfg.contains("pf_tol")) sc.config.power_flow.tol = get_number(cfg, "pf_tol", "config");
  if (cfg.contains("pf_max_iter")) sc.config.power_flow.max_iter = get_int(cfg, "pf_max_iter", "config");
  try {
    sc.config.limits.check();
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (sc.config.max_rounds < 1) throw ParseError("config: max_rounds must be at least 1");

  const json events = doc.value("events", json::array());
  if (!events.is_array()) throw ParseError("scenario: 'events' must be a list");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    const std::string w = "event " + std::to_string(i);
    if (!e.is_object()) throw ParseError(w + ": must be an object");
    ScenarioEvent ev;
    ev.round = get_int(e, "round", w);
    auto kind = e.find("kind");
    if (kind == e.end() || !kind->is_string()) throw ParseError(w + ": missing 'kind'");
    const auto k = kind->get<std::string>();
    if (k == "dg_trip" || k == "dg_restore") {
      ev.kind = k == "dg_trip" ? EventKind::dg_trip : EventKind::dg_restore;
      ev.dg = get_int(e, "dg", w);
    } else if (k == "load_scale") {
      ev.kind = EventKind::load_scale;
      ev.bus = get_int(e, "bus", w);
      ev.factor = get_number(e, "factor", w);
    } else if (k == "force_epsilon") {
      ev.kind = EventKind::force_epsilon;
      ev.epsilon = get_number(e, "epsilon", w);
    } else {
      throw ParseError(w + ": unknown kind '" + k + "'");
    }
    if (ev.round < 0) throw ParseError(w + ": round must be non-negative");
    sc.events.push_back(ev);
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) { return parse_scenario(read_text_file(path)); }

std::vector<std::string> check_events(const GridModel& grid, const Scenario& scenario) {
  std::vector<std::string> issues;
  for (std::size_t i = 0; i < scenario.events.size(); ++i) {
    const auto& ev = scenario.events[i];
    const std::string w = "event " + std::to_string(i) + ": ";
    switch (ev.kind) {
    case EventKind::dg_trip:
    case EventKind::dg_restore:
      if (!grid.dg_index(ev.dg)) issues.push_back(w + "no dg " + std::to_string(ev.dg));
      break;
    case EventKind::load_scale:
      if (ev.bus < 0 || ev.bus >= static_cast<int>(grid.buses.size())) issues.push_back(w + "no bus " + std::to_string(ev.bus));
      if (!(ev.factor > 0.0) || !std::isfinite(ev.factor)) issues.push_back(w + "factor must be positive");
      break;
    case EventKind::force_epsilon: {
      const auto& v = scenario.config.ladder.values();
      if (std::find(v.begin(), v.end(), ev.epsilon) == v.end()) issues.push_back(w + "epsilon is not on the ladder");
      break;
    }
    }
  }
  return issues;
}

// ------------------------------------------------------------------ reports

std::vector<int> SimReport::involved_dgs() const {
  std::set<int> out;
  for (const auto& r : rounds) {
    for (const auto& p : r.plans) {
      for (const auto& [dg, delta] : p.adjustments) out.insert(dg);
    }
  }
  return {out.begin(), out.end()};
}

std::vector<int> SimReport::involved_nodes() const {
  std::set<int> out;
  for (const auto& r : rounds) {
    for (const auto& p : r.plans) out.insert(p.constrained_buses.begin(), p.constrained_buses.end());
  }
  return {out.begin(), out.end()};
}

int SimReport::total_messages() const {
  int n = assignment_messages;
  for (const auto& r : rounds) n += r.messages;
  return n;
}

// -------------------------------------------------------------- controllers

namespace {

struct RoundControl {
  std::vector<RoundPlan> plans;
  int messages = 0;
  bool active = false;
};

class Controller {
public:
  virtual ~Controller() = default;
  virtual void begin_round() {}
  virtual void on_event(const ScenarioEvent& ev, GridModel& grid) = 0;
  virtual RoundControl control(GridModel& grid, const PowerFlowSolution& sol,
                               const std::vector<Violation>& violations) = 0;
  virtual bool failed() const = 0;
  virtual int escalations() const { return 0; }
  virtual double epsilon() const { return 0.0; }
  virtual void finish(SimReport&) const {}
};

class AgentController final : public Controller {
public:
  AgentController(const GridModel& grid, const SensitivityMatrix& sens, const SimConfig& cfg)
      : mas_(grid, sens, cfg.mode, cfg.ladder, cfg.limits), assignments_(static_cast<int>(mas_.log().size())) {
    mark_ = mas_.log().size();
  }

  void begin_round() override { mark_ = mas_.log().size(); }

  void on_event(const ScenarioEvent& ev, GridModel& grid) override {
    switch (ev.kind) {
    case EventKind::dg_trip: mas_.trip(ev.dg); break;
    case EventKind::dg_restore: mas_.restore(ev.dg); break;
    case EventKind::force_epsilon: mas_.force_epsilon(ev.epsilon); break;
    case EventKind::load_scale: break;
    }
    mas_.write_setpoints(grid);
  }

  RoundControl control(GridModel& grid, const PowerFlowSolution& sol, const std::vector<Violation>&) override {
    mas_.observe(sol);
    mas_.run_to_quiescence();
    auto records = mas_.take_plans();
    mas_.end_round();
    mas_.write_setpoints(grid);

    RoundControl rc;
    for (auto& rec : records) {
      RoundPlan p;
      p.subnetwork = rec.subnetwork;
      p.epsilon = rec.epsilon;
      p.violating_buses = rec.violating_buses;
      p.constrained_buses = rec.plan.constrained_buses;
      p.adjustments = rec.plan.adjustments;
      p.lp_size = rec.plan.lp_size;
      rc.plans.push_back(std::move(p));
    }
    rc.messages = static_cast<int>(mas_.log().size() - mark_);
    rc.active = rc.messages > 0;
    return rc;
  }

  bool failed() const override { return mas_.failed(); }
  int escalations() const override { return mas_.ed().escalations; }
  double epsilon() const override { return mas_.organization().epsilon; }

  void finish(SimReport& report) const override {
    report.assignment_messages = assignments_;
    for (const auto& lm : mas_.log()) {
      report.message_log.push_back(encode_message(lm.message));
      report.message_epochs.push_back(lm.epoch);
    }
    for (const auto& org : mas_.organizations()) report.decompositions.push_back(org->decomposition);
  }

private:
  AgentSystem mas_;
  int assignments_ = 0;
  std::size_t mark_ = 0;
};

/// Shared by both baselines: availability follows events directly, and
/// adjustments made while any unit is out are undone when one returns.
class DirectController : public Controller {
public:
  explicit DirectController(DgMode mode) : mode_(mode) {}

  void on_event(const ScenarioEvent& ev, GridModel& grid) override {
    if (ev.kind == EventKind::dg_trip) {
      grid.dg(ev.dg).available = false;
    } else if (ev.kind == EventKind::dg_restore) {
      auto& unit = grid.dg(ev.dg);
      if (unit.available) return;
      unit.available = true;
      for (const auto& [id, acc] : ledger_) {
        if (grid.dg(id).available) apply_adjustment(grid.dg(id), -acc, mode_);
      }
      ledger_.clear();
    }
  }

protected:
  void record(const GridModel& grid, const std::map<int, double>& adjustments) {
    const bool outage = std::any_of(grid.dgs.begin(), grid.dgs.end(), [](const DgUnit& d) { return !d.available; });
    if (!outage) return;
    for (const auto& [id, delta] : adjustments) ledger_[id] += delta;
  }

  DgMode mode_;
  std::map<int, double> ledger_;
};

class GlobalController final : public DirectController {
public:
  GlobalController(const GridModel& grid, const SensitivityMatrix& sens, const SimConfig& cfg)
      : DirectController(cfg.mode), area_(make_global_area(sens, grid, cfg.mode)), limits_(cfg.limits) {}

  RoundControl control(GridModel& grid, const PowerFlowSolution& sol,
                       const std::vector<Violation>& violations) override {
    RoundControl rc;
    if (violations.empty()) return rc;
    rc.messages = static_cast<int>(violations.size());

    RegulationRequest req;
    req.violations = violations;
    req.limits = limits_;
    for (int dg : area_.dg_ids) {
      const auto& unit = grid.dg(dg);
      if (!unit.available) continue;
      const bool couples = std::any_of(violations.begin(), violations.end(),
                                       [&](const Violation& v) { return area_.coefficient(v.bus, dg) != 0.0; });
      if (!couples) continue;
      req.involved.push_back(dg);
      req.surplus[dg] = dg_surplus(unit, mode_);
    }
    for (int b : area_.measurement_scope()) {
      req.measured[b] = {sol.v[static_cast<std::size_t>(b)], sol.theta[static_cast<std::size_t>(b)]};
    }
    const auto outcome = plan_regulation(area_, req);
    const auto* plan = std::get_if<RegulationPlan>(&outcome);
    if (!plan) {
      failed_ = true;
      return rc;
    }
    grid = apply_plan(grid, *plan);
    record(grid, plan->adjustments);

    RoundPlan p;
    p.subnetwork = 0;
    for (const auto& v : violations) p.violating_buses.push_back(v.bus);
    p.constrained_buses = plan->constrained_buses;
    p.adjustments = plan->adjustments;
    p.lp_size = plan->lp_size;
    rc.plans.push_back(std::move(p));
    rc.messages += static_cast<int>(plan->adjustments.size());
    rc.active = true;
    return rc;
  }

  bool failed() const override { return failed_; }

private:
  ControlArea area_;
  VoltageLimits limits_;
  bool failed_ = false;
};

class LocalController final : public DirectController {
public:
  LocalController(const SensitivityMatrix& sens, const SimConfig& cfg)
      : DirectController(cfg.mode), sens_(sens), limits_(cfg.limits) {}

  RoundControl control(GridModel& grid, const PowerFlowSolution& sol, const std::vector<Violation>&) override {
    RoundControl rc;
    const auto& block = sens_.voltage_block(mode_);
    for (auto& unit : grid.dgs) {
      if (!unit.available) continue;
      const auto viol = detect_violation(unit.bus, sol.v[static_cast<std::size_t>(unit.bus)], limits_);
      if (!viol) continue;
      const int row = sens_.monitored_row(unit.bus);
      const int col = sens_.dg_column(unit.id);
      if (row < 0 || col < 0 || block(row, col) == 0.0) continue;
      const double target = viol->kind == ViolationKind::under ? limits_.v_lower + limits_.margin : limits_.v_upper - limits_.margin;
      const auto box = dg_surplus(unit, mode_);
      const double delta = std::clamp((target - viol->voltage) / block(row, col), box.lower, box.upper);
      if (delta == 0.0) continue;
      apply_adjustment(unit, delta, mode_);

      RoundPlan p;
      p.subnetwork = -1;
      p.violating_buses = {unit.bus};
      p.constrained_buses = {unit.bus};
      p.adjustments = {{unit.id, delta}};
      rc.plans.push_back(std::move(p));
    }
    std::map<int, double> all;
    for (const auto& p : rc.plans) all.insert(p.adjustments.begin(), p.adjustments.end());
    record(grid, all);
    rc.active = !rc.plans.empty();
    return rc;
  }

  bool failed() const override { return false; }

private:
  SensitivityMatrix sens_;
  VoltageLimits limits_;
};

std::size_t scenario_key(const GridModel& grid, const Scenario& sc) {
  std::ostringstream os;
  os << serialize_grid(grid);
  os.precision(17);
  for (const auto& e : sc.events) {
    os << '|' << e.round << ',' << to_string(e.kind) << ',' << e.dg << ',' << e.bus << ',' << e.factor << ','
       << e.epsilon;
  }
  return std::hash<std::string>{}(os.str());
}

std::vector<Violation> violations_at(const std::vector<int>& monitored, const PowerFlowSolution& sol,
                                     const VoltageLimits& limits) {
  std::vector<Violation> out;
  for (int b : monitored) {
    if (auto v = detect_violation(b, sol.v[static_cast<std::size_t>(b)], limits)) out.push_back(*v);
  }
  return out;
}

SimReport run_loop(const GridModel& input, const Scenario& sc, Method method) {
  if (auto issues = validate(input); !issues.empty()) {
    std::vector<std::string> text;
    for (const auto& i : issues) text.push_back(i.to_string());
    throw ValidationError(std::move(text));
  }
  if (auto issues = check_events(input, sc); !issues.empty()) throw ValidationError(std::move(issues));
  sc.config.limits.check();
  if (sc.config.max_rounds < 1) throw InvalidArgument("max_rounds must be at least 1");

  SimReport report;
  report.scenario = sc.name;
  report.method = method;
  report.scenario_key = scenario_key(input, sc);

  GridModel grid = input;
  auto sol = solve_power_flow(grid, sc.config.power_flow);
  if (!sol.converged) {
    report.diverged = true;
    report.divergence = "base case power flow did not converge";
    report.final_grid = grid;
    return report;
  }
  const auto sens = compute_sensitivity(grid, sol);
  report.monitored_buses = sens.monitored_buses;

  std::unique_ptr<Controller> ctl;
  switch (method) {
  case Method::proposed: ctl = std::make_unique<AgentController>(grid, sens, sc.config); break;
  case Method::global: ctl = std::make_unique<GlobalController>(grid, sens, sc.config); break;
  case Method::local: ctl = std::make_unique<LocalController>(sens, sc.config); break;
  }

  const auto& limits = sc.config.limits;
  for (int r = 0; r < sc.config.max_rounds; ++r) {
    ctl->begin_round();
    for (const auto& ev : sc.events) {
      if (ev.round != r) continue;
      if (ev.kind == EventKind::load_scale) {
        for (auto& load : grid.loads) {
          if (load.bus == ev.bus) {
            load.p *= ev.factor;
            load.q *= ev.factor;
          }
        }
      } else {
        ctl->on_event(ev, grid);
      }
    }

    RoundRecord rec;
    rec.round = r;
    sol = solve_power_flow(grid, sol, sc.config.power_flow);
    if (!sol.converged) {
      report.diverged = true;
      report.divergence = "power flow did not converge in round " + std::to_string(r) + " before control";
      break;
    }
    rec.v_before = sol.v;
    rec.violations = violations_at(report.monitored_buses, sol, limits);

    auto rc = ctl->control(grid, sol, rec.violations);
    sol = solve_power_flow(grid, sol, sc.config.power_flow);
    if (!sol.converged) {
      report.diverged = true;
      report.divergence = "power flow did not converge in round " + std::to_string(r) + " after control";
      break;
    }
    rec.v_after = sol.v;
    rec.theta_after = sol.theta;
    rec.losses = compute_losses(grid, sol);
    rec.plans = std::move(rc.plans);
    rec.messages = rc.messages;
    rec.epsilon = ctl->epsilon();
    report.rounds.push_back(std::move(rec));

    if (ctl->failed()) break;
    const bool future = std::any_of(sc.events.begin(), sc.events.end(), [r](const ScenarioEvent& e) { return e.round > r; });
    if (!rc.active && !future) break;
  }

  report.failed = ctl->failed();
  report.escalations = ctl->escalations();
  report.final_grid = grid;
  report.final_v = sol.v;
  report.final_theta = sol.theta;
  if (!report.diverged) report.final_losses = compute_losses(grid, sol);
  report.resolved = !report.failed && !report.diverged && !report.rounds.empty() &&
                    violations_at(report.monitored_buses, sol, limits).empty();
  ctl->finish(report);
  return report;
}

} // namespace

SimReport run_scenario(const GridModel& grid, const Scenario& scenario) {
  return run_loop(grid, scenario, Method::proposed);
}

SimReport run_global_baseline(const GridModel& grid, const Scenario& scenario) {
  return run_loop(grid, scenario, Method::global);
}

SimReport run_local_baseline(const GridModel& grid, const Scenario& scenario) {
  return run_loop(grid, scenario, Method::local);
}

SimReport run_method(const GridModel& grid, const Scenario& scenario, Method method) {
  return run_loop(grid, scenario, method);
}

std::vector<ComparisonRow> compare(const std::vector<SimReport>& reports) {
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports) {
    if (r.scenario_key != reports.front().scenario_key) {
      throw InvalidArgument("reports were produced from different grids or event lists");
    }
    ComparisonRow row;
    row.method = std::string(to_string(r.method));
    row.involved_dgs = static_cast<int>(r.involved_dgs().size());
    row.involved_nodes = static_cast<int>(r.involved_nodes().size());
    row.p_loss = r.final_losses.p;
    row.q_loss = r.final_losses.q;
    row.resolved = r.resolved;
    row.escalations = r.escalations;
    rows.push_back(std::move(row));
  }
  return rows;
}

} // namespace selfgrid
