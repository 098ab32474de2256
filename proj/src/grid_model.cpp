#include "selfgrid/grid_model.hpp"

#include "selfgrid/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <queue>
#include <set>
#include <sstream>

namespace selfgrid {

using json = nlohmann::json;

ValidationError::ValidationError(std::vector<std::string> issues)
    : Error([&] {
        std::string msg = "invalid model:";
        for (const auto& issue : issues) {
          msg += "\n  " + issue;
        }
        return msg;
      }()),
      issues_(std::move(issues)) {}

std::string_view to_string(BusKind kind) { return kind == BusKind::slack ? "slack" : "pq"; }
std::string_view to_string(Level level) { return level == Level::primary ? "primary" : "secondary"; }
std::string_view to_string(DgMode mode) { return mode == DgMode::pfc ? "pfc" : "upf"; }

DgMode parse_mode(std::string_view text) {
  if (text == "pfc") return DgMode::pfc;
  if (text == "upf") return DgMode::upf;
  throw ParseError("unknown DG mode '" + std::string(text) + "' (expected pfc or upf)");
}

int GridModel::slack_bus() const {
  for (const auto& bus : buses) {
    if (bus.kind == BusKind::slack) return bus.id;
  }
  throw InvalidArgument("grid has no slack bus");
}

std::optional<std::size_t> GridModel::dg_index(int id) const {
  for (std::size_t i = 0; i < dgs.size(); ++i) {
    if (dgs[i].id == id) return i;
  }
  return std::nullopt;
}

const DgUnit& GridModel::dg(int id) const {
  auto idx = dg_index(id);
  if (!idx) throw InvalidArgument("no DG with id " + std::to_string(id));
  return dgs[*idx];
}

DgUnit& GridModel::dg(int id) {
  auto idx = dg_index(id);
  if (!idx) throw InvalidArgument("no DG with id " + std::to_string(id));
  return dgs[*idx];
}

const Transformer& GridModel::transformer(int id) const {
  for (const auto& t : transformers) {
    if (t.id == id) return t;
  }
  throw InvalidArgument("no transformer with id " + std::to_string(id));
}

std::vector<int> GridModel::dg_ids() const {
  std::vector<int> ids;
  ids.reserve(dgs.size());
  for (const auto& dg : dgs) ids.push_back(dg.id);
  return ids;
}

std::string ValidationIssue::to_string() const { return element + ": " + message; }

SurplusBounds dg_surplus(const DgUnit& dg, DgMode mode) {
  if (!dg.available) {
    throw InvalidArgument("dg " + std::to_string(dg.id) + " is unavailable; exclude it from control");
  }
  if (mode == DgMode::pfc) {
    return {dg.q_cap - dg.q0, -(dg.q_abs_cap + dg.q0)};
  }
  return {dg.p_cap - dg.p0, -dg.p0};
}

namespace {

std::string join_ids(const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(ids[i]);
  }
  return out;
}

std::vector<std::vector<int>> components_over(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) continue;
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<int> seen(n, 0);
  std::vector<std::vector<int>> comps;
  for (int s = 0; s < n; ++s) {
    if (seen[s]) continue;
    std::vector<int> comp;
    std::queue<int> q;
    q.push(s);
    seen[s] = 1;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      comp.push_back(u);
      for (int v : adj[u]) {
        if (!seen[v]) {
          seen[v] = 1;
          q.push(v);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  return comps;
}

} // namespace

std::vector<std::vector<int>> connected_components(const GridModel& grid) {
  std::vector<std::pair<int, int>> edges;
  for (const auto& br : grid.branches) edges.emplace_back(br.from, br.to);
  for (const auto& t : grid.transformers) edges.emplace_back(t.primary_bus, t.secondary_bus);
  return components_over(static_cast<int>(grid.buses.size()), edges);
}

std::vector<ValidationIssue> validate(const GridModel& grid) {
  std::vector<ValidationIssue> issues;
  auto add = [&](std::string element, std::string message) {
    issues.push_back({std::move(element), std::move(message)});
  };

  if (!(grid.s_base > 0.0)) add("grid", "s_base must be positive");

  const int n = static_cast<int>(grid.buses.size());
  if (n == 0) {
    add("grid", "no buses");
    return issues;
  }

  std::map<int, int> bus_seen;
  for (const auto& bus : grid.buses) ++bus_seen[bus.id];
  for (auto [id, count] : bus_seen) {
    if (count > 1) add("bus " + std::to_string(id), "duplicate bus id");
  }
  for (int id = 0; id < n; ++id) {
    if (!bus_seen.count(id)) add("bus " + std::to_string(id), "missing; bus ids must be dense 0.." + std::to_string(n - 1));
  }
  for (std::size_t i = 0; i < grid.buses.size(); ++i) {
    const auto& bus = grid.buses[i];
    if (bus.id != static_cast<int>(i) && bus_seen.count(bus.id) && bus_seen.at(bus.id) == 1 && bus.id >= 0 && bus.id < n) {
      add("bus " + std::to_string(bus.id), "buses must be stored in id order");
    }
    if (!(bus.base_kv > 0.0)) add("bus " + std::to_string(bus.id), "base_kv must be positive");
  }

  std::vector<int> slacks;
  for (const auto& bus : grid.buses) {
    if (bus.kind == BusKind::slack) slacks.push_back(bus.id);
  }
  if (slacks.empty()) add("grid", "no slack bus");
  if (slacks.size() > 1) add("buses " + join_ids(slacks), "more than one slack bus");

  auto bus_ok = [&](int id) { return id >= 0 && id < n && bus_seen.count(id); };
  auto bus_at = [&](int id) -> const Bus& { return grid.buses[static_cast<std::size_t>(id)]; };

  std::map<int, int> branch_seen;
  for (const auto& br : grid.branches) {
    const std::string el = "branch " + std::to_string(br.id);
    if (++branch_seen[br.id] == 2) add(el, "duplicate branch id");
    if (!bus_ok(br.from) || !bus_ok(br.to)) {
      add(el, "references a nonexistent bus");
    } else if (br.from == br.to) {
      add(el, "from and to are the same bus");
    }
    if (br.r == 0.0 && br.x == 0.0) add(el, "zero impedance");
    if (!std::isfinite(br.r) || !std::isfinite(br.x) || !std::isfinite(br.b_shunt)) add(el, "non-finite parameter");
  }

  std::map<int, int> xf_seen;
  for (const auto& t : grid.transformers) {
    const std::string el = "transformer " + std::to_string(t.id);
    if (++xf_seen[t.id] == 2) add(el, "duplicate transformer id");
    if (!bus_ok(t.primary_bus) || !bus_ok(t.secondary_bus)) {
      add(el, "references a nonexistent bus");
    } else {
      if (bus_at(t.primary_bus).level != Level::primary) add(el, "primary_bus " + std::to_string(t.primary_bus) + " is not a primary-level bus");
      if (bus_at(t.secondary_bus).level != Level::secondary) add(el, "secondary_bus " + std::to_string(t.secondary_bus) + " is not a secondary-level bus");
    }
    if (!(t.tap > 0.0)) add(el, "tap must be positive");
    if (t.r == 0.0 && t.x == 0.0) add(el, "zero impedance");
  }

  for (std::size_t i = 0; i < grid.loads.size(); ++i) {
    const auto& load = grid.loads[i];
    const std::string el = "load " + std::to_string(i) + " (bus " + std::to_string(load.bus) + ")";
    if (!bus_ok(load.bus)) {
      add(el, "references a nonexistent bus");
    } else if (bus_at(load.bus).kind != BusKind::pq) {
      add(el, "load must sit on a pq bus");
    }
  }

  std::map<int, int> dg_seen;
  for (const auto& dg : grid.dgs) {
    const std::string el = "dg " + std::to_string(dg.id);
    if (++dg_seen[dg.id] == 2) add(el, "duplicate dg id");
    if (!bus_ok(dg.bus)) {
      add(el, "bus " + std::to_string(dg.bus) + " does not exist");
    } else if (bus_at(dg.bus).kind != BusKind::pq) {
      add(el, "dg must sit on a pq bus");
    }
    if (dg.p_cap < 0.0 || dg.q_cap < 0.0 || dg.q_abs_cap < 0.0) {
      add(el, "capabilities must be non-negative");
    } else {
      if (dg.p0 < 0.0 || dg.p0 > dg.p_cap) add(el, "p0 outside [0, p_cap]");
      if (dg.q0 < -dg.q_abs_cap || dg.q0 > dg.q_cap) add(el, "q0 outside [-q_abs_cap, q_cap]");
    }
  }

  // Only check connectivity over edges whose endpoints exist.
  std::vector<std::pair<int, int>> edges;
  for (const auto& br : grid.branches) {
    if (bus_ok(br.from) && bus_ok(br.to)) edges.emplace_back(br.from, br.to);
  }
  for (const auto& t : grid.transformers) {
    if (bus_ok(t.primary_bus) && bus_ok(t.secondary_bus)) edges.emplace_back(t.primary_bus, t.secondary_bus);
  }
  auto comps = components_over(n, edges);
  if (comps.size() > 1) {
    const int root = slacks.empty() ? 0 : slacks.front();
    for (const auto& comp : comps) {
      if (std::find(comp.begin(), comp.end(), root) != comp.end()) continue;
      add("component {" + join_ids(comp) + "}", "disconnected from bus " + std::to_string(root));
    }
  }
  return issues;
}

// ---------------------------------------------------------------------------
// Document I/O

namespace {

double number(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) {
    throw ParseError(where + ": missing or non-numeric '" + key + "'");
  }
  return it->get<double>();
}

int integer(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_integer()) {
    throw ParseError(where + ": missing or non-integer '" + key + "'");
  }
  return it->get<int>();
}

std::string text(const json& obj, const char* key, const std::string& where, const char* fallback = nullptr) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (fallback) return fallback;
    throw ParseError(where + ": missing '" + key + "'");
  }
  if (!it->is_string()) throw ParseError(where + ": '" + key + "' must be a string");
  return it->get<std::string>();
}

bool flag(const json& obj, const char* key, const std::string& where, bool fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) throw ParseError(where + ": '" + key + "' must be a boolean");
  return it->get<bool>();
}

// A per-unit key, or a physical key scaled by `scale`, or the fallback.
double quantity(const json& obj, const char* pu_key, const char* phys_key, double scale, const std::string& where,
                std::optional<double> fallback = std::nullopt) {
  if (obj.contains(pu_key)) return number(obj, pu_key, where);
  if (phys_key && obj.contains(phys_key)) return number(obj, phys_key, where) * scale;
  if (fallback) return *fallback;
  throw ParseError(where + ": missing '" + pu_key + "'" + (phys_key ? std::string(" or '") + phys_key + "'" : std::string()));
}

const json& section(const json& doc, const char* key, bool required) {
  static const json empty = json::array();
  auto it = doc.find(key);
  if (it == doc.end()) {
    if (required) throw ParseError(std::string("missing section '") + key + "'");
    return empty;
  }
  if (!it->is_array()) throw ParseError(std::string("section '") + key + "' must be a list");
  return *it;
}

} // namespace

GridModel parse_grid(std::string_view source) {
  json doc;
  try {
    doc = json::parse(source);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("network file: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("network file: top level must be an object");

  GridModel grid;
  grid.s_base = number(doc, "s_base_mva", "network");
  const double inv_s = 1.0 / grid.s_base;

  for (const auto& item : section(doc, "buses", true)) {
    const std::string where = "bus";
    Bus bus;
    bus.id = integer(item, "id", where);
    const std::string w = "bus " + std::to_string(bus.id);
    const auto kind = text(item, "kind", w);
    if (kind == "slack") bus.kind = BusKind::slack;
    else if (kind == "pq") bus.kind = BusKind::pq;
    else throw ParseError(w + ": unknown kind '" + kind + "'");
    bus.base_kv = number(item, "base_kv", w);
    const auto level = text(item, "level", w);
    if (level == "primary") bus.level = Level::primary;
    else if (level == "secondary") bus.level = Level::secondary;
    else throw ParseError(w + ": unknown level '" + level + "'");
    bus.v_set = item.contains("v_set") ? number(item, "v_set", w) : 1.0;
    grid.buses.push_back(bus);
  }
  std::stable_sort(grid.buses.begin(), grid.buses.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });

  auto base_kv_of = [&](int id) {
    for (const auto& bus : grid.buses) {
      if (bus.id == id) return bus.base_kv;
    }
    return 0.0;
  };

  for (const auto& item : section(doc, "branches", false)) {
    Branch br;
    br.id = integer(item, "id", "branch");
    const std::string w = "branch " + std::to_string(br.id);
    br.from = integer(item, "from", w);
    br.to = integer(item, "to", w);
    const double kv = base_kv_of(br.from);
    const double z_base = kv > 0.0 ? kv * kv / grid.s_base : 0.0;
    const double z_scale = z_base > 0.0 ? 1.0 / z_base : 0.0;
    br.r = quantity(item, "r", "r_ohm", z_scale, w);
    br.x = quantity(item, "x", "x_ohm", z_scale, w);
    br.b_shunt = quantity(item, "b", "b_us", z_base * 1e-6, w, 0.0);
    grid.branches.push_back(br);
  }

  for (const auto& item : section(doc, "transformers", false)) {
    Transformer t;
    t.id = integer(item, "id", "transformer");
    const std::string w = "transformer " + std::to_string(t.id);
    t.primary_bus = integer(item, "primary", w);
    t.secondary_bus = integer(item, "secondary", w);
    t.r = number(item, "r", w);
    t.x = number(item, "x", w);
    t.tap = item.contains("tap") ? number(item, "tap", w) : 1.0;
    if (item.contains("theta_shift")) {
      t.theta_shift = number(item, "theta_shift", w);
    } else if (item.contains("shift_deg")) {
      t.theta_shift = number(item, "shift_deg", w) * std::numbers::pi / 180.0;
    }
    t.has_protector = flag(item, "protector", w, false);
    grid.transformers.push_back(t);
  }

  for (const auto& item : section(doc, "loads", false)) {
    Load load;
    load.bus = integer(item, "bus", "load");
    const std::string w = "load at bus " + std::to_string(load.bus);
    load.p = quantity(item, "p", "p_mw", inv_s, w);
    load.q = quantity(item, "q", "q_mvar", inv_s, w, 0.0);
    grid.loads.push_back(load);
  }

  for (const auto& item : section(doc, "dgs", false)) {
    DgUnit dg;
    dg.id = integer(item, "id", "dg");
    const std::string w = "dg " + std::to_string(dg.id);
    dg.bus = integer(item, "bus", w);
    dg.mode = parse_mode(text(item, "mode", w, "pfc"));
    dg.p0 = quantity(item, "p", "p_mw", inv_s, w, 0.0);
    dg.q0 = quantity(item, "q", "q_mvar", inv_s, w, 0.0);
    dg.p_cap = quantity(item, "p_cap", "p_cap_mw", inv_s, w);
    dg.q_cap = quantity(item, "q_cap", "q_cap_mvar", inv_s, w);
    dg.q_abs_cap = quantity(item, "q_abs_cap", "q_abs_cap_mvar", inv_s, w, 0.0);
    dg.available = flag(item, "available", w, true);
    grid.dgs.push_back(dg);
  }

  auto issues = validate(grid);
  if (!issues.empty()) {
    std::vector<std::string> lines;
    for (const auto& issue : issues) lines.push_back(issue.to_string());
    throw ValidationError(std::move(lines));
  }
  return grid;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GridModel load_grid(const std::filesystem::path& path) { return parse_grid(read_text_file(path)); }

std::string serialize_grid(const GridModel& grid) {
  json doc;
  doc["s_base_mva"] = grid.s_base;
  doc["buses"] = json::array();
  for (const auto& bus : grid.buses) {
    json b = {{"id", bus.id}, {"kind", to_string(bus.kind)}, {"base_kv", bus.base_kv}, {"level", to_string(bus.level)}};
    if (bus.kind == BusKind::slack || bus.v_set != 1.0) b["v_set"] = bus.v_set;
    doc["buses"].push_back(b);
  }
  doc["branches"] = json::array();
  for (const auto& br : grid.branches) {
    doc["branches"].push_back({{"id", br.id}, {"from", br.from}, {"to", br.to}, {"r", br.r}, {"x", br.x}, {"b", br.b_shunt}});
  }
  doc["transformers"] = json::array();
  for (const auto& t : grid.transformers) {
    doc["transformers"].push_back({{"id", t.id},
                                   {"primary", t.primary_bus},
                                   {"secondary", t.secondary_bus},
                                   {"r", t.r},
                                   {"x", t.x},
                                   {"tap", t.tap},
                                   {"theta_shift", t.theta_shift},
                                   {"protector", t.has_protector}});
  }
  doc["loads"] = json::array();
  for (const auto& load : grid.loads) {
    doc["loads"].push_back({{"bus", load.bus}, {"p", load.p}, {"q", load.q}});
  }
  doc["dgs"] = json::array();
  for (const auto& dg : grid.dgs) {
    doc["dgs"].push_back({{"id", dg.id},
                          {"bus", dg.bus},
                          {"mode", to_string(dg.mode)},
                          {"p", dg.p0},
                          {"q", dg.q0},
                          {"p_cap", dg.p_cap},
                          {"q_cap", dg.q_cap},
                          {"q_abs_cap", dg.q_abs_cap},
                          {"available", dg.available}});
  }
  return doc.dump(2) + "\n";
}

void save_grid(const GridModel& grid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_grid(grid);
}

} // namespace selfgrid
