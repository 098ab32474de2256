#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace selfgrid {

enum class BusKind { slack, pq };
enum class Level { primary, secondary };
enum class DgMode { pfc, upf };

std::string_view to_string(BusKind kind);
std::string_view to_string(Level level);
std::string_view to_string(DgMode mode);
DgMode parse_mode(std::string_view text);

struct Bus {
  int id = 0;
  BusKind kind = BusKind::pq;
  double base_kv = 1.0;
  Level level = Level::secondary;
  double v_set = 1.0; // only meaningful for the slack bus

  bool operator==(const Bus&) const = default;
};

/// Pi-model line. Impedances and total charging susceptance in pu.
struct Branch {
  int id = 0;
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_shunt = 0.0;

  bool operator==(const Branch&) const = default;
};

/// Network transformer with complex off-nominal ratio tap * exp(j * theta_shift)
/// on the primary side.
struct Transformer {
  int id = 0;
  int primary_bus = 0;
  int secondary_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double tap = 1.0;
  double theta_shift = 0.0; // radians
  bool has_protector = false;

  bool operator==(const Transformer&) const = default;
};

struct Load {
  int bus = 0;
  double p = 0.0;
  double q = 0.0;

  bool operator==(const Load&) const = default;
};

struct DgUnit {
  int id = 0;
  int bus = 0;
  DgMode mode = DgMode::pfc;
  double p0 = 0.0;
  double q0 = 0.0;
  double p_cap = 0.0;
  double q_cap = 0.0;
  double q_abs_cap = 0.0;
  bool available = true;

  double p_surplus() const { return p_cap - p0; }
  double q_surplus() const { return q_cap - q0; }

  bool operator==(const DgUnit&) const = default;
};

/// Electrical network in per-unit on `s_base` (MVA). Buses are stored in id
/// order, so `buses[i].id == i` for a valid model.
struct GridModel {
  double s_base = 1.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Transformer> transformers;
  std::vector<Load> loads;
  std::vector<DgUnit> dgs;

  int slack_bus() const;
  const DgUnit& dg(int id) const;
  DgUnit& dg(int id);
  const Transformer& transformer(int id) const;
  std::optional<std::size_t> dg_index(int id) const;
  std::vector<int> dg_ids() const;

  bool operator==(const GridModel&) const = default;
};

/// One invariant violation. `element` names the offending item, e.g. "dg 4".
struct ValidationIssue {
  std::string element;
  std::string message;

  std::string to_string() const;
};

/// Empty iff every model invariant holds.
std::vector<ValidationIssue> validate(const GridModel& grid);

/// Parses the network document. Quantities given in physical units
/// (`p_mw`, `r_ohm`, ...) are converted to per-unit on `s_base_mva`.
/// Throws ParseError for malformed text, ValidationError for invariant
/// violations.
GridModel parse_grid(std::string_view text);
GridModel load_grid(const std::filesystem::path& path);

/// Writes the document in per-unit keys. parse_grid(serialize_grid(g)) == g.
std::string serialize_grid(const GridModel& grid);
void save_grid(const GridModel& grid, const std::filesystem::path& path);

struct SurplusBounds {
  double upper = 0.0;
  double lower = 0.0;
};

/// Headroom of an available DG for the controlled quantity: reactive power in
/// PFC mode, active power in UPF mode. Throws InvalidArgument when the unit is
/// unavailable.
SurplusBounds dg_surplus(const DgUnit& dg, DgMode mode);

/// Connected components of the bus graph (branches and transformers), each
/// sorted, ordered by smallest member.
std::vector<std::vector<int>> connected_components(const GridModel& grid);

std::string read_text_file(const std::filesystem::path& path);

} // namespace selfgrid
