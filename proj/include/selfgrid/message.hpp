#pragma once

#include "selfgrid/grid_model.hpp"

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace selfgrid {

enum class Role { ED, VD, LPS, DG };

/// VD index = bus id, DG index = dg id, LPS index = subnetwork id, ED index = 0.
struct AgentId {
  Role role = Role::ED;
  int index = 0;

  std::string to_string() const;
  auto operator<=>(const AgentId&) const = default;
};

enum class Performative { inform, request, confirm, query_if, failure };

std::string_view to_string(Role role);
std::string_view to_string(Performative p);

// Message contents. Each renders as TAG<fields>.

struct ViolationReport { // V<voltage>
  double voltage = 0.0;
  bool operator==(const ViolationReport&) const = default;
};

struct AdjustCommand { // ADJ<dg,+delta,Q|P>
  int dg = 0;
  double delta = 0.0;
  DgMode mode = DgMode::pfc;
  bool operator==(const AdjustCommand&) const = default;
};

struct DgStatus { // STAT<dg,off> or STAT<dg,on> or STAT<dg,on,upper,lower>
  int dg = 0;
  bool available = true;
  std::optional<double> surplus_upper;
  std::optional<double> surplus_lower;
  bool operator==(const DgStatus&) const = default;
};

struct EscalationRequest { // ESC<reason>
  std::string reason;
  bool operator==(const EscalationRequest&) const = default;
};

struct ReorganizeNotice { // ORG<epsilon>
  double epsilon = 0.0;
  bool operator==(const ReorganizeNotice&) const = default;
};

struct SubnetworkAssignment { // ASG<subnetwork,epsilon,member;member;...>
  int subnetwork = -1;       // -1: the receiving VD's bus is uncontrollable
  double epsilon = 0.0;
  std::vector<AgentId> members;
  bool operator==(const SubnetworkAssignment&) const = default;
};

struct RestoreRequest { // RST<>
  bool operator==(const RestoreRequest&) const = default;
};

struct MeasurementQuery { // MEAS<>
  bool operator==(const MeasurementQuery&) const = default;
};

struct MeasurementReport { // M<voltage,angle>
  double voltage = 0.0;
  double angle = 0.0;
  bool operator==(const MeasurementReport&) const = default;
};

using Content = std::variant<ViolationReport, AdjustCommand, DgStatus, EscalationRequest, ReorganizeNotice,
                             SubnetworkAssignment, RestoreRequest, MeasurementQuery, MeasurementReport>;

struct Message {
  Performative performative = Performative::inform;
  AgentId sender;
  AgentId destination;
  long time = 0;
  Content content;

  bool operator==(const Message&) const = default;
};

/// `message (performative, SENDER, DESTINATION, time, CONTENT)`. Numbers use
/// the shortest text that reads back to the same double.
std::string encode_message(const Message& m);

/// Inverse of encode_message. Throws ParseError whose text names the
/// 1-based column of the first offending character.
Message decode_message(std::string_view line);

AgentId parse_agent_id(std::string_view text);

} // namespace selfgrid
