#include "selfgrid/message.hpp"

#include "selfgrid/error.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

namespace selfgrid {

namespace {

constexpr std::array<std::string_view, 4> kRoles{"ED", "VD", "LPS", "DG"};
constexpr std::array<std::string_view, 5> kPerformatives{"inform", "request", "confirm", "query_if", "failure"};

std::string number(double v) {
  if (v == 0.0) v = 0.0; // drop the sign of negative zero
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), res.ptr};
}

std::string signed_number(double v) {
  std::string s = number(v);
  return s.front() == '-' ? s : "+" + s;
}

struct ContentWriter {
  std::string operator()(const ViolationReport& c) const { return "V<" + number(c.voltage) + ">"; }
  std::string operator()(const AdjustCommand& c) const {
    return "ADJ<" + std::to_string(c.dg) + "," + signed_number(c.delta) + "," + (c.mode == DgMode::pfc ? "Q" : "P") + ">";
  }
  std::string operator()(const DgStatus& c) const {
    std::string s = "STAT<" + std::to_string(c.dg) + (c.available ? ",on" : ",off");
    if (c.surplus_upper && c.surplus_lower) s += "," + number(*c.surplus_upper) + "," + number(*c.surplus_lower);
    return s + ">";
  }
  std::string operator()(const EscalationRequest& c) const { return "ESC<" + c.reason + ">"; }
  std::string operator()(const ReorganizeNotice& c) const { return "ORG<" + number(c.epsilon) + ">"; }
  std::string operator()(const SubnetworkAssignment& c) const {
    std::string s = "ASG<" + std::to_string(c.subnetwork) + "," + number(c.epsilon) + ",";
    for (std::size_t i = 0; i < c.members.size(); ++i) {
      if (i) s += ";";
      s += c.members[i].to_string();
    }
    return s + ">";
  }
  std::string operator()(const RestoreRequest&) const { return "RST<>"; }
  std::string operator()(const MeasurementQuery&) const { return "MEAS<>"; }
  std::string operator()(const MeasurementReport& c) const {
    return "M<" + number(c.voltage) + "," + number(c.angle) + ">";
  }
};

class Cursor {
public:
  explicit Cursor(std::string_view text) : text_(text) {}

  [[noreturn]] void fail(const std::string& what) const { fail_at(pos_, what); }

  [[noreturn]] void fail_at(std::size_t pos, const std::string& what) const {
    throw ParseError("message parse error at column " + std::to_string(pos + 1) + ": " + what);
  }

  void expect(std::string_view lit) {
    if (text_.substr(pos_, lit.size()) != lit) fail("expected '" + std::string(lit) + "'");
    pos_ += lit.size();
  }

  bool consume(std::string_view lit) {
    if (text_.substr(pos_, lit.size()) != lit) return false;
    pos_ += lit.size();
    return true;
  }

  bool peek(char c) const { return pos_ < text_.size() && text_[pos_] == c; }

  /// Characters up to (not including) any of `stops`.
  std::string_view until(std::string_view stops) {
    const auto start = pos_;
    while (pos_ < text_.size() && stops.find(text_[pos_]) == std::string_view::npos) ++pos_;
    if (pos_ == text_.size()) fail("unexpected end of line");
    return text_.substr(start, pos_ - start);
  }

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == text_.size(); }

  template <typename T>
  T parse_number(std::string_view stops) {
    const auto start = pos_;
    auto token = until(stops);
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    T value{};
    auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || res.ec != std::errc() || res.ptr != token.data() + token.size()) {
      fail_at(start, "invalid number '" + std::string(text_.substr(start, pos_ - start)) + "'");
    }
    return value;
  }

  AgentId agent(std::string_view stops) {
    const auto start = pos_;
    auto token = until(stops);
    try {
      return parse_agent_id(token);
    } catch (const ParseError& e) {
      fail_at(start, e.what());
    }
  }

private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

Content parse_content(Cursor& c) {
  const auto tag_start = c.pos();
  const auto tag = c.until("<");
  c.expect("<");
  if (tag == "V") {
    ViolationReport r{c.parse_number<double>(">")};
    c.expect(">");
    return r;
  }
  if (tag == "ADJ") {
    AdjustCommand r;
    r.dg = c.parse_number<int>(",");
    c.expect(",");
    r.delta = c.parse_number<double>(",");
    c.expect(",");
    if (c.consume("Q")) r.mode = DgMode::pfc;
    else if (c.consume("P")) r.mode = DgMode::upf;
    else c.fail("expected Q or P");
    c.expect(">");
    return r;
  }
  if (tag == "STAT") {
    DgStatus r;
    r.dg = c.parse_number<int>(",");
    c.expect(",");
    if (c.consume("on")) r.available = true;
    else if (c.consume("off")) r.available = false;
    else c.fail("expected on or off");
    if (c.consume(",")) {
      r.surplus_upper = c.parse_number<double>(",");
      c.expect(",");
      r.surplus_lower = c.parse_number<double>(">");
    }
    c.expect(">");
    return r;
  }
  if (tag == "ESC") {
    const auto start = c.pos();
    EscalationRequest r{std::string(c.until(">"))};
    if (r.reason.empty()) c.fail_at(start, "empty escalation reason");
    c.expect(">");
    return r;
  }
  if (tag == "ORG") {
    ReorganizeNotice r{c.parse_number<double>(">")};
    c.expect(">");
    return r;
  }
  if (tag == "ASG") {
    SubnetworkAssignment r;
    r.subnetwork = c.parse_number<int>(",");
    c.expect(",");
    r.epsilon = c.parse_number<double>(",");
    c.expect(",");
    if (!c.peek('>')) {
      do {
        r.members.push_back(c.agent(";>"));
      } while (c.consume(";"));
    }
    c.expect(">");
    return r;
  }
  if (tag == "RST") {
    c.expect(">");
    return RestoreRequest{};
  }
  if (tag == "MEAS") {
    c.expect(">");
    return MeasurementQuery{};
  }
  if (tag == "M") {
    MeasurementReport r;
    r.voltage = c.parse_number<double>(",");
    c.expect(",");
    r.angle = c.parse_number<double>(">");
    c.expect(">");
    return r;
  }
  c.fail_at(tag_start, "unknown content tag '" + std::string(tag) + "'");
}

} // namespace

std::string_view to_string(Role role) { return kRoles[static_cast<std::size_t>(role)]; }
std::string_view to_string(Performative p) { return kPerformatives[static_cast<std::size_t>(p)]; }

std::string AgentId::to_string() const { return std::string(selfgrid::to_string(role)) + std::to_string(index); }

AgentId parse_agent_id(std::string_view text) {
  // Longest role prefix first so "LPS" is not read as something shorter.
  for (int r : {2, 3, 1, 0}) {
    const auto name = kRoles[static_cast<std::size_t>(r)];
    if (text.substr(0, name.size()) != name) continue;
    auto digits = text.substr(name.size());
    int index = 0;
    auto res = std::from_chars(digits.data(), digits.data() + digits.size(), index);
    if (digits.empty() || res.ec != std::errc() || res.ptr != digits.data() + digits.size()) {
      throw ParseError("bad agent index in '" + std::string(text) + "'");
    }
    return {static_cast<Role>(r), index};
  }
  throw ParseError("unknown agent '" + std::string(text) + "'");
}

std::string encode_message(const Message& m) {
  std::string out = "message (";
  out += to_string(m.performative);
  out += ", " + m.sender.to_string() + ", " + m.destination.to_string() + ", " + std::to_string(m.time) + ", ";
  out += std::visit(ContentWriter{}, m.content);
  out += ")";
  return out;
}

Message decode_message(std::string_view line) {
  Cursor c(line);
  Message m;
  c.expect("message (");
  const auto perf_start = c.pos();
  const auto perf = c.until(",");
  bool found = false;
  for (std::size_t i = 0; i < kPerformatives.size(); ++i) {
    if (perf == kPerformatives[i]) {
      m.performative = static_cast<Performative>(i);
      found = true;
    }
  }
  if (!found) c.fail_at(perf_start, "unknown performative '" + std::string(perf) + "'");
  c.expect(", ");
  m.sender = c.agent(",");
  c.expect(", ");
  m.destination = c.agent(",");
  c.expect(", ");
  m.time = c.parse_number<long>(",");
  c.expect(", ");
  m.content = parse_content(c);
  c.expect(")");
  if (!c.at_end()) c.fail("trailing characters");
  return m;
}

} // namespace selfgrid
