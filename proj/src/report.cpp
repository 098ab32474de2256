#include "selfgrid/report.hpp"

#include "selfgrid/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <set>

namespace selfgrid {

std::string format_number(double v) {
  if (v == 0.0) v = 0.0;
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), res.ptr};
}

std::vector<SweepRow> sweep(const SensitivityMatrix& sens, const GridModel& grid, DgMode mode,
                            const std::vector<double>& epsilons) {
  std::vector<SweepRow> rows;
  for (double eps : epsilons) {
    const auto dec = decompose(sens, grid, mode, eps);
    SweepRow row;
    row.epsilon = eps;
    row.subnetworks = static_cast<int>(dec.subnetworks.size());
    for (const auto& sub : dec.subnetworks) {
      row.max_block_size = std::max(row.max_block_size, static_cast<int>(sub.bus_ids.size() + sub.dg_ids.size()));
    }
    row.uncontrollable_buses = static_cast<int>(dec.uncontrollable_buses.size());
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "epsilon,subnetworks,max_block_size,uncontrollable_buses\n";
  for (const auto& r : rows) {
    os << format_number(r.epsilon) << ',' << r.subnetworks << ',' << r.max_block_size << ',' << r.uncontrollable_buses
       << '\n';
  }
}

void write_blocks_csv(std::ostream& os, const Decomposition& dec) {
  os << "subnetwork,kind,id\n";
  for (const auto& sub : dec.subnetworks) {
    for (int b : sub.bus_ids) os << sub.id << ",bus," << b << '\n';
    for (int d : sub.dg_ids) os << sub.id << ",dg," << d << '\n';
    for (int t : sub.transformer_ids) os << sub.id << ",transformer," << t << '\n';
  }
  for (int b : dec.uncontrollable_buses) os << "-1,bus," << b << '\n';
}

void write_rounds_csv(std::ostream& os, const SimReport& report) {
  os << "round,epsilon,violations,min_v,max_v,plans,involved_dgs,involved_nodes,lp_vars,lp_constraints,messages,"
        "p_loss,q_loss\n";
  for (const auto& r : report.rounds) {
    double vmin = 0.0;
    double vmax = 0.0;
    bool first = true;
    for (int b : report.monitored_buses) {
      const double v = r.v_after[static_cast<std::size_t>(b)];
      vmin = first ? v : std::min(vmin, v);
      vmax = first ? v : std::max(vmax, v);
      first = false;
    }
    std::set<int> dgs;
    std::set<int> nodes;
    int vars = 0;
    int cons = 0;
    for (const auto& p : r.plans) {
      for (const auto& [d, x] : p.adjustments) dgs.insert(d);
      nodes.insert(p.constrained_buses.begin(), p.constrained_buses.end());
      vars += p.lp_size.first;
      cons += p.lp_size.second;
    }
    os << r.round << ',' << format_number(r.epsilon) << ',' << r.violations.size() << ',' << format_number(vmin) << ','
       << format_number(vmax) << ',' << r.plans.size() << ',' << dgs.size() << ',' << nodes.size()
       << ',' << vars << ',' << cons << ',' << r.messages << ',' << format_number(r.losses.p) << ','
       << format_number(r.losses.q) << '\n';
  }
}

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows) {
  os << "method,involved_dgs,involved_nodes,p_loss,q_loss,resolved,escalations\n";
  for (const auto& r : rows) {
    os << r.method << ',' << r.involved_dgs << ',' << r.involved_nodes << ',' << format_number(r.p_loss) << ','
       << format_number(r.q_loss) << ',' << (r.resolved ? "true" : "false") << ',' << r.escalations << '\n';
  }
}

void write_voltage_profile_csv(std::ostream& os, const std::vector<SimReport>& reports) {
  if (reports.empty()) throw InvalidArgument("no reports to write");
  const auto& first = reports.front();
  os << "bus,v_before";
  for (const auto& r : reports) os << ",v_after_" << to_string(r.method);
  os << '\n';
  for (int b : first.monitored_buses) {
    const auto i = static_cast<std::size_t>(b);
    os << b << ',' << (first.rounds.empty() ? "" : format_number(first.rounds.front().v_before[i]));
    for (const auto& r : reports) os << ',' << (i < r.final_v.size() ? format_number(r.final_v[i]) : "");
    os << '\n';
  }
}

void write_message_log(std::ostream& os, const SimReport& report) {
  for (const auto& line : report.message_log) os << line << '\n';
}

void write_decomposition_jsonl(std::ostream& os, const Decomposition& dec) {
  using json = nlohmann::json;
  os << json{{"record", "decomposition"},
             {"epsilon", dec.epsilon},
             {"subnetworks", dec.subnetworks.size()},
             {"buses", dec.row_buses.size()},
             {"dgs", dec.col_dgs.size()}}
            .dump()
     << '\n';
  for (const auto& sub : dec.subnetworks) {
    os << json{{"record", "subnetwork"},
               {"id", sub.id},
               {"dgs", sub.dg_ids},
               {"buses", sub.bus_ids},
               {"transformers", sub.transformer_ids}}
              .dump()
       << '\n';
  }
  os << json{{"record", "uncontrollable"}, {"buses", dec.uncontrollable_buses}}.dump() << '\n';
}

void write_report_files(const std::filesystem::path& dir, const std::vector<SimReport>& reports) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };
  for (const auto& r : reports) {
    const std::string m(to_string(r.method));
    auto rounds = open("rounds_" + m + ".csv");
    write_rounds_csv(rounds, r);
    if (r.method == Method::proposed) {
      auto log = open("messages_" + m + ".log");
      write_message_log(log, r);
    }
  }
  auto cmp = open("comparison.csv");
  write_comparison_csv(cmp, compare(reports));
  auto prof = open("voltage_profile.csv");
  write_voltage_profile_csv(prof, reports);
}

} // namespace selfgrid
