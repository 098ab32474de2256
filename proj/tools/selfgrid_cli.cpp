#include "selfgrid/error.hpp"
#include "selfgrid/grid_model.hpp"
#include "selfgrid/power_flow.hpp"
#include "selfgrid/report.hpp"
#include "selfgrid/scenario.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace selfgrid;

namespace {

constexpr int kOk = 0;
constexpr int kUnresolved = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

SensitivityMatrix base_sensitivity(const GridModel& grid) {
  const auto sol = solve_power_flow(grid);
  if (!sol.converged) throw NumericalError("base case power flow did not converge");
  return compute_sensitivity(grid, sol);
}

void check_epsilon(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw UsageError("epsilon must lie in (0, 1), got " + format_number(eps));
}

int cmd_validate(const std::string& grid_path) {
  try {
    load_grid(grid_path);
  } catch (const ValidationError& e) {
    for (const auto& issue : e.issues()) std::cout << issue << '\n';
    std::cerr << "invalid network: " << e.issues().size() << " issue(s)\n";
    return kUnresolved;
  }
  std::cerr << "network is valid\n";
  return kOk;
}

int cmd_decompose(const std::string& grid_path, double eps, DgMode mode, const std::string& out) {
  check_epsilon(eps);
  const auto grid = load_grid(grid_path);
  const auto dec = decompose(base_sensitivity(grid), grid, mode, eps);
  write_decomposition_jsonl(std::cout, dec);
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream f(fs::path(out) / "blocks.csv", std::ios::binary);
    write_blocks_csv(f, dec);
  }
  std::cerr << dec.subnetworks.size() << " subnetwork(s), " << dec.uncontrollable_buses.size()
            << " uncontrollable bus(es) at epsilon " << format_number(eps) << '\n';
  return kOk;
}

int cmd_sweep(const std::string& grid_path, const std::vector<double>& eps, DgMode mode) {
  if (eps.empty()) throw UsageError("sweep needs at least one --epsilon value");
  for (double e : eps) check_epsilon(e);
  const auto grid = load_grid(grid_path);
  write_sweep_csv(std::cout, sweep(base_sensitivity(grid), grid, mode, eps));
  return kOk;
}

int cmd_simulate(const std::string& grid_path, const std::string& scenario_path, std::optional<DgMode> mode,
                 const std::vector<Method>& methods, const std::string& out) {
  const auto grid = load_grid(grid_path);
  auto scenario = load_scenario(scenario_path);
  if (mode) scenario.config.mode = *mode;
  std::vector<SimReport> reports;
  for (auto m : methods) reports.push_back(run_method(grid, scenario, m));
  write_report_files(out, reports);

  bool all = true;
  for (const auto& r : reports) {
    std::cerr << to_string(r.method) << ": " << (r.resolved ? "resolved" : "unresolved") << " after "
              << r.rounds.size() << " round(s), " << r.involved_dgs().size() << " involved DG(s), "
              << r.escalations << " escalation(s)";
    if (r.diverged) std::cerr << " (" << r.divergence << ")";
    std::cerr << '\n';
    all = all && r.resolved;
  }
  return all ? kOk : kUnresolved;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-organizing multi-agent voltage regulation simulator"};
  app.require_subcommand(1);

  std::string grid_path;
  std::string scenario_path;
  std::string out_dir;
  std::string mode_text;
  std::vector<double> eps_list;
  double eps = 0.0;
  std::vector<std::string> method_names;

  auto* validate = app.add_subcommand("validate", "Check a network file");
  validate->add_option("--grid", grid_path, "Network file")->required();

  auto* decompose_cmd = app.add_subcommand("decompose", "Epsilon-decompose the network sensitivities");
  decompose_cmd->add_option("--grid", grid_path, "Network file")->required();
  decompose_cmd->add_option("--epsilon", eps, "Threshold in (0, 1)")->required();
  decompose_cmd->add_option("--mode", mode_text, "pfc or upf")->default_val("pfc");
  decompose_cmd->add_option("--out", out_dir, "Directory for blocks.csv");

  auto* sweep_cmd = app.add_subcommand("sweep", "Subnetwork counts over several epsilon values");
  sweep_cmd->add_option("--grid", grid_path, "Network file")->required();
  sweep_cmd->add_option("--epsilon", eps_list, "Threshold values")->required()->delimiter(',');
  sweep_cmd->add_option("--mode", mode_text, "pfc or upf")->default_val("pfc");

  auto* run = app.add_subcommand("run", "Run a scenario with the agent protocol");
  run->add_option("--grid", grid_path, "Network file")->required();
  run->add_option("--scenario", scenario_path, "Scenario file")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--mode", mode_text, "Override the scenario mode");

  auto* cmp = app.add_subcommand("compare", "Run a scenario with several methods");
  cmp->add_option("--grid", grid_path, "Network file")->required();
  cmp->add_option("--scenario", scenario_path, "Scenario file")->required();
  cmp->add_option("--out", out_dir, "Output directory")->required();
  cmp->add_option("--methods", method_names, "proposed,global,local")->delimiter(',')->default_str("proposed,global,local");
  cmp->add_option("--mode", mode_text, "Override the scenario mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    std::optional<DgMode> mode;
    if (!mode_text.empty()) mode = parse_mode(mode_text);

    if (validate->parsed()) return cmd_validate(grid_path);
    if (decompose_cmd->parsed()) return cmd_decompose(grid_path, eps, mode.value_or(DgMode::pfc), out_dir);
    if (sweep_cmd->parsed()) return cmd_sweep(grid_path, eps_list, mode.value_or(DgMode::pfc));
    if (run->parsed()) return cmd_simulate(grid_path, scenario_path, mode, {Method::proposed}, out_dir);
    if (cmp->parsed()) {
      if (method_names.empty()) method_names = {"proposed", "global", "local"};
      std::vector<Method> methods;
      for (const auto& n : method_names) methods.push_back(parse_method(n));
      return cmd_simulate(grid_path, scenario_path, mode, methods, out_dir);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input:\n";
    for (const auto& issue : e.issues()) std::cerr << "  " << issue << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnresolved;
  }
  return kUsage;
}
