#include "selfgrid/decomposition.hpp"
#include "selfgrid/error.hpp"
#include "selfgrid/grid_model.hpp"
#include "selfgrid/lp_solver.hpp"
#include "selfgrid/message.hpp"
#include "selfgrid/power_flow.hpp"
#include "selfgrid/report.hpp"
#include "selfgrid/scenario.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace selfgrid;

namespace {

py::dict subnetwork_dict(const Subnetwork& s) {
  py::dict d;
  d["id"] = s.id;
  d["dgs"] = s.dg_ids;
  d["buses"] = s.bus_ids;
  d["transformers"] = s.transformer_ids;
  return d;
}

py::dict lp_solve(const std::string& objective, const std::vector<std::pair<double, double>>& bounds,
                  const std::vector<std::tuple<std::vector<double>, std::string, double>>& constraints) {
  LpProblem p;
  p.n_vars = static_cast<int>(bounds.size());
  if (objective == "max_min") p.objective = MaximizeMin{};
  else if (objective == "min_max") p.objective = MinimizeMax{};
  else throw InvalidArgument("objective must be 'max_min' or 'min_max'");
  for (auto [lo, hi] : bounds) p.bounds.push_back({lo, hi});
  for (const auto& [coeffs, rel, rhs] : constraints) {
    Relation r;
    if (rel == "<=") r = Relation::less_equal;
    else if (rel == ">=") r = Relation::greater_equal;
    else throw InvalidArgument("relation must be '<=' or '>='");
    p.constraints.push_back({coeffs, r, rhs});
  }
  const auto sol = solve(p);
  py::dict out;
  out["status"] = to_string(sol.status);
  out["x"] = sol.x;
  out["objective_value"] = sol.objective_value;
  return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Self-organizing multi-agent voltage regulation";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<LadderExhausted>(m, "LadderExhausted", base.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());

  py::enum_<DgMode>(m, "DgMode").value("pfc", DgMode::pfc).value("upf", DgMode::upf);

  py::class_<GridModel>(m, "GridModel")
      .def_readonly("s_base", &GridModel::s_base)
      .def_property_readonly("n_buses", [](const GridModel& g) { return g.buses.size(); })
      .def_property_readonly("n_branches", [](const GridModel& g) { return g.branches.size(); })
      .def_property_readonly("n_transformers", [](const GridModel& g) { return g.transformers.size(); })
      .def_property_readonly("dg_ids", &GridModel::dg_ids)
      .def_property_readonly("slack_bus", &GridModel::slack_bus)
      .def("__eq__", [](const GridModel& a, const GridModel& b) { return a == b; });

  m.def("load_grid", &load_grid, py::arg("path"));
  m.def("parse_grid", [](const std::string& text) { return parse_grid(text); }, py::arg("text"));
  m.def("serialize_grid", &serialize_grid, py::arg("grid"));
  m.def(
      "validate",
      [](const GridModel& g) {
        std::vector<std::string> out;
        for (const auto& i : validate(g)) out.push_back(i.to_string());
        return out;
      },
      py::arg("grid"));

  py::class_<PowerFlowSolution>(m, "PowerFlowSolution")
      .def_readonly("v", &PowerFlowSolution::v)
      .def_readonly("theta", &PowerFlowSolution::theta)
      .def_readonly("converged", &PowerFlowSolution::converged)
      .def_readonly("iterations", &PowerFlowSolution::iterations)
      .def_readonly("mismatch_inf_norm", &PowerFlowSolution::mismatch_inf_norm);

  m.def(
      "solve_power_flow",
      [](const GridModel& g, double tol, int max_iter) { return solve_power_flow(g, PowerFlowOptions{tol, max_iter}); },
      py::arg("grid"), py::arg("tol") = 1e-8, py::arg("max_iter") = 30);

  py::class_<SensitivityMatrix>(m, "SensitivityMatrix")
      .def_readonly("a_vp", &SensitivityMatrix::a_vp)
      .def_readonly("a_vq", &SensitivityMatrix::a_vq)
      .def_readonly("a_theta_p", &SensitivityMatrix::a_theta_p)
      .def_readonly("a_theta_q", &SensitivityMatrix::a_theta_q)
      .def_readonly("monitored_buses", &SensitivityMatrix::monitored_buses)
      .def_readonly("terminal_buses", &SensitivityMatrix::terminal_buses)
      .def_readonly("dg_ids", &SensitivityMatrix::dg_ids);

  m.def(
      "compute_sensitivity",
      [](const GridModel& g, const PowerFlowSolution& sol) { return compute_sensitivity(g, sol); }, py::arg("grid"),
      py::arg("solution"));

  py::class_<Decomposition>(m, "Decomposition")
      .def_readonly("epsilon", &Decomposition::epsilon)
      .def_readonly("original", &Decomposition::original)
      .def_readonly("retained", &Decomposition::retained)
      .def_readonly("residual", &Decomposition::residual)
      .def_readonly("uncontrollable_buses", &Decomposition::uncontrollable_buses)
      .def_property_readonly("subnetworks",
                             [](const Decomposition& d) {
                               py::list out;
                               for (const auto& s : d.subnetworks) out.append(subnetwork_dict(s));
                               return out;
                             })
      .def("closest_dgs", [](const Decomposition& d, int bus) { return closest_dgs(d, bus); }, py::arg("bus"))
      .def("same_structure", &Decomposition::same_structure);

  m.def(
      "decompose",
      [](const GridModel& g, double eps, DgMode mode) {
        const auto sol = solve_power_flow(g);
        if (!sol.converged) throw NumericalError("base case power flow did not converge");
        return decompose(compute_sensitivity(g, sol), g, mode, eps);
      },
      py::arg("grid"), py::arg("epsilon"), py::arg("mode") = DgMode::pfc);

  m.def(
      "sweep",
      [](const GridModel& g, const std::vector<double>& eps, DgMode mode) {
        const auto sol = solve_power_flow(g);
        if (!sol.converged) throw NumericalError("base case power flow did not converge");
        py::list out;
        for (const auto& r : sweep(compute_sensitivity(g, sol), g, mode, eps)) {
          py::dict d;
          d["epsilon"] = r.epsilon;
          d["subnetworks"] = r.subnetworks;
          d["max_block_size"] = r.max_block_size;
          d["uncontrollable_buses"] = r.uncontrollable_buses;
          out.append(d);
        }
        return out;
      },
      py::arg("grid"), py::arg("epsilons"), py::arg("mode") = DgMode::pfc);

  m.def("solve_lp", &lp_solve, py::arg("objective"), py::arg("bounds"), py::arg("constraints"),
        "Solve a max-min or min-max LP. constraints: (coeffs, '<=' | '>=', rhs).");

  m.def(
      "encode_message", [](const std::string& line) { return encode_message(decode_message(line)); }, py::arg("line"),
      "Decode a message line and encode it again.");
  m.def(
      "decode_message",
      [](const std::string& line) {
        const auto msg = decode_message(line);
        py::dict d;
        d["performative"] = std::string(to_string(msg.performative));
        d["sender"] = msg.sender.to_string();
        d["destination"] = msg.destination.to_string();
        d["time"] = msg.time;
        const auto text = encode_message(msg);
        const auto open = text.rfind(", ") + 2;
        d["content"] = text.substr(open, text.size() - open - 1);
        return d;
      },
      py::arg("line"));

  py::class_<SimReport>(m, "SimReport")
      .def_property_readonly("method", [](const SimReport& r) { return std::string(to_string(r.method)); })
      .def_readonly("resolved", &SimReport::resolved)
      .def_readonly("failed", &SimReport::failed)
      .def_readonly("diverged", &SimReport::diverged)
      .def_readonly("escalations", &SimReport::escalations)
      .def_readonly("message_log", &SimReport::message_log)
      .def_readonly("final_v", &SimReport::final_v)
      .def_readonly("final_theta", &SimReport::final_theta)
      .def_readonly("monitored_buses", &SimReport::monitored_buses)
      .def_property_readonly("rounds", [](const SimReport& r) { return r.rounds.size(); })
      .def_property_readonly("involved_dgs", &SimReport::involved_dgs)
      .def_property_readonly("involved_nodes", &SimReport::involved_nodes)
      .def_property_readonly("p_loss", [](const SimReport& r) { return r.final_losses.p; })
      .def_property_readonly("q_loss", [](const SimReport& r) { return r.final_losses.q; });

  m.def(
      "run_scenario",
      [](const GridModel& g, const std::filesystem::path& scenario, const std::string& method) {
        return run_method(g, load_scenario(scenario), parse_method(method));
      },
      py::arg("grid"), py::arg("scenario_path"), py::arg("method") = "proposed");

  m.def(
      "compare",
      [](const std::vector<SimReport>& reports) {
        py::list out;
        for (const auto& row : compare(reports)) {
          py::dict d;
          d["method"] = row.method;
          d["involved_dgs"] = row.involved_dgs;
          d["involved_nodes"] = row.involved_nodes;
          d["p_loss"] = row.p_loss;
          d["q_loss"] = row.q_loss;
          d["resolved"] = row.resolved;
          d["escalations"] = row.escalations;
          out.append(d);
        }
        return out;
      },
      py::arg("reports"));
}
