#pragma once

#include "selfgrid/grid_model.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <complex>
#include <span>
#include <vector>

namespace selfgrid {

struct PowerFlowOptions {
  double tol = 1e-8; // infinity norm of the power mismatch, pu
  int max_iter = 30;
};

struct PowerFlowSolution {
  std::vector<double> v;     // magnitude per bus, pu
  std::vector<double> theta; // angle per bus, rad
  bool converged = false;
  int iterations = 0;
  double mismatch_inf_norm = 0.0;
};

/// Newton-Raphson in polar form with one slack bus and PQ buses elsewhere.
/// DG output enters as negative load. Non-convergence is reported through
/// `converged`, with the best iterate returned; a singular Jacobian throws
/// NumericalError naming the iteration.
PowerFlowSolution solve_power_flow(const GridModel& grid, const PowerFlowOptions& options = {});
PowerFlowSolution solve_power_flow(const GridModel& grid, const PowerFlowSolution& warm_start,
                                   const PowerFlowOptions& options = {});

/// Power-flow Jacobian d(P, Q)/d(theta, V) over the non-slack buses.
/// Rows: P of each non-slack bus, then Q. Columns: theta, then V.
struct JacobianSystem {
  Eigen::SparseMatrix<double> jacobian;
  std::vector<int> state_bus;    // non-slack bus at each state position
  std::vector<int> position;     // per bus: state position, -1 for the slack
  int size() const { return static_cast<int>(state_bus.size()); }
};

JacobianSystem build_jacobian(const GridModel& grid, const PowerFlowSolution& sol);

/// Complex power injected at every bus by the network, S = V conj(Ybus V).
std::vector<std::complex<double>> bus_injections(const GridModel& grid, const PowerFlowSolution& sol);

/// Specified net injection per bus: available DG output minus load.
std::vector<std::complex<double>> scheduled_injections(const GridModel& grid);

/// Columns of the inverse Jacobian for the injections of each DG bus.
/// `a_vp`/`a_vq`: monitored-bus voltage rows. `a_theta_p`/`a_theta_q`: angle
/// rows of every transformer terminal bus.
struct SensitivityMatrix {
  Eigen::MatrixXd a_vp;
  Eigen::MatrixXd a_vq;
  Eigen::MatrixXd a_theta_p;
  Eigen::MatrixXd a_theta_q;
  std::vector<int> monitored_buses;
  std::vector<int> terminal_buses;
  std::vector<int> dg_ids;

  const Eigen::MatrixXd& voltage_block(DgMode mode) const { return mode == DgMode::pfc ? a_vq : a_vp; }
  const Eigen::MatrixXd& angle_block(DgMode mode) const { return mode == DgMode::pfc ? a_theta_q : a_theta_p; }
  int monitored_row(int bus) const;
  int terminal_row(int bus) const;
  int dg_column(int dg_id) const;
};

/// Every secondary-level bus plus every transformer terminal, ascending.
std::vector<int> default_monitored_buses(const GridModel& grid);
std::vector<int> transformer_terminal_buses(const GridModel& grid);

/// Requires a converged solution. One sparse factorization, two solves per DG.
SensitivityMatrix compute_sensitivity(const GridModel& grid, const PowerFlowSolution& sol, std::span<const int> dg_ids,
                                      std::span<const int> monitored_buses);
SensitivityMatrix compute_sensitivity(const GridModel& grid, const PowerFlowSolution& sol);

struct Losses {
  double p = 0.0;
  double q = 0.0;
};

/// Series and shunt losses summed over branches and transformers.
Losses compute_losses(const GridModel& grid, const PowerFlowSolution& sol);

/// Primary angle minus (secondary angle + phase shift); proportional to the
/// active power the transformer carries towards the secondary side.
double protector_margin(const Transformer& t, const PowerFlowSolution& sol);

} // namespace selfgrid
