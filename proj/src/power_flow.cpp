#include "selfgrid/power_flow.hpp"

#include "network_equations.hpp"
#include "selfgrid/error.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace selfgrid {

using detail::cplx;

namespace {

std::vector<cplx> phasors(const PowerFlowSolution& sol) {
  std::vector<cplx> v(sol.v.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::polar(sol.v[i], sol.theta[i]);
  return v;
}

std::vector<cplx> currents(const Eigen::SparseMatrix<cplx>& ybus, const std::vector<cplx>& v) {
  std::vector<cplx> cur(v.size(), cplx{});
  for (Eigen::Index k = 0; k < ybus.outerSize(); ++k) {
    for (Eigen::SparseMatrix<cplx>::InnerIterator it(ybus, k); it; ++it) {
      cur[static_cast<std::size_t>(it.row())] += it.value() * v[static_cast<std::size_t>(it.col())];
    }
  }
  return cur;
}

struct StateIndex {
  std::vector<int> state_bus;
  std::vector<int> position;
};

StateIndex state_index(const GridModel& grid) {
  StateIndex idx;
  const int slack = grid.slack_bus();
  idx.position.assign(grid.buses.size(), -1);
  for (const auto& bus : grid.buses) {
    if (bus.id == slack) continue;
    idx.position[static_cast<std::size_t>(bus.id)] = static_cast<int>(idx.state_bus.size());
    idx.state_bus.push_back(bus.id);
  }
  return idx;
}

Eigen::SparseMatrix<double> assemble_jacobian(const Eigen::SparseMatrix<cplx>& ybus, const std::vector<cplx>& v,
                                              const std::vector<cplx>& cur, const StateIndex& idx) {
  const int m = static_cast<int>(idx.state_bus.size());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(ybus.nonZeros()) * 4 + static_cast<std::size_t>(m) * 4);
  const cplx j(0.0, 1.0);
  for (Eigen::Index col = 0; col < ybus.outerSize(); ++col) {
    for (Eigen::SparseMatrix<cplx>::InnerIterator it(ybus, col); it; ++it) {
      const auto i = static_cast<std::size_t>(it.row());
      const auto k = static_cast<std::size_t>(it.col());
      const int pi = idx.position[i];
      const int pk = idx.position[k];
      if (pi < 0 || pk < 0) continue;
      const cplx yv = it.value() * v[k];
      const cplx d_angle = -j * v[i] * std::conj(yv);
      const cplx d_mag = v[i] * std::conj(yv / std::abs(v[k]));
      trips.emplace_back(pi, pk, d_angle.real());
      trips.emplace_back(m + pi, pk, d_angle.imag());
      trips.emplace_back(pi, m + pk, d_mag.real());
      trips.emplace_back(m + pi, m + pk, d_mag.imag());
    }
  }
  for (int p = 0; p < m; ++p) {
    const auto i = static_cast<std::size_t>(idx.state_bus[static_cast<std::size_t>(p)]);
    const cplx d_angle = j * v[i] * std::conj(cur[i]);
    const cplx d_mag = std::conj(cur[i]) * v[i] / std::abs(v[i]);
    trips.emplace_back(p, p, d_angle.real());
    trips.emplace_back(m + p, p, d_angle.imag());
    trips.emplace_back(p, m + p, d_mag.real());
    trips.emplace_back(m + p, m + p, d_mag.imag());
  }
  Eigen::SparseMatrix<double> jac(2 * m, 2 * m);
  jac.setFromTriplets(trips.begin(), trips.end());
  jac.makeCompressed();
  return jac;
}

// Buses that stay connected once the slack bus is removed. Their Newton
// systems share no entries, so each one is iterated on its own.
std::vector<std::vector<int>> islands(const GridModel& grid) {
  const int slack = grid.slack_bus();
  const auto n = grid.buses.size();
  std::vector<std::vector<int>> adj(n);
  auto link = [&](int a, int b) {
    if (a == slack || b == slack) return;
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  };
  for (const auto& br : grid.branches) link(br.from, br.to);
  for (const auto& t : grid.transformers) link(t.primary_bus, t.secondary_bus);

  std::vector<std::vector<int>> out;
  std::vector<char> seen(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s] || static_cast<int>(s) == slack) continue;
    std::vector<int> comp{static_cast<int>(s)};
    seen[s] = 1;
    for (std::size_t head = 0; head < comp.size(); ++head) {
      for (int w : adj[static_cast<std::size_t>(comp[head])]) {
        if (!seen[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          comp.push_back(w);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

struct IslandResult {
  bool converged = false;
  int iterations = 0;
  double norm = 0.0;
};

IslandResult solve_island(const Eigen::SparseMatrix<cplx>& ybus, const std::vector<cplx>& spec,
                          const std::vector<int>& buses, std::size_t n_buses, PowerFlowSolution& sol,
                          const PowerFlowOptions& options) {
  StateIndex idx;
  idx.state_bus = buses;
  idx.position.assign(n_buses, -1);
  for (std::size_t p = 0; p < buses.size(); ++p) idx.position[static_cast<std::size_t>(buses[p])] = static_cast<int>(p);
  const int m = static_cast<int>(buses.size());

  std::vector<double> best_v;
  std::vector<double> best_theta;
  IslandResult best;
  best.norm = std::numeric_limits<double>::infinity();
  auto keep_best = [&](int iter, double norm) {
    best.iterations = iter;
    best.norm = norm;
    best_v.clear();
    best_theta.clear();
    for (int b : buses) {
      best_v.push_back(sol.v[static_cast<std::size_t>(b)]);
      best_theta.push_back(sol.theta[static_cast<std::size_t>(b)]);
    }
  };

  Eigen::VectorXd mismatch(2 * m);
  for (int iter = 0;; ++iter) {
    const auto v = phasors(sol);
    const auto cur = currents(ybus, v);
    double norm = 0.0;
    for (int p = 0; p < m; ++p) {
      const auto i = static_cast<std::size_t>(buses[static_cast<std::size_t>(p)]);
      const cplx s = v[i] * std::conj(cur[i]) - spec[i];
      mismatch[p] = s.real();
      mismatch[m + p] = s.imag();
      norm = std::max({norm, std::abs(s.real()), std::abs(s.imag())});
    }
    if (!std::isfinite(norm)) break;
    if (norm < best.norm) keep_best(iter, norm);
    if (norm <= options.tol) return {true, iter, norm};
    if (iter >= options.max_iter) break;

    const auto jac = assemble_jacobian(ybus, v, cur, idx);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(jac);
    if (lu.info() != Eigen::Success) {
      throw NumericalError("singular power-flow Jacobian at iteration " + std::to_string(iter));
    }
    const Eigen::VectorXd step = lu.solve(mismatch);
    if (lu.info() != Eigen::Success || !step.allFinite()) {
      throw NumericalError("singular power-flow Jacobian at iteration " + std::to_string(iter));
    }
    for (int p = 0; p < m; ++p) {
      const auto i = static_cast<std::size_t>(buses[static_cast<std::size_t>(p)]);
      sol.theta[i] -= step[p];
      sol.v[i] -= step[m + p];
    }
  }
  for (std::size_t p = 0; p < buses.size(); ++p) {
    sol.v[static_cast<std::size_t>(buses[p])] = best_v[p];
    sol.theta[static_cast<std::size_t>(buses[p])] = best_theta[p];
  }
  best.converged = false;
  return best;
}

PowerFlowSolution newton_raphson(const GridModel& grid, PowerFlowSolution sol, const PowerFlowOptions& options) {
  if (!(options.tol > 0.0)) throw InvalidArgument("power flow tolerance must be positive");
  const auto ybus = detail::build_ybus(grid);
  const auto spec = scheduled_injections(grid);
  const int slack = grid.slack_bus();
  sol.v[static_cast<std::size_t>(slack)] = grid.buses[static_cast<std::size_t>(slack)].v_set;
  sol.theta[static_cast<std::size_t>(slack)] = 0.0;

  sol.converged = true;
  sol.iterations = 0;
  sol.mismatch_inf_norm = 0.0;
  for (const auto& island : islands(grid)) {
    const auto r = solve_island(ybus, spec, island, grid.buses.size(), sol, options);
    sol.converged = sol.converged && r.converged;
    sol.iterations = std::max(sol.iterations, r.iterations);
    sol.mismatch_inf_norm = std::max(sol.mismatch_inf_norm, r.norm);
  }
  return sol;
}

} // namespace

std::vector<cplx> scheduled_injections(const GridModel& grid) {
  std::vector<cplx> s(grid.buses.size(), cplx{});
  for (const auto& load : grid.loads) s[static_cast<std::size_t>(load.bus)] -= cplx(load.p, load.q);
  for (const auto& dg : grid.dgs) {
    if (dg.available) s[static_cast<std::size_t>(dg.bus)] += cplx(dg.p0, dg.q0);
  }
  return s;
}

PowerFlowSolution solve_power_flow(const GridModel& grid, const PowerFlowOptions& options) {
  PowerFlowSolution flat;
  flat.v.assign(grid.buses.size(), 1.0);
  flat.theta.assign(grid.buses.size(), 0.0);
  return newton_raphson(grid, std::move(flat), options);
}

PowerFlowSolution solve_power_flow(const GridModel& grid, const PowerFlowSolution& warm_start,
                                   const PowerFlowOptions& options) {
  if (warm_start.v.size() != grid.buses.size() || warm_start.theta.size() != grid.buses.size()) {
    throw InvalidArgument("warm start does not match the grid size");
  }
  PowerFlowSolution init = warm_start;
  init.converged = false;
  init.iterations = 0;
  return newton_raphson(grid, std::move(init), options);
}

JacobianSystem build_jacobian(const GridModel& grid, const PowerFlowSolution& sol) {
  const auto ybus = detail::build_ybus(grid);
  const auto v = phasors(sol);
  const auto cur = currents(ybus, v);
  auto idx = state_index(grid);
  JacobianSystem sys;
  sys.jacobian = assemble_jacobian(ybus, v, cur, idx);
  sys.state_bus = std::move(idx.state_bus);
  sys.position = std::move(idx.position);
  return sys;
}

std::vector<cplx> bus_injections(const GridModel& grid, const PowerFlowSolution& sol) {
  const auto ybus = detail::build_ybus(grid);
  const auto v = phasors(sol);
  const auto cur = currents(ybus, v);
  std::vector<cplx> s(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) s[i] = v[i] * std::conj(cur[i]);
  return s;
}

std::vector<int> transformer_terminal_buses(const GridModel& grid) {
  std::set<int> buses;
  for (const auto& t : grid.transformers) {
    buses.insert(t.primary_bus);
    buses.insert(t.secondary_bus);
  }
  return {buses.begin(), buses.end()};
}

std::vector<int> default_monitored_buses(const GridModel& grid) {
  std::set<int> buses;
  for (const auto& bus : grid.buses) {
    if (bus.level == Level::secondary) buses.insert(bus.id);
  }
  for (int b : transformer_terminal_buses(grid)) buses.insert(b);
  return {buses.begin(), buses.end()};
}

namespace {
int find_index(const std::vector<int>& v, int value) {
  auto it = std::find(v.begin(), v.end(), value);
  return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}
} // namespace

int SensitivityMatrix::monitored_row(int bus) const { return find_index(monitored_buses, bus); }
int SensitivityMatrix::terminal_row(int bus) const { return find_index(terminal_buses, bus); }
int SensitivityMatrix::dg_column(int dg_id) const { return find_index(dg_ids, dg_id); }

SensitivityMatrix compute_sensitivity(const GridModel& grid, const PowerFlowSolution& sol, std::span<const int> dg_ids,
                                      std::span<const int> monitored_buses) {
  if (!sol.converged) throw InvalidArgument("sensitivity requires a converged power flow");
  const auto sys = build_jacobian(grid, sol);
  const int m = sys.size();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(sys.jacobian);
  if (lu.info() != Eigen::Success) throw NumericalError("singular Jacobian at the operating point");

  SensitivityMatrix sens;
  sens.dg_ids.assign(dg_ids.begin(), dg_ids.end());
  sens.monitored_buses.assign(monitored_buses.begin(), monitored_buses.end());
  sens.terminal_buses = transformer_terminal_buses(grid);
  const auto n_dg = static_cast<Eigen::Index>(sens.dg_ids.size());
  const auto n_mon = static_cast<Eigen::Index>(sens.monitored_buses.size());
  const auto n_term = static_cast<Eigen::Index>(sens.terminal_buses.size());
  sens.a_vp = Eigen::MatrixXd::Zero(n_mon, n_dg);
  sens.a_vq = Eigen::MatrixXd::Zero(n_mon, n_dg);
  sens.a_theta_p = Eigen::MatrixXd::Zero(n_term, n_dg);
  sens.a_theta_q = Eigen::MatrixXd::Zero(n_term, n_dg);

  auto pos = [&](int bus) {
    if (bus < 0 || bus >= static_cast<int>(sys.position.size())) {
      throw InvalidArgument("bus " + std::to_string(bus) + " does not exist");
    }
    return sys.position[static_cast<std::size_t>(bus)];
  };

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * m);
  for (Eigen::Index c = 0; c < n_dg; ++c) {
    const int p = pos(grid.dg(sens.dg_ids[static_cast<std::size_t>(c)]).bus);
    if (p < 0) continue; // a unit on the slack bus moves nothing
    for (int part = 0; part < 2; ++part) {
      rhs.setZero();
      rhs[part * m + p] = 1.0;
      const Eigen::VectorXd col = lu.solve(rhs);
      if (lu.info() != Eigen::Success || !col.allFinite()) throw NumericalError("sensitivity solve failed");
      auto& vblock = part == 0 ? sens.a_vp : sens.a_vq;
      auto& tblock = part == 0 ? sens.a_theta_p : sens.a_theta_q;
      for (Eigen::Index r = 0; r < n_mon; ++r) {
        const int q = pos(sens.monitored_buses[static_cast<std::size_t>(r)]);
        if (q >= 0) vblock(r, c) = col[m + q];
      }
      for (Eigen::Index r = 0; r < n_term; ++r) {
        const int q = pos(sens.terminal_buses[static_cast<std::size_t>(r)]);
        if (q >= 0) tblock(r, c) = col[q];
      }
    }
  }
  return sens;
}

SensitivityMatrix compute_sensitivity(const GridModel& grid, const PowerFlowSolution& sol) {
  const auto dgs = grid.dg_ids();
  const auto monitored = default_monitored_buses(grid);
  return compute_sensitivity(grid, sol, dgs, monitored);
}

Losses compute_losses(const GridModel& grid, const PowerFlowSolution& sol) {
  const auto v = phasors(sol);
  cplx total{};
  auto add = [&](const detail::TwoPort& tp) {
    const auto f = static_cast<std::size_t>(tp.from);
    const auto t = static_cast<std::size_t>(tp.to);
    const cplx i_f = tp.yff * v[f] + tp.yft * v[t];
    const cplx i_t = tp.ytf * v[f] + tp.ytt * v[t];
    total += v[f] * std::conj(i_f) + v[t] * std::conj(i_t);
  };
  for (const auto& br : grid.branches) add(detail::two_port(br));
  for (const auto& t : grid.transformers) add(detail::two_port(t));
  return {total.real(), total.imag()};
}

double protector_margin(const Transformer& t, const PowerFlowSolution& sol) {
  return sol.theta[static_cast<std::size_t>(t.primary_bus)] -
         (sol.theta[static_cast<std::size_t>(t.secondary_bus)] + t.theta_shift);
}

} // namespace selfgrid
