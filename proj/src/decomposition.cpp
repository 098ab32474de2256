#include "selfgrid/decomposition.hpp"

#include "selfgrid/error.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

namespace selfgrid {

Eigen::MatrixXd normalize(const Eigen::MatrixXd& a) {
  const double scale = a.size() ? a.cwiseAbs().maxCoeff() : 0.0;
  if (!(scale > 0.0)) throw InvalidArgument("cannot normalize an all-zero matrix");
  return a / scale;
}

Decomposition epsilon_decompose(const Eigen::MatrixXd& a, std::span<const int> row_buses, std::span<const int> col_dgs,
                                double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw InvalidArgument("epsilon must lie in (0, 1), got " + std::to_string(epsilon));
  }
  if (static_cast<std::size_t>(a.rows()) != row_buses.size() || static_cast<std::size_t>(a.cols()) != col_dgs.size()) {
    throw InvalidArgument("matrix dimensions do not match the index lists");
  }

  Decomposition dec;
  dec.epsilon = epsilon;
  dec.original = a;
  dec.row_buses.assign(row_buses.begin(), row_buses.end());
  dec.col_dgs.assign(col_dgs.begin(), col_dgs.end());

  const Eigen::MatrixXd norm = normalize(a);
  const auto rows = a.rows();
  const auto cols = a.cols();
  dec.retained = Eigen::MatrixXd::Zero(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (std::abs(norm(i, j)) >= epsilon) dec.retained(i, j) = a(i, j);
    }
  }
  dec.residual = (a - dec.retained) / epsilon;

  // Bipartite graph: nodes 0..rows-1 are buses, rows..rows+cols-1 are DGs.
  const auto n_nodes = static_cast<std::size_t>(rows + cols);
  std::vector<std::vector<int>> adj(n_nodes);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (dec.retained(i, j) != 0.0) {
        adj[static_cast<std::size_t>(i)].push_back(static_cast<int>(rows + j));
        adj[static_cast<std::size_t>(rows + j)].push_back(static_cast<int>(i));
      }
    }
  }

  // Components seeded from DG columns in order, so subnetwork ids follow the
  // smallest DG column they contain.
  std::vector<int> seen(n_nodes, 0);
  for (Eigen::Index j = 0; j < cols; ++j) {
    const auto seed = static_cast<std::size_t>(rows + j);
    if (seen[seed]) continue;
    Subnetwork sub;
    sub.id = static_cast<int>(dec.subnetworks.size());
    std::queue<std::size_t> q;
    q.push(seed);
    seen[seed] = 1;
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      if (u < static_cast<std::size_t>(rows)) {
        sub.bus_ids.push_back(dec.row_buses[u]);
      } else {
        sub.dg_ids.push_back(dec.col_dgs[u - static_cast<std::size_t>(rows)]);
      }
      for (int w : adj[u]) {
        if (!seen[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          q.push(static_cast<std::size_t>(w));
        }
      }
    }
    std::sort(sub.bus_ids.begin(), sub.bus_ids.end());
    std::sort(sub.dg_ids.begin(), sub.dg_ids.end());
    dec.subnetworks.push_back(std::move(sub));
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!seen[static_cast<std::size_t>(i)]) dec.uncontrollable_buses.push_back(dec.row_buses[static_cast<std::size_t>(i)]);
  }
  std::sort(dec.uncontrollable_buses.begin(), dec.uncontrollable_buses.end());

  for (Eigen::Index j = 0; j < cols; ++j) {
    std::vector<int> reach;
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (dec.retained(i, j) != 0.0) reach.push_back(dec.row_buses[static_cast<std::size_t>(i)]);
    }
    std::sort(reach.begin(), reach.end());
    dec.influence[dec.col_dgs[static_cast<std::size_t>(j)]] = std::move(reach);
  }
  return dec;
}

Decomposition decompose(const SensitivityMatrix& sens, const GridModel& grid, DgMode mode, double epsilon) {
  auto dec = epsilon_decompose(sens.voltage_block(mode), sens.monitored_buses, sens.dg_ids, epsilon);
  for (auto& sub : dec.subnetworks) {
    for (const auto& t : grid.transformers) {
      const bool touches = std::binary_search(sub.bus_ids.begin(), sub.bus_ids.end(), t.primary_bus) ||
                           std::binary_search(sub.bus_ids.begin(), sub.bus_ids.end(), t.secondary_bus);
      if (touches) sub.transformer_ids.push_back(t.id);
    }
    std::sort(sub.transformer_ids.begin(), sub.transformer_ids.end());
  }
  return dec;
}

int Decomposition::subnetwork_of_bus(int bus) const {
  for (const auto& sub : subnetworks) {
    if (std::binary_search(sub.bus_ids.begin(), sub.bus_ids.end(), bus)) return sub.id;
  }
  return -1;
}

int Decomposition::subnetwork_of_dg(int dg_id) const {
  for (const auto& sub : subnetworks) {
    if (std::binary_search(sub.dg_ids.begin(), sub.dg_ids.end(), dg_id)) return sub.id;
  }
  return -1;
}

const Subnetwork& Decomposition::subnetwork(int id) const {
  if (id < 0 || id >= static_cast<int>(subnetworks.size())) {
    throw InvalidArgument("no subnetwork " + std::to_string(id));
  }
  return subnetworks[static_cast<std::size_t>(id)];
}

int Decomposition::row_of(int bus) const {
  auto it = std::find(row_buses.begin(), row_buses.end(), bus);
  return it == row_buses.end() ? -1 : static_cast<int>(it - row_buses.begin());
}

int Decomposition::col_of(int dg_id) const {
  auto it = std::find(col_dgs.begin(), col_dgs.end(), dg_id);
  return it == col_dgs.end() ? -1 : static_cast<int>(it - col_dgs.begin());
}

bool Decomposition::same_structure(const Decomposition& other) const {
  return epsilon == other.epsilon && row_buses == other.row_buses && col_dgs == other.col_dgs &&
         subnetworks == other.subnetworks && influence == other.influence &&
         uncontrollable_buses == other.uncontrollable_buses;
}

BlockPermutation block_permutation(const Decomposition& dec) {
  BlockPermutation perm;
  for (const auto& sub : dec.subnetworks) {
    for (int bus : sub.bus_ids) perm.rows.push_back(dec.row_of(bus));
    for (int dg : sub.dg_ids) perm.cols.push_back(dec.col_of(dg));
  }
  for (int bus : dec.uncontrollable_buses) perm.rows.push_back(dec.row_of(bus));
  return perm;
}

std::vector<int> closest_dgs(const Decomposition& dec, int bus) {
  std::vector<int> out;
  for (const auto& [dg, reach] : dec.influence) {
    if (std::binary_search(reach.begin(), reach.end(), bus)) out.push_back(dg);
  }
  return out;
}

EpsilonLadder::EpsilonLadder(std::vector<double> values, std::size_t index) : values_(std::move(values)), index_(index) {
  if (values_.empty()) throw InvalidArgument("epsilon ladder must not be empty");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] > 0.0 && values_[i] < 1.0)) throw InvalidArgument("epsilon ladder values must lie in (0, 1)");
    if (i && !(values_[i] < values_[i - 1])) throw InvalidArgument("epsilon ladder must be strictly descending");
  }
  if (index_ >= values_.size()) throw InvalidArgument("epsilon ladder index out of range");
}

EpsilonLadder EpsilonLadder::finer() const {
  if (at_bottom()) throw LadderExhausted("epsilon ladder exhausted at " + std::to_string(current()));
  return EpsilonLadder(values_, index_ + 1);
}

EpsilonLadder EpsilonLadder::at(double epsilon) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] == epsilon) return EpsilonLadder(values_, i);
  }
  throw InvalidArgument("epsilon " + std::to_string(epsilon) + " is not on the ladder");
}

} // namespace selfgrid
