#pragma once

#include "selfgrid/grid_model.hpp"
#include "selfgrid/power_flow.hpp"

#include <Eigen/Dense>

#include <map>
#include <span>
#include <vector>

namespace selfgrid {

/// A group of strongly coupled buses and DGs that regulates itself.
struct Subnetwork {
  int id = 0;
  std::vector<int> dg_ids;          // ascending
  std::vector<int> bus_ids;         // ascending
  std::vector<int> transformer_ids; // transformers with a terminal in bus_ids

  bool operator==(const Subnetwork&) const = default;
};

/// Result of thresholding a sensitivity block at `epsilon`.
///
/// `original = retained + epsilon * residual`. `retained` keeps the raw
/// coupling wherever the normalized magnitude reaches epsilon and is zero
/// elsewhere. Subnetworks are the connected components of the bipartite
/// bus/DG graph whose edges are the nonzero retained entries. Buses with an
/// all-zero retained row belong to no subnetwork and are listed in
/// `uncontrollable_buses`.
struct Decomposition {
  double epsilon = 0.0;
  Eigen::MatrixXd original;
  Eigen::MatrixXd retained;
  Eigen::MatrixXd residual;
  std::vector<int> row_buses;
  std::vector<int> col_dgs;
  std::vector<Subnetwork> subnetworks;
  std::map<int, std::vector<int>> influence; // DG id -> buses it reaches
  std::vector<int> uncontrollable_buses;

  /// -1 when the bus (or DG) is in no subnetwork.
  int subnetwork_of_bus(int bus) const;
  int subnetwork_of_dg(int dg_id) const;
  const Subnetwork& subnetwork(int id) const;
  int row_of(int bus) const;
  int col_of(int dg_id) const;

  /// Structural equality: epsilon, index maps, subnetworks and influence.
  bool same_structure(const Decomposition& other) const;
};

/// Divides every entry by the largest absolute entry. Throws InvalidArgument
/// for an all-zero (or empty) matrix.
Eigen::MatrixXd normalize(const Eigen::MatrixXd& a);

Decomposition epsilon_decompose(const Eigen::MatrixXd& a, std::span<const int> row_buses, std::span<const int> col_dgs,
                                double epsilon);

/// Decomposes the voltage block that drives the given mode (A_VQ for PFC,
/// A_VP for UPF) and attaches transformer membership from the grid.
Decomposition decompose(const SensitivityMatrix& sens, const GridModel& grid, DgMode mode, double epsilon);

/// Row and column orders (indices into `retained`) that make it block
/// diagonal, one block per subnetwork in id order; uncontrollable rows last.
struct BlockPermutation {
  std::vector<int> rows;
  std::vector<int> cols;
};
BlockPermutation block_permutation(const Decomposition& dec);

/// DGs whose influence range contains the bus, ascending. Empty when the bus
/// is uncontrollable at this epsilon.
std::vector<int> closest_dgs(const Decomposition& dec, int bus);

/// Descending threshold schedule the ED agent walks when a subnetwork cannot
/// regulate (finer) and resets after restoration.
class EpsilonLadder {
public:
  explicit EpsilonLadder(std::vector<double> values, std::size_t index = 0);

  double current() const { return values_[index_]; }
  std::size_t index() const { return index_; }
  const std::vector<double>& values() const { return values_; }
  bool at_bottom() const { return index_ + 1 == values_.size(); }

  /// Next smaller epsilon. Throws LadderExhausted at the bottom.
  EpsilonLadder finer() const;
  EpsilonLadder restored() const { return EpsilonLadder(values_, 0); }
  /// Ladder positioned at the given value; throws InvalidArgument if absent.
  EpsilonLadder at(double epsilon) const;

  bool operator==(const EpsilonLadder&) const = default;

private:
  std::vector<double> values_;
  std::size_t index_ = 0;
};

} // namespace selfgrid
