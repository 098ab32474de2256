#include "selfgrid/decomposition.hpp"
#include "selfgrid/error.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

using namespace selfgrid;

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

using Block = std::pair<std::set<int>, std::set<int>>; // (dgs, buses)

// Components of the thresholded bus/DG graph; nodes 0..cols-1 are DGs and
// cols.. are buses.
std::set<Block> oracle_blocks(const Eigen::MatrixXd& a, const std::vector<int>& buses, const std::vector<int>& dgs,
                              double eps) {
  const double scale = a.cwiseAbs().maxCoeff();
  const int rows = static_cast<int>(a.rows());
  const int cols = static_cast<int>(a.cols());
  UnionFind uf(rows + cols);
  std::vector<bool> linked(static_cast<std::size_t>(rows), false);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (std::abs(a(r, c)) / scale >= eps) {
        uf.unite(cols + r, c);
        linked[static_cast<std::size_t>(r)] = true;
      }
    }
  }
  std::map<int, Block> by_root;
  for (int c = 0; c < cols; ++c) by_root[uf.find(c)].first.insert(dgs[static_cast<std::size_t>(c)]);
  for (int r = 0; r < rows; ++r) {
    if (linked[static_cast<std::size_t>(r)]) by_root[uf.find(cols + r)].second.insert(buses[static_cast<std::size_t>(r)]);
  }
  std::set<Block> out;
  for (auto& [root, block] : by_root) out.insert(block);
  return out;
}

std::set<Block> blocks_of(const Decomposition& d) {
  std::set<Block> out;
  for (const auto& s : d.subnetworks) {
    out.insert({std::set<int>(s.dg_ids.begin(), s.dg_ids.end()), std::set<int>(s.bus_ids.begin(), s.bus_ids.end())});
  }
  return out;
}

std::vector<int> iota_ids(int n, int start = 0) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), start);
  return v;
}

Decomposition base_decomposition(const std::string& name, double eps, DgMode mode = DgMode::pfc) {
  const auto g = testing::fixture_grid(name);
  const auto sol = solve_power_flow(g);
  REQUIRE(sol.converged);
  return decompose(compute_sensitivity(g, sol), g, mode, eps);
}

bool within_one_ulp(double a, double b) {
  return a == b || std::nextafter(a, b) == b;
}

} // namespace

TEST_CASE("normalize scales by the largest magnitude") {
  Eigen::MatrixXd a(2, 2);
  a << 2, 0.5, 0.5, 2;
  Eigen::MatrixXd expect(2, 2);
  expect << 1, 0.25, 0.25, 1;
  CHECK(normalize(a) == expect);
  CHECK(normalize(Eigen::MatrixXd::Identity(3, 3)) == Eigen::MatrixXd::Identity(3, 3));
  CHECK_THROWS_AS(normalize(Eigen::MatrixXd::Zero(2, 2)), InvalidArgument);

  const auto g = testing::fixture_grid("mesh30");
  const auto sens = compute_sensitivity(g, solve_power_flow(g));
  const auto n = normalize(sens.a_vq);
  double biggest = 0.0;
  for (Eigen::Index i = 0; i < n.size(); ++i) {
    CHECK(std::abs(n.data()[i]) <= 1.0);
    biggest = std::max(biggest, std::abs(n.data()[i]));
  }
  CHECK(biggest == 1.0);
}

TEST_CASE("weak off-diagonal coupling splits two buses") {
  Eigen::MatrixXd a(2, 2);
  a << 1, 0.1, 0.1, 1;
  const std::vector<int> buses{1, 2};
  const std::vector<int> dgs{1, 2};

  const auto split = epsilon_decompose(a, buses, dgs, 0.5);
  REQUIRE(split.subnetworks.size() == 2);
  CHECK(split.subnetworks[0].bus_ids == std::vector<int>{1});
  CHECK(split.subnetworks[0].dg_ids == std::vector<int>{1});
  CHECK(split.subnetworks[1].bus_ids == std::vector<int>{2});
  CHECK(split.influence.at(1) == std::vector<int>{1});
  CHECK(closest_dgs(split, 1) == std::vector<int>{1});
  const auto perm = block_permutation(split);
  CHECK(perm.rows == std::vector<int>{0, 1});
  CHECK(perm.cols == std::vector<int>{0, 1});

  const auto merged = epsilon_decompose(a, buses, dgs, 0.05);
  REQUIRE(merged.subnetworks.size() == 1);
  CHECK(merged.influence.at(1) == std::vector<int>{1, 2});
  CHECK(closest_dgs(merged, 1) == std::vector<int>{1, 2});
}

TEST_CASE("components agree with a union-find oracle on random matrices") {
  std::mt19937 rng(testing::seed());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const int rows = 1 + static_cast<int>(rng() % 6);
    const int cols = 1 + static_cast<int>(rng() % 4);
    Eigen::MatrixXd a(rows, cols);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = u(rng);
    const double eps = trial == 0 ? 0.3 : 0.05 + 0.9 * (u(rng) + 1.0) / 2.0;
    const auto buses = iota_ids(rows, 10);
    const auto dgs = iota_ids(cols);
    const auto d = epsilon_decompose(a, buses, dgs, eps);
    CAPTURE(trial);
    CHECK(blocks_of(d) == oracle_blocks(a, buses, dgs, eps));
  }
}

TEST_CASE("retained plus scaled residual reconstructs the input") {
  std::mt19937 rng(testing::seed() + 1);
  std::vector<Decomposition> cases;
  for (double eps : {0.1, 0.3, 0.5, 0.7}) cases.push_back(base_decomposition("mesh30", eps));
  for (int k = 0; k < 4; ++k) cases.push_back(base_decomposition("random" + std::to_string(k), 0.37));
  for (const auto& d : cases) {
    const Eigen::MatrixXd rebuilt = d.retained + d.epsilon * d.residual;
    for (Eigen::Index i = 0; i < rebuilt.size(); ++i) CHECK(within_one_ulp(rebuilt.data()[i], d.original.data()[i]));
  }
}

TEST_CASE("permuted retained matrix is exactly block diagonal") {
  for (const auto& [name, eps] : std::vector<std::pair<std::string, double>>{
           {"mesh30", 0.6}, {"mesh30", 0.7}, {"cs1", 0.5}, {"cs2", 0.4}, {"cs3", 0.4}}) {
    CAPTURE(name);
    CAPTURE(eps);
    const auto d = base_decomposition(name, eps);
    const auto perm = block_permutation(d);
    REQUIRE(perm.rows.size() == static_cast<std::size_t>(d.retained.rows()));
    REQUIRE(perm.cols.size() == static_cast<std::size_t>(d.retained.cols()));
    std::vector<int> row_block;
    std::vector<int> col_block;
    for (int r : perm.rows) row_block.push_back(d.subnetwork_of_bus(d.row_buses[r]));
    for (int c : perm.cols) col_block.push_back(d.subnetwork_of_dg(d.col_dgs[c]));
    CHECK(std::is_sorted(col_block.begin(), col_block.end()));
    for (std::size_t i = 0; i < perm.rows.size(); ++i) {
      for (std::size_t j = 0; j < perm.cols.size(); ++j) {
        if (row_block[i] != col_block[j]) CHECK(d.retained(perm.rows[i], perm.cols[j]) == 0.0);
      }
    }
  }
}

TEST_CASE("finer thresholds refine coarser ones") {
  for (const char* name : {"mesh30", "cs1", "cs2", "cs3", "random0", "random1", "random2", "random3"}) {
    CAPTURE(name);
    const auto g = testing::fixture_grid(name);
    const auto sens = compute_sensitivity(g, solve_power_flow(g));
    std::vector<Decomposition> sweep;
    for (int k = 1; k <= 10; ++k) sweep.push_back(decompose(sens, g, DgMode::pfc, 0.09 * k));
    for (std::size_t i = 1; i < sweep.size(); ++i) CHECK(sweep[i].subnetworks.size() >= sweep[i - 1].subnetworks.size());
    for (std::size_t lo = 0; lo < sweep.size(); ++lo) {
      for (std::size_t hi = lo + 1; hi < sweep.size(); ++hi) {
        for (const auto& s : sweep[hi].subnetworks) {
          const int dg_parent = sweep[lo].subnetwork_of_dg(s.dg_ids.front());
          for (int d : s.dg_ids) CHECK(sweep[lo].subnetwork_of_dg(d) == dg_parent);
          for (int b : s.bus_ids) CHECK(sweep[lo].subnetwork_of_bus(b) == dg_parent);
        }
        for (int b : sweep[lo].uncontrollable_buses) CHECK(sweep[hi].subnetwork_of_bus(b) == -1);
      }
    }
  }
}

TEST_CASE("violating bus in a large subnetwork has few closest DGs") {
  const auto d = base_decomposition("cs1", 0.4);
  const int bus = 13; // host of the DG the trip scenario removes
  const int sub = d.subnetwork_of_bus(bus);
  REQUIRE(sub >= 0);
  CHECK(d.subnetwork(sub).dg_ids.size() >= 6);
  CHECK(closest_dgs(d, bus) == std::vector<int>{3, 4, 5});
}

TEST_CASE("two-singleton fixture and mode selection") {
  CHECK(base_decomposition("two_singleton", 0.3).subnetworks.size() == 1);
  CHECK(base_decomposition("two_singleton", 0.5).subnetworks.size() == 2);
  const auto upf = base_decomposition("protector", 0.2, DgMode::upf);
  REQUIRE(upf.subnetworks.size() == 1);
  CHECK(upf.subnetworks[0].transformer_ids == std::vector<int>{0});
}

TEST_CASE("structural equality ignores numeric values") {
  const auto a = base_decomposition("cs3", 0.4);
  auto b = a;
  b.original *= 2.0;
  b.retained *= 2.0;
  CHECK(a.same_structure(b));
  CHECK_FALSE(a.same_structure(base_decomposition("cs3", 0.2)));
}

TEST_CASE("epsilon ladder") {
  const EpsilonLadder ladder({0.012, 0.010, 0.008});
  CHECK(ladder.current() == 0.012);
  const auto step = ladder.finer();
  CHECK(step.current() == 0.010);
  const auto bottom = step.finer();
  CHECK(bottom.at_bottom());
  CHECK_THROWS_AS(bottom.finer(), LadderExhausted);
  CHECK(bottom.restored().current() == 0.012);
  CHECK(ladder.at(0.008) == bottom);
  CHECK_THROWS_AS(ladder.at(0.5), InvalidArgument);
  CHECK_THROWS_AS(EpsilonLadder({}), InvalidArgument);
  CHECK_THROWS_AS(EpsilonLadder({0.2, 0.3}), InvalidArgument);
  CHECK_THROWS_AS(EpsilonLadder({0.2, 1.5}), InvalidArgument);
}

TEST_CASE("invalid thresholds are rejected") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
  const std::vector<int> ids{0, 1};
  CHECK_THROWS_AS(epsilon_decompose(a, ids, ids, 0.0), InvalidArgument);
  CHECK_THROWS_AS(epsilon_decompose(a, ids, ids, 1.0), InvalidArgument);
  CHECK_THROWS_AS(epsilon_decompose(a, std::vector<int>{0}, ids, 0.5), InvalidArgument);
}
