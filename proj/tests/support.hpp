#pragma once

#include "selfgrid/grid_model.hpp"
#include "selfgrid/power_flow.hpp"

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

namespace testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(SELFGRID_FIXTURE_DIR) / name;
}

inline selfgrid::GridModel fixture_grid(const std::string& name) {
  return selfgrid::load_grid(fixture(name + ".grid.json"));
}

/// Seed for randomized checks; SELFGRID_SEED overrides the default.
inline std::uint32_t seed(std::uint32_t fallback = 20240601u) {
  if (const char* s = std::getenv("SELFGRID_SEED")) return static_cast<std::uint32_t>(std::strtoul(s, nullptr, 10));
  return fallback;
}

/// Slack bus 0 feeding one pq bus through a series impedance r + jx.
inline selfgrid::GridModel two_bus(double r, double x, double p_load, double q_load) {
  using namespace selfgrid;
  GridModel g;
  g.buses = {Bus{0, BusKind::slack, 13.8, Level::primary, 1.0}, Bus{1, BusKind::pq, 13.8, Level::primary, 1.0}};
  g.branches = {Branch{0, 0, 1, r, x, 0.0}};
  g.loads = {Load{1, p_load, q_load}};
  return g;
}

/// Random radial-plus-loops network: a primary spine off the slack, secondary
/// buses hanging off it through transformers and lines, a few extra ties, and
/// DGs on a subset of secondary buses.
inline selfgrid::GridModel random_grid(std::mt19937& rng, int n_secondary, int n_dgs) {
  using namespace selfgrid;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GridModel g;
  g.buses.push_back(Bus{0, BusKind::slack, 13.8, Level::primary, 0.98 + 0.04 * u(rng)});
  const int n_primary = 3;
  for (int i = 1; i <= n_primary; ++i) {
    g.buses.push_back(Bus{i, BusKind::pq, 13.8, Level::primary, 1.0});
    g.branches.push_back(Branch{static_cast<int>(g.branches.size()), i - 1, i, 0.002, 0.006, 0.0});
  }
  for (int k = 0; k < n_secondary; ++k) {
    const int id = static_cast<int>(g.buses.size());
    g.buses.push_back(Bus{id, BusKind::pq, 0.48, Level::secondary, 1.0});
    if (k == 0 || u(rng) < 0.2) {
      const int primary = 1 + static_cast<int>(u(rng) * n_primary) % n_primary;
      g.transformers.push_back(Transformer{static_cast<int>(g.transformers.size()), primary, id, 0.004, 0.04, 1.0, 0.0,
                                           false});
    } else {
      const int prev = n_primary + 1 + static_cast<int>(u(rng) * k) % k;
      g.branches.push_back(Branch{static_cast<int>(g.branches.size()), prev, id, 0.005 + 0.015 * u(rng),
                                  0.01 + 0.03 * u(rng), 0.0});
    }
    g.loads.push_back(Load{id, 0.01 + 0.03 * u(rng), 0.005 + 0.01 * u(rng)});
  }
  for (int t = 0; t < n_secondary / 6; ++t) {
    const int a = n_primary + 1 + static_cast<int>(u(rng) * n_secondary) % n_secondary;
    const int b = n_primary + 1 + static_cast<int>(u(rng) * n_secondary) % n_secondary;
    if (a != b) g.branches.push_back(Branch{static_cast<int>(g.branches.size()), a, b, 0.02, 0.04, 0.0});
  }
  for (int d = 0; d < n_dgs; ++d) {
    const int bus = n_primary + 1 + (d * n_secondary) / n_dgs;
    g.dgs.push_back(DgUnit{d, bus, DgMode::pfc, 0.03 * u(rng), 0.0, 0.1, 0.1, 0.1, true});
  }
  return g;
}

} // namespace testing
