#include "network_equations.hpp"

#include <vector>

namespace selfgrid::detail {

TwoPort two_port(const Branch& br) {
  const cplx y = 1.0 / cplx(br.r, br.x);
  const cplx half_b(0.0, br.b_shunt / 2.0);
  return {br.from, br.to, y + half_b, -y, -y, y + half_b};
}

TwoPort two_port(const Transformer& t) {
  const cplx y = 1.0 / cplx(t.r, t.x);
  const cplx ratio = std::polar(t.tap, t.theta_shift);
  return {t.primary_bus, t.secondary_bus, y / (t.tap * t.tap), -y / std::conj(ratio), -y / ratio, y};
}

Eigen::SparseMatrix<cplx> build_ybus(const GridModel& grid) {
  const auto n = static_cast<Eigen::Index>(grid.buses.size());
  std::vector<Eigen::Triplet<cplx>> trips;
  trips.reserve(4 * (grid.branches.size() + grid.transformers.size()));
  auto stamp = [&](const TwoPort& tp) {
    trips.emplace_back(tp.from, tp.from, tp.yff);
    trips.emplace_back(tp.from, tp.to, tp.yft);
    trips.emplace_back(tp.to, tp.from, tp.ytf);
    trips.emplace_back(tp.to, tp.to, tp.ytt);
  };
  for (const auto& br : grid.branches) stamp(two_port(br));
  for (const auto& t : grid.transformers) stamp(two_port(t));
  Eigen::SparseMatrix<cplx> y(n, n);
  y.setFromTriplets(trips.begin(), trips.end());
  y.makeCompressed();
  return y;
}

} // namespace selfgrid::detail
