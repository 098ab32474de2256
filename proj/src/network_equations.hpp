#pragma once

#include "selfgrid/grid_model.hpp"

#include <Eigen/Sparse>

#include <complex>

namespace selfgrid::detail {

using cplx = std::complex<double>;

/// Two-port admittance of a branch or transformer: [I_f; I_t] = Y [V_f; V_t].
struct TwoPort {
  int from = 0;
  int to = 0;
  cplx yff, yft, ytf, ytt;
};

TwoPort two_port(const Branch& br);
TwoPort two_port(const Transformer& t);

Eigen::SparseMatrix<cplx> build_ybus(const GridModel& grid);

} // namespace selfgrid::detail
