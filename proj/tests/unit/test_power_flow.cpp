#include "selfgrid/error.hpp"
#include "selfgrid/power_flow.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <complex>
#include <random>

using namespace selfgrid;
using cplx = std::complex<double>;

namespace {

// Independent nodal admittance matrix for the Gauss-Seidel oracle.
Eigen::MatrixXcd dense_ybus(const GridModel& g) {
  const auto n = static_cast<Eigen::Index>(g.buses.size());
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& b : g.branches) {
    const cplx ys = 1.0 / cplx(b.r, b.x);
    const cplx sh(0.0, b.b_shunt / 2.0);
    y(b.from, b.from) += ys + sh;
    y(b.to, b.to) += ys + sh;
    y(b.from, b.to) -= ys;
    y(b.to, b.from) -= ys;
  }
  for (const auto& t : g.transformers) {
    const cplx ys = 1.0 / cplx(t.r, t.x);
    const cplx a = std::polar(t.tap, t.theta_shift);
    y(t.primary_bus, t.primary_bus) += ys / std::norm(a);
    y(t.secondary_bus, t.secondary_bus) += ys;
    y(t.primary_bus, t.secondary_bus) -= ys / std::conj(a);
    y(t.secondary_bus, t.primary_bus) -= ys / a;
  }
  return y;
}

std::vector<cplx> gauss_seidel(const GridModel& g, int sweeps) {
  const auto y = dense_ybus(g);
  const auto n = g.buses.size();
  std::vector<cplx> s(n, cplx{});
  for (const auto& l : g.loads) s[l.bus] -= cplx(l.p, l.q);
  for (const auto& d : g.dgs) {
    if (d.available) s[d.bus] += cplx(d.p0, d.q0);
  }
  const int slack = g.slack_bus();
  std::vector<cplx> v(n, cplx(g.buses[slack].v_set, 0.0));
  for (int it = 0; it < sweeps; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      if (static_cast<int>(i) == slack) continue;
      cplx acc = std::conj(s[i] / v[i]);
      for (std::size_t k = 0; k < n; ++k) {
        if (k != i) acc -= y(i, k) * v[k];
      }
      v[i] = acc / y(i, i);
    }
  }
  return v;
}

Eigen::VectorXd voltages_at(const GridModel& g, const std::vector<int>& buses) {
  const auto sol = solve_power_flow(g, PowerFlowOptions{1e-12, 50});
  REQUIRE(sol.converged);
  Eigen::VectorXd out(static_cast<Eigen::Index>(buses.size()));
  for (std::size_t i = 0; i < buses.size(); ++i) out[static_cast<Eigen::Index>(i)] = sol.v[buses[i]];
  return out;
}

} // namespace

TEST_CASE("zero injection gives a flat profile") {
  auto g = testing::fixture_grid("mesh30");
  g.loads.clear();
  for (auto& d : g.dgs) d.p0 = d.q0 = 0.0;
  g.buses[0].v_set = 1.02;
  const auto sol = solve_power_flow(g);
  REQUIRE(sol.converged);
  for (std::size_t i = 0; i < g.buses.size(); ++i) {
    CHECK(sol.v[i] == doctest::Approx(1.02).epsilon(1e-12));
    CHECK(std::abs(sol.theta[i]) < 1e-12);
  }
  const auto losses = compute_losses(g, sol);
  CHECK(std::abs(losses.p) < 1e-12);
  CHECK(std::abs(losses.q) < 1e-12);
}

TEST_CASE("phase shifts accumulate on an unloaded grid") {
  auto g = testing::fixture_grid("two_singleton");
  g.loads.clear();
  g.dgs.clear();
  g.transformers[0].theta_shift = 0.05;
  const auto sol = solve_power_flow(g);
  REQUIRE(sol.converged);
  for (int b : {1, 2, 3}) CHECK(sol.theta[b] == doctest::Approx(-0.05).epsilon(1e-12));
}

TEST_CASE("charging shunts show up as negative reactive loss") {
  auto g = testing::two_bus(0.01, 0.1, 0.0, 0.0);
  g.branches[0].b_shunt = 0.04;
  const auto sol = solve_power_flow(g);
  REQUIRE(sol.converged);
  const auto losses = compute_losses(g, sol);
  // Nearly flat: every charging half sees |V|^2 ~ 1.
  CHECK(losses.q == doctest::Approx(-0.04).epsilon(1e-3));
}

TEST_CASE("two-bus closed form") {
  const auto g = testing::two_bus(0.0, 0.1, 0.5, 0.2);
  const auto sol = solve_power_flow(g, PowerFlowOptions{1e-12, 30});
  REQUIRE(sol.converged);
  // |V|^4 - (1 - 2QX)|V|^2 + (P^2 + Q^2) X^2 = 0, upper root.
  const double u = (0.96 + std::sqrt(0.91)) / 2.0;
  const double v = std::sqrt(u);
  CHECK(std::abs(sol.v[1] - v) < 1e-8);
  // P = V1 V2 sin(theta1 - theta2) / X
  CHECK(std::abs(sol.theta[1] + std::asin(0.5 * 0.1 / v)) < 1e-8);

  // Loss in the line equals |I|^2 r once resistance is added.
  const auto lossy = testing::two_bus(0.02, 0.1, 0.5, 0.2);
  const auto ls = solve_power_flow(lossy, PowerFlowOptions{1e-12, 30});
  REQUIRE(ls.converged);
  const cplx v1 = std::polar(ls.v[1], ls.theta[1]);
  const cplx i = (cplx(1.0, 0.0) - v1) / cplx(0.02, 0.1);
  const auto losses = compute_losses(lossy, ls);
  CHECK(losses.p == doctest::Approx(std::norm(i) * 0.02).epsilon(1e-9));
  CHECK(losses.q == doctest::Approx(std::norm(i) * 0.1).epsilon(1e-9));
}

TEST_CASE("thirty-bus fixture converges and agrees with Gauss-Seidel") {
  const auto g = testing::fixture_grid("mesh30");
  const auto sol = solve_power_flow(g, PowerFlowOptions{1e-8, 30});
  REQUIRE(sol.converged);
  CHECK(sol.iterations <= 10);
  CHECK(sol.mismatch_inf_norm <= 1e-8);
  const auto gs = gauss_seidel(g, 4000);
  for (std::size_t i = 0; i < g.buses.size(); ++i) {
    CHECK(std::abs(std::polar(sol.v[i], sol.theta[i]) - gs[i]) < 1e-6);
  }
}

TEST_CASE("power balance: slack injection minus net load equals losses") {
  for (const char* name : {"mesh30", "cs1", "protector", "random0", "random1"}) {
    CAPTURE(name);
    const auto g = testing::fixture_grid(name);
    const auto sol = solve_power_flow(g);
    REQUIRE(sol.converged);
    const auto inj = bus_injections(g, sol);
    cplx total{};
    for (const auto& s : inj) total += s;
    const auto losses = compute_losses(g, sol);
    CHECK(std::abs(total.real() - losses.p) < 1e-8);
    CHECK(std::abs(total.imag() - losses.q) < 1e-8);
    const auto spec = scheduled_injections(g);
    for (std::size_t i = 0; i < inj.size(); ++i) {
      if (static_cast<int>(i) == g.slack_bus()) continue;
      CHECK(std::abs(inj[i] - spec[i]) < 1e-8);
    }
  }
}

TEST_CASE("warm start reaches the same operating point") {
  const auto g = testing::fixture_grid("cs1");
  const auto cold = solve_power_flow(g, PowerFlowOptions{1e-12, 30});
  auto moved = g;
  moved.loads[3].p *= 1.2;
  const auto warm = solve_power_flow(moved, cold, PowerFlowOptions{1e-12, 30});
  const auto fresh = solve_power_flow(moved, PowerFlowOptions{1e-12, 30});
  REQUIRE(warm.converged);
  for (std::size_t i = 0; i < g.buses.size(); ++i) CHECK(std::abs(warm.v[i] - fresh.v[i]) < 1e-10);
}

TEST_CASE("an overloaded grid reports non-convergence instead of throwing") {
  auto g = testing::two_bus(0.0, 0.1, 5.0, 2.0);
  PowerFlowSolution sol;
  CHECK_NOTHROW(sol = solve_power_flow(g));
  CHECK_FALSE(sol.converged);
  CHECK(sol.v.size() == 2);
}

TEST_CASE("decoupled feeders are solved independently") {
  const auto one = testing::fixture_grid("cs1");
  const auto two = testing::fixture_grid("cs2");
  const auto a = solve_power_flow(one);
  const auto b = solve_power_flow(two);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  for (std::size_t i = 0; i < one.buses.size(); ++i) {
    CHECK(a.v[i] == b.v[i]);
    CHECK(a.theta[i] == b.theta[i]);
  }
}

TEST_CASE("sensitivity columns solve the Jacobian system") {
  const auto g = testing::fixture_grid("mesh30");
  const auto sol = solve_power_flow(g);
  const auto sys = build_jacobian(g, sol);
  const auto sens = compute_sensitivity(g, sol);
  const Eigen::MatrixXd j(sys.jacobian);
  const Eigen::MatrixXd inv = j.fullPivLu().inverse();
  const int m = sys.size();
  CHECK((j * inv - Eigen::MatrixXd::Identity(2 * m, 2 * m)).cwiseAbs().maxCoeff() < 1e-10);
  for (std::size_t c = 0; c < sens.dg_ids.size(); ++c) {
    const int p = sys.position[g.dg(sens.dg_ids[c]).bus];
    for (std::size_t r = 0; r < sens.monitored_buses.size(); ++r) {
      const int q = sys.position[sens.monitored_buses[r]];
      if (q < 0) continue;
      CHECK(sens.a_vq(r, c) == doctest::Approx(inv(m + q, m + p)).epsilon(1e-9));
      CHECK(sens.a_vp(r, c) == doctest::Approx(inv(m + q, p)).epsilon(1e-9));
    }
    for (std::size_t r = 0; r < sens.terminal_buses.size(); ++r) {
      const int q = sys.position[sens.terminal_buses[r]];
      if (q < 0) continue;
      CHECK(sens.a_theta_q(r, c) == doctest::Approx(inv(q, m + p)).epsilon(1e-9));
      CHECK(sens.a_theta_p(r, c) == doctest::Approx(inv(q, p)).epsilon(1e-9));
    }
  }
}

TEST_CASE("sensitivity matches central finite differences") {
  const auto g = testing::fixture_grid("mesh30");
  const auto sol = solve_power_flow(g, PowerFlowOptions{1e-12, 50});
  const auto sens = compute_sensitivity(g, sol);
  const double delta = 1e-5;
  for (std::size_t c = 0; c < sens.dg_ids.size(); ++c) {
    for (int part = 0; part < 2; ++part) {
      auto up = g;
      auto down = g;
      auto& du = up.dg(sens.dg_ids[c]);
      auto& dd = down.dg(sens.dg_ids[c]);
      (part == 0 ? du.p0 : du.q0) += delta;
      (part == 0 ? dd.p0 : dd.q0) -= delta;
      const Eigen::VectorXd fd =
          (voltages_at(up, sens.monitored_buses) - voltages_at(down, sens.monitored_buses)) / (2.0 * delta);
      const Eigen::VectorXd col = part == 0 ? sens.a_vp.col(c) : sens.a_vq.col(c);
      CHECK((fd - col).cwiseAbs().maxCoeff() / col.cwiseAbs().maxCoeff() <= 1e-4);
    }
  }
}

TEST_CASE("linear prediction tracks the nonlinear re-solve") {
  const auto g = testing::fixture_grid("mesh30");
  const auto sol = solve_power_flow(g);
  const auto sens = compute_sensitivity(g, sol);
  std::mt19937 rng(testing::seed());
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto k = static_cast<Eigen::Index>(rng() % sens.dg_ids.size());
    const double x = u(rng);
    auto moved = g;
    moved.dg(sens.dg_ids[static_cast<std::size_t>(k)]).q0 += x;
    const auto after = solve_power_flow(moved, sol);
    REQUIRE(after.converged);
    for (std::size_t r = 0; r < sens.monitored_buses.size(); ++r) {
      const int bus = sens.monitored_buses[r];
      const double predicted = sol.v[bus] + sens.a_vq(static_cast<Eigen::Index>(r), k) * x;
      CHECK(std::abs(predicted - after.v[bus]) <= 5e-3);
    }
  }
}

TEST_CASE("full sensitivity of the thirty-bus fixture is fast") {
  const auto g = testing::fixture_grid("mesh30");
  const auto start = std::chrono::steady_clock::now();
  const auto sol = solve_power_flow(g);
  const auto sens = compute_sensitivity(g, sol);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(sens.a_vq.rows() == static_cast<Eigen::Index>(sens.monitored_buses.size()));
  CHECK(secs <= 5.0);
}

TEST_CASE("sensitivity needs a converged solution") {
  const auto g = testing::two_bus(0.0, 0.1, 5.0, 2.0);
  const auto sol = solve_power_flow(g);
  CHECK_THROWS_AS(compute_sensitivity(g, sol), InvalidArgument);
}

TEST_CASE("protector margin follows the angle difference") {
  const auto g = testing::fixture_grid("protector");
  const auto sol = solve_power_flow(g);
  const auto& t = g.transformers[0];
  CHECK(protector_margin(t, sol) == sol.theta[t.primary_bus] - sol.theta[t.secondary_bus]);
  CHECK(protector_margin(t, sol) > 0.0); // forward flow at the base point
}
