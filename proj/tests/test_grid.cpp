#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include "stovar/gridmodel.hpp"
#include "stovar/io.hpp"
#include "stovar/linalg.hpp"

using namespace stovar;

namespace {

std::string models_dir() { return STOVAR_MODELS_DIR; }

grid::Machine basic_machine(const std::string& id, int bus) {
  grid::Machine mc;
  mc.id = id;
  mc.bus = bus;
  mc.m = 8.0;
  mc.d = 2.0;
  mc.xd = 1.2;
  mc.xq = 1.1;
  mc.xd_p = 0.25;
  mc.xq_p = 0.35;
  mc.td0_p = 6.0;
  mc.tq0_p = 0.8;
  mc.ka = 20.0;
  mc.ta = 0.2;
  mc.r_droop = 0.05;
  mc.tg = 0.5;
  return mc;
}

/// Slack machine plus one PQ bus over a single line.
grid::SystemModel two_bus(double load_p, double load_q, double r, double x,
                          double b_sh) {
  grid::SystemModel model;
  model.buses.push_back({"s", grid::BusKind::slack, 1.0, 0.0});
  model.buses.push_back({"l", grid::BusKind::pq, 1.0, 0.0});
  model.branches.push_back({"line", 0, 1, r, x, b_sh, 1.0});
  model.machines.push_back(basic_machine("G1", 0));
  if (load_p != 0.0 || load_q != 0.0) {
    grid::Load ld;
    ld.id = "L";
    ld.bus = 1;
    ld.p0 = load_p;
    ld.q0 = load_q;
    ld.gamma = 2.0;
    model.loads.push_back(ld);
  }
  model.build_layout();
  return model;
}

}  // namespace

TEST_CASE("power curve regions and cubic interpolation") {
  grid::PowerCurve curve{4.0, 15.0, 25.0, 0.3};
  CHECK(curve.value(2.0) == 0.0);
  CHECK(curve.value(30.0) == 0.0);
  CHECK(curve.value(20.0) == 0.3);
  CHECK(curve.value(15.0) == doctest::Approx(0.3));
  const double v = 13.0;
  const double expect = 0.3 * (v * v * v - 64.0) / (3375.0 - 64.0);
  CHECK(curve.value(v) == doctest::Approx(expect).epsilon(1e-14));
  // Derivative against central differences on the cubic branch.
  const double eps = 1e-6;
  const double fd = (curve.value(v + eps) - curve.value(v - eps)) / (2 * eps);
  CHECK(curve.derivative(v) == doctest::Approx(fd).epsilon(1e-8));
  CHECK(curve.derivative(2.0) == 0.0);
  CHECK(curve.derivative(20.0) == 0.0);
}

TEST_CASE("layout validation names both buses of a duplicate slack") {
  grid::SystemModel model;
  model.buses.push_back({"alpha", grid::BusKind::slack, 1.0, 0.0});
  model.buses.push_back({"beta", grid::BusKind::slack, 1.0, 0.0});
  model.branches.push_back({"line", 0, 1, 0.0, 0.1, 0.0, 1.0});
  model.machines.push_back(basic_machine("G1", 0));
  try {
    model.build_layout();
    FAIL("expected a validation error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("alpha") != std::string::npos);
    CHECK(msg.find("beta") != std::string::npos);
  }
}

TEST_CASE("layout validation rejects structural defects") {
  auto base = [] {
    grid::SystemModel m;
    m.buses.push_back({"s", grid::BusKind::slack, 1.0, 0.0});
    m.buses.push_back({"l", grid::BusKind::pq, 1.0, 0.0});
    m.branches.push_back({"line", 0, 1, 0.0, 0.1, 0.0, 1.0});
    m.machines.push_back(basic_machine("G1", 0));
    return m;
  };

  {
    grid::SystemModel m = base();
    m.buses[1].id = "s";  // duplicate id
    CHECK_THROWS_AS(m.build_layout(), Error);
  }
  {
    grid::SystemModel m = base();
    m.branches.clear();  // disconnected network
    CHECK_THROWS_AS(m.build_layout(), Error);
  }
  {
    grid::SystemModel m = base();
    m.branches[0].x = 0.0;  // degenerate branch
    CHECK_THROWS_AS(m.build_layout(), Error);
  }
  {
    grid::SystemModel m = base();
    m.machines[0].bus = 1;  // machine on a PQ bus
    CHECK_THROWS_AS(m.build_layout(), Error);
  }
  {
    grid::SystemModel m = base();
    m.machines[0].xd_p = 2.0;  // transient reactance above synchronous
    CHECK_THROWS_AS(m.build_layout(), Error);
  }
  {
    grid::SystemModel m = base();
    grid::Load ld;
    ld.id = "L";
    ld.bus = 1;
    ld.p0 = 0.1;
    ld.noise_p = 3;  // no such process
    m.loads.push_back(ld);
    CHECK_THROWS_AS(m.build_layout(), Error);
  }
}

TEST_CASE("bundled model layouts have the documented shape") {
  grid::SystemModel three = io::load_system(models_dir() + "/threebus.json");
  CHECK(three.n == 11);  // 2 machines x 6 states minus the reference delta
  CHECK(three.m == 26);  // 3 v + 3 theta + 2x4 machine + 3x4 branch
  CHECK(three.p == 2);
  CHECK(three.ref_machine == 0);
  CHECK(three.state_names[0] == "omega(G1)");
  CHECK(three.state_classes[0] == "omega");

  grid::SystemModel nine = io::load_system(models_dir() + "/ninebus.json");
  CHECK(nine.n == 18);
  CHECK(nine.m == 67);
  CHECK(nine.p == 7);
  CHECK(nine.algebraic_names[0] == "v(bus1)");
  CHECK(nine.state_names.back() == "p_w(W8)");
}

TEST_CASE("power flow on a two-bus system with no load is flat") {
  grid::SystemModel model = two_bus(0.0, 0.0, 0.0, 0.1, 0.0);
  const grid::PowerFlowResult pf = grid::power_flow(model);
  CHECK(pf.v[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pf.v[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pf.theta[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pf.p_inj.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("two-bus power flow matches a bisection oracle") {
  // Lossless line, active load only: eliminating v2 = cos(theta2) from the
  // reactive balance leaves one equation in theta2 for the bisection.
  const double x = 0.1, p_load = 1.0;
  grid::SystemModel model = two_bus(p_load, 0.0, 0.0, x, 0.0);
  const grid::PowerFlowResult pf = grid::power_flow(model);

  auto residual = [&](double th) { return (std::cos(th) / x) * std::sin(th) + p_load; };
  double lo = -M_PI / 4, hi = 0.0;
  REQUIRE(residual(lo) < 0.0);
  REQUIRE(residual(hi) > 0.0);
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (residual(mid) < 0.0 ? lo : hi) = mid;
  }
  const double theta_oracle = 0.5 * (lo + hi);
  const double v_oracle = std::cos(theta_oracle);
  CHECK(pf.theta[1] == doctest::Approx(theta_oracle).epsilon(1e-9));
  CHECK(pf.v[1] == doctest::Approx(v_oracle).epsilon(1e-9));
}

TEST_CASE("nine-bus power flow closes the energy balance") {
  grid::SystemModel model = io::load_system(models_dir() + "/ninebus.json");
  const grid::PowerFlowResult pf = grid::power_flow(model);
  CHECK(pf.mismatch_inf < 1e-8);
  CHECK(pf.mismatch.maxCoeff() < 1e-8);
  CHECK(pf.iterations < 10);

  // Net injections over all buses must equal the series losses.
  const double net = pf.p_inj.sum();
  double losses = 0.0;
  for (size_t b = 0; b < model.branches.size(); ++b) {
    const grid::Branch& br = model.branches[b];
    const double thft = pf.theta[br.from] - pf.theta[br.to];
    const auto& yb = model.branch_y[b];
    const double pfr = pf.v[br.from] * pf.v[br.from] * yb.gff +
                       pf.v[br.from] * pf.v[br.to] *
                           (yb.gft * std::cos(thft) + yb.bft * std::sin(thft));
    const double pto = pf.v[br.to] * pf.v[br.to] * yb.gtt +
                       pf.v[br.to] * pf.v[br.from] *
                           (yb.gtf * std::cos(thft) - yb.btf * std::sin(thft));
    const double loss = pfr + pto;
    CHECK(loss > -1e-12);  // series dissipation cannot be negative
    losses += loss;
  }
  CHECK(net == doctest::Approx(losses).epsilon(1e-8));
  CHECK(net > 0.0);
}

TEST_CASE("power flow reports the failing bus when it cannot converge") {
  grid::SystemModel model = two_bus(50.0, 10.0, 0.0, 0.1, 0.0);
  try {
    grid::power_flow(model);
    FAIL("expected NoConvergence");
  } catch (const NoConvergence& e) {
    CHECK(std::string(e.what()).find("l") != std::string::npos);
  }
}

TEST_CASE("a machine at zero electrical output aligns with its bus") {
  grid::SystemModel model;
  model.buses.push_back({"s", grid::BusKind::slack, 1.0, 0.0});
  model.buses.push_back({"g", grid::BusKind::pv, 1.0, 0.0});
  model.branches.push_back({"line", 0, 1, 0.0, 0.1, 0.0, 1.0});
  model.machines.push_back(basic_machine("G1", 0));
  model.machines.push_back(basic_machine("G2", 1));
  model.machines[1].p_ref = 0.0;
  model.build_layout();

  const grid::Equilibrium eq = grid::initialize_equilibrium(model);
  const auto& ix = model.mach_idx[1];
  CHECK(eq.x[ix.delta] == doctest::Approx(0.0).epsilon(1e-9));   // delta = theta
  CHECK(eq.x[ix.omega] == doctest::Approx(1.0).epsilon(1e-14));  // nominal speed
  CHECK(eq.x[ix.ed] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(eq.x[ix.eq] == doctest::Approx(1.0).epsilon(1e-9));  // e'_q = v at no load
}

TEST_CASE("equilibrium residuals vanish on the bundled models") {
  for (const char* name : {"/threebus.json", "/ninebus.json"}) {
    grid::SystemModel model = io::load_system(models_dir() + name);
    const grid::Equilibrium eq = grid::initialize_equilibrium(model);
    CHECK(grid::residual_f(model, eq.x, eq.y, eq.eta).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(grid::residual_g(model, eq.x, eq.y, eq.eta).lpNorm<Eigen::Infinity>() < 1e-8);
    // Machine speeds exactly nominal, noise states at their means.
    for (size_t i = 0; i < model.machines.size(); ++i)
      CHECK(eq.x[model.mach_idx[i].omega] == 1.0);
    const Vector means = grid::process_means(model);
    CHECK((eq.eta - means).norm() == 0.0);
  }
}

TEST_CASE("process means sit at the OU mu values") {
  grid::SystemModel model = io::load_system(models_dir() + "/threebus.json");
  const Vector means = grid::process_means(model);
  for (int k = 0; k < model.p; ++k)
    CHECK(means[k] == sde::stationary_mean(model.noise.processes[k].spec));
}

TEST_CASE("swing equation responds to a speed perturbation exactly") {
  grid::SystemModel model = io::load_system(models_dir() + "/threebus.json");
  const grid::Equilibrium eq = grid::initialize_equilibrium(model);
  const Vector f0 = grid::residual_f(model, eq.x, eq.y, eq.eta);

  const double d_omega = 1e-3;
  Vector x = eq.x;
  x[model.mach_idx[1].omega] += d_omega;  // G2, not the angle reference
  const Vector f1 = grid::residual_f(model, x, eq.y, eq.eta);
  const int delta_row = model.mach_idx[1].delta;
  CHECK(f1[delta_row] - f0[delta_row] ==
        doctest::Approx(model.omega_base * d_omega).epsilon(1e-12));
}

TEST_CASE("load rows follow the voltage exponent law") {
  grid::SystemModel model = two_bus(1.0, 0.0, 0.0, 0.1, 0.0);
  grid::Equilibrium eq = grid::initialize_equilibrium(model);
  const grid::Load& ld = model.loads[0];
  const int row = model.y_v + ld.bus;

  // Zero the branch-flow variables so the load bus balance row carries the
  // load draw alone.
  Vector y = eq.y;
  for (size_t b = 0; b < model.branches.size(); ++b)
    for (int k = 0; k < 4; ++k) y[model.y_br + 4 * static_cast<int>(b) + k] = 0.0;

  Vector eta = eq.eta;  // empty (no noise): draw at v = v_init is p0 exactly
  {
    Vector g = grid::residual_g(model, eq.x, y, eta);
    Vector yv = y;
    yv[model.y_v + ld.bus] = ld.v_init;
    g = grid::residual_g(model, eq.x, yv, eta);
    CHECK(g[row] == doctest::Approx(-ld.p0).epsilon(1e-12));

    // gamma = 2 at 90% voltage: the draw scales by 0.81.
    yv[model.y_v + ld.bus] = 0.9 * ld.v_init;
    g = grid::residual_g(model, eq.x, yv, eta);
    CHECK(g[row] == doctest::Approx(-0.81 * ld.p0).epsilon(1e-12));
  }
}

TEST_CASE("load row with a noise offset draws the shifted power") {
  grid::SystemModel model = two_bus(1.0, 0.0, 0.0, 0.1, 0.0);
  sde::NoiseProcess pr;
  pr.tag = "lp";
  pr.spec = sde::ou_from_sigma(0.5, 0.0, 0.05);
  model.noise.processes.push_back(pr);
  model.loads[0].noise_p = 0;
  model.build_layout();
  grid::Equilibrium eq = grid::initialize_equilibrium(model);

  Vector y = eq.y;
  for (size_t b = 0; b < model.branches.size(); ++b)
    for (int k = 0; k < 4; ++k) y[model.y_br + 4 * static_cast<int>(b) + k] = 0.0;
  y[model.y_v + model.loads[0].bus] = model.loads[0].v_init;

  Vector eta(1);
  eta << 0.01;
  const Vector g = grid::residual_g(model, eq.x, y, eta);
  CHECK(g[model.y_v + model.loads[0].bus] ==
        doctest::Approx(-(model.loads[0].p0 + 0.01)).epsilon(1e-12));
}

TEST_CASE("analytic Jacobians match finite differences on the bundled models") {
  for (const char* name : {"/threebus.json", "/ninebus.json"}) {
    grid::SystemModel model = io::load_system(models_dir() + name);
    const grid::Equilibrium eq = grid::initialize_equilibrium(model);

    // Check at the equilibrium and at a displaced point; several partials
    // vanish at the equilibrium itself.
    for (double bump : {0.0, 0.02}) {
      Vector x = eq.x, y = eq.y, eta = eq.eta;
      if (bump != 0.0) {
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += bump * std::sin(1.0 + i);
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += bump * std::cos(2.0 + i);
        for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] += 0.5 * bump;
      }
      const grid::Jacobians fd = grid::jacobians(model, x, y, eta);
      Matrix fx, fy, gx, gy;
      grid::analytic_fg_jacobians(model, x, y, eta, fx, fy, gx, gy);
      auto close = [](const Matrix& a, const Matrix& b) {
        return (a - b).cwiseAbs().maxCoeff() <
               1e-5 * std::max(1.0, b.cwiseAbs().maxCoeff());
      };
      CHECK(close(fx, fd.f_x));
      CHECK(close(fy, fd.f_y));
      CHECK(close(gx, fd.g_x));
      CHECK(close(gy, fd.g_y));
    }
  }
}

TEST_CASE("noise drift Jacobian is exactly diagonal in the rates") {
  grid::SystemModel model = io::load_system(models_dir() + "/ninebus.json");
  const grid::Equilibrium eq = grid::initialize_equilibrium(model);
  const grid::Jacobians jac = grid::jacobians(model, eq.x, eq.y, eq.eta);
  for (int i = 0; i < model.p; ++i) {
    const auto& ou = std::get<sde::OuSpec>(model.noise.processes[i].spec);
    CHECK(jac.a_eta(i, i) == -ou.alpha);
    for (int j = 0; j < model.p; ++j)
      if (i != j) CHECK(jac.a_eta(i, j) == 0.0);
  }
}

TEST_CASE("algebraic Jacobian is comfortably invertible at the equilibrium") {
  grid::SystemModel model = io::load_system(models_dir() + "/ninebus.json");
  const grid::Equilibrium eq = grid::initialize_equilibrium(model);
  const grid::Jacobians jac = grid::jacobians(model, eq.x, eq.y, eq.eta);
  CHECK(linalg::rcond_estimate(jac.g_y) > 1e-10);
}

TEST_CASE("load voltage sensitivity has the closed form") {
  grid::SystemModel model = two_bus(1.0, 0.0, 0.0, 0.1, 0.0);
  const grid::Equilibrium eq = grid::initialize_equilibrium(model);
  const grid::Load& ld = model.loads[0];
  const int row = model.y_v + ld.bus;
  const int col = model.y_v + ld.bus;
  const double v = eq.y[col];

  const double analytic =
      ld.gamma * ld.p0 * std::pow(v, ld.gamma - 1.0) / std::pow(ld.v_init, ld.gamma);

  const double eps = 1e-6 * v;
  Vector yp = eq.y, ym = eq.y;
  yp[col] += eps;
  ym[col] -= eps;
  const double fd = (grid::residual_g(model, eq.x, yp, eq.eta)[row] -
                     grid::residual_g(model, eq.x, ym, eq.eta)[row]) /
                    (2.0 * eps);
  // The balance row carries the load with a minus sign.
  CHECK(-fd == doctest::Approx(analytic).epsilon(1e-6));

  Matrix fx, fy, gx, gy;
  grid::analytic_fg_jacobians(model, eq.x, eq.y, eq.eta, fx, fy, gx, gy);
  CHECK(-gy(row, col) == doctest::Approx(analytic).epsilon(1e-10));
}

TEST_CASE("finite-difference residual columns agree with jacobians()") {
  grid::SystemModel model = io::load_system(models_dir() + "/threebus.json");
  const grid::Equilibrium eq = grid::initialize_equilibrium(model);
  const grid::Jacobians jac = grid::jacobians(model, eq.x, eq.y, eq.eta);

  // Independent step choice from the one jacobians() uses internally.
  const double eps = 3e-7;
  for (int j : {0, 4, 9}) {
    Vector xp = eq.x, xm = eq.x;
    xp[j] += eps;
    xm[j] -= eps;
    const Vector col = (grid::residual_f(model, xp, eq.y, eq.eta) -
                        grid::residual_f(model, xm, eq.y, eq.eta)) /
                       (2.0 * eps);
    for (int i = 0; i < model.n; ++i)
      CHECK(col[i] ==
            doctest::Approx(jac.f_x(i, j)).epsilon(1e-5).scale(
                std::max(1.0, std::abs(jac.f_x(i, j)))));
  }
}

TEST_CASE("a slack bus without a machine acts as an infinite bus") {
  grid::SystemModel model;
  model.buses.push_back({"inf", grid::BusKind::slack, 1.02, 0.0});
  model.buses.push_back({"g", grid::BusKind::pv, 1.01, 0.0});
  model.buses.push_back({"l", grid::BusKind::pq, 1.0, 0.0});
  model.branches.push_back({"l1", 0, 1, 0.01, 0.1, 0.0, 1.0});
  model.branches.push_back({"l2", 1, 2, 0.01, 0.12, 0.0, 1.0});
  model.machines.push_back(basic_machine("G2", 1));
  model.machines.back().p_ref = 0.4;
  grid::Load ld;
  ld.id = "L";
  ld.bus = 2;
  ld.p0 = 0.6;
  ld.q0 = 0.1;
  model.loads.push_back(ld);
  model.build_layout();

  CHECK(model.ref_machine == -1);
  CHECK(model.n == 6);  // all six states of G2, including its angle
  bool has_delta = false;
  for (const std::string& nm : model.state_names) has_delta |= nm == "delta(G2)";
  CHECK(has_delta);

  const grid::Equilibrium eq = grid::initialize_equilibrium(model);
  CHECK(grid::residual_f(model, eq.x, eq.y, eq.eta).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK(grid::residual_g(model, eq.x, eq.y, eq.eta).lpNorm<Eigen::Infinity>() < 1e-8);
  // The pinned bus holds its setpoints in the algebraic vector.
  CHECK(eq.y[model.y_v + 0] == doctest::Approx(1.02).epsilon(1e-12));
  CHECK(eq.y[model.y_th + 0] == doctest::Approx(0.0).epsilon(1e-12));
}
