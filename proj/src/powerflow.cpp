#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "stovar/gridmodel.hpp"
#include "stovar/linalg.hpp"

namespace stovar::grid {

namespace {

struct BusInjections {
  Vector p;
  Vector q;
};

/// Net scheduled injections with every load taken at its base power and every
/// noise process at its stationary mean.
BusInjections scheduled_injections(const SystemModel& model, const Vector& mu) {
  const int n_bus = static_cast<int>(model.buses.size());
  BusInjections s{Vector::Zero(n_bus), Vector::Zero(n_bus)};
  for (const Machine& mc : model.machines) {
    if (model.buses[mc.bus].kind == BusKind::pv) s.p[mc.bus] += mc.p_ref;
  }
  for (const WindPlant& w : model.winds) {
    const double speed = w.v_w0 + (w.noise_w >= 0 ? mu[w.noise_w] : 0.0);
    s.p[w.bus] += w.curve.value(speed);
    s.q[w.bus] += w.q_set;
  }
  for (const Load& ld : model.loads) {
    s.p[ld.bus] -= ld.p0 + (ld.noise_p >= 0 ? mu[ld.noise_p] : 0.0);
    s.q[ld.bus] -= ld.q0 + (ld.noise_q >= 0 ? mu[ld.noise_q] : 0.0);
  }
  return s;
}

void bus_admittance(const SystemModel& model, Matrix& G, Matrix& B) {
  const int n_bus = static_cast<int>(model.buses.size());
  G.setZero(n_bus, n_bus);
  B.setZero(n_bus, n_bus);
  for (size_t b = 0; b < model.branches.size(); ++b) {
    const Branch& br = model.branches[b];
    const SystemModel::BranchY& y = model.branch_y[b];
    G(br.from, br.from) += y.gff;
    B(br.from, br.from) += y.bff;
    G(br.from, br.to) += y.gft;
    B(br.from, br.to) += y.bft;
    G(br.to, br.from) += y.gtf;
    B(br.to, br.from) += y.btf;
    G(br.to, br.to) += y.gtt;
    B(br.to, br.to) += y.btt;
  }
}

void calculated_injections(const Matrix& G, const Matrix& B, const Vector& v,
                           const Vector& th, Vector& p, Vector& q) {
  const int n = static_cast<int>(v.size());
  p.setZero(n);
  q.setZero(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (G(i, j) == 0.0 && B(i, j) == 0.0) continue;
      const double cc = std::cos(th[i] - th[j]);
      const double ss = std::sin(th[i] - th[j]);
      p[i] += v[i] * v[j] * (G(i, j) * cc + B(i, j) * ss);
      q[i] += v[i] * v[j] * (G(i, j) * ss - B(i, j) * cc);
    }
  }
}

}  // namespace

PowerFlowResult power_flow(const SystemModel& model) {
  const int n_bus = static_cast<int>(model.buses.size());
  PowerFlowResult res;
  res.v.resize(n_bus);
  res.theta.resize(n_bus);
  res.p_inj.setZero(n_bus);
  res.q_inj.setZero(n_bus);
  res.iterations = 0;
  res.mismatch_inf = 0.0;
  if (n_bus == 0) return res;

  const Vector mu = process_means(model);
  const BusInjections spec = scheduled_injections(model, mu);
  Matrix G, B;
  bus_admittance(model, G, B);

  Vector v(n_bus), th(n_bus);
  std::vector<int> th_pos(n_bus, -1), v_pos(n_bus, -1);
  int n_unknown = 0;
  for (int i = 0; i < n_bus; ++i) {
    v[i] = model.buses[i].v0;
    th[i] = model.buses[i].theta0;
    if (model.buses[i].kind != BusKind::slack) th_pos[i] = n_unknown++;
  }
  for (int i = 0; i < n_bus; ++i)
    if (model.buses[i].kind == BusKind::pq) v_pos[i] = n_unknown++;

  Vector pc, qc;
  const int max_iter = 50;
  constexpr double tight_tol = 1e-11;
  for (int iter = 0; iter <= max_iter; ++iter) {
    calculated_injections(G, B, v, th, pc, qc);
    Vector mis(n_unknown);
    for (int i = 0; i < n_bus; ++i) {
      if (th_pos[i] >= 0) mis[th_pos[i]] = spec.p[i] - pc[i];
      if (v_pos[i] >= 0) mis[v_pos[i]] = spec.q[i] - qc[i];
    }
    res.iterations = iter;
    res.mismatch_inf = n_unknown > 0 ? mis.lpNorm<Eigen::Infinity>() : 0.0;
    if (res.mismatch_inf <= tight_tol || iter == max_iter) break;

    Matrix J = Matrix::Zero(n_unknown, n_unknown);
    for (int i = 0; i < n_bus; ++i) {
      for (int j = 0; j < n_bus; ++j) {
        const bool diag = i == j;
        if (!diag && G(i, j) == 0.0 && B(i, j) == 0.0) continue;
        const double cc = std::cos(th[i] - th[j]);
        const double ss = std::sin(th[i] - th[j]);
        if (th_pos[i] >= 0) {
          const int r = th_pos[i];
          if (th_pos[j] >= 0)
            J(r, th_pos[j]) += diag ? -qc[i] - B(i, i) * v[i] * v[i]
                                    : v[i] * v[j] * (G(i, j) * ss - B(i, j) * cc);
          if (v_pos[j] >= 0)
            J(r, v_pos[j]) += diag ? pc[i] / v[i] + G(i, i) * v[i]
                                   : v[i] * (G(i, j) * cc + B(i, j) * ss);
        }
        if (v_pos[i] >= 0) {
          const int r = v_pos[i];
          if (th_pos[j] >= 0)
            J(r, th_pos[j]) += diag ? pc[i] - G(i, i) * v[i] * v[i]
                                    : -v[i] * v[j] * (G(i, j) * cc + B(i, j) * ss);
          if (v_pos[j] >= 0)
            J(r, v_pos[j]) += diag ? qc[i] / v[i] - B(i, i) * v[i]
                                   : v[i] * (G(i, j) * ss - B(i, j) * cc);
        }
      }
    }

    const Vector du = linalg::lu_solve(J, mis);
    for (int i = 0; i < n_bus; ++i) {
      if (th_pos[i] >= 0) th[i] += du[th_pos[i]];
      if (v_pos[i] >= 0) v[i] += du[v_pos[i]];
    }
  }

  if (res.mismatch_inf > 1e-8) {
    calculated_injections(G, B, v, th, pc, qc);
    int worst = 0;
    double worst_val = 0.0;
    for (int i = 0; i < n_bus; ++i) {
      const double dp = th_pos[i] >= 0 ? std::abs(spec.p[i] - pc[i]) : 0.0;
      const double dq = v_pos[i] >= 0 ? std::abs(spec.q[i] - qc[i]) : 0.0;
      if (std::max(dp, dq) > worst_val) {
        worst_val = std::max(dp, dq);
        worst = i;
      }
    }
    throw NoConvergence("power flow did not converge in " + std::to_string(max_iter) +
                        " iterations; worst mismatch " + std::to_string(worst_val) +
                        " at bus '" + model.buses[worst].id + "'");
  }

  calculated_injections(G, B, v, th, res.p_inj, res.q_inj);
  res.mismatch.setZero(n_bus);
  for (int i = 0; i < n_bus; ++i) {
    const double dp = th_pos[i] >= 0 ? std::abs(spec.p[i] - res.p_inj[i]) : 0.0;
    const double dq = v_pos[i] >= 0 ? std::abs(spec.q[i] - res.q_inj[i]) : 0.0;
    res.mismatch[i] = std::max(dp, dq);
  }
  res.v = v;
  res.theta = th;
  return res;
}

namespace {

struct MachineStart {
  double delta, eq, ed, vf, tm, id, iq, pg, qg, vref, pref;
};

MachineStart init_machine(const Machine& mc, double v, double th, double pg, double qg) {
  const Complex V = std::polar(v, th);
  const Complex S(pg, qg);
  const Complex I = std::conj(S / V);
  const Complex E = V + Complex(0.0, mc.xq) * I;
  if (std::abs(E) < 1e-9)
    throw InitializationInfeasible("machine '" + mc.id +
                                   "': internal voltage magnitude is zero");
  MachineStart st;
  st.delta = std::arg(E);
  const Complex rot = std::polar(1.0, -(st.delta - M_PI / 2.0));
  const Complex Vdq = V * rot;
  const Complex Idq = I * rot;
  const double vd = Vdq.real(), vq = Vdq.imag();
  st.id = Idq.real();
  st.iq = Idq.imag();
  st.eq = vq + mc.xd_p * st.id;
  st.ed = vd - mc.xq_p * st.iq;
  st.vf = st.eq + (mc.xd - mc.xd_p) * st.id;
  if (st.vf <= 0.0)
    throw InitializationInfeasible("machine '" + mc.id +
                                   "': field voltage at the operating point is not positive");
  st.tm = st.ed * st.id + st.eq * st.iq + (mc.xq_p - mc.xd_p) * st.id * st.iq;
  st.pg = vd * st.id + vq * st.iq;
  st.qg = vq * st.id - vd * st.iq;
  st.vref = v + st.vf / mc.ka;
  st.pref = st.tm;
  return st;
}

}  // namespace

Equilibrium initialize_equilibrium(SystemModel& model) {
  Equilibrium eq;
  eq.eta = process_means(model);
  eq.pf = power_flow(model);

  for (Load& ld : model.loads) ld.v_init = eq.pf.v[ld.bus];

  const int n_bus = static_cast<int>(model.buses.size());
  Vector p_dev = Vector::Zero(n_bus);  // non-network injections already accounted
  Vector q_dev = Vector::Zero(n_bus);
  std::vector<double> wind_p(model.winds.size(), 0.0);
  for (size_t w = 0; w < model.winds.size(); ++w) {
    const WindPlant& wp = model.winds[w];
    const double speed = wp.v_w0 + (wp.noise_w >= 0 ? eq.eta[wp.noise_w] : 0.0);
    wind_p[w] = wp.curve.value(speed);
    p_dev[wp.bus] += wind_p[w];
    q_dev[wp.bus] += wp.q_set;
  }
  for (const Load& ld : model.loads) {
    p_dev[ld.bus] -= ld.p0 + (ld.noise_p >= 0 ? eq.eta[ld.noise_p] : 0.0);
    q_dev[ld.bus] -= ld.q0 + (ld.noise_q >= 0 ? eq.eta[ld.noise_q] : 0.0);
  }

  std::vector<MachineStart> starts;
  starts.reserve(model.machines.size());
  for (Machine& mc : model.machines) {
    const double pg = eq.pf.p_inj[mc.bus] - p_dev[mc.bus];
    const double qg = eq.pf.q_inj[mc.bus] - q_dev[mc.bus];
    starts.push_back(init_machine(mc, eq.pf.v[mc.bus], eq.pf.theta[mc.bus], pg, qg));
    mc.p_ref = starts.back().pref;
    mc.v_ref = starts.back().vref;
  }

  // Shift every angle so the reference machine's rotor sits at zero; with no
  // reference machine the slack bus is an infinite bus and angles stay put.
  const double shift = model.ref_machine >= 0 ? starts[model.ref_machine].delta : 0.0;
  Vector theta = eq.pf.theta.array() - shift;

  eq.x.setZero(model.n);
  eq.y.setZero(model.m);
  for (size_t i = 0; i < model.machines.size(); ++i) {
    const SystemModel::MachineIdx& ix = model.mach_idx[i];
    const MachineStart& st = starts[i];
    if (ix.delta >= 0) eq.x[ix.delta] = st.delta - shift;
    eq.x[ix.omega] = 1.0;
    eq.x[ix.eq] = st.eq;
    eq.x[ix.ed] = st.ed;
    eq.x[ix.vf] = st.vf;
    eq.x[ix.tm] = st.tm;
    const int yb = model.y_mach + 4 * static_cast<int>(i);
    eq.y[yb + 0] = st.id;
    eq.y[yb + 1] = st.iq;
    eq.y[yb + 2] = st.pg;
    eq.y[yb + 3] = st.qg;
  }
  for (size_t w = 0; w < model.winds.size(); ++w) {
    eq.x[model.wind_state[w]] = wind_p[w];
    eq.y[model.y_wind + static_cast<int>(w)] = wind_p[w];
  }
  eq.y.segment(model.y_v, n_bus) = eq.pf.v;
  eq.y.segment(model.y_th, n_bus) = theta;
  for (size_t b = 0; b < model.branches.size(); ++b) {
    const Branch& br = model.branches[b];
    const SystemModel::BranchY& yb = model.branch_y[b];
    const int r = model.y_br + 4 * static_cast<int>(b);
    const double vf = eq.pf.v[br.from];
    const double vt = eq.pf.v[br.to];
    const double thft = theta[br.from] - theta[br.to];
    const double cc = std::cos(thft);
    const double ss = std::sin(thft);
    eq.y[r + 0] = vf * vf * yb.gff + vf * vt * (yb.gft * cc + yb.bft * ss);
    eq.y[r + 1] = -vf * vf * yb.bff + vf * vt * (yb.gft * ss - yb.bft * cc);
    eq.y[r + 2] = vt * vt * yb.gtt + vt * vf * (yb.gtf * cc - yb.btf * ss);
    eq.y[r + 3] = -vt * vt * yb.btt + vt * vf * (-yb.gtf * ss - yb.btf * cc);
  }

  const double f_norm =
      model.n > 0 ? residual_f(model, eq.x, eq.y, eq.eta).lpNorm<Eigen::Infinity>() : 0.0;
  const double g_norm =
      model.m > 0 ? residual_g(model, eq.x, eq.y, eq.eta).lpNorm<Eigen::Infinity>() : 0.0;
  if (f_norm > 1e-8 || g_norm > 1e-8)
    throw Error("equilibrium initialization left residuals above tolerance (|f|=" +
                std::to_string(f_norm) + ", |g|=" + std::to_string(g_norm) + ")");
  return eq;
}

}  // namespace stovar::grid
