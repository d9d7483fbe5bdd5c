#include "stovar/gridmodel.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace stovar::grid {

double PowerCurve::value(double v) const {
  if (v < v_cut_in || v > v_cut_out) return 0.0;
  if (v >= v_rated) return p_rated;
  const double num = v * v * v - v_cut_in * v_cut_in * v_cut_in;
  const double den = v_rated * v_rated * v_rated - v_cut_in * v_cut_in * v_cut_in;
  return p_rated * num / den;
}

double PowerCurve::derivative(double v) const {
  if (v < v_cut_in || v >= v_rated) return 0.0;
  const double den = v_rated * v_rated * v_rated - v_cut_in * v_cut_in * v_cut_in;
  return 3.0 * p_rated * v * v / den;
}

namespace {

/// Union-find connectivity over the branch list.
bool connected(int n_bus, const std::vector<Branch>& branches) {
  if (n_bus <= 1) return true;
  std::vector<int> parent(n_bus);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const Branch& br : branches) parent[find(br.from)] = find(br.to);
  const int root = find(0);
  for (int i = 1; i < n_bus; ++i)
    if (find(i) != root) return false;
  return true;
}

}  // namespace

void SystemModel::build_layout() {
  require(base_mva > 0.0, "SystemModel: base_mva must be > 0");
  require(f_hz > 0.0, "SystemModel: f_hz must be > 0");
  omega_base = 2.0 * M_PI * f_hz;

  const int n_bus = static_cast<int>(buses.size());
  std::set<std::string> seen_ids;
  int slack = -1;
  for (int i = 0; i < n_bus; ++i) {
    require(!buses[i].id.empty(), "SystemModel: bus id must be non-empty");
    require(seen_ids.insert(buses[i].id).second,
            "SystemModel: duplicate bus id '" + buses[i].id + "'");
    require(buses[i].v0 > 0.0, "SystemModel: bus v0 must be > 0");
    if (buses[i].kind == BusKind::slack) {
      if (slack >= 0)
        throw InvalidParameter("SystemModel: more than one slack bus ('" +
                               buses[slack].id + "' and '" + buses[i].id + "')");
      slack = i;
    }
  }
  if (n_bus > 0) {
    require(slack >= 0, "SystemModel: a non-empty network needs exactly one slack bus");
    require(connected(n_bus, branches), "SystemModel: network graph is not connected");
  }

  branch_y.clear();
  branch_y.reserve(branches.size());
  for (const Branch& br : branches) {
    require(br.from >= 0 && br.from < n_bus && br.to >= 0 && br.to < n_bus,
            "SystemModel: branch endpoint out of range");
    require(br.from != br.to, "SystemModel: branch endpoints must differ");
    require(br.x != 0.0, "SystemModel: branch reactance must be nonzero");
    require(br.tap > 0.0, "SystemModel: branch tap must be > 0");
    const double den = br.r * br.r + br.x * br.x;
    const double gs = br.r / den;
    const double bs = -br.x / den;
    BranchY yb;
    yb.gff = gs / (br.tap * br.tap);
    yb.bff = (bs + 0.5 * br.b_sh) / (br.tap * br.tap);
    yb.gft = -gs / br.tap;
    yb.bft = -bs / br.tap;
    yb.gtf = -gs / br.tap;
    yb.btf = -bs / br.tap;
    yb.gtt = gs;
    yb.btt = bs + 0.5 * br.b_sh;
    branch_y.push_back(yb);
  }

  p = noise.size();
  std::set<std::string> tags;
  for (const sde::NoiseProcess& pr : noise.processes) {
    require(!pr.tag.empty(), "SystemModel: noise tag must be non-empty");
    require(tags.insert(pr.tag).second,
            "SystemModel: duplicate noise tag '" + pr.tag + "'");
  }

  ref_machine = -1;
  std::set<int> machine_buses;
  for (int i = 0; i < static_cast<int>(machines.size()); ++i) {
    const Machine& mc = machines[i];
    require(mc.bus >= 0 && mc.bus < n_bus, "SystemModel: machine bus out of range");
    require(machine_buses.insert(mc.bus).second,
            "SystemModel: at most one machine per bus");
    require(buses[mc.bus].kind != BusKind::pq,
            "SystemModel: machine '" + mc.id + "' must sit at a slack or PV bus");
    require(mc.m > 0.0 && mc.d >= 0.0, "SystemModel: machine inertia/damping invalid");
    require(mc.xd_p > 0.0 && mc.xd >= mc.xd_p, "SystemModel: machine d-axis reactances invalid");
    require(mc.xq_p > 0.0 && mc.xq >= mc.xq_p, "SystemModel: machine q-axis reactances invalid");
    require(mc.td0_p > 0.0 && mc.tq0_p > 0.0, "SystemModel: machine time constants invalid");
    require(mc.ka > 0.0 && mc.ta > 0.0, "SystemModel: AVR parameters invalid");
    require(mc.r_droop > 0.0 && mc.tg > 0.0, "SystemModel: governor parameters invalid");
    if (buses[mc.bus].kind == BusKind::slack) ref_machine = i;
  }

  for (const Load& ld : loads) {
    require(ld.bus >= 0 && ld.bus < n_bus, "SystemModel: load bus out of range");
    require(ld.gamma >= 0.0, "SystemModel: load exponent must be >= 0");
    require(ld.noise_p < p && ld.noise_q < p, "SystemModel: load noise index out of range");
  }
  for (const WindPlant& w : winds) {
    require(w.bus >= 0 && w.bus < n_bus, "SystemModel: wind plant bus out of range");
    require(w.v_w0 >= 0.0, "SystemModel: wind base speed must be >= 0");
    require(w.t_f > 0.0, "SystemModel: wind filter time constant must be > 0");
    require(w.noise_w < p, "SystemModel: wind noise index out of range");
    require(w.curve.p_rated > 0.0 && w.curve.v_cut_in >= 0.0 &&
                w.curve.v_rated > w.curve.v_cut_in &&
                w.curve.v_cut_out > w.curve.v_rated,
            "SystemModel: wind power curve breakpoints invalid");
  }

  // ---- state layout ----
  state_names.clear();
  state_classes.clear();
  mach_idx.assign(machines.size(), MachineIdx{});
  auto push_state = [&](const std::string& cls, const std::string& owner) {
    state_names.push_back(cls + "(" + owner + ")");
    state_classes.push_back(cls);
    return static_cast<int>(state_names.size()) - 1;
  };
  for (int i = 0; i < static_cast<int>(machines.size()); ++i) {
    const std::string& id = machines[i].id;
    if (i != ref_machine) mach_idx[i].delta = push_state("delta", id);
    mach_idx[i].omega = push_state("omega", id);
    mach_idx[i].eq = push_state("eq_prime", id);
    mach_idx[i].ed = push_state("ed_prime", id);
    mach_idx[i].vf = push_state("efd", id);
    mach_idx[i].tm = push_state("tau_m", id);
  }
  wind_state.clear();
  for (const WindPlant& w : winds) wind_state.push_back(push_state("p_w", w.id));
  n = static_cast<int>(state_names.size());

  // ---- algebraic layout ----
  algebraic_names.clear();
  algebraic_classes.clear();
  auto push_alg = [&](const std::string& cls, const std::string& owner) {
    algebraic_names.push_back(cls + "(" + owner + ")");
    algebraic_classes.push_back(cls);
  };
  y_v = 0;
  for (const Bus& b : buses) push_alg("v", b.id);
  y_th = static_cast<int>(algebraic_names.size());
  for (const Bus& b : buses) push_alg("theta", b.id);
  y_mach = static_cast<int>(algebraic_names.size());
  for (const Machine& mc : machines) {
    push_alg("i_d", mc.id);
    push_alg("i_q", mc.id);
    push_alg("p_g", mc.id);
    push_alg("q_g", mc.id);
  }
  y_wind = static_cast<int>(algebraic_names.size());
  for (const WindPlant& w : winds) push_alg("p_e", w.id);
  y_br = static_cast<int>(algebraic_names.size());
  for (const Branch& br : branches) {
    push_alg("p_fr", br.id);
    push_alg("q_fr", br.id);
    push_alg("p_to", br.id);
    push_alg("q_to", br.id);
  }
  m = static_cast<int>(algebraic_names.size());
}

Vector process_means(const SystemModel& model) {
  Vector mu(model.p);
  for (int k = 0; k < model.p; ++k)
    mu[k] = sde::stationary_mean(model.noise.processes[k].spec);
  return mu;
}

Matrix diffusion_at(const SystemModel& model, const VectorRef& eta) {
  require(eta.size() == model.p, "diffusion_at: eta size mismatch");
  Matrix B = Matrix::Zero(model.p, model.p);
  for (int k = 0; k < model.p; ++k)
    B(k, k) = sde::diffusion(model.noise.processes[k].spec, eta[k]);
  return B;
}

namespace {

inline double eta_or_zero(const VectorRef& eta, int idx) {
  return idx >= 0 ? eta[idx] : 0.0;
}

}  // namespace

void residual_f(const SystemModel& model, const VectorRef& x, const VectorRef& y,
                const VectorRef& eta, Vector& out) {
  out.resize(model.n);
  const int ref = model.ref_machine;
  const double omega_ref =
      ref >= 0 ? x[model.mach_idx[ref].omega] : 1.0;

  for (size_t i = 0; i < model.machines.size(); ++i) {
    const Machine& mc = model.machines[i];
    const SystemModel::MachineIdx& ix = model.mach_idx[i];
    const double omega = x[ix.omega];
    const double eq = x[ix.eq];
    const double ed = x[ix.ed];
    const double vf = x[ix.vf];
    const double tm = x[ix.tm];
    const double id = y[model.y_mach + 4 * static_cast<int>(i) + 0];
    const double iq = y[model.y_mach + 4 * static_cast<int>(i) + 1];
    const double v = y[model.y_v + mc.bus];

    if (ix.delta >= 0) out[ix.delta] = model.omega_base * (omega - omega_ref);
    const double te = ed * id + eq * iq + (mc.xq_p - mc.xd_p) * id * iq;
    out[ix.omega] = (tm - te - mc.d * (omega - 1.0)) / mc.m;
    out[ix.eq] = (-eq - (mc.xd - mc.xd_p) * id + vf) / mc.td0_p;
    out[ix.ed] = (-ed + (mc.xq - mc.xq_p) * iq) / mc.tq0_p;
    out[ix.vf] = (mc.ka * (mc.v_ref - v) - vf) / mc.ta;
    out[ix.tm] = (mc.p_ref + (1.0 - omega) / mc.r_droop - tm) / mc.tg;
  }

  for (size_t w = 0; w < model.winds.size(); ++w) {
    const WindPlant& wp = model.winds[w];
    const double speed = wp.v_w0 + eta_or_zero(eta, wp.noise_w);
    out[model.wind_state[w]] = (wp.curve.value(speed) - x[model.wind_state[w]]) / wp.t_f;
  }
}

void residual_g(const SystemModel& model, const VectorRef& x, const VectorRef& y,
                const VectorRef& eta, Vector& out) {
  out.setZero(model.m);
  const int n_bus = static_cast<int>(model.buses.size());

  // Bus balance rows start as injections minus consumption; flows subtract in
  // the branch pass below. A machine-less slack bus pins theta and v instead.
  int inf_bus = -1;
  if (n_bus > 0 && model.ref_machine < 0) {
    for (int i = 0; i < n_bus; ++i)
      if (model.buses[i].kind == BusKind::slack) inf_bus = i;
  }

  for (size_t i = 0; i < model.machines.size(); ++i) {
    const Machine& mc = model.machines[i];
    const SystemModel::MachineIdx& ix = model.mach_idx[i];
    const int yb = model.y_mach + 4 * static_cast<int>(i);
    const double delta = ix.delta >= 0 ? x[ix.delta] : 0.0;
    const double id = y[yb + 0];
    const double iq = y[yb + 1];
    const double pg = y[yb + 2];
    const double qg = y[yb + 3];
    const double v = y[model.y_v + mc.bus];
    const double th = y[model.y_th + mc.bus];
    const double s = std::sin(delta - th);
    const double c = std::cos(delta - th);
    const double vd = v * s;
    const double vq = v * c;

    out[yb + 0] = x[ix.ed] + mc.xq_p * iq - vd;
    out[yb + 1] = x[ix.eq] - mc.xd_p * id - vq;
    out[yb + 2] = pg - (vd * id + vq * iq);
    out[yb + 3] = qg - (vq * id - vd * iq);

    out[model.y_v + mc.bus] += pg;   // P balance row of the bus
    out[model.y_th + mc.bus] += qg;  // Q balance row of the bus
  }

  for (size_t w = 0; w < model.winds.size(); ++w) {
    const WindPlant& wp = model.winds[w];
    const double pe = y[model.y_wind + static_cast<int>(w)];
    out[model.y_wind + static_cast<int>(w)] = pe - x[model.wind_state[w]];
    out[model.y_v + wp.bus] += pe;
    out[model.y_th + wp.bus] += wp.q_set;
  }

  for (const Load& ld : model.loads) {
    const double v = y[model.y_v + ld.bus];
    const double ratio = std::pow(v / ld.v_init, ld.gamma);
    out[model.y_v + ld.bus] -= (ld.p0 + eta_or_zero(eta, ld.noise_p)) * ratio;
    out[model.y_th + ld.bus] -= (ld.q0 + eta_or_zero(eta, ld.noise_q)) * ratio;
  }

  for (size_t b = 0; b < model.branches.size(); ++b) {
    const Branch& br = model.branches[b];
    const SystemModel::BranchY& yb = model.branch_y[b];
    const int r = model.y_br + 4 * static_cast<int>(b);
    const double vf = y[model.y_v + br.from];
    const double vt = y[model.y_v + br.to];
    const double thft = y[model.y_th + br.from] - y[model.y_th + br.to];
    const double cc = std::cos(thft);
    const double ss = std::sin(thft);

    const double pfr = vf * vf * yb.gff + vf * vt * (yb.gft * cc + yb.bft * ss);
    const double qfr = -vf * vf * yb.bff + vf * vt * (yb.gft * ss - yb.bft * cc);
    const double pto = vt * vt * yb.gtt + vt * vf * (yb.gtf * cc - yb.btf * ss);
    const double qto = -vt * vt * yb.btt + vt * vf * (-yb.gtf * ss - yb.btf * cc);

    out[r + 0] = y[r + 0] - pfr;
    out[r + 1] = y[r + 1] - qfr;
    out[r + 2] = y[r + 2] - pto;
    out[r + 3] = y[r + 3] - qto;

    out[model.y_v + br.from] -= y[r + 0];
    out[model.y_th + br.from] -= y[r + 1];
    out[model.y_v + br.to] -= y[r + 2];
    out[model.y_th + br.to] -= y[r + 3];
  }

  if (inf_bus >= 0) {
    out[model.y_v + inf_bus] = y[model.y_th + inf_bus] - model.buses[inf_bus].theta0;
    out[model.y_th + inf_bus] = y[model.y_v + inf_bus] - model.buses[inf_bus].v0;
  }
}

Vector residual_f(const SystemModel& model, const VectorRef& x, const VectorRef& y,
                  const VectorRef& eta) {
  Vector out;
  residual_f(model, x, y, eta, out);
  return out;
}

Vector residual_g(const SystemModel& model, const VectorRef& x, const VectorRef& y,
                  const VectorRef& eta) {
  Vector out;
  residual_g(model, x, y, eta, out);
  return out;
}

void analytic_fg_jacobians(const SystemModel& model, const VectorRef& x,
                           const VectorRef& y, const VectorRef& eta, Matrix& f_x,
                           Matrix& f_y, Matrix& g_x, Matrix& g_y) {
  f_x.setZero(model.n, model.n);
  f_y.setZero(model.n, model.m);
  g_x.setZero(model.m, model.n);
  g_y.setZero(model.m, model.m);
  const int ref = model.ref_machine;

  for (size_t i = 0; i < model.machines.size(); ++i) {
    const Machine& mc = model.machines[i];
    const SystemModel::MachineIdx& ix = model.mach_idx[i];
    const int yb = model.y_mach + 4 * static_cast<int>(i);
    const int yv = model.y_v + mc.bus;
    const int yth = model.y_th + mc.bus;
    const double delta = ix.delta >= 0 ? x[ix.delta] : 0.0;
    const double id = y[yb + 0];
    const double iq = y[yb + 1];
    const double eq = x[ix.eq];
    const double ed = x[ix.ed];
    const double v = y[yv];
    const double s = std::sin(delta - y[yth]);
    const double c = std::cos(delta - y[yth]);
    const double vd = v * s;
    const double vq = v * c;

    // f rows
    if (ix.delta >= 0) {
      f_x(ix.delta, ix.omega) += model.omega_base;
      if (ref >= 0) f_x(ix.delta, model.mach_idx[ref].omega) -= model.omega_base;
    }
    f_x(ix.omega, ix.tm) += 1.0 / mc.m;
    f_x(ix.omega, ix.omega) -= mc.d / mc.m;
    f_x(ix.omega, ix.ed) -= id / mc.m;
    f_x(ix.omega, ix.eq) -= iq / mc.m;
    f_y(ix.omega, yb + 0) -= (ed + (mc.xq_p - mc.xd_p) * iq) / mc.m;
    f_y(ix.omega, yb + 1) -= (eq + (mc.xq_p - mc.xd_p) * id) / mc.m;
    f_x(ix.eq, ix.eq) -= 1.0 / mc.td0_p;
    f_y(ix.eq, yb + 0) -= (mc.xd - mc.xd_p) / mc.td0_p;
    f_x(ix.eq, ix.vf) += 1.0 / mc.td0_p;
    f_x(ix.ed, ix.ed) -= 1.0 / mc.tq0_p;
    f_y(ix.ed, yb + 1) += (mc.xq - mc.xq_p) / mc.tq0_p;
    f_x(ix.vf, ix.vf) -= 1.0 / mc.ta;
    f_y(ix.vf, yv) -= mc.ka / mc.ta;
    f_x(ix.tm, ix.tm) -= 1.0 / mc.tg;
    f_x(ix.tm, ix.omega) -= 1.0 / (mc.r_droop * mc.tg);

    // stator rows
    g_x(yb + 0, ix.ed) += 1.0;
    g_y(yb + 0, yb + 1) += mc.xq_p;
    g_y(yb + 0, yv) -= s;
    g_y(yb + 0, yth) += vq;
    if (ix.delta >= 0) g_x(yb + 0, ix.delta) -= vq;
    g_x(yb + 1, ix.eq) += 1.0;
    g_y(yb + 1, yb + 0) -= mc.xd_p;
    g_y(yb + 1, yv) -= c;
    g_y(yb + 1, yth) -= vd;
    if (ix.delta >= 0) g_x(yb + 1, ix.delta) += vd;

    // injection definition rows
    const double cross = vq * id - vd * iq;
    const double along = vd * id + vq * iq;
    g_y(yb + 2, yb + 2) += 1.0;
    g_y(yb + 2, yb + 0) -= vd;
    g_y(yb + 2, yb + 1) -= vq;
    g_y(yb + 2, yv) -= s * id + c * iq;
    g_y(yb + 2, yth) += cross;
    if (ix.delta >= 0) g_x(yb + 2, ix.delta) -= cross;
    g_y(yb + 3, yb + 3) += 1.0;
    g_y(yb + 3, yb + 0) -= vq;
    g_y(yb + 3, yb + 1) += vd;
    g_y(yb + 3, yv) -= c * id - s * iq;
    g_y(yb + 3, yth) -= along;
    if (ix.delta >= 0) g_x(yb + 3, ix.delta) += along;

    // balance rows
    g_y(model.y_v + mc.bus, yb + 2) += 1.0;
    g_y(model.y_th + mc.bus, yb + 3) += 1.0;
  }

  for (size_t w = 0; w < model.winds.size(); ++w) {
    const WindPlant& wp = model.winds[w];
    const int row = model.y_wind + static_cast<int>(w);
    g_y(row, row) += 1.0;
    g_x(row, model.wind_state[w]) -= 1.0;
    g_y(model.y_v + wp.bus, row) += 1.0;
    f_x(model.wind_state[w], model.wind_state[w]) -= 1.0 / wp.t_f;
  }

  for (const Load& ld : model.loads) {
    const int yv = model.y_v + ld.bus;
    const double v = y[yv];
    const double ratio = std::pow(v / ld.v_init, ld.gamma);
    const double dp = ld.gamma * (ld.p0 + eta_or_zero(eta, ld.noise_p)) * ratio / v;
    const double dq = ld.gamma * (ld.q0 + eta_or_zero(eta, ld.noise_q)) * ratio / v;
    g_y(model.y_v + ld.bus, yv) -= dp;
    g_y(model.y_th + ld.bus, yv) -= dq;
  }

  for (size_t b = 0; b < model.branches.size(); ++b) {
    const Branch& br = model.branches[b];
    const SystemModel::BranchY& yb = model.branch_y[b];
    const int r = model.y_br + 4 * static_cast<int>(b);
    const int yvf = model.y_v + br.from;
    const int yvt = model.y_v + br.to;
    const int ythf = model.y_th + br.from;
    const int ytht = model.y_th + br.to;
    const double vf = y[yvf];
    const double vt = y[yvt];
    const double thft = y[ythf] - y[ytht];
    const double cc = std::cos(thft);
    const double ss = std::sin(thft);

    // p_fr row
    g_y(r + 0, r + 0) += 1.0;
    g_y(r + 0, yvf) -= 2.0 * vf * yb.gff + vt * (yb.gft * cc + yb.bft * ss);
    g_y(r + 0, yvt) -= vf * (yb.gft * cc + yb.bft * ss);
    g_y(r + 0, ythf) -= vf * vt * (-yb.gft * ss + yb.bft * cc);
    g_y(r + 0, ytht) += vf * vt * (-yb.gft * ss + yb.bft * cc);
    // q_fr row
    g_y(r + 1, r + 1) += 1.0;
    g_y(r + 1, yvf) -= -2.0 * vf * yb.bff + vt * (yb.gft * ss - yb.bft * cc);
    g_y(r + 1, yvt) -= vf * (yb.gft * ss - yb.bft * cc);
    g_y(r + 1, ythf) -= vf * vt * (yb.gft * cc + yb.bft * ss);
    g_y(r + 1, ytht) += vf * vt * (yb.gft * cc + yb.bft * ss);
    // p_to row (cos(th_t - th_f) = cc, sin(th_t - th_f) = -ss)
    g_y(r + 2, r + 2) += 1.0;
    g_y(r + 2, yvt) -= 2.0 * vt * yb.gtt + vf * (yb.gtf * cc - yb.btf * ss);
    g_y(r + 2, yvf) -= vt * (yb.gtf * cc - yb.btf * ss);
    g_y(r + 2, ytht) -= vt * vf * (yb.gtf * ss + yb.btf * cc);
    g_y(r + 2, ythf) += vt * vf * (yb.gtf * ss + yb.btf * cc);
    // q_to row
    g_y(r + 3, r + 3) += 1.0;
    g_y(r + 3, yvt) -= -2.0 * vt * yb.btt + vf * (-yb.gtf * ss - yb.btf * cc);
    g_y(r + 3, yvf) -= vt * (-yb.gtf * ss - yb.btf * cc);
    g_y(r + 3, ythf) -= vt * vf * (-yb.gtf * cc + yb.btf * ss);
    g_y(r + 3, ytht) += vt * vf * (-yb.gtf * cc + yb.btf * ss);

    // balance rows
    g_y(model.y_v + br.from, r + 0) -= 1.0;
    g_y(model.y_th + br.from, r + 1) -= 1.0;
    g_y(model.y_v + br.to, r + 2) -= 1.0;
    g_y(model.y_th + br.to, r + 3) -= 1.0;
  }

  // A machine-less slack bus overwrites its balance rows with v/theta pins.
  if (!model.buses.empty() && model.ref_machine < 0) {
    for (int i = 0; i < static_cast<int>(model.buses.size()); ++i) {
      if (model.buses[i].kind != BusKind::slack) continue;
      g_x.row(model.y_v + i).setZero();
      g_y.row(model.y_v + i).setZero();
      g_x.row(model.y_th + i).setZero();
      g_y.row(model.y_th + i).setZero();
      g_y(model.y_v + i, model.y_th + i) = 1.0;
      g_y(model.y_th + i, model.y_v + i) = 1.0;
    }
  }
}

namespace {

/// Central difference of a residual with respect to one coordinate.
template <typename Eval>
void fd_columns(const Vector& base_point, Eval eval, double step_scale, Matrix& out) {
  Vector v = base_point;
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    const double vj = v[j];
    double h = step_scale * root_eps * std::max(1.0, std::abs(vj));
    volatile double bump = vj + h;
    h = bump - vj;  // exactly representable step
    v[j] = vj + h;
    const Vector plus = eval(v);
    v[j] = vj - h;
    const Vector minus = eval(v);
    v[j] = vj;
    out.col(j) = (plus - minus) / (2.0 * h);
  }
}

}  // namespace

Jacobians jacobians(const SystemModel& model, const VectorRef& x, const VectorRef& y,
                    const VectorRef& eta, double step_scale) {
  require(x.size() == model.n && y.size() == model.m && eta.size() == model.p,
          "jacobians: point size mismatch");
  require(step_scale > 0.0, "jacobians: step_scale must be > 0");

  Jacobians J;
  J.f_x.resize(model.n, model.n);
  J.f_y.resize(model.n, model.m);
  J.f_eta.resize(model.n, model.p);
  J.g_x.resize(model.m, model.n);
  J.g_y.resize(model.m, model.m);
  J.g_eta.resize(model.m, model.p);

  const Vector xv = x, yv = y, ev = eta;
  fd_columns(xv, [&](const Vector& q) { return residual_f(model, q, yv, ev); },
             step_scale, J.f_x);
  fd_columns(yv, [&](const Vector& q) { return residual_f(model, xv, q, ev); },
             step_scale, J.f_y);
  fd_columns(ev, [&](const Vector& q) { return residual_f(model, xv, yv, q); },
             step_scale, J.f_eta);
  fd_columns(xv, [&](const Vector& q) { return residual_g(model, q, yv, ev); },
             step_scale, J.g_x);
  fd_columns(yv, [&](const Vector& q) { return residual_g(model, xv, q, ev); },
             step_scale, J.g_y);
  fd_columns(ev, [&](const Vector& q) { return residual_g(model, xv, yv, q); },
             step_scale, J.g_eta);

  J.a_eta = Matrix::Zero(model.p, model.p);
  for (int k = 0; k < model.p; ++k) {
    const sde::ProcessSpec& spec = model.noise.processes[k].spec;
    if (const auto* ou = std::get_if<sde::OuSpec>(&spec))
      J.a_eta(k, k) = -ou->alpha;
    else
      J.a_eta(k, k) = -std::get<sde::WeibullSpec>(spec).alpha_w;
  }
  return J;
}

}  // namespace stovar::grid
