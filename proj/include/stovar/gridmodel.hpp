#pragma once

#include "stovar/stochastic.hpp"
#include "stovar/types.hpp"

namespace stovar::grid {

enum class BusKind { slack, pv, pq };

struct Bus {
  std::string id;
  BusKind kind = BusKind::pq;
  double v0 = 1.0;      // setpoint (slack, PV) or start value (PQ) [pu]
  double theta0 = 0.0;  // slack angle [rad]; start value elsewhere
};

struct Branch {
  std::string id;
  int from = -1;
  int to = -1;
  double r = 0.0;    // series resistance [pu]
  double x = 0.0;    // series reactance [pu], != 0
  double b_sh = 0.0; // total charging susceptance [pu]
  double tap = 1.0;  // off-nominal ratio on the from side
};

/// Two-axis synchronous machine with a first-order AVR and a droop governor
/// behind a first-order lag. omega is in pu of synchronous speed.
struct Machine {
  std::string id;
  int bus = -1;
  double m = 0.0;       // inertia constant M = 2H [s]
  double d = 0.0;       // damping torque coefficient [pu/pu]
  double xd = 0.0, xq = 0.0, xd_p = 0.0, xq_p = 0.0;
  double td0_p = 0.0, tq0_p = 0.0;   // open-circuit transient time constants [s]
  double ka = 0.0, ta = 0.0;         // AVR gain / time constant
  double r_droop = 0.0, tg = 0.0;    // governor droop / lag time constant
  double p_ref = 0.0;  // dispatch; the slack machine's value is set at init
  double v_ref = 0.0;  // derived at init from the power-flow voltage
};

/// Voltage-dependent load with stochastic active/reactive offsets:
///   p = (p0 + eta_p) (v / v_init)^gamma,  q = (q0 + eta_q) (v / v_init)^gamma
struct Load {
  std::string id;
  int bus = -1;
  double p0 = 0.0, q0 = 0.0;
  double gamma = 2.0;
  int noise_p = -1;  // index into the noise bank; -1 = deterministic
  int noise_q = -1;
  double v_init = 1.0;  // power-flow voltage at the bus; set at init
};

/// Cut-in / cubic / rated / cut-out steady-state power curve.
struct PowerCurve {
  double v_cut_in = 0.0;
  double v_rated = 0.0;
  double v_cut_out = 0.0;
  double p_rated = 0.0;

  double value(double v) const;
  double derivative(double v) const;
};

/// Wind plant: the curve output at the fluctuating wind speed feeds a
/// first-order filter whose state is the injected active power; reactive
/// injection is held at q_set.
struct WindPlant {
  std::string id;
  int bus = -1;
  double v_w0 = 0.0;  // base wind speed [m/s]
  int noise_w = -1;   // index into the noise bank
  PowerCurve curve;
  double t_f = 1.0;   // injection filter time constant [s]
  double q_set = 0.0;
};

struct PowerFlowResult {
  Vector v;          // bus voltage magnitudes [pu]
  Vector theta;      // bus angles [rad], absolute (slack at theta0)
  Vector p_inj;      // calculated net active injections
  Vector q_inj;      // calculated net reactive injections
  Vector mismatch;   // per-bus worst equation mismatch at the solution
  int iterations = 0;
  double mismatch_inf = 0.0;
};

struct Equilibrium {
  Vector x;    // state vector
  Vector y;    // algebraic vector
  Vector eta;  // noise states at their stationary means
  PowerFlowResult pf;
};

/// Jacobians of the model at a point. f_x, f_y, f_eta and g_x, g_y, g_eta are
/// produced by central finite differences; a_eta is diagonal with the drift
/// rates -alpha_k (exact, the drifts are linear in eta).
struct Jacobians {
  Matrix f_x, f_y, f_eta;
  Matrix g_x, g_y, g_eta;
  Matrix a_eta;
};

/// Complete model: devices plus the frozen variable layout.
///
/// State ordering: per machine [delta, omega, eq_p, ed_p, efd, tau_m] in file
/// order (the reference machine, the one at the slack bus, omits delta: all
/// angles are measured in its rotor frame, which removes the uniform
/// angle-shift symmetry that would otherwise put an exact zero eigenvalue in
/// the reduced state matrix), then one filtered power state per wind plant.
/// Algebraic ordering: v (all buses), theta (all buses), per machine
/// [i_d, i_q, p_g, q_g], per wind plant p_e, per branch
/// [p_fr, q_fr, p_to, q_to]. A slack bus without a machine is treated as an
/// infinite bus: its balance rows pin v and theta instead.
struct SystemModel {
  double base_mva = 100.0;
  double f_hz = 60.0;
  double omega_base = 0.0;  // 2 pi f [rad/s]

  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Machine> machines;
  std::vector<Load> loads;
  std::vector<WindPlant> winds;
  sde::NoiseBank noise;

  // ---- layout, filled by build_layout() ----
  int n = 0, m = 0, p = 0;
  int ref_machine = -1;  // machine at the slack bus, -1 = infinite bus model

  struct MachineIdx {
    int delta = -1;  // -1 for the reference machine
    int omega = -1, eq = -1, ed = -1, vf = -1, tm = -1;
  };
  std::vector<MachineIdx> mach_idx;
  std::vector<int> wind_state;  // state index of each plant's filtered power

  int y_v = 0, y_th = 0, y_mach = 0, y_wind = 0, y_br = 0;  // block offsets

  std::vector<std::string> state_names, state_classes;
  std::vector<std::string> algebraic_names, algebraic_classes;

  struct BranchY {
    double gff, bff, gft, bft, gtf, btf, gtt, btt;
  };
  std::vector<BranchY> branch_y;

  /// Validate the model and freeze the variable layout. Must be called once
  /// after the device lists are complete and before any evaluation.
  void build_layout();

  int state_size() const { return n; }
  int algebraic_size() const { return m; }
  int process_count() const { return p; }
};

/// Newton power flow on the static network. Loads enter at p0 + mean(eta),
/// wind plants at curve(v_w0 + mean(eta_w)) and q_set. Converges to an
/// infinity-norm mismatch below 1e-8 pu (iterates to 1e-11) within 50
/// iterations or throws NoConvergence naming the worst bus.
PowerFlowResult power_flow(const SystemModel& model);

/// Solve the power flow, initialize every machine and wind plant at exact
/// equilibrium, derive AVR/governor setpoints (written into `model`), and
/// re-reference all angles to the reference machine's rotor. Verifies
/// ||f||_inf < 1e-8 and ||g||_inf < 1e-8 at the result.
Equilibrium initialize_equilibrium(SystemModel& model);

/// Dynamic residuals x_dot = f(x, y, eta) and 0 = g(x, y, eta).
void residual_f(const SystemModel& model, const VectorRef& x, const VectorRef& y,
                const VectorRef& eta, Vector& out);
void residual_g(const SystemModel& model, const VectorRef& x, const VectorRef& y,
                const VectorRef& eta, Vector& out);
Vector residual_f(const SystemModel& model, const VectorRef& x, const VectorRef& y,
                  const VectorRef& eta);
Vector residual_g(const SystemModel& model, const VectorRef& x, const VectorRef& y,
                  const VectorRef& eta);

/// Central finite-difference Jacobians at a point, step sqrt(eps) *
/// max(1, |v_i|) * step_scale. step_scale exists for Richardson-style
/// consistency checks; production callers use the default 1.
Jacobians jacobians(const SystemModel& model, const VectorRef& x, const VectorRef& y,
                    const VectorRef& eta, double step_scale = 1.0);

/// Analytic f_x, f_y, g_x, g_y (closed-form device derivatives); used by the
/// Monte Carlo Newton loop and cross-validated against the finite-difference
/// route in the tests. Matrices must be pre-sized; only nonzeros are written
/// after zeroing.
void analytic_fg_jacobians(const SystemModel& model, const VectorRef& x,
                           const VectorRef& y, const VectorRef& eta, Matrix& f_x,
                           Matrix& f_y, Matrix& g_x, Matrix& g_y);

/// Stationary means of all noise processes (the eta part of an equilibrium).
Vector process_means(const SystemModel& model);

/// Diagonal diffusion matrix B(eta) evaluated entry-wise (p x p).
Matrix diffusion_at(const SystemModel& model, const VectorRef& eta);

}  // namespace stovar::grid
