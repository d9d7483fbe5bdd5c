#pragma once

#include <cstdint>

#include "stovar/gridmodel.hpp"

namespace stovar::mc {

/// Ensemble run configuration. The deterministic step dt and the noise step h
/// must be equal: both layers advance on one shared grid.
struct McConfig {
  int N = 1000;
  double t_f = 200.0;
  double dt = 0.01;
  double h = 0.01;
  std::uint64_t root_seed = 0;
  std::vector<double> checkpoints;  // ascending, in [0, t_f]; must end at t_f
  double newton_tol = 1e-8;
  int newton_max_iter = 20;

  void validate() const;
};

/// Checkpoint grid 0, every, 2*every, ..., plus t_f itself.
std::vector<double> default_checkpoints(double t_f, double every = 1.0);

/// Time for all processes to reach stationarity: 2 / min alpha.
double heuristic_tf(const sde::NoiseBank& noise);

/// One realization's checkpointed trajectory. Row c holds the value at
/// checkpoint time times[c].
struct Trajectory {
  std::vector<double> times;
  Matrix x;    // checkpoints x n
  Matrix y;    // checkpoints x m
  Matrix eta;  // checkpoints x p
  long newton_iterations = 0;
  int jacobian_refreshes = 0;
};

/// Integrate the nonlinear SDAE for one realization: per step the noise
/// processes advance by Euler-Maruyama, then (x, y) advance by an implicit
/// trapezoidal step solved with Newton, holding eta at its post-step value in
/// both endpoint evaluations of f. The Newton matrix is factored once at the
/// equilibrium and refreshed only when an iteration runs long; accuracy is
/// governed by the residual tolerance, not by the matrix.
Trajectory integrate_sdae(const grid::SystemModel& model, const grid::Equilibrium& eq,
                          int realization_index, const McConfig& cfg);

/// Streaming across-realization statistics of every variable at every
/// checkpoint. Variable order: states, then noise processes, then algebraics.
struct EnsembleStats {
  std::vector<double> times;
  std::vector<std::string> names;    // n + p + m
  std::vector<std::string> classes;  // matching classes ("eta" for processes)
  Matrix mean;  // checkpoints x vars
  Matrix m2;    // checkpoints x vars, sum of squared deviations
  long count = 0;

  Matrix finals;                   // N x vars, values at t_f per realization
  std::vector<bool> final_valid;   // realization completed
  int failures = 0;
  std::vector<std::string> failure_messages;  // first few, with indices
  bool insufficient_sample = false;           // fewer than 2 realizations
  double wall_seconds = 0.0;
  double realization_seconds = 0.0;  // summed across workers
  int workers = 0;

  /// Ensemble standard deviation of every variable at checkpoint c.
  Vector sigma_at(int checkpoint) const;

  /// Standard deviation at t_f over the first `upto` realizations (in
  /// realization order, skipping failures); upto < 0 means all. Bitwise
  /// independent of the worker count.
  Vector sigma_final(long upto = -1) const;
};

/// Run N seeded realizations on a worker pool (size from the STOVAR_WORKERS
/// environment variable, default the hardware concurrency) and merge the
/// per-worker statistics in a fixed order. Throws when more than 1% of
/// realizations fail.
EnsembleStats run_ensemble(const grid::SystemModel& model, const grid::Equilibrium& eq,
                           const McConfig& cfg);

/// A named sigma-per-variable table, the interchange format between the
/// analytic and Monte Carlo routes.
struct SigmaTable {
  std::vector<std::string> names;
  std::vector<std::string> classes;
  Vector sigma;
};

struct VariableCloseness {
  std::string name;
  std::string cls;
  double sigma_mc = 0.0;
  double sigma_lem = 0.0;
  double epsilon_pct = 0.0;  // (sigma_mc - sigma_lem) / sigma_mc * 100
  bool degenerate = false;    // both sigmas zero
  bool incomparable = false;  // sigma_mc zero, sigma_lem positive
};

struct BoxStats {
  double median = 0.0;
  double p5 = 0.0;
  double p95 = 0.0;
  std::vector<double> outliers;  // values strictly outside [p5, p95]
};

struct ClassBox {
  std::string cls;
  int count = 0;  // variables entering the box
  BoxStats stats;
};

struct ClosenessReport {
  std::vector<VariableCloseness> rows;
  std::vector<ClassBox> boxes;  // flagged rows excluded, class order preserved
};

/// Per-variable relative gap between the two routes plus per-class box-plot
/// summaries. Throws MismatchedVariables when the tables differ.
ClosenessReport closeness(const SigmaTable& mc_table, const SigmaTable& lem_table);

/// Median and 5/95 percentiles by linear interpolation between order
/// statistics; outliers are the values strictly outside [p5, p95].
BoxStats boxplot_stats(std::vector<double> values);

/// sigma(variable) at each checkpoint time, in long-table row order
/// (time-major), for the CSV layer.
struct SigmaVsTime {
  std::vector<double> times;
  Matrix sigma;  // checkpoints x vars
};
SigmaVsTime sigma_vs_time(const EnsembleStats& stats);

/// sigma(variable) at t_f over nested realization prefixes N, N/2, N/4, ...
/// down to 32 (ascending in the result).
struct SigmaVsCount {
  std::vector<long> counts;
  Matrix sigma;  // counts x vars
};
SigmaVsCount sigma_vs_count(const EnsembleStats& stats);

}  // namespace stovar::mc
