#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace stovar::cli {

// Stable exit-code contract shared by every subcommand.
constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kPowerFlowError = 2;
constexpr int kLemError = 3;
constexpr int kMcError = 4;
constexpr int kCompareError = 5;

struct PfOptions {
  std::string model_path;
  std::string out_dir = ".";
};

struct LemOptions {
  std::string model_path;
  std::string out_dir = ".";
  double sigma_scale = 1.0;
  bool dump_cov = false;
};

struct McOptions {
  std::string model_path;
  std::string out_dir = ".";
  double sigma_scale = 1.0;
  long n = 1000;
  double tf = -1.0;  // < 0: use the 2/min(alpha) heuristic
  double dt = 0.01;
  std::uint64_t seed = 0;
  bool seed_set = false;  // otherwise the model file's seed applies
};

struct CompareOptions {
  std::string lem_dir;
  std::string mc_dir;
  std::string out_dir = ".";
};

/// Solve the power flow and write pf.csv (id, v, theta, p_inj, q_inj,
/// mismatch) plus pf_manifest.json.
int cmd_pf(const PfOptions& opt, std::ostream& err);

/// Analytic route: equilibrium, linearization, Lyapunov solve. Writes
/// sigma_states.csv, sigma_algebraics.csv, optionally C.csv / K.csv, and
/// lem_manifest.json.
int cmd_lem(const LemOptions& opt, std::ostream& err);

/// Monte Carlo route: seeded ensemble of nonlinear SDAE integrations. Writes
/// mc_sigma_final.csv, sigma_vs_t.csv, sigma_vs_N.csv and mc_manifest.json.
int cmd_mc(const McOptions& opt, std::ostream& err);

/// Convergence diagnostics only: sigma_vs_t.csv, sigma_vs_N.csv and
/// convergence_manifest.json.
int cmd_convergence(const McOptions& opt, std::ostream& err);

/// Join the two routes: epsilon_sigma.csv per variable and
/// epsilon_boxplot.csv per variable class.
int cmd_compare(const CompareOptions& opt, std::ostream& err);

}  // namespace stovar::cli
