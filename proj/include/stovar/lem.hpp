#pragma once

#include "stovar/gridmodel.hpp"
#include "stovar/lyapunov.hpp"

namespace stovar::lem {

/// Linearization about an equilibrium with the algebraic layer eliminated and
/// the noise processes appended to the state.
///
/// The extended state is z = [x; eta] (n + p entries). A is its drift matrix
/// with the block structure [[f_x - f_y gy^-1 g_x, f_eta - f_y gy^-1 g_eta],
/// [0, a_eta]], B its diffusion (nonzero only in the eta rows), and G the
/// algebraic sensitivity dy = G dz with G = -gy^-1 [g_x g_eta].
struct LinearizedSystem {
  Matrix A;  // (n+p) x (n+p)
  Matrix B;  // (n+p) x p
  Matrix G;  // m x (n+p)
  int n = 0, m = 0, p = 0;
  double gy_rcond = 1.0;
  bool gy_ill_conditioned = false;  // rcond below 1e-10 (warning only)

  std::vector<std::string> state_names, state_classes;          // size n
  std::vector<std::string> process_names;                       // size p (tags)
  std::vector<std::string> algebraic_names, algebraic_classes;  // size m

  /// Name/class tables for the extended state (x entries, then eta entries).
  std::vector<std::string> extended_names() const;
  std::vector<std::string> extended_classes() const;
};

/// Eliminate the algebraic variables from the Jacobian blocks. B_eta is the
/// diffusion matrix evaluated at the equilibrium noise values. Throws
/// SingularGy when g_y has an rcond estimate at or below 1e-12. The returned
/// system carries empty name tables; the model overload fills them.
LinearizedSystem reduce(const grid::Jacobians& J, const MatrixRef& B_eta);

/// Finite-difference Jacobians at the given equilibrium, diffusion at the
/// stationary means, elimination, and name tables from the model layout.
LinearizedSystem reduce(const grid::SystemModel& model, const grid::Equilibrium& eq);

/// Stationary covariance of the extended state: A C + C A^T = -B B^T.
/// Throws NotHurwitz when no stationary distribution exists.
lyap::LyapunovSolution state_covariance(const LinearizedSystem& ls);

/// Project onto the algebraic variables: K = G C G^T (symmetrized).
Matrix algebraic_covariance(const LinearizedSystem& ls, const MatrixRef& C);

/// Zero-variance directions of a covariance pair, flagged against an absolute
/// tolerance; tol < 0 selects the default 1e-14 * (largest diagonal entry of
/// C or K).
struct DegeneracyReport {
  double tol = 0.0;
  std::vector<int> states;      // indices into the extended state
  std::vector<int> algebraics;  // indices into the algebraic table
};

DegeneracyReport degeneracy_report(const MatrixRef& C, const MatrixRef& K,
                                   double tol = -1.0);

/// Zero-mean Gaussian density restricted to the non-degenerate eigenspace of
/// its covariance. Eigendirections with variance <= tol carry no mass; asking
/// for the density at a point with a component along one of them throws
/// DegenerateCovariance. On the retained subspace the density is
/// (det 2 pi C)^(-1/2) exp(-z^T C^{-1} z / 2) with det and inverse taken on
/// that subspace.
class GaussianDensity {
 public:
  explicit GaussianDensity(const MatrixRef& C, double tol = -1.0);

  double operator()(const VectorRef& z) const;
  double log_density(const VectorRef& z) const;

  int dimension() const { return static_cast<int>(values_.size()); }
  int retained() const { return dimension() - degenerate_count_; }
  double tolerance() const { return tol_; }

 private:
  Matrix vectors_;  // orthonormal eigenvectors, columns, ascending eigenvalue
  Vector values_;
  double tol_ = 0.0;
  double log_norm_ = 0.0;  // -(1/2) sum over retained of log(2 pi lambda)
  int degenerate_count_ = 0;
};

/// One-shot evaluation of the stationary density at z.
double stationary_pdf(const MatrixRef& C, const VectorRef& z, double tol = -1.0);

/// Covariances plus the per-variable summary the CSV layer reports.
struct CovarianceReport {
  Matrix C;        // (n+p) x (n+p)
  Matrix K;        // m x m
  Vector sigma_x;  // n+p standard deviations (states, then processes)
  Vector sigma_y;  // m standard deviations
  std::vector<bool> state_degenerate;      // n+p
  std::vector<bool> algebraic_degenerate;  // m
  std::vector<std::string> degenerate_states, degenerate_algebraics;  // names
  double degeneracy_tol = 0.0;
  double spectral_abscissa = 0.0;  // max Re of the A spectrum
  double lyap_residual_norm = 0.0;
  double a_rcond = 1.0;
  double gy_rcond = 1.0;
  bool ill_conditioned = false;
};

/// Solve for C and K and assemble the per-variable report.
CovarianceReport covariances(const LinearizedSystem& ls);

/// Full pipeline on a model: equilibrium, reduction, covariances. Writes the
/// derived setpoints and load reference voltages into `model`.
struct Analysis {
  grid::Equilibrium equilibrium;
  LinearizedSystem system;
  CovarianceReport report;
};

Analysis analyze(grid::SystemModel& model);

}  // namespace stovar::lem
