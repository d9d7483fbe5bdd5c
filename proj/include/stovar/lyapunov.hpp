#pragma once

#include "stovar/linalg.hpp"
#include "stovar/types.hpp"

namespace stovar::lyap {

/// Stability margin: an eigenvalue counts as stable when Re(lambda) < -margin.
constexpr double kHurwitzMargin = 1e-10;

struct SpectralReport {
  bool hurwitz = false;
  double spectral_abscissa = 0.0;            // max Re(lambda)
  std::vector<Complex> eigenvalues;          // sorted by descending real part
  std::vector<Complex> offending;            // Re(lambda) >= -margin
};

/// Classify the spectrum of a square matrix against the Hurwitz margin.
SpectralReport is_hurwitz(const MatrixRef& A);

struct LyapunovSolution {
  Matrix C;                     // symmetric PSD solution of A C + C A^T = -B B^T
  double residual_norm = 0.0;   // ||A C + C A^T + B B^T||_F
  double rcond_estimate = 1.0;  // reciprocal condition estimate of A
  bool ill_conditioned = false; // rcond below 1e-12 (warning only)
};

/// Solve the continuous Lyapunov equation A C + C A^T = -B B^T for a Hurwitz
/// A via the real Schur form and quasi-triangular block back-substitution.
///
/// Throws NotHurwitz (listing the offending eigenvalues) when A has an
/// eigenvalue with Re >= -1e-10; NoConvergence if the Schur step fails.
LyapunovSolution solve_lyapunov(const MatrixRef& A, const MatrixRef& B);

/// Same, with the right-hand side -W given directly (W symmetric PSD).
LyapunovSolution solve_lyapunov_rhs(const MatrixRef& A, const MatrixRef& W);

}  // namespace stovar::lyap
