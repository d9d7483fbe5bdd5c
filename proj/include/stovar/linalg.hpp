#pragma once

#include "stovar/types.hpp"

namespace stovar::linalg {

/// Real Schur decomposition A = Q T Q^T with T upper quasi-triangular
/// (1x1 and 2x2 diagonal blocks; 2x2 blocks carry complex-conjugate pairs).
struct SchurForm {
  Matrix Q;
  Matrix T;
  std::vector<Complex> eigenvalues;  // read off the diagonal blocks of T
};

/// Diagnostics from an LU solve; `ill_conditioned` is a warning, not an error.
struct LuReport {
  double rcond = 1.0;
  bool ill_conditioned = false;
};

/// Solve A X = B by LU with partial pivoting.
///
/// Throws SingularMatrix when a pivot collapses below 1e-300. When the
/// reciprocal condition estimate drops below 1e-12 the solve still returns
/// but flags `ill_conditioned` in `report` (if given).
Matrix lu_solve(const MatrixRef& A, const MatrixRef& B, LuReport* report = nullptr);

/// One-norm reciprocal condition number estimate of a square matrix.
double rcond_estimate(const MatrixRef& A);

/// Real Schur form of a square matrix. Throws NoConvergence if the QR
/// iteration fails to deflate within its sweep budget (40 per row).
SchurForm real_schur(const MatrixRef& A);

/// Eigenvalues only (via the real Schur form).
std::vector<Complex> eigenvalues(const MatrixRef& A);

/// Reference Lyapunov solve A C + C A^T = -Q through the Kronecker
/// vectorization (I (x) A + A (x) I) vec(C) = -vec(Q).
///
/// O(n^6); capped at n <= 64 and meant as an independent test oracle for the
/// production Schur-based solver, not as a production path. Throws
/// SingularMatrix when eigenvalues of A pair to lambda_i + lambda_j = 0
/// (the vectorized operator is then singular).
Matrix kron_lyap_oracle(const MatrixRef& A, const MatrixRef& Q);

}  // namespace stovar::linalg
