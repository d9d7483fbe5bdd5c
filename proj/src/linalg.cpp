#include "stovar/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace stovar::linalg {

namespace {
constexpr double kPivotFloor = 1e-300;
constexpr double kRcondWarn = 1e-12;
}  // namespace

Matrix lu_solve(const MatrixRef& A, const MatrixRef& B, LuReport* report) {
  require(A.rows() >= 1 && A.rows() == A.cols(), "lu_solve: A must be square and non-empty");
  require(B.rows() == A.rows(), "lu_solve: row count of B must match A");
  require_finite(A, "lu_solve: A");
  require_finite(B, "lu_solve: B");

  Eigen::PartialPivLU<Matrix> lu(A);
  const Matrix& u = lu.matrixLU();
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    if (std::abs(u(i, i)) < kPivotFloor)
      throw SingularMatrix("lu_solve: pivot " + std::to_string(i) + " collapsed (|" +
                           std::to_string(u(i, i)) + "| < 1e-300)");
  }
  const double rc = lu.rcond();
  if (report != nullptr) {
    report->rcond = rc;
    report->ill_conditioned = rc < kRcondWarn;
  }
  return lu.solve(B);
}

double rcond_estimate(const MatrixRef& A) {
  require(A.rows() == A.cols(), "rcond_estimate: matrix must be square");
  if (A.rows() == 0) return 1.0;
  Eigen::PartialPivLU<Matrix> lu(A);
  return lu.rcond();
}

SchurForm real_schur(const MatrixRef& A) {
  require(A.rows() >= 1 && A.rows() == A.cols(), "real_schur: A must be square and non-empty");
  require_finite(A, "real_schur: A");

  Eigen::RealSchur<Matrix> schur;
  schur.compute(A, /*computeU=*/true);
  if (schur.info() != Eigen::Success)
    throw NoConvergence("real_schur: QR iteration exceeded 40 sweeps per row");

  SchurForm out;
  out.Q = schur.matrixU();
  out.T = schur.matrixT();

  const Eigen::Index n = out.T.rows();
  out.eigenvalues.reserve(static_cast<size_t>(n));
  Eigen::Index i = 0;
  while (i < n) {
    if (i + 1 < n && out.T(i + 1, i) != 0.0) {
      // Standardized 2x2 block: complex pair p +- i*sqrt(det - p^2).
      const double p = 0.5 * (out.T(i, i) + out.T(i + 1, i + 1));
      const double det = out.T(i, i) * out.T(i + 1, i + 1) - out.T(i, i + 1) * out.T(i + 1, i);
      const double disc = det - p * p;
      const double im = disc > 0.0 ? std::sqrt(disc) : 0.0;
      out.eigenvalues.emplace_back(p, im);
      out.eigenvalues.emplace_back(p, -im);
      i += 2;
    } else {
      out.eigenvalues.emplace_back(out.T(i, i), 0.0);
      i += 1;
    }
  }
  return out;
}

std::vector<Complex> eigenvalues(const MatrixRef& A) { return real_schur(A).eigenvalues; }

Matrix kron_lyap_oracle(const MatrixRef& A, const MatrixRef& Q) {
  const Eigen::Index n = A.rows();
  require(n >= 1 && A.cols() == n, "kron_lyap_oracle: A must be square and non-empty");
  require(n <= 64, "kron_lyap_oracle: capped at n <= 64 (test oracle only)");
  require(Q.rows() == n && Q.cols() == n, "kron_lyap_oracle: Q must match A");
  require_finite(A, "kron_lyap_oracle: A");
  require_finite(Q, "kron_lyap_oracle: Q");

  const std::vector<Complex> lam = eigenvalues(A);
  double scale = 0.0;
  for (const Complex& l : lam) scale = std::max(scale, std::abs(l));
  for (const Complex& li : lam)
    for (const Complex& lj : lam)
      if (std::abs(li + lj) <= 1e-12 * std::max(1.0, scale))
        throw SingularMatrix("kron_lyap_oracle: eigenvalue pair with lambda_i + lambda_j = 0");

  // vec(A C) = (I (x) A) vec(C), vec(C A^T) = (A (x) I) vec(C).
  Matrix M = Matrix::Zero(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j)
    M.block(j * n, j * n, n, n) = A;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k)
        M(j * n + k, i * n + k) += A(j, i);

  Vector rhs(n * n);
  for (Eigen::Index j = 0; j < n; ++j) rhs.segment(j * n, n) = -Q.col(j);

  const Vector c = lu_solve(M, rhs);
  Matrix C(n, n);
  for (Eigen::Index j = 0; j < n; ++j) C.col(j) = c.segment(j * n, n);
  C = 0.5 * (C + C.transpose()).eval();
  return C;
}

}  // namespace stovar::linalg
