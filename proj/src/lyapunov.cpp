#include "stovar/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stovar::lyap {

SpectralReport is_hurwitz(const MatrixRef& A) {
  SpectralReport rep;
  rep.eigenvalues = linalg::eigenvalues(A);
  std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end(),
            [](const Complex& a, const Complex& b) {
              return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
            });
  rep.spectral_abscissa = rep.eigenvalues.front().real();
  for (const Complex& l : rep.eigenvalues)
    if (l.real() >= -kHurwitzMargin) rep.offending.push_back(l);
  rep.hurwitz = rep.offending.empty();
  return rep;
}

namespace {

/// Diagonal block starts of an upper quasi-triangular matrix.
std::vector<Eigen::Index> block_starts(const Matrix& T) {
  std::vector<Eigen::Index> starts;
  Eigen::Index i = 0;
  while (i < T.rows()) {
    starts.push_back(i);
    i += (i + 1 < T.rows() && T(i + 1, i) != 0.0) ? 2 : 1;
  }
  return starts;
}

/// Solve T Y + Y T^T = -F in place for upper quasi-triangular T.
///
/// Column blocks are eliminated right to left; inside each column block the
/// rows are eliminated bottom to top, so every small system involves only one
/// pair of diagonal blocks (at most 4 unknowns, solved via vectorization).
Matrix solve_quasi_triangular(const Matrix& T, const Matrix& F) {
  const Eigen::Index n = T.rows();
  Matrix Y = Matrix::Zero(n, n);
  const std::vector<Eigen::Index> starts = block_starts(T);

  for (auto jb = starts.rbegin(); jb != starts.rend(); ++jb) {
    const Eigen::Index j0 = *jb;
    const Eigen::Index nb = (j0 + 1 < n && T(j0 + 1, j0) != 0.0) ? 2 : 1;
    const Eigen::Index jend = j0 + nb;
    const Matrix S = T.block(j0, j0, nb, nb).transpose();

    // Right-hand side for this column block; later columns are known.
    Matrix R = -F.middleCols(j0, nb);
    if (jend < n)
      R.noalias() -= Y.middleCols(jend, n - jend) *
                     T.block(j0, jend, nb, n - jend).transpose();

    for (auto ib = starts.rbegin(); ib != starts.rend(); ++ib) {
      const Eigen::Index i0 = *ib;
      const Eigen::Index mb = (i0 + 1 < n && T(i0 + 1, i0) != 0.0) ? 2 : 1;
      const Eigen::Index iend = i0 + mb;
      Matrix Ri = R.middleRows(i0, mb);
      if (iend < n)
        Ri.noalias() -= T.block(i0, iend, mb, n - iend) * Y.block(iend, j0, n - iend, nb);

      // Vectorized (mb*nb) system: (I (x) T_ii + S^T (x) I) vec(X) = vec(Ri).
      const Matrix Tii = T.block(i0, i0, mb, mb);
      const Eigen::Index sz = mb * nb;
      Matrix M = Matrix::Zero(sz, sz);
      for (Eigen::Index c = 0; c < nb; ++c) M.block(c * mb, c * mb, mb, mb) = Tii;
      for (Eigen::Index c = 0; c < nb; ++c)
        for (Eigen::Index d = 0; d < nb; ++d)
          for (Eigen::Index r = 0; r < mb; ++r) M(c * mb + r, d * mb + r) += S(d, c);

      Vector rhs(sz);
      for (Eigen::Index c = 0; c < nb; ++c) rhs.segment(c * mb, mb) = Ri.col(c);
      const Vector x = M.partialPivLu().solve(rhs);
      for (Eigen::Index c = 0; c < nb; ++c) Y.block(i0, j0 + c, mb, 1) = x.segment(c * mb, mb);
    }
  }
  return Y;
}

LyapunovSolution solve_with_rhs(const MatrixRef& A, const Matrix& W) {
  const Eigen::Index s = A.rows();
  require(s >= 1 && A.cols() == s, "solve_lyapunov: A must be square and non-empty");
  require(W.rows() == s && W.cols() == s, "solve_lyapunov: right-hand side must match A");
  require_finite(A, "solve_lyapunov: A");

  const linalg::SchurForm schur = linalg::real_schur(A);
  std::vector<Complex> offending;
  double abscissa = -std::numeric_limits<double>::infinity();
  for (const Complex& l : schur.eigenvalues) {
    abscissa = std::max(abscissa, l.real());
    if (l.real() >= -kHurwitzMargin) offending.push_back(l);
  }
  if (!offending.empty())
    throw NotHurwitz("solve_lyapunov: A is not Hurwitz (spectral abscissa " +
                         std::to_string(abscissa) + ")",
                     offending);

  const Matrix F = schur.Q.transpose() * W * schur.Q;
  const Matrix Y = solve_quasi_triangular(schur.T, F);
  Matrix C = schur.Q * Y * schur.Q.transpose();
  C = 0.5 * (C + C.transpose()).eval();

  LyapunovSolution sol;
  sol.residual_norm = (A * C + C * A.transpose() + W).norm();
  sol.rcond_estimate = linalg::rcond_estimate(A);
  sol.ill_conditioned = sol.rcond_estimate < 1e-12;
  sol.C = std::move(C);
  return sol;
}

}  // namespace

LyapunovSolution solve_lyapunov(const MatrixRef& A, const MatrixRef& B) {
  require(B.rows() == A.rows(), "solve_lyapunov: B must have as many rows as A");
  require_finite(B, "solve_lyapunov: B");
  return solve_with_rhs(A, Matrix(B * B.transpose()));
}

LyapunovSolution solve_lyapunov_rhs(const MatrixRef& A, const MatrixRef& W) {
  require_finite(W, "solve_lyapunov: W");
  require((W - W.transpose()).lpNorm<Eigen::Infinity>() <=
              1e-10 * std::max(1.0, W.lpNorm<Eigen::Infinity>()),
          "solve_lyapunov: W must be symmetric");
  return solve_with_rhs(A, Matrix(W));
}

}  // namespace stovar::lyap
