#include "stovar/lem.hpp"

#include <cmath>

#include "stovar/linalg.hpp"

namespace stovar::lem {

std::vector<std::string> LinearizedSystem::extended_names() const {
  std::vector<std::string> out = state_names;
  out.reserve(n + p);
  for (const std::string& tag : process_names) out.push_back("eta(" + tag + ")");
  return out;
}

std::vector<std::string> LinearizedSystem::extended_classes() const {
  std::vector<std::string> out = state_classes;
  out.reserve(n + p);
  for (int k = 0; k < p; ++k) out.push_back("eta");
  return out;
}

LinearizedSystem reduce(const grid::Jacobians& J, const MatrixRef& B_eta) {
  const int n = static_cast<int>(J.f_x.rows());
  const int m = static_cast<int>(J.g_y.rows());
  const int p = static_cast<int>(J.a_eta.rows());
  require(J.f_x.cols() == n && J.f_y.rows() == n && J.f_y.cols() == m &&
              J.f_eta.rows() == n && J.f_eta.cols() == p && J.g_x.cols() == n &&
              J.g_y.cols() == m && J.g_eta.rows() == m && J.g_eta.cols() == p &&
              J.a_eta.cols() == p,
          "reduce: Jacobian block dimensions are inconsistent");
  require(B_eta.rows() == p, "reduce: diffusion row count must match a_eta");

  LinearizedSystem ls;
  ls.n = n;
  ls.m = m;
  ls.p = p;
  ls.A.setZero(n + p, n + p);
  ls.B.setZero(n + p, B_eta.cols());
  ls.G.resize(m, n + p);

  if (m > 0) {
    Matrix rhs(m, n + p);
    rhs << J.g_x, J.g_eta;
    linalg::LuReport rep;
    Matrix solved;
    try {
      solved = linalg::lu_solve(J.g_y, rhs, &rep);
    } catch (const SingularMatrix& e) {
      throw SingularGy(std::string("algebraic Jacobian g_y is singular: ") + e.what());
    }
    if (rep.rcond <= 1e-12)
      throw SingularGy("algebraic Jacobian g_y is numerically singular (rcond " +
                       std::to_string(rep.rcond) + ")");
    ls.G = -solved;
    ls.gy_rcond = rep.rcond;
    ls.gy_ill_conditioned = rep.rcond < 1e-10;
  }

  if (n > 0) {
    Matrix red(n, n + p);
    red << J.f_x, J.f_eta;
    if (m > 0) red += J.f_y * ls.G;
    ls.A.topRows(n) = red;
  }
  ls.A.bottomRightCorner(p, p) = J.a_eta;
  ls.B.bottomRows(p) = B_eta;
  return ls;
}

LinearizedSystem reduce(const grid::SystemModel& model, const grid::Equilibrium& eq) {
  const grid::Jacobians J = grid::jacobians(model, eq.x, eq.y, eq.eta);
  LinearizedSystem ls = reduce(J, grid::diffusion_at(model, eq.eta));
  ls.state_names = model.state_names;
  ls.state_classes = model.state_classes;
  ls.algebraic_names = model.algebraic_names;
  ls.algebraic_classes = model.algebraic_classes;
  ls.process_names.reserve(model.p);
  for (const sde::NoiseProcess& pr : model.noise.processes)
    ls.process_names.push_back(pr.tag);
  return ls;
}

lyap::LyapunovSolution state_covariance(const LinearizedSystem& ls) {
  return lyap::solve_lyapunov(ls.A, ls.B);
}

Matrix algebraic_covariance(const LinearizedSystem& ls, const MatrixRef& C) {
  require(C.rows() == ls.n + ls.p && C.cols() == ls.n + ls.p,
          "algebraic_covariance: C dimension mismatch");
  Matrix K = ls.G * C * ls.G.transpose();
  return 0.5 * (K + K.transpose());
}

DegeneracyReport degeneracy_report(const MatrixRef& C, const MatrixRef& K,
                                   double tol) {
  require(C.rows() == C.cols() && K.rows() == K.cols(),
          "degeneracy_report: covariance matrices must be square");
  DegeneracyReport rep;
  if (tol < 0.0) {
    double max_diag = 0.0;
    for (Eigen::Index i = 0; i < C.rows(); ++i) max_diag = std::max(max_diag, C(i, i));
    for (Eigen::Index i = 0; i < K.rows(); ++i) max_diag = std::max(max_diag, K(i, i));
    tol = 1e-14 * max_diag;
  }
  rep.tol = tol;
  for (Eigen::Index i = 0; i < C.rows(); ++i)
    if (C(i, i) <= tol) rep.states.push_back(static_cast<int>(i));
  for (Eigen::Index i = 0; i < K.rows(); ++i)
    if (K(i, i) <= tol) rep.algebraics.push_back(static_cast<int>(i));
  return rep;
}

GaussianDensity::GaussianDensity(const MatrixRef& C, double tol) {
  require(C.rows() == C.cols() && C.rows() > 0,
          "GaussianDensity: covariance must be square and non-empty");
  require_finite(C, "covariance");
  const Matrix sym = 0.5 * (C + C.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success)
    throw NoConvergence("GaussianDensity: eigendecomposition failed");
  vectors_ = es.eigenvectors();
  values_ = es.eigenvalues();  // ascending
  tol_ = tol >= 0.0 ? tol : 1e-14 * std::max(0.0, values_[values_.size() - 1]);
  log_norm_ = 0.0;
  degenerate_count_ = 0;
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    if (values_[i] <= tol_) {
      ++degenerate_count_;
    } else {
      log_norm_ -= 0.5 * std::log(2.0 * M_PI * values_[i]);
    }
  }
  if (retained() == 0)
    throw DegenerateCovariance(
        "GaussianDensity: covariance has no non-degenerate direction");
}

double GaussianDensity::log_density(const VectorRef& z) const {
  require(z.size() == values_.size(), "GaussianDensity: point dimension mismatch");
  const Vector u = vectors_.transpose() * z;
  const double thr = 1e-10 * std::max(1.0, z.norm());
  double quad = 0.0;
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    if (values_[i] <= tol_) {
      if (std::abs(u[i]) > thr)
        throw DegenerateCovariance(
            "GaussianDensity: point has a component along a zero-variance direction");
    } else {
      quad += u[i] * u[i] / values_[i];
    }
  }
  return log_norm_ - 0.5 * quad;
}

double GaussianDensity::operator()(const VectorRef& z) const {
  return std::exp(log_density(z));
}

double stationary_pdf(const MatrixRef& C, const VectorRef& z, double tol) {
  return GaussianDensity(C, tol)(z);
}

CovarianceReport covariances(const LinearizedSystem& ls) {
  CovarianceReport rep;
  const lyap::SpectralReport spectral = lyap::is_hurwitz(ls.A);
  rep.spectral_abscissa = spectral.spectral_abscissa;
  if (!spectral.hurwitz)
    throw NotHurwitz("state matrix is not Hurwitz (spectral abscissa " +
                         std::to_string(spectral.spectral_abscissa) +
                         "); no stationary distribution exists",
                     spectral.offending);

  const lyap::LyapunovSolution sol = state_covariance(ls);
  rep.C = sol.C;
  rep.K = algebraic_covariance(ls, sol.C);
  rep.lyap_residual_norm = sol.residual_norm;
  rep.a_rcond = sol.rcond_estimate;
  rep.gy_rcond = ls.gy_rcond;
  rep.ill_conditioned = sol.ill_conditioned || ls.gy_ill_conditioned;

  const int s = ls.n + ls.p;
  rep.sigma_x.resize(s);
  for (int i = 0; i < s; ++i) rep.sigma_x[i] = std::sqrt(std::max(0.0, rep.C(i, i)));
  rep.sigma_y.resize(ls.m);
  for (int i = 0; i < ls.m; ++i) rep.sigma_y[i] = std::sqrt(std::max(0.0, rep.K(i, i)));

  const DegeneracyReport deg = degeneracy_report(rep.C, rep.K);
  rep.degeneracy_tol = deg.tol;
  rep.state_degenerate.assign(s, false);
  rep.algebraic_degenerate.assign(ls.m, false);
  const std::vector<std::string> xnames = ls.extended_names();
  for (int i : deg.states) {
    rep.state_degenerate[i] = true;
    if (!xnames.empty()) rep.degenerate_states.push_back(xnames[i]);
  }
  for (int i : deg.algebraics) {
    rep.algebraic_degenerate[i] = true;
    if (!ls.algebraic_names.empty())
      rep.degenerate_algebraics.push_back(ls.algebraic_names[i]);
  }
  return rep;
}

Analysis analyze(grid::SystemModel& model) {
  Analysis out;
  out.equilibrium = grid::initialize_equilibrium(model);
  out.system = reduce(model, out.equilibrium);
  out.report = covariances(out.system);
  return out;
}

}  // namespace stovar::lem
