#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace stovar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;

using MatrixRef = Eigen::Ref<const Eigen::MatrixXd>;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A pivot collapsed (or an operator is exactly non-invertible).
struct SingularMatrix : Error {
  using Error::Error;
};

/// An iterative scheme ran out of its iteration budget.
struct NoConvergence : Error {
  using Error::Error;
};

/// The system matrix has an eigenvalue with non-negative real part.
struct NotHurwitz : Error {
  NotHurwitz(const std::string& what, std::vector<Complex> offending)
      : Error(what), offending_eigenvalues(std::move(offending)) {}
  std::vector<Complex> offending_eigenvalues;
};

/// The algebraic Jacobian g_y is numerically singular (index violation).
struct SingularGy : Error {
  using Error::Error;
};

/// A function was evaluated outside its domain.
struct DomainError : Error {
  using Error::Error;
};

/// A configuration value violates its documented range or shape.
struct InvalidParameter : Error {
  using Error::Error;
};

/// Equilibrium initialization produced an unphysical operating point.
struct InitializationInfeasible : Error {
  using Error::Error;
};

/// The per-step Newton solve exhausted its iteration budget.
struct NewtonDivergence : Error {
  using Error::Error;
};

/// A density evaluation was requested along a zero-variance direction.
struct DegenerateCovariance : Error {
  using Error::Error;
};

/// Two result sets do not describe the same variables.
struct MismatchedVariables : Error {
  using Error::Error;
};

/// An operation that needs at least one data point received none.
struct EmptyInput : Error {
  using Error::Error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidParameter(what);
}

inline void require_finite(const MatrixRef& a, const std::string& name) {
  if (!a.allFinite()) throw InvalidParameter(name + " contains a non-finite entry");
}

}  // namespace stovar
