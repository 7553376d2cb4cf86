#pragma once

#include <stdexcept>
#include <string>

namespace qsmooth {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix or vector dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A covariance matrix is not symmetric positive semidefinite.
class InvalidCovariance : public Error {
 public:
  using Error::Error;
};

/// A linear system cannot be used for estimation (e.g. singular DD^T).
class InvalidModel : public Error {
 public:
  using Error::Error;
};

/// det G is (numerically) zero; the non-orthogonal basis does not exist.
class DegenerateCoupling : public Error {
 public:
  using Error::Error;
};

/// det G is zero but G is not of the rank-one form handled by QND mode.
class UnsupportedDegeneracy : public Error {
 public:
  using Error::Error;
};

/// Raised by the ODE integrator when a derivative evaluation is not finite.
class IntegrationDiverged : public Error {
 public:
  explicit IntegrationDiverged(double t)
      : Error("integration diverged: non-finite derivative at t=" + std::to_string(t)),
        time_(t) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// A propagated covariance lost positive semidefiniteness.
class NumericalInstability : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration file, flag or parameter combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace qsmooth
