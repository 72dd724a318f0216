#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fedeval {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable input: embedding files, JSON documents, flags.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A precondition on the data was violated (dimension mismatch, too few
/// samples, invalid weights, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A requested (mode, score) pair cannot be produced by the protocol.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: a matrix that should be PSD is not, a factorization
/// broke down, an iteration did not converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotPsdError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Raised by iterative solvers; carries the last iterate so callers can
/// inspect how far the solve got.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, Eigen::MatrixXd last_iterate, double residual,
                   int iterations)
      : NumericalError(what),
        last_iterate_(std::move(last_iterate)),
        residual_(residual),
        iterations_(iterations) {}

  const Eigen::MatrixXd& last_iterate() const noexcept { return last_iterate_; }
  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  Eigen::MatrixXd last_iterate_;
  double residual_;
  int iterations_;
};

}  // namespace fedeval
