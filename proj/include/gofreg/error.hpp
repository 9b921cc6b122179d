#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>

namespace gofreg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the domain of an operation (bad support, empty data, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Singular design or Fisher information, or a degenerate (zero) scale.
class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

/// A linear predictor or derived parameter left the representable range.
class NumericRangeError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFamilyError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

/// Malformed CSV / JSON / recipe input. Messages carry row and column.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Fisher scoring ran out of iterations. Carries the last iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last_theta,
                   double gradient_norm, int iterations)
      : Error(what),
        last_theta_(std::move(last_theta)),
        gradient_norm_(gradient_norm),
        iterations_(iterations) {}

  const Eigen::VectorXd& last_theta() const noexcept { return last_theta_; }
  double gradient_norm() const noexcept { return gradient_norm_; }
  int iterations() const noexcept { return iterations_; }

 private:
  Eigen::VectorXd last_theta_;
  double gradient_norm_;
  int iterations_;
};

}  // namespace gofreg
