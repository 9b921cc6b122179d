#pragma once

#include "gofreg/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace gofreg {

/// Row-major so that a covariate row is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowRef = Eigen::Ref<const Eigen::RowVectorXd>;

/// A sample {(X_i, Y_i)}: design matrix (n x p, intercept column included
/// when requested) and response vector. `trials` is only populated for
/// binomial responses and then holds the per-row trial count.
struct Dataset {
  Matrix covariates;
  Vector responses;
  std::vector<std::string> column_names;
  Vector trials;

  std::size_t size() const noexcept { return static_cast<std::size_t>(responses.size()); }
  std::size_t width() const noexcept { return static_cast<std::size_t>(covariates.cols()); }
  bool has_trials() const noexcept { return trials.size() != 0; }
  double trials_at(std::size_t i) const noexcept {
    return has_trials() ? trials[static_cast<Eigen::Index>(i)] : 1.0;
  }

  void validate() const {
    if (responses.size() == 0) throw DomainError("dataset is empty");
    if (covariates.rows() != responses.size())
      throw DomainError("covariate rows (" + std::to_string(covariates.rows()) +
                        ") differ from response length (" +
                        std::to_string(responses.size()) + ")");
    if (!column_names.empty() &&
        column_names.size() != static_cast<std::size_t>(covariates.cols()))
      throw DomainError("column_names has " + std::to_string(column_names.size()) +
                        " entries for " + std::to_string(covariates.cols()) + " columns");
    if (has_trials() && trials.size() != responses.size())
      throw DomainError("trial counts differ in length from responses");
    if (!covariates.allFinite()) throw DomainError("covariates contain non-finite values");
    if (!responses.allFinite()) throw DomainError("responses contain non-finite values");
    if (has_trials() && !trials.allFinite())
      throw DomainError("trial counts contain non-finite values");
  }

  /// Same design, new responses (bootstrap step (1): X* = X).
  Dataset with_responses(Vector y) const {
    Dataset out{covariates, std::move(y), column_names, trials};
    return out;
  }
};

/// Indices of columns that are not constant over all rows. Constant columns
/// (the intercept) carry no ordering or frequency information.
inline std::vector<Eigen::Index> varying_columns(const Matrix& x) {
  std::vector<Eigen::Index> out;
  if (x.rows() == 0) return out;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double first = x(0, c);
    for (Eigen::Index r = 1; r < x.rows(); ++r) {
      if (x(r, c) != first) {
        out.push_back(c);
        break;
      }
    }
  }
  return out;
}

}  // namespace gofreg
