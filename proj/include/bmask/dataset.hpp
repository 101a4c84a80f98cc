#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace bmask {

using Index = Eigen::Index;

/// Regression data y = X beta + noise, optionally with the generating truth.
struct Dataset {
  Eigen::MatrixXd x;  // N x K
  Eigen::VectorXd y;  // N
  std::optional<Eigen::VectorXd> true_beta;
  std::optional<std::vector<Index>> true_irrelevant;

  Index samples() const { return x.rows(); }
  Index features() const { return x.cols(); }

  /// Throws std::invalid_argument on shape mismatch or non-finite entries.
  void validate() const;

  /// Mask over features: true where the feature is known to be irrelevant.
  /// Derived from true_irrelevant, or from exact zeros of true_beta.
  std::optional<std::vector<bool>> truth_zero_mask() const;
};

/// Dataset restricted to the given feature columns (in the given order).
Dataset select_features(const Dataset& data, const std::vector<Index>& columns);

}  // namespace bmask
