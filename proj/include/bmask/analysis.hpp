#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace bmask {

/// Noise-averaged FAB estimator of beta for fixed mask posteriors, and its
/// bias relative to the generating weights.
struct FabBias {
  Eigen::VectorXd expected_beta;  // Omega^{-1} (X o M)^T X beta*
  Eigen::VectorXd bias;           // Omega^{-1} b
};

/// b_k = (x_k o mu_k)^T sum_{l != k} beta*_l (x_l o (1 - mu_l)), with x_k and
/// mu_k the k-th columns of X and M.
Eigen::VectorXd fab_cross_terms(const Eigen::VectorXd& beta_star, const Eigen::MatrixXd& x, const Eigen::MatrixXd& mu);

/// Throws SingularSystemError when Omega is singular.
FabBias fab_bias(const Eigen::VectorXd& beta_star, const Eigen::MatrixXd& x, const Eigen::MatrixXd& mu);

/// x~^T y / x~^T x with x~ = x o mu. Throws DomainError when x~^T x == 0.
double fab_1d_estimator(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& mu);

/// Quality of the irrelevant-feature decisions.
struct SelectionScore {
  int m1 = 0;  // truly irrelevant
  int m2 = 0;  // estimated irrelevant (pruned)
  int m3 = 0;  // correctly pruned
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

/// Throws std::invalid_argument on length mismatch.
SelectionScore score_selection(const std::vector<bool>& estimate_zero_mask, const std::vector<bool>& truth_zero_mask);

}  // namespace bmask
