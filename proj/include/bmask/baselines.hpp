#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bmask/dataset.hpp"

namespace bmask {

enum class BaselineMethod { kLeastSquares, kLasso, kArd };

const char* to_string(BaselineMethod m);

/// |beta_k| (Lasso, LS) or gamma_k (ARD) below this counts as pruned.
inline constexpr double kZeroTolerance = 1e-10;

struct BaselineEstimate {
  Eigen::VectorXd beta_hat;
  BaselineMethod method = BaselineMethod::kLeastSquares;
  std::optional<double> alpha;              // Lasso only
  std::optional<Eigen::VectorXd> gamma_hat;  // ARD only
  double lambda = 1.0;                      // noise precision used

  std::vector<bool> zero_mask() const;
};

/// (X^T X)^{-1} X^T y. Throws SingularSystemError when X^T X is rank-deficient.
BaselineEstimate least_squares(const Dataset& data);

/// 1 / s^2 with s^2 = RSS / (N - K) of the least-squares fit.
double unbiased_noise_precision(const Dataset& data);

// Lasso minimizes (lambda / 2) ||y - X beta||^2 + alpha ||beta||_1.

/// Soft-threshold applied to beta_LS in one dimension: alpha / (lambda x^T x).
double lasso_threshold(double xtx, double lambda, double alpha);

double lasso_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double lambda, double alpha);

/// Cyclic coordinate descent until the largest coordinate change is below
/// tol. Throws ConvergenceError after max_sweeps.
BaselineEstimate lasso_cd(const Dataset& data, double lambda, double alpha, double tol = 1e-12,
                          int max_sweeps = 200000);

/// Same solver on sufficient statistics (gram = X^T X, xty = X^T y),
/// starting from `beta` and updating it in place. Once the support and signs
/// are stable it also tries the exact solve on the support, accepted only
/// when the KKT conditions hold.
void lasso_cd_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty, double lambda, double alpha,
                   Eigen::VectorXd& beta, double tol, int max_sweeps);

/// 30 log-spaced values over [1e-4, 1e2] * n.
std::vector<double> default_alpha_grid(Index n);

struct LassoCvPath {
  std::vector<double> alphas;
  std::vector<double> mean_heldout_mse;
  std::size_t selected = 0;
};

/// Picks alpha from the grid by k-fold held-out squared error on a seeded
/// random partition (ties go to the earlier grid entry), then refits on all
/// data. `path`, when given, receives the CV curve.
BaselineEstimate lasso_cv(const Dataset& data, double lambda, int folds, const std::vector<double>& alpha_grid,
                          std::uint64_t seed, double tol = 1e-9, LassoCvPath* path = nullptr);

struct Ard1d {
  double beta_hat = 0.0;
  double gamma_hat = 0.0;
};

/// Closed-form one-feature ARD: gamma = max(0, beta_LS^2 - 1/(lambda x^T x)),
/// beta = sign(beta_LS) max(0, |beta_LS| - 1/(lambda |x^T y|)).
Ard1d ard_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double lambda);

enum class ArdUpdate {
  kCoordinateAscent,  // exact per-feature maximization of the evidence
  kEmFixedPoint,      // gamma_k <- E[beta_k^2 | y, gamma]
};

struct ArdOptions {
  ArdUpdate update = ArdUpdate::kCoordinateAscent;
  int max_iterations = 20000;
};

/// Type-II maximum likelihood over diagonal prior variances, started at
/// gamma = 1, followed by the posterior mean. Throws ConvergenceError after
/// the iteration cap.
BaselineEstimate ard_fit(const Dataset& data, double lambda, double tol = 1e-9, ArdOptions options = {});

/// Negative log marginal likelihood (up to the 2 pi constant) of y under
/// beta ~ N(0, diag(gamma)), noise precision lambda.
double ard_negative_log_evidence(const Dataset& data, double lambda, const Eigen::VectorXd& gamma);

}  // namespace bmask
