#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bmask/dataset.hpp"

namespace bmask {

/// Parameters of the Bayesian masking model together with the mean-field
/// posterior of the binary masks.
///
/// Columns of `mu` and entries of `beta`/`pi` refer to the active features;
/// `active[j]` is the column of the dataset that active feature j reads.
/// The mask matrix Z itself is never materialized: only its posterior means
/// mu(n, k) = q(z_nk = 1) are kept.
struct BMState {
  Eigen::VectorXd beta;
  double lambda = 1.0;  // noise precision
  Eigen::VectorXd pi;   // masking priors, in (0, 1]
  Eigen::MatrixXd mu;   // N x K_active, entries in [0, 1]
  std::vector<Index> active;

  Index active_count() const { return static_cast<Index>(active.size()); }

  /// Throws std::invalid_argument when the invariants do not hold or the
  /// state does not fit `data`.
  void validate(const Dataset& data) const;

  /// Identity feature map 0..k-1.
  static std::vector<Index> all_features(Index k);
};

/// The five terms of the FIC lower bound, accumulated separately.
struct FicTerms {
  double expected_loglik = 0.0;    // E_q[log p(y | X, Z, beta, lambda)]
  double expected_logprior = 0.0;  // E_q[log p(Z | pi)]
  double fic_penalty = 0.0;        // -1/2 sum_k (log(N pi_k) + (mean_k - pi_k) / pi_k)
  double dimension_penalty = 0.0;  // -(K + 1)/2 log N, K = active count
  double entropy = 0.0;            // sum_nk H(q(z_nk))

  double total() const {
    return expected_loglik + expected_logprior + fic_penalty + dimension_penalty + entropy;
  }
};

struct Gradient {
  Eigen::VectorXd beta;
  Eigen::VectorXd pi;
};

/// E_q[z z^T] for independent Bernoulli(mu_k) masks: mu mu^T with the
/// diagonal replaced by mu.
Eigen::MatrixXd bernoulli_second_moment(const Eigen::Ref<const Eigen::VectorXd>& mu_row);

/// Binary entropy in nats, with 0 log 0 = 0.
double binary_entropy(double p);

double sigmoid(double t);

/// Active columns of data.x in the order of state.active.
Eigen::MatrixXd active_design(const BMState& state, const Dataset& data);

/// Per-sample E_q[(y_n - sum_k x_nk z_nk beta_k)^2].
Eigen::VectorXd expected_squared_residuals(const Eigen::MatrixXd& x_active, const Eigen::VectorXd& y,
                                           const Eigen::VectorXd& beta, const Eigen::MatrixXd& mu);

/// Omega = sum_n (x_n x_n^T) o E_q[z_n z_n^T].
Eigen::MatrixXd masked_gram(const Eigen::MatrixXd& x_active, const Eigen::MatrixXd& mu);

/// Throws DomainError if any pi_k <= 0.
FicTerms fic_terms(const BMState& state, const Dataset& data);
double fic_lower_bound(const BMState& state, const Dataset& data);

/// Analytic partial derivatives of the FIC lower bound with respect to beta
/// and pi. Entries of the pi-gradient are NaN where pi_k == 1 (undefined on
/// the boundary); throws DomainError if any pi_k <= 0.
Gradient grad_beta_pi(const BMState& state, const Dataset& data);

/// Same as grad_beta_pi, for a design already restricted to active columns.
Gradient grad_beta_pi(const BMState& state, const Eigen::MatrixXd& x_active, const Eigen::VectorXd& y);
FicTerms fic_terms(const BMState& state, const Eigen::MatrixXd& x_active, const Eigen::VectorXd& y);

enum class FitStatus {
  kConverged,
  kMaxIterations,
  kStopped,         // observer asked to stop
  kEmptyModel,      // every feature was pruned
  kSingularSystem,
  kDegenerateNoise,
  kDomainError,
};

const char* to_string(FitStatus status);

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double elapsed_seconds = 0.0;
  Index active_count = 0;
  Eigen::VectorXd pi;    // original feature indexing, pruned = 0
  Eigen::VectorXd beta;  // original feature indexing, pruned = 0
};

struct FitResult {
  BMState state;
  std::vector<IterationRecord> history;
  std::map<Index, int> pruned_at;  // original feature -> iteration
  FitStatus status = FitStatus::kMaxIterations;
  std::string message;
  Index total_features = 0;

  /// True unless the fit ended on a numerical failure. An empty model is a
  /// legitimate outcome (everything pruned).
  bool ok() const;

  /// beta over all original features; pruned features are exactly 0.
  Eigen::VectorXd beta_full() const;
  Eigen::VectorXd pi_full() const;
  std::vector<bool> pruned_mask() const;
};

}  // namespace bmask
