#include "bmask/core_model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "bmask/error.hpp"

namespace bmask {
namespace {

// x log y with 0 log(anything) = 0.
double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

void require_positive_pi(const Eigen::VectorXd& pi) {
  for (Index k = 0; k < pi.size(); ++k) {
    if (!(pi(k) > 0.0)) {
      throw DomainError("masking prior pi[" + std::to_string(k) + "] must be > 0");
    }
  }
}

}  // namespace

void BMState::validate(const Dataset& data) const {
  const auto k = static_cast<Index>(active.size());
  if (beta.size() != k || pi.size() != k || mu.cols() != k) {
    throw std::invalid_argument("state vectors disagree on the active feature count");
  }
  if (mu.rows() != data.samples()) {
    throw std::invalid_argument("mu has the wrong number of rows");
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("noise precision must be positive and finite");
  }
  for (Index j = 0; j < k; ++j) {
    if (active[static_cast<std::size_t>(j)] < 0 || active[static_cast<std::size_t>(j)] >= data.features()) {
      throw std::invalid_argument("active feature index out of range");
    }
    if (!(pi(j) > 0.0 && pi(j) <= 1.0)) {
      throw std::invalid_argument("pi entries must lie in (0, 1]");
    }
  }
  if (k > 0 && ((mu.array() < 0.0).any() || (mu.array() > 1.0).any())) {
    throw std::invalid_argument("mu entries must lie in [0, 1]");
  }
}

std::vector<Index> BMState::all_features(Index k) {
  std::vector<Index> idx(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) idx[static_cast<std::size_t>(j)] = j;
  return idx;
}

Eigen::MatrixXd bernoulli_second_moment(const Eigen::Ref<const Eigen::VectorXd>& mu_row) {
  Eigen::MatrixXd m = mu_row * mu_row.transpose();
  m.diagonal() = mu_row;
  return m;
}

double binary_entropy(double p) { return -xlogy(p, p) - xlogy(1.0 - p, 1.0 - p); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

Eigen::MatrixXd active_design(const BMState& state, const Dataset& data) {
  Eigen::MatrixXd xa(data.samples(), state.active_count());
  for (Index j = 0; j < state.active_count(); ++j) {
    xa.col(j) = data.x.col(state.active[static_cast<std::size_t>(j)]);
  }
  return xa;
}

Eigen::VectorXd expected_squared_residuals(const Eigen::MatrixXd& x_active, const Eigen::VectorXd& y,
                                           const Eigen::VectorXd& beta, const Eigen::MatrixXd& mu) {
  // (x_n o beta)^T (mu_n mu_n^T + diag(mu_n - mu_n^2)) (x_n o beta)
  //   = (x_n o mu_n)^T beta squared + sum_k x_nk^2 beta_k^2 mu_nk (1 - mu_nk)
  Eigen::VectorXd mean_fit = Eigen::VectorXd::Zero(y.size());
  Eigen::VectorXd var_fit = Eigen::VectorXd::Zero(y.size());
  for (Index j = 0; j < x_active.cols(); ++j) {
    const auto xb = x_active.col(j).array() * beta(j);
    const auto m = mu.col(j).array();
    mean_fit.array() += xb * m;
    var_fit.array() += xb.square() * m * (1.0 - m);
  }
  return (y - mean_fit).array().square().matrix() + var_fit;
}

Eigen::MatrixXd masked_gram(const Eigen::MatrixXd& x_active, const Eigen::MatrixXd& mu) {
  const Eigen::MatrixXd xm = x_active.cwiseProduct(mu);
  Eigen::MatrixXd omega(xm.cols(), xm.cols());
  omega.setZero();
  omega.selfadjointView<Eigen::Lower>().rankUpdate(xm.transpose());
  omega.triangularView<Eigen::Upper>() = omega.transpose();
  for (Index j = 0; j < x_active.cols(); ++j) {
    const auto m = mu.col(j).array();
    omega(j, j) += (x_active.col(j).array().square() * m * (1.0 - m)).sum();
  }
  return omega;
}

FicTerms fic_terms(const BMState& state, const Eigen::MatrixXd& x_active, const Eigen::VectorXd& y) {
  require_positive_pi(state.pi);
  const auto n = static_cast<double>(y.size());
  const Index k = state.active_count();
  FicTerms t;

  const Eigen::VectorXd resid = expected_squared_residuals(x_active, y, state.beta, state.mu);
  t.expected_loglik = 0.5 * n * std::log(state.lambda / (2.0 * std::numbers::pi)) - 0.5 * state.lambda * resid.sum();

  // 0 log 0 = 0 for the entropy; mu in {0, 1} contributes nothing.
  // Clamping the log argument keeps the 0 * log(0) terms at zero while staying vectorized.
  const auto m = state.mu.array();
  constexpr double tiny = std::numeric_limits<double>::min();
  t.entropy = -(m * m.max(tiny).log() + (1.0 - m) * (1.0 - m).max(tiny).log()).sum();
  for (Index j = 0; j < k; ++j) {
    const double p = state.pi(j);
    const double on = state.mu.col(j).sum();
    const double off = (1.0 - state.mu.col(j).array()).sum();
    t.expected_logprior += xlogy(on, p) + xlogy(off, 1.0 - p);
    const double mean = on / n;
    t.fic_penalty += -0.5 * (std::log(n * p) + (mean - p) / p);
  }
  t.dimension_penalty = -0.5 * static_cast<double>(k + 1) * std::log(n);
  return t;
}

FicTerms fic_terms(const BMState& state, const Dataset& data) {
  return fic_terms(state, active_design(state, data), data.y);
}

double fic_lower_bound(const BMState& state, const Dataset& data) { return fic_terms(state, data).total(); }

Gradient grad_beta_pi(const BMState& state, const Eigen::MatrixXd& x_active, const Eigen::VectorXd& y) {
  require_positive_pi(state.pi);
  const auto n = static_cast<double>(y.size());
  const Index k = x_active.cols();

  // dG/dbeta = lambda ((X o M)^T y - Omega beta), Omega beta without forming Omega.
  Eigen::ArrayXd resid = y.array();
  for (Index j = 0; j < k; ++j) resid -= x_active.col(j).array() * state.mu.col(j).array() * state.beta(j);
  Gradient g;
  g.beta.resize(k);
  for (Index j = 0; j < k; ++j) {
    const auto x = x_active.col(j).array();
    const auto m = state.mu.col(j).array();
    const double diag_corr = (x.square() * m * (1.0 - m)).sum();
    g.beta(j) = state.lambda * ((x * m * resid).sum() - diag_corr * state.beta(j));
  }

  g.pi.resize(state.pi.size());
  for (Index j = 0; j < state.pi.size(); ++j) {
    const double p = state.pi(j);
    if (p >= 1.0) {
      g.pi(j) = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double mean = state.mu.col(j).sum() / n;
    g.pi(j) = n * mean / p - n * (1.0 - mean) / (1.0 - p) - (p - mean) / (2.0 * p * p);
  }
  return g;
}

Gradient grad_beta_pi(const BMState& state, const Dataset& data) {
  return grad_beta_pi(state, active_design(state, data), data.y);
}

const char* to_string(FitStatus status) {
  switch (status) {
    case FitStatus::kConverged: return "converged";
    case FitStatus::kMaxIterations: return "max_iterations";
    case FitStatus::kStopped: return "stopped";
    case FitStatus::kEmptyModel: return "empty_model";
    case FitStatus::kSingularSystem: return "singular_system";
    case FitStatus::kDegenerateNoise: return "degenerate_noise";
    case FitStatus::kDomainError: return "domain_error";
  }
  return "unknown";
}

bool FitResult::ok() const {
  return status == FitStatus::kConverged || status == FitStatus::kMaxIterations ||
         status == FitStatus::kStopped || status == FitStatus::kEmptyModel;
}

Eigen::VectorXd FitResult::beta_full() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(total_features);
  for (std::size_t j = 0; j < state.active.size(); ++j) out(state.active[j]) = state.beta(static_cast<Index>(j));
  return out;
}

Eigen::VectorXd FitResult::pi_full() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(total_features);
  for (std::size_t j = 0; j < state.active.size(); ++j) out(state.active[j]) = state.pi(static_cast<Index>(j));
  return out;
}

std::vector<bool> FitResult::pruned_mask() const {
  std::vector<bool> mask(static_cast<std::size_t>(total_features), true);
  for (Index k : state.active) mask[static_cast<std::size_t>(k)] = false;
  return mask;
}

}  // namespace bmask
