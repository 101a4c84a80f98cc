#include "bmask/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmask/error.hpp"

namespace bmask {
namespace {

constexpr double kSingularRcond = 1e-13;

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be positive");
}

// Sufficient statistics of the evidence for the current gamma:
// P = X^T C^{-1} X, p = X^T C^{-1} y with C = I / lambda + X diag(gamma) X^T,
// evaluated in feature space through A = I + lambda D G D, D = diag(sqrt(gamma)).
struct EvidenceStats {
  Eigen::MatrixXd p_mat;
  Eigen::VectorXd p_vec;
};

EvidenceStats evidence_stats(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty, double lambda,
                             const Eigen::VectorXd& gamma) {
  const Eigen::VectorXd d = gamma.cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd w = d.asDiagonal() * gram;  // D G
  Eigen::MatrixXd a = lambda * (w * d.asDiagonal());
  a.diagonal().array() += 1.0;
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  EvidenceStats s;
  s.p_mat = lambda * gram - lambda * lambda * (w.transpose() * llt.solve(w));
  s.p_vec = lambda * xty - lambda * lambda * (w.transpose() * llt.solve(d.cwiseProduct(xty)));
  s.p_mat = 0.5 * (s.p_mat + s.p_mat.transpose());
  return s;
}

}  // namespace

const char* to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::kLeastSquares: return "ls";
    case BaselineMethod::kLasso: return "lasso";
    case BaselineMethod::kArd: return "ard";
  }
  return "unknown";
}

std::vector<bool> BaselineEstimate::zero_mask() const {
  std::vector<bool> mask(static_cast<std::size_t>(beta_hat.size()));
  for (Index k = 0; k < beta_hat.size(); ++k) {
    const double v = (method == BaselineMethod::kArd && gamma_hat) ? (*gamma_hat)(k) : std::abs(beta_hat(k));
    mask[static_cast<std::size_t>(k)] = v < kZeroTolerance;
  }
  return mask;
}

BaselineEstimate least_squares(const Dataset& data) {
  data.validate();
  const Eigen::MatrixXd gram = data.x.transpose() * data.x;
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > kSingularRcond)) {
    throw SingularSystemError("X^T X is singular");
  }
  BaselineEstimate est;
  est.method = BaselineMethod::kLeastSquares;
  est.beta_hat = llt.solve(data.x.transpose() * data.y);
  const Eigen::VectorXd r = data.y - data.x * est.beta_hat;
  const auto dof = data.samples() - data.features();
  est.lambda = dof > 0 && r.squaredNorm() > 0.0 ? static_cast<double>(dof) / r.squaredNorm()
                                                 : std::numeric_limits<double>::infinity();
  return est;
}

double unbiased_noise_precision(const Dataset& data) {
  if (data.samples() <= data.features()) {
    throw std::invalid_argument("unbiased noise estimate needs more samples than features");
  }
  const double lambda = least_squares(data).lambda;
  if (!std::isfinite(lambda)) throw DegenerateNoiseError("least-squares residual is exactly zero");
  return lambda;
}

double lasso_threshold(double xtx, double lambda, double alpha) { return alpha / (lambda * xtx); }

double lasso_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double lambda, double alpha) {
  const double xtx = x.squaredNorm();
  if (!(xtx > 0.0)) throw DomainError("lasso_1d needs x^T x > 0");
  require_positive(lambda, "lambda");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
  const double ls = x.dot(y) / xtx;
  return sign(ls) * std::max(0.0, std::abs(ls) - lasso_threshold(xtx, lambda, alpha));
}

namespace {

// Once the support and signs settle, the lasso optimum solves
// G_AA beta_A = xty_A - thr sign_A exactly. Accept it only if the KKT
// conditions hold, otherwise keep sweeping.
bool try_exact_finish(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty, double thr, Eigen::VectorXd& beta) {
  std::vector<Index> support;
  for (Index j = 0; j < beta.size(); ++j) {
    if (beta(j) != 0.0) support.push_back(j);
  }
  if (support.empty()) return false;
  const auto a = static_cast<Index>(support.size());
  Eigen::MatrixXd g(a, a);
  Eigen::VectorXd rhs(a);
  for (Index i = 0; i < a; ++i) {
    for (Index j = 0; j < a; ++j) g(i, j) = gram(support[i], support[j]);
    rhs(i) = xty(support[i]) - thr * sign(beta(support[i]));
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-12)) return false;
  const Eigen::VectorXd sol = llt.solve(rhs);
  Eigen::VectorXd candidate = Eigen::VectorXd::Zero(beta.size());
  for (Index i = 0; i < a; ++i) {
    if (sign(sol(i)) != sign(beta(support[i]))) return false;
    candidate(support[i]) = sol(i);
  }
  const Eigen::VectorXd grad = xty - gram * candidate;
  const double slack = 1e-10 * (thr + grad.cwiseAbs().maxCoeff());
  for (Index j = 0; j < beta.size(); ++j) {
    if (candidate(j) == 0.0 && std::abs(grad(j)) > thr + slack) return false;
  }
  beta = candidate;
  return true;
}

}  // namespace

void lasso_cd_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty, double lambda, double alpha,
                   Eigen::VectorXd& beta, double tol, int max_sweeps) {
  const double thr = alpha / lambda;
  const Index k = gram.rows();
  constexpr int kFinishEvery = 10;
  // grad = X^T (y - X beta)
  Eigen::VectorXd grad = xty - gram * beta;
  bool pattern_changed = true;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double largest = 0.0;
    for (Index j = 0; j < k; ++j) {
      const double gjj = gram(j, j);
      if (gjj <= 0.0) {
        beta(j) = 0.0;
        continue;
      }
      const double z = grad(j) + gjj * beta(j);
      const double next = soft_threshold(z, thr) / gjj;
      const double step = next - beta(j);
      if (step != 0.0) {
        if (sign(next) != sign(beta(j))) pattern_changed = true;
        grad.noalias() -= gram.col(j) * step;
        beta(j) = next;
        largest = std::max(largest, std::abs(step));
      }
    }
    if (largest < tol) return;
    if (sweep % kFinishEvery == kFinishEvery - 1) {
      if (!pattern_changed && try_exact_finish(gram, xty, thr, beta)) return;
      pattern_changed = false;
    }
  }
  throw ConvergenceError("lasso coordinate descent did not converge in " + std::to_string(max_sweeps) + " sweeps");
}

BaselineEstimate lasso_cd(const Dataset& data, double lambda, double alpha, double tol, int max_sweeps) {
  data.validate();
  require_positive(lambda, "lambda");
  require_positive(alpha, "alpha");
  BaselineEstimate est;
  est.method = BaselineMethod::kLasso;
  est.alpha = alpha;
  est.lambda = lambda;
  est.beta_hat = Eigen::VectorXd::Zero(data.features());
  lasso_cd_gram(data.x.transpose() * data.x, data.x.transpose() * data.y, lambda, alpha, est.beta_hat, tol,
                max_sweeps);
  return est;
}

std::vector<double> default_alpha_grid(Index n) {
  constexpr int kPoints = 30;
  std::vector<double> grid(kPoints);
  const double lo = std::log(1e-4), hi = std::log(1e2);
  for (int i = 0; i < kPoints; ++i) {
    grid[static_cast<std::size_t>(i)] = static_cast<double>(n) * std::exp(lo + (hi - lo) * i / (kPoints - 1));
  }
  return grid;
}

BaselineEstimate lasso_cv(const Dataset& data, double lambda, int folds, const std::vector<double>& alpha_grid,
                          std::uint64_t seed, double tol, LassoCvPath* path) {
  data.validate();
  require_positive(lambda, "lambda");
  if (folds < 2) throw std::invalid_argument("cross validation needs at least 2 folds");
  if (data.samples() < folds) throw std::invalid_argument("fewer samples than folds");
  if (alpha_grid.empty()) throw std::invalid_argument("empty alpha grid");
  for (double a : alpha_grid) require_positive(a, "alpha");

  const Index n = data.samples();
  const Index k = data.features();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i) fold_of[static_cast<std::size_t>(perm[i])] = static_cast<int>(i % static_cast<std::size_t>(folds));

  // Descending alpha so each fit warm-starts from a sparser neighbour.
  std::vector<std::size_t> order(alpha_grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return alpha_grid[a] > alpha_grid[b]; });

  std::vector<double> mse(alpha_grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train, test;
    for (Index i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
    Eigen::MatrixXd xtr(static_cast<Index>(train.size()), k), xte(static_cast<Index>(test.size()), k);
    Eigen::VectorXd ytr(static_cast<Index>(train.size())), yte(static_cast<Index>(test.size()));
    for (std::size_t i = 0; i < train.size(); ++i) {
      xtr.row(static_cast<Index>(i)) = data.x.row(train[i]);
      ytr(static_cast<Index>(i)) = data.y(train[i]);
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
      xte.row(static_cast<Index>(i)) = data.x.row(test[i]);
      yte(static_cast<Index>(i)) = data.y(test[i]);
    }
    const Eigen::MatrixXd gram = xtr.transpose() * xtr;
    const Eigen::VectorXd xty = xtr.transpose() * ytr;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    for (std::size_t idx : order) {
      lasso_cd_gram(gram, xty, lambda, alpha_grid[idx], beta, tol, 200000);
      mse[idx] += (yte - xte * beta).squaredNorm() / static_cast<double>(test.size()) / folds;
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < mse.size(); ++i) {
    if (mse[i] < mse[best]) best = i;
  }
  if (path) {
    path->alphas = alpha_grid;
    path->mean_heldout_mse = mse;
    path->selected = best;
  }
  return lasso_cd(data, lambda, alpha_grid[best], tol);
}

Ard1d ard_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double lambda) {
  const double xtx = x.squaredNorm();
  if (!(xtx > 0.0)) throw DomainError("ard_1d needs x^T x > 0");
  require_positive(lambda, "lambda");
  const double xty = x.dot(y);
  const double ls = xty / xtx;
  Ard1d out;
  out.gamma_hat = std::max(0.0, ls * ls - 1.0 / (lambda * xtx));
  out.beta_hat = out.gamma_hat > 0.0 ? sign(ls) * std::max(0.0, std::abs(ls) - 1.0 / (lambda * std::abs(xty))) : 0.0;
  return out;
}

double ard_negative_log_evidence(const Dataset& data, double lambda, const Eigen::VectorXd& gamma) {
  // log|C| + y^T C^{-1} y with C = I / lambda + X Gamma X^T, in feature space.
  const Eigen::MatrixXd gram = data.x.transpose() * data.x;
  const Eigen::VectorXd xty = data.x.transpose() * data.y;
  const Eigen::VectorXd d = gamma.cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd a = lambda * (d.asDiagonal() * gram * d.asDiagonal());
  a.diagonal().array() += 1.0;
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  const Eigen::MatrixXd l = llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum() - static_cast<double>(data.samples()) * std::log(lambda);
  const Eigen::VectorXd dc = d.cwiseProduct(xty);
  const double quad = lambda * data.y.squaredNorm() - lambda * lambda * dc.dot(llt.solve(dc));
  return logdet + quad;
}

BaselineEstimate ard_fit(const Dataset& data, double lambda, double tol, ArdOptions options) {
  data.validate();
  require_positive(lambda, "lambda");
  const Index k = data.features();
  const Eigen::MatrixXd gram = data.x.transpose() * data.x;
  const Eigen::VectorXd xty = data.x.transpose() * data.y;

  Eigen::VectorXd gamma = Eigen::VectorXd::Ones(k);
  EvidenceStats st = evidence_stats(gram, xty, lambda, gamma);
  bool converged = false;
  for (int it = 0; it < options.max_iterations && !converged; ++it) {
    double largest = 0.0;
    if (options.update == ArdUpdate::kCoordinateAscent) {
      for (Index j = 0; j < k; ++j) {
        const double big_s = st.p_mat(j, j);
        const double big_q = st.p_vec(j);
        const double denom = 1.0 - gamma(j) * big_s;
        const double s = big_s / denom;  // leave-one-out sparsity factor
        const double q = big_q / denom;  // leave-one-out quality factor
        const double next = s > 0.0 ? std::max(0.0, (q * q - s) / (s * s)) : 0.0;
        const double change = next - gamma(j);
        if (change == 0.0) continue;
        largest = std::max(largest, std::abs(change));
        // Sherman-Morrison for C + change * x_j x_j^T.
        const Eigen::VectorXd u = st.p_mat.col(j);
        const double pj = st.p_vec(j);
        const double factor = change / (1.0 + change * big_s);
        st.p_mat.noalias() -= factor * u * u.transpose();
        st.p_vec -= factor * pj * u;
        gamma(j) = next;
      }
    } else {
      Eigen::VectorXd next(k);
      for (Index j = 0; j < k; ++j) {
        const double mean = gamma(j) * st.p_vec(j);
        const double var = gamma(j) - gamma(j) * gamma(j) * st.p_mat(j, j);
        next(j) = std::max(0.0, mean * mean + var);
      }
      largest = (next - gamma).cwiseAbs().maxCoeff();
      gamma = next;
    }
    st = evidence_stats(gram, xty, lambda, gamma);
    converged = largest < tol;
  }
  if (!converged) {
    throw ConvergenceError("ARD did not converge in " + std::to_string(options.max_iterations) + " iterations");
  }

  BaselineEstimate est;
  est.method = BaselineMethod::kArd;
  est.lambda = lambda;
  for (Index j = 0; j < k; ++j) {
    if (gamma(j) < kZeroTolerance) gamma(j) = 0.0;
  }
  st = evidence_stats(gram, xty, lambda, gamma);
  est.beta_hat = gamma.cwiseProduct(st.p_vec);
  est.gamma_hat = gamma;
  return est;
}

}  // namespace bmask
