#include "bmask/analysis.hpp"

#include <stdexcept>

#include "bmask/core_model.hpp"
#include "bmask/error.hpp"

namespace bmask {

Eigen::VectorXd fab_cross_terms(const Eigen::VectorXd& beta_star, const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& mu) {
  const Index k = x.cols();
  const Eigen::MatrixXd masked = x.cwiseProduct(mu);
  const Eigen::MatrixXd unmasked = x.cwiseProduct((1.0 - mu.array()).matrix());
  // sum over all l of beta*_l (x_l o (1 - mu_l)); the l == k term is removed below.
  const Eigen::VectorXd all = unmasked * beta_star;
  Eigen::VectorXd b(k);
  for (Index j = 0; j < k; ++j) {
    b(j) = masked.col(j).dot(all - beta_star(j) * unmasked.col(j));
  }
  return b;
}

FabBias fab_bias(const Eigen::VectorXd& beta_star, const Eigen::MatrixXd& x, const Eigen::MatrixXd& mu) {
  if (x.rows() != mu.rows() || x.cols() != mu.cols() || beta_star.size() != x.cols()) {
    throw std::invalid_argument("fab_bias: inconsistent shapes");
  }
  const Eigen::MatrixXd omega = masked_gram(x, mu);
  // LLT rather than LDLT: LDLT pivots past an exact zero and reports a benign rcond.
  const Eigen::LLT<Eigen::MatrixXd> llt(omega);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) {
    throw SingularSystemError("Omega is singular");
  }
  FabBias out;
  out.expected_beta = llt.solve(x.cwiseProduct(mu).transpose() * (x * beta_star));
  out.bias = llt.solve(fab_cross_terms(beta_star, x, mu));
  return out;
}

double fab_1d_estimator(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  const Eigen::VectorXd masked = x.cwiseProduct(mu);
  const double denom = masked.dot(x);
  if (denom == 0.0) throw DomainError("feature is fully masked");
  return masked.dot(y) / denom;
}

SelectionScore score_selection(const std::vector<bool>& estimate_zero_mask, const std::vector<bool>& truth_zero_mask) {
  if (estimate_zero_mask.size() != truth_zero_mask.size()) {
    throw std::invalid_argument("selection masks have different lengths");
  }
  SelectionScore s;
  for (std::size_t i = 0; i < truth_zero_mask.size(); ++i) {
    s.m1 += truth_zero_mask[i] ? 1 : 0;
    s.m2 += estimate_zero_mask[i] ? 1 : 0;
    s.m3 += (truth_zero_mask[i] && estimate_zero_mask[i]) ? 1 : 0;
  }
  if (s.m2 > 0) s.precision = static_cast<double>(s.m3) / s.m2;
  if (s.m1 > 0) s.recall = static_cast<double>(s.m3) / s.m1;
  if (s.precision && s.recall && *s.precision + *s.recall > 0.0) {
    s.f1 = 2.0 * *s.precision * *s.recall / (*s.precision + *s.recall);
  }
  return s;
}

}  // namespace bmask
