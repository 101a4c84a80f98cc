#include <cmath>
#include <random>

#include "doctest.h"

#include "bmask/baselines.hpp"
#include "bmask/error.hpp"
#include "bmask/experiments.hpp"
#include "test_support.hpp"

using namespace bmask;
using bmask::testing::golden_section_min;
using bmask::testing::random_dataset;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Dataset one_feature(std::initializer_list<double> x, std::initializer_list<double> y) {
  Dataset d;
  d.x.resize(static_cast<Index>(x.size()), 1);
  d.y.resize(static_cast<Index>(y.size()));
  Index i = 0;
  for (double v : x) d.x(i++, 0) = v;
  i = 0;
  for (double v : y) d.y(i++) = v;
  return d;
}

double lasso_objective(const Dataset& d, const VectorXd& b, double lambda, double alpha) {
  return 0.5 * lambda * (d.y - d.x * b).squaredNorm() + alpha * b.lpNorm<1>();
}

}  // namespace

TEST_CASE("least squares examples") {
  const Dataset d = one_feature({1.0, 2.0}, {2.0, 4.0});
  CHECK(least_squares(d).beta_hat(0) == doctest::Approx(2.0));

  Dataset orth;
  orth.x = MatrixXd::Zero(3, 2);
  orth.x(0, 0) = 1.0;
  orth.x(1, 1) = 1.0;
  orth.y = Eigen::Vector3d(0.0, 0.0, 5.0);
  CHECK(least_squares(orth).beta_hat.isZero());

  std::mt19937_64 rng(61);
  const Dataset r = random_dataset(rng, 50, 4);
  const BaselineEstimate e = least_squares(r);
  CHECK((r.x.transpose() * (r.y - r.x * e.beta_hat)).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(e.method == BaselineMethod::kLeastSquares);
  CHECK_FALSE(e.alpha);
  CHECK_FALSE(e.gamma_hat);
}

TEST_CASE("least squares error paths and noise estimate") {
  std::mt19937_64 rng(62);
  Dataset d = random_dataset(rng, 20, 3);
  const double rss = (d.y - d.x * least_squares(d).beta_hat).squaredNorm();
  CHECK(unbiased_noise_precision(d) == doctest::Approx(17.0 / rss));
  d.x.col(1) = 2.0 * d.x.col(0);
  CHECK_THROWS_AS(least_squares(d), SingularSystemError);
  const Dataset square = random_dataset(rng, 3, 3);
  CHECK_THROWS_AS(unbiased_noise_precision(square), std::invalid_argument);
}

TEST_CASE("lasso_1d examples") {
  const VectorXd x = Eigen::Vector2d(1.0, 0.0), y = Eigen::Vector2d(2.0, 0.0);
  CHECK(lasso_1d(x, y, 1.0, 0.0) == 2.0);
  CHECK(lasso_1d(x, y, 1.0, 10.0) == 0.0);
  const double b = lasso_1d(x, y, 1.0, 0.5);
  const Dataset d = one_feature({1.0, 0.0}, {2.0, 0.0});
  const double oracle = golden_section_min(
      [&](double v) { return lasso_objective(d, VectorXd::Constant(1, v), 1.0, 0.5); }, -50.0, 50.0, 1e-14);
  CHECK(b == doctest::Approx(oracle).epsilon(1e-8));
  CHECK(b == doctest::Approx(1.5));
  CHECK(lasso_threshold(4.0, 2.0, 1.0) == doctest::Approx(0.125));
  CHECK_THROWS_AS(lasso_1d(Eigen::Vector2d::Zero(), y, 1.0, 0.5), DomainError);
  CHECK_THROWS_AS(lasso_1d(x, y, 1.0, -1.0), std::invalid_argument);
}

TEST_CASE("1D soft-threshold structure of Lasso and ARD") {
  const VectorXd x = Eigen::Vector3d(1.0, -0.5, 2.0);
  const double lambda = 2.0, alpha = 0.7;
  bool zero_band_lasso = false, zero_band_ard = false;
  double last_ard_shrink = std::numeric_limits<double>::infinity();
  for (int i = -200; i <= 200; ++i) {
    const double target = 0.02 * i;
    const VectorXd y = target * x;
    const double ls = x.dot(y) / x.squaredNorm();
    const double la = lasso_1d(x, y, lambda, alpha);
    const Ard1d ar = ard_1d(x, y, lambda);
    CHECK(std::abs(la) <= std::abs(ls) + 1e-15);
    CHECK(std::abs(ar.beta_hat) <= std::abs(ls) + 1e-15);
    CHECK((la == 0.0 || std::signbit(la) == std::signbit(ls)));
    CHECK((ar.beta_hat == 0.0 || std::signbit(ar.beta_hat) == std::signbit(ls)));
    if (std::abs(ls) < 1e-3) {
      zero_band_lasso = zero_band_lasso || la == 0.0;
      zero_band_ard = zero_band_ard || ar.beta_hat == 0.0;
    }
    if (la != 0.0) CHECK(std::abs(ls) - std::abs(la) == doctest::Approx(lasso_threshold(x.squaredNorm(), lambda, alpha)));
    if (ls > 0.0 && ar.beta_hat != 0.0) {
      const double shrink = ls - ar.beta_hat;
      CHECK(shrink < last_ard_shrink);
      last_ard_shrink = shrink;
    }
  }
  CHECK(zero_band_lasso);
  CHECK(zero_band_ard);
}

TEST_CASE("1D ordering LS > ARD > Lasso above both thresholds") {
  const VectorXd x = Eigen::Vector2d(1.0, 1.0);
  const double lambda = 1.0, alpha = 1.0;
  const VectorXd y = Eigen::Vector2d(3.0, 3.2);
  const double ls = x.dot(y) / x.squaredNorm();
  REQUIRE(2.0 * alpha / (lambda * x.squaredNorm()) > 1.0 / (lambda * std::abs(x.dot(y))));
  const double la = lasso_1d(x, y, lambda, alpha);
  const double ar = ard_1d(x, y, lambda).beta_hat;
  CHECK(ls > ar);
  CHECK(ar > la);
  CHECK(la > 0.0);
}

TEST_CASE("lasso_cd agrees with closed forms") {
  std::mt19937_64 rng(63);
  for (int t = 0; t < 10; ++t) {
    const Dataset d = random_dataset(rng, 12, 1);
    const double alpha = 0.1 + t;
    const BaselineEstimate e = lasso_cd(d, 1.5, alpha);
    CHECK(e.beta_hat(0) == doctest::Approx(lasso_1d(d.x.col(0), d.y, 1.5, alpha)).epsilon(1e-8));
    CHECK(e.alpha == alpha);
    CHECK(e.method == BaselineMethod::kLasso);
  }

  // Orthonormal columns: independent soft-thresholding of x_k^T y.
  const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(random_dataset(rng, 10, 4).x).householderQ();
  Dataset d;
  d.x = q.leftCols(4);
  d.y = random_dataset(rng, 10, 1).y * 3.0;
  const double lambda = 2.0, alpha = 1.3;
  const BaselineEstimate e = lasso_cd(d, lambda, alpha);
  for (Index k = 0; k < 4; ++k) {
    const double z = d.x.col(k).dot(d.y);
    const double expect = (z > 0 ? 1.0 : -1.0) * std::max(0.0, std::abs(z) - alpha / lambda);
    CHECK(e.beta_hat(k) == doctest::Approx(expect).epsilon(1e-10));
  }

  CHECK(lasso_cd(d, lambda, 1e9).beta_hat.isZero());
}

TEST_CASE("lasso_cd satisfies the subgradient conditions on correlated designs") {
  std::mt19937_64 rng(64);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    Dataset d;
    d.x.resize(60, 8);
    for (Index i = 0; i < 60; ++i)
      for (Index j = 0; j < 8; ++j) d.x(i, j) = u(rng);
    d.y = d.x * VectorXd::LinSpaced(8, -1.0, 1.0) + VectorXd::Random(60) * 0.1;
    const double lambda = 5.0, alpha = 0.05 + 0.5 * t;
    const BaselineEstimate e = lasso_cd(d, lambda, alpha);
    const VectorXd g = lambda * d.x.transpose() * (d.y - d.x * e.beta_hat);
    for (Index j = 0; j < 8; ++j) {
      if (e.beta_hat(j) != 0.0) {
        CHECK(g(j) == doctest::Approx(alpha * (e.beta_hat(j) > 0 ? 1.0 : -1.0)).epsilon(1e-6));
      } else {
        CHECK(std::abs(g(j)) <= alpha * (1.0 + 1e-6));
      }
    }
  }
}

TEST_CASE("lasso_cd error paths") {
  std::mt19937_64 rng(65);
  Dataset d = random_dataset(rng, 30, 5);
  d.x.col(1) = d.x.col(0) + 1e-3 * d.x.col(2);
  CHECK_THROWS_AS(lasso_cd(d, 1.0, 1e-6, 1e-15, 2), ConvergenceError);
  CHECK_THROWS_AS(lasso_cd(d, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(lasso_cd(d, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("default alpha grid") {
  const auto g = default_alpha_grid(40);
  REQUIRE(g.size() == 30);
  CHECK(g.front() == doctest::Approx(40 * 1e-4));
  CHECK(g.back() == doctest::Approx(40 * 1e2));
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] / g[i - 1] == doctest::Approx(g[1] / g[0]));
}

TEST_CASE("lasso_cv selection") {
  std::mt19937_64 rng(66);
  const Dataset d = random_dataset(rng, 30, 3);
  LassoCvPath path;
  const BaselineEstimate one = lasso_cv(d, 1.0, 3, {0.7}, 1, 1e-9, &path);
  CHECK(one.alpha == 0.7);
  CHECK(path.selected == 0);
  CHECK(path.mean_heldout_mse.size() == 1);

  const auto grid = default_alpha_grid(30);
  const BaselineEstimate a = lasso_cv(d, 1.0, 5, grid, 9, 1e-9, &path);
  const BaselineEstimate b = lasso_cv(d, 1.0, 5, grid, 9);
  CHECK(a.beta_hat == b.beta_hat);
  CHECK(*a.alpha == grid[path.selected]);
  for (double m : path.mean_heldout_mse) CHECK(m >= path.mean_heldout_mse[path.selected]);

  CHECK_THROWS_AS(lasso_cv(d, 1.0, 1, grid, 0), std::invalid_argument);
  CHECK_THROWS_AS(lasso_cv(d, 1.0, 31, grid, 0), std::invalid_argument);
  CHECK_THROWS_AS(lasso_cv(d, 1.0, 3, {}, 0), std::invalid_argument);
}

TEST_CASE("lasso_cv prunes pure noise in most seeds") {
  int all_pruned = 0;
  const int seeds = 100;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(derive_seed(67, s));
    Dataset d = random_dataset(rng, 40, 3);  // y independent of X
    const std::vector<double> grid = {0.01, 0.1, 1.0, 1000.0};
    const BaselineEstimate e = lasso_cv(d, 1.0, 5, grid, s);
    const auto mask = e.zero_mask();
    all_pruned += std::all_of(mask.begin(), mask.end(), [](bool z) { return z; });
  }
  CHECK(all_pruned * 2 > seeds);
}

TEST_CASE("lasso_cv shrinks the relevant toy weight") {
  double sum = 0.0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const Dataset d = gen_toy(derive_seed(68, t));
    sum += lasso_cv(d, 1.0 / 0.005, 2, default_alpha_grid(d.samples()), t).beta_hat(1);
  }
  CHECK(sum / trials < 1.0);
}

TEST_CASE("ard_1d examples") {
  const VectorXd x = Eigen::Vector2d(1.0, 0.0);
  const Ard1d small = ard_1d(x, Eigen::Vector2d(0.5, 0.0), 1.0);
  CHECK(small.gamma_hat == 0.0);
  CHECK(small.beta_hat == 0.0);

  const Ard1d big = ard_1d(x, Eigen::Vector2d(3.0, 0.0), 1.0);
  CHECK(big.beta_hat == doctest::Approx(8.0 / 3.0));
  CHECK(big.gamma_hat == doctest::Approx(8.0));

  // Evidence oracle on gamma for the second example.
  const Dataset d = one_feature({1.0, 0.0}, {3.0, 0.0});
  const double g = golden_section_min(
      [&](double v) { return ard_negative_log_evidence(d, 1.0, VectorXd::Constant(1, v)); }, 0.0, 1000.0, 1e-14);
  CHECK(g == doctest::Approx(big.gamma_hat).epsilon(1e-6));
  const double g0 = golden_section_min(
      [&](double v) { return ard_negative_log_evidence(one_feature({1.0, 0.0}, {0.5, 0.0}), 1.0, VectorXd::Constant(1, v)); },
      0.0, 1000.0, 1e-14);
  CHECK(g0 < 1e-6);

  // Vanishing noise removes the shrinkage.
  const VectorXd xr = Eigen::Vector3d(0.3, 1.0, -0.7), yr = Eigen::Vector3d(0.5, 1.1, -0.2);
  const double ls = xr.dot(yr) / xr.squaredNorm();
  CHECK(ard_1d(xr, yr, 1e12).beta_hat == doctest::Approx(ls).epsilon(1e-9));
  CHECK_THROWS_AS(ard_1d(Eigen::Vector2d::Zero(), yr.head(2), 1.0), DomainError);
}

TEST_CASE("ard_fit agrees with the 1D closed form and prunes with zero gamma") {
  std::mt19937_64 rng(69);
  for (int t = 0; t < 10; ++t) {
    const Dataset d = random_dataset(rng, 15, 1);
    const double lambda = 0.5 + t;
    const BaselineEstimate e = ard_fit(d, lambda);
    const Ard1d a = ard_1d(d.x.col(0), d.y, lambda);
    CHECK(e.beta_hat(0) == doctest::Approx(a.beta_hat).epsilon(1e-6));
    CHECK((*e.gamma_hat)(0) == doctest::Approx(a.gamma_hat).epsilon(1e-6));
    CHECK(e.zero_mask()[0] == (a.gamma_hat == 0.0));
  }
  const Dataset d = random_dataset(rng, 30, 4);
  const BaselineEstimate e = ard_fit(d, 2.0);
  for (Index k = 0; k < 4; ++k) {
    if ((*e.gamma_hat)(k) == 0.0) CHECK(e.beta_hat(k) == 0.0);
  }
  const BaselineEstimate em = ard_fit(d, 2.0, 1e-10, {.update = ArdUpdate::kEmFixedPoint, .max_iterations = 200000});
  CHECK(ard_negative_log_evidence(d, 2.0, *em.gamma_hat) ==
        doctest::Approx(ard_negative_log_evidence(d, 2.0, *e.gamma_hat)).epsilon(1e-5));
  CHECK_THROWS_AS(ard_fit(d, 2.0, 1e-15, {.update = ArdUpdate::kEmFixedPoint, .max_iterations = 2}), ConvergenceError);
}

TEST_CASE("ARD evidence decreases along its own iterations") {
  std::mt19937_64 rng(70);
  const Dataset d = random_dataset(rng, 25, 5);
  const double start = ard_negative_log_evidence(d, 1.0, VectorXd::Ones(5));
  const BaselineEstimate e = ard_fit(d, 1.0);
  CHECK(ard_negative_log_evidence(d, 1.0, *e.gamma_hat) <= start);
}
