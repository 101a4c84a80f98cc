#include "bmask/fab_solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "bmask/error.hpp"

namespace bmask {
namespace {

constexpr double kSingularRcond = 1e-13;
constexpr double kDegenerateNoiseRel = 1e-13;

void require_open_unit_pi(const Eigen::VectorXd& pi) {
  for (Index k = 0; k < pi.size(); ++k) {
    if (!(pi(k) > 0.0 && pi(k) < 1.0)) {
      throw DomainError("E-step needs pi in (0, 1); pi[" + std::to_string(k) + "] = " + std::to_string(pi(k)));
    }
  }
}

// Gauss-Seidel update of mu in place. With saturate, pi_k == 1 is read as
// log-odds +inf (mu -> 1), the limit of the fixed-point equation.
void e_step_inplace(BMState& s, const Eigen::MatrixXd& xa, const Eigen::VectorXd& y, int sweeps, bool saturate) {
  if (sweeps < 1) throw std::invalid_argument("E-step needs at least one sweep");
  if (!saturate) require_open_unit_pi(s.pi);
  const Index n = xa.rows();
  const Index k = xa.cols();
  const auto nd = static_cast<double>(n);

  Eigen::VectorXd bias(k);
  for (Index j = 0; j < k; ++j) {
    const double p = s.pi(j);
    if (!(p > 0.0)) throw DomainError("E-step needs pi > 0");
    bias(j) = p >= 1.0 ? std::numeric_limits<double>::infinity()
                       : std::log(p / (1.0 - p)) - 1.0 / (2.0 * nd * p);
  }

  // Rows never interact, so sweeping feature columns over all rows at once
  // gives every row the same coordinate order as row-major passes.
  // sigma(t) rounds to exactly 1 for t > 37; capping t there avoids the slow
  // subnormal path of exp(-t) without changing any result.
  constexpr double kSaturatedLogit = 40.0;
  const Eigen::ArrayXd ya = y.array();
  Eigen::ArrayXd fitted = Eigen::ArrayXd::Zero(n);
  for (Index j = 0; j < k; ++j) fitted += xa.col(j).array() * s.mu.col(j).array() * s.beta(j);
  Eigen::ArrayXd xb(n), others(n), t(n);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (Index j = 0; j < k; ++j) {
      xb = xa.col(j).array() * s.beta(j);
      others = fitted - s.mu.col(j).array() * xb;
      t = (xb * s.lambda * (ya - 0.5 * xb - others) + bias(j)).min(kSaturatedLogit);
      s.mu.col(j) = (1.0 + (-t).exp()).inverse().matrix();
      fitted = others + s.mu.col(j).array() * xb;
    }
  }
}

// A column mean can round to exactly 1 while a few masks sit within rounding
// of 1, which would put (1 - mu) log(1 - pi) = -inf into the bound. Such
// columns are snapped to exactly 1, the value the next E-step produces anyway.
void snap_saturated_columns(BMState& s) {
  for (Index j = 0; j < s.pi.size(); ++j) {
    if (s.pi(j) >= 1.0) s.mu.col(j).setOnes();
  }
}

void m_step_inplace(BMState& s, const Eigen::MatrixXd& xa, const Eigen::VectorXd& y, bool update_lambda) {
  const Eigen::MatrixXd omega = masked_gram(xa, s.mu);
  // Symmetric diagonal scaling: a feature whose masks are nearly all off has
  // a tiny diagonal entry, which is a scale problem rather than singularity.
  const Eigen::ArrayXd d = omega.diagonal().array();
  if (!(d > 0.0).all()) throw SingularSystemError("masked Gram matrix Omega is singular");
  const Eigen::VectorXd inv_sqrt = d.rsqrt().matrix();
  const Eigen::MatrixXd scaled = inv_sqrt.asDiagonal() * omega * inv_sqrt.asDiagonal();
  Eigen::LLT<Eigen::MatrixXd> llt(scaled);
  if (llt.info() != Eigen::Success || !(llt.rcond() > kSingularRcond)) {
    throw SingularSystemError("masked Gram matrix Omega is singular");
  }
  const Eigen::VectorXd rhs = xa.cwiseProduct(s.mu).transpose() * y;
  s.beta = inv_sqrt.asDiagonal() * llt.solve(inv_sqrt.asDiagonal() * rhs);
  if (update_lambda) s.lambda = 1.0 / closed_form_noise_variance(xa, y, s.beta, s.mu);
  s.pi = s.mu.colwise().mean().transpose();
}

GStepDirection direction(const BMState& s, const Eigen::MatrixXd& xa, const Eigen::VectorXd& y, bool reparametrize) {
  const Gradient g = grad_beta_pi(s, xa, y);
  GStepDirection d;
  d.beta.resize(s.beta.size());
  d.pi.resize(s.pi.size());
  for (Index j = 0; j < s.beta.size(); ++j) {
    const double p = s.pi(j);
    if (p >= 1.0) {
      d.beta(j) = g.beta(j);
      d.pi(j) = 0.0;
      continue;
    }
    if (!reparametrize) {
      d.beta(j) = g.beta(j);
      d.pi(j) = g.pi(j);
      continue;
    }
    double b = s.beta(j);
    if (std::abs(b) < kBetaFloor) b = std::signbit(b) ? -kBetaFloor : kBetaFloor;
    const double ratio = p / b;
    d.beta(j) = g.beta(j) - ratio * g.pi(j);
    d.pi(j) = -ratio * g.beta(j) + (1.0 + p * p) / (b * b) * g.pi(j);
  }
  return d;
}

void apply_direction(BMState& s, const Eigen::MatrixXd& xa, const Eigen::VectorXd& y, const GStepDirection& d,
                     double eta_t, bool update_lambda) {
  if (!(eta_t > 0.0)) throw std::invalid_argument("learning coefficient must be positive");
  s.beta += eta_t * d.beta;
  for (Index j = 0; j < s.pi.size(); ++j) {
    s.pi(j) = std::clamp(s.pi(j) + eta_t * d.pi(j), kPiFloor, 1.0);
  }
  if (update_lambda) s.lambda = 1.0 / closed_form_noise_variance(xa, y, s.beta, s.mu);
}

void drop_columns(BMState& s, Eigen::MatrixXd* xa, const std::vector<Index>& keep) {
  const auto kk = static_cast<Index>(keep.size());
  Eigen::VectorXd beta(kk), pi(kk);
  Eigen::MatrixXd mu(s.mu.rows(), kk);
  std::vector<Index> active(keep.size());
  Eigen::MatrixXd x;
  if (xa) x.resize(xa->rows(), kk);
  for (Index j = 0; j < kk; ++j) {
    const Index src = keep[static_cast<std::size_t>(j)];
    beta(j) = s.beta(src);
    pi(j) = s.pi(src);
    mu.col(j) = s.mu.col(src);
    active[static_cast<std::size_t>(j)] = s.active[static_cast<std::size_t>(src)];
    if (xa) x.col(j) = xa->col(src);
  }
  s.beta = std::move(beta);
  s.pi = std::move(pi);
  s.mu = std::move(mu);
  s.active = std::move(active);
  if (xa) *xa = std::move(x);
}

// Positions (into the active list) of features that survive pruning.
std::vector<Index> survivors(const BMState& s, double delta) {
  std::vector<Index> keep;
  const auto n = static_cast<double>(s.mu.rows());
  for (Index j = 0; j < s.active_count(); ++j) {
    const double mean = s.mu.col(j).sum() / n;
    if (mean >= delta && mean > 0.0) keep.push_back(j);
  }
  return keep;
}

IterationRecord make_record(int iteration, double objective, double elapsed, const BMState& s, Index total,
                            bool snapshots) {
  IterationRecord rec;
  rec.iteration = iteration;
  rec.objective = objective;
  rec.elapsed_seconds = elapsed;
  rec.active_count = s.active_count();
  if (snapshots) {
    rec.pi = Eigen::VectorXd::Zero(total);
    rec.beta = Eigen::VectorXd::Zero(total);
    for (std::size_t j = 0; j < s.active.size(); ++j) {
      rec.pi(s.active[j]) = s.pi(static_cast<Index>(j));
      rec.beta(s.active[j]) = s.beta(static_cast<Index>(j));
    }
  }
  return rec;
}

}  // namespace

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kEM: return "em";
    case Variant::kEG: return "eg";
    case Variant::kHybrid: return "hybrid";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  if (s == "em") return Variant::kEM;
  if (s == "eg") return Variant::kEG;
  if (s == "hybrid") return Variant::kHybrid;
  throw std::invalid_argument("unknown solver variant '" + s + "'");
}

void SolverConfig::validate() const {
  if (!(delta >= 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in [0, 1)");
  if (eta && !(*eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (!(pi_step_cap > 0.0)) throw std::invalid_argument("pi_step_cap must be positive");
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be positive");
  if (!(tolerance >= 0.0)) throw std::invalid_argument("tolerance must be non-negative");
  if (e_step_sweeps < 1) throw std::invalid_argument("e_step_sweeps must be positive");
  if (switch_iteration < 0) throw std::invalid_argument("switch_iteration must be non-negative");
  if (known_lambda && !(*known_lambda > 0.0)) throw std::invalid_argument("known_lambda must be positive");
}

double closed_form_noise_variance(const Eigen::MatrixXd& x_active, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                          const Eigen::MatrixXd& mu) {
  const double inv_lambda = expected_squared_residuals(x_active, y, beta, mu).mean();
  const double scale = std::max(y.squaredNorm() / static_cast<double>(y.size()), std::numeric_limits<double>::min());
  if (!(inv_lambda > kDegenerateNoiseRel * scale)) {
    throw DegenerateNoiseError("expected residual variance collapsed to " + std::to_string(inv_lambda));
  }
  return inv_lambda;
}

BMState fab_e_step(const BMState& state, const Dataset& data, int sweeps) {
  BMState out = state;
  e_step_inplace(out, active_design(state, data), data.y, sweeps, /*saturate=*/false);
  return out;
}

BMState fab_m_step(const BMState& state, const Dataset& data, bool update_lambda) {
  BMState out = state;
  m_step_inplace(out, active_design(state, data), data.y, update_lambda);
  return out;
}

GStepDirection g_step_direction(const BMState& state, const Dataset& data, bool reparametrize) {
  return direction(state, active_design(state, data), data.y, reparametrize);
}

BMState fab_g_step(const BMState& state, const Dataset& data, double eta_t, GStepOptions options) {
  BMState out = state;
  const Eigen::MatrixXd xa = active_design(state, data);
  apply_direction(out, xa, data.y, direction(state, xa, data.y, options.reparametrize), eta_t,
                  options.update_lambda);
  return out;
}

PruneResult prune(const BMState& state, double delta) {
  PruneResult result;
  result.state = state;
  const std::vector<Index> keep = survivors(state, delta);
  if (static_cast<Index>(keep.size()) == state.active_count()) return result;
  std::size_t next = 0;
  for (Index j = 0; j < state.active_count(); ++j) {
    if (next < keep.size() && keep[next] == j) {
      ++next;
    } else {
      result.dropped.push_back(state.active[static_cast<std::size_t>(j)]);
    }
  }
  drop_columns(result.state, nullptr, keep);
  result.empty_model = keep.empty();
  return result;
}

double learning_coefficient(const BMState& state_before, const Eigen::VectorXd& proposed_pi_delta, double eta,
                            double cap) {
  if (!(eta > 0.0) || !(cap > 0.0)) throw std::invalid_argument("eta and cap must be positive");
  double largest = 0.0;
  for (Index j = 0; j < proposed_pi_delta.size(); ++j) {
    if (j < state_before.pi.size() && state_before.pi(j) >= 1.0) continue;
    const double a = std::abs(proposed_pi_delta(j));
    if (std::isfinite(a)) largest = std::max(largest, a);
  }
  if (largest <= cap) return eta;
  return eta * cap / largest;
}

BMState initialize(const Dataset& data, const SolverConfig& config) {
  const Index n = data.samples();
  const Index k = data.features();
  BMState s;
  s.active = BMState::all_features(k);
  if (config.init == InitPolicy::kRandomMasks) {
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unif(0.5, 1.0);
    s.mu.resize(n, k);
    for (Index j = 0; j < k; ++j)
      for (Index r = 0; r < n; ++r) s.mu(r, j) = unif(rng);
  } else {
    s.mu = Eigen::MatrixXd::Constant(n, k, 0.95);
  }
  s.pi = s.mu.colwise().mean().transpose();
  Eigen::MatrixXd gram = data.x.transpose() * data.x;
  gram.diagonal().array() += 1e-6;
  s.beta = gram.ldlt().solve(data.x.transpose() * data.y);
  s.lambda = config.known_lambda ? *config.known_lambda : 1.0 / closed_form_noise_variance(data.x, data.y, s.beta, s.mu);
  return s;
}

FitResult fit(const Dataset& data, const SolverConfig& config, const IterationObserver& observer) {
  data.validate();
  config.validate();
  return fit_from(initialize(data, config), data, config, observer);
}

FitResult fit_from(const BMState& initial, const Dataset& data, const SolverConfig& config,
                   const IterationObserver& observer) {
  data.validate();
  config.validate();
  initial.validate(data);

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  FitResult result;
  result.total_features = data.features();
  BMState s = initial;
  Eigen::MatrixXd xa = active_design(s, data);
  const double eta = config.eta ? *config.eta : 2e-2 / static_cast<double>(data.samples());
  const bool update_lambda = !config.known_lambda;
  if (config.known_lambda) s.lambda = *config.known_lambda;

  double previous = fic_terms(s, xa, data.y).total();
  result.history.push_back(make_record(0, previous, elapsed(), s, result.total_features, config.record_snapshots));
  result.status = FitStatus::kMaxIterations;

  for (int t = 0; t < config.max_iterations; ++t) {
    const BMState last_good = s;
    std::optional<Eigen::MatrixXd> last_xa;  // only needed when columns are dropped
    bool pruned = false;
    double objective = 0.0;
    try {
      e_step_inplace(s, xa, data.y, config.e_step_sweeps, /*saturate=*/true);

      const std::vector<Index> keep = survivors(s, config.delta);
      if (static_cast<Index>(keep.size()) != s.active_count()) {
        pruned = true;
        std::size_t next = 0;
        for (Index j = 0; j < s.active_count(); ++j) {
          if (next < keep.size() && keep[next] == j) {
            ++next;
          } else {
            result.pruned_at[s.active[static_cast<std::size_t>(j)]] = t + 1;
          }
        }
        last_xa = xa;
        drop_columns(s, &xa, keep);
      }
      if (s.active_count() == 0) {
        result.status = FitStatus::kEmptyModel;
        result.message = "all features pruned";
        result.history.push_back(
            make_record(t + 1, previous, elapsed(), s, result.total_features, config.record_snapshots));
        break;
      }

      const bool closed_form =
          config.variant == Variant::kEM || (config.variant == Variant::kHybrid && t < config.switch_iteration);
      if (closed_form) {
        m_step_inplace(s, xa, data.y, update_lambda);
        snap_saturated_columns(s);
      } else {
        const GStepDirection d = direction(s, xa, data.y, config.reparametrize);
        double eta_t = eta;
        if (std::isfinite(config.pi_step_cap)) {
          eta_t = learning_coefficient(s, eta * d.pi, eta, config.pi_step_cap);
        }
        apply_direction(s, xa, data.y, d, eta_t, update_lambda);
      }
      objective = fic_terms(s, xa, data.y).total();
    } catch (const SingularSystemError& e) {
      result.status = FitStatus::kSingularSystem;
      result.message = e.what();
    } catch (const DegenerateNoiseError& e) {
      result.status = FitStatus::kDegenerateNoise;
      result.message = e.what();
    } catch (const DomainError& e) {
      result.status = FitStatus::kDomainError;
      result.message = e.what();
    }
    if (!result.message.empty()) {
      std::erase_if(result.pruned_at, [&](const auto& entry) { return entry.second == t + 1; });
      s = last_good;
      if (last_xa) xa = std::move(*last_xa);
      break;
    }

    result.history.push_back(
        make_record(t + 1, objective, elapsed(), s, result.total_features, config.record_snapshots));
    if (observer && !observer(result.history.back(), s)) {
      result.status = FitStatus::kStopped;
      break;
    }
    if (!pruned && config.tolerance > 0.0 && std::isfinite(objective) && std::isfinite(previous) &&
        std::abs(objective - previous) / (std::abs(previous) + 1.0) < config.tolerance) {
      result.status = FitStatus::kConverged;
      break;
    }
    previous = objective;
  }

  result.state = std::move(s);
  return result;
}

}  // namespace bmask
