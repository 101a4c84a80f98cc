#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bmask/core_model.hpp"
#include "bmask/dataset.hpp"

namespace bmask {

enum class Variant {
  kEM,      // FAB-EM: closed-form M-step every iteration
  kEG,      // FAB-EG: reparametrized gradient step every iteration
  kHybrid,  // FAB-EM for iterations t < switch_iteration, FAB-EG afterwards
};

enum class InitPolicy {
  kDefault,      // mu = 0.95, ridge beta
  kRandomMasks,  // mu ~ U[0.5, 1) from the seed, ridge beta
};

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

inline constexpr double kMachineEpsilon = std::numeric_limits<double>::epsilon();
inline constexpr double kBetaFloor = 1e-8;
inline constexpr double kPiFloor = 1e-12;

struct SolverConfig {
  Variant variant = Variant::kEM;
  double delta = kMachineEpsilon;  // prune when column mean of mu < delta
  int switch_iteration = 0;        // T, hybrid only
  std::optional<double> eta;       // base learning coefficient; default 2e-2 / N
  double pi_step_cap = 0.05;       // +inf disables the cap
  int max_iterations = 10000;
  double tolerance = 1e-8;         // on |dG| / (|G| + 1); 0 disables
  int e_step_sweeps = 3;
  std::uint64_t seed = 0;
  InitPolicy init = InitPolicy::kDefault;
  bool reparametrize = true;         // false: plain gradient on (beta, pi)
  std::optional<double> known_lambda;  // fix the noise precision instead of estimating it
  bool record_snapshots = true;      // keep pi/beta per iteration in the history

  /// Throws std::invalid_argument on out-of-range settings.
  void validate() const;
};

/// Gauss-Seidel fixed-point passes of the mask posterior update. Throws
/// DomainError if any pi_k is 0 or 1.
BMState fab_e_step(const BMState& state, const Dataset& data, int sweeps);

/// Closed-form beta, lambda (using the new beta) and pi given mu. Throws
/// SingularSystemError / DegenerateNoiseError.
BMState fab_m_step(const BMState& state, const Dataset& data, bool update_lambda = true);

/// Closed-form noise variance 1/lambda for the current beta and mu. Throws
/// DegenerateNoiseError when it collapses to zero.
double closed_form_noise_variance(const Eigen::MatrixXd& x_active, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& beta, const Eigen::MatrixXd& mu);

/// Per-unit-step update of (beta, pi) used by the G-step.
struct GStepDirection {
  Eigen::VectorXd beta;
  Eigen::VectorXd pi;  // 0 where pi_k == 1
};

/// With reparametrize, the gradient is taken in (beta, s = beta * pi) and
/// pulled back, i.e. [[1, -pi/beta], [-pi/beta, (1 + pi^2)/beta^2]] grad;
/// without, it is the plain gradient. |beta| below kBetaFloor is replaced by
/// sign(beta) * kBetaFloor in those factors.
GStepDirection g_step_direction(const BMState& state, const Dataset& data, bool reparametrize = true);

struct GStepOptions {
  bool reparametrize = true;
  bool update_lambda = true;
};

BMState fab_g_step(const BMState& state, const Dataset& data, double eta_t, GStepOptions options = {});

struct PruneResult {
  BMState state;
  std::vector<Index> dropped;  // original feature indices
  bool empty_model = false;
};

/// Drops every active feature whose mu column mean is below delta (or is
/// exactly zero). Survivors keep their relative order.
PruneResult prune(const BMState& state, double delta);

/// Learning coefficient for one G-step: eta, shrunk so that the largest
/// |proposed_pi_delta| (computed with eta) becomes exactly cap.
double learning_coefficient(const BMState& state_before, const Eigen::VectorXd& proposed_pi_delta, double eta,
                            double cap);

/// Default starting point: mu = 0.95 (or random masks), pi from the column
/// means, ridge beta, lambda by the closed form.
BMState initialize(const Dataset& data, const SolverConfig& config);

/// Called after every iteration; return false to stop the fit.
using IterationObserver = std::function<bool(const IterationRecord&, const BMState&)>;

/// Runs FAB-EM, FAB-EG or the hybrid. Numerical failures end the fit with
/// the matching FitStatus; `state` then holds the last valid state.
FitResult fit(const Dataset& data, const SolverConfig& config, const IterationObserver& observer = {});

/// Same, from a caller-supplied starting state.
FitResult fit_from(const BMState& initial, const Dataset& data, const SolverConfig& config,
                   const IterationObserver& observer = {});

}  // namespace bmask
