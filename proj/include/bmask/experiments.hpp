#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bmask/analysis.hpp"
#include "bmask/dataset.hpp"
#include "bmask/fab_solvers.hpp"

namespace bmask {

// ---------------------------------------------------------------------------
// Synthetic data

/// Stacks `pairs` copies of the design [[1, 0], [0.5, 1]] with true weights
/// (0, 1) and Gaussian noise of the given variance. Feature 0 is irrelevant.
Dataset gen_toy(std::uint64_t seed, int pairs = 20, double noise_variance = 0.005);

/// N = multiplier * K samples, X and beta uniform on [0, 1], a random
/// floor(K / 2)-subset of beta set to zero, Gaussian noise.
Dataset gen_uniform(std::uint64_t seed, Index k, int multiplier = 20, double noise_variance = 0.2);

/// Counter-based seed split: independent stream `index` of `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// ---------------------------------------------------------------------------
// Method comparison

enum class ExperimentKind { kToyK2, kUniformK };

const char* to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct BaselineSettings {
  int folds = 2;
  std::optional<std::vector<double>> alpha_grid;  // default_alpha_grid(N) when absent
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kToyK2;
  Index k = 2;
  int trials = 500;
  std::uint64_t seed = 0;
  SolverConfig solver;
  BaselineSettings baselines;
  double noise_variance = 0.005;
  int sample_multiplier = 20;  // uniform: N = multiplier * K
  int pairs = 20;              // toy: N = 2 * pairs
  bool known_noise = true;     // all methods use lambda = 1 / noise_variance
  int threads = 0;             // 0: hardware concurrency

  void validate() const;

  /// Two-feature comparison: FAB-EM, machine-epsilon pruning, 2-fold CV,
  /// known noise variance 0.005.
  static ExperimentSpec toy_defaults();

  /// Larger-K comparison: hybrid with T = 500, delta = 1e-3, 10-fold CV,
  /// noise variance 0.2 estimated from the data.
  static ExperimentSpec uniform_defaults(Index k);
};

struct MethodOutcome {
  std::string method;  // "bm", "lasso", "ard"
  bool ok = false;
  std::string error;
  Eigen::VectorXd beta_hat;
  std::vector<bool> pruned;
  SelectionScore score;
  int iterations = 0;  // BM only
  std::optional<double> alpha;
};

struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd true_beta;
  std::vector<MethodOutcome> methods;
};

struct MeanSe {
  std::optional<double> mean;
  std::optional<double> se;
  int n = 0;
};

/// Sample mean and standard error; se needs at least two values.
MeanSe mean_se(const std::vector<double>& values);

struct BinomialInterval {
  double low = 0.0;
  double high = 1.0;
};

/// 95% Wilson score interval for `successes` out of `n`.
BinomialInterval binomial_ci95(int successes, int n);

struct MethodSummary {
  std::string method;
  int trials_ok = 0;
  int trials_failed = 0;
  MeanSe precision, recall, f1;
  MeanSe wrongly_pruned;
  int prune_events = 0;         // irrelevant features pruned, pooled over trials
  int prune_opportunities = 0;  // irrelevant features, pooled over trials
  double prune_frequency = 0.0;
  BinomialInterval prune_ci;
  int trials_all_irrelevant_pruned = 0;
  Eigen::VectorXd mean_beta_when_pruned;  // over trials where every irrelevant feature was pruned
};

struct ComparisonTable {
  ExperimentSpec spec;
  std::vector<TrialRecord> trials;
  std::vector<MethodSummary> summary;  // bm, lasso, ard

  const MethodSummary& method(const std::string& name) const;
};

/// Generates `trials` datasets and fits BM, Lasso-CV and ARD on each. Trial
/// failures are recorded per method and never abort the batch.
ComparisonTable run_comparison(const ExperimentSpec& spec);

MethodOutcome run_bm(const Dataset& data, const SolverConfig& config);

// ---------------------------------------------------------------------------
// Learning trajectories on the (beta_1, pi_1) plane

enum class TrajectoryAlgorithm { kEM, kEG, kEGNoReparam };

const char* to_string(TrajectoryAlgorithm a);

struct TrajectoryPoint {
  int iteration = 0;
  double beta1 = 0.0;
  double pi1 = 0.0;
};

struct TrajectoryRecord {
  TrajectoryAlgorithm algorithm = TrajectoryAlgorithm::kEM;
  double initial_beta1 = 0.0;
  double initial_pi1 = 0.0;
  std::vector<TrajectoryPoint> points;
  std::optional<int> pruned_at;  // iteration at which feature 1 was removed
};

struct TrajectoryOptions {
  double eta_reparam = 2e-6;
  double eta_plain = 2e-4;
  int budget = 50000;
  double delta = kMachineEpsilon;
  double noise_variance = 0.005;
};

/// (0.1 i, 0.09 i + 0.05) for i = 1..10.
std::vector<std::pair<double, double>> default_initial_points();

/// Runs FAB-EM, FAB-EG and FAB-EG without reparametrization on one toy
/// dataset of n_samples (even) rows from each initial (beta_1, pi_1), with
/// feature 2 started at its true values (1, 1).
std::vector<TrajectoryRecord> run_trajectories(std::uint64_t seed, int n_samples,
                                               const std::vector<std::pair<double, double>>& initial_points,
                                               const TrajectoryOptions& options = {});

// ---------------------------------------------------------------------------
// Hybrid vs FAB-EM convergence race

struct RacePoint {
  int iteration = 0;
  double elapsed_seconds = 0.0;
  int correctly_pruned = 0;
  int wrongly_pruned = 0;
  double objective = 0.0;
};

struct RaceSeries {
  std::string algorithm;  // "hybrid" or "em"
  std::vector<RacePoint> points;
  FitStatus status = FitStatus::kMaxIterations;
  int final_correctly_pruned = 0;
  int final_wrongly_pruned = 0;

  /// First iteration at which at least `count` features were correctly pruned.
  std::optional<int> iterations_to_reach(int count) const;
};

struct RaceOptions {
  int multiplier = 20;
  double noise_variance = 0.2;
  double delta = 1e-3;
  int max_iterations = 10000;
  double tolerance = 1e-8;
};

struct RaceResult {
  std::uint64_t seed = 0;
  Index k = 0;
  int switch_iteration = 0;
  RaceSeries hybrid;
  RaceSeries em;
};

RaceResult run_convergence_race(std::uint64_t seed, Index k, int switch_iteration, const RaceOptions& options = {});

}  // namespace bmask
