#include "bmask/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "bmask/baselines.hpp"

namespace bmask {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Eigen::VectorXd gaussian_noise(std::mt19937_64& rng, Index n, double variance) {
  if (variance == 0.0) return Eigen::VectorXd::Zero(n);
  std::normal_distribution<double> normal(0.0, std::sqrt(variance));
  Eigen::VectorXd e(n);
  for (Index i = 0; i < n; ++i) e(i) = normal(rng);
  return e;
}

// Runs body(i) for i in [0, count) on up to `threads` workers.
template <typename Body>
void parallel_for(int count, int threads, Body&& body) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) body(i);
    });
  }
}

MethodOutcome baseline_outcome(const std::string& name, const BaselineEstimate& est) {
  MethodOutcome out;
  out.method = name;
  out.ok = true;
  out.beta_hat = est.beta_hat;
  out.pruned = est.zero_mask();
  out.alpha = est.alpha;
  return out;
}

MethodOutcome failed_outcome(const std::string& name, const std::string& error, Index k) {
  MethodOutcome out;
  out.method = name;
  out.ok = false;
  out.error = error;
  out.beta_hat = Eigen::VectorXd::Zero(k);
  out.pruned.assign(static_cast<std::size_t>(k), false);
  return out;
}

MethodSummary summarize(const std::string& name, const std::vector<TrialRecord>& trials, Index k) {
  MethodSummary s;
  s.method = name;
  s.mean_beta_when_pruned = Eigen::VectorXd::Zero(k);
  std::vector<double> precision, recall, f1, wrong;
  for (const TrialRecord& t : trials) {
    const auto it = std::find_if(t.methods.begin(), t.methods.end(), [&](const MethodOutcome& m) { return m.method == name; });
    if (it == t.methods.end()) continue;
    if (!it->ok) {
      ++s.trials_failed;
      continue;
    }
    ++s.trials_ok;
    const SelectionScore& sc = it->score;
    if (sc.precision) precision.push_back(*sc.precision);
    if (sc.recall) recall.push_back(*sc.recall);
    if (sc.f1) f1.push_back(*sc.f1);
    wrong.push_back(static_cast<double>(sc.m2 - sc.m3));
    s.prune_events += sc.m3;
    s.prune_opportunities += sc.m1;
    if (sc.m1 > 0 && sc.m3 == sc.m1) {
      ++s.trials_all_irrelevant_pruned;
      s.mean_beta_when_pruned += it->beta_hat;
    }
  }
  s.precision = mean_se(precision);
  s.recall = mean_se(recall);
  s.f1 = mean_se(f1);
  s.wrongly_pruned = mean_se(wrong);
  if (s.prune_opportunities > 0) {
    s.prune_frequency = static_cast<double>(s.prune_events) / s.prune_opportunities;
    s.prune_ci = binomial_ci95(s.prune_events, s.prune_opportunities);
  }
  if (s.trials_all_irrelevant_pruned > 0) s.mean_beta_when_pruned /= s.trials_all_irrelevant_pruned;
  return s;
}

}  // namespace

Dataset gen_toy(std::uint64_t seed, int pairs, double noise_variance) {
  if (pairs < 1) throw std::invalid_argument("toy data needs at least one pair");
  if (!(noise_variance >= 0.0)) throw std::invalid_argument("noise variance must be non-negative");
  const Index n = 2 * static_cast<Index>(pairs);
  Dataset d;
  d.x.resize(n, 2);
  for (Index p = 0; p < pairs; ++p) {
    d.x.row(2 * p) << 1.0, 0.0;
    d.x.row(2 * p + 1) << 0.5, 1.0;
  }
  d.true_beta = Eigen::Vector2d(0.0, 1.0);
  d.true_irrelevant = std::vector<Index>{0};
  std::mt19937_64 rng(seed);
  d.y = d.x * *d.true_beta + gaussian_noise(rng, n, noise_variance);
  return d;
}

Dataset gen_uniform(std::uint64_t seed, Index k, int multiplier, double noise_variance) {
  if (k < 2) throw std::invalid_argument("uniform data needs K >= 2");
  if (multiplier < 1) throw std::invalid_argument("sample multiplier must be positive");
  if (!(noise_variance >= 0.0)) throw std::invalid_argument("noise variance must be non-negative");
  const Index n = static_cast<Index>(multiplier) * k;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Dataset d;
  d.x.resize(n, k);
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < n; ++i) d.x(i, j) = unif(rng);
  Eigen::VectorXd beta(k);
  for (Index j = 0; j < k; ++j) beta(j) = unif(rng);
  std::vector<Index> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Index> zeros(idx.begin(), idx.begin() + k / 2);
  std::sort(zeros.begin(), zeros.end());
  for (Index j : zeros) beta(j) = 0.0;
  d.true_beta = beta;
  d.true_irrelevant = zeros;
  d.y = d.x * beta + gaussian_noise(rng, n, noise_variance);
  return d;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kToyK2: return "toy";
    case ExperimentKind::kUniformK: return "uniform";
  }
  return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  if (s == "toy" || s == "TOY_K2") return ExperimentKind::kToyK2;
  if (s == "uniform" || s == "UNIFORM_K") return ExperimentKind::kUniformK;
  throw std::invalid_argument("unknown experiment kind '" + s + "'");
}

void ExperimentSpec::validate() const {
  if (kind == ExperimentKind::kToyK2 && k != 2) throw std::invalid_argument("toy experiment has K = 2");
  if (kind == ExperimentKind::kUniformK && k < 2) throw std::invalid_argument("uniform experiment needs K >= 2");
  if (trials < 1) throw std::invalid_argument("trials must be positive");
  if (!(noise_variance > 0.0)) throw std::invalid_argument("noise variance must be positive");
  if (sample_multiplier < 1) throw std::invalid_argument("sample multiplier must be positive");
  if (pairs < 1) throw std::invalid_argument("pairs must be positive");
  if (baselines.folds < 2) throw std::invalid_argument("cross validation needs at least 2 folds");
  solver.validate();
}

ExperimentSpec ExperimentSpec::toy_defaults() {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::kToyK2;
  spec.k = 2;
  spec.trials = 500;
  spec.solver.variant = Variant::kEM;
  spec.solver.delta = kMachineEpsilon;
  spec.baselines.folds = 2;
  spec.noise_variance = 0.005;
  spec.pairs = 20;
  spec.known_noise = true;
  return spec;
}

ExperimentSpec ExperimentSpec::uniform_defaults(Index k) {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::kUniformK;
  spec.k = k;
  spec.trials = 100;
  spec.solver.variant = Variant::kHybrid;
  spec.solver.switch_iteration = 500;
  spec.solver.delta = 1e-3;
  spec.baselines.folds = 10;
  spec.noise_variance = 0.2;
  spec.sample_multiplier = 20;
  spec.known_noise = false;
  return spec;
}

const MethodSummary& ComparisonTable::method(const std::string& name) const {
  for (const MethodSummary& s : summary) {
    if (s.method == name) return s;
  }
  throw std::out_of_range("no summary for method '" + name + "'");
}

MeanSe mean_se(const std::vector<double>& values) {
  MeanSe out;
  out.n = static_cast<int>(values.size());
  if (values.empty()) return out;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  out.mean = mean;
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    out.se = sd / std::sqrt(static_cast<double>(values.size()));
  }
  return out;
}

BinomialInterval binomial_ci95(int successes, int n) {
  if (n <= 0) return {0.0, 1.0};
  constexpr double z = 1.959963984540054;
  const double nd = n;
  const double p = successes / nd;
  const double denom = 1.0 + z * z / nd;
  const double centre = (p + z * z / (2.0 * nd)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nd + z * z / (4.0 * nd * nd)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

MethodOutcome run_bm(const Dataset& data, const SolverConfig& config) {
  MethodOutcome out;
  out.method = "bm";
  try {
    const FitResult fr = fit(data, config);
    out.ok = fr.ok();
    out.error = fr.ok() ? "" : std::string(to_string(fr.status)) + ": " + fr.message;
    out.beta_hat = fr.beta_full();
    out.pruned = fr.pruned_mask();
    out.iterations = fr.history.back().iteration;
  } catch (const std::exception& e) {
    return failed_outcome("bm", e.what(), data.features());
  }
  return out;
}

ComparisonTable run_comparison(const ExperimentSpec& spec) {
  spec.validate();
  ComparisonTable table;
  table.spec = spec;
  table.trials.resize(static_cast<std::size_t>(spec.trials));

  parallel_for(spec.trials, spec.threads, [&](int i) {
    TrialRecord& rec = table.trials[static_cast<std::size_t>(i)];
    rec.trial = i;
    rec.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(i));
    const Dataset data = spec.kind == ExperimentKind::kToyK2
                             ? gen_toy(rec.seed, spec.pairs, spec.noise_variance)
                             : gen_uniform(rec.seed, spec.k, spec.sample_multiplier, spec.noise_variance);
    rec.true_beta = *data.true_beta;
    const std::vector<bool> truth = *data.truth_zero_mask();
    const Index k = data.features();

    SolverConfig solver = spec.solver;
    solver.record_snapshots = false;
    std::optional<double> lambda;
    if (spec.known_noise) {
      lambda = 1.0 / spec.noise_variance;
      solver.known_lambda = lambda;
    } else {
      try {
        lambda = unbiased_noise_precision(data);
      } catch (const std::exception&) {
      }
    }

    rec.methods.push_back(run_bm(data, solver));

    if (!lambda) {
      rec.methods.push_back(failed_outcome("lasso", "noise precision unavailable", k));
      rec.methods.push_back(failed_outcome("ard", "noise precision unavailable", k));
    } else {
      try {
        const std::vector<double> grid = spec.baselines.alpha_grid ? *spec.baselines.alpha_grid
                                                                   : default_alpha_grid(data.samples());
        rec.methods.push_back(
            baseline_outcome("lasso", lasso_cv(data, *lambda, spec.baselines.folds, grid, derive_seed(rec.seed, 1))));
      } catch (const std::exception& e) {
        rec.methods.push_back(failed_outcome("lasso", e.what(), k));
      }
      try {
        rec.methods.push_back(baseline_outcome("ard", ard_fit(data, *lambda)));
      } catch (const std::exception& e) {
        rec.methods.push_back(failed_outcome("ard", e.what(), k));
      }
    }
    for (MethodOutcome& m : rec.methods) {
      if (m.ok) m.score = score_selection(m.pruned, truth);
    }
  });

  for (const char* name : {"bm", "lasso", "ard"}) table.summary.push_back(summarize(name, table.trials, spec.k));
  return table;
}

const char* to_string(TrajectoryAlgorithm a) {
  switch (a) {
    case TrajectoryAlgorithm::kEM: return "em";
    case TrajectoryAlgorithm::kEG: return "eg";
    case TrajectoryAlgorithm::kEGNoReparam: return "eg_no_reparam";
  }
  return "unknown";
}

std::vector<std::pair<double, double>> default_initial_points() {
  std::vector<std::pair<double, double>> pts;
  for (int i = 1; i <= 10; ++i) pts.emplace_back(0.1 * i, 0.09 * i + 0.05);
  return pts;
}

std::vector<TrajectoryRecord> run_trajectories(std::uint64_t seed, int n_samples,
                                               const std::vector<std::pair<double, double>>& initial_points,
                                               const TrajectoryOptions& options) {
  if (n_samples < 2 || n_samples % 2 != 0) throw std::invalid_argument("trajectory sample count must be even");
  for (const auto& [b, p] : initial_points) {
    if (!(b > 0.0) || !(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument("initial points need beta > 0 and 0 < pi < 1");
    }
  }
  const Dataset data = gen_toy(seed, n_samples / 2, options.noise_variance);
  const double lambda = 1.0 / options.noise_variance;

  std::vector<TrajectoryRecord> out;
  for (TrajectoryAlgorithm algo : {TrajectoryAlgorithm::kEM, TrajectoryAlgorithm::kEG, TrajectoryAlgorithm::kEGNoReparam}) {
    for (const auto& [b0, p0] : initial_points) {
      BMState init;
      init.active = {0, 1};
      init.beta = Eigen::Vector2d(b0, 1.0);
      init.pi = Eigen::Vector2d(p0, 1.0);
      init.mu.resize(data.samples(), 2);
      init.mu.col(0).setConstant(p0);
      init.mu.col(1).setConstant(1.0);
      init.lambda = lambda;

      SolverConfig cfg;
      cfg.variant = algo == TrajectoryAlgorithm::kEM ? Variant::kEM : Variant::kEG;
      cfg.reparametrize = algo != TrajectoryAlgorithm::kEGNoReparam;
      cfg.eta = algo == TrajectoryAlgorithm::kEGNoReparam ? options.eta_plain : options.eta_reparam;
      cfg.pi_step_cap = std::numeric_limits<double>::infinity();
      cfg.max_iterations = options.budget;
      cfg.tolerance = 0.0;
      cfg.delta = options.delta;
      cfg.known_lambda = lambda;
      cfg.record_snapshots = false;

      TrajectoryRecord rec;
      rec.algorithm = algo;
      rec.initial_beta1 = b0;
      rec.initial_pi1 = p0;
      rec.points.push_back({0, b0, p0});
      const FitResult fr = fit_from(init, data, cfg, [&](const IterationRecord& it, const BMState& s) {
        if (s.active.empty() || s.active.front() != 0) return false;
        rec.points.push_back({it.iteration, s.beta(0), s.pi(0)});
        return true;
      });
      if (const auto hit = fr.pruned_at.find(0); hit != fr.pruned_at.end()) rec.pruned_at = hit->second;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

std::optional<int> RaceSeries::iterations_to_reach(int count) const {
  for (const RacePoint& p : points) {
    if (p.correctly_pruned >= count) return p.iteration;
  }
  return std::nullopt;
}

RaceResult run_convergence_race(std::uint64_t seed, Index k, int switch_iteration, const RaceOptions& options) {
  if (k < 2) throw std::invalid_argument("race needs K >= 2");
  if (switch_iteration < 0) throw std::invalid_argument("switch iteration must be non-negative");
  const Dataset data = gen_uniform(seed, k, options.multiplier, options.noise_variance);
  const std::vector<bool> truth = *data.truth_zero_mask();

  RaceResult result;
  result.seed = seed;
  result.k = k;
  result.switch_iteration = switch_iteration;

  const auto run = [&](Variant variant, const char* name) {
    SolverConfig cfg;
    cfg.variant = variant;
    cfg.switch_iteration = switch_iteration;
    cfg.delta = options.delta;
    cfg.max_iterations = options.max_iterations;
    cfg.tolerance = options.tolerance;
    cfg.record_snapshots = false;

    RaceSeries series;
    series.algorithm = name;
    const auto count = [&](const BMState& s) {
      std::vector<bool> kept(static_cast<std::size_t>(k), false);
      for (Index j : s.active) kept[static_cast<std::size_t>(j)] = true;
      int correct = 0, wrong = 0;
      for (std::size_t j = 0; j < kept.size(); ++j) {
        if (kept[j]) continue;
        (truth[j] ? correct : wrong) += 1;
      }
      return std::pair{correct, wrong};
    };
    const FitResult fr = fit(data, cfg, [&](const IterationRecord& it, const BMState& s) {
      const auto [correct, wrong] = count(s);
      series.points.push_back({it.iteration, it.elapsed_seconds, correct, wrong, it.objective});
      return true;
    });
    series.status = fr.status;
    const auto [correct, wrong] = count(fr.state);
    series.final_correctly_pruned = correct;
    series.final_wrongly_pruned = wrong;
    return series;
  };
  result.hybrid = run(Variant::kHybrid, "hybrid");
  result.em = run(Variant::kEM, "em");
  return result;
}

}  // namespace bmask
