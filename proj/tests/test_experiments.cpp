#include <cmath>
#include <filesystem>

#include "doctest.h"

#include "bmask/experiments.hpp"
#include "bmask/io.hpp"

using namespace bmask;
namespace fs = std::filesystem;

namespace {

ExperimentSpec small_toy(int trials) {
  ExperimentSpec spec = ExperimentSpec::toy_defaults();
  spec.trials = trials;
  spec.seed = 11;
  spec.threads = 1;
  return spec;
}

void check_same(const ComparisonTable& a, const ComparisonTable& b) {
  REQUIRE(a.trials.size() == b.trials.size());
  for (std::size_t t = 0; t < a.trials.size(); ++t) {
    CHECK(a.trials[t].seed == b.trials[t].seed);
    REQUIRE(a.trials[t].methods.size() == b.trials[t].methods.size());
    for (std::size_t m = 0; m < a.trials[t].methods.size(); ++m) {
      const MethodOutcome& x = a.trials[t].methods[m];
      const MethodOutcome& y = b.trials[t].methods[m];
      CHECK(x.method == y.method);
      CHECK(x.ok == y.ok);
      CHECK(x.beta_hat == y.beta_hat);
      CHECK(x.pruned == y.pruned);
      CHECK(x.iterations == y.iterations);
    }
  }
}

}  // namespace

TEST_CASE("run_comparison is deterministic and structurally complete") {
  const ComparisonTable a = run_comparison(small_toy(3));
  const ComparisonTable b = run_comparison(small_toy(3));
  check_same(a, b);
  REQUIRE(a.summary.size() == 3);
  for (const char* name : {"bm", "lasso", "ard"}) {
    const MethodSummary& s = a.method(name);
    CHECK(s.trials_ok + s.trials_failed == 3);
    CHECK(s.prune_opportunities == s.trials_ok);  // one irrelevant feature per toy trial
    CHECK(s.prune_ci.low <= s.prune_frequency);
    CHECK(s.prune_ci.high >= s.prune_frequency);
  }
  for (const TrialRecord& r : a.trials) {
    REQUIRE(r.methods.size() == 3);
    CHECK(r.methods[0].method == "bm");
    CHECK(r.methods[1].method == "lasso");
    CHECK(r.methods[2].method == "ard");
  }
  CHECK_THROWS(a.method("nope"));

  // Thread count does not change results.
  ExperimentSpec threaded = small_toy(3);
  threaded.threads = 3;
  check_same(a, run_comparison(threaded));
}

TEST_CASE("run_comparison records failures without aborting") {
  ExperimentSpec spec = ExperimentSpec::uniform_defaults(4);
  spec.trials = 2;
  spec.sample_multiplier = 1;  // N = K: no residual degrees of freedom
  spec.known_noise = false;
  spec.threads = 1;
  spec.solver.max_iterations = 50;
  spec.solver.switch_iteration = 10;
  const ComparisonTable t = run_comparison(spec);
  REQUIRE(t.trials.size() == 2);
  for (const TrialRecord& r : t.trials) {
    REQUIRE(r.methods.size() == 3);
    for (std::size_t m = 1; m < 3; ++m) {
      CHECK_FALSE(r.methods[m].ok);
      CHECK_FALSE(r.methods[m].error.empty());
    }
  }
  CHECK(t.method("lasso").trials_failed == 2);
  CHECK(t.method("ard").trials_failed == 2);
  CHECK_FALSE(t.method("ard").f1.mean);
}

TEST_CASE("mean_se examples") {
  const MeanSe e = mean_se({});
  CHECK(e.n == 0);
  CHECK_FALSE(e.mean);
  const MeanSe one = mean_se({3.0});
  CHECK(*one.mean == 3.0);
  CHECK_FALSE(one.se);
  const MeanSe m = mean_se({1.0, 2.0, 3.0, 4.0});
  CHECK(*m.mean == doctest::Approx(2.5));
  CHECK(*m.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
}

TEST_CASE("binomial_ci95 examples") {
  const BinomialInterval half = binomial_ci95(50, 100);
  CHECK(half.low == doctest::Approx(0.4038).epsilon(1e-3));
  CHECK(half.high == doctest::Approx(0.5962).epsilon(1e-3));
  const BinomialInterval zero = binomial_ci95(0, 20);
  CHECK(zero.low == 0.0);
  CHECK(zero.high > 0.0);
  const BinomialInterval all = binomial_ci95(20, 20);
  CHECK(all.high == doctest::Approx(1.0));
  CHECK(all.low < 1.0);
  const BinomialInterval wide = binomial_ci95(30, 100), narrow = binomial_ci95(150, 500);
  CHECK(narrow.high - narrow.low < wide.high - wide.low);
  const BinomialInterval none = binomial_ci95(0, 0);
  CHECK(none.low == 0.0);
  CHECK(none.high == 1.0);
}

TEST_CASE("run_trajectories is deterministic and well formed") {
  TrajectoryOptions opt;
  opt.budget = 300;
  const std::vector<std::pair<double, double>> pts = {{0.2, 0.23}, {0.5, 0.5}};
  const auto a = run_trajectories(3, 100, pts, opt);
  const auto b = run_trajectories(3, 100, pts, opt);
  REQUIRE(a.size() == 6);
  REQUIRE(b.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].algorithm == b[i].algorithm);
    CHECK(a[i].pruned_at == b[i].pruned_at);
    REQUIRE(a[i].points.size() == b[i].points.size());
    REQUIRE_FALSE(a[i].points.empty());
    CHECK(a[i].points.front().beta1 == a[i].initial_beta1);
    CHECK(a[i].points.front().pi1 == a[i].initial_pi1);
    for (std::size_t p = 0; p < a[i].points.size(); ++p) {
      CHECK(a[i].points[p].beta1 == b[i].points[p].beta1);
      CHECK(a[i].points[p].pi1 == b[i].points[p].pi1);
      CHECK(a[i].points[p].pi1 >= 0.0);
      CHECK(a[i].points[p].pi1 <= 1.0);
      if (p > 0) CHECK(a[i].points[p].iteration > a[i].points[p - 1].iteration);
    }
    if (a[i].pruned_at) CHECK(*a[i].pruned_at <= opt.budget);
  }
  CHECK(default_initial_points().size() == 10);
  CHECK(default_initial_points()[9].first == doctest::Approx(1.0));
  CHECK(default_initial_points()[9].second == doctest::Approx(0.95));
  CHECK_THROWS_AS(run_trajectories(3, 99, pts, opt), std::invalid_argument);
  CHECK_THROWS_AS(run_trajectories(3, 100, {{0.0, 0.5}}, opt), std::invalid_argument);
  CHECK_THROWS_AS(run_trajectories(3, 100, {{0.5, 1.0}}, opt), std::invalid_argument);
}

TEST_CASE("convergence race with switch at the cap matches FAB-EM") {
  RaceOptions opt;
  opt.max_iterations = 200;
  const RaceResult r = run_convergence_race(5, 6, opt.max_iterations, opt);
  REQUIRE(r.hybrid.points.size() == r.em.points.size());
  for (std::size_t i = 0; i < r.em.points.size(); ++i) {
    CHECK(r.hybrid.points[i].iteration == r.em.points[i].iteration);
    CHECK(r.hybrid.points[i].objective == r.em.points[i].objective);
    CHECK(r.hybrid.points[i].correctly_pruned == r.em.points[i].correctly_pruned);
  }
  CHECK(r.hybrid.final_correctly_pruned == r.em.final_correctly_pruned);
  CHECK(r.hybrid.final_correctly_pruned + r.hybrid.final_wrongly_pruned <= 6);
  CHECK_THROWS_AS(run_convergence_race(5, 1, 10, opt), std::invalid_argument);
}

TEST_CASE("iterations_to_reach picks the first qualifying point") {
  RaceSeries s;
  s.points = {{1, 0.0, 0, 0, 0.0}, {2, 0.0, 1, 0, 0.0}, {5, 0.0, 3, 0, 0.0}, {7, 0.0, 2, 1, 0.0}};
  CHECK(*s.iterations_to_reach(0) == 1);
  CHECK(*s.iterations_to_reach(1) == 2);
  CHECK(*s.iterations_to_reach(2) == 5);
  CHECK(*s.iterations_to_reach(3) == 5);
  CHECK_FALSE(s.iterations_to_reach(4));
}

TEST_CASE("ExperimentSpec JSON round-trip and validation") {
  ExperimentSpec spec = ExperimentSpec::uniform_defaults(30);
  spec.trials = 7;
  spec.seed = 99;
  spec.baselines.alpha_grid = std::vector<double>{0.1, 1.0};
  const ExperimentSpec back = experiment_spec_from_json(to_json(spec));
  CHECK(back.kind == spec.kind);
  CHECK(back.k == 30);
  CHECK(back.trials == 7);
  CHECK(back.seed == 99);
  CHECK(back.solver.variant == spec.solver.variant);
  CHECK(back.solver.delta == spec.solver.delta);
  CHECK(back.solver.switch_iteration == spec.solver.switch_iteration);
  CHECK(back.baselines.folds == spec.baselines.folds);
  CHECK(*back.baselines.alpha_grid == *spec.baselines.alpha_grid);
  CHECK(back.noise_variance == spec.noise_variance);
  CHECK(back.known_noise == spec.known_noise);
  CHECK(to_json(back) == to_json(spec));

  CHECK_NOTHROW(ExperimentSpec::toy_defaults().validate());
  ExperimentSpec bad = ExperimentSpec::toy_defaults();
  bad.k = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ExperimentSpec::toy_defaults();
  bad.trials = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ExperimentSpec::toy_defaults();
  bad.noise_variance = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ExperimentSpec::toy_defaults();
  bad.baselines.folds = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ExperimentSpec::uniform_defaults(1);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS(run_comparison(bad));
  CHECK(experiment_kind_from_string(to_string(ExperimentKind::kUniformK)) == ExperimentKind::kUniformK);
  CHECK_THROWS(experiment_kind_from_string("other"));
}

TEST_CASE("experiment writers produce their files") {
  const fs::path dir = fs::temp_directory_path() / "bmask_test_writers";
  fs::remove_all(dir);
  write_comparison(run_comparison(small_toy(2)), dir / "cmp");
  CHECK(fs::exists(dir / "cmp" / "trials.csv"));
  CHECK(fs::exists(dir / "cmp" / "summary.csv"));
  CHECK(fs::exists(dir / "cmp" / "manifest.json"));

  TrajectoryOptions opt;
  opt.budget = 50;
  write_trajectories(run_trajectories(1, 20, {{0.5, 0.5}}, opt), dir / "traj");
  for (const char* a : {"em", "eg", "eg_no_reparam"}) {
    CHECK(fs::exists(dir / "traj" / (std::string("trajectory_") + a + ".csv")));
  }

  RaceOptions ro;
  ro.max_iterations = 30;
  write_race(run_convergence_race(2, 4, 10, ro), dir / "race");
  CHECK(fs::exists(dir / "race" / "race_hybrid.csv"));
  CHECK(fs::exists(dir / "race" / "race_em.csv"));
  const auto summary = read_json(dir / "race" / "race_summary.json");
  CHECK(summary.contains("hybrid"));
}
