// Command-line driver: data generation, single fits and the experiment suite.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bmask/baselines.hpp"
#include "bmask/error.hpp"
#include "bmask/experiments.hpp"
#include "bmask/fab_solvers.hpp"
#include "bmask/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GenArgs {
  std::string kind = "toy";
  bmask::Index k = 2;
  std::uint64_t seed = 0;
  int pairs = 20;
  int multiplier = 20;
  std::optional<double> noise_variance;
  std::string out;
};

struct FitArgs {
  std::string data;
  std::string method = "bm-em";
  std::optional<double> delta;
  std::optional<double> eta;
  std::optional<int> switch_t;
  int folds = 10;
  std::uint64_t seed = 0;
  std::optional<double> lambda;
  std::optional<int> max_iter;
  std::string out;
};

struct TrajectoryArgs {
  std::uint64_t seed = 0;
  int samples = 100;
  int budget = 50000;
  std::string points;  // "b,p;b,p;..."
  std::string out;
};

struct RaceArgs {
  bmask::Index k = 50;
  int switch_t = 200;
  std::uint64_t seed = 0;
  int max_iter = 10000;
  std::string out;
};

fs::path history_path_for(const fs::path& out) {
  fs::path p = out;
  p.replace_extension(".history.csv");
  return p;
}

void run_gen(const GenArgs& a) {
  bmask::Dataset d;
  json body;
  body["seed"] = a.seed;
  if (a.kind == "toy") {
    const double nv = a.noise_variance.value_or(0.005);
    d = bmask::gen_toy(a.seed, a.pairs, nv);
    body["kind"] = "toy";
    body["pairs"] = a.pairs;
    body["noise_variance"] = nv;
  } else if (a.kind == "uniform") {
    const double nv = a.noise_variance.value_or(0.2);
    d = bmask::gen_uniform(a.seed, a.k, a.multiplier, nv);
    body["kind"] = "uniform";
    body["k"] = a.k;
    body["multiplier"] = a.multiplier;
    body["noise_variance"] = nv;
  } else {
    throw std::invalid_argument("unknown kind '" + a.kind + "'");
  }
  body["samples"] = d.samples();
  body["features"] = d.features();
  if (d.true_beta) body["true_beta"] = std::vector<double>(d.true_beta->data(), d.true_beta->data() + d.true_beta->size());
  if (d.true_irrelevant) body["true_irrelevant"] = *d.true_irrelevant;
  bmask::save_dataset_csv(d, a.out);
  bmask::write_json(bmask::make_manifest(body), bmask::manifest_path_for(a.out));
}

void run_fit(const FitArgs& a) {
  const bmask::Dataset d = bmask::load_dataset_csv(a.data);
  json out;
  out["data"] = a.data;
  out["method"] = a.method;

  if (a.method.rfind("bm-", 0) == 0) {
    bmask::SolverConfig c;
    c.variant = bmask::variant_from_string(a.method.substr(3));
    if (c.variant == bmask::Variant::kHybrid) c.switch_iteration = 500;
    if (a.delta) c.delta = *a.delta;
    if (a.eta) c.eta = *a.eta;
    if (a.switch_t) c.switch_iteration = *a.switch_t;
    if (a.max_iter) c.max_iterations = *a.max_iter;
    if (a.lambda) c.known_lambda = *a.lambda;
    c.seed = a.seed;
    c.validate();
    const bmask::FitResult r = bmask::fit(d, c);
    out["config"] = bmask::to_json(c);
    out["result"] = bmask::to_json(r);
    if (auto truth = d.truth_zero_mask()) out["score"] = bmask::to_json(bmask::score_selection(r.pruned_mask(), *truth));
    bmask::write_history_csv(r, history_path_for(a.out));
    bmask::write_json(bmask::make_manifest(out), a.out);
    if (!r.ok()) throw std::runtime_error(std::string("fit ended with status ") + bmask::to_string(r.status) + ": " + r.message);
    return;
  }

  const double lambda = a.lambda ? *a.lambda : bmask::unbiased_noise_precision(d);
  bmask::BaselineEstimate e;
  if (a.method == "ls") {
    e = bmask::least_squares(d);
  } else if (a.method == "lasso") {
    bmask::LassoCvPath path;
    e = bmask::lasso_cv(d, lambda, a.folds, bmask::default_alpha_grid(d.samples()), a.seed, 1e-9, &path);
    out["cv"] = {{"alphas", path.alphas}, {"mean_heldout_mse", path.mean_heldout_mse}, {"selected", path.selected}};
  } else if (a.method == "ard") {
    e = bmask::ard_fit(d, lambda);
  } else {
    throw std::invalid_argument("unknown method '" + a.method + "'");
  }
  out["result"] = bmask::to_json(e);
  if (auto truth = d.truth_zero_mask()) out["score"] = bmask::to_json(bmask::score_selection(e.zero_mask(), *truth));
  bmask::write_json(bmask::make_manifest(out), a.out);

  // Baselines have no iterations; the history file holds the single estimate.
  std::ofstream h(history_path_for(a.out));
  h << "iteration";
  for (bmask::Index k = 0; k < e.beta_hat.size(); ++k) h << ",beta_" << (k + 1);
  h << "\n0";
  for (bmask::Index k = 0; k < e.beta_hat.size(); ++k) h << ',' << bmask::format_double(e.beta_hat(k));
  h << '\n';
}

std::vector<std::pair<double, double>> parse_points(const std::string& s) {
  if (s.empty()) return bmask::default_initial_points();
  std::vector<std::pair<double, double>> pts;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto comma = item.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("point '" + item + "' is not 'beta,pi'");
    pts.emplace_back(bmask::parse_double(item.substr(0, comma)), bmask::parse_double(item.substr(comma + 1)));
  }
  return pts;
}

void run_trajectory(const TrajectoryArgs& a) {
  bmask::TrajectoryOptions o;
  o.budget = a.budget;
  const auto points = parse_points(a.points);
  const auto records = bmask::run_trajectories(a.seed, a.samples, points, o);
  bmask::write_trajectories(records, a.out);
  json body;
  body["experiment"] = "trajectory";
  body["seed"] = a.seed;
  body["samples"] = a.samples;
  body["budget"] = o.budget;
  body["eta_reparam"] = o.eta_reparam;
  body["eta_plain"] = o.eta_plain;
  body["delta"] = o.delta;
  body["noise_variance"] = o.noise_variance;
  body["initial_points"] = points;
  bmask::write_json(bmask::make_manifest(body), fs::path(a.out) / "manifest.json");
}

void run_race(const RaceArgs& a) {
  bmask::RaceOptions o;
  o.max_iterations = a.max_iter;
  const bmask::RaceResult r = bmask::run_convergence_race(a.seed, a.k, a.switch_t, o);
  bmask::write_race(r, a.out);
}

void run_compare(const std::string& spec_path, const std::string& out) {
  const bmask::ExperimentSpec spec = bmask::experiment_spec_from_json(bmask::read_json(spec_path));
  bmask::write_comparison(bmask::run_comparison(spec), out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse regression with Bayesian masking"};
  app.set_version_flag("--version", std::string(bmask::library_version()) + " (" + bmask::git_revision() + ")");
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic dataset (CSV plus manifest)");
  g->add_option("--kind", gen.kind, "toy or uniform")->check(CLI::IsMember({"toy", "uniform"}));
  g->add_option("--k", gen.k, "Number of features (uniform)");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--pairs", gen.pairs, "Copies of the 2x2 design (toy)");
  g->add_option("--multiplier", gen.multiplier, "N = multiplier * K (uniform)");
  g->add_option("--noise-variance", gen.noise_variance, "Override the noise variance");
  g->add_option("--out", gen.out, "Output CSV path")->required();

  FitArgs fa;
  auto* f = app.add_subcommand("fit", "Fit one model to a dataset CSV");
  f->add_option("--data", fa.data, "Dataset CSV")->required();
  f->add_option("--method", fa.method)->check(CLI::IsMember({"bm-em", "bm-eg", "bm-hybrid", "lasso", "ard", "ls"}));
  f->add_option("--delta", fa.delta, "Pruning threshold");
  f->add_option("--eta", fa.eta, "Base learning coefficient for gradient steps");
  f->add_option("--switch-t", fa.switch_t, "Hybrid switch iteration");
  f->add_option("--folds", fa.folds, "Lasso CV folds");
  f->add_option("--seed", fa.seed, "Seed for CV partitions and random init");
  f->add_option("--lambda", fa.lambda, "Known noise precision");
  f->add_option("--max-iter", fa.max_iter, "Iteration cap for BM");
  f->add_option("--out", fa.out, "Output JSON path")->required();

  std::string spec_path, compare_out;
  auto* c = app.add_subcommand("compare", "Run the BM / Lasso / ARD comparison");
  c->add_option("--spec", spec_path, "Experiment spec JSON")->required()->check(CLI::ExistingFile);
  c->add_option("--out", compare_out, "Output directory")->required();

  TrajectoryArgs ta;
  auto* t = app.add_subcommand("trajectory", "Learning trajectories on the (beta_1, pi_1) plane");
  t->add_option("--seed", ta.seed);
  t->add_option("--samples", ta.samples, "Number of rows (even)");
  t->add_option("--budget", ta.budget, "Iteration budget per run");
  t->add_option("--points", ta.points, "Initial points as 'b,p;b,p;...'");
  t->add_option("--out", ta.out, "Output directory")->required();

  RaceArgs ra;
  auto* r = app.add_subcommand("race", "Hybrid vs FAB-EM pruning race");
  r->add_option("--k", ra.k);
  r->add_option("--switch-t", ra.switch_t);
  r->add_option("--seed", ra.seed);
  r->add_option("--max-iter", ra.max_iter);
  r->add_option("--out", ra.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (g->parsed()) run_gen(gen);
    else if (f->parsed()) run_fit(fa);
    else if (c->parsed()) run_compare(spec_path, compare_out);
    else if (t->parsed()) run_trajectory(ta);
    else if (r->parsed()) run_race(ra);
  } catch (const std::exception& e) {
    std::string kind = "error";
    if (dynamic_cast<const bmask::DomainError*>(&e)) kind = "domain_error";
    else if (dynamic_cast<const bmask::SingularSystemError*>(&e)) kind = "singular_system";
    else if (dynamic_cast<const bmask::DegenerateNoiseError*>(&e)) kind = "degenerate_noise";
    else if (dynamic_cast<const bmask::ConvergenceError*>(&e)) kind = "convergence";
    else if (dynamic_cast<const std::invalid_argument*>(&e)) kind = "invalid_argument";
    std::cerr << json{{"error", kind}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}
