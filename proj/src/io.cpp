#include "bmask/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace bmask {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json opt(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

Eigen::VectorXd vec_from(const json& a) {
  Eigen::VectorXd v(static_cast<Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = a[i].get<double>();
  return v;
}

std::string opt_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

const char* library_version() { return BMASK_VERSION; }
const char* git_revision() { return BMASK_GIT_REVISION; }

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\r')) --last;
  if (first < last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw std::runtime_error("not a number: '" + s + "'");
  return v;
}

fs::path manifest_path_for(const fs::path& csv_path) {
  fs::path p = csv_path;
  p.replace_extension(".manifest.json");
  return p;
}

json make_manifest(json body) {
  body["library_version"] = library_version();
  body["git_revision"] = git_revision();
  return body;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return json::parse(in);
}

void save_dataset_csv(const Dataset& data, const fs::path& path) {
  data.validate();
  std::ofstream out = open_out(path);
  out << "y";
  for (Index k = 0; k < data.features(); ++k) out << ",x_" << (k + 1);
  out << '\n';
  for (Index n = 0; n < data.samples(); ++n) {
    out << format_double(data.y(n));
    for (Index k = 0; k < data.features(); ++k) out << ',' << format_double(data.x(n, k));
    out << '\n';
  }
}

Dataset load_dataset_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file");
  const std::vector<std::string> header = split_csv(line);
  if (header.size() < 2 || header[0] != "y") throw std::runtime_error("dataset header must be y,x_1,...");
  const auto k = static_cast<Index>(header.size() - 1);

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv(line);
    if (static_cast<Index>(cells.size()) != k + 1) {
      throw std::runtime_error("row " + std::to_string(rows.size() + 1) + " has " + std::to_string(cells.size()) +
                               " cells, expected " + std::to_string(k + 1));
    }
    std::vector<double> r;
    r.reserve(cells.size());
    for (const std::string& c : cells) r.push_back(parse_double(c));
    rows.push_back(std::move(r));
  }
  Dataset d;
  d.x.resize(static_cast<Index>(rows.size()), k);
  d.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    d.y(static_cast<Index>(n)) = rows[n][0];
    for (Index j = 0; j < k; ++j) d.x(static_cast<Index>(n), j) = rows[n][static_cast<std::size_t>(j + 1)];
  }
  const fs::path mpath = manifest_path_for(path);
  if (fs::exists(mpath)) {
    const json m = read_json(mpath);
    if (m.contains("true_beta") && m["true_beta"].is_array()) d.true_beta = vec_from(m["true_beta"]);
    if (m.contains("true_irrelevant") && m["true_irrelevant"].is_array()) {
      d.true_irrelevant = m["true_irrelevant"].get<std::vector<Index>>();
    }
  }
  d.validate();
  return d;
}

json to_json(const SolverConfig& c) {
  json j;
  j["variant"] = to_string(c.variant);
  j["delta"] = c.delta;
  j["switch_iteration"] = c.switch_iteration;
  j["eta"] = opt(c.eta);
  j["pi_step_cap"] = num(c.pi_step_cap);
  j["max_iterations"] = c.max_iterations;
  j["tolerance"] = c.tolerance;
  j["e_step_sweeps"] = c.e_step_sweeps;
  j["seed"] = c.seed;
  j["init"] = c.init == InitPolicy::kDefault ? "default" : "random_masks";
  j["reparametrize"] = c.reparametrize;
  j["known_lambda"] = opt(c.known_lambda);
  return j;
}

SolverConfig solver_config_from_json(const json& j) {
  SolverConfig c;
  if (j.contains("variant")) c.variant = variant_from_string(j["variant"].get<std::string>());
  if (j.contains("delta")) c.delta = j["delta"].get<double>();
  if (j.contains("switch_iteration")) c.switch_iteration = j["switch_iteration"].get<int>();
  if (j.contains("eta") && !j["eta"].is_null()) c.eta = j["eta"].get<double>();
  if (j.contains("pi_step_cap")) {
    c.pi_step_cap = j["pi_step_cap"].is_null() ? std::numeric_limits<double>::infinity() : j["pi_step_cap"].get<double>();
  }
  if (j.contains("max_iterations")) c.max_iterations = j["max_iterations"].get<int>();
  if (j.contains("tolerance")) c.tolerance = j["tolerance"].get<double>();
  if (j.contains("e_step_sweeps")) c.e_step_sweeps = j["e_step_sweeps"].get<int>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("init")) {
    const auto s = j["init"].get<std::string>();
    if (s == "default") c.init = InitPolicy::kDefault;
    else if (s == "random_masks") c.init = InitPolicy::kRandomMasks;
    else throw std::invalid_argument("unknown init policy '" + s + "'");
  }
  if (j.contains("reparametrize")) c.reparametrize = j["reparametrize"].get<bool>();
  if (j.contains("known_lambda") && !j["known_lambda"].is_null()) c.known_lambda = j["known_lambda"].get<double>();
  return c;
}

json to_json(const ExperimentSpec& s) {
  json j;
  j["kind"] = to_string(s.kind);
  j["k"] = s.k;
  j["trials"] = s.trials;
  j["seed"] = s.seed;
  j["solver"] = to_json(s.solver);
  j["baselines"]["folds"] = s.baselines.folds;
  j["baselines"]["alpha_grid"] = s.baselines.alpha_grid ? json(*s.baselines.alpha_grid) : json(nullptr);
  j["noise_variance"] = s.noise_variance;
  j["sample_multiplier"] = s.sample_multiplier;
  j["pairs"] = s.pairs;
  j["known_noise"] = s.known_noise;
  j["threads"] = s.threads;
  return j;
}

ExperimentSpec experiment_spec_from_json(const json& j) {
  const ExperimentKind kind = experiment_kind_from_string(j.value("kind", std::string("toy")));
  ExperimentSpec s = kind == ExperimentKind::kToyK2 ? ExperimentSpec::toy_defaults()
                                                    : ExperimentSpec::uniform_defaults(j.value("k", Index{10}));
  if (j.contains("k")) s.k = j["k"].get<Index>();
  if (j.contains("trials")) s.trials = j["trials"].get<int>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("solver")) {
    // Overlay the given keys onto the kind's solver defaults.
    json merged = to_json(s.solver);
    merged.update(j["solver"]);
    s.solver = solver_config_from_json(merged);
  }
  if (j.contains("baselines")) {
    const json& b = j["baselines"];
    if (b.contains("folds")) s.baselines.folds = b["folds"].get<int>();
    if (b.contains("alpha_grid") && !b["alpha_grid"].is_null()) {
      s.baselines.alpha_grid = b["alpha_grid"].get<std::vector<double>>();
    }
  }
  if (j.contains("noise_variance")) s.noise_variance = j["noise_variance"].get<double>();
  if (j.contains("sample_multiplier")) s.sample_multiplier = j["sample_multiplier"].get<int>();
  if (j.contains("pairs")) s.pairs = j["pairs"].get<int>();
  if (j.contains("known_noise")) s.known_noise = j["known_noise"].get<bool>();
  if (j.contains("threads")) s.threads = j["threads"].get<int>();
  s.validate();
  return s;
}

json to_json(const FitResult& r) {
  json j;
  j["status"] = to_string(r.status);
  j["ok"] = r.ok();
  j["message"] = r.message;
  j["beta_hat"] = vec(r.beta_full());
  j["pi"] = vec(r.pi_full());
  j["lambda"] = num(r.state.lambda);
  j["active"] = r.state.active;
  json pruned = json::array();
  for (const auto& [feature, iteration] : r.pruned_at) pruned.push_back({{"feature", feature}, {"iteration", iteration}});
  j["pruned_at"] = pruned;
  j["iterations"] = r.history.empty() ? 0 : r.history.back().iteration;
  j["objective"] = r.history.empty() ? json(nullptr) : num(r.history.back().objective);
  return j;
}

json to_json(const BaselineEstimate& e) {
  json j;
  j["method"] = to_string(e.method);
  j["beta_hat"] = vec(e.beta_hat);
  j["lambda"] = num(e.lambda);
  j["alpha"] = opt(e.alpha);
  j["gamma_hat"] = e.gamma_hat ? vec(*e.gamma_hat) : json(nullptr);
  std::vector<bool> mask = e.zero_mask();
  j["pruned"] = mask;
  return j;
}

json to_json(const SelectionScore& s) {
  json j;
  j["m1"] = s.m1;
  j["m2"] = s.m2;
  j["m3"] = s.m3;
  j["precision"] = opt(s.precision);
  j["recall"] = opt(s.recall);
  j["f1"] = opt(s.f1);
  return j;
}

void write_history_csv(const FitResult& r, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "iteration,objective,elapsed_seconds,active_count";
  for (Index k = 0; k < r.total_features; ++k) out << ",pi_" << (k + 1);
  for (Index k = 0; k < r.total_features; ++k) out << ",beta_" << (k + 1);
  out << '\n';
  for (const IterationRecord& it : r.history) {
    out << it.iteration << ',' << format_double(it.objective) << ',' << format_double(it.elapsed_seconds) << ','
        << it.active_count;
    for (Index k = 0; k < r.total_features; ++k) out << ',' << (it.pi.size() ? format_double(it.pi(k)) : "");
    for (Index k = 0; k < r.total_features; ++k) out << ',' << (it.beta.size() ? format_double(it.beta(k)) : "");
    out << '\n';
  }
}

void write_comparison(const ComparisonTable& table, const fs::path& dir) {
  fs::create_directories(dir);
  const Index k = table.spec.k;
  {
    std::ofstream out = open_out(dir / "trials.csv");
    out << "trial,seed,method,ok,error,m1,m2,m3,precision,recall,f1,iterations,alpha";
    for (Index j = 0; j < k; ++j) out << ",beta_" << (j + 1);
    for (Index j = 0; j < k; ++j) out << ",pruned_" << (j + 1);
    out << '\n';
    for (const TrialRecord& t : table.trials) {
      for (const MethodOutcome& m : t.methods) {
        std::string err = m.error;
        for (char& c : err) {
          if (c == ',' || c == '\n') c = ';';
        }
        out << t.trial << ',' << t.seed << ',' << m.method << ',' << (m.ok ? 1 : 0) << ',' << err << ','
            << m.score.m1 << ',' << m.score.m2 << ',' << m.score.m3 << ',' << opt_cell(m.score.precision) << ','
            << opt_cell(m.score.recall) << ',' << opt_cell(m.score.f1) << ',' << m.iterations << ','
            << opt_cell(m.alpha);
        for (Index j = 0; j < k; ++j) out << ',' << format_double(m.beta_hat(j));
        for (Index j = 0; j < k; ++j) out << ',' << (m.pruned[static_cast<std::size_t>(j)] ? 1 : 0);
        out << '\n';
      }
    }
  }
  {
    std::ofstream out = open_out(dir / "summary.csv");
    out << "method,trials_ok,trials_failed,precision_mean,precision_se,precision_n,recall_mean,recall_se,recall_n,"
           "f1_mean,f1_se,f1_n,wrongly_pruned_mean,wrongly_pruned_se,prune_events,prune_opportunities,"
           "prune_frequency,prune_ci_low,prune_ci_high,trials_all_irrelevant_pruned";
    for (Index j = 0; j < k; ++j) out << ",mean_beta_when_pruned_" << (j + 1);
    out << '\n';
    for (const MethodSummary& s : table.summary) {
      out << s.method << ',' << s.trials_ok << ',' << s.trials_failed;
      for (const MeanSe* m : {&s.precision, &s.recall, &s.f1}) {
        out << ',' << opt_cell(m->mean) << ',' << opt_cell(m->se) << ',' << m->n;
      }
      out << ',' << opt_cell(s.wrongly_pruned.mean) << ',' << opt_cell(s.wrongly_pruned.se) << ',' << s.prune_events
          << ',' << s.prune_opportunities << ',' << format_double(s.prune_frequency) << ','
          << format_double(s.prune_ci.low) << ',' << format_double(s.prune_ci.high) << ','
          << s.trials_all_irrelevant_pruned;
      for (Index j = 0; j < k; ++j) {
        out << ',' << (s.trials_all_irrelevant_pruned > 0 ? format_double(s.mean_beta_when_pruned(j)) : "");
      }
      out << '\n';
    }
  }
  json body;
  body["experiment"] = "compare";
  body["spec"] = to_json(table.spec);
  body["seed"] = table.spec.seed;
  write_json(make_manifest(body), dir / "manifest.json");
}

void write_trajectories(const std::vector<TrajectoryRecord>& records, const fs::path& dir) {
  fs::create_directories(dir);
  for (TrajectoryAlgorithm algo : {TrajectoryAlgorithm::kEM, TrajectoryAlgorithm::kEG, TrajectoryAlgorithm::kEGNoReparam}) {
    std::ofstream out = open_out(dir / (std::string("trajectory_") + to_string(algo) + ".csv"));
    out << "start,initial_beta1,initial_pi1,iteration,beta1,pi1\n";
    int start = 0;
    for (const TrajectoryRecord& r : records) {
      if (r.algorithm != algo) continue;
      for (const TrajectoryPoint& p : r.points) {
        out << start << ',' << format_double(r.initial_beta1) << ',' << format_double(r.initial_pi1) << ','
            << p.iteration << ',' << format_double(p.beta1) << ',' << format_double(p.pi1) << '\n';
      }
      ++start;
    }
  }
  std::ofstream out = open_out(dir / "trajectory_summary.csv");
  out << "algorithm,initial_beta1,initial_pi1,pruned_at,final_beta1,final_pi1\n";
  for (const TrajectoryRecord& r : records) {
    const TrajectoryPoint& last = r.points.back();
    out << to_string(r.algorithm) << ',' << format_double(r.initial_beta1) << ',' << format_double(r.initial_pi1) << ','
        << (r.pruned_at ? std::to_string(*r.pruned_at) : std::string()) << ',' << format_double(last.beta1) << ','
        << format_double(last.pi1) << '\n';
  }
}

void write_race(const RaceResult& race, const fs::path& dir) {
  fs::create_directories(dir);
  json summary;
  summary["seed"] = race.seed;
  summary["k"] = race.k;
  summary["switch_iteration"] = race.switch_iteration;
  for (const RaceSeries* s : {&race.hybrid, &race.em}) {
    std::ofstream out = open_out(dir / ("race_" + s->algorithm + ".csv"));
    out << "iteration,elapsed_seconds,correctly_pruned,wrongly_pruned,objective\n";
    for (const RacePoint& p : s->points) {
      out << p.iteration << ',' << format_double(p.elapsed_seconds) << ',' << p.correctly_pruned << ','
          << p.wrongly_pruned << ',' << format_double(p.objective) << '\n';
    }
    summary[s->algorithm] = {{"status", to_string(s->status)},
                             {"iterations", s->points.empty() ? 0 : s->points.back().iteration},
                             {"final_correctly_pruned", s->final_correctly_pruned},
                             {"final_wrongly_pruned", s->final_wrongly_pruned}};
  }
  write_json(make_manifest(summary), dir / "race_summary.json");
}

}  // namespace bmask
