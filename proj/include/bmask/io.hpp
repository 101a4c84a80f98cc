#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "bmask/baselines.hpp"
#include "bmask/core_model.hpp"
#include "bmask/dataset.hpp"
#include "bmask/experiments.hpp"
#include "bmask/fab_solvers.hpp"

namespace bmask {

const char* library_version();
const char* git_revision();

/// Shortest text that parses back to the same double ("nan"/"inf"/"-inf"
/// for non-finite values).
std::string format_double(double v);
double parse_double(const std::string& s);

/// CSV with header "y,x_1,...,x_K"; values round-trip bit-exactly.
void save_dataset_csv(const Dataset& data, const std::filesystem::path& path);

/// Loads the CSV and, when present, the truth fields from the manifest
/// next to it. Throws std::runtime_error on malformed input.
Dataset load_dataset_csv(const std::filesystem::path& path);

/// "<dir>/<stem>.manifest.json" for "<dir>/<stem>.csv".
std::filesystem::path manifest_path_for(const std::filesystem::path& csv_path);

/// Common manifest fields: library version, git revision, plus `body`.
nlohmann::json make_manifest(nlohmann::json body);

void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

nlohmann::json to_json(const SolverConfig& config);
SolverConfig solver_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ExperimentSpec& spec);
/// Missing keys fall back to the defaults of the experiment kind.
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FitResult& result);
nlohmann::json to_json(const BaselineEstimate& estimate);
nlohmann::json to_json(const SelectionScore& score);

/// iteration, objective, elapsed_seconds, active_count, pi_1..K, beta_1..K.
void write_history_csv(const FitResult& result, const std::filesystem::path& path);

/// trials.csv, summary.csv and manifest.json under `dir`.
void write_comparison(const ComparisonTable& table, const std::filesystem::path& dir);

/// trajectory_<algorithm>.csv per algorithm under `dir`.
void write_trajectories(const std::vector<TrajectoryRecord>& records, const std::filesystem::path& dir);

/// race_hybrid.csv, race_em.csv and race_summary.json under `dir`.
void write_race(const RaceResult& race, const std::filesystem::path& dir);

}  // namespace bmask
