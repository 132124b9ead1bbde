#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfeval/benchmark.hpp"
#include "selfeval/estimator.hpp"
#include "selfeval/mlp.hpp"
#include "selfeval/schedule.hpp"

namespace selfeval {

struct ScheduleParams {
  ScheduleKind kind = ScheduleKind::linear;
  int steps = 100;
  double beta_min = default_beta_min(100);
  double beta_max = default_beta_max(100);

  NoiseSchedule build() const { return build_schedule(kind, steps, beta_min, beta_max); }
  friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
};

struct BenchmarkParams {
  int image_size = 16;
  int suite_size = 1000;
  int repeats = 3;
  std::vector<TaskKind> tasks{kAllTasks.begin(), kAllTasks.end()};
  int winoground_pairs = 200;
  int train_size = 24000;
  OracleWorld oracle;  // Gaussian-oracle suites
  double template_var = 0.05;  // class variance of the rendered-template oracle

  ImageConfig image() const { return ImageConfig{image_size}; }
  friend bool operator==(const BenchmarkParams&, const BenchmarkParams&) = default;
};

struct RunConfig {
  std::uint64_t master_seed = 1;
  ScheduleParams schedule;
  EstimatorConfig estimator;  // seed here is overridden per repeat
  BenchmarkParams benchmark;
  TrainerConfig trainer;
  std::filesystem::path output_dir = "selfeval-run";
  std::size_t workers = 1;

  // Everything except output_dir and workers, with stable key order.
  nlohmann::ordered_json canonical_json() const;
  // SHA-256 of canonical_json().dump().
  std::string config_hash() const;

  static RunConfig from_json(const nlohmann::json& j);
  void validate() const;

  // Repeat i uses seed master_seed + i.
  std::vector<std::uint64_t> repeat_seeds() const;
  // Estimator config for one repeat; noise seed derived from the repeat seed.
  EstimatorConfig estimator_for(std::uint64_t repeat_seed) const;
};

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

// Workers from SELFEVAL_WORKERS, or 1 when unset; throws ParameterError on garbage.
std::size_t workers_from_env();

}  // namespace selfeval
