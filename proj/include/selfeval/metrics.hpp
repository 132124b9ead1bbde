#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace selfeval {

struct TaskResult {
  std::string task;
  double accuracy_mean_pct = 0.0;
  double accuracy_std_pct = 0.0;  // sample std over repeats (n - 1), 0 for one repeat
  double chance_pct = 0.0;
  double delta_pct = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> repeat_accuracies_pct;
};

// Builds a TaskResult from per-repeat accuracies (percent).
TaskResult make_task_result(std::string task, std::span<const double> accuracies_pct, double chance_pct,
                            std::vector<std::uint64_t> seeds);

struct VoteTally {
  std::size_t only_a = 0;
  std::size_t only_b = 0;
  std::size_t both = 0;
  std::size_t neither = 0;

  std::size_t total() const { return only_a + only_b + both + neither; }
  friend bool operator==(const VoteTally&, const VoteTally&) = default;
};

// Percent of positions where predictions equal correct.
double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> correct);
double chance_delta(const TaskResult& r);
VoteTally votes_from_predictions(std::span<const std::size_t> preds_a, std::span<const std::size_t> preds_b,
                                 std::span<const std::size_t> correct);

// Average (fractional) ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> v);
// Pearson correlation of average ranks. Throws ParameterError when either
// side has zero rank variance (correlation undefined).
double spearman_rho(std::span<const double> a, std::span<const double> b);

// Fixed two-decimal rendering used by every table.
std::string format_pct(double v);
// Two-decimal value of format_pct, for JSON output.
double round2(double v);

nlohmann::ordered_json to_json(const TaskResult& r);
TaskResult task_result_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const VoteTally& v);

enum class AblationAxis { steps, trials, seed };
std::string to_string(AblationAxis a);
AblationAxis ablation_axis_from_string(const std::string& s);

struct AblationRow {
  std::string value;  // the swept setting, as text
  std::vector<TaskResult> tasks;
  double seconds = 0.0;  // wall clock for the row; not part of the serialized table
};

struct AblationTable {
  AblationAxis axis = AblationAxis::steps;
  std::vector<AblationRow> rows;
};

nlohmann::ordered_json to_json(const AblationTable& t);
// One line per (value, task): axis,value,task,accuracyMeanPct,accuracyStdPct,chancePct,deltaPct
std::string to_csv(const AblationTable& t);
// One line per task: task,accuracyMeanPct,accuracyStdPct,chancePct,deltaPct,seeds
std::string tasks_to_csv(std::span<const TaskResult> tasks);

}  // namespace selfeval
