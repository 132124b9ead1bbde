#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfeval/benchmark.hpp"
#include "selfeval/config.hpp"
#include "selfeval/dataset_io.hpp"
#include "selfeval/estimator.hpp"
#include "selfeval/metrics.hpp"

namespace selfeval {

struct EvalOptions {
  ScorerKind scorer = ScorerKind::selfeval;
  // Replaces the master seed when deriving per-repeat estimator seeds
  // (the seed ablation axis). Suites are untouched.
  std::optional<std::uint64_t> noise_seed_base;
  bool keep_estimates = true;
};

// Spread of logSumExp over the per-trial logs. per_trial: lse - mean(logs),
// which lies in [0, ln N] when the trial spread is small. literal: lse - sum(logs).
struct JensenGapStats {
  std::size_t count = 0;
  double min_gap = 0.0;
  double max_gap = 0.0;
  std::size_t below_zero = 0;
  std::size_t above_log_n = 0;
  double min_literal = 0.0;
  double max_literal = 0.0;
  std::size_t literal_outside = 0;
  int trials = 0;

  void add(std::span<const double> per_trial);
  void merge(const JensenGapStats& o);
  bool within_bound() const { return count > 0 && below_zero == 0 && above_log_n == 0; }
};

struct ExampleOutcome {
  std::string id;
  TaskKind task = TaskKind::color;
  std::uint64_t seed = 0;
  std::size_t prediction = 0;
  std::size_t correct = 0;
  std::vector<std::string> candidate_ids;
  Vec scores;
  std::vector<LikelihoodEstimate> estimates;  // empty for the ELBO scorer
};

struct SuiteEvaluation {
  std::vector<ExampleOutcome> outcomes;  // in input order
  std::vector<TaskResult> tasks;         // in task enumeration order
  JensenGapStats gap;
};

// Repeat seed r -> estimator noise seed, honouring EvalOptions::noise_seed_base.
EstimatorConfig estimator_for_record(const RunConfig& cfg, std::uint64_t record_seed, const EvalOptions& opts);

// Scores every example. Parallel over examples; the result does not depend
// on `workers`.
SuiteEvaluation evaluate_suite(std::span<const DatasetRecord> records, const Denoiser& model,
                               const NoiseSchedule& sched, const RunConfig& cfg, const EvalOptions& opts = {},
                               std::size_t workers = 1);

std::vector<TaskResult> summarize_tasks(std::span<const ExampleOutcome> outcomes, const RunConfig& cfg);

// One JSON line per (example, candidate).
std::vector<std::string> estimate_lines(const SuiteEvaluation& ev, const std::string& config_hash);
// One JSON line per example: {exampleId, task, seed, prediction, correctIndex}.
std::vector<std::string> prediction_lines(const SuiteEvaluation& ev);

struct Prediction {
  std::string id;
  std::string task;
  std::size_t prediction = 0;
  std::size_t correct = 0;
};
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

// Votes of run A against run B, per task, matched by example id.
std::map<std::string, VoteTally> votes_by_task(std::span<const Prediction> a, std::span<const Prediction> b);

// ---- models --------------------------------------------------------------

// Analytic denoiser over the Gaussian embedding world for every condition in the records.
std::shared_ptr<AnalyticDenoiser> oracle_denoiser(std::span<const DatasetRecord> records, const OracleWorld& world);

// Analytic denoiser whose class means are jitter-averaged renders.
std::shared_ptr<AnalyticDenoiser> template_denoiser(std::span<const ScenePair> pairs, const ImageConfig& img,
                                                    double class_var);

// Oracle-world task suites in dataset-record form.
std::vector<DatasetRecord> build_oracle_records(const RunConfig& cfg);
std::vector<DatasetRecord> build_rendered_records(const RunConfig& cfg);
std::vector<TrainRecord> build_training_records(const RunConfig& cfg);

// ---- Winoground-style pairs -------------------------------------------------

struct WinogroundResult {
  std::string scorer;
  std::string fixture;
  WinogroundScores scores;
};

nlohmann::ordered_json to_json(const WinogroundResult& r);

WinogroundResult evaluate_pairs(std::span<const ScenePair> pairs, const Denoiser& model, const NoiseSchedule& sched,
                                const RunConfig& cfg, ScorerKind scorer, std::size_t workers);

// Base world of the two-scale fixture; the second world is this one magnified 3x.
inline constexpr OracleWorld kScaleFixtureWorld{4.5, 0.25};

// SelfEval and ELBO image/text scores on the two-scale fixture.
std::vector<WinogroundResult> evaluate_scale_fixture(const RunConfig& cfg, int pairs, const OracleWorld& world,
                                                     std::size_t workers);

// ---- ablations ---------------------------------------------------------------

using DenoiserFactory = std::function<std::shared_ptr<const Denoiser>()>;

// Each row is evaluate_suite under the modified config. T rows rescale the
// betas so that sum(beta) stays fixed.
AblationTable ablation_sweep(AblationAxis axis, std::span<const std::string> values, const RunConfig& cfg,
                             std::span<const DatasetRecord> records, const Denoiser& model,
                             const EvalOptions& opts, std::size_t workers);

RunConfig with_steps(const RunConfig& cfg, int steps);

// ---- report --------------------------------------------------------------------

struct EvalReport {
  std::string run_id;
  std::string config_hash;
  nlohmann::ordered_json config;
  nlohmann::ordered_json schedule;
  nlohmann::ordered_json model;
  std::string scorer;
  std::vector<TaskResult> tasks;
  std::vector<WinogroundResult> winoground;
  std::map<std::string, VoteTally> votes;
  std::vector<AblationTable> ablations;
  std::optional<JensenGapStats> gap;
};

nlohmann::ordered_json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

// report.json plus CSV mirrors (tasks.csv, chart.csv, ablation_<axis>.csv).
void write_report(const std::filesystem::path& dir, const EvalReport& r);

// UTC timestamp used as the run id.
std::string make_run_id();

}  // namespace selfeval
