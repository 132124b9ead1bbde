#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfeval/condition.hpp"
#include "selfeval/denoiser.hpp"
#include "selfeval/schedule.hpp"

namespace selfeval {

// Where the reverse-transition means are evaluated: at the forward latents
// x_t themselves, or along a chain regenerated from x_T by the reverse
// process of the candidate being scored.
enum class LatentMode { forward_anchored, reverse_anchored };

// How per-trial log-likelihoods are combined. jensen_sum is the sum of trial
// logs (a Jensen lower bound that grows with N); log_sum_exp is the log of
// the Monte-Carlo mean.
enum class Aggregation { jensen_sum, log_sum_exp };

std::string to_string(LatentMode m);
std::string to_string(Aggregation a);
LatentMode latent_mode_from_string(const std::string& s);
Aggregation aggregation_from_string(const std::string& s);

struct EstimatorConfig {
  int trials = 10;
  int steps = 100;
  std::uint64_t seed = 0;
  LatentMode latent_mode = LatentMode::forward_anchored;
  Aggregation aggregation = Aggregation::jensen_sum;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static EstimatorConfig from_json(const nlohmann::json& j);
  friend bool operator==(const EstimatorConfig&, const EstimatorConfig&) = default;
};

struct LikelihoodEstimate {
  double log_likelihood = 0.0;
  Vec per_trial;         // log p(x_T) + sum_t log p(x_{t-1} | anchor_t, c), one per trial
  Vec prior_logs;        // log p(x_T) per trial
  double prior_term_log = 0.0;  // mean of prior_logs
  std::uint64_t seed = 0;
  EstimatorConfig config;

  friend bool operator==(const LikelihoodEstimate&, const LikelihoodEstimate&) = default;
};

double log_mean_exp(std::span<const double> values);
double aggregate(std::span<const double> trial_logs, Aggregation aggregation);

struct Posterior {
  std::vector<std::string> candidate_ids;
  Vec log_likelihoods;
  Vec probabilities;
  std::size_t argmax = 0;
};

// Softmax under a uniform prior over candidates; ties go to the lowest index.
Posterior posterior_from_log_likelihoods(std::vector<std::string> ids, Vec log_likelihoods);

// Forward noise for every trial of one seed, shared by all inputs evaluated
// with that seed. Row layout matches trajectory_noise.
class NoiseBank {
 public:
  NoiseBank(std::size_t dim, int steps, int trials, std::uint64_t seed, bool with_elbo_noise = false);

  std::size_t dim() const { return dim_; }
  int steps() const { return steps_; }
  int trials() const { return trials_; }
  std::uint64_t seed() const { return seed_; }
  bool has_elbo_noise() const { return !elbo_.empty(); }

  std::span<const double> forward(int trial) const;
  std::span<const double> elbo(int trial) const;

 private:
  std::size_t dim_;
  int steps_;
  int trials_;
  std::uint64_t seed_;
  std::vector<Vec> forward_;
  std::vector<Vec> elbo_;
};

// Instrumentation hook: sees the forward latents each candidate is scored
// against, so tests can assert common random numbers across candidates.
class EstimatorObserver {
 public:
  virtual ~EstimatorObserver() = default;
  virtual void on_trial(int trial, std::size_t candidate, std::span<const double> latents) = 0;
};

// Monte-Carlo estimate of log p(x0 | c) from a conditional denoiser.
class SelfEvalEstimator {
 public:
  SelfEvalEstimator(const Denoiser& model, const NoiseSchedule& sched, EstimatorConfig cfg,
                    std::shared_ptr<const NoiseBank> bank = nullptr);

  const EstimatorConfig& config() const { return cfg_; }

  LikelihoodEstimate estimate(std::span<const double> x0, const Condition& c) const;

  // One estimate per candidate; every candidate sees the same noise.
  std::vector<LikelihoodEstimate> estimate_all(std::span<const double> x0, std::span<const Condition> candidates,
                                               EstimatorObserver* observer = nullptr) const;

  Posterior classify(std::span<const double> x0, std::span<const Condition> candidates,
                     std::vector<LikelihoodEstimate>* estimates = nullptr,
                     EstimatorObserver* observer = nullptr) const;

  // Negative mean squared epsilon-prediction error over (t, eps) draws: every
  // t in 1..T for each of the N trials.
  double elbo_proxy(std::span<const double> x0, const Condition& c) const;
  Vec elbo_proxy_all(std::span<const double> x0, std::span<const Condition> candidates) const;

 private:
  void check_input(std::span<const double> x0) const;
  std::span<const double> forward_noise(int trial, Vec& scratch) const;

  const Denoiser& model_;
  const NoiseSchedule& sched_;
  EstimatorConfig cfg_;
  std::shared_ptr<const NoiseBank> bank_;
};

LikelihoodEstimate estimate_log_likelihood(std::span<const double> x0, const Condition& c, const Denoiser& model,
                                           const NoiseSchedule& sched, const EstimatorConfig& cfg);

Posterior classify(std::span<const double> x0, std::span<const Condition> candidates, const Denoiser& model,
                   const NoiseSchedule& sched, const EstimatorConfig& cfg);

double elbo_proxy_score(std::span<const double> x0, const Condition& c, const Denoiser& model,
                        const NoiseSchedule& sched, const EstimatorConfig& cfg);

// ---- paired image/text contrast scores ------------------------------------

struct WinogroundPair {
  std::string id;
  Vec x_a;
  Vec x_b;
  Condition c_a;
  Condition c_b;
  // Index of the denoiser that models each image's world.
  std::size_t world_a = 0;
  std::size_t world_b = 0;
};

// s(caption, image) for the four combinations of one pair.
struct PairScores {
  double ca_xa = 0.0;
  double cb_xa = 0.0;
  double ca_xb = 0.0;
  double cb_xb = 0.0;
};

struct WinogroundScores {
  double image_score = 0.0;
  double text_score = 0.0;
  double group_score = 0.0;
  std::size_t pairs = 0;
};

bool text_correct(const PairScores& s);
bool image_correct(const PairScores& s);

using PairScorer = std::function<PairScores(const WinogroundPair&)>;

// Fractions in [0, 1]; comparisons are strict, so ties count as failures.
WinogroundScores image_text_scores(std::span<const WinogroundPair> pairs, const PairScorer& scorer,
                                   std::size_t workers = 1);

enum class ScorerKind { selfeval, elbo };
std::string to_string(ScorerKind s);
ScorerKind scorer_from_string(const std::string& s);

// worlds[i] scores images whose world index is i.
PairScorer make_pair_scorer(ScorerKind kind, std::vector<const Denoiser*> worlds, const NoiseSchedule& sched,
                            const EstimatorConfig& cfg);

WinogroundScores image_text_scores(std::span<const WinogroundPair> pairs, ScorerKind kind,
                                   std::vector<const Denoiser*> worlds, const NoiseSchedule& sched,
                                   const EstimatorConfig& cfg, std::size_t workers = 1);

}  // namespace selfeval
