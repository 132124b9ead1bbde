#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace selfeval {

using Vec = std::vector<double>;

enum class ScheduleKind { linear, cosine };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

// Per-step noise strengths and their cumulative signal retention. Timesteps
// are 1-based everywhere in the public API; alpha_bar(0) == 1.
class NoiseSchedule {
 public:
  NoiseSchedule(ScheduleKind kind, int steps, double beta_min, double beta_max, Vec betas);

  ScheduleKind kind() const { return kind_; }
  int steps() const { return static_cast<int>(betas_.size()); }
  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }

  double beta(int t) const { return betas_.at(static_cast<std::size_t>(t - 1)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars_.at(static_cast<std::size_t>(t - 1)); }

  const Vec& betas() const { return betas_; }
  const Vec& alpha_bars() const { return alpha_bars_; }

  // Variance of q(x_{t-1} | x_t, x_0).
  double posterior_variance(int t) const;

  // True when the terminal marginal is close to the unit-normal prior.
  bool terminal_near_noise(double threshold = 0.05) const { return alpha_bar(steps()) < threshold; }

  nlohmann::ordered_json to_json() const;
  static NoiseSchedule from_json(const nlohmann::json& j);

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

 private:
  ScheduleKind kind_;
  double beta_min_;
  double beta_max_;
  Vec betas_;
  Vec alpha_bars_;
};

// Linear: betas evenly spaced from beta_min to beta_max.
// Cosine: Nichol & Dhariwal alpha-bar curve, betas clipped to [beta_min, beta_max].
NoiseSchedule build_schedule(ScheduleKind kind, int steps, double beta_min, double beta_max);

// Linear schedule whose endpoints are the usual 1e-4 -> 0.02 rescaled by
// 1000 / steps, so the terminal state stays near pure noise at any step count.
NoiseSchedule default_schedule(int steps);
double default_beta_min(int steps);
double default_beta_max(int steps);

// Isotropic (variance.size() == 1) or diagonal (variance.size() == mean.size()).
struct DiagGaussian {
  Vec mean;
  Vec variance;
};

double gaussian_log_pdf(std::span<const double> x, const DiagGaussian& g);

// Hot-path form used by the estimator; no validation beyond debug asserts.
double isotropic_log_pdf(std::span<const double> x, std::span<const double> mean, double variance);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
Vec q_sample(std::span<const double> x0, int t, std::span<const double> noise, const NoiseSchedule& sched);

// Forward-process chain x_1..x_T for one trial. Noise for step t is the
// counter stream (seed, trial, t), so any (seed, trial) reproduces exactly.
struct Trajectory {
  std::size_t dim = 0;
  int steps = 0;
  std::uint64_t seed = 0;
  std::uint32_t trial = 0;
  Vec latents;  // steps x dim, row t-1 holds x_t
  Vec noises;   // steps x dim, row t-1 holds eps_t

  std::span<const double> latent(int t) const {
    return {latents.data() + static_cast<std::size_t>(t - 1) * dim, dim};
  }
  std::span<const double> noise(int t) const {
    return {noises.data() + static_cast<std::size_t>(t - 1) * dim, dim};
  }
};

// Noise for (seed, trial), steps x dim, row t-1 = eps_t.
Vec trajectory_noise(std::size_t dim, int steps, std::uint64_t seed, std::uint32_t trial);

Trajectory forward_trajectory(std::span<const double> x0, const NoiseSchedule& sched,
                              std::uint64_t seed, std::uint32_t trial = 0);

// Same chain driven by precomputed noise (rows must come from trajectory_noise
// for the result to match forward_trajectory bit for bit).
void forward_chain(std::span<const double> x0, const NoiseSchedule& sched,
                   std::span<const double> noise, std::span<double> latents);

}  // namespace selfeval
