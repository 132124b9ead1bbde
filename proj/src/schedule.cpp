#include "selfeval/schedule.hpp"

#include <cassert>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "selfeval/errors.hpp"
#include "selfeval/rng.hpp"

namespace selfeval {

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::linear ? "linear" : "cosine";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw ParameterError("unknown schedule kind '" + name + "'");
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, int steps, double beta_min, double beta_max, Vec betas)
    : kind_(kind), beta_min_(beta_min), beta_max_(beta_max), betas_(std::move(betas)) {
  if (steps < 1 || static_cast<std::size_t>(steps) != betas_.size()) {
    throw ParameterError("schedule: step count does not match beta vector");
  }
  alpha_bars_.resize(betas_.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    if (!(betas_[i] > 0.0 && betas_[i] < 1.0)) {
      throw ParameterError("schedule: beta_" + std::to_string(i + 1) + " outside (0, 1)");
    }
    const double next = prod * (1.0 - betas_[i]);
    if (!(next > 0.0 && next < prod)) {
      throw ParameterError("schedule: alpha-bar underflows at t = " + std::to_string(i + 1));
    }
    prod = next;
    alpha_bars_[i] = prod;
  }
}

double NoiseSchedule::posterior_variance(int t) const {
  return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

nlohmann::ordered_json NoiseSchedule::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = to_string(kind_);
  j["T"] = steps();
  j["betaMin"] = beta_min_;
  j["betaMax"] = beta_max_;
  j["betas"] = betas_;
  return j;
}

NoiseSchedule NoiseSchedule::from_json(const nlohmann::json& j) {
  try {
    auto sched = build_schedule(schedule_kind_from_string(j.at("kind").get<std::string>()),
                                j.at("T").get<int>(), j.at("betaMin").get<double>(),
                                j.at("betaMax").get<double>());
    if (j.contains("betas") && j.at("betas").get<Vec>() != sched.betas()) {
      throw DataError("schedule: stored betas disagree with their parameters");
    }
    return sched;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("schedule: ") + e.what());
  }
}

NoiseSchedule build_schedule(ScheduleKind kind, int steps, double beta_min, double beta_max) {
  if (steps < 1) throw ParameterError("schedule: T must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw ParameterError("schedule: need 0 < betaMin <= betaMax < 1");
  }
  Vec betas(static_cast<std::size_t>(steps));
  if (kind == ScheduleKind::linear) {
    for (int i = 0; i < steps; ++i) {
      betas[static_cast<std::size_t>(i)] =
          steps == 1 ? beta_min : beta_min + (beta_max - beta_min) * i / (steps - 1);
    }
  } else {
    constexpr double offset = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int i = 0; i < steps; ++i) {
      const double b = 1.0 - f(i + 1.0) / f(i);
      betas[static_cast<std::size_t>(i)] = std::clamp(b, beta_min, beta_max);
    }
  }
  return NoiseSchedule(kind, steps, beta_min, beta_max, std::move(betas));
}

double default_beta_min(int steps) { return std::min(1e-4 * 1000.0 / steps, 0.5); }
double default_beta_max(int steps) { return std::min(0.02 * 1000.0 / steps, 0.5); }

NoiseSchedule default_schedule(int steps) {
  return build_schedule(ScheduleKind::linear, steps, default_beta_min(steps), default_beta_max(steps));
}

double gaussian_log_pdf(std::span<const double> x, const DiagGaussian& g) {
  const std::size_t d = g.mean.size();
  if (x.size() != d) throw ParameterError("gaussian_log_pdf: dimension mismatch");
  if (g.variance.size() != 1 && g.variance.size() != d) {
    throw ParameterError("gaussian_log_pdf: variance must be scalar or match the mean");
  }
  for (double v : g.variance) {
    if (!(v > 0.0)) throw ParameterError("gaussian_log_pdf: variance must be positive");
  }
  if (g.variance.size() == 1) return isotropic_log_pdf(x, g.mean, g.variance[0]);

  double quad = 0.0;
  double logdet = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double r = x[i] - g.mean[i];
    quad += r * r / g.variance[i];
    logdet += std::log(g.variance[i]);
  }
  return -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

double isotropic_log_pdf(std::span<const double> x, std::span<const double> mean, double variance) {
  assert(x.size() == mean.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = x[i] - mean[i];
    sq += r * r;
  }
  const double d = static_cast<double>(x.size());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi * variance) + sq / variance);
}

Vec q_sample(std::span<const double> x0, int t, std::span<const double> noise, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) throw ParameterError("q_sample: t out of range");
  if (noise.size() != x0.size()) throw ParameterError("q_sample: noise dimension mismatch");
  const double a = std::sqrt(sched.alpha_bar(t));
  const double b = std::sqrt(1.0 - sched.alpha_bar(t));
  Vec out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * noise[i];
  return out;
}

Vec trajectory_noise(std::size_t dim, int steps, std::uint64_t seed, std::uint32_t trial) {
  Vec noise(dim * static_cast<std::size_t>(steps));
  for (int t = 1; t <= steps; ++t) {
    CounterStream stream(seed, Domain::forward_noise, trial, static_cast<std::uint32_t>(t));
    stream.fill_normal(std::span<double>(noise).subspan(static_cast<std::size_t>(t - 1) * dim, dim));
  }
  return noise;
}

void forward_chain(std::span<const double> x0, const NoiseSchedule& sched,
                   std::span<const double> noise, std::span<double> latents) {
  const std::size_t d = x0.size();
  const int steps = sched.steps();
  if (noise.size() != d * static_cast<std::size_t>(steps) || latents.size() != noise.size()) {
    throw ParameterError("forward_chain: buffer sizes do not match steps x dim");
  }
  std::span<const double> prev = x0;
  for (int t = 1; t <= steps; ++t) {
    const double keep = std::sqrt(sched.alpha(t));
    const double add = std::sqrt(sched.beta(t));
    const std::size_t row = static_cast<std::size_t>(t - 1) * d;
    for (std::size_t i = 0; i < d; ++i) latents[row + i] = keep * prev[i] + add * noise[row + i];
    prev = latents.subspan(row, d);
  }
}

Trajectory forward_trajectory(std::span<const double> x0, const NoiseSchedule& sched,
                              std::uint64_t seed, std::uint32_t trial) {
  Trajectory traj;
  traj.dim = x0.size();
  traj.steps = sched.steps();
  traj.seed = seed;
  traj.trial = trial;
  traj.noises = trajectory_noise(traj.dim, traj.steps, seed, trial);
  traj.latents.resize(traj.noises.size());
  forward_chain(x0, sched, traj.noises, traj.latents);
  return traj;
}

}  // namespace selfeval
