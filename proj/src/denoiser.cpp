#include "selfeval/denoiser.hpp"

#include <cmath>

#include "selfeval/errors.hpp"

namespace selfeval {

void ReverseBatch::resize(std::size_t r, std::size_t d) {
  rows = r;
  dim = d;
  mean.resize(r * d);
  epsilon.resize(r * d);
  variance.resize(r);
}

DenoiserOutput Denoiser::denoise(std::span<const double> x_t, int t, const Condition& c,
                                 const NoiseSchedule& sched) const {
  if (t < 1 || t > sched.steps()) throw ParameterError("denoise: t out of range");
  if (x_t.size() != dim()) throw ParameterError("denoise: latent dimension mismatch");
  ReverseBatch batch;
  const int steps[] = {t};
  predict(x_t, steps, c, sched, batch);
  return {batch.mean, {batch.variance[0]}};
}

void Denoiser::predict_candidates(std::span<const double> latents, std::span<const int> steps,
                                  std::span<const Condition> conditions, const NoiseSchedule& sched,
                                  std::span<ReverseBatch> out) const {
  if (out.size() != conditions.size()) throw ParameterError("predict_candidates: one output per condition");
  for (std::size_t i = 0; i < conditions.size(); ++i) predict(latents, steps, conditions[i], sched, out[i]);
}

void epsilon_to_reverse_mean(std::span<const double> x_t, std::span<const double> eps, int t,
                             const NoiseSchedule& sched, std::span<double> mean) {
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
  const double eps_coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  for (std::size_t i = 0; i < x_t.size(); ++i) mean[i] = inv_sqrt_alpha * (x_t[i] - eps_coef * eps[i]);
}

void x0_to_reverse_mean(std::span<const double> x_t, std::span<const double> x0_hat, int t,
                        const NoiseSchedule& sched, std::span<double> mean) {
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t - 1);
  const double c0 = std::sqrt(ab_prev) * sched.beta(t) / (1.0 - ab);
  const double ct = std::sqrt(sched.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
  for (std::size_t i = 0; i < x_t.size(); ++i) mean[i] = c0 * x0_hat[i] + ct * x_t[i];
}

void x0_to_epsilon(std::span<const double> x_t, std::span<const double> x0_hat, int t,
                   const NoiseSchedule& sched, std::span<double> eps) {
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double inv_b = 1.0 / std::sqrt(1.0 - ab);
  for (std::size_t i = 0; i < x_t.size(); ++i) eps[i] = (x_t[i] - a * x0_hat[i]) * inv_b;
}

const Vec& GaussianClassModel::mean_for(const Condition& c) const {
  auto it = class_means.find(c.id());
  if (it == class_means.end()) throw ParameterError("analytic denoiser: unknown condition '" + c.id() + "'");
  return it->second;
}

void GaussianClassModel::add(const Condition& c, Vec mean) {
  if (dim == 0) dim = mean.size();
  if (mean.size() != dim) throw ParameterError("gaussian class model: mean dimension mismatch");
  class_means[c.id()] = std::move(mean);
}

namespace {

// Gain on (x_t - sqrt(abar) m) in E[x0 | x_t]; also yields Var(x0 | x_t).
struct Conditioning {
  double gain;
  double x0_var;
};

Conditioning conditioning(double ab, double s2) {
  const double denom = ab * s2 + 1.0 - ab;
  return {std::sqrt(ab) * s2 / denom, s2 * (1.0 - ab) / denom};
}

}  // namespace

Vec analytic_posterior_x0(std::span<const double> x_t, int t, const Condition& c, const GaussianClassModel& gm,
                          const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) throw ParameterError("analytic_posterior_x0: t out of range");
  const Vec& m = gm.mean_for(c);
  if (x_t.size() != m.size()) throw ParameterError("analytic_posterior_x0: dimension mismatch");
  const double ab = sched.alpha_bar(t);
  const auto k = conditioning(ab, gm.class_var);
  const double a = std::sqrt(ab);
  Vec out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] + k.gain * (x_t[i] - a * m[i]);
  return out;
}

AnalyticDenoiser::AnalyticDenoiser(GaussianClassModel model) : model_(std::move(model)) {
  if (!(model_.class_var >= 0.0)) throw ParameterError("analytic denoiser: class variance must be >= 0");
}

void AnalyticDenoiser::predict(std::span<const double> latents, std::span<const int> steps, const Condition& c,
                               const NoiseSchedule& sched, ReverseBatch& out) const {
  const std::size_t d = model_.dim;
  const std::size_t rows = steps.size();
  if (latents.size() != rows * d) throw ParameterError("analytic denoiser: latent batch shape mismatch");
  const Vec& m = model_.mean_for(c);
  out.resize(rows, d);
  Vec x0_hat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = steps[r];
    if (t < 1 || t > sched.steps()) throw ParameterError("analytic denoiser: t out of range");
    const auto x_t = latents.subspan(r * d, d);
    const double ab = sched.alpha_bar(t);
    const auto k = conditioning(ab, model_.class_var);
    const double a = std::sqrt(ab);
    for (std::size_t i = 0; i < d; ++i) x0_hat[i] = m[i] + k.gain * (x_t[i] - a * m[i]);
    auto mean_row = std::span<double>(out.mean).subspan(r * d, d);
    x0_to_reverse_mean(x_t, x0_hat, t, sched, mean_row);
    x0_to_epsilon(x_t, x0_hat, t, sched, std::span<double>(out.epsilon).subspan(r * d, d));
    const double c0 = std::sqrt(sched.alpha_bar(t - 1)) * sched.beta(t) / (1.0 - ab);
    out.variance[r] = std::max(sched.posterior_variance(t) + c0 * c0 * k.x0_var, kMinReverseVariance);
  }
}

ConditionIgnoringDenoiser::ConditionIgnoringDenoiser(std::shared_ptr<const Denoiser> inner, Condition fixed)
    : inner_(std::move(inner)), fixed_(std::move(fixed)) {
  if (!inner_) throw ParameterError("condition-ignoring denoiser: null inner model");
}

void ConditionIgnoringDenoiser::predict(std::span<const double> latents, std::span<const int> steps,
                                        const Condition&, const NoiseSchedule& sched, ReverseBatch& out) const {
  inner_->predict(latents, steps, fixed_, sched, out);
}

}  // namespace selfeval
