#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>

#include "selfeval/condition.hpp"
#include "selfeval/schedule.hpp"

namespace selfeval {

// Parameters of p(x_{t-1} | x_t, c) for a single latent.
struct DenoiserOutput {
  Vec mean;
  Vec variance;  // size 1 (isotropic) or dim
};

// Batched reverse-transition parameters, one row per (latent, timestep).
struct ReverseBatch {
  std::size_t rows = 0;
  std::size_t dim = 0;
  Vec mean;      // rows x dim
  Vec epsilon;   // rows x dim, predicted forward noise
  Vec variance;  // rows, isotropic per row

  void resize(std::size_t r, std::size_t d);
  std::span<const double> mean_row(std::size_t r) const { return {mean.data() + r * dim, dim}; }
  std::span<const double> epsilon_row(std::size_t r) const { return {epsilon.data() + r * dim, dim}; }
};

// Conditional reverse process mu_theta(x_t, t, c), Sigma_theta.
//
// Implementations must be safe to call concurrently from several threads
// and must give every row a result that does not depend on the other rows
// in the batch.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual std::size_t dim() const = 0;

  // latents: rows x dim, steps: one timestep per row (1..T).
  virtual void predict(std::span<const double> latents, std::span<const int> steps, const Condition& c,
                       const NoiseSchedule& sched, ReverseBatch& out) const = 0;

  // Same latents under several conditions; out[i] receives candidate i.
  // Must equal calling predict once per condition.
  virtual void predict_candidates(std::span<const double> latents, std::span<const int> steps,
                                  std::span<const Condition> conditions, const NoiseSchedule& sched,
                                  std::span<ReverseBatch> out) const;

  DenoiserOutput denoise(std::span<const double> x_t, int t, const Condition& c,
                         const NoiseSchedule& sched) const;
};

// Standard DDPM identities connecting the x0, epsilon and mean parameterizations.
void epsilon_to_reverse_mean(std::span<const double> x_t, std::span<const double> eps, int t,
                             const NoiseSchedule& sched, std::span<double> mean);
void x0_to_reverse_mean(std::span<const double> x_t, std::span<const double> x0_hat, int t,
                        const NoiseSchedule& sched, std::span<double> mean);
void x0_to_epsilon(std::span<const double> x_t, std::span<const double> x0_hat, int t,
                   const NoiseSchedule& sched, std::span<double> eps);

// Class-conditional Gaussian data: x0 | c ~ N(m_c, s^2 I).
struct GaussianClassModel {
  std::map<std::string, Vec> class_means;  // keyed by Condition::id()
  double class_var = 1.0;
  std::size_t dim = 0;

  const Vec& mean_for(const Condition& c) const;
  void add(const Condition& c, Vec mean);
};

// E[x0 | x_t, c] under a GaussianClassModel.
Vec analytic_posterior_x0(std::span<const double> x_t, int t, const Condition& c, const GaussianClassModel& gm,
                          const NoiseSchedule& sched);

// Exact reverse transitions of the forward process applied to Gaussian
// class data: mean is the DDPM posterior mean at x0_hat = E[x0 | x_t, c] and
// the variance adds the uncertainty of that estimate.
class AnalyticDenoiser final : public Denoiser {
 public:
  explicit AnalyticDenoiser(GaussianClassModel model);

  std::size_t dim() const override { return model_.dim; }
  void predict(std::span<const double> latents, std::span<const int> steps, const Condition& c,
               const NoiseSchedule& sched, ReverseBatch& out) const override;

  const GaussianClassModel& model() const { return model_; }

 private:
  GaussianClassModel model_;
};

// Forwards every request to `inner` with a fixed condition, so all candidate
// captions receive identical reverse transitions.
class ConditionIgnoringDenoiser final : public Denoiser {
 public:
  ConditionIgnoringDenoiser(std::shared_ptr<const Denoiser> inner, Condition fixed);

  std::size_t dim() const override { return inner_->dim(); }
  void predict(std::span<const double> latents, std::span<const int> steps, const Condition& c,
               const NoiseSchedule& sched, ReverseBatch& out) const override;

 private:
  std::shared_ptr<const Denoiser> inner_;
  Condition fixed_;
};

// Variance floor applied to reverse transitions whose exact variance is zero
// (t = 1 with a point-mass class).
inline constexpr double kMinReverseVariance = 1e-12;

}  // namespace selfeval
