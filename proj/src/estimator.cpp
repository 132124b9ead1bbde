#include "selfeval/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "selfeval/errors.hpp"
#include "selfeval/parallel.hpp"
#include "selfeval/rng.hpp"

namespace selfeval {

namespace {
constexpr int kStepBlock = 32;
}  // namespace

std::string to_string(LatentMode m) {
  return m == LatentMode::forward_anchored ? "forwardAnchored" : "reverseAnchored";
}

std::string to_string(Aggregation a) { return a == Aggregation::jensen_sum ? "jensenSum" : "logSumExp"; }

LatentMode latent_mode_from_string(const std::string& s) {
  if (s == "forwardAnchored" || s == "forward") return LatentMode::forward_anchored;
  if (s == "reverseAnchored" || s == "reverse") return LatentMode::reverse_anchored;
  throw ParameterError("unknown latent mode '" + s + "'");
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "jensenSum" || s == "jensen") return Aggregation::jensen_sum;
  if (s == "logSumExp" || s == "lse") return Aggregation::log_sum_exp;
  throw ParameterError("unknown aggregation '" + s + "'");
}

void EstimatorConfig::validate() const {
  if (trials < 1) throw ParameterError("estimator: N (trials) must be >= 1");
  if (steps < 1) throw ParameterError("estimator: T (steps) must be >= 1");
}

nlohmann::ordered_json EstimatorConfig::to_json() const {
  nlohmann::ordered_json j;
  j["N"] = trials;
  j["T"] = steps;
  j["seed"] = seed;
  j["latentMode"] = to_string(latent_mode);
  j["aggregation"] = to_string(aggregation);
  return j;
}

EstimatorConfig EstimatorConfig::from_json(const nlohmann::json& j) {
  EstimatorConfig c;
  c.trials = j.at("N").get<int>();
  c.steps = j.at("T").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.latent_mode = latent_mode_from_string(j.at("latentMode").get<std::string>());
  c.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
  c.validate();
  return c;
}

double log_mean_exp(std::span<const double> values) {
  if (values.empty()) throw ParameterError("log_mean_exp: empty input");
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s) - std::log(static_cast<double>(values.size()));
}

double aggregate(std::span<const double> trial_logs, Aggregation aggregation) {
  if (aggregation == Aggregation::jensen_sum) return std::accumulate(trial_logs.begin(), trial_logs.end(), 0.0);
  return log_mean_exp(trial_logs);
}

Posterior posterior_from_log_likelihoods(std::vector<std::string> ids, Vec log_likelihoods) {
  if (log_likelihoods.empty()) throw ParameterError("posterior: no candidates");
  if (ids.size() != log_likelihoods.size()) throw ParameterError("posterior: id/likelihood count mismatch");
  Posterior p;
  p.candidate_ids = std::move(ids);
  p.log_likelihoods = std::move(log_likelihoods);
  p.argmax = 0;
  for (std::size_t i = 1; i < p.log_likelihoods.size(); ++i) {
    if (p.log_likelihoods[i] > p.log_likelihoods[p.argmax]) p.argmax = i;
  }
  const double m = p.log_likelihoods[p.argmax];
  p.probabilities.resize(p.log_likelihoods.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.log_likelihoods.size(); ++i) {
    p.probabilities[i] = std::exp(p.log_likelihoods[i] - m);
    z += p.probabilities[i];
  }
  for (double& v : p.probabilities) v /= z;
  return p;
}

NoiseBank::NoiseBank(std::size_t dim, int steps, int trials, std::uint64_t seed, bool with_elbo_noise)
    : dim_(dim), steps_(steps), trials_(trials), seed_(seed) {
  if (trials < 1 || steps < 1 || dim == 0) throw ParameterError("noise bank: empty shape");
  for (int n = 0; n < trials; ++n) forward_.push_back(trajectory_noise(dim, steps, seed, static_cast<std::uint32_t>(n)));
  if (with_elbo_noise) {
    for (int n = 0; n < trials; ++n) {
      Vec e(dim * static_cast<std::size_t>(steps));
      for (int t = 1; t <= steps; ++t) {
        CounterStream(seed, Domain::elbo, static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(t))
            .fill_normal(std::span<double>(e).subspan(static_cast<std::size_t>(t - 1) * dim, dim));
      }
      elbo_.push_back(std::move(e));
    }
  }
}

std::span<const double> NoiseBank::forward(int trial) const { return forward_.at(static_cast<std::size_t>(trial)); }
std::span<const double> NoiseBank::elbo(int trial) const { return elbo_.at(static_cast<std::size_t>(trial)); }

SelfEvalEstimator::SelfEvalEstimator(const Denoiser& model, const NoiseSchedule& sched, EstimatorConfig cfg,
                                     std::shared_ptr<const NoiseBank> bank)
    : model_(model), sched_(sched), cfg_(cfg), bank_(std::move(bank)) {
  cfg_.validate();
  if (cfg_.steps != sched_.steps()) {
    throw ParameterError("estimator: T = " + std::to_string(cfg_.steps) + " but the schedule has " +
                         std::to_string(sched_.steps()) + " steps");
  }
  if (bank_ && (bank_->dim() != model_.dim() || bank_->steps() != cfg_.steps || bank_->trials() < cfg_.trials ||
                bank_->seed() != cfg_.seed)) {
    throw ParameterError("estimator: noise bank does not match the configuration");
  }
}

void SelfEvalEstimator::check_input(std::span<const double> x0) const {
  if (x0.size() != model_.dim()) {
    throw ParameterError("estimator: input dimension " + std::to_string(x0.size()) + " != model dimension " +
                         std::to_string(model_.dim()));
  }
  for (double v : x0) {
    if (!std::isfinite(v)) throw ParameterError("estimator: non-finite input");
  }
}

std::span<const double> SelfEvalEstimator::forward_noise(int trial, Vec& scratch) const {
  if (bank_) return bank_->forward(trial);
  scratch = trajectory_noise(model_.dim(), cfg_.steps, cfg_.seed, static_cast<std::uint32_t>(trial));
  return scratch;
}

LikelihoodEstimate SelfEvalEstimator::estimate(std::span<const double> x0, const Condition& c) const {
  return estimate_all(x0, std::span(&c, 1)).front();
}

std::vector<LikelihoodEstimate> SelfEvalEstimator::estimate_all(std::span<const double> x0,
                                                                std::span<const Condition> candidates,
                                                                EstimatorObserver* observer) const {
  check_input(x0);
  if (candidates.empty()) throw ParameterError("estimator: no candidates");
  const std::size_t d = x0.size();
  const int T = cfg_.steps;
  const int N = cfg_.trials;

  std::vector<LikelihoodEstimate> out(candidates.size());
  for (auto& e : out) {
    e.per_trial.assign(static_cast<std::size_t>(N), 0.0);
    e.prior_logs.assign(static_cast<std::size_t>(N), 0.0);
    e.seed = cfg_.seed;
    e.config = cfg_;
  }

  std::vector<int> steps(static_cast<std::size_t>(T));
  std::iota(steps.begin(), steps.end(), 1);
  const Vec zeros(d, 0.0);
  Vec scratch;
  Vec latents(d * static_cast<std::size_t>(T));
  Vec reverse(d);
  Vec z(d);
  ReverseBatch batch;
  std::vector<ReverseBatch> batches(candidates.size());
  Vec sums;

  auto target = [&](int t) -> std::span<const double> {
    return t == 1 ? x0 : std::span<const double>(latents).subspan(static_cast<std::size_t>(t - 2) * d, d);
  };
  auto check = [&](double v, int trial, int t, const Condition& c) {
    if (!std::isfinite(v)) {
      throw NumericalError("estimator: non-finite density term at trial " + std::to_string(trial) +
                           ", timestep " + std::to_string(t) + " (candidate '" + c.id() + "')");
    }
  };

  for (int n = 0; n < N; ++n) {
    const auto noise = forward_noise(n, scratch);
    forward_chain(x0, sched_, noise, latents);
    const auto x_T = std::span<const double>(latents).subspan(static_cast<std::size_t>(T - 1) * d, d);
    const double prior = isotropic_log_pdf(x_T, zeros, 1.0);
    check(prior, n, T, candidates.front());
    sums.assign(candidates.size(), prior);
    if (cfg_.latent_mode == LatentMode::forward_anchored) {
      // Blocks of steps keep the per-candidate outputs cache-sized.
      for (int t0 = 1; t0 <= T; t0 += kStepBlock) {
        const int nb = std::min(kStepBlock, T - t0 + 1);
        const auto off = static_cast<std::size_t>(t0 - 1);
        model_.predict_candidates(std::span<const double>(latents).subspan(off * d, static_cast<std::size_t>(nb) * d),
                                  std::span<const int>(steps).subspan(off, static_cast<std::size_t>(nb)), candidates,
                                  sched_, batches);
        for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
          const ReverseBatch& b = batches[ci];
          for (int r = 0; r < nb; ++r) {
            const int t = t0 + r;
            const double lp = isotropic_log_pdf(target(t), b.mean_row(static_cast<std::size_t>(r)), b.variance[r]);
            check(lp, n, t, candidates[ci]);
            sums[ci] += lp;
          }
        }
      }
    }

    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      const Condition& c = candidates[ci];
      if (observer) observer->on_trial(n, ci, latents);
      double& sum = sums[ci];
      if (cfg_.latent_mode == LatentMode::reverse_anchored) {
        std::copy(x_T.begin(), x_T.end(), reverse.begin());
        for (int t = T; t >= 1; --t) {
          const int step[] = {t};
          model_.predict(reverse, step, c, sched_, batch);
          const double lp = isotropic_log_pdf(target(t), batch.mean_row(0), batch.variance[0]);
          check(lp, n, t, c);
          sum += lp;
          if (t > 1) {
            CounterStream(cfg_.seed, Domain::reverse_noise, static_cast<std::uint32_t>(n),
                          static_cast<std::uint32_t>(t))
                .fill_normal(z);
            const double sd = std::sqrt(batch.variance[0]);
            for (std::size_t i = 0; i < d; ++i) reverse[i] = batch.mean[i] + sd * z[i];
          }
        }
      }
      out[ci].per_trial[static_cast<std::size_t>(n)] = sum;
      out[ci].prior_logs[static_cast<std::size_t>(n)] = prior;
    }
  }

  for (auto& e : out) {
    e.log_likelihood = aggregate(e.per_trial, cfg_.aggregation);
    e.prior_term_log = std::accumulate(e.prior_logs.begin(), e.prior_logs.end(), 0.0) / N;
  }
  return out;
}

Posterior SelfEvalEstimator::classify(std::span<const double> x0, std::span<const Condition> candidates,
                                      std::vector<LikelihoodEstimate>* estimates,
                                      EstimatorObserver* observer) const {
  auto all = estimate_all(x0, candidates, observer);
  std::vector<std::string> ids;
  Vec lls;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    ids.push_back(candidates[i].id());
    lls.push_back(all[i].log_likelihood);
  }
  if (estimates) *estimates = std::move(all);
  return posterior_from_log_likelihoods(std::move(ids), std::move(lls));
}

Vec SelfEvalEstimator::elbo_proxy_all(std::span<const double> x0, std::span<const Condition> candidates) const {
  check_input(x0);
  const std::size_t d = x0.size();
  const int T = cfg_.steps;
  const int N = cfg_.trials;
  std::vector<int> steps(static_cast<std::size_t>(T));
  std::iota(steps.begin(), steps.end(), 1);
  Vec noise(d * static_cast<std::size_t>(T));
  Vec latents(noise.size());
  Vec sq(candidates.size(), 0.0);
  std::vector<ReverseBatch> batches(candidates.size());
  for (int n = 0; n < N; ++n) {
    std::span<const double> eps;
    if (bank_ && bank_->has_elbo_noise()) {
      eps = bank_->elbo(n);
    } else {
      for (int t = 1; t <= T; ++t) {
        CounterStream(cfg_.seed, Domain::elbo, static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(t))
            .fill_normal(std::span<double>(noise).subspan(static_cast<std::size_t>(t - 1) * d, d));
      }
      eps = noise;
    }
    for (int t = 1; t <= T; ++t) {
      const std::size_t row = static_cast<std::size_t>(t - 1) * d;
      const auto x_t = q_sample(x0, t, eps.subspan(row, d), sched_);
      std::copy(x_t.begin(), x_t.end(), latents.begin() + static_cast<std::ptrdiff_t>(row));
    }
    model_.predict_candidates(latents, steps, candidates, sched_, batches);
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      for (std::size_t i = 0; i < eps.size(); ++i) {
        const double diff = batches[ci].epsilon[i] - eps[i];
        sq[ci] += diff * diff;
      }
    }
  }
  Vec scores(candidates.size());
  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    scores[ci] = -sq[ci] / static_cast<double>(N * T);
    if (!std::isfinite(scores[ci])) throw NumericalError("elbo proxy: non-finite score");
  }
  return scores;
}

double SelfEvalEstimator::elbo_proxy(std::span<const double> x0, const Condition& c) const {
  return elbo_proxy_all(x0, std::span(&c, 1)).front();
}

LikelihoodEstimate estimate_log_likelihood(std::span<const double> x0, const Condition& c, const Denoiser& model,
                                           const NoiseSchedule& sched, const EstimatorConfig& cfg) {
  return SelfEvalEstimator(model, sched, cfg).estimate(x0, c);
}

Posterior classify(std::span<const double> x0, std::span<const Condition> candidates, const Denoiser& model,
                   const NoiseSchedule& sched, const EstimatorConfig& cfg) {
  return SelfEvalEstimator(model, sched, cfg).classify(x0, candidates);
}

double elbo_proxy_score(std::span<const double> x0, const Condition& c, const Denoiser& model,
                        const NoiseSchedule& sched, const EstimatorConfig& cfg) {
  return SelfEvalEstimator(model, sched, cfg).elbo_proxy(x0, c);
}

bool text_correct(const PairScores& s) { return s.ca_xa > s.cb_xa && s.cb_xb > s.ca_xb; }
bool image_correct(const PairScores& s) { return s.ca_xa > s.ca_xb && s.cb_xb > s.cb_xa; }

WinogroundScores image_text_scores(std::span<const WinogroundPair> pairs, const PairScorer& scorer,
                                   std::size_t workers) {
  if (pairs.empty()) throw ParameterError("image_text_scores: no pairs");
  std::vector<PairScores> scores(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t i) { scores[i] = scorer(pairs[i]); });
  std::size_t text = 0, image = 0, group = 0;
  for (const auto& s : scores) {
    const bool t = text_correct(s);
    const bool im = image_correct(s);
    text += t;
    image += im;
    group += t && im;
  }
  const double n = static_cast<double>(pairs.size());
  return {image / n, text / n, group / n, pairs.size()};
}

std::string to_string(ScorerKind s) { return s == ScorerKind::selfeval ? "selfeval" : "elbo"; }

ScorerKind scorer_from_string(const std::string& s) {
  if (s == "selfeval") return ScorerKind::selfeval;
  if (s == "elbo") return ScorerKind::elbo;
  throw ParameterError("unknown scorer '" + s + "'");
}

PairScorer make_pair_scorer(ScorerKind kind, std::vector<const Denoiser*> worlds, const NoiseSchedule& sched,
                            const EstimatorConfig& cfg) {
  if (worlds.empty()) throw ParameterError("pair scorer: no denoisers");
  return [kind, worlds = std::move(worlds), &sched, cfg](const WinogroundPair& p) {
    auto score_image = [&](std::span<const double> x, std::size_t world) {
      if (world >= worlds.size() || !worlds[world]) throw ParameterError("pair scorer: unknown world index");
      const SelfEvalEstimator est(*worlds[world], sched, cfg);
      const Condition caps[] = {p.c_a, p.c_b};
      if (kind == ScorerKind::elbo) return est.elbo_proxy_all(x, caps);
      const auto e = est.estimate_all(x, caps);
      return Vec{e[0].log_likelihood, e[1].log_likelihood};
    };
    const Vec a = score_image(p.x_a, p.world_a);
    const Vec b = score_image(p.x_b, p.world_b);
    return PairScores{a[0], a[1], b[0], b[1]};
  };
}

WinogroundScores image_text_scores(std::span<const WinogroundPair> pairs, ScorerKind kind,
                                   std::vector<const Denoiser*> worlds, const NoiseSchedule& sched,
                                   const EstimatorConfig& cfg, std::size_t workers) {
  return image_text_scores(pairs, make_pair_scorer(kind, std::move(worlds), sched, cfg), workers);
}

}  // namespace selfeval
