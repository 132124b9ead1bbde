#include "selfeval/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_set>

#include "mlp_kernels.hpp"
#include "selfeval/errors.hpp"
#include "selfeval/rng.hpp"

namespace selfeval {

template <typename Scalar>
DenseLayer<Scalar>::DenseLayer(std::size_t in_dim, std::size_t out_dim)
    : in(in_dim),
      out(out_dim),
      out_padded(round_up(out_dim, kColBlock)),
      weights(in_dim * round_up(out_dim, kColBlock), Scalar(0)),
      bias(round_up(out_dim, kColBlock), Scalar(0)) {}

double diffusion_clock(int t, int steps) { return 1000.0 * t / steps; }

void time_features(double t, std::span<double> out) {
  const std::size_t half = out.size() / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(1000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(t * freq);
    out[half + i] = std::cos(t * freq);
  }
  if (out.size() % 2) out.back() = 0.0;
}

template <typename Scalar>
MlpNet<Scalar>::MlpNet(MlpShape shape, std::uint64_t init_seed) : shape_(std::move(shape)) {
  if (shape_.data_dim == 0) throw ParameterError("mlp: data dimension must be positive");
  std::size_t prev = shape_.input_dim();
  std::vector<std::size_t> widths = shape_.hidden;
  widths.push_back(shape_.data_dim);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    if (widths[l] == 0) throw ParameterError("mlp: zero-width layer");
    DenseLayer<Scalar> layer(prev, widths[l]);
    // Uniform with variance 1/fan_in; output layer scaled down.
    const double bound = std::sqrt(3.0 / static_cast<double>(prev)) * (l + 1 == widths.size() ? 0.5 : 1.0);
    CounterStream stream(init_seed, Domain::init, static_cast<std::uint32_t>(l));
    std::uint64_t idx = 0;
    for (std::size_t i = 0; i < layer.in; ++i) {
      for (std::size_t o = 0; o < layer.out; ++o) {
        layer.weight(i, o) = static_cast<Scalar>(bound * (2.0 * stream.uniform(idx++) - 1.0));
      }
    }
    layers_.push_back(std::move(layer));
    prev = widths[l];
  }
}

template <typename Scalar>
std::size_t MlpNet<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.parameter_count();
  return n;
}

template <typename Scalar>
void MlpNet<Scalar>::begin(Workspace& ws, std::size_t rows) const {
  ws.rows = rows;
  ws.padded_rows = round_up(std::max<std::size_t>(rows, 1), kRowBlock);
  ws.input.assign(ws.padded_rows * shape_.input_dim(), Scalar(0));
  ws.pre.resize(layers_.size());
  ws.post.resize(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    ws.pre[l].resize(ws.padded_rows * layers_[l].out_padded);
    if (l + 1 < layers_.size()) ws.post[l].resize(ws.padded_rows * layers_[l].out_padded);
  }
}

template <typename Scalar>
std::span<Scalar> MlpNet<Scalar>::input_row(Workspace& ws, std::size_t r) const {
  return {ws.input.data() + r * shape_.input_dim(), shape_.input_dim()};
}

template <typename Scalar>
void MlpNet<Scalar>::forward_shared(Workspace& ws) const {
  const auto& l0 = layers_.front();
  const std::size_t d = shape_.data_dim;
  const std::size_t stride = shape_.input_dim();
  ws.shared.resize(ws.padded_rows * l0.out_padded);
  ws.scratch.resize(ws.padded_rows * l0.out_padded);
  kernels::dense_forward_range(l0, ws.input.data(), stride, ws.padded_rows, ws.shared.data(), 0, d, false);
  kernels::dense_forward_range(l0, ws.input.data(), stride, ws.padded_rows, ws.scratch.data(), d,
                               d + shape_.time_features, true);
  for (std::size_t i = 0; i < ws.shared.size(); ++i) ws.shared[i] += ws.scratch[i];
}

template <typename Scalar>
std::vector<Scalar> MlpNet<Scalar>::condition_part(std::span<const double> embedding) const {
  if (embedding.size() != shape_.cond_dim) throw ParameterError("mlp: condition embedding size mismatch");
  const auto& l0 = layers_.front();
  const std::size_t stride = shape_.input_dim();
  const std::size_t c0 = shape_.data_dim + shape_.time_features;
  std::vector<Scalar> in(kRowBlock * stride, Scalar(0));
  for (std::size_t i = 0; i < embedding.size(); ++i) in[c0 + i] = static_cast<Scalar>(embedding[i]);
  std::vector<Scalar> out(kRowBlock * l0.out_padded);
  kernels::dense_forward_range(l0, in.data(), stride, kRowBlock, out.data(), c0, stride, false);
  out.resize(l0.out_padded);
  return out;
}

template <typename Scalar>
const std::vector<Scalar>& MlpNet<Scalar>::forward_from_shared(Workspace& ws, std::span<const Scalar> cond_part) const {
  const std::size_t P = layers_.front().out_padded;
  if (cond_part.size() != P || ws.shared.size() != ws.padded_rows * P) {
    throw ParameterError("mlp: forward_from_shared called without a matching shared pass");
  }
  auto& pre = ws.pre.front();
  for (std::size_t r = 0; r < ws.padded_rows; ++r) {
    const Scalar* a = ws.shared.data() + r * P;
    Scalar* o = pre.data() + r * P;
    for (std::size_t j = 0; j < P; ++j) o[j] = a[j] + cond_part[j];
  }
  forward_tail(ws);
  return ws.pre.back();
}

template <typename Scalar>
const std::vector<Scalar>& MlpNet<Scalar>::forward(Workspace& ws) const {
  forward_shared(ws);
  const auto& l0 = layers_.front();
  const std::size_t stride = shape_.input_dim();
  const std::size_t c0 = shape_.data_dim + shape_.time_features;
  kernels::dense_forward_range(l0, ws.input.data(), stride, ws.padded_rows, ws.scratch.data(), c0, stride, false);
  auto& pre = ws.pre.front();
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] = ws.shared[i] + ws.scratch[i];
  forward_tail(ws);
  return ws.pre.back();
}

template <typename Scalar>
void MlpNet<Scalar>::forward_tail(Workspace& ws) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (l > 0) {
      kernels::dense_forward(layers_[l], ws.post[l - 1].data(), layers_[l - 1].out_padded, ws.padded_rows,
                             ws.pre[l].data());
    }
    if (l + 1 < layers_.size()) kernels::silu_forward(ws.pre[l].data(), ws.post[l].data(), ws.pre[l].size());
  }
}

template <typename Scalar>
void MlpNet<Scalar>::backward(Workspace& ws, std::span<const Scalar> grad_out,
                              std::vector<DenseLayer<Scalar>>& grads) const {
  ws.grad_buffer.resize(2);
  std::vector<Scalar> d(grad_out.begin(), grad_out.end());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Scalar* in = l == 0 ? ws.input.data() : ws.post[l - 1].data();
    const std::size_t in_stride = l == 0 ? shape_.input_dim() : layers_[l - 1].out_padded;
    Scalar* din = nullptr;
    std::vector<Scalar>& next = ws.grad_buffer[l % 2];
    if (l > 0) {
      next.assign(ws.padded_rows * layers_[l - 1].out_padded, Scalar(0));
      din = next.data();
    }
    kernels::dense_backward(layers_[l], in, in_stride, ws.rows, d.data(), grads[l], din, in_stride);
    if (l > 0) {
      kernels::silu_backward(ws.pre[l - 1].data(), din, ws.rows * layers_[l - 1].out_padded);
      d.swap(next);
    }
  }
}

template <typename Scalar>
std::vector<DenseLayer<Scalar>> MlpNet<Scalar>::zero_like() const {
  std::vector<DenseLayer<Scalar>> z;
  for (const auto& l : layers_) z.emplace_back(l.in, l.out);
  return z;
}

template <typename Scalar>
std::vector<Scalar> MlpNet<Scalar>::flatten() const {
  std::vector<Scalar> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers_) {
    for (std::size_t i = 0; i < l.in; ++i)
      for (std::size_t o = 0; o < l.out; ++o) flat.push_back(l.weight(i, o));
    for (std::size_t o = 0; o < l.out; ++o) flat.push_back(l.bias[o]);
  }
  return flat;
}

template <typename Scalar>
void MlpNet<Scalar>::unflatten(std::span<const Scalar> flat) {
  if (flat.size() != parameter_count()) throw DataError("mlp: parameter blob has the wrong size");
  std::size_t p = 0;
  for (auto& l : layers_) {
    for (std::size_t i = 0; i < l.in; ++i)
      for (std::size_t o = 0; o < l.out; ++o) l.weight(i, o) = flat[p++];
    for (std::size_t o = 0; o < l.out; ++o) l.bias[o] = flat[p++];
  }
}

template <typename Scalar>
template <typename Other>
MlpNet<Other> MlpNet<Scalar>::cast() const {
  MlpNet<Other> net;
  net.shape_ = shape_;
  for (const auto& l : layers_) {
    DenseLayer<Other> o(l.in, l.out);
    std::transform(l.weights.begin(), l.weights.end(), o.weights.begin(), [](Scalar v) { return Other(v); });
    std::transform(l.bias.begin(), l.bias.end(), o.bias.begin(), [](Scalar v) { return Other(v); });
    net.layers_.push_back(std::move(o));
  }
  return net;
}

template struct DenseLayer<float>;
template struct DenseLayer<double>;
template class MlpNet<float>;
template class MlpNet<double>;
template MlpNet<double> MlpNet<float>::cast<double>() const;
template MlpNet<float> MlpNet<double>::cast<float>() const;
template MlpNet<float> MlpNet<float>::cast<float>() const;

namespace {

template <typename Scalar>
void fill_input_row(std::span<Scalar> row, std::span<const double> x_t, double t, std::span<const double> cond,
                    std::size_t time_dim) {
  const std::size_t d = x_t.size();
  for (std::size_t i = 0; i < d; ++i) row[i] = static_cast<Scalar>(x_t[i]);
  std::vector<double> tf(time_dim);
  time_features(t, tf);
  for (std::size_t i = 0; i < time_dim; ++i) row[d + i] = static_cast<Scalar>(tf[i]);
  for (std::size_t i = 0; i < cond.size(); ++i) row[d + time_dim + i] = static_cast<Scalar>(cond[i]);
}

}  // namespace

EpsilonParam epsilon_param(const NoiseSchedule& sched, int t) {
  const double ab = sched.alpha_bar(t);
  const double s = std::sqrt(1.0 - ab);
  return {1.0 / s, -std::sqrt(ab) / s};
}

template <typename Scalar>
double epsilon_mse(const MlpNet<Scalar>& net, std::span<const ConditionedSample* const> samples,
                   std::span<const int> steps, std::span<const double> noise, const NoiseSchedule& sched,
                   std::vector<DenseLayer<Scalar>>* grads) {
  const std::size_t d = net.shape().data_dim;
  const std::size_t rows = samples.size();
  if (steps.size() != rows || noise.size() != rows * d) throw ParameterError("epsilon_mse: batch shape mismatch");
  typename MlpNet<Scalar>::Workspace ws;
  net.begin(ws, rows);
  Vec x_t(d), skip_x(rows * d), out_coef(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& s = *samples[r];
    if (s.x0.size() != d) throw ParameterError("epsilon_mse: sample dimension mismatch");
    const double ab = sched.alpha_bar(steps[r]);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    const auto k = epsilon_param(sched, steps[r]);
    out_coef[r] = k.out;
    for (std::size_t i = 0; i < d; ++i) {
      x_t[i] = a * s.x0[i] + b * noise[r * d + i];
      skip_x[r * d + i] = k.skip * x_t[i];
    }
    const auto cond = s.condition.embedding();
    fill_input_row<Scalar>(net.input_row(ws, r), x_t, diffusion_clock(steps[r], sched.steps()), cond, net.shape().time_features);
  }
  const auto& out = net.forward(ws);
  const std::size_t stride = net.output_stride();
  const double scale = 1.0 / static_cast<double>(rows * d);
  double loss = 0.0;
  std::vector<Scalar> grad_out;
  if (grads) grad_out.assign(ws.padded_rows * stride, Scalar(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = out_coef[r] * static_cast<double>(out[r * stride + i]) + skip_x[r * d + i] - noise[r * d + i];
      loss += diff * diff;
      if (grads) grad_out[r * stride + i] = static_cast<Scalar>(2.0 * diff * out_coef[r] * scale);
    }
  }
  if (grads) net.backward(ws, grad_out, *grads);
  return loss * scale;
}

template double epsilon_mse<float>(const MlpNet<float>&, std::span<const ConditionedSample* const>,
                                   std::span<const int>, std::span<const double>, const NoiseSchedule&,
                                   std::vector<DenseLayer<float>>*);
template double epsilon_mse<double>(const MlpNet<double>&, std::span<const ConditionedSample* const>,
                                    std::span<const int>, std::span<const double>, const NoiseSchedule&,
                                    std::vector<DenseLayer<double>>*);

MlpDenoiser::MlpDenoiser(MlpNet<float> net, int epochs_completed)
    : net_(std::move(net)), epochs_completed_(epochs_completed) {}

void MlpDenoiser::predict(std::span<const double> latents, std::span<const int> steps, const Condition& c,
                          const NoiseSchedule& sched, ReverseBatch& out) const {
  predict_candidates(latents, steps, std::span(&c, 1), sched, std::span(&out, 1));
}

void MlpDenoiser::predict_candidates(std::span<const double> latents, std::span<const int> steps,
                                     std::span<const Condition> conditions, const NoiseSchedule& sched,
                                     std::span<ReverseBatch> out) const {
  const std::size_t d = dim();
  const std::size_t rows = steps.size();
  if (latents.size() != rows * d) throw ParameterError("mlp denoiser: latent batch shape mismatch");
  if (out.size() != conditions.size()) throw ParameterError("mlp denoiser: one output per condition");
  thread_local MlpNet<float>::Workspace ws;
  net_.begin(ws, rows);
  const std::size_t tf = net_.shape().time_features;
  std::vector<double> tau(tf);
  Vec inv_sqrt_alpha(rows), eps_coef(rows);
  std::vector<EpsilonParam> param(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = steps[r];
    if (t < 1 || t > sched.steps()) throw ParameterError("mlp denoiser: t out of range");
    auto row = net_.input_row(ws, r);
    for (std::size_t i = 0; i < d; ++i) row[i] = static_cast<float>(latents[r * d + i]);
    time_features(diffusion_clock(t, sched.steps()), tau);
    for (std::size_t i = 0; i < tf; ++i) row[d + i] = static_cast<float>(tau[i]);
    inv_sqrt_alpha[r] = 1.0 / std::sqrt(sched.alpha(t));
    eps_coef[r] = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
    param[r] = epsilon_param(sched, t);
  }
  net_.forward_shared(ws);
  const std::size_t stride = net_.output_stride();
  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    const auto cond = net_.condition_part(conditions[ci].embedding());
    const auto& eps = net_.forward_from_shared(ws, cond);
    ReverseBatch& o = out[ci];
    o.resize(rows, d);
    for (std::size_t r = 0; r < rows; ++r) {
      const float* e = eps.data() + r * stride;
      const double* x = latents.data() + r * d;
      double* em = o.epsilon.data() + r * d;
      double* m = o.mean.data() + r * d;
      for (std::size_t i = 0; i < d; ++i) {
        em[i] = param[r].skip * x[i] + param[r].out * static_cast<double>(e[i]);
        m[i] = inv_sqrt_alpha[r] * (x[i] - eps_coef[r] * em[i]);
      }
      o.variance[r] = sched.beta(steps[r]);
    }
  }
}

namespace {

struct Draws {
  std::vector<int> steps;
  Vec noise;
};

Draws draw_batch(std::uint64_t seed, std::uint32_t epoch, std::size_t first, std::size_t count, std::size_t dim,
                 int T) {
  Draws d;
  d.steps.resize(count);
  d.noise.resize(count * dim);
  CounterStream t_stream(seed, Domain::training, epoch, 1);
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t p = first + j;
    d.steps[j] = 1 + static_cast<int>(t_stream.below(static_cast<std::uint32_t>(T), p));
    CounterStream eps(seed, Domain::training, epoch, static_cast<std::uint32_t>(2 + p));
    eps.fill_normal(std::span<double>(d.noise).subspan(j * dim, dim));
  }
  return d;
}

constexpr std::uint32_t kProbeEpoch = 0xFFFFFFFFu;
constexpr std::size_t kProbeSize = 256;

}  // namespace

TrainResult train_mlp(std::span<const ConditionedSample> dataset, const NoiseSchedule& sched,
                      const TrainerConfig& cfg, const MlpDenoiser* resume, const EpochCallback& on_epoch) {
  if (dataset.empty()) throw ParameterError("train_mlp: empty dataset");
  if (cfg.epochs < 0 || cfg.batch_size == 0) throw ParameterError("train_mlp: invalid epochs or batch size");
  const std::size_t d = dataset.front().x0.size();
  std::unordered_set<std::uint64_t> keys;
  for (const auto& s : dataset) {
    if (s.x0.size() != d) throw ParameterError("train_mlp: samples differ in dimension");
    if (!keys.insert(s.key).second) throw ParameterError("train_mlp: duplicate sample key");
  }

  std::vector<const ConditionedSample*> canonical;
  for (const auto& s : dataset) canonical.push_back(&s);
  std::sort(canonical.begin(), canonical.end(), [](auto* a, auto* b) { return a->key < b->key; });

  MlpNet<float> net;
  if (resume) {
    net = resume->net();
    if (net.shape().data_dim != d) throw ParameterError("train_mlp: checkpoint dimension does not match data");
  } else {
    MlpShape shape = cfg.shape;
    shape.data_dim = d;
    net = MlpNet<float>(shape, mix_seed(cfg.seed, 0x1417));
  }

  const int T = sched.steps();
  const std::size_t probe_n = std::min(kProbeSize, canonical.size());
  const std::span<const ConditionedSample* const> probe(canonical.data(), probe_n);
  const Draws probe_draws = draw_batch(cfg.seed, kProbeEpoch, 0, probe_n, d, T);

  TrainResult result;
  result.log.initial_mse = epsilon_mse(net, probe, probe_draws.steps, probe_draws.noise, sched);

  auto velocity = net.zero_like();
  auto grads = net.zero_like();
  const float mu = static_cast<float>(cfg.momentum);

  const int epoch_base = resume ? resume->epochs_completed() + cfg.start_epoch : cfg.start_epoch;
  const std::size_t per_epoch = (canonical.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_batches = static_cast<double>(per_epoch) * cfg.epochs;
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto epoch = static_cast<std::uint32_t>(epoch_base + e);
    std::vector<const ConditionedSample*> order = canonical;
    StreamCursor(CounterStream(cfg.seed, Domain::training, epoch, 0)).shuffle(std::span(order));

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - first);
      const Draws draws = draw_batch(cfg.seed, epoch, first, count, d, T);
      for (auto& g : grads) {
        std::fill(g.weights.begin(), g.weights.end(), 0.0f);
        std::fill(g.bias.begin(), g.bias.end(), 0.0f);
      }
      const double loss = epsilon_mse(net, std::span(order).subspan(first, count), draws.steps, draws.noise,
                                      sched, &grads);
      if (!std::isfinite(loss)) {
        throw NumericalError("train_mlp: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches));
      }
      double norm2 = 0.0;
      for (const auto& g : grads) {
        for (float v : g.weights) norm2 += static_cast<double>(v) * v;
        for (float v : g.bias) norm2 += static_cast<double>(v) * v;
      }
      const float scale = (cfg.clip_norm > 0.0 && norm2 > cfg.clip_norm * cfg.clip_norm)
                              ? static_cast<float>(cfg.clip_norm / std::sqrt(norm2))
                              : 1.0f;
      const double progress = (static_cast<double>(e) * per_epoch + batches) / total_batches;
      const auto lr = static_cast<float>(
          cfg.cosine_decay ? cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)) : cfg.learning_rate);
      auto& layers = net.layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto step = [&](std::vector<float>& p, std::vector<float>& v, const std::vector<float>& g) {
          for (std::size_t i = 0; i < p.size(); ++i) {
            v[i] = mu * v[i] + scale * g[i];
            p[i] -= lr * v[i];
          }
        };
        step(layers[l].weights, velocity[l].weights, grads[l].weights);
        step(layers[l].bias, velocity[l].bias, grads[l].bias);
      }
      epoch_loss += loss;
      ++batches;
    }
    const double mean = epoch_loss / static_cast<double>(batches);
    result.log.epoch_mse.push_back(mean);
    if (on_epoch) on_epoch(static_cast<int>(epoch), mean);
  }

  result.log.final_mse = epsilon_mse(net, probe, probe_draws.steps, probe_draws.noise, sched);
  if (!std::isfinite(result.log.final_mse)) throw NumericalError("train_mlp: non-finite probe loss");
  const int completed = (resume ? resume->epochs_completed() : 0) + cfg.epochs;
  result.model = std::make_shared<MlpDenoiser>(std::move(net), completed);
  return result;
}

TrainResult train_mlp(std::span<const ConditionedSample> dataset, const NoiseSchedule& sched, int epochs,
                      double learning_rate, std::uint64_t seed) {
  TrainerConfig cfg;
  cfg.epochs = epochs;
  cfg.learning_rate = learning_rate;
  cfg.seed = seed;
  return train_mlp(dataset, sched, cfg);
}

}  // namespace selfeval
