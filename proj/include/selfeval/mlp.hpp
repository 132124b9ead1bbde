#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "selfeval/condition.hpp"
#include "selfeval/denoiser.hpp"
#include "selfeval/schedule.hpp"

namespace selfeval {

// Row/column blocking of the dense kernels. Buffers are padded so every
// row and every output column runs through the same instruction sequence;
// a row's result is therefore independent of what else is in the batch.
inline constexpr std::size_t kRowBlock = 8;
inline constexpr std::size_t kColBlock = 16;

inline std::size_t round_up(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }

template <typename Scalar>
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t out_padded = 0;
  std::vector<Scalar> weights;  // in x out_padded, input-major
  std::vector<Scalar> bias;     // out_padded

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim);

  Scalar& weight(std::size_t i, std::size_t o) { return weights[i * out_padded + o]; }
  Scalar weight(std::size_t i, std::size_t o) const { return weights[i * out_padded + o]; }
  std::size_t parameter_count() const { return in * out + out; }
};

struct MlpShape {
  std::size_t data_dim = 0;
  std::size_t cond_dim = kEmbeddingDim;
  std::size_t time_features = 32;
  std::vector<std::size_t> hidden{128, 128};

  std::size_t input_dim() const { return data_dim + time_features + cond_dim; }
  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

// Sinusoidal features of a timestep on a 0..1000 clock; step t of a T-step
// schedule sits at 1000 t / T, so one network serves schedules of any length.
void time_features(double clock, std::span<double> out);
double diffusion_clock(int t, int steps);

// eps_hat = skip x_t + out net(...). The net output is a clean-image
// estimate: skip = 1/sqrt(1-abar_t), out = -sqrt(abar_t)/sqrt(1-abar_t).
// A narrow network cannot carry x_t through to a 768-wide output, so the
// identity part lives outside it.
struct EpsilonParam {
  double skip = 0.0;
  double out = 1.0;
};
EpsilonParam epsilon_param(const NoiseSchedule& sched, int t);

// epsilon-prediction network: [x_t, time features, condition embedding]
// -> hidden (SiLU) ... -> data_dim. Scalar is float for deployed models and
// double for gradient checks.
template <typename Scalar>
class MlpNet {
 public:
  // Per-call scratch. Sized lazily; reuse across calls avoids allocation.
  struct Workspace {
    std::size_t rows = 0;
    std::size_t padded_rows = 0;
    std::vector<Scalar> input;                     // padded_rows x input_dim
    std::vector<std::vector<Scalar>> pre;          // per layer, pre-activation
    std::vector<std::vector<Scalar>> post;         // per hidden layer, activation
    std::vector<std::vector<Scalar>> grad_buffer;  // backward scratch
    std::vector<Scalar> shared;                    // first-layer (x_t, t) part
    std::vector<Scalar> scratch;
  };

  MlpNet() = default;
  MlpNet(MlpShape shape, std::uint64_t init_seed);

  const MlpShape& shape() const { return shape_; }
  std::vector<DenseLayer<Scalar>>& layers() { return layers_; }
  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  // Prepares ws.input for `rows` rows; the caller fills row r via input_row.
  void begin(Workspace& ws, std::size_t rows) const;
  std::span<Scalar> input_row(Workspace& ws, std::size_t r) const;

  // Runs the network on ws.input; returns rows x out_padded predictions.
  // The first layer is evaluated as (W_x x + W_t tau(t) + b) + W_c e(c), in
  // that association, on every path below.
  const std::vector<Scalar>& forward(Workspace& ws) const;

  // Condition-independent first-layer part for the rows of ws.input (only
  // the x_t and time columns are read). Reused across candidate conditions.
  void forward_shared(Workspace& ws) const;
  // W_c e(c), length out_padded of the first layer.
  std::vector<Scalar> condition_part(std::span<const double> embedding) const;
  // Finishes a forward pass from forward_shared's result for one condition.
  const std::vector<Scalar>& forward_from_shared(Workspace& ws, std::span<const Scalar> cond_part) const;
  std::size_t output_stride() const { return layers_.back().out_padded; }

  // Accumulates parameter gradients for d(loss)/d(output) given in
  // grad_out (rows x output_stride). forward must have run on ws.
  void backward(Workspace& ws, std::span<const Scalar> grad_out, std::vector<DenseLayer<Scalar>>& grads) const;

  std::vector<DenseLayer<Scalar>> zero_like() const;

  // Flat parameter view in serialization order (weights then bias, per layer).
  std::vector<Scalar> flatten() const;
  void unflatten(std::span<const Scalar> flat);

  template <typename Other>
  MlpNet<Other> cast() const;

 private:
  template <typename>
  friend class MlpNet;

  void forward_tail(Workspace& ws) const;

  MlpShape shape_;
  std::vector<DenseLayer<Scalar>> layers_;
};

struct ConditionedSample {
  std::uint64_t key = 0;  // unique, fixes the canonical order used for training
  Vec x0;
  Condition condition;
};

struct TrainerConfig {
  int epochs = 100;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  double clip_norm = 1.0;  // 0 disables gradient-norm clipping
  bool cosine_decay = true;  // lr follows a half cosine to 0 over this run's batches
  std::uint64_t seed = 0;
  MlpShape shape;          // data_dim is filled from the dataset
  int start_epoch = 0;     // offsets every per-epoch stream (added to a resumed model's epoch count)
};

struct TrainingLog {
  double initial_mse = 0.0;  // probe-set eps-MSE before the first update
  double final_mse = 0.0;    // same probe set after the last update
  std::vector<double> epoch_mse;
};

// Learned denoiser. Sigma_theta is fixed to beta_t.
class MlpDenoiser final : public Denoiser {
 public:
  explicit MlpDenoiser(MlpNet<float> net, int epochs_completed = 0);

  std::size_t dim() const override { return net_.shape().data_dim; }
  void predict(std::span<const double> latents, std::span<const int> steps, const Condition& c,
               const NoiseSchedule& sched, ReverseBatch& out) const override;
  void predict_candidates(std::span<const double> latents, std::span<const int> steps,
                          std::span<const Condition> conditions, const NoiseSchedule& sched,
                          std::span<ReverseBatch> out) const override;

  const MlpNet<float>& net() const { return net_; }
  int epochs_completed() const { return epochs_completed_; }

 private:
  MlpNet<float> net_;
  int epochs_completed_ = 0;
};

struct TrainResult {
  std::shared_ptr<MlpDenoiser> model;
  TrainingLog log;
};

using EpochCallback = std::function<void(int epoch, double mse)>;

// Minibatch SGD with momentum on the simplified epsilon-MSE objective.
// Throws NumericalError when the loss becomes non-finite.
TrainResult train_mlp(std::span<const ConditionedSample> dataset, const NoiseSchedule& sched,
                      const TrainerConfig& cfg, const MlpDenoiser* resume = nullptr,
                      const EpochCallback& on_epoch = {});

TrainResult train_mlp(std::span<const ConditionedSample> dataset, const NoiseSchedule& sched, int epochs,
                      double learning_rate, std::uint64_t seed);

// Mean over rows of ||eps_hat - eps||^2 / dim, the training objective, for
// explicit (x0, condition, t, eps) tuples. Used by the trainer's probe set
// and by gradient checks.
template <typename Scalar>
double epsilon_mse(const MlpNet<Scalar>& net, std::span<const ConditionedSample* const> samples,
                   std::span<const int> steps, std::span<const double> noise, const NoiseSchedule& sched,
                   std::vector<DenseLayer<Scalar>>* grads = nullptr);

}  // namespace selfeval
