#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "selfeval/condition.hpp"
#include "selfeval/denoiser.hpp"
#include "selfeval/estimator.hpp"
#include "selfeval/rng.hpp"

namespace selfeval {

enum class TaskKind { attribute_binding, color, count, shape, spatial, text_corruption };

inline constexpr std::array<TaskKind, 6> kAllTasks{TaskKind::attribute_binding, TaskKind::color,
                                                   TaskKind::count,            TaskKind::shape,
                                                   TaskKind::spatial,          TaskKind::text_corruption};

std::string to_string(TaskKind t);
TaskKind task_from_string(const std::string& s);

struct TaskSpec {
  TaskKind kind = TaskKind::color;
  int num_candidates = 4;

  double chance_accuracy() const { return 1.0 / num_candidates; }
};

// Candidate counts that give chance levels of 50/25/25/33/25/20 percent.
TaskSpec default_task_spec(TaskKind kind);

struct ImageConfig {
  int size = 16;  // square images, RGB
  static constexpr int channels = 3;

  std::size_t dim() const { return static_cast<std::size_t>(size) * size * channels; }
};

// A benchmark input. Rendered scenes have shape {H, W, 3} with pixels in
// [0, 1]; Gaussian-oracle samples have shape {D} and hold x0 directly. All
// values are float32-representable so dataset files round-trip exactly.
struct MicroScene {
  Condition condition;
  std::vector<int> shape;
  Vec pixels;
  std::uint64_t render_seed = 0;

  bool is_image() const { return shape.size() == 3; }
  friend bool operator==(const MicroScene&, const MicroScene&) = default;
};

inline constexpr double kBackground = 0.5;

// Draws `count` copies of each object's glyph inside its quadrant. Placement
// jitter (0 or 1 pixel per axis, per object) is the only seed dependence.
// Throws ParameterError when the objects cannot be placed without touching.
MicroScene render_scene(const Condition& c, std::uint64_t render_seed, const ImageConfig& cfg = {});

// Renders with explicit per-object (dy, dx) jitters in {0, 1}.
MicroScene render_scene_with_jitter(const Condition& c, std::span<const std::array<int, 2>> jitter,
                                    const ImageConfig& cfg = {});

// Input to the denoiser: 2p - 1 for images, identity for oracle vectors.
Vec to_model_space(const MicroScene& scene);

struct ItmExample {
  std::string id;
  TaskKind task = TaskKind::color;
  MicroScene image;
  std::vector<Condition> candidates;
  std::size_t correct_index = 0;

  const Condition& correct() const { return candidates.at(correct_index); }
  friend bool operator==(const ItmExample&, const ItmExample&) = default;
};

// Random condition of the form the task asks about.
Condition sample_condition(TaskKind task, StreamCursor& cursor);

// Correct condition plus task-specific distractors, shuffled. Renders the
// correct condition. Throws ParameterError when the vocabulary cannot supply
// enough distinct distractors.
ItmExample make_itm_example(const TaskSpec& task, const Condition& correct, std::uint64_t seed,
                            const ImageConfig& cfg = {});

std::vector<ItmExample> build_task_suite(const TaskSpec& task, int size, std::uint64_t seed,
                                         const ImageConfig& cfg = {});

// ---- Gaussian-oracle worlds -------------------------------------------------

// x0 | c ~ N(scale * embedding(c), class_var I) in kEmbeddingDim dimensions.
struct OracleWorld {
  double scale = 4.5;
  double class_var = 1.0;
};

Vec oracle_mean(const Condition& c, double scale);

std::vector<ItmExample> build_oracle_suite(const TaskSpec& task, int size, std::uint64_t seed,
                                           const OracleWorld& world);

// Class means for every condition appearing in the examples.
GaussianClassModel oracle_class_model(std::span<const ItmExample> examples, const OracleWorld& world);

// Class means are jitter-averaged renders (model space) of each condition.
GaussianClassModel template_class_model(std::span<const Condition> conditions, const ImageConfig& cfg,
                                        double class_var);

// ---- paired contrast sets -----------------------------------------------------

struct ScenePair {
  std::string id;
  MicroScene a;
  MicroScene b;
  friend bool operator==(const ScenePair&, const ScenePair&) = default;
};

// Two-object conditions whose only difference is one attribute (color,
// shape or position) swapped between the objects.
Condition swap_attribute(const Condition& c, int which);
std::vector<ScenePair> build_winoground_pairs(int size, std::uint64_t seed, const ImageConfig& cfg = {});
std::vector<WinogroundPair> to_winoground_pairs(std::span<const ScenePair> pairs);

// Image a comes from a world with means scale*e(c) and variance s^2; image b
// from the same world magnified by `factor` (means and standard deviation).
struct ScaleMismatchFixture {
  std::vector<WinogroundPair> pairs;
  GaussianClassModel base_world;
  GaussianClassModel scaled_world;
};

ScaleMismatchFixture build_scale_mismatch_fixture(int size, std::uint64_t seed, const OracleWorld& world,
                                                  double factor = 3.0);

}  // namespace selfeval
