#include "selfeval/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "selfeval/errors.hpp"

namespace selfeval {

namespace {

constexpr std::array<const char*, 6> kTaskNames{"attributeBinding", "color", "count",
                                                "shape", "spatial", "textCorruption"};

constexpr std::array<std::array<double, 3>, kNumColors> kPalette{{
    {0.90, 0.10, 0.10},  // red
    {0.10, 0.80, 0.20},  // green
    {0.15, 0.25, 0.95},  // blue
    {0.95, 0.85, 0.10},  // yellow
}};

constexpr int kGlyph = 3;

bool glyph_pixel(Shape s, int r, int c) {
  switch (s) {
    case Shape::square: return true;
    case Shape::cross: return r == 1 || c == 1;
    case Shape::ell: return c == 0 || r == 2;
  }
  return false;
}

// Top-left corners of each copy inside a quadrant of side q.
std::vector<std::array<int, 2>> slots(int count, int q) {
  const int far = q - 4;
  if (count == 1) {
    if (q < 4) return {};
    return {{q / 2 - 2, q / 2 - 2}};
  }
  if (far < 4) return {};
  switch (count) {
    case 2: return {{0, 0}, {far, far}};
    case 3: return {{0, 0}, {0, far}, {far, far / 2}};
    case 4: return {{0, 0}, {0, far}, {far, 0}, {far, far}};
  }
  return {};
}

std::array<int, 2> quadrant_origin(Position p, int q) {
  switch (p) {
    case Position::top_left: return {0, 0};
    case Position::top_right: return {0, q};
    case Position::bottom_left: return {q, 0};
    case Position::bottom_right: return {q, q};
  }
  return {0, 0};
}

double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

std::vector<std::array<int, 2>> seeded_jitter(const Condition& c, std::uint64_t seed) {
  std::vector<std::array<int, 2>> j;
  for (std::size_t i = 0; i < c.objects().size(); ++i) {
    CounterStream s(seed, Domain::render, static_cast<std::uint32_t>(i));
    j.push_back({static_cast<int>(s.below(2, 0)), static_cast<int>(s.below(2, 1))});
  }
  return j;
}

template <typename T>
T pick(StreamCursor& cur, int n) {
  return static_cast<T>(cur.below(static_cast<std::uint32_t>(n)));
}

std::vector<Condition> distractor_pool(TaskKind task, const Condition& correct) {
  std::vector<Condition> pool;
  const auto& objs = correct.objects();
  auto mutate = [&](auto&& edit, int n) {
    for (int v = 0; v < n; ++v) {
      auto o = objs;
      if (!edit(o[0], v)) continue;
      pool.emplace_back(o, correct.token_order());
    }
  };
  switch (task) {
    case TaskKind::color:
      mutate([&](ObjectSpec& o, int v) { if (static_cast<int>(o.color) == v) return false; o.color = static_cast<Color>(v); return true; }, kNumColors);
      break;
    case TaskKind::shape:
      mutate([&](ObjectSpec& o, int v) { if (static_cast<int>(o.shape) == v) return false; o.shape = static_cast<Shape>(v); return true; }, kNumShapes);
      break;
    case TaskKind::count:
      mutate([&](ObjectSpec& o, int v) { if (o.count == v + kMinCount) return false; o.count = v + kMinCount; return true; }, kNumCounts);
      break;
    case TaskKind::spatial:
      mutate([&](ObjectSpec& o, int v) {
        const auto p = static_cast<Position>(v);
        if (o.position == p) return false;
        for (std::size_t k = 1; k < objs.size(); ++k) if (objs[k].position == p) return false;
        o.position = p;
        return true;
      }, kNumPositions);
      break;
    case TaskKind::attribute_binding:
      if (objs.size() != 2) throw ParameterError("attribute binding needs a two-object condition");
      if (objs[0].color != objs[1].color) pool.push_back(swap_attribute(correct, 0));
      if (objs[0].shape != objs[1].shape) pool.push_back(swap_attribute(correct, 1));
      break;
    case TaskKind::text_corruption: {
      std::vector<int> perm(correct.num_tokens());
      std::iota(perm.begin(), perm.end(), 0);
      while (std::next_permutation(perm.begin(), perm.end())) {
        if (perm != correct.token_order()) pool.push_back(correct.with_order(perm));
      }
      break;
    }
  }
  return pool;
}

}  // namespace

std::string to_string(TaskKind t) { return kTaskNames.at(static_cast<std::size_t>(t)); }

TaskKind task_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kTaskNames.size(); ++i) {
    if (s == kTaskNames[i]) return static_cast<TaskKind>(i);
  }
  throw ParameterError("unknown task '" + s + "'");
}

TaskSpec default_task_spec(TaskKind kind) {
  switch (kind) {
    case TaskKind::attribute_binding: return {kind, 2};
    case TaskKind::color: return {kind, 4};
    case TaskKind::count: return {kind, 4};
    case TaskKind::shape: return {kind, 3};
    case TaskKind::spatial: return {kind, 4};
    case TaskKind::text_corruption: return {kind, 5};
  }
  return {kind, 2};
}

MicroScene render_scene_with_jitter(const Condition& c, std::span<const std::array<int, 2>> jitter,
                                    const ImageConfig& cfg) {
  if (cfg.size < 2 || cfg.size % 2 != 0) throw ParameterError("render: image size must be even and >= 2");
  if (jitter.size() != c.objects().size()) throw ParameterError("render: one jitter per object required");
  const int n = cfg.size;
  const int q = n / 2;
  MicroScene scene;
  scene.condition = c;
  scene.shape = {n, n, ImageConfig::channels};
  scene.pixels.assign(cfg.dim(), as_float(kBackground));

  std::set<Position> used;
  for (std::size_t k = 0; k < c.objects().size(); ++k) {
    const auto& o = c.objects()[k];
    if (!used.insert(o.position).second) throw ParameterError("render: two objects share a quadrant");
    const auto corners = slots(o.count, q);
    if (corners.empty()) {
      throw ParameterError("render: cannot place " + std::to_string(o.count) + " objects in a " + std::to_string(q) +
                           "x" + std::to_string(q) + " quadrant");
    }
    const auto origin = quadrant_origin(o.position, q);
    const auto& rgb = kPalette[static_cast<std::size_t>(o.color)];
    for (const auto& corner : corners) {
      for (int r = 0; r < kGlyph; ++r) {
        for (int col = 0; col < kGlyph; ++col) {
          if (!glyph_pixel(o.shape, r, col)) continue;
          const int y = origin[0] + corner[0] + jitter[k][0] + r;
          const int x = origin[1] + corner[1] + jitter[k][1] + col;
          for (int ch = 0; ch < ImageConfig::channels; ++ch) {
            scene.pixels[(static_cast<std::size_t>(y) * n + x) * ImageConfig::channels + ch] = as_float(rgb[ch]);
          }
        }
      }
    }
  }
  return scene;
}

MicroScene render_scene(const Condition& c, std::uint64_t render_seed, const ImageConfig& cfg) {
  const auto jitter = seeded_jitter(c, render_seed);
  auto scene = render_scene_with_jitter(c, jitter, cfg);
  scene.render_seed = render_seed;
  return scene;
}

Vec to_model_space(const MicroScene& scene) {
  if (!scene.is_image()) return scene.pixels;
  Vec x(scene.pixels.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 2.0 * scene.pixels[i] - 1.0;
  return x;
}

Condition sample_condition(TaskKind task, StreamCursor& cur) {
  if (task == TaskKind::attribute_binding) {
    const int p0 = pick<int>(cur, kNumPositions);
    const int p1 = (p0 + 1 + pick<int>(cur, kNumPositions - 1)) % kNumPositions;
    const int c0 = pick<int>(cur, kNumColors);
    const int c1 = (c0 + 1 + pick<int>(cur, kNumColors - 1)) % kNumColors;
    const auto s0 = pick<Shape>(cur, kNumShapes);
    const auto s1 = pick<Shape>(cur, kNumShapes);
    return Condition({{static_cast<Color>(c0), s0, 1, static_cast<Position>(p0)},
                      {static_cast<Color>(c1), s1, 1, static_cast<Position>(p1)}});
  }
  ObjectSpec o;
  o.color = pick<Color>(cur, kNumColors);
  o.shape = pick<Shape>(cur, kNumShapes);
  o.count = kMinCount + pick<int>(cur, kNumCounts);
  o.position = pick<Position>(cur, kNumPositions);
  return Condition({o});
}

namespace {

ItmExample assemble_example(const TaskSpec& task, const Condition& correct, std::uint64_t seed) {
  if (task.num_candidates < 1) throw ParameterError("task: need at least one candidate");
  auto pool = distractor_pool(task.kind, correct);
  const auto needed = static_cast<std::size_t>(task.num_candidates - 1);
  if (pool.size() < needed) {
    throw ParameterError("task " + to_string(task.kind) + ": vocabulary supplies " + std::to_string(pool.size()) +
                         " distractors, " + std::to_string(needed) + " needed");
  }
  StreamCursor cur(CounterStream(seed, Domain::suite, 1));
  cur.shuffle(std::span(pool));
  ItmExample ex;
  ex.task = task.kind;
  ex.candidates.push_back(correct);
  ex.candidates.insert(ex.candidates.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(needed));
  std::vector<std::size_t> perm(ex.candidates.size());
  std::iota(perm.begin(), perm.end(), 0);
  cur.shuffle(std::span(perm));
  std::vector<Condition> shuffled;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.push_back(ex.candidates[perm[i]]);
    if (perm[i] == 0) ex.correct_index = i;
  }
  ex.candidates = std::move(shuffled);
  return ex;
}

std::string example_id(TaskKind task, std::uint64_t seed, int i) {
  return to_string(task) + "-" + std::to_string(seed) + "-" + std::to_string(i);
}

}  // namespace

ItmExample make_itm_example(const TaskSpec& task, const Condition& correct, std::uint64_t seed,
                            const ImageConfig& cfg) {
  ItmExample ex = assemble_example(task, correct, seed);
  ex.image = render_scene(correct, mix_seed(seed, 0x5ce7e), cfg);
  return ex;
}

std::vector<ItmExample> build_task_suite(const TaskSpec& task, int size, std::uint64_t seed,
                                         const ImageConfig& cfg) {
  if (size < 1) throw ParameterError("suite size must be >= 1");
  std::vector<ItmExample> out;
  out.reserve(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    StreamCursor cur(CounterStream(seed, Domain::suite, static_cast<std::uint32_t>(task.kind) + 16,
                                   static_cast<std::uint32_t>(i)));
    const Condition correct = sample_condition(task.kind, cur);
    auto ex = make_itm_example(task, correct, mix_seed(seed, static_cast<std::uint64_t>(i)), cfg);
    ex.id = example_id(task.kind, seed, i);
    out.push_back(std::move(ex));
  }
  return out;
}

Vec oracle_mean(const Condition& c, double scale) {
  Vec m = c.embedding();
  for (double& v : m) v = as_float(v * scale);
  return m;
}

std::vector<ItmExample> build_oracle_suite(const TaskSpec& task, int size, std::uint64_t seed,
                                           const OracleWorld& world) {
  if (size < 1) throw ParameterError("suite size must be >= 1");
  if (!(world.class_var > 0.0)) throw ParameterError("oracle world: class variance must be positive");
  std::vector<ItmExample> out;
  const double sd = std::sqrt(world.class_var);
  for (int i = 0; i < size; ++i) {
    StreamCursor cur(CounterStream(seed, Domain::suite, static_cast<std::uint32_t>(task.kind) + 32,
                                   static_cast<std::uint32_t>(i)));
    const Condition correct = sample_condition(task.kind, cur);
    const std::uint64_t ex_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    ItmExample ex = assemble_example(task, correct, ex_seed);
    ex.id = "oracle-" + example_id(task.kind, seed, i);
    ex.image.condition = correct;
    ex.image.render_seed = mix_seed(ex_seed, 0x0AC1E);
    ex.image.pixels = oracle_mean(correct, world.scale);
    ex.image.shape = {static_cast<int>(ex.image.pixels.size())};
    CounterStream noise(ex.image.render_seed, Domain::dataset);
    for (std::size_t k = 0; k < ex.image.pixels.size(); ++k) {
      ex.image.pixels[k] = as_float(ex.image.pixels[k] + sd * noise.normal(k));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

GaussianClassModel oracle_class_model(std::span<const ItmExample> examples, const OracleWorld& world) {
  GaussianClassModel gm;
  gm.class_var = world.class_var;
  gm.dim = kEmbeddingDim;
  for (const auto& ex : examples) {
    for (const auto& c : ex.candidates) {
      if (!gm.class_means.contains(c.id())) gm.add(c, oracle_mean(c, world.scale));
    }
  }
  return gm;
}

GaussianClassModel template_class_model(std::span<const Condition> conditions, const ImageConfig& cfg,
                                        double class_var) {
  GaussianClassModel gm;
  gm.class_var = class_var;
  gm.dim = cfg.dim();
  for (const auto& c : conditions) {
    if (gm.class_means.contains(c.id())) continue;
    const std::size_t objects = c.objects().size();
    const std::size_t combos = std::size_t{1} << (2 * objects);
    Vec mean(cfg.dim(), 0.0);
    for (std::size_t m = 0; m < combos; ++m) {
      std::vector<std::array<int, 2>> jitter;
      for (std::size_t k = 0; k < objects; ++k) {
        jitter.push_back({static_cast<int>((m >> (2 * k)) & 1), static_cast<int>((m >> (2 * k + 1)) & 1)});
      }
      const Vec x = to_model_space(render_scene_with_jitter(c, jitter, cfg));
      for (std::size_t i = 0; i < x.size(); ++i) mean[i] += x[i] / static_cast<double>(combos);
    }
    gm.add(c, std::move(mean));
  }
  return gm;
}

Condition swap_attribute(const Condition& c, int which) {
  if (c.objects().size() != 2) throw ParameterError("swap_attribute: needs two objects");
  auto o = c.objects();
  switch (which) {
    case 0: std::swap(o[0].color, o[1].color); break;
    case 1: std::swap(o[0].shape, o[1].shape); break;
    case 2: std::swap(o[0].position, o[1].position); break;
    default: throw ParameterError("swap_attribute: attribute index must be 0, 1 or 2");
  }
  return Condition(o, c.token_order());
}

namespace {

// Two objects that differ in color and shape, plus the swapped partner.
std::pair<Condition, Condition> contrast_conditions(StreamCursor& cur) {
  const int p0 = pick<int>(cur, kNumPositions);
  const int p1 = (p0 + 1 + pick<int>(cur, kNumPositions - 1)) % kNumPositions;
  const int c0 = pick<int>(cur, kNumColors);
  const int c1 = (c0 + 1 + pick<int>(cur, kNumColors - 1)) % kNumColors;
  const int s0 = pick<int>(cur, kNumShapes);
  const int s1 = (s0 + 1 + pick<int>(cur, kNumShapes - 1)) % kNumShapes;
  const Condition a({{static_cast<Color>(c0), static_cast<Shape>(s0), 1, static_cast<Position>(p0)},
                     {static_cast<Color>(c1), static_cast<Shape>(s1), 1, static_cast<Position>(p1)}});
  return {a, swap_attribute(a, pick<int>(cur, 3))};
}

}  // namespace

std::vector<ScenePair> build_winoground_pairs(int size, std::uint64_t seed, const ImageConfig& cfg) {
  if (size < 1) throw ParameterError("pair count must be >= 1");
  std::vector<ScenePair> out;
  for (int i = 0; i < size; ++i) {
    StreamCursor cur(CounterStream(seed, Domain::suite, 64, static_cast<std::uint32_t>(i)));
    auto [a, b] = contrast_conditions(cur);
    const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(i));
    out.push_back({"pair-" + std::to_string(seed) + "-" + std::to_string(i), render_scene(a, mix_seed(s, 1), cfg),
                   render_scene(b, mix_seed(s, 2), cfg)});
  }
  return out;
}

std::vector<WinogroundPair> to_winoground_pairs(std::span<const ScenePair> pairs) {
  std::vector<WinogroundPair> out;
  for (const auto& p : pairs) {
    out.push_back({p.id, to_model_space(p.a), to_model_space(p.b), p.a.condition, p.b.condition, 0, 0});
  }
  return out;
}

ScaleMismatchFixture build_scale_mismatch_fixture(int size, std::uint64_t seed, const OracleWorld& world,
                                                  double factor) {
  if (size < 1) throw ParameterError("pair count must be >= 1");
  if (!(factor > 0.0)) throw ParameterError("scale factor must be positive");
  ScaleMismatchFixture fx;
  fx.base_world.class_var = world.class_var;
  fx.scaled_world.class_var = world.class_var * factor * factor;
  const double sd = std::sqrt(world.class_var);
  for (int i = 0; i < size; ++i) {
    StreamCursor cur(CounterStream(seed, Domain::suite, 65, static_cast<std::uint32_t>(i)));
    auto [a, b] = contrast_conditions(cur);
    for (const auto& c : {a, b}) {
      if (fx.base_world.class_means.contains(c.id())) continue;
      fx.base_world.add(c, oracle_mean(c, world.scale));
      fx.scaled_world.add(c, oracle_mean(c, world.scale * factor));
    }
    CounterStream noise(mix_seed(seed, static_cast<std::uint64_t>(i)), Domain::dataset, 65);
    WinogroundPair p;
    p.id = "scale-" + std::to_string(seed) + "-" + std::to_string(i);
    p.c_a = a;
    p.c_b = b;
    p.x_a = fx.base_world.mean_for(a);
    p.x_b = fx.scaled_world.mean_for(b);
    for (std::size_t k = 0; k < p.x_a.size(); ++k) {
      p.x_a[k] += sd * noise.normal(k);
      p.x_b[k] += factor * sd * noise.normal(p.x_a.size() + k);
    }
    p.world_a = 0;
    p.world_b = 1;
    fx.pairs.push_back(std::move(p));
  }
  return fx;
}

}  // namespace selfeval
