#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <queue>
#include <set>

#include "selfeval/benchmark.hpp"
#include "selfeval/config.hpp"
#include "selfeval/dataset_io.hpp"
#include "selfeval/errors.hpp"
#include "selfeval/evaluation.hpp"
#include "support.hpp"

using namespace selfeval;

namespace {

bool is_background(const MicroScene& s, int y, int x) {
  const int n = s.shape[1];
  for (int ch = 0; ch < 3; ++ch) {
    if (s.pixels[(static_cast<std::size_t>(y) * n + x) * 3 + ch] != static_cast<double>(static_cast<float>(kBackground)))
      return false;
  }
  return true;
}

// 4-connected components of non-background pixels.
int components(const MicroScene& s) {
  const int h = s.shape[0], w = s.shape[1];
  std::vector<char> seen(static_cast<std::size_t>(h * w), 0);
  int n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (seen[y * w + x] || is_background(s, y, x)) continue;
      ++n;
      std::queue<std::pair<int, int>> q;
      q.push({y, x});
      seen[y * w + x] = 1;
      while (!q.empty()) {
        auto [cy, cx] = q.front();
        q.pop();
        const int dy[] = {1, -1, 0, 0}, dx[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int ny = cy + dy[k], nx = cx + dx[k];
          if (ny < 0 || nx < 0 || ny >= h || nx >= w || seen[ny * w + nx] || is_background(s, ny, nx)) continue;
          seen[ny * w + nx] = 1;
          q.push({ny, nx});
        }
      }
    }
  }
  return n;
}

int differing_fields(const ObjectSpec& a, const ObjectSpec& b) {
  return (a.color != b.color) + (a.shape != b.shape) + (a.count != b.count) + (a.position != b.position);
}

}  // namespace

TEST_CASE("rendering is deterministic and in range") {
  const Condition c({{Color::green, Shape::cross, 3, Position::bottom_right}});
  const auto a = render_scene(c, 99);
  const auto b = render_scene(c, 99);
  CHECK(a == b);
  CHECK(a.shape == std::vector<int>{16, 16, 3});
  CHECK(a.pixels.size() == 768);
  for (double v : a.pixels) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(static_cast<double>(static_cast<float>(v)) == v);
  }
  const Vec m = to_model_space(a);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] == doctest::Approx(2 * a.pixels[i] - 1));

  // Seeds only move objects by the jitter; some seed must differ.
  bool moved = false;
  for (std::uint64_t s = 0; s < 16 && !moved; ++s) moved = render_scene(c, s).pixels != a.pixels;
  CHECK(moved);
}

TEST_CASE("rendered counts are separate components for every glyph and quadrant") {
  for (int shape = 0; shape < kNumShapes; ++shape) {
    for (int count = kMinCount; count <= kMaxCount; ++count) {
      for (int pos = 0; pos < kNumPositions; ++pos) {
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
          const Condition c({{Color::blue, static_cast<Shape>(shape), count, static_cast<Position>(pos)}});
          CAPTURE(c.id());
          CHECK(components(render_scene(c, seed)) == count);
        }
      }
    }
  }
}

TEST_CASE("colored pixels match the requested color") {
  const Condition c({{Color::red, Shape::square, 2, Position::top_right}});
  const auto s = render_scene(c, 3);
  int colored = 0;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (is_background(s, y, x)) continue;
      ++colored;
      const std::size_t i = (static_cast<std::size_t>(y) * 16 + x) * 3;
      CHECK(s.pixels[i] > s.pixels[i + 1]);
      CHECK(s.pixels[i] > s.pixels[i + 2]);
      CHECK(x >= 8);
      CHECK(y < 8);
    }
  }
  CHECK(colored == 18);
}

TEST_CASE("impossible placements are rejected") {
  CHECK_THROWS_AS(render_scene(testsupport::cond(Color::red, Shape::square, 2), 0, ImageConfig{8}), ParameterError);
  CHECK_THROWS_AS(render_scene(testsupport::cond(Color::red), 0, ImageConfig{6}), ParameterError);
  CHECK_THROWS_AS(render_scene(testsupport::cond(Color::red), 0, ImageConfig{7}), ParameterError);
  CHECK_NOTHROW(render_scene(testsupport::cond(Color::red), 0, ImageConfig{8}));
  const Condition clash({{Color::red, Shape::square, 1, Position::top_left}, {Color::blue, Shape::ell, 1, Position::top_left}});
  CHECK_THROWS_AS(render_scene(clash, 0), ParameterError);
}

TEST_CASE("chance levels") {
  const std::map<TaskKind, double> expected{{TaskKind::attribute_binding, 50.0}, {TaskKind::color, 25.0},
                                            {TaskKind::count, 25.0},             {TaskKind::shape, 100.0 / 3},
                                            {TaskKind::spatial, 25.0},           {TaskKind::text_corruption, 20.0}};
  for (auto t : kAllTasks) {
    CHECK(100.0 * default_task_spec(t).chance_accuracy() == doctest::Approx(expected.at(t)));
    CHECK(task_from_string(to_string(t)) == t);
  }
  CHECK_THROWS_AS(task_from_string("colour"), ParameterError);
}

TEST_CASE("distractors differ from the correct condition only in the probed attribute") {
  for (auto t : kAllTasks) {
    const auto spec = default_task_spec(t);
    const auto suite = build_task_suite(spec, 60, 17);
    for (const auto& ex : suite) {
      CAPTURE(ex.id);
      REQUIRE(ex.candidates.size() == static_cast<std::size_t>(spec.num_candidates));
      CHECK(ex.image.condition == ex.correct());
      std::set<std::string> ids;
      for (const auto& c : ex.candidates) ids.insert(c.id());
      CHECK(ids.size() == ex.candidates.size());
      for (std::size_t k = 0; k < ex.candidates.size(); ++k) {
        if (k == ex.correct_index) continue;
        const auto& d = ex.candidates[k];
        const auto& a = ex.correct().objects();
        const auto& b = d.objects();
        REQUIRE(a.size() == b.size());
        switch (t) {
          case TaskKind::color:
            CHECK(differing_fields(a[0], b[0]) == 1);
            CHECK(a[0].color != b[0].color);
            break;
          case TaskKind::shape:
            CHECK(differing_fields(a[0], b[0]) == 1);
            CHECK(a[0].shape != b[0].shape);
            break;
          case TaskKind::count:
            CHECK(differing_fields(a[0], b[0]) == 1);
            CHECK(a[0].count != b[0].count);
            break;
          case TaskKind::spatial:
            CHECK(differing_fields(a[0], b[0]) == 1);
            CHECK(a[0].position != b[0].position);
            break;
          case TaskKind::attribute_binding:
            CHECK((d == swap_attribute(ex.correct(), 0) || d == swap_attribute(ex.correct(), 1)));
            break;
          case TaskKind::text_corruption:
            CHECK(a == b);
            CHECK(d.token_order() != ex.correct().token_order());
            CHECK(d.canonical() == ex.correct());
            break;
        }
      }
    }
  }
}

TEST_CASE("binding conditions use two objects with distinct colors and positions") {
  for (std::uint32_t i = 0; i < 200; ++i) {
    StreamCursor cur(CounterStream(5, Domain::test, i));
    const auto c = sample_condition(TaskKind::attribute_binding, cur);
    REQUIRE(c.objects().size() == 2);
    CHECK(c.objects()[0].color != c.objects()[1].color);
    CHECK(c.objects()[0].position != c.objects()[1].position);
  }
}

TEST_CASE("insufficient vocabulary is an error") {
  CHECK_THROWS_AS(make_itm_example({TaskKind::color, 5}, testsupport::cond(Color::red), 1), ParameterError);
  CHECK_THROWS_AS(make_itm_example({TaskKind::shape, 4}, testsupport::cond(Color::red), 1), ParameterError);
  CHECK_THROWS_AS(make_itm_example({TaskKind::attribute_binding, 2}, testsupport::cond(Color::red), 1),
                  ParameterError);
  const Condition same_shape({{Color::red, Shape::ell, 1, Position::top_left}, {Color::blue, Shape::ell, 1, Position::top_right}});
  CHECK_THROWS_AS(make_itm_example({TaskKind::attribute_binding, 3}, same_shape, 1), ParameterError);
  CHECK_NOTHROW(make_itm_example({TaskKind::attribute_binding, 2}, same_shape, 1));
  CHECK_THROWS_AS(build_task_suite(default_task_spec(TaskKind::color), 0, 1), ParameterError);
}

TEST_CASE("correct labels are balanced across candidate slots") {
  for (auto t : kAllTasks) {
    const auto spec = default_task_spec(t);
    const auto suite = build_oracle_suite(spec, 5000, 23, OracleWorld{});
    std::vector<double> freq(static_cast<std::size_t>(spec.num_candidates), 0.0);
    for (const auto& ex : suite) freq[ex.correct_index] += 1;
    const double e = 5000.0 / spec.num_candidates;
    double chi2 = 0;
    for (double f : freq) chi2 += (f - e) * (f - e) / e;
    const boost::math::chi_squared dist(spec.num_candidates - 1);
    CAPTURE(to_string(t));
    CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 0.01);
  }
}

TEST_CASE("a single-example suite survives the dataset format") {
  const auto suite = build_task_suite(default_task_spec(TaskKind::count), 1, 4);
  REQUIRE(suite.size() == 1);
  const DatasetRecord r{suite[0], 4, "abc"};
  CHECK(parse_record(serialize_record(r)) == r);
  const auto dir = testsupport::fresh_dir("bench_roundtrip");
  write_dataset(dir / "one.jsonl", {r});
  CHECK(read_dataset(dir / "one.jsonl") == std::vector<DatasetRecord>{r});
}

TEST_CASE("oracle suites") {
  const OracleWorld w{4.5, 1.0};
  const auto suite = build_oracle_suite(default_task_spec(TaskKind::spatial), 400, 3, w);
  CHECK(suite == build_oracle_suite(default_task_spec(TaskKind::spatial), 400, 3, w));
  double sum_sq = 0;
  std::size_t n = 0;
  for (const auto& ex : suite) {
    CHECK(ex.image.shape == std::vector<int>{static_cast<int>(kEmbeddingDim)});
    CHECK_FALSE(ex.image.is_image());
    const Vec m = oracle_mean(ex.correct(), w.scale);
    for (std::size_t k = 0; k < m.size(); ++k) {
      sum_sq += (ex.image.pixels[k] - m[k]) * (ex.image.pixels[k] - m[k]);
      ++n;
    }
  }
  CHECK(sum_sq / static_cast<double>(n) == doctest::Approx(1.0).epsilon(0.01));

  const auto gm = oracle_class_model(suite, w);
  CHECK(gm.dim == kEmbeddingDim);
  CHECK(gm.mean_for(suite[0].candidates[1]) == oracle_mean(suite[0].candidates[1], w.scale));
  CHECK_THROWS_AS(build_oracle_suite(default_task_spec(TaskKind::color), 5, 1, OracleWorld{1.0, 0.0}), ParameterError);
}

TEST_CASE("contrast pairs") {
  const auto pairs = build_winoground_pairs(200, 11);
  CHECK(pairs == build_winoground_pairs(200, 11));
  for (const auto& p : pairs) {
    const auto& ca = p.a.condition;
    const auto& cb = p.b.condition;
    CHECK(ca != cb);
    CHECK(p.a.pixels != p.b.pixels);
    // Exactly one attribute swapped, and swapping it again restores the original.
    int matches = 0;
    for (int k = 0; k < 3; ++k) {
      if (swap_attribute(ca, k) == cb) {
        ++matches;
        CHECK(swap_attribute(cb, k) == ca);
      }
    }
    CHECK(matches == 1);
    // Same multiset of colors and shapes on both sides.
    std::multiset<int> col_a, col_b;
    for (const auto& o : ca.objects()) col_a.insert(static_cast<int>(o.color));
    for (const auto& o : cb.objects()) col_b.insert(static_cast<int>(o.color));
    CHECK(col_a == col_b);
  }
  CHECK_THROWS_AS(swap_attribute(testsupport::cond(Color::red), 0), ParameterError);

  const auto wp = to_winoground_pairs(pairs);
  CHECK(wp.size() == pairs.size());
  CHECK(wp[0].x_a == to_model_space(pairs[0].a));
}

TEST_CASE("template oracle separates contrast pairs") {
  const auto pairs = build_winoground_pairs(200, 7);
  RunConfig cfg;
  const auto sched = cfg.schedule.build();
  const auto model = template_denoiser(pairs, cfg.benchmark.image(), cfg.benchmark.template_var);
  const auto r = evaluate_pairs(pairs, *model, sched, cfg, ScorerKind::selfeval, 1);
  CHECK(r.scores.pairs == 200);
  CHECK(r.scores.image_score >= 0.9);
  CHECK(r.scores.text_score >= 0.9);
  const auto e = evaluate_pairs(pairs, *model, sched, cfg, ScorerKind::elbo, 1);
  CHECK(e.scores.text_score >= 0.9);
}

TEST_CASE("scale-mismatch fixture") {
  const auto fx = build_scale_mismatch_fixture(50, 9, kScaleFixtureWorld, 3.0);
  REQUIRE(fx.pairs.size() == 50);
  CHECK(fx.scaled_world.class_var == doctest::Approx(9 * kScaleFixtureWorld.class_var));
  double norm_a = 0, norm_b = 0;
  for (const auto& p : fx.pairs) {
    CHECK(p.c_a != p.c_b);
    CHECK(fx.scaled_world.mean_for(p.c_a) == oracle_mean(p.c_a, 3 * kScaleFixtureWorld.scale));
    for (double v : p.x_a) norm_a += v * v;
    for (double v : p.x_b) norm_b += v * v;
  }
  CHECK(norm_b / norm_a == doctest::Approx(9.0).epsilon(0.05));
  CHECK_THROWS_AS(build_scale_mismatch_fixture(5, 1, kScaleFixtureWorld, 0.0), ParameterError);
}
