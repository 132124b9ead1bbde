#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>
#include <random>

#include "selfeval/errors.hpp"
#include "selfeval/rng.hpp"
#include "selfeval/schedule.hpp"
#include "support.hpp"

using namespace selfeval;

TEST_CASE("philox known-answer vectors") {
  using C = Philox4x32::Counter;
  using K = Philox4x32::Key;
  CHECK(Philox4x32::generate(C{0, 0, 0, 0}, K{0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::generate(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}) ==
        C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::generate(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}) ==
        C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("counter streams are addressable and well distributed") {
  CounterStream s(42, Domain::test, 3, 4);
  CHECK(s.normal(17) == CounterStream(42, Domain::test, 3, 4).normal(17));
  CHECK(s.normal(17) != CounterStream(42, Domain::test, 3, 5).normal(17));
  CHECK(s.normal(17) != CounterStream(42, Domain::forward_noise, 3, 4).normal(17));

  Vec a(1001), b(1001);
  s.fill_normal(a);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = s.normal(i);
  CHECK(a == b);

  const int n = 200000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal(static_cast<std::uint64_t>(i));
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) < 4.0 * std::sqrt(2.0 / n));

  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform(static_cast<std::uint64_t>(i));
    REQUIRE(u > 0.0);
    REQUIRE(u <= 1.0);
    REQUIRE(s.below(7, static_cast<std::uint64_t>(i)) < 7u);
  }
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
}

TEST_CASE("build_schedule examples") {
  SUBCASE("single step") {
    const auto s = build_schedule(ScheduleKind::linear, 1, 0.5, 0.5);
    CHECK(s.betas() == Vec{0.5});
    CHECK(s.alpha_bars()[0] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("two steps") {
    const auto s = build_schedule(ScheduleKind::linear, 2, 0.1, 0.3);
    REQUIRE(s.steps() == 2);
    CHECK(s.beta(1) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(s.beta(2) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bar(2) == doctest::Approx(0.63).epsilon(1e-15));
  }
  SUBCASE("standard 100-step linear schedule against a direct product") {
    const auto s = build_schedule(ScheduleKind::linear, 100, 1e-4, 0.02);
    long double prod = 1.0L;
    for (int t = 0; t < 100; ++t) prod *= 1.0L - (1e-4L + (0.02L - 1e-4L) * t / 99.0L);
    CHECK(s.alpha_bar(100) == doctest::Approx(static_cast<double>(prod)).epsilon(1e-12));
    CHECK(s.alpha_bar(100) < 0.40);
  }
  SUBCASE("default schedule ends near pure noise") {
    const auto s = default_schedule(100);
    CHECK(s.beta(1) == doctest::Approx(1e-3));
    CHECK(s.beta(100) == doctest::Approx(0.2));
    CHECK(s.alpha_bar(100) < 0.05);
    CHECK(s.terminal_near_noise());
    CHECK(default_schedule(1000).beta(1000) == doctest::Approx(0.02));
  }
  SUBCASE("invalid ranges") {
    CHECK_THROWS_AS(build_schedule(ScheduleKind::linear, 0, 0.1, 0.2), ParameterError);
    CHECK_THROWS_AS(build_schedule(ScheduleKind::linear, 10, 0.0, 0.2), ParameterError);
    CHECK_THROWS_AS(build_schedule(ScheduleKind::linear, 10, 0.3, 0.2), ParameterError);
    CHECK_THROWS_AS(build_schedule(ScheduleKind::linear, 10, 0.1, 1.0), ParameterError);
    CHECK_THROWS_AS(build_schedule(ScheduleKind::cosine, 10, -0.1, 0.2), ParameterError);
  }
}

TEST_CASE("alpha bars decrease for every schedule the builder emits") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(1e-6, 0.999);
  std::uniform_int_distribution<int> steps(1, 400);
  int built = 0;
  for (int trial = 0; trial < 500; ++trial) {
    double lo = u(rng), hi = u(rng);
    if (lo > hi) std::swap(lo, hi);
    const auto kind = trial % 2 ? ScheduleKind::cosine : ScheduleKind::linear;
    std::optional<NoiseSchedule> made;
    try {
      made = build_schedule(kind, steps(rng), lo, hi);
    } catch (const ParameterError&) {
      continue;  // alpha-bar would underflow; the builder refuses
    }
    ++built;
    const auto& s = *made;
    REQUIRE(s.betas().size() == s.alpha_bars().size());
    for (int t = 1; t <= s.steps(); ++t) {
      REQUIRE(s.beta(t) > 0.0);
      REQUIRE(s.beta(t) < 1.0);
      if (t > 1) REQUIRE(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
  }
  CHECK(built > 250);
  CHECK_THROWS_AS(build_schedule(ScheduleKind::linear, 2000, 0.9, 0.95), ParameterError);
}

TEST_CASE("schedule json round trip") {
  const auto s = build_schedule(ScheduleKind::cosine, 37, 1e-4, 0.5);
  CHECK(NoiseSchedule::from_json(nlohmann::json::parse(s.to_json().dump())) == s);
  auto j = s.to_json();
  j["betas"][3] = 0.25;
  CHECK_THROWS_AS(NoiseSchedule::from_json(j), DataError);
}

TEST_CASE("gaussian_log_pdf examples") {
  CHECK(gaussian_log_pdf(Vec{0}, {Vec{0}, Vec{1}}) == doctest::Approx(-0.9189385).epsilon(1e-7));
  CHECK(gaussian_log_pdf(Vec{0, 0}, {Vec{0, 0}, Vec{1}}) == doctest::Approx(-1.8378771).epsilon(1e-7));
  // -1/2 (ln 2pi + ln 4 + 1/4)
  CHECK(gaussian_log_pdf(Vec{1}, {Vec{0}, Vec{4}}) == doctest::Approx(-1.7370857).epsilon(1e-7));
  CHECK_THROWS_AS(gaussian_log_pdf(Vec{1, 2}, {Vec{0}, Vec{1}}), ParameterError);
  CHECK_THROWS_AS(gaussian_log_pdf(Vec{1}, {Vec{0}, Vec{0}}), ParameterError);
  CHECK_THROWS_AS(gaussian_log_pdf(Vec{1}, {Vec{0}, Vec{-2}}), ParameterError);
  CHECK_THROWS_AS(gaussian_log_pdf(Vec{1, 2, 3}, {Vec{0, 0, 0}, Vec{1, 1}}), ParameterError);
}

TEST_CASE("gaussian_log_pdf matches a long-double oracle") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dims(1, 64);
  std::uniform_real_distribution<double> sd(0.05, 5.0), z(-10.0, 10.0), mu(-20.0, 20.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const int d = dims(rng);
    const bool diagonal = trial % 2 == 0;
    Vec x(d), m(d), var(diagonal ? d : 1);
    for (auto& v : var) v = std::pow(sd(rng), 2);
    for (int i = 0; i < d; ++i) {
      m[i] = mu(rng);
      x[i] = m[i] + z(rng) * std::sqrt(var[diagonal ? i : 0]);
    }
    long double acc = 0.0L;
    const long double ln2pi = std::log(2.0L * 3.14159265358979323846264338327950288L);
    for (int i = 0; i < d; ++i) {
      const long double v = var[diagonal ? i : 0];
      const long double diff = static_cast<long double>(x[i]) - m[i];
      acc += ln2pi + std::log(v) + diff * diff / v;
    }
    const double oracle = static_cast<double>(-0.5L * acc);
    REQUIRE(std::abs(gaussian_log_pdf(x, {m, var}) - oracle) < 1e-9);
    if (!diagonal) REQUIRE(std::abs(isotropic_log_pdf(x, m, var[0]) - oracle) < 1e-9);
  }
}

TEST_CASE("q_sample examples") {
  const auto quarter = build_schedule(ScheduleKind::linear, 1, 0.75, 0.75);
  CHECK(q_sample(Vec{2}, 1, Vec{1}, quarter)[0] == doctest::Approx(1.8660254).epsilon(1e-7));

  const auto almost_clean = build_schedule(ScheduleKind::linear, 1, 1e-14, 1e-14);
  const auto c = q_sample(Vec{3, -1}, 1, Vec{0.7, 5}, almost_clean);
  CHECK(c[0] == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(c[1] == doctest::Approx(-1.0).epsilon(1e-6));

  const auto almost_noise = build_schedule(ScheduleKind::linear, 1, 1 - 1e-12, 1 - 1e-12);
  const auto n = q_sample(Vec{3, -1}, 1, Vec{0.7, 5}, almost_noise);
  CHECK(n[0] == doctest::Approx(0.7).epsilon(1e-5));
  CHECK(n[1] == doctest::Approx(5.0).epsilon(1e-5));

  CHECK_THROWS_AS(q_sample(Vec{1}, 0, Vec{1}, quarter), ParameterError);
  CHECK_THROWS_AS(q_sample(Vec{1}, 2, Vec{1}, quarter), ParameterError);
  CHECK_THROWS_AS(q_sample(Vec{1, 2}, 1, Vec{1}, quarter), ParameterError);
}

TEST_CASE("q_sample marginal moments") {
  const auto s = default_schedule(100);
  const Vec x0{1.5, -2.0, 0.3};
  const int n = 20000;
  for (int t : {1, 10, 40, 100}) {
    Vec sum(3, 0.0), sq(3, 0.0);
    for (int k = 0; k < n; ++k) {
      Vec eps(3);
      CounterStream(5, Domain::test, static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(k)).fill_normal(eps);
      const auto x = q_sample(x0, t, eps, s);
      for (int i = 0; i < 3; ++i) {
        sum[i] += x[i];
        sq[i] += x[i] * x[i];
      }
    }
    const double var_true = 1 - s.alpha_bar(t);
    for (int i = 0; i < 3; ++i) {
      const double mean = sum[i] / n;
      const double var = sq[i] / n - mean * mean;
      CHECK(std::abs(mean - std::sqrt(s.alpha_bar(t)) * x0[i]) < 3 * std::sqrt(var_true / n));
      CHECK(std::abs(var - var_true) < 3 * var_true * std::sqrt(2.0 / (n - 1)));
    }
  }
}

TEST_CASE("forward_trajectory determinism and structure") {
  const auto s = default_schedule(50);
  const Vec x0{0.2, -0.4, 1.0, 0.0};
  const auto a = forward_trajectory(x0, s, 99, 2);
  const auto b = forward_trajectory(x0, s, 99, 2);
  CHECK(a.latents == b.latents);
  CHECK(a.noises == b.noises);
  CHECK(a.latents.size() == 50 * x0.size());
  CHECK(forward_trajectory(x0, s, 99, 3).latents != a.latents);
  CHECK(forward_trajectory(x0, s, 100, 2).latents != a.latents);

  // Step t noise comes from its own (seed, trial, t) stream.
  Vec eps(x0.size());
  CounterStream(99, Domain::forward_noise, 2, 7).fill_normal(eps);
  const auto n7 = a.noise(7);
  CHECK(Vec(n7.begin(), n7.end()) == eps);

  const auto one = build_schedule(ScheduleKind::linear, 1, 0.3, 0.3);
  const auto t1 = forward_trajectory(x0, one, 5);
  const auto expect = q_sample(x0, 1, t1.noise(1), one);
  const auto got = t1.latent(1);
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-15));
}

TEST_CASE("forward_trajectory terminal moments from x0 = 0") {
  const auto s = default_schedule(100);
  const int n = 10000;
  double sum = 0, sq = 0;
  for (int seed = 0; seed < n; ++seed) {
    const auto tr = forward_trajectory(Vec{0.0}, s, static_cast<std::uint64_t>(seed));
    const double x = tr.latent(100)[0];
    sum += x;
    sq += x * x;
  }
  const double var_true = 1 - s.alpha_bar(100);
  const double mean = sum / n;
  CHECK(std::abs(mean) < 3 * std::sqrt(var_true / n));
  CHECK(std::abs((sq / n - mean * mean) / var_true - 1.0) < 0.05);
}

TEST_CASE("chain marginals match the closed form") {
  const auto s = default_schedule(60);
  const Vec x0{2.0};
  const int n = 20000;
  for (int t : {1, 5, 20, 60}) {
    double sum = 0, sq = 0;
    for (int seed = 0; seed < n; ++seed) {
      const double x = forward_trajectory(x0, s, static_cast<std::uint64_t>(seed)).latent(t)[0];
      sum += x;
      sq += x * x;
    }
    const double var_true = 1 - s.alpha_bar(t);
    const double mean = sum / n;
    CHECK(std::abs(mean - std::sqrt(s.alpha_bar(t)) * 2.0) < 3 * std::sqrt(var_true / n));
    CHECK(std::abs(sq / n - mean * mean - var_true) < 3 * var_true * std::sqrt(2.0 / (n - 1)));
  }
}
