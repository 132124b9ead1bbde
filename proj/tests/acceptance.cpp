// One PASS/FAIL line per acceptance criterion. Exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "selfeval/benchmark.hpp"
#include "selfeval/config.hpp"
#include "selfeval/errors.hpp"
#include "selfeval/evaluation.hpp"
#include "selfeval/metrics.hpp"
#include "selfeval/mlp.hpp"
#include "selfeval/rng.hpp"

using namespace selfeval;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double normal_logpdf(double x, double mean, double var) {
  return -0.5 * (std::log(2 * M_PI) + std::log(var) + (x - mean) * (x - mean) / var);
}

class RuleDenoiser final : public Denoiser {
 public:
  explicit RuleDenoiser(std::function<void(double x, int t, double& mean, double& var)> f) : f_(std::move(f)) {}
  std::size_t dim() const override { return 1; }
  void predict(std::span<const double> latents, std::span<const int> steps, const Condition&, const NoiseSchedule&,
               ReverseBatch& out) const override {
    out.resize(steps.size(), 1);
    for (std::size_t r = 0; r < steps.size(); ++r) {
      f_(latents[r], steps[r], out.mean[r], out.variance[r]);
      out.epsilon[r] = 0.0;
    }
  }

 private:
  std::function<void(double, int, double&, double&)> f_;
};

Condition color_cond(Color c) { return Condition({{c, Shape::square, 1, Position::top_left}}); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------------------

void term_oracle() {
  const auto t0 = Clock::now();
  const auto s = build_schedule(ScheduleKind::linear, 3, 0.1, 0.3);
  const RuleDenoiser den([](double x, int t, double& mean, double& var) {
    mean = 0.8 * x + 0.05 * t;
    var = 0.3 + 0.1 * t;
  });
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const double x0 = -1.0 + 0.04 * static_cast<double>(seed);
    EstimatorConfig cfg;
    cfg.trials = 1;
    cfg.steps = 3;
    cfg.seed = seed;
    const Vec e = trajectory_noise(1, 3, seed, 0);
    const double x1 = std::sqrt(0.9) * x0 + std::sqrt(0.1) * e[0];
    const double x2 = std::sqrt(0.8) * x1 + std::sqrt(0.2) * e[1];
    const double x3 = std::sqrt(0.7) * x2 + std::sqrt(0.3) * e[2];
    const double oracle = normal_logpdf(x3, 0, 1) + normal_logpdf(x2, 0.8 * x3 + 0.15, 0.6) +
                          normal_logpdf(x1, 0.8 * x2 + 0.10, 0.5) + normal_logpdf(x0, 0.8 * x1 + 0.05, 0.4);
    const double got = estimate_log_likelihood(Vec{x0}, color_cond(Color::red), den, s, cfg).log_likelihood;
    worst = std::max(worst, std::abs(got - oracle));
  }
  const double secs = seconds_since(t0);
  report("term-by-term oracle", worst <= 1e-9 && secs < 1.0,
         fmt("max |error| %.3g over 50 seeds, %.3f s", worst, secs));
}

void bayes_agreement() {
  const auto t0 = Clock::now();
  const auto s = default_schedule(50);
  const std::vector<Condition> cands{color_cond(Color::red), color_cond(Color::green), color_cond(Color::blue),
                                     color_cond(Color::yellow)};
  const std::vector<Vec> means{{0, 0}, {6, 0}, {0, 6}, {6, 6}};
  GaussianClassModel gm;
  gm.dim = 2;
  gm.class_var = 1.0;
  for (std::size_t i = 0; i < 4; ++i) gm.add(cands[i], means[i]);
  const AnalyticDenoiser den(gm);
  EstimatorConfig cfg;
  cfg.trials = 10;
  cfg.steps = 50;
  cfg.aggregation = Aggregation::log_sum_exp;
  int agree = 0;
  for (int i = 0; i < 1000; ++i) {
    CounterStream z(2024, Domain::test, static_cast<std::uint32_t>(i));
    const auto& m = means[static_cast<std::size_t>(i % 4)];
    const Vec x{m[0] + z.normal(0), m[1] + z.normal(1)};
    std::size_t bayes = 0;
    double best = -INFINITY;
    for (std::size_t k = 0; k < 4; ++k) {
      const double l = normal_logpdf(x[0], means[k][0], 1) + normal_logpdf(x[1], means[k][1], 1);
      if (l > best) {
        best = l;
        bayes = k;
      }
    }
    cfg.seed = static_cast<std::uint64_t>(i);
    agree += classify(x, cands, den, s, cfg).argmax == bayes;
  }
  const double secs = seconds_since(t0);
  report("Bayes agreement", agree >= 980 && secs < 120,
         fmt("%.0f/1000 decisions match exact Bayes, %.1f s", agree, secs));
}

void chance_calibration(std::size_t workers) {
  RunConfig cfg;
  const auto records = build_oracle_records(cfg);
  auto inner = oracle_denoiser(records, cfg.benchmark.oracle);
  const ConditionIgnoringDenoiser blind(inner, records.front().example.correct());
  EvalOptions opts;
  opts.keep_estimates = false;
  const auto ev = evaluate_suite(records, blind, cfg.schedule.build(), cfg, opts, workers);
  bool ok = ev.tasks.size() == 6;
  std::string detail;
  for (const auto& t : ev.tasks) {
    ok = ok && std::abs(t.delta_pct) <= 3.0;
    detail += t.task + " " + format_pct(t.accuracy_mean_pct) + " (chance " + format_pct(t.chance_pct) + ") ";
  }
  report("chance calibration", ok, detail + "over " + std::to_string(records.size() / 6) + " examples per task");
}

void end_to_end(std::size_t workers, JensenGapStats& gap_out) {
  const auto t0 = Clock::now();
  RunConfig cfg;
  cfg.trainer.seed = mix_seed(cfg.master_seed, 0x7EA1);
  const auto sched = cfg.schedule.build();
  const auto train = build_training_records(cfg);
  std::vector<ConditionedSample> samples;
  for (const auto& r : train) samples.push_back(r.sample);
  const auto trained = train_mlp(samples, sched, cfg.trainer);
  const double train_secs = seconds_since(t0);
  const auto records = build_rendered_records(cfg);
  EvalOptions opts;
  opts.keep_estimates = false;
  const auto ev = evaluate_suite(records, *trained.model, sched, cfg, opts, workers);
  gap_out = ev.gap;
  const double secs = seconds_since(t0);
  int above = 0;
  std::string detail;
  for (const auto& t : ev.tasks) {
    above += t.delta_pct >= 15.0;
    detail += t.task + " " + (t.delta_pct >= 0 ? "+" : "") + format_pct(t.delta_pct) + " ";
  }
  report("end-to-end learned run", above >= 5 && secs < 1800,
         std::to_string(above) + "/6 tasks at chance+15 or better; deltas " + detail +
             fmt("; train %.0f s, total %.0f s", train_secs, secs));
}

void winoground(std::size_t workers) {
  RunConfig cfg;
  const auto sched = cfg.schedule.build();
  const auto pairs = build_winoground_pairs(cfg.benchmark.winoground_pairs, cfg.master_seed, cfg.benchmark.image());
  const auto model = template_denoiser(pairs, cfg.benchmark.image(), cfg.benchmark.template_var);
  const auto r = evaluate_pairs(pairs, *model, sched, cfg, ScorerKind::selfeval, workers);
  const auto fx = evaluate_scale_fixture(cfg, 200, kScaleFixtureWorld, workers);
  double self_img = 0, elbo_img = 0;
  for (const auto& w : fx) (w.scorer == "elbo" ? elbo_img : self_img) = 100 * w.scores.image_score;
  const bool ok = r.scores.image_score >= 0.9 && r.scores.text_score >= 0.9 && self_img - elbo_img >= 20.0;
  report("Winoground-style scores", ok,
         fmt("swap pairs image %.2f text %.2f; scale fixture image selfeval %.2f vs elbo %.2f",
             100 * r.scores.image_score, 100 * r.scores.text_score, self_img, elbo_img));
}

void determinism_and_seeds(std::size_t workers) {
  (void)workers;
  const fs::path root = fs::temp_directory_path() / ("selfeval_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string bin = SELFEVAL_BIN;
  const std::string data = (root / "data").string();
  bool ran = shell(bin + " generate --oracle --out '" + data + "'") == 0;
  ran = ran && shell(bin + " --workers 1 evaluate --oracle --data '" + data + "' --out '" + (root / "w1").string() + "'") == 0;
  ran = ran && shell(bin + " --workers 8 evaluate --oracle --data '" + data + "' --out '" + (root / "w8").string() + "'") == 0;
  if (!ran) {
    report("determinism", false, "selfeval command failed");
    report("seed stability", false, "no oracle report");
    return;
  }
  bool same = true;
  std::string differing;
  for (const auto& entry : fs::directory_iterator(root / "w1")) {
    const auto name = entry.path().filename();
    std::string a = slurp(root / "w1" / name), b = slurp(root / "w8" / name);
    if (name == "report.json") {
      auto ja = nlohmann::ordered_json::parse(a), jb = nlohmann::ordered_json::parse(b);
      ja.erase("runId");
      jb.erase("runId");
      a = ja.dump();
      b = jb.dump();
    }
    if (a != b) {
      same = false;
      differing += name.string() + " ";
    }
  }
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(root / "w8")) ++files;
  report("determinism", same && files > 0,
         same ? std::to_string(files) + " output files identical for 1 and 8 workers (runId excluded)"
              : "differs: " + differing);

  const auto rep = nlohmann::json::parse(slurp(root / "w1" / "report.json"));
  double worst = 0;
  std::string detail;
  for (const auto& t : rep["tasks"]) {
    worst = std::max(worst, t["accuracyStdPct"].get<double>());
    detail += t["task"].get<std::string>() + " " + format_pct(t["accuracyStdPct"].get<double>()) + " ";
  }
  report("seed stability", worst <= 1.5 && rep["tasks"].size() == 6, "oracle std over seeds 1,2,3: " + detail);
  fs::remove_all(root);
}

void jensen_bound(const JensenGapStats& g) {
  const double log_n = std::log(static_cast<double>(std::max(g.trials, 1)));
  report("aggregation bound", g.within_bound(),
         fmt("logSumExp - mean trial log in [%.3g, %.3g] nats over ", g.min_gap, g.max_gap) +
             std::to_string(g.count) + " estimates; bound [0, " + fmt("%.3f", log_n) + "]; " +
             std::to_string(g.above_log_n) + " above ln N, " + std::to_string(g.below_zero) +
             " below 0; against the literal sum: [" + fmt("%.4g, %.4g", g.min_literal, g.max_literal) + "]");
}

struct Workload {
  std::span<const Condition> cands;
  int trials;
  int steps;
};

// Median over interleaved repetitions of time(big) / time(small), each a
// classify pass over a fixed input set.
double time_ratio(const Denoiser& den, const GaussianClassModel& gm, Workload small, Workload big) {
  auto make = [&](const Workload& w) {
    auto sched = std::make_shared<NoiseSchedule>(default_schedule(w.steps));
    EstimatorConfig cfg;
    cfg.trials = w.trials;
    cfg.steps = w.steps;
    cfg.seed = 3;
    auto bank = std::make_shared<NoiseBank>(gm.dim, w.steps, w.trials, 3);
    return std::make_pair(sched, std::make_shared<SelfEvalEstimator>(den, *sched, cfg, bank));
  };
  const auto [s_sched, s_est] = make(small);
  const auto [b_sched, b_est] = make(big);
  std::vector<Vec> inputs;
  for (std::uint32_t i = 0; i < 24; ++i) {
    CounterStream z(77, Domain::test, i);
    Vec x = gm.mean_for(small.cands[i % small.cands.size()]);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += z.normal(k);
    inputs.push_back(std::move(x));
  }
  volatile double sink = 0;
  auto timed = [&](const SelfEvalEstimator& est, std::span<const Condition> cands) {
    const auto t0 = Clock::now();
    for (const auto& x : inputs) sink = sink + est.classify(x, cands).probabilities[0];
    return seconds_since(t0);
  };
  timed(*s_est, small.cands);
  timed(*b_est, big.cands);
  std::vector<double> ratios;
  for (int rep = 0; rep < 9; ++rep) {
    const double ts = timed(*s_est, small.cands);
    const double tb = timed(*b_est, big.cands);
    ratios.push_back(tb / ts);
  }
  std::sort(ratios.begin(), ratios.end());
  return ratios[ratios.size() / 2];
}

void complexity() {
  std::vector<Condition> conds;
  for (int c = 0; c < kNumColors; ++c) {
    for (int s = 0; s < kNumShapes; ++s) {
      conds.push_back(Condition({{static_cast<Color>(c), static_cast<Shape>(s), 1, Position::top_left}}));
    }
  }
  GaussianClassModel gm;
  gm.dim = kEmbeddingDim;
  gm.class_var = 1.0;
  for (const auto& c : conds) gm.add(c, oracle_mean(c, 4.5));
  const AnalyticDenoiser den(gm);
  const std::span<const Condition> all(conds);

  const double n_ratio = time_ratio(den, gm, {all.first(4), 8, 50}, {all.first(4), 32, 50});
  const double t_ratio = time_ratio(den, gm, {all.first(4), 8, 50}, {all.first(4), 8, 200});
  const double c_ratio = time_ratio(den, gm, {all.first(3), 8, 50}, {all.first(12), 8, 50});
  auto in_band = [](double r) { return r >= 4 * 0.7 && r <= 4 * 1.3; };
  report("complexity", in_band(n_ratio) && in_band(t_ratio) && in_band(c_ratio),
         fmt("runtime ratio for 4x N %.2f, 4x T %.2f, 4x candidates %.2f (linear: 4, band 2.8-5.2)", n_ratio,
             t_ratio, c_ratio));
}

void metric_oracles() {
  std::mt19937_64 g(99);
  std::uniform_int_distribution<int> len(2, 60), val(0, 9);
  double worst = 0;
  int compared = 0;
  for (int k = 0; k < 1000; ++k) {
    const int n = len(g);
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = val(g);
    for (auto& v : b) v = val(g);
    // Direct definition: rank = 1 + #smaller + (#equal - 1) / 2, then Pearson.
    auto ranks = [](const std::vector<double>& v) {
      std::vector<long double> r(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        long double less = 0, eq = 0;
        for (double w : v) {
          less += w < v[i];
          eq += w == v[i];
        }
        r[i] = 1 + less + (eq - 1) / 2;
      }
      return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    long double ma = 0, mb = 0;
    for (int i = 0; i < n; ++i) {
      ma += ra[i];
      mb += rb[i];
    }
    ma /= n;
    mb /= n;
    long double sab = 0, saa = 0, sbb = 0;
    for (int i = 0; i < n; ++i) {
      sab += (ra[i] - ma) * (rb[i] - mb);
      saa += (ra[i] - ma) * (ra[i] - ma);
      sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0 || sbb == 0) continue;
    ++compared;
    worst = std::max(worst, std::abs(spearman_rho(a, b) - static_cast<double>(sab / std::sqrt(saa * sbb))));
  }
  bool votes_ok = true;
  std::uniform_int_distribution<std::size_t> lab(0, 3);
  for (int k = 0; k < 200; ++k) {
    std::vector<std::size_t> c(150), pa(150), pb(150);
    for (std::size_t i = 0; i < 150; ++i) {
      c[i] = lab(g);
      pa[i] = lab(g);
      pb[i] = lab(g);
    }
    VoteTally want;
    for (std::size_t i = 0; i < 150; ++i) {
      const bool ra = pa[i] == c[i], rb = pb[i] == c[i];
      if (ra && rb) ++want.both;
      if (ra && !rb) ++want.only_a;
      if (!ra && rb) ++want.only_b;
      if (!ra && !rb) ++want.neither;
    }
    const auto got = votes_from_predictions(pa, pb, c);
    votes_ok = votes_ok && got == want &&
               static_cast<double>(got.only_a + got.both) == std::round(accuracy(pa, c) / 100 * 150);
  }
  report("metric oracles", worst <= 1e-12 && compared >= 990 && votes_ok,
         fmt("spearman max |error| %.3g over %.0f tied vectors; votes recount ", worst, compared) +
             (votes_ok ? "matches on 200 fixtures" : "MISMATCH"));
}

}  // namespace

// Optional argument: run only criteria whose name contains it.
int main(int argc, char** argv) {
  const std::string only = argc > 1 ? argv[1] : "";
  std::size_t workers = 1;
  try {
    workers = workers_from_env();
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  auto guarded = [&](const std::string& name, const std::function<void()>& f) {
    if (name.find(only) == std::string::npos) return;
    try {
      f();
    } catch (const std::exception& e) {
      report(name, false, std::string("threw: ") + e.what());
    }
  };
  JensenGapStats gap;
  guarded("term-by-term oracle", term_oracle);
  guarded("Bayes agreement", bayes_agreement);
  guarded("chance calibration", [&] { chance_calibration(workers); });
  guarded("end-to-end learned run", [&] { end_to_end(workers, gap); });
  guarded("Winoground-style scores", [&] { winoground(workers); });
  guarded("determinism", [&] { determinism_and_seeds(workers); });
  if (only.empty()) guarded("aggregation bound", [&] { jensen_bound(gap); });
  guarded("complexity", complexity);
  guarded("metric oracles", metric_oracles);
  std::cout << (failures ? std::to_string(failures) + " criterion(s) failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
