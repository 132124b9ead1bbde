#include "selfeval/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numeric>
#include <set>

#include "selfeval/errors.hpp"
#include "selfeval/parallel.hpp"
#include "selfeval/rng.hpp"

namespace selfeval {

void JensenGapStats::add(std::span<const double> per_trial) {
  const double n = static_cast<double>(per_trial.size());
  const double mean = std::accumulate(per_trial.begin(), per_trial.end(), 0.0) / n;
  const double sum = aggregate(per_trial, Aggregation::jensen_sum);
  const double lse = log_mean_exp(per_trial);
  const double gap = lse - mean;
  const double literal = lse - sum;
  // Both sides are rounded sums of the same logs; allow a few ulps of them.
  const double tol = 1e-12 * (1.0 + std::abs(mean));
  const double log_n = std::log(n);
  if (count == 0) {
    min_gap = max_gap = gap;
    min_literal = max_literal = literal;
  }
  min_gap = std::min(min_gap, gap);
  max_gap = std::max(max_gap, gap);
  min_literal = std::min(min_literal, literal);
  max_literal = std::max(max_literal, literal);
  below_zero += gap < -tol;
  above_log_n += gap > log_n + tol;
  literal_outside += literal < -tol || literal > log_n + tol;
  trials = static_cast<int>(per_trial.size());
  ++count;
}

void JensenGapStats::merge(const JensenGapStats& o) {
  if (o.count == 0) return;
  if (count == 0) {
    *this = o;
    return;
  }
  min_gap = std::min(min_gap, o.min_gap);
  max_gap = std::max(max_gap, o.max_gap);
  min_literal = std::min(min_literal, o.min_literal);
  max_literal = std::max(max_literal, o.max_literal);
  below_zero += o.below_zero;
  above_log_n += o.above_log_n;
  literal_outside += o.literal_outside;
  count += o.count;
}

namespace {

nlohmann::ordered_json gap_json(const JensenGapStats& g) {
  nlohmann::ordered_json j;
  j["estimates"] = g.count;
  j["N"] = g.trials;
  j["perTrialGapMin"] = g.min_gap;
  j["perTrialGapMax"] = g.max_gap;
  j["belowZero"] = g.below_zero;
  j["aboveLogN"] = g.above_log_n;
  j["literalGapMin"] = g.min_literal;
  j["literalGapMax"] = g.max_literal;
  j["literalOutside"] = g.literal_outside;
  return j;
}

JensenGapStats gap_from_json(const nlohmann::json& j) {
  JensenGapStats g;
  g.count = j.at("estimates").get<std::size_t>();
  g.trials = j.at("N").get<int>();
  g.min_gap = j.at("perTrialGapMin").get<double>();
  g.max_gap = j.at("perTrialGapMax").get<double>();
  g.below_zero = j.at("belowZero").get<std::size_t>();
  g.above_log_n = j.at("aboveLogN").get<std::size_t>();
  g.min_literal = j.at("literalGapMin").get<double>();
  g.max_literal = j.at("literalGapMax").get<double>();
  g.literal_outside = j.at("literalOutside").get<std::size_t>();
  return g;
}

}  // namespace

EstimatorConfig estimator_for_record(const RunConfig& cfg, std::uint64_t record_seed, const EvalOptions& opts) {
  std::uint64_t seed = record_seed;
  if (opts.noise_seed_base) seed = *opts.noise_seed_base + (record_seed - cfg.master_seed);
  return cfg.estimator_for(seed);
}

SuiteEvaluation evaluate_suite(std::span<const DatasetRecord> records, const Denoiser& model,
                               const NoiseSchedule& sched, const RunConfig& cfg, const EvalOptions& opts,
                               std::size_t workers) {
  if (records.empty()) throw ParameterError("evaluate: empty suite");
  if (sched.steps() != cfg.estimator.steps) throw ParameterError("evaluate: schedule T differs from estimator T");
  const std::size_t d = model.dim();
  for (const auto& r : records) {
    if (r.example.image.pixels.size() != d) {
      throw DataError("evaluate: example " + r.example.id + " has dimension " +
                      std::to_string(r.example.image.pixels.size()) + " but the model expects " + std::to_string(d));
    }
  }

  // One noise bank per estimator seed, shared by every example of that repeat.
  std::map<std::uint64_t, std::shared_ptr<const NoiseBank>> banks;
  for (const auto& r : records) {
    const auto ec = estimator_for_record(cfg, r.seed, opts);
    if (!banks.contains(ec.seed)) {
      banks[ec.seed] = std::make_shared<NoiseBank>(d, ec.steps, ec.trials, ec.seed, opts.scorer == ScorerKind::elbo);
    }
  }

  SuiteEvaluation ev;
  ev.outcomes.resize(records.size());
  std::vector<JensenGapStats> gaps(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const auto& rec = records[i];
    const auto& ex = rec.example;
    const auto ec = estimator_for_record(cfg, rec.seed, opts);
    const SelfEvalEstimator est(model, sched, ec, banks.at(ec.seed));
    const Vec x = to_model_space(ex.image);
    ExampleOutcome& o = ev.outcomes[i];
    o.id = ex.id;
    o.task = ex.task;
    o.seed = rec.seed;
    o.correct = ex.correct_index;
    for (const auto& c : ex.candidates) o.candidate_ids.push_back(c.id());
    if (opts.scorer == ScorerKind::elbo) {
      o.scores = est.elbo_proxy_all(x, ex.candidates);
      o.prediction = posterior_from_log_likelihoods(o.candidate_ids, o.scores).argmax;
    } else {
      std::vector<LikelihoodEstimate> estimates;
      const auto post = est.classify(x, ex.candidates, &estimates);
      o.prediction = post.argmax;
      o.scores = post.log_likelihoods;
      for (const auto& e : estimates) gaps[i].add(e.per_trial);
      if (opts.keep_estimates) o.estimates = std::move(estimates);
    }
  });

  for (const auto& g : gaps) ev.gap.merge(g);
  ev.tasks = summarize_tasks(ev.outcomes, cfg);
  return ev;
}

std::vector<TaskResult> summarize_tasks(std::span<const ExampleOutcome> outcomes, const RunConfig& cfg) {
  std::vector<TaskResult> out;
  for (TaskKind task : kAllTasks) {
    std::map<std::uint64_t, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> by_seed;
    std::set<std::size_t> candidate_counts;
    for (const auto& o : outcomes) {
      if (o.task != task) continue;
      by_seed[o.seed].first.push_back(o.prediction);
      by_seed[o.seed].second.push_back(o.correct);
      candidate_counts.insert(o.candidate_ids.size());
    }
    if (by_seed.empty()) continue;
    if (candidate_counts.size() != 1) {
      throw DataError("task " + to_string(task) + ": examples disagree on the number of candidates");
    }
    std::vector<double> accs;
    std::vector<std::uint64_t> seeds;
    for (const auto& [seed, pc] : by_seed) {
      accs.push_back(accuracy(pc.first, pc.second));
      seeds.push_back(seed);
    }
    const double chance = 100.0 / static_cast<double>(*candidate_counts.begin());
    out.push_back(make_task_result(to_string(task), accs, chance, seeds));
  }
  (void)cfg;
  return out;
}

std::vector<std::string> estimate_lines(const SuiteEvaluation& ev, const std::string& config_hash) {
  std::vector<std::string> lines;
  for (const auto& o : ev.outcomes) {
    for (std::size_t c = 0; c < o.estimates.size(); ++c) {
      const auto& e = o.estimates[c];
      nlohmann::ordered_json j;
      j["exampleId"] = o.id;
      j["candidateId"] = o.candidate_ids[c];
      j["logLikelihood"] = e.log_likelihood;
      j["perTrialLogs"] = e.per_trial;
      j["priorTermLog"] = e.prior_term_log;
      j["seed"] = e.seed;
      j["configHash"] = config_hash;
      lines.push_back(j.dump());
    }
  }
  return lines;
}

std::vector<std::string> prediction_lines(const SuiteEvaluation& ev) {
  std::vector<std::string> lines;
  for (const auto& o : ev.outcomes) {
    nlohmann::ordered_json j;
    j["exampleId"] = o.id;
    j["task"] = to_string(o.task);
    j["seed"] = o.seed;
    j["prediction"] = o.prediction;
    j["correctIndex"] = o.correct;
    j["scores"] = o.scores;
    lines.push_back(j.dump());
  }
  return lines;
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  for (const auto& line : read_lines(path)) {
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("exampleId").get<std::string>(), j.at("task").get<std::string>(),
                     j.at("prediction").get<std::size_t>(), j.at("correctIndex").get<std::size_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, VoteTally> votes_by_task(std::span<const Prediction> a, std::span<const Prediction> b) {
  std::map<std::string, const Prediction*> index;
  for (const auto& p : b) index[p.id] = &p;
  std::map<std::string, std::vector<std::size_t>> pa, pb, truth;
  for (const auto& p : a) {
    auto it = index.find(p.id);
    if (it == index.end()) throw DataError("votes: example " + p.id + " missing from the second run");
    if (it->second->correct != p.correct) throw DataError("votes: runs disagree on the label of " + p.id);
    pa[p.task].push_back(p.prediction);
    pb[p.task].push_back(it->second->prediction);
    truth[p.task].push_back(p.correct);
  }
  if (a.size() != b.size()) throw DataError("votes: runs cover different example sets");
  std::map<std::string, VoteTally> out;
  for (const auto& [task, preds] : pa) out[task] = votes_from_predictions(preds, pb[task], truth[task]);
  return out;
}

std::shared_ptr<AnalyticDenoiser> oracle_denoiser(std::span<const DatasetRecord> records, const OracleWorld& world) {
  std::vector<ItmExample> examples;
  examples.reserve(records.size());
  for (const auto& r : records) examples.push_back(r.example);
  return std::make_shared<AnalyticDenoiser>(oracle_class_model(examples, world));
}

std::shared_ptr<AnalyticDenoiser> template_denoiser(std::span<const ScenePair> pairs, const ImageConfig& img,
                                                    double class_var) {
  std::vector<Condition> conds;
  for (const auto& p : pairs) {
    conds.push_back(p.a.condition);
    conds.push_back(p.b.condition);
  }
  return std::make_shared<AnalyticDenoiser>(template_class_model(conds, img, class_var));
}

std::vector<DatasetRecord> build_oracle_records(const RunConfig& cfg) {
  std::vector<DatasetRecord> out;
  const std::string hash = cfg.config_hash();
  for (TaskKind t : cfg.benchmark.tasks) {
    for (std::uint64_t seed : cfg.repeat_seeds()) {
      for (auto& ex : build_oracle_suite(default_task_spec(t), cfg.benchmark.suite_size, seed, cfg.benchmark.oracle)) {
        out.push_back({std::move(ex), seed, hash});
      }
    }
  }
  return out;
}

std::vector<DatasetRecord> build_rendered_records(const RunConfig& cfg) {
  std::vector<DatasetRecord> out;
  const std::string hash = cfg.config_hash();
  for (TaskKind t : cfg.benchmark.tasks) {
    for (std::uint64_t seed : cfg.repeat_seeds()) {
      for (auto& ex : build_task_suite(default_task_spec(t), cfg.benchmark.suite_size, seed, cfg.benchmark.image())) {
        out.push_back({std::move(ex), seed, hash});
      }
    }
  }
  return out;
}

std::vector<TrainRecord> build_training_records(const RunConfig& cfg) {
  std::vector<TrainRecord> out;
  const std::string hash = cfg.config_hash();
  const std::uint64_t base = mix_seed(cfg.master_seed, 0x7A1);
  const auto img = cfg.benchmark.image();
  for (int i = 0; i < cfg.benchmark.train_size; ++i) {
    StreamCursor cur(CounterStream(base, Domain::dataset, 1, static_cast<std::uint32_t>(i)));
    // Half single-object scenes, half two-object scenes.
    const TaskKind kind = (i % 2 == 0) ? TaskKind::color : TaskKind::attribute_binding;
    const Condition c = sample_condition(kind, cur);
    TrainRecord r;
    r.render_seed = mix_seed(base, static_cast<std::uint64_t>(i));
    const MicroScene scene = render_scene(c, r.render_seed, img);
    r.shape = scene.shape;
    r.sample.key = static_cast<std::uint64_t>(i);
    r.sample.condition = c;
    r.sample.x0 = to_model_space(scene);
    for (double& v : r.sample.x0) v = static_cast<float>(v);  // stored as float32
    r.config_hash = hash;
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::ordered_json to_json(const WinogroundResult& r) {
  nlohmann::ordered_json j;
  j["scorer"] = r.scorer;
  j["fixture"] = r.fixture;
  j["imageScore"] = round2(100.0 * r.scores.image_score);
  j["textScore"] = round2(100.0 * r.scores.text_score);
  j["groupScore"] = round2(100.0 * r.scores.group_score);
  j["pairs"] = r.scores.pairs;
  return j;
}

WinogroundResult evaluate_pairs(std::span<const ScenePair> pairs, const Denoiser& model, const NoiseSchedule& sched,
                                const RunConfig& cfg, ScorerKind scorer, std::size_t workers) {
  const auto wp = to_winoground_pairs(pairs);
  const auto ec = cfg.estimator_for(cfg.master_seed);
  const auto scores = image_text_scores(wp, scorer, {&model}, sched, ec, workers);
  return {to_string(scorer), "pairs", scores};
}

std::vector<WinogroundResult> evaluate_scale_fixture(const RunConfig& cfg, int pairs, const OracleWorld& world,
                                                     std::size_t workers) {
  const auto fx = build_scale_mismatch_fixture(pairs, cfg.master_seed, world);
  const AnalyticDenoiser base(fx.base_world);
  const AnalyticDenoiser scaled(fx.scaled_world);
  const auto sched = cfg.schedule.build();
  const auto ec = cfg.estimator_for(cfg.master_seed);
  std::vector<WinogroundResult> out;
  for (ScorerKind k : {ScorerKind::selfeval, ScorerKind::elbo}) {
    out.push_back({to_string(k), "scaleMismatch", image_text_scores(fx.pairs, k, {&base, &scaled}, sched, ec, workers)});
  }
  return out;
}

RunConfig with_steps(const RunConfig& cfg, int steps) {
  if (steps < 1) throw ParameterError("ablation: T must be >= 1");
  RunConfig c = cfg;
  const double f = static_cast<double>(cfg.schedule.steps) / steps;
  c.schedule.steps = steps;
  c.schedule.beta_min = std::min(cfg.schedule.beta_min * f, 0.5);
  c.schedule.beta_max = std::min(cfg.schedule.beta_max * f, 0.5);
  c.estimator.steps = steps;
  c.validate();
  return c;
}

AblationTable ablation_sweep(AblationAxis axis, std::span<const std::string> values, const RunConfig& cfg,
                             std::span<const DatasetRecord> records, const Denoiser& model,
                             const EvalOptions& opts, std::size_t workers) {
  if (values.empty()) throw ParameterError("ablation: no values");
  AblationTable table;
  table.axis = axis;
  for (const auto& v : values) {
    std::uint64_t n = 0;
    try {
      std::size_t pos = 0;
      n = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      throw ParameterError("ablation: value '" + v + "' is not a non-negative integer");
    }
    RunConfig c = cfg;
    EvalOptions o = opts;
    switch (axis) {
      case AblationAxis::steps: c = with_steps(cfg, static_cast<int>(n)); break;
      case AblationAxis::trials:
        c.estimator.trials = static_cast<int>(n);
        c.validate();
        break;
      case AblationAxis::seed: o.noise_seed_base = n; break;
    }
    o.keep_estimates = false;
    const auto sched = c.schedule.build();
    const auto t0 = std::chrono::steady_clock::now();
    const auto ev = evaluate_suite(records, model, sched, c, o, workers);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    table.rows.push_back({v, ev.tasks, secs});
  }
  return table;
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["runId"] = r.run_id;
  j["configHash"] = r.config_hash;
  j["config"] = r.config;
  j["schedule"] = r.schedule;
  j["model"] = r.model;
  j["scorer"] = r.scorer;
  nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
  for (const auto& t : r.tasks) tasks.push_back(to_json(t));
  j["tasks"] = tasks;
  if (!r.winoground.empty()) {
    // The headline entry keeps the flat {imageScore, textScore, groupScore} shape.
    j["winoground"] = to_json(r.winoground.front());
    if (r.winoground.size() > 1) {
      nlohmann::ordered_json all = nlohmann::ordered_json::array();
      for (const auto& w : r.winoground) all.push_back(to_json(w));
      j["winogroundAll"] = all;
    }
  }
  if (!r.votes.empty()) {
    nlohmann::ordered_json v;
    for (const auto& [task, tally] : r.votes) v[task] = to_json(tally);
    j["votes"] = v;
  }
  if (!r.ablations.empty()) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& t : r.ablations) a.push_back(to_json(t));
    j["ablations"] = a;
  }
  if (r.gap) j["jensenGap"] = gap_json(*r.gap);
  return j;
}

namespace {

WinogroundResult winoground_from_json(const nlohmann::json& j) {
  WinogroundResult w;
  w.scorer = j.value("scorer", std::string("selfeval"));
  w.fixture = j.value("fixture", std::string("pairs"));
  w.scores.image_score = j.at("imageScore").get<double>() / 100.0;
  w.scores.text_score = j.at("textScore").get<double>() / 100.0;
  w.scores.group_score = j.value("groupScore", 0.0) / 100.0;
  w.scores.pairs = j.value("pairs", std::size_t{0});
  return w;
}

}  // namespace

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.run_id = j.at("runId").get<std::string>();
    r.config_hash = j.at("configHash").get<std::string>();
    if (j.contains("config")) r.config = j.at("config");
    if (j.contains("schedule")) r.schedule = j.at("schedule");
    if (j.contains("model")) r.model = j.at("model");
    r.scorer = j.value("scorer", std::string("selfeval"));
    for (const auto& t : j.at("tasks")) r.tasks.push_back(task_result_from_json(t));
    if (j.contains("winogroundAll")) {
      for (const auto& w : j.at("winogroundAll")) r.winoground.push_back(winoground_from_json(w));
    } else if (j.contains("winoground")) {
      r.winoground.push_back(winoground_from_json(j.at("winoground")));
    }
    if (j.contains("votes")) {
      for (const auto& [task, v] : j.at("votes").items()) {
        r.votes[task] = {v.at("onlyA").get<std::size_t>(), v.at("onlyB").get<std::size_t>(),
                         v.at("both").get<std::size_t>(), v.at("neither").get<std::size_t>()};
      }
    }
    if (j.contains("ablations")) {
      for (const auto& a : j.at("ablations")) {
        AblationTable t;
        t.axis = ablation_axis_from_string(a.at("axis").get<std::string>());
        for (const auto& row : a.at("rows")) {
          AblationRow ar;
          ar.value = row.at("value").get<std::string>();
          for (const auto& tr : row.at("tasks")) ar.tasks.push_back(task_result_from_json(tr));
          t.rows.push_back(std::move(ar));
        }
        r.ablations.push_back(std::move(t));
      }
    }
    if (j.contains("jensenGap")) r.gap = gap_from_json(j.at("jensenGap"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
  return r;
}

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

}  // namespace

void write_report(const std::filesystem::path& dir, const EvalReport& r) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", to_json(r).dump(2) + "\n");
  write_text(dir / "tasks.csv", tasks_to_csv(r.tasks));
  std::string chart = "x,y\n";
  for (const auto& t : r.tasks) chart += t.task + "," + format_pct(t.delta_pct) + "\n";
  write_text(dir / "chart.csv", chart);
  for (const auto& a : r.ablations) write_text(dir / ("ablation_" + to_string(a.axis) + ".csv"), to_csv(a));
  if (!r.winoground.empty()) {
    std::string w = "scorer,fixture,imageScore,textScore,groupScore,pairs\n";
    for (const auto& x : r.winoground) {
      w += x.scorer + "," + x.fixture + "," + format_pct(100.0 * x.scores.image_score) + "," +
           format_pct(100.0 * x.scores.text_score) + "," + format_pct(100.0 * x.scores.group_score) + "," +
           std::to_string(x.scores.pairs) + "\n";
    }
    write_text(dir / "winoground.csv", w);
  }
  if (!r.votes.empty()) {
    std::string v = "task,onlyA,onlyB,both,neither\n";
    for (const auto& [task, t] : r.votes) {
      v += task + "," + std::to_string(t.only_a) + "," + std::to_string(t.only_b) + "," + std::to_string(t.both) +
           "," + std::to_string(t.neither) + "\n";
    }
    write_text(dir / "votes.csv", v);
  }
}

std::string make_run_id() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

}  // namespace selfeval
