// selfeval: generate, train, evaluate, winoground, ablate, report.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "selfeval/checkpoint.hpp"
#include "selfeval/config.hpp"
#include "selfeval/dataset_io.hpp"
#include "selfeval/errors.hpp"
#include "selfeval/evaluation.hpp"
#include "selfeval/hashing.hpp"

namespace fs = std::filesystem;
using namespace selfeval;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

constexpr const char* kManifest = "manifest.json";
constexpr const char* kConfigFile = "config.json";
constexpr const char* kPairsFile = "winoground_pairs.jsonl";
constexpr const char* kTrainFile = "train.jsonl";

struct Common {
  std::optional<std::size_t> workers;
  std::string config_path;

  std::size_t resolve_workers() const { return workers ? *workers : workers_from_env(); }
};

// Estimator flags shared by evaluate, winoground and ablate.
struct EstimatorFlags {
  std::optional<int> trials;
  std::optional<int> timesteps;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> latent_mode;
  std::optional<std::string> aggregation;
  std::string scorer = "selfeval";

  void add_to(CLI::App* app) {
    app->add_option("--trials", trials, "Monte-Carlo trials N");
    app->add_option("--timesteps", timesteps, "diffusion steps T");
    app->add_option("--seed", seed, "base seed for the estimator noise");
    app->add_option("--latent-mode", latent_mode, "forwardAnchored | reverseAnchored");
    app->add_option("--aggregation", aggregation, "jensenSum | logSumExp");
    app->add_option("--scorer", scorer, "selfeval | elbo")->check(CLI::IsMember({"selfeval", "elbo"}));
  }

  RunConfig apply(RunConfig cfg) const {
    if (timesteps) cfg = with_steps(cfg, *timesteps);
    if (trials) cfg.estimator.trials = *trials;
    if (latent_mode) cfg.estimator.latent_mode = latent_mode_from_string(*latent_mode);
    if (aggregation) cfg.estimator.aggregation = aggregation_from_string(*aggregation);
    cfg.validate();
    return cfg;
  }

  EvalOptions options() const {
    EvalOptions o;
    o.scorer = scorer_from_string(scorer);
    o.noise_seed_base = seed;
    return o;
  }
};

struct DataDir {
  RunConfig config;
  std::string hash;
  nlohmann::json manifest;
  bool oracle = false;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
  if (!out) throw DataError("write failed for " + p.string());
}

void write_manifest(const fs::path& dir, const RunConfig& cfg, bool oracle,
                    const std::vector<std::pair<std::string, std::size_t>>& files) {
  nlohmann::ordered_json m;
  m["configHash"] = cfg.config_hash();
  m["kind"] = oracle ? "oracle" : "rendered";
  m["config"] = cfg.canonical_json();
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& [name, records] : files) {
    list.push_back({{"name", name},
                    {"records", records},
                    {"bytes", fs::file_size(dir / name)},
                    {"sha256", sha256_file(dir / name)}});
  }
  m["files"] = list;
  write_text(dir / kManifest, m.dump(2) + "\n");
}

DataDir load_data_dir(const fs::path& dir, bool verify_hashes) {
  DataDir d;
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
  d.config = load_run_config(dir / kConfigFile);
  d.hash = d.config.config_hash();
  std::ifstream in(dir / kManifest);
  if (!in) throw DataError("missing " + (dir / kManifest).string());
  try {
    in >> d.manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  if (d.manifest.value("configHash", std::string()) != d.hash) {
    throw DataError("manifest configHash does not match " + (dir / kConfigFile).string());
  }
  d.oracle = d.manifest.value("kind", std::string("rendered")) == "oracle";
  if (verify_hashes) {
    for (const auto& f : d.manifest.at("files")) {
      const auto name = f.at("name").get<std::string>();
      if (sha256_file(dir / name) != f.at("sha256").get<std::string>()) {
        throw DataError("file " + name + " does not match its manifest hash");
      }
    }
  }
  return d;
}

void check_hash(const std::string& what, const std::string& found, const std::string& expected, bool force) {
  if (found == expected) return;
  const std::string msg = what + ": configHash " + found.substr(0, 12) + " differs from the data configHash " +
                          expected.substr(0, 12);
  if (!force) throw DataError(msg + " (use --force to override)");
  std::cerr << "warning: " << msg << "\n";
}

std::vector<DatasetRecord> load_suites(const fs::path& dir, const DataDir& d, bool force) {
  std::vector<DatasetRecord> records;
  for (TaskKind t : d.config.benchmark.tasks) {
    auto part = read_dataset(dir / (to_string(t) + ".jsonl"));
    for (auto& r : part) {
      check_hash(to_string(t) + ".jsonl record " + r.example.id, r.config_hash, d.hash, force);
      records.push_back(std::move(r));
    }
  }
  return records;
}

struct LoadedModel {
  std::shared_ptr<const Denoiser> model;
  nlohmann::ordered_json description;
  std::optional<NoiseSchedule> trained_schedule;
};

LoadedModel load_model(const std::string& checkpoint, bool oracle, const DataDir& d,
                       std::span<const DatasetRecord> records, bool force) {
  if (oracle == !checkpoint.empty()) throw ParameterError("give exactly one of --checkpoint or --oracle");
  LoadedModel m;
  if (oracle) {
    if (!d.oracle) throw DataError("--oracle needs a data directory generated with --oracle");
    m.model = oracle_denoiser(records, d.config.benchmark.oracle);
    m.description = {{"kind", "oracle"},
                     {"scale", d.config.benchmark.oracle.scale},
                     {"classVar", d.config.benchmark.oracle.class_var}};
    return m;
  }
  auto ck = load_checkpoint(checkpoint);
  check_hash("checkpoint " + checkpoint, ck.config_hash, d.hash, force);
  m.model = ck.model;
  m.trained_schedule = ck.schedule;
  m.description = {{"kind", "checkpoint"},
                   {"sha256", sha256_file(checkpoint)},
                   {"epochsCompleted", ck.model->epochs_completed()}};
  return m;
}

void check_model_fit(const LoadedModel& m, std::size_t data_dim, const RunConfig& cfg, bool force) {
  if (m.model->dim() != data_dim) {
    throw DataError("dataDim: model expects " + std::to_string(m.model->dim()) + " values per image, data has " +
                    std::to_string(data_dim));
  }
  if (m.trained_schedule && m.trained_schedule->steps() == cfg.schedule.steps &&
      !(*m.trained_schedule == cfg.schedule.build())) {
    const std::string msg = "schedule: checkpoint schedule differs from the configured one";
    if (!force) throw DataError(msg + " (use --force to override)");
    std::cerr << "warning: " << msg << "\n";
  }
}

void print_tasks(std::ostream& os, std::span<const TaskResult> tasks) {
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %9s %7s %8s %8s\n", "task", "acc(%)", "std", "chance", "delta");
  os << line;
  for (const auto& t : tasks) {
    std::snprintf(line, sizeof line, "%-18s %9s %7s %8s %8s\n", t.task.c_str(), format_pct(t.accuracy_mean_pct).c_str(),
                  format_pct(t.accuracy_std_pct).c_str(), format_pct(t.chance_pct).c_str(),
                  format_pct(t.delta_pct).c_str());
    os << line;
  }
}

RunConfig base_config(const Common& common) {
  RunConfig cfg = common.config_path.empty() ? RunConfig{} : load_run_config(common.config_path);
  return cfg;
}

// ---- generate ----------------------------------------------------------------

struct GenerateArgs {
  std::string out = "data";
  std::optional<std::uint64_t> seed;
  std::optional<int> suite_size, repeats, pairs, train_size, image_size;
  std::vector<std::string> tasks;
  bool oracle = false;
};

int cmd_generate(const Common& common, const GenerateArgs& a) {
  RunConfig cfg = base_config(common);
  if (a.seed) cfg.master_seed = *a.seed;
  if (a.suite_size) cfg.benchmark.suite_size = *a.suite_size;
  if (a.repeats) cfg.benchmark.repeats = *a.repeats;
  if (a.pairs) cfg.benchmark.winoground_pairs = *a.pairs;
  if (a.train_size) cfg.benchmark.train_size = *a.train_size;
  if (a.image_size) cfg.benchmark.image_size = *a.image_size;
  if (!a.tasks.empty()) {
    cfg.benchmark.tasks.clear();
    for (const auto& t : a.tasks) cfg.benchmark.tasks.push_back(task_from_string(t));
  }
  cfg.validate();
  const fs::path dir = a.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  save_run_config(dir / kConfigFile, cfg);

  std::vector<std::pair<std::string, std::size_t>> files{{kConfigFile, 1}};
  const auto records = a.oracle ? build_oracle_records(cfg) : build_rendered_records(cfg);
  for (TaskKind t : cfg.benchmark.tasks) {
    std::vector<DatasetRecord> part;
    for (const auto& r : records) {
      if (r.example.task == t) part.push_back(r);
    }
    const std::string name = to_string(t) + ".jsonl";
    write_dataset(dir / name, part);
    files.emplace_back(name, part.size());
  }
  if (!a.oracle) {
    std::vector<PairRecord> pairs;
    for (auto& p : build_winoground_pairs(cfg.benchmark.winoground_pairs, cfg.master_seed, cfg.benchmark.image())) {
      pairs.push_back({std::move(p), cfg.config_hash()});
    }
    write_pairs(dir / kPairsFile, pairs);
    files.emplace_back(kPairsFile, pairs.size());
    const auto train = build_training_records(cfg);
    write_train(dir / kTrainFile, train);
    files.emplace_back(kTrainFile, train.size());
  }
  write_manifest(dir, cfg, a.oracle, files);
  std::cout << "wrote " << files.size() << " files to " << dir.string() << " (configHash "
            << cfg.config_hash().substr(0, 12) << ")\n";
  return kExitOk;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string data = "data";
  std::string out = "run";
  std::optional<int> epochs;
  std::optional<double> lr;
  std::string resume;
  bool force = false;
};

int cmd_train(const Common& common, const TrainArgs& a) {
  const DataDir d = load_data_dir(a.data, true);
  if (d.oracle) throw DataError("train needs a rendered data directory (this one holds oracle suites)");
  RunConfig cfg = d.config;
  if (!common.config_path.empty()) cfg.trainer = load_run_config(common.config_path).trainer;
  if (a.epochs) cfg.trainer.epochs = *a.epochs;
  if (a.lr) cfg.trainer.learning_rate = *a.lr;
  cfg.trainer.seed = mix_seed(cfg.master_seed, 0x7EA1);
  cfg.validate();

  const auto train = read_train(fs::path(a.data) / kTrainFile);
  std::vector<ConditionedSample> samples;
  samples.reserve(train.size());
  for (const auto& r : train) {
    check_hash("train.jsonl record " + std::to_string(r.sample.key), r.config_hash, d.hash, a.force);
    samples.push_back(r.sample);
  }
  if (samples.empty()) throw DataError("train.jsonl holds no samples");

  const auto sched = cfg.schedule.build();
  std::optional<LoadedCheckpoint> resumed;
  if (!a.resume.empty()) {
    resumed = load_checkpoint(a.resume);
    check_hash("checkpoint " + a.resume, resumed->config_hash, d.hash, a.force);
    if (!(resumed->schedule == sched)) throw DataError("schedule: resumed checkpoint was trained with another schedule");
  }

  const fs::path out = a.out;
  fs::create_directories(out);
  std::string curve = "epoch,mse\n";
  const auto t0 = std::chrono::steady_clock::now();
  auto result = train_mlp(samples, sched, cfg.trainer, resumed ? resumed->model.get() : nullptr,
                          [&](int epoch, double mse) {
                            char buf[64];
                            std::snprintf(buf, sizeof buf, "%d,%.8f\n", epoch, mse);
                            curve += buf;
                            std::cerr << "epoch " << epoch << " mse " << mse << "\n";
                          });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::json extra = {{"trainer", cfg.canonical_json()["trainer"]},
                          {"initialMse", result.log.initial_mse},
                          {"finalMse", result.log.final_mse}};
  save_checkpoint(out / "model.ckpt", *result.model, sched, d.hash, extra);
  write_text(out / "training_curve.csv", curve);
  std::cout << "trained " << result.model->epochs_completed() << " epochs in " << secs << " s; probe mse "
            << result.log.initial_mse << " -> " << result.log.final_mse << "\n";
  return kExitOk;
}

// ---- evaluate -------------------------------------------------------------------

struct EvalArgs {
  std::string data = "data";
  std::string out;
  std::string checkpoint;
  bool oracle = false;
  bool force = false;
  bool no_estimates = false;
  EstimatorFlags est;
};

int cmd_evaluate(const Common& common, const EvalArgs& a) {
  const DataDir d = load_data_dir(a.data, true);
  const RunConfig cfg = a.est.apply(d.config);
  const auto records = load_suites(a.data, d, a.force);
  if (records.empty()) throw DataError("no examples found in " + a.data);
  const auto m = load_model(a.checkpoint, a.oracle, d, records, a.force);
  check_model_fit(m, records.front().example.image.pixels.size(), cfg, a.force);

  EvalOptions opts = a.est.options();
  opts.keep_estimates = !a.no_estimates;
  const auto sched = cfg.schedule.build();
  const auto ev = evaluate_suite(records, *m.model, sched, cfg, opts, common.resolve_workers());

  EvalReport rep;
  rep.run_id = make_run_id();
  rep.config_hash = cfg.config_hash();
  rep.config = cfg.canonical_json();
  rep.schedule = sched.to_json();
  rep.model = m.description;
  rep.scorer = a.est.scorer;
  rep.tasks = ev.tasks;
  if (opts.scorer == ScorerKind::selfeval) rep.gap = ev.gap;

  const fs::path out = a.out.empty() ? fs::path(a.data) / "eval" : fs::path(a.out);
  write_report(out, rep);
  write_lines(out / "predictions.jsonl", prediction_lines(ev));
  if (opts.keep_estimates && opts.scorer == ScorerKind::selfeval) {
    write_lines(out / "estimates.jsonl", estimate_lines(ev, rep.config_hash));
  }
  print_tasks(std::cout, rep.tasks);
  std::cout << "report: " << (out / "report.json").string() << "\n";
  return kExitOk;
}

// ---- winoground -----------------------------------------------------------------

struct WinoArgs {
  std::string data = "data";
  std::string out;
  std::string checkpoint;
  bool oracle = false;
  bool force = false;
  bool scale_fixture = false;
  int fixture_pairs = 200;
  EstimatorFlags est;
};

int cmd_winoground(const Common& common, const WinoArgs& a) {
  const DataDir d = load_data_dir(a.data, true);
  const RunConfig cfg = a.est.apply(d.config);
  const std::size_t workers = common.resolve_workers();
  const auto sched = cfg.schedule.build();
  EvalReport rep;
  rep.run_id = make_run_id();
  rep.config_hash = cfg.config_hash();
  rep.config = cfg.canonical_json();
  rep.schedule = sched.to_json();
  rep.scorer = a.est.scorer;

  if (!d.oracle) {
    std::vector<ScenePair> pairs;
    for (auto& r : read_pairs(fs::path(a.data) / kPairsFile)) {
      check_hash("winoground pair " + r.pair.id, r.config_hash, d.hash, a.force);
      pairs.push_back(std::move(r.pair));
    }
    if (pairs.empty()) throw DataError("no winoground pairs in " + a.data);
    std::shared_ptr<const Denoiser> model;
    if (a.oracle == !a.checkpoint.empty()) throw ParameterError("give exactly one of --checkpoint or --oracle");
    if (a.oracle) {
      model = template_denoiser(pairs, cfg.benchmark.image(), cfg.benchmark.template_var);
      rep.model = {{"kind", "templateOracle"}, {"classVar", cfg.benchmark.template_var}};
    } else {
      const auto m = load_model(a.checkpoint, false, d, {}, a.force);
      check_model_fit(m, pairs.front().a.pixels.size(), cfg, a.force);
      model = m.model;
      rep.model = m.description;
    }
    auto w = evaluate_pairs(pairs, *model, sched, cfg, scorer_from_string(a.est.scorer), workers);
    rep.winoground.push_back(w);
  } else if (!a.scale_fixture) {
    throw ParameterError("oracle data directories hold no image pairs; use --scale-fixture");
  }
  if (a.scale_fixture) {
    for (auto& w : evaluate_scale_fixture(cfg, a.fixture_pairs, kScaleFixtureWorld, workers)) rep.winoground.push_back(w);
  }
  const fs::path out = a.out.empty() ? fs::path(a.data) / "winoground" : fs::path(a.out);
  write_report(out, rep);
  for (const auto& w : rep.winoground) {
    std::cout << w.fixture << " " << w.scorer << ": image " << format_pct(100 * w.scores.image_score) << "  text "
              << format_pct(100 * w.scores.text_score) << "  group " << format_pct(100 * w.scores.group_score)
              << "\n";
  }
  return kExitOk;
}

// ---- ablate -------------------------------------------------------------------------

struct AblateArgs {
  std::string data = "data";
  std::string out;
  std::string checkpoint;
  bool oracle = false;
  bool force = false;
  std::string axis = "T";
  std::vector<std::string> values;
  EstimatorFlags est;
};

int cmd_ablate(const Common& common, const AblateArgs& a) {
  const DataDir d = load_data_dir(a.data, true);
  const RunConfig cfg = a.est.apply(d.config);
  const auto records = load_suites(a.data, d, a.force);
  if (records.empty()) throw DataError("no examples found in " + a.data);
  const auto m = load_model(a.checkpoint, a.oracle, d, records, a.force);
  check_model_fit(m, records.front().example.image.pixels.size(), cfg, a.force);
  const auto axis = ablation_axis_from_string(a.axis);
  const auto table = ablation_sweep(axis, a.values, cfg, records, *m.model, a.est.options(), common.resolve_workers());

  EvalReport rep;
  rep.run_id = make_run_id();
  rep.config_hash = cfg.config_hash();
  rep.config = cfg.canonical_json();
  rep.schedule = cfg.schedule.build().to_json();
  rep.model = m.description;
  rep.scorer = a.est.scorer;
  rep.ablations.push_back(table);
  const fs::path out = a.out.empty() ? fs::path(a.data) / ("ablate_" + a.axis) : fs::path(a.out);
  write_report(out, rep);
  std::cout << to_csv(table);
  return kExitOk;
}

// ---- report -------------------------------------------------------------------------

struct ReportArgs {
  std::string run;
  std::string compare;
};

EvalReport read_report(const fs::path& dir) {
  std::ifstream in(dir / "report.json");
  if (!in) throw DataError("missing " + (dir / "report.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report.json: ") + e.what());
  }
  return report_from_json(j);
}

int cmd_report(const ReportArgs& a) {
  EvalReport rep = read_report(a.run);
  std::cout << "run " << rep.run_id << "  configHash " << rep.config_hash.substr(0, 12) << "\n";
  if (!rep.tasks.empty()) print_tasks(std::cout, rep.tasks);
  for (const auto& w : rep.winoground) {
    std::cout << "winoground " << w.fixture << " " << w.scorer << ": image " << format_pct(100 * w.scores.image_score)
              << " text " << format_pct(100 * w.scores.text_score) << "\n";
  }
  for (const auto& t : rep.ablations) std::cout << to_csv(t);
  if (rep.gap) {
    std::cout << "jensen gap (per trial): [" << rep.gap->min_gap << ", " << rep.gap->max_gap << "] over "
              << rep.gap->count << " estimates\n";
  }
  if (!a.compare.empty()) {
    const EvalReport other = read_report(a.compare);
    const auto pa = read_predictions(fs::path(a.run) / "predictions.jsonl");
    const auto pb = read_predictions(fs::path(a.compare) / "predictions.jsonl");
    rep.votes = votes_by_task(pa, pb);
    std::cout << "votes (A = " << a.run << ", B = " << a.compare << ")\n";
    for (const auto& [task, v] : rep.votes) {
      std::cout << "  " << task << ": onlyA " << v.only_a << " onlyB " << v.only_b << " both " << v.both
                << " neither " << v.neither << "\n";
    }
    std::vector<double> xa, xb;
    for (const auto& t : rep.tasks) {
      for (const auto& u : other.tasks) {
        if (u.task == t.task) {
          xa.push_back(t.accuracy_mean_pct);
          xb.push_back(u.accuracy_mean_pct);
        }
      }
    }
    nlohmann::ordered_json cmp;
    cmp["runA"] = rep.run_id;
    cmp["runB"] = other.run_id;
    nlohmann::ordered_json votes;
    for (const auto& [task, v] : rep.votes) votes[task] = to_json(v);
    cmp["votes"] = votes;
    try {
      const double rho = spearman_rho(xa, xb);
      cmp["spearmanTaskAccuracy"] = rho;
      std::cout << "spearman rho of per-task accuracies: " << rho << "\n";
    } catch (const ParameterError& e) {
      cmp["spearmanTaskAccuracy"] = nullptr;
      std::cout << "spearman rho undefined: " << e.what() << "\n";
    }
    write_text(fs::path(a.run) / "comparison.json", cmp.dump(2) + "\n");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SelfEval: likelihood-based image-text matching with diffusion denoisers"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--workers", common.workers, "worker threads (overrides SELFEVAL_WORKERS)")
      ->check(CLI::PositiveNumber);
  app.add_option("--config", common.config_path, "run configuration JSON");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write task suites, pairs, training data and a manifest");
  g->add_option("--out", gen.out, "output directory");
  g->add_option("--seed", gen.seed, "master seed");
  g->add_option("--suite-size", gen.suite_size, "examples per task and repeat");
  g->add_option("--repeats", gen.repeats, "repeats (seeds s, s+1, ...)");
  g->add_option("--pairs", gen.pairs, "winoground pairs");
  g->add_option("--train-size", gen.train_size, "training samples");
  g->add_option("--image-size", gen.image_size, "image side in pixels");
  g->add_option("--tasks", gen.tasks, "subset of tasks")->delimiter(',');
  g->add_flag("--oracle", gen.oracle, "write Gaussian-oracle suites instead of rendered images");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the MLP denoiser");
  t->add_option("--data", tr.data, "data directory");
  t->add_option("--out", tr.out, "output directory for model.ckpt");
  t->add_option("--epochs", tr.epochs, "epochs to run");
  t->add_option("--lr", tr.lr, "learning rate");
  t->add_option("--resume", tr.resume, "continue from this checkpoint");
  t->add_flag("--force", tr.force, "accept configHash mismatches");

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "classify every suite example and write a report");
  e->add_option("--data", ev.data, "data directory");
  e->add_option("--out", ev.out, "report directory");
  e->add_option("--checkpoint", ev.checkpoint, "trained model");
  e->add_flag("--oracle", ev.oracle, "use the analytic Gaussian-oracle denoiser");
  e->add_flag("--force", ev.force, "accept configHash mismatches");
  e->add_flag("--no-estimates", ev.no_estimates, "skip estimates.jsonl");
  ev.est.add_to(e);

  WinoArgs wa;
  auto* w = app.add_subcommand("winoground", "image/text scores on paired contrasts");
  w->add_option("--data", wa.data, "data directory");
  w->add_option("--out", wa.out, "report directory");
  w->add_option("--checkpoint", wa.checkpoint, "trained model");
  w->add_flag("--oracle", wa.oracle, "use the rendered-template analytic denoiser");
  w->add_flag("--force", wa.force, "accept configHash mismatches");
  w->add_flag("--scale-fixture", wa.scale_fixture, "also score the two-scale fixture with both scorers");
  w->add_option("--fixture-pairs", wa.fixture_pairs, "pairs in the two-scale fixture")->check(CLI::PositiveNumber);
  wa.est.add_to(w);

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "sweep T, N or seed");
  a->add_option("--data", ab.data, "data directory");
  a->add_option("--out", ab.out, "report directory");
  a->add_option("--checkpoint", ab.checkpoint, "trained model");
  a->add_flag("--oracle", ab.oracle, "use the analytic Gaussian-oracle denoiser");
  a->add_flag("--force", ab.force, "accept configHash mismatches");
  a->add_option("--axis", ab.axis, "T | N | seed")->check(CLI::IsMember({"T", "N", "seed"}));
  a->add_option("--values", ab.values, "comma-separated values")->delimiter(',')->required();
  ab.est.add_to(a);

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "print a report; --compare adds votes and rank correlation");
  r->add_option("--run", rp.run, "report directory")->required();
  r->add_option("--compare", rp.compare, "second report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cmd_generate(common, gen);
    if (*t) return cmd_train(common, tr);
    if (*e) return cmd_evaluate(common, ev);
    if (*w) return cmd_winoground(common, wa);
    if (*a) return cmd_ablate(common, ab);
    if (*r) return cmd_report(rp);
  } catch (const ParameterError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kExitData;
  } catch (const NumericalError& err) {
    std::cerr << "numerical error: " << err.what() << "\n";
    return kExitNumerical;
  } catch (const nlohmann::json::exception& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
