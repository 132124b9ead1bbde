#include "selfeval/config.hpp"

#include <cstdlib>
#include <fstream>

#include "selfeval/errors.hpp"
#include "selfeval/hashing.hpp"
#include "selfeval/rng.hpp"

namespace selfeval {

nlohmann::ordered_json RunConfig::canonical_json() const {
  nlohmann::ordered_json j;
  j["masterSeed"] = master_seed;
  j["schedule"] = {{"kind", to_string(schedule.kind)},
                   {"T", schedule.steps},
                   {"betaMin", schedule.beta_min},
                   {"betaMax", schedule.beta_max}};
  j["estimator"] = {{"N", estimator.trials},
                    {"T", estimator.steps},
                    {"latentMode", to_string(estimator.latent_mode)},
                    {"aggregation", to_string(estimator.aggregation)}};
  nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
  for (auto t : benchmark.tasks) tasks.push_back(to_string(t));
  j["benchmark"] = {{"imageSize", benchmark.image_size},
                    {"suiteSize", benchmark.suite_size},
                    {"repeats", benchmark.repeats},
                    {"tasks", tasks},
                    {"winogroundPairs", benchmark.winoground_pairs},
                    {"trainSize", benchmark.train_size},
                    {"oracleScale", benchmark.oracle.scale},
                    {"oracleVar", benchmark.oracle.class_var},
                    {"templateVar", benchmark.template_var}};
  j["trainer"] = {{"epochs", trainer.epochs},
                  {"learningRate", trainer.learning_rate},
                  {"momentum", trainer.momentum},
                  {"batchSize", trainer.batch_size},
                  {"clipNorm", trainer.clip_norm},
                  {"lrSchedule", trainer.cosine_decay ? "cosine" : "constant"},
                  {"hidden", trainer.shape.hidden},
                  {"timeFeatures", trainer.shape.time_features}};
  return j;
}

std::string RunConfig::config_hash() const { return sha256_hex(canonical_json().dump()); }

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.master_seed = j.value("masterSeed", c.master_seed);
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      c.schedule.kind = schedule_kind_from_string(s.value("kind", std::string("linear")));
      c.schedule.steps = s.value("T", c.schedule.steps);
      c.schedule.beta_min = s.value("betaMin", default_beta_min(c.schedule.steps));
      c.schedule.beta_max = s.value("betaMax", default_beta_max(c.schedule.steps));
    }
    c.estimator.steps = c.schedule.steps;
    if (j.contains("estimator")) {
      const auto& e = j.at("estimator");
      c.estimator.trials = e.value("N", c.estimator.trials);
      c.estimator.steps = e.value("T", c.schedule.steps);
      c.estimator.latent_mode = latent_mode_from_string(e.value("latentMode", to_string(c.estimator.latent_mode)));
      c.estimator.aggregation = aggregation_from_string(e.value("aggregation", to_string(c.estimator.aggregation)));
    }
    if (j.contains("benchmark")) {
      const auto& b = j.at("benchmark");
      auto& p = c.benchmark;
      p.image_size = b.value("imageSize", p.image_size);
      p.suite_size = b.value("suiteSize", p.suite_size);
      p.repeats = b.value("repeats", p.repeats);
      if (b.contains("tasks")) {
        p.tasks.clear();
        for (const auto& t : b.at("tasks")) p.tasks.push_back(task_from_string(t.get<std::string>()));
      }
      p.winoground_pairs = b.value("winogroundPairs", p.winoground_pairs);
      p.train_size = b.value("trainSize", p.train_size);
      p.oracle.scale = b.value("oracleScale", p.oracle.scale);
      p.oracle.class_var = b.value("oracleVar", p.oracle.class_var);
      p.template_var = b.value("templateVar", p.template_var);
    }
    if (j.contains("trainer")) {
      const auto& t = j.at("trainer");
      auto& p = c.trainer;
      p.epochs = t.value("epochs", p.epochs);
      p.learning_rate = t.value("learningRate", p.learning_rate);
      p.momentum = t.value("momentum", p.momentum);
      p.batch_size = t.value("batchSize", p.batch_size);
      p.clip_norm = t.value("clipNorm", p.clip_norm);
      const std::string sched = t.value("lrSchedule", std::string(p.cosine_decay ? "cosine" : "constant"));
      if (sched != "cosine" && sched != "constant") throw DataError("config: unknown lrSchedule '" + sched + "'");
      p.cosine_decay = sched == "cosine";
      if (t.contains("hidden")) p.shape.hidden = t.at("hidden").get<std::vector<std::size_t>>();
      p.shape.time_features = t.value("timeFeatures", p.shape.time_features);
    }
    if (j.contains("outputDir")) c.output_dir = j.at("outputDir").get<std::string>();
    if (j.contains("workers")) c.workers = j.at("workers").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  schedule.build();
  estimator.validate();
  if (estimator.steps != schedule.steps) {
    throw ParameterError("config: estimator T (" + std::to_string(estimator.steps) + ") must equal schedule T (" +
                         std::to_string(schedule.steps) + ")");
  }
  if (benchmark.suite_size < 1 || benchmark.repeats < 1) throw ParameterError("config: suite size and repeats must be >= 1");
  if (benchmark.tasks.empty()) throw ParameterError("config: no tasks selected");
  if (benchmark.winoground_pairs < 1) throw ParameterError("config: winogroundPairs must be >= 1");
  if (benchmark.train_size < 1) throw ParameterError("config: trainSize must be >= 1");
  if (benchmark.image_size < 2 || benchmark.image_size % 2) throw ParameterError("config: imageSize must be even");
  if (!(benchmark.oracle.class_var > 0) || !(benchmark.template_var > 0)) {
    throw ParameterError("config: oracle variances must be positive");
  }
  if (trainer.epochs < 0 || trainer.batch_size == 0) throw ParameterError("config: invalid trainer settings");
  if (workers == 0) throw ParameterError("config: workers must be >= 1");
}

std::vector<std::uint64_t> RunConfig::repeat_seeds() const {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < benchmark.repeats; ++i) s.push_back(master_seed + static_cast<std::uint64_t>(i));
  return s;
}

EstimatorConfig RunConfig::estimator_for(std::uint64_t repeat_seed) const {
  EstimatorConfig e = estimator;
  e.seed = mix_seed(repeat_seed, 0xE57);
  return e;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("config file " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << cfg.canonical_json().dump(2) << "\n";
}

std::size_t workers_from_env() {
  const char* v = std::getenv("SELFEVAL_WORKERS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ParameterError(std::string("SELFEVAL_WORKERS must be a positive integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

}  // namespace selfeval
