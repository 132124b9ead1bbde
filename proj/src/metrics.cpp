#include "selfeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "selfeval/errors.hpp"

namespace selfeval {

TaskResult make_task_result(std::string task, std::span<const double> accuracies_pct, double chance_pct,
                            std::vector<std::uint64_t> seeds) {
  if (accuracies_pct.empty()) throw ParameterError("task result: no repeats");
  if (!(chance_pct > 0.0 && chance_pct < 100.0)) throw ParameterError("task result: chance must be in (0, 100)");
  TaskResult r;
  r.task = std::move(task);
  r.chance_pct = chance_pct;
  r.seeds = std::move(seeds);
  r.repeat_accuracies_pct.assign(accuracies_pct.begin(), accuracies_pct.end());
  const double n = static_cast<double>(accuracies_pct.size());
  r.accuracy_mean_pct = std::accumulate(accuracies_pct.begin(), accuracies_pct.end(), 0.0) / n;
  if (accuracies_pct.size() > 1) {
    double ss = 0.0;
    for (double a : accuracies_pct) ss += (a - r.accuracy_mean_pct) * (a - r.accuracy_mean_pct);
    r.accuracy_std_pct = std::sqrt(ss / (n - 1.0));
  }
  r.delta_pct = chance_delta(r);
  return r;
}

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> correct) {
  if (predictions.size() != correct.size()) {
    throw ParameterError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(correct.size()) + " labels");
  }
  if (predictions.empty()) throw ParameterError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == correct[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double chance_delta(const TaskResult& r) { return r.accuracy_mean_pct - r.chance_pct; }

VoteTally votes_from_predictions(std::span<const std::size_t> preds_a, std::span<const std::size_t> preds_b,
                                 std::span<const std::size_t> correct) {
  if (preds_a.size() != correct.size() || preds_b.size() != correct.size()) {
    throw ParameterError("votes: prediction and label lengths differ");
  }
  VoteTally v;
  for (std::size_t i = 0; i < correct.size(); ++i) {
    const bool a = preds_a[i] == correct[i];
    const bool b = preds_b[i] == correct[i];
    if (a && b) ++v.both;
    else if (a) ++v.only_a;
    else if (b) ++v.only_b;
    else ++v.neither;
  }
  return v;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ParameterError("spearman: length mismatch");
  if (a.size() < 2) throw ParameterError("spearman: need at least two observations");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) throw ParameterError("spearman: NaN input");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw ParameterError("spearman: undefined for constant input (zero rank variance)");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::string format_pct(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

double round2(double v) { return std::stod(format_pct(v)); }

nlohmann::ordered_json to_json(const TaskResult& r) {
  nlohmann::ordered_json j;
  j["task"] = r.task;
  j["accuracyMeanPct"] = round2(r.accuracy_mean_pct);
  j["accuracyStdPct"] = round2(r.accuracy_std_pct);
  j["chancePct"] = round2(r.chance_pct);
  j["deltaPct"] = round2(r.delta_pct);
  j["seeds"] = r.seeds;
  nlohmann::ordered_json reps = nlohmann::ordered_json::array();
  for (double a : r.repeat_accuracies_pct) reps.push_back(round2(a));
  j["repeatAccuraciesPct"] = reps;
  return j;
}

TaskResult task_result_from_json(const nlohmann::json& j) {
  TaskResult r;
  r.task = j.at("task").get<std::string>();
  r.accuracy_mean_pct = j.at("accuracyMeanPct").get<double>();
  r.accuracy_std_pct = j.at("accuracyStdPct").get<double>();
  r.chance_pct = j.at("chancePct").get<double>();
  r.delta_pct = j.at("deltaPct").get<double>();
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("repeatAccuraciesPct")) r.repeat_accuracies_pct = j.at("repeatAccuraciesPct").get<std::vector<double>>();
  return r;
}

nlohmann::ordered_json to_json(const VoteTally& v) {
  return {{"onlyA", v.only_a}, {"onlyB", v.only_b}, {"both", v.both}, {"neither", v.neither}};
}

std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::steps: return "T";
    case AblationAxis::trials: return "N";
    case AblationAxis::seed: return "seed";
  }
  return "T";
}

AblationAxis ablation_axis_from_string(const std::string& s) {
  if (s == "T") return AblationAxis::steps;
  if (s == "N") return AblationAxis::trials;
  if (s == "seed") return AblationAxis::seed;
  throw ParameterError("unknown ablation axis '" + s + "' (expected T, N or seed)");
}

nlohmann::ordered_json to_json(const AblationTable& t) {
  nlohmann::ordered_json j;
  j["axis"] = to_string(t.axis);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
    for (const auto& tr : r.tasks) tasks.push_back(to_json(tr));
    rows.push_back({{"value", r.value}, {"tasks", tasks}});
  }
  j["rows"] = rows;
  return j;
}

std::string to_csv(const AblationTable& t) {
  std::ostringstream out;
  out << "axis,value,task,accuracyMeanPct,accuracyStdPct,chancePct,deltaPct\n";
  for (const auto& r : t.rows) {
    for (const auto& tr : r.tasks) {
      out << to_string(t.axis) << ',' << r.value << ',' << tr.task << ',' << format_pct(tr.accuracy_mean_pct) << ','
          << format_pct(tr.accuracy_std_pct) << ',' << format_pct(tr.chance_pct) << ',' << format_pct(tr.delta_pct)
          << '\n';
    }
  }
  return out.str();
}

std::string tasks_to_csv(std::span<const TaskResult> tasks) {
  std::ostringstream out;
  out << "task,accuracyMeanPct,accuracyStdPct,chancePct,deltaPct,seeds\n";
  for (const auto& tr : tasks) {
    out << tr.task << ',' << format_pct(tr.accuracy_mean_pct) << ',' << format_pct(tr.accuracy_std_pct) << ','
        << format_pct(tr.chance_pct) << ',' << format_pct(tr.delta_pct) << ',';
    for (std::size_t i = 0; i < tr.seeds.size(); ++i) out << (i ? ";" : "") << tr.seeds[i];
    out << '\n';
  }
  return out.str();
}

}  // namespace selfeval
