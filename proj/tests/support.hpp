#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "selfeval/condition.hpp"
#include "selfeval/denoiser.hpp"
#include "selfeval/schedule.hpp"

namespace testsupport {

using selfeval::Vec;

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::path(SELFEVAL_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

// Runs a shell command, capturing stdout+stderr.
inline CommandResult run(const std::string& cmd) {
  CommandResult r;
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::string cli(const std::string& args) { return std::string(SELFEVAL_BIN) + " " + args; }

inline selfeval::Condition cond(selfeval::Color c, selfeval::Shape s = selfeval::Shape::square, int count = 1,
                                selfeval::Position p = selfeval::Position::top_left) {
  return selfeval::Condition({{c, s, count, p}});
}

// Denoiser with an arbitrary per-step rule, for hand-computed oracles.
class LambdaDenoiser final : public selfeval::Denoiser {
 public:
  using Rule = std::function<void(std::span<const double> x_t, int t, const selfeval::Condition& c,
                                  std::span<double> mean, double& variance, std::span<double> eps)>;
  LambdaDenoiser(std::size_t dim, Rule rule) : dim_(dim), rule_(std::move(rule)) {}
  std::size_t dim() const override { return dim_; }
  void predict(std::span<const double> latents, std::span<const int> steps, const selfeval::Condition& c,
               const selfeval::NoiseSchedule&, selfeval::ReverseBatch& out) const override {
    out.resize(steps.size(), dim_);
    for (std::size_t r = 0; r < steps.size(); ++r) {
      rule_(latents.subspan(r * dim_, dim_), steps[r], c, std::span(out.mean).subspan(r * dim_, dim_),
            out.variance[r], std::span(out.epsilon).subspan(r * dim_, dim_));
    }
  }

 private:
  std::size_t dim_;
  Rule rule_;
};

// Brute-force average ranks: rank = 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) less += 1;
      if (w == v[i]) equal += 1;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double brute_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  long double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

inline double brute_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return brute_pearson(brute_ranks(a), brute_ranks(b));
}

}  // namespace testsupport
