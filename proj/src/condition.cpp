#include "selfeval/condition.hpp"

#include <algorithm>
#include <numeric>

#include "selfeval/errors.hpp"

namespace selfeval {

namespace {

constexpr std::array<const char*, kNumColors> kColorNames{"red", "green", "blue", "yellow"};
constexpr std::array<const char*, kNumShapes> kShapeNames{"square", "cross", "ell"};
constexpr std::array<const char*, kNumPositions> kPositionNames{"top-left", "top-right", "bottom-left",
                                                                "bottom-right"};

template <typename Enum, std::size_t N>
Enum lookup(const std::array<const char*, N>& names, const std::string& s, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (s == names[i]) return static_cast<Enum>(i);
  }
  throw DataError(std::string("unknown ") + what + " '" + s + "'");
}

constexpr int kColorBase = 0;
constexpr int kShapeBase = kColorBase + kNumColors;
constexpr int kCountBase = kShapeBase + kNumShapes;
constexpr int kPositionBase = kCountBase + kNumCounts;

}  // namespace

std::string to_string(Color c) { return kColorNames.at(static_cast<std::size_t>(c)); }
std::string to_string(Shape s) { return kShapeNames.at(static_cast<std::size_t>(s)); }
std::string to_string(Position p) { return kPositionNames.at(static_cast<std::size_t>(p)); }
Color color_from_string(const std::string& s) { return lookup<Color>(kColorNames, s, "color"); }
Shape shape_from_string(const std::string& s) { return lookup<Shape>(kShapeNames, s, "shape"); }
Position position_from_string(const std::string& s) { return lookup<Position>(kPositionNames, s, "position"); }

std::vector<std::string> vocabulary() {
  std::vector<std::string> v;
  for (auto n : kColorNames) v.emplace_back(n);
  for (auto n : kShapeNames) v.emplace_back(n);
  for (int c = kMinCount; c <= kMaxCount; ++c) v.push_back(std::to_string(c));
  for (auto n : kPositionNames) v.emplace_back(n);
  v.emplace_back("<pad>");
  return v;
}

Condition::Condition(std::vector<ObjectSpec> objects, std::vector<int> token_order)
    : objects_(std::move(objects)), order_(std::move(token_order)) {
  if (objects_.empty() || objects_.size() > static_cast<std::size_t>(kMaxObjects)) {
    throw ParameterError("condition: need 1 or 2 objects");
  }
  for (const auto& o : objects_) {
    if (o.count < kMinCount || o.count > kMaxCount) throw ParameterError("condition: count out of range");
  }
  const std::size_t n = num_tokens();
  if (order_.empty()) {
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
  }
  std::vector<int> sorted = order_;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> identity(n);
  std::iota(identity.begin(), identity.end(), 0);
  if (sorted != identity) throw ParameterError("condition: token order is not a permutation");
}

bool Condition::is_canonical() const { return std::is_sorted(order_.begin(), order_.end()); }

std::vector<int> Condition::tokens() const {
  std::vector<int> t;
  t.reserve(num_tokens());
  for (const auto& o : objects_) {
    t.push_back(kColorBase + static_cast<int>(o.color));
    t.push_back(kShapeBase + static_cast<int>(o.shape));
    t.push_back(kCountBase + o.count - kMinCount);
    t.push_back(kPositionBase + static_cast<int>(o.position));
  }
  return t;
}

std::array<int, kMaxTokens> Condition::slots() const {
  std::array<int, kMaxTokens> s;
  s.fill(kPadToken);
  const auto t = tokens();
  for (std::size_t i = 0; i < order_.size(); ++i) s[i] = t[static_cast<std::size_t>(order_[i])];
  return s;
}

std::vector<double> Condition::embedding() const {
  std::vector<double> e(kEmbeddingDim, 0.0);
  const auto s = slots();
  for (std::size_t i = 0; i < s.size(); ++i) e[i * kVocabularySize + static_cast<std::size_t>(s[i])] = 1.0;
  return e;
}

std::string Condition::id() const {
  std::string out;
  for (std::size_t i = 0; i < objects_.size(); ++i) {
    const auto& o = objects_[i];
    if (i) out += " & ";
    out += to_string(o.color) + " " + to_string(o.shape) + " x" + std::to_string(o.count) + " " +
           to_string(o.position);
  }
  if (!is_canonical()) {
    out += " [order";
    for (int k : order_) out += " " + std::to_string(k);
    out += "]";
  }
  return out;
}

nlohmann::ordered_json Condition::to_json() const {
  nlohmann::ordered_json j;
  j["objects"] = nlohmann::ordered_json::array();
  for (const auto& o : objects_) {
    nlohmann::ordered_json oj;
    oj["color"] = to_string(o.color);
    oj["shape"] = to_string(o.shape);
    oj["count"] = o.count;
    oj["position"] = to_string(o.position);
    j["objects"].push_back(oj);
  }
  j["order"] = order_;
  return j;
}

Condition Condition::from_json(const nlohmann::json& j) {
  try {
    std::vector<ObjectSpec> objects;
    for (const auto& oj : j.at("objects")) {
      objects.push_back({color_from_string(oj.at("color").get<std::string>()),
                         shape_from_string(oj.at("shape").get<std::string>()), oj.at("count").get<int>(),
                         position_from_string(oj.at("position").get<std::string>())});
    }
    std::vector<int> order;
    if (j.contains("order")) order = j.at("order").get<std::vector<int>>();
    return Condition(std::move(objects), std::move(order));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("condition: ") + e.what());
  } catch (const ParameterError& e) {
    throw DataError(e.what());
  }
}

}  // namespace selfeval
