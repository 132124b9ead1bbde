#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace selfeval {

enum class Color { red, green, blue, yellow };
enum class Shape { square, cross, ell };
enum class Position { top_left, top_right, bottom_left, bottom_right };

inline constexpr int kNumColors = 4;
inline constexpr int kNumShapes = 3;
inline constexpr int kMinCount = 1;
inline constexpr int kMaxCount = 4;
inline constexpr int kNumCounts = kMaxCount - kMinCount + 1;
inline constexpr int kNumPositions = 4;

std::string to_string(Color c);
std::string to_string(Shape s);
std::string to_string(Position p);
Color color_from_string(const std::string& s);
Shape shape_from_string(const std::string& s);
Position position_from_string(const std::string& s);

struct ObjectSpec {
  Color color = Color::red;
  Shape shape = Shape::square;
  int count = 1;
  Position position = Position::top_left;

  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

// Token vocabulary shared by every slot of the embedding: colors, shapes,
// counts, positions, then a padding token.
inline constexpr int kTokensPerObject = 4;
inline constexpr int kMaxObjects = 2;
inline constexpr int kMaxTokens = kTokensPerObject * kMaxObjects;
inline constexpr int kVocabularySize = kNumColors + kNumShapes + kNumCounts + kNumPositions + 1;
inline constexpr int kPadToken = kVocabularySize - 1;
inline constexpr std::size_t kEmbeddingDim = static_cast<std::size_t>(kMaxTokens) * kVocabularySize;

std::vector<std::string> vocabulary();

// One or two objects plus the order in which their attribute tokens are fed
// to the model. The canonical order is (color, shape, count, position) per
// object; text-corruption distractors permute it.
class Condition {
 public:
  Condition() = default;
  explicit Condition(std::vector<ObjectSpec> objects, std::vector<int> token_order = {});

  const std::vector<ObjectSpec>& objects() const { return objects_; }
  const std::vector<int>& token_order() const { return order_; }
  std::size_t num_tokens() const { return objects_.size() * kTokensPerObject; }
  bool is_canonical() const;

  Condition with_order(std::vector<int> order) const { return Condition(objects_, std::move(order)); }
  Condition canonical() const { return Condition(objects_); }

  // Canonical token ids before reordering.
  std::vector<int> tokens() const;
  // Token ids in feed order, padded to kMaxTokens.
  std::array<int, kMaxTokens> slots() const;
  // Concatenated one-hots over the slots, length kEmbeddingDim.
  std::vector<double> embedding() const;

  // Stable human-readable identifier; differs whenever objects or order differ.
  std::string id() const;

  nlohmann::ordered_json to_json() const;
  static Condition from_json(const nlohmann::json& j);

  friend bool operator==(const Condition&, const Condition&) = default;

 private:
  std::vector<ObjectSpec> objects_;
  std::vector<int> order_;  // always a full permutation of 0..num_tokens-1
};

}  // namespace selfeval
