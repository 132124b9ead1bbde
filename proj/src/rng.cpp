#include "selfeval/rng.hpp"

#include <cmath>
#include <numbers>

namespace selfeval {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline Philox4x32::Counter round(const Philox4x32::Counter& c, const Philox4x32::Key& k) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return static_cast<double>(bits + 1) * 0x1.0p-53;
}

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter ctr, Key key) {
  ctr = round(ctr, key);
  for (int r = 1; r < 10; ++r) {
    key[0] += kWeyl0;
    key[1] += kWeyl1;
    ctr = round(ctr, key);
  }
  return ctr;
}

CounterStream::CounterStream(std::uint64_t seed, Domain domain, std::uint32_t a, std::uint32_t b)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      domain_(static_cast<std::uint32_t>(domain)),
      a_(a),
      b_(b) {}

Philox4x32::Counter CounterStream::block(std::uint64_t block) const {
  // Top bits of the block index share the domain word; 2^40 blocks per stream.
  const auto lo = static_cast<std::uint32_t>(block);
  const auto hi = static_cast<std::uint32_t>(block >> 32) & 0xFFu;
  return Philox4x32::generate({lo, a_, b_, domain_ | (hi << 24)}, key_);
}

double CounterStream::uniform(std::uint64_t index) const {
  const auto w = block(index / 2);
  return index % 2 == 0 ? to_unit(w[0], w[1]) : to_unit(w[2], w[3]);
}

double CounterStream::normal(std::uint64_t index) const {
  const auto w = block(index / 2);
  const double u1 = to_unit(w[0], w[1]);
  const double u2 = to_unit(w[2], w[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return index % 2 == 0 ? r * std::cos(theta) : r * std::sin(theta);
}

void CounterStream::fill_normal(std::span<double> out, std::uint64_t offset) const {
  std::size_t i = 0;
  if (offset % 2 == 1 && !out.empty()) {
    out[0] = normal(offset);
    i = 1;
  }
  for (; i + 1 < out.size(); i += 2) {
    const auto w = block((offset + i) / 2);
    const double u1 = to_unit(w[0], w[1]);
    const double u2 = to_unit(w[2], w[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    out[i] = r * std::cos(theta);
    out[i + 1] = r * std::sin(theta);
  }
  if (i < out.size()) out[i] = normal(offset + i);
}

std::uint32_t CounterStream::below(std::uint32_t n, std::uint64_t index) const {
  const auto w = block(index / 4);
  const std::uint32_t word = w[index % 4];
  return static_cast<std::uint32_t>((static_cast<std::uint64_t>(word) * n) >> 32);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace selfeval
