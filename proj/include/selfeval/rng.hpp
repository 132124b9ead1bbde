#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace selfeval {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A draw is a
// pure function of (key, counter), so any element of any stream can be
// computed independently of evaluation order or thread count.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key);
};

// Stream namespaces. Each consumer of randomness gets its own domain so that
// streams never overlap even when they share a seed.
enum class Domain : std::uint32_t {
  forward_noise = 1,
  reverse_noise = 2,
  elbo = 3,
  training = 4,
  init = 5,
  render = 6,
  suite = 7,
  dataset = 8,
  test = 99,
};

// One addressable stream: (seed, domain, a, b) selects the stream, the index
// selects the element inside it.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, Domain domain, std::uint32_t a = 0, std::uint32_t b = 0);

  // Four raw 32-bit words for block `block`.
  Philox4x32::Counter block(std::uint64_t block) const;

  // Uniform in (0, 1], 53-bit resolution. Element i consumes half a block.
  double uniform(std::uint64_t index) const;

  // Standard normal via Box-Muller; elements 2k and 2k+1 share one block.
  double normal(std::uint64_t index) const;

  // Writes normal(offset), normal(offset + 1), ... into out.
  void fill_normal(std::span<double> out, std::uint64_t offset = 0) const;

  // Integer in [0, n); multiply-shift on one 32-bit word.
  std::uint32_t below(std::uint32_t n, std::uint64_t index) const;

 private:
  Philox4x32::Key key_;
  std::uint32_t domain_;
  std::uint32_t a_;
  std::uint32_t b_;
};

// Sequential cursor over a CounterStream, for code that draws a variable
// number of values (rejection, shuffles). Still fully reproducible.
class StreamCursor {
 public:
  explicit StreamCursor(CounterStream stream) : stream_(stream) {}

  double uniform() { return stream_.uniform(next_++); }
  std::uint32_t below(std::uint32_t n) { return stream_.below(n, next_++); }
  double normal() { return stream_.normal(2 * next_++); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(static_cast<std::uint32_t>(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  CounterStream stream_;
  std::uint64_t next_ = 0;
};

// SplitMix64 finalizer, used to derive child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace selfeval
