#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mcpst {

/// xoshiro256** seeded through splitmix64. Normals use Box-Muller with the
/// second variate cached. All draws are defined here rather than through
/// <random> distributions so streams match across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  /// Uniform integer in [0, n); n > 0.
  std::size_t index(std::size_t n);

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }
  template <class T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  /// Independent stream derived from this generator's seed and a tag.
  static Rng derive(std::uint64_t seed, std::uint64_t tag);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace mcpst
