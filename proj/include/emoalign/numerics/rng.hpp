#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace emoalign::numerics {

/// Seeded generator with distributions implemented locally, so draws are
/// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();
  /// Index drawn from unnormalized non-negative weights.
  std::size_t categorical(const std::vector<double>& weights);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Deterministic seed for a sub-stream, e.g. derive_seed(base, sample_index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace emoalign::numerics
