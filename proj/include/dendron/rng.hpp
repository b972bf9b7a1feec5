#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace dendron {

/// Seeded generator with platform-independent derived distributions.
/// std::*_distribution output is implementation-defined, so the uniform and
/// normal draws are computed here from the raw mt19937_64 stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform01();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();     // N(0, 1), Box-Muller
  std::size_t below(std::size_t bound);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Visiting order for one training epoch. Identity when shuffle is off;
/// otherwise a Fisher-Yates permutation keyed by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed,
                                     std::size_t epoch, bool shuffle);

}  // namespace dendron
