#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "seqtag/array.hpp"

namespace seqtag {

// Seeded PRNG. Draws are taken straight from the engine (std::mt19937_64 is
// fully specified by the standard) rather than through the distribution
// classes, whose output is implementation-defined; identical seeds therefore
// give identical streams on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    return static_cast<int>(engine_() % static_cast<uint64_t>(n));
  }

  Array uniform_array(std::vector<int> shape, double lo, double hi) {
    Array a(std::move(shape));
    for (double& v : a.data) v = uniform(lo, hi);
    return a;
  }

  // Derived generator for an independent stream (per-iteration seeds).
  Rng fork(uint64_t stream) {
    return Rng(engine_() ^ (stream * 0x9e3779b97f4a7c15ull));
  }

  // Seeded in-place Fisher-Yates; std::shuffle is implementation-defined.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Weight init: uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Array init_weight(Rng& rng, int rows, int cols) {
  double limit = std::sqrt(6.0 / (rows + cols));
  return rng.uniform_array({rows, cols}, -limit, limit);
}

// Embedding rows not covered by a pretrained file: uniform in +-sqrt(3/dim),
// variance-matched to typical pretrained tables.
inline void init_embedding_row(Rng& rng, Array& table, int row) {
  double limit = std::sqrt(3.0 / table.cols());
  for (int j = 0; j < table.cols(); ++j) table(row, j) = rng.uniform(-limit, limit);
}

}  // namespace seqtag
