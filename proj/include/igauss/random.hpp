#pragma once

#include <cstdint>
#include <random>

#include "igauss/types.hpp"

namespace igauss {

// SplitMix64 finalizer; used to derive well-separated child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Single-consumer pseudo-random stream. Parallel callers must derive their
/// own stream with split(); a stream is never shared between threads.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) : seed_(seed), engine_(mix_seed(seed)) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream labelled by `index`. Depends only on the parent
  /// seed and the index, never on how much of the parent has been consumed.
  RandomStream split(std::uint64_t index) const {
    return RandomStream(mix_seed(seed_ ^ mix_seed(index + 0x5851f42d4c957f2dULL)));
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  Vector normal_vector(Eigen::Index d) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = normal();
    return v;
  }

  /// n x d matrix of i.i.d. standard normals, filled row by row.
  Matrix normal_matrix(Eigen::Index n, Eigen::Index d) {
    Matrix m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) m(i, j) = normal();
    return m;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace igauss
