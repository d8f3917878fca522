#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace corrfield {

// Deterministic random source built on splitmix64. Every stochastic step in
// the toolkit draws from an explicitly seeded Rng so that identical seeds give
// bit-identical results across runs, platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  // Independent substream derived from the *constructor* seed and a salt.
  // The result does not depend on how many values were drawn so far, which
  // keeps call sites order-independent.
  Rng fork(std::uint64_t salt) const;

  std::uint64_t next_u64();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n);

  // Standard normal via Box-Muller.
  double normal();

  // Uniformly distributed direction on the unit sphere.
  Eigen::Vector3d unit_vector();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace corrfield
