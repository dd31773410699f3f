#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace attnlip {

// Seeded generator with portable distributions.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The distributions in <random> are implementation-defined, so the
// uniform, normal and Dirichlet draws are implemented here: uniform doubles
// use the top 53 bits of one engine output and normals use the Box-Muller
// transform. Identical seeds therefore give identical streams on every
// platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform();

  // Uniform on (0, 1]; safe to pass to log().
  double uniform_positive() { return 1.0 - uniform(); }

  // Uniform integer on [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  double normal();

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::VectorXd normal_vector(Eigen::Index n);

  // Uniform on the unit sphere in R^n.
  Eigen::VectorXd unit_sphere(Eigen::Index n);

  // Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);

  // Dirichlet(alpha, ..., alpha) on the n-simplex. alpha = 1 is uniform.
  Eigen::VectorXd dirichlet(Eigen::Index n, double alpha = 1.0);

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

// Independent stream seed for item `index` of a run seeded with `seed`
// (SplitMix64 finaliser over both words). Lets sweeps seed each instance
// separately so results do not depend on evaluation order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace attnlip
