#include "attnlip/random.hpp"

#include <cmath>
#include <numbers>

#include "attnlip/error.hpp"

namespace attnlip {

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw DomainError("uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(engine_());
  // Rejection removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  const double u1 = uniform_positive();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(theta);
  has_spare_ = true;
  return radius * std::cos(theta);
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
  return m;
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Eigen::VectorXd Rng::unit_sphere(Eigen::Index n) {
  Eigen::VectorXd v;
  double norm = 0.0;
  do {
    v = normal_vector(n);
    norm = v.norm();
  } while (norm == 0.0);
  return v / norm;
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw DomainError("gamma: shape must be positive");
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a) for a < 1.
    return gamma(shape + 1.0) * std::pow(uniform_positive(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_positive();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

Eigen::VectorXd Rng::dirichlet(Eigen::Index n, double alpha) {
  if (n < 1) throw DimensionError("dirichlet: n must be positive");
  Eigen::VectorXd v(n);
  double total = 0.0;
  do {
    for (Eigen::Index i = 0; i < n; ++i) {
      // Exponential spacings for alpha = 1 keep the common case exact and fast.
      v(i) = alpha == 1.0 ? -std::log(uniform_positive()) : gamma(alpha);
    }
    total = v.sum();
  } while (!(total > 0.0));
  v /= total;
  // Absorb the normalisation rounding into the largest entry so the sum is
  // as close to 1 as double arithmetic allows.
  Eigen::Index arg;
  v.maxCoeff(&arg);
  v(arg) += 1.0 - v.sum();
  return v;
}

}  // namespace attnlip
