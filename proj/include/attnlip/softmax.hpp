#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "attnlip/linalg.hpp"

namespace attnlip {

// A probability vector: nonnegative entries summing to 1 within 1e-12.
// Construction validates and never renormalises.
class SimplexVector {
 public:
  static constexpr double kSumTolerance = 1e-12;

  explicit SimplexVector(Vector probs);

  const Vector& probs() const { return probs_; }
  Eigen::Index size() const { return probs_.size(); }
  double operator[](Eigen::Index i) const { return probs_(i); }

  // Indices of the entries in descending order of value; ties keep their
  // original order.
  const std::vector<Eigen::Index>& order() const { return order_; }

  // x_(k) for k = 1..n, and 0 for k = n + 1.
  double ordinal(std::size_t k) const;

 private:
  Vector probs_;
  std::vector<Eigen::Index> order_;
};

// Numerically stable softmax (max subtraction).
SimplexVector softmax(const Vector& z);

// Unvalidated row softmax used on hot paths where the input is known finite.
Vector softmax_values(const Vector& z);

// diag(p) - p p^T.
Matrix softmax_jacobian_matrix(const SimplexVector& p);

// g_k(p) = x_(k) (1 - x_(k) + x_(k+1)) for 1 <= k <= n, with x_(n+1) = 0.
double g_k(const SimplexVector& p, std::size_t k);

// g_1 .. g_n in order.
Vector g_values(const SimplexVector& p);

// Singular values of diag(p) - p p^T, descending.
Vector softmax_jacobian_singular_values(const SimplexVector& p);

struct InterlacingSandwich {
  Vector ordinals;         // x_(1) >= ... >= x_(n)
  Vector g;                // g_1 .. g_n
  Vector singular_values;  // sigma_1 >= ... >= sigma_n

  // Flattened chain x_(1), g_1, sigma_1, x_(2), g_2, sigma_2, ... .
  std::vector<double> chain() const;

  // Position in chain() of the first link that increases by more than
  // `slack`, if any.
  std::optional<std::size_t> first_violation(double slack = 1e-10) const;
  bool holds(double slack = 1e-10) const { return !first_violation(slack).has_value(); }
};

// Ordinals, g values and exact singular values (Jacobi eigensolver). Requires n >= 2.
InterlacingSandwich interlacing_sandwich(const SimplexVector& p);

// g_1(p): an upper bound on ||diag(p) - p p^T||_2 that never exceeds 1/2.
double spectral_norm_upper_bound(const SimplexVector& p);

// Roots of x (1 - x) = gamma. A probability vector with g_1 <= gamma has
// its top entry at or below `lower` or at or above `upper`.
struct BifurcationThresholds {
  double gamma = 0.0;
  double lower = 0.0;
  double upper = 0.0;

  // True when x lies strictly inside (lower + margin, upper - margin).
  bool forbids(double x, double margin = 0.0) const { return x > lower + margin && x < upper - margin; }
};

// Requires 0 < gamma <= 1/4.
BifurcationThresholds bifurcation_thresholds(double gamma);

// (1 - sqrt(1 - 4 gamma / k)) / 2. Bounds ||diag(p) - p p^T||_2 for any p
// with g_1(p) / g_k(p) <= gamma. Requires 1 <= gamma <= k / 4.
double prop41_norm_bound(double gamma, std::size_t k);

}  // namespace attnlip
