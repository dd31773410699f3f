#include "attnlip/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace attnlip {

SimplexVector::SimplexVector(Vector probs) : probs_(std::move(probs)) {
  if (probs_.size() == 0) throw DimensionError("SimplexVector: empty vector");
  if (!probs_.allFinite()) throw DomainError("SimplexVector: non-finite entry");
  if (probs_.minCoeff() < 0.0) throw DomainError("SimplexVector: negative entry");
  const double total = probs_.sum();
  if (std::abs(total - 1.0) > kSumTolerance)
    throw DomainError("SimplexVector: entries sum to " + std::to_string(total) + ", not 1");
  order_.resize(static_cast<std::size_t>(probs_.size()));
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  std::stable_sort(order_.begin(), order_.end(),
                   [this](Eigen::Index a, Eigen::Index b) { return probs_(a) > probs_(b); });
}

double SimplexVector::ordinal(std::size_t k) const {
  const auto n = static_cast<std::size_t>(probs_.size());
  if (k < 1 || k > n + 1) throw IndexError("ordinal: k out of range");
  return k == n + 1 ? 0.0 : probs_(order_[k - 1]);
}

Vector softmax_values(const Vector& z) {
  Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

SimplexVector softmax(const Vector& z) {
  if (z.size() == 0) throw DimensionError("softmax: empty vector");
  if (!z.allFinite()) throw DomainError("softmax: non-finite logit");
  Vector p = softmax_values(z);
  // Normalisation leaves O(n eps) error in the sum; push it into the top entry.
  Eigen::Index arg;
  p.maxCoeff(&arg);
  p(arg) += 1.0 - p.sum();
  return SimplexVector(std::move(p));
}

Matrix softmax_jacobian_matrix(const SimplexVector& p) {
  const Vector& x = p.probs();
  Matrix j = -x * x.transpose();
  j.diagonal() += x;
  return j;
}

double g_k(const SimplexVector& p, std::size_t k) {
  const auto n = static_cast<std::size_t>(p.size());
  if (k < 1 || k > n) throw IndexError("g_k: k = " + std::to_string(k) + " outside 1.." + std::to_string(n));
  const double xk = p.ordinal(k);
  return xk * (1.0 - xk + p.ordinal(k + 1));
}

Vector g_values(const SimplexVector& p) {
  Vector g(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) g(k) = g_k(p, static_cast<std::size_t>(k + 1));
  return g;
}

Vector softmax_jacobian_singular_values(const SimplexVector& p) {
  Vector s = symmetric_eigenvalues(softmax_jacobian_matrix(p)).cwiseAbs();
  std::sort(s.data(), s.data() + s.size(), std::greater<double>());
  return s;
}

std::vector<double> InterlacingSandwich::chain() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(3 * ordinals.size()));
  for (Eigen::Index k = 0; k < ordinals.size(); ++k) {
    out.push_back(ordinals(k));
    out.push_back(g(k));
    out.push_back(singular_values(k));
  }
  return out;
}

std::optional<std::size_t> InterlacingSandwich::first_violation(double slack) const {
  const auto c = chain();
  for (std::size_t i = 1; i < c.size(); ++i)
    if (c[i] > c[i - 1] + slack) return i;
  // The chain ends at sigma_n = 0.
  if (!c.empty() && std::abs(c.back()) > slack) return c.size() - 1;
  return std::nullopt;
}

InterlacingSandwich interlacing_sandwich(const SimplexVector& p) {
  if (p.size() < 2) throw DimensionError("interlacing_sandwich: need n >= 2");
  InterlacingSandwich s;
  s.ordinals.resize(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) s.ordinals(k) = p.ordinal(static_cast<std::size_t>(k + 1));
  s.g = g_values(p);
  s.singular_values = softmax_jacobian_singular_values(p);
  return s;
}

double spectral_norm_upper_bound(const SimplexVector& p) { return g_k(p, 1); }

BifurcationThresholds bifurcation_thresholds(double gamma) {
  if (!(gamma > 0.0) || gamma > 0.25)
    throw DomainError("bifurcation_thresholds: gamma must lie in (0, 1/4]");
  const double root = std::sqrt(std::max(0.0, 1.0 - 4.0 * gamma));
  return {gamma, (1.0 - root) / 2.0, (1.0 + root) / 2.0};
}

double prop41_norm_bound(double gamma, std::size_t k) {
  if (k < 1) throw DomainError("prop41_norm_bound: k must be positive");
  const double kd = static_cast<double>(k);
  if (!(gamma >= 1.0) || gamma > kd / 4.0)
    throw DomainError("prop41_norm_bound: gamma must lie in [1, k/4]");
  return (1.0 - std::sqrt(std::max(0.0, 1.0 - 4.0 * gamma / kd))) / 2.0;
}

}  // namespace attnlip
