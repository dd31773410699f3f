#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "attnlip/linalg.hpp"
#include "attnlip/softmax.hpp"

namespace attnlip {

// Largest dense Jacobian (rows * cols) the exact oracles will assemble.
inline constexpr double kDefaultJacobianBudget = 4e7;

// Projection weights of one head. W_Q, W_K, W_V are D x d; biases are
// optional length-d vectors.
class AttentionHeadWeights {
 public:
  AttentionHeadWeights(Matrix w_q, Matrix w_k, Matrix w_v, std::optional<Vector> bias_q = std::nullopt,
                       std::optional<Vector> bias_k = std::nullopt, std::optional<Vector> bias_v = std::nullopt);

  const Matrix& w_q() const { return w_q_; }
  const Matrix& w_k() const { return w_k_; }
  const Matrix& w_v() const { return w_v_; }
  const std::optional<Vector>& bias_q() const { return bias_q_; }
  const std::optional<Vector>& bias_k() const { return bias_k_; }
  const std::optional<Vector>& bias_v() const { return bias_v_; }

  Eigen::Index model_dim() const { return w_q_.rows(); }
  Eigen::Index head_dim() const { return w_q_.cols(); }
  bool has_bias() const { return bias_q_ || bias_k_ || bias_v_; }

  // A = W_Q W_K^T / sqrt(d), a D x D matrix.
  Matrix a_matrix() const;

 private:
  Matrix w_q_;
  Matrix w_k_;
  Matrix w_v_;
  std::optional<Vector> bias_q_;
  std::optional<Vector> bias_k_;
  std::optional<Vector> bias_v_;
};

// Max row 2-norm of x.
double max_row_norm(const Matrix& x);

// Token sequence X (N x D) with an optional row-norm radius R.
class InputSequence {
 public:
  explicit InputSequence(Matrix x, std::optional<double> radius = std::nullopt);

  const Matrix& x() const { return x_; }
  const std::optional<double>& radius() const { return radius_; }
  Eigen::Index tokens() const { return x_.rows(); }
  Eigen::Index model_dim() const { return x_.cols(); }

  // The declared radius, or the max row norm when none was given.
  double effective_radius() const { return radius_ ? *radius_ : max_row_norm(x_); }

 private:
  Matrix x_;
  std::optional<double> radius_;
};

// Row-stochastic N x N matrix; every row is a probability vector.
class AttentionMap {
 public:
  static constexpr double kRowTolerance = 1e-10;

  explicit AttentionMap(Matrix p);

  const Matrix& p() const { return p_; }
  Eigen::Index size() const { return p_.rows(); }
  SimplexVector row(Eigen::Index i) const;

 private:
  Matrix p_;
};

struct AttentionOutput {
  Matrix output;  // N x d
  AttentionMap map;
};

AttentionOutput attention_forward(const InputSequence& x, const AttentionHeadWeights& w);

struct AbsorbedBias {
  InputSequence x;
  AttentionHeadWeights w;
};

// Appends a constant-1 column to X and each bias as an extra row of its
// weight matrix, so X_aug W_aug = X W + 1 b^T. The radius grows to
// sqrt(R^2 + 1). Missing biases become zero rows.
AbsorbedBias bias_absorb(const InputSequence& x, const AttentionHeadWeights& w);

// Jacobian of vec(Attn(X)) with respect to vec(X), Nd x ND. vec() is
// row-major over tokens: output (i, a) is row i*d + a and input (j, b) is
// column j*D + b. Block (i, j) is
//   W_V^T X^T J_i (delta_ij K W_Q^T + e_j q_i^T W_K^T) / sqrt(d) + P_ij W_V^T
// with J_i = diag(P_i) - P_i P_i^T, Q = X W_Q + 1 b_q^T and K likewise.
// Without biases this is W_V^T X^T J_i (delta_ij X A^T + E_ji X A) + P_ij W_V^T.
Matrix exact_attention_jacobian(const InputSequence& x, const AttentionHeadWeights& w,
                                double max_entries = kDefaultJacobianBudget);

// Power-iteration spectral norm of the assembled Jacobian.
SpectralResult<double> exact_local_lipschitz(const InputSequence& x, const AttentionHeadWeights& w,
                                             const PowerIterationOptions& opts = {},
                                             double max_entries = kDefaultJacobianBudget);

struct MultiheadNormBound {
  double root_sum_square = 0.0;
  double sum = 0.0;
};

// sqrt(sum ||J_h||^2) and the looser sum ||J_h|| for concatenated heads.
MultiheadNormBound multihead_jacobian_norm_bound(const std::vector<double>& per_head_norms);

// Intermediates kept from a forward pass for the backward pass.
struct HeadActivations {
  Matrix q;  // N x d, bias included
  Matrix k;
  Matrix v;
  Matrix p;  // N x N attention map
  Matrix output;
};

HeadActivations attention_activations(const Matrix& x, const AttentionHeadWeights& w);

struct HeadGradient {
  Matrix w_q;
  Matrix w_k;
  Matrix w_v;
  Vector b_q;  // empty when the head has no such bias
  Vector b_k;
  Vector b_v;

  static HeadGradient zeros_like(const AttentionHeadWeights& w);
  HeadGradient& operator+=(const HeadGradient& other);
  HeadGradient& operator*=(double c);
};

struct HeadBackward {
  HeadGradient weights;
  Matrix input;  // dL/dX, N x D
};

// Reverse-mode pass through one head. `d_output` is dL/d(output); `d_map`,
// if given, is an extra dL/dP contribution (the JaSMin penalty reads P
// directly).
HeadBackward attention_backward(const Matrix& x, const AttentionHeadWeights& w, const HeadActivations& act,
                                const Matrix& d_output, const Matrix* d_map = nullptr);

}  // namespace attnlip
