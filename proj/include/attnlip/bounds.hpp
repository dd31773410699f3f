#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attnlip/attention.hpp"

namespace attnlip {

// Which factor multiplies the quadratic term of the refined bound:
// the exact max_i ||J_sm(P_i)||_2 or its g_1(P_i) upper bound.
enum class SoftmaxTerm { kExactSigma1, kG1Upper };

// Scalars every bound is assembled from. Recorded for auditability.
struct BoundIngredients {
  double wv_norm = 0.0;      // ||W_V||_2
  double wq_norm = 0.0;      // ||W_Q||_2
  double wk_norm = 0.0;      // ||W_K||_2
  double a_norm = 0.0;       // ||A||_2
  double x_norm = 0.0;       // ||X||_2
  double x_frobenius = 0.0;  // ||X||_F
  double p_norm = 0.0;       // ||P||_2
  double max_g1 = 0.0;       // max_i g_1(P_i)
  double max_sigma1 = 0.0;   // max_i ||J_sm(P_i)||_2
  double radius = 0.0;       // R
  Eigen::Index tokens = 0;   // N
};

// Computes the ingredients. A head with biases is first rewritten bias-free
// by bias_absorb, so every norm refers to the augmented weights and input.
BoundIngredients bound_ingredients(const InputSequence& x, const AttentionHeadWeights& w,
                                   const PowerIterationOptions& opts = {});

// Closed forms over precomputed ingredients.
double bound_ours(const BoundIngredients& in, SoftmaxTerm term);
double bound_ours_appendix_c(const BoundIngredients& in);
double bound_specformer(const BoundIngredients& in, double ball_radius);
double bound_castin(double wv_norm, double a_norm, Eigen::Index n, double r);

// ||W_V|| (||P|| + 2 ||X||^2 ||A|| T), T per `term`.
double bound_ours(const InputSequence& x, const AttentionHeadWeights& w, SoftmaxTerm term,
                  const PowerIterationOptions& opts = {});

// ||W_V|| sqrt(N) (1 + 2 R^2 ||A||).
double bound_ours_appendix_c(const InputSequence& x, const AttentionHeadWeights& w,
                             const PowerIterationOptions& opts = {});

// N (N+1) (||X||_F + R)^2 (||W_V|| ||W_Q|| ||W_K|| + ||W_V||) with R the
// caller's ball radius.
double bound_specformer(const InputSequence& x, const AttentionHeadWeights& w, double ball_radius = 0.0,
                        const PowerIterationOptions& opts = {});

// sqrt(3) ||W_V|| (||A||^2 R^4 (4N + 1) + N)^(1/2).
double bound_castin(const AttentionHeadWeights& w, Eigen::Index n, double r, const PowerIterationOptions& opts = {});

struct BoundReport {
  std::optional<double> exact;  // absent when disabled or over budget
  double ours_eq4 = 0.0;        // refined bound with the exact softmax term
  double ours_g1 = 0.0;         // refined bound with the g_1 upper bound
  double ours_appendix_c = 0.0;
  double specformer = 0.0;
  double castin = 0.0;
  BoundIngredients ingredients;
};

struct CertifyOptions {
  bool exact = true;
  double max_jacobian_entries = kDefaultJacobianBudget;
  double ball_radius = 0.0;  // radius of the ball in the Specformer bound
  PowerIterationOptions power;
};

struct MultiheadAggregate {
  std::optional<double> exact;               // root-sum-square of per-head exact norms
  std::optional<double> exact_concatenated;  // sigma_1 of the stacked per-head Jacobians
  double exact_sum = 0.0;
  double ours_eq4 = 0.0;
  double ours_g1 = 0.0;
  double ours_appendix_c = 0.0;
  double specformer = 0.0;
  double castin = 0.0;
};

struct CertificationReport {
  std::vector<BoundReport> heads;
  MultiheadAggregate aggregate;
  bool capacity_exceeded = false;  // exact requested but skipped for budget
};

// All bounds for every head on the same input, plus root-sum-square
// aggregates across heads.
CertificationReport certify(const InputSequence& x, const std::vector<AttentionHeadWeights>& heads,
                            const CertifyOptions& opts = {});

// Violations of the report invariants: each bound at least exact (relative
// slack), the g_1 variant at least the exact-sigma variant, and the two
// sharpness orderings. Empty means the report is consistent.
std::vector<std::string> check_bound_report(const BoundReport& report, double rel_slack = 1e-6);

struct RandomInstance {
  InputSequence x;
  AttentionHeadWeights w;
};

// X (N x D) and bias-free W_Q, W_K, W_V (D x d) with i.i.d. N(0, 1) entries.
RandomInstance make_random_instance(std::uint64_t seed, Eigen::Index n, Eigen::Index model_dim,
                                    Eigen::Index head_dim);

}  // namespace attnlip
