#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "attnlip/attention.hpp"

namespace attnlip {

enum class Aggregation { kMax, kMean };

// k = 0 selects the log g_1 penalty; k >= 2 selects log(g_1 / (g_k + eps)).
struct JasminConfig {
  std::size_t k = 0;
  double lambda = 0.0;
  Aggregation aggregation = Aggregation::kMean;
  double epsilon = 1e-6;

  // Throws DomainError for k == 1, negative lambda or nonpositive epsilon.
  void validate() const;
};

struct LayerHeadMap {
  std::size_t layer = 0;
  std::size_t head = 0;
  AttentionMap map;
};

struct JasminContribution {
  std::size_t layer = 0;
  std::size_t head = 0;
  double value = 0.0;
  std::optional<Eigen::Index> argmax_row;  // set for max aggregation
};

// `loss` is the unweighted penalty: the sum of the per-(layer, head)
// contributions. Training multiplies it by lambda.
struct JasminValue {
  double loss = 0.0;
  std::vector<JasminContribution> per_layer_head;
};

// Per-row term: log(g_1 + eps) for k = 0, log(g_1 / (g_k + eps)) for k >= 2.
double jasmin_row_term(const Eigen::Ref<const Eigen::RowVectorXd>& row, const JasminConfig& cfg);

// Aggregated contribution of one attention map. When `d_map` is non-null it
// receives d(contribution)/dP; the descending order of each row is frozen at
// the values seen here, and max aggregation routes the gradient only
// through the maximising row.
JasminContribution jasmin_map_term(const Matrix& p, const JasminConfig& cfg, Matrix* d_map = nullptr);

JasminValue jasmin_loss(const std::vector<LayerHeadMap>& maps, const JasminConfig& cfg);

// lambda * jasmin_loss of the maps produced by every head on the same input.
double jasmin_objective(const InputSequence& x, const std::vector<AttentionHeadWeights>& heads,
                        const JasminConfig& cfg);

// Gradient of jasmin_objective with respect to each head's weights and biases.
std::vector<HeadGradient> jasmin_gradient(const InputSequence& x, const std::vector<AttentionHeadWeights>& heads,
                                          const JasminConfig& cfg);

struct SpecformerCoefficients {
  double query = 1.0;
  double key = 1.0;
  double value = 1.0;
};

// sum over heads of c_Q s1(W_Q)^2 + c_K s1(W_K)^2 + c_V s1(W_V)^2.
double specformer_penalty(const std::vector<AttentionHeadWeights>& heads, const SpecformerCoefficients& coeffs = {},
                          const PowerIterationOptions& opts = {});

}  // namespace attnlip
