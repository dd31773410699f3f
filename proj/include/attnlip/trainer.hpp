#pragma once

// Toy attention classifier used to check, at desk scale, that the JaSMin
// penalty lowers the measured Jacobian norm of an attention stack. Each
// layer concatenates its heads' outputs; the readout is linear on the
// token-mean of the last layer. No MLP, LayerNorm or residual paths, so
// comparisons against large-model results are directional only.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "attnlip/attention.hpp"
#include "attnlip/jasmin.hpp"

namespace attnlip {

struct ToyModelConfig {
  std::size_t layers = 1;
  std::size_t heads = 2;
  Eigen::Index tokens = 12;
  Eigen::Index model_dim = 8;
  Eigen::Index head_dim = 4;
  Eigen::Index classes = 3;
  double init_scale = 1.0;  // weights ~ N(0, init_scale^2 / fan_in)
};

struct ToyModel {
  std::vector<std::vector<AttentionHeadWeights>> layers;  // [layer][head]
  Matrix readout;                                         // features x classes
  Vector readout_bias;                                    // classes
  Eigen::Index tokens = 0;
  Eigen::Index model_dim = 0;
  Eigen::Index head_dim = 0;
  Eigen::Index classes = 0;

  // Width of layer l's input: model_dim for l = 0, heads * head_dim after.
  Eigen::Index layer_input_dim(std::size_t l) const;
  Eigen::Index output_dim() const;

  // Throws DimensionError if any stored matrix disagrees with the dims.
  void validate() const;
};

ToyModel make_toy_model(const ToyModelConfig& cfg, std::uint64_t seed);

struct Dataset {
  std::vector<Matrix> inputs;  // each tokens x model_dim
  std::vector<int> labels;
  Eigen::Index classes = 0;

  std::size_t size() const { return inputs.size(); }
};

// Class-conditional Gaussian tokens: class c has mean mu_c (norm
// `separation`), each token is mu_c + N(0, I). Labels cycle through the
// classes, so counts differ by at most one.
Dataset generate_synthetic_dataset(std::uint64_t seed, std::size_t n_samples, Eigen::Index tokens,
                                   Eigen::Index model_dim, Eigen::Index classes, double separation = 2.0);

// Output of the attention stack (tokens x output_dim), readout excluded.
Matrix stack_forward(const ToyModel& model, const Matrix& x);

// Class logits for one sequence.
Vector model_logits(const ToyModel& model, const Matrix& x);

double accuracy(const ToyModel& model, const Dataset& data);

// Jacobian of vec(stack_forward) w.r.t. vec(x), tokens*output_dim x tokens*model_dim.
Matrix stack_jacobian(const ToyModel& model, const Matrix& x);

struct MeasureOptions {
  PowerIterationOptions power;
  double max_jacobian_entries = kDefaultJacobianBudget;
  double fd_step = 1e-5;  // for the matrix-free fallback
};

// Spectral norm of the attention-stack Jacobian at each probe. Dense when
// every layer Jacobian fits the budget, otherwise power iteration with
// finite-difference Jacobian-vector products and exact vector-Jacobian
// products. Probes are evaluated in parallel.
std::vector<SpectralResult<double>> measure_model_lipschitz(const ToyModel& model, const std::vector<Matrix>& probes,
                                                            const MeasureOptions& opts = {});

struct TrainOptions {
  std::size_t steps = 300;
  double lr = 0.1;
  std::uint64_t seed = 0;  // power-iteration seeds for measurements
  std::size_t measure_every = 25;
};

struct TrainRecord {
  std::size_t step = 0;
  double task_loss = 0.0;
  double jasmin_loss = 0.0;  // unweighted, averaged over samples
  double accuracy = 0.0;
  std::optional<double> jacobian_median;
  std::optional<double> jacobian_mean;
  double max_g1 = 0.0;       // max over samples, layers, heads and rows
  double mean_max_g1 = 0.0;  // mean over (sample, layer, head) of max_i g_1
};

struct TrainTrace {
  std::vector<TrainRecord> records;
};

struct TrainResult {
  ToyModel model;
  TrainTrace trace;
};

// Full-batch gradient descent on mean cross-entropy + lambda * mean JaSMin
// loss. Record s describes the model after s updates; the Jacobian is
// measured on `probes` every `measure_every` steps and at the last step.
// Throws TrainingError on a non-finite loss.
TrainResult train(ToyModel model, const Dataset& data, const std::vector<Matrix>& probes, const JasminConfig& cfg,
                  const TrainOptions& opts);

struct ObjectiveGradient {
  double task_loss = 0.0;
  double jasmin_loss = 0.0;
  double accuracy = 0.0;
  double max_g1 = 0.0;
  double mean_max_g1 = 0.0;
  std::vector<std::vector<HeadGradient>> layers;
  Matrix readout;
  Vector readout_bias;
};

// Objective task_loss + lambda * jasmin_loss over the dataset, and its gradient.
ObjectiveGradient objective_gradient(const ToyModel& model, const Dataset& data, const JasminConfig& cfg);

// Mean over samples, layers, heads and rows of x_(1) / x_(k): how peaked the
// top-k attention mass is.
double mean_topk_ratio(const ToyModel& model, const std::vector<Matrix>& inputs, std::size_t k);

double median(std::vector<double> values);

}  // namespace attnlip
