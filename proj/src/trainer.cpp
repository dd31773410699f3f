#include "attnlip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "attnlip/parallel.hpp"
#include "attnlip/random.hpp"

namespace attnlip {
namespace {

struct LayerCache {
  Matrix input;
  std::vector<HeadActivations> heads;
  Matrix output;
};

std::vector<LayerCache> forward_cached(const ToyModel& model, const Matrix& x) {
  std::vector<LayerCache> caches;
  caches.reserve(model.layers.size());
  Matrix current = x;
  for (const auto& layer : model.layers) {
    LayerCache c;
    c.input = current;
    c.output.resize(current.rows(), static_cast<Eigen::Index>(layer.size()) * model.head_dim);
    for (std::size_t h = 0; h < layer.size(); ++h) {
      c.heads.push_back(attention_activations(current, layer[h]));
      c.output.middleCols(static_cast<Eigen::Index>(h) * model.head_dim, model.head_dim) = c.heads.back().output;
    }
    current = c.output;
    caches.push_back(std::move(c));
  }
  return caches;
}

// Backpropagates d(stack output) to d(input); accumulates weight gradients
// into `grads` when non-null. `d_maps[l][h]`, if non-empty, is added to dL/dP.
Matrix backward_stack(const ToyModel& model, const std::vector<LayerCache>& caches, Matrix d_out,
                      std::vector<std::vector<HeadGradient>>* grads,
                      const std::vector<std::vector<Matrix>>* d_maps = nullptr) {
  for (std::size_t l = caches.size(); l-- > 0;) {
    const auto& layer = model.layers[l];
    const LayerCache& c = caches[l];
    Matrix d_in = Matrix::Zero(c.input.rows(), c.input.cols());
    for (std::size_t h = 0; h < layer.size(); ++h) {
      const Matrix d_head = d_out.middleCols(static_cast<Eigen::Index>(h) * model.head_dim, model.head_dim);
      const Matrix* d_map = nullptr;
      if (d_maps && (*d_maps)[l][h].size() > 0) d_map = &(*d_maps)[l][h];
      HeadBackward hb = attention_backward(c.input, layer[h], c.heads[h], d_head, d_map);
      if (grads) (*grads)[l][h] += hb.weights;
      d_in += hb.input;
    }
    d_out = std::move(d_in);
  }
  return d_out;
}

Vector flatten_rows(const Matrix& m) {
  Vector v(m.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), m.rows(), m.cols()) = m;
  return v;
}

Matrix unflatten_rows(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), rows, cols);
}

double row_g1(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  double first = 0.0;
  double second = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    const double v = row(j);
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }
  return first * (1.0 - first + second);
}

AttentionHeadWeights step_head(const AttentionHeadWeights& w, const HeadGradient& g, double lr) {
  auto step_bias = [lr](const std::optional<Vector>& b, const Vector& gb) -> std::optional<Vector> {
    if (!b) return std::nullopt;
    return Vector(*b - lr * gb);
  };
  return AttentionHeadWeights(w.w_q() - lr * g.w_q, w.w_k() - lr * g.w_k, w.w_v() - lr * g.w_v,
                              step_bias(w.bias_q(), g.b_q), step_bias(w.bias_k(), g.b_k),
                              step_bias(w.bias_v(), g.b_v));
}

}  // namespace

Eigen::Index ToyModel::layer_input_dim(std::size_t l) const {
  if (l == 0) return model_dim;
  return static_cast<Eigen::Index>(layers[l - 1].size()) * head_dim;
}

Eigen::Index ToyModel::output_dim() const {
  return layers.empty() ? model_dim : static_cast<Eigen::Index>(layers.back().size()) * head_dim;
}

void ToyModel::validate() const {
  if (layers.empty()) throw DimensionError("ToyModel: no layers");
  if (tokens < 1 || model_dim < 1 || head_dim < 1 || classes < 2) throw DimensionError("ToyModel: invalid dims");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].empty()) throw DimensionError("ToyModel: layer " + std::to_string(l) + " has no heads");
    for (const auto& w : layers[l])
      if (w.model_dim() != layer_input_dim(l) || w.head_dim() != head_dim)
        throw DimensionError("ToyModel: head shape disagrees with layer " + std::to_string(l));
  }
  if (readout.rows() != output_dim() || readout.cols() != classes || readout_bias.size() != classes)
    throw DimensionError("ToyModel: readout shape disagrees with dims");
}

ToyModel make_toy_model(const ToyModelConfig& cfg, std::uint64_t seed) {
  if (cfg.layers < 1 || cfg.heads < 1) throw DimensionError("make_toy_model: need at least one layer and head");
  Rng rng(seed);
  ToyModel m;
  m.tokens = cfg.tokens;
  m.model_dim = cfg.model_dim;
  m.head_dim = cfg.head_dim;
  m.classes = cfg.classes;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const Eigen::Index in = l == 0 ? cfg.model_dim : static_cast<Eigen::Index>(cfg.heads) * cfg.head_dim;
    const double s = cfg.init_scale / std::sqrt(static_cast<double>(in));
    std::vector<AttentionHeadWeights> layer;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      Matrix wq = s * rng.normal_matrix(in, cfg.head_dim);
      Matrix wk = s * rng.normal_matrix(in, cfg.head_dim);
      Matrix wv = s * rng.normal_matrix(in, cfg.head_dim);
      layer.emplace_back(std::move(wq), std::move(wk), std::move(wv));
    }
    m.layers.push_back(std::move(layer));
  }
  const Eigen::Index features = m.output_dim();
  m.readout = rng.normal_matrix(features, cfg.classes) / std::sqrt(static_cast<double>(features));
  m.readout_bias = Vector::Zero(cfg.classes);
  m.validate();
  return m;
}

Dataset generate_synthetic_dataset(std::uint64_t seed, std::size_t n_samples, Eigen::Index tokens,
                                   Eigen::Index model_dim, Eigen::Index classes, double separation) {
  if (classes < 2) throw DomainError("generate_synthetic_dataset: need at least two classes");
  if (tokens < 1 || model_dim < 1) throw DimensionError("generate_synthetic_dataset: dims must be positive");
  Rng rng(seed);
  std::vector<Vector> means;
  for (Eigen::Index c = 0; c < classes; ++c) means.push_back(separation * rng.unit_sphere(model_dim));
  Dataset d;
  d.classes = classes;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const int label = static_cast<int>(s % static_cast<std::size_t>(classes));
    Matrix x = rng.normal_matrix(tokens, model_dim);
    x.rowwise() += means[static_cast<std::size_t>(label)].transpose();
    d.inputs.push_back(std::move(x));
    d.labels.push_back(label);
  }
  return d;
}

Matrix stack_forward(const ToyModel& model, const Matrix& x) {
  Matrix current = x;
  for (const auto& layer : model.layers) {
    Matrix out(current.rows(), static_cast<Eigen::Index>(layer.size()) * model.head_dim);
    for (std::size_t h = 0; h < layer.size(); ++h)
      out.middleCols(static_cast<Eigen::Index>(h) * model.head_dim, model.head_dim) =
          attention_activations(current, layer[h]).output;
    current = std::move(out);
  }
  return current;
}

Vector model_logits(const ToyModel& model, const Matrix& x) {
  const Vector pooled = stack_forward(model, x).colwise().mean().transpose();
  return model.readout.transpose() * pooled + model.readout_bias;
}

double accuracy(const ToyModel& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    Eigen::Index arg;
    model_logits(model, data.inputs[s]).maxCoeff(&arg);
    if (arg == data.labels[s]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Matrix stack_jacobian(const ToyModel& model, const Matrix& x) {
  const Eigen::Index n = x.rows();
  Matrix total;
  Matrix current = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    const Eigen::Index hd = static_cast<Eigen::Index>(layer.size()) * model.head_dim;
    const InputSequence seq(current);
    Matrix jl(n * hd, n * current.cols());
    for (std::size_t h = 0; h < layer.size(); ++h) {
      const Matrix jh = exact_attention_jacobian(seq, layer[h], std::numeric_limits<double>::infinity());
      for (Eigen::Index i = 0; i < n; ++i)
        jl.middleRows(i * hd + static_cast<Eigen::Index>(h) * model.head_dim, model.head_dim) =
            jh.middleRows(i * model.head_dim, model.head_dim);
    }
    total = l == 0 ? jl : Matrix(jl * total);
    Matrix out(n, hd);
    for (std::size_t h = 0; h < layer.size(); ++h)
      out.middleCols(static_cast<Eigen::Index>(h) * model.head_dim, model.head_dim) =
          attention_activations(current, layer[h]).output;
    current = std::move(out);
  }
  return total;
}

std::vector<SpectralResult<double>> measure_model_lipschitz(const ToyModel& model, const std::vector<Matrix>& probes,
                                                            const MeasureOptions& opts) {
  if (probes.empty()) throw DomainError("measure_model_lipschitz: empty probe set");
  model.validate();
  bool dense = true;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const double rows = static_cast<double>(model.tokens) * static_cast<double>(model.layers[l].size()) *
                        static_cast<double>(model.head_dim);
    const double cols = static_cast<double>(model.tokens) * static_cast<double>(model.layer_input_dim(l));
    dense = dense && rows * cols <= opts.max_jacobian_entries;
  }
  const double total_entries = static_cast<double>(model.tokens * model.output_dim()) *
                               static_cast<double>(model.tokens * model.model_dim);
  dense = dense && total_entries <= opts.max_jacobian_entries;

  std::vector<SpectralResult<double>> out(probes.size());
  parallel_for(probes.size(), [&](std::size_t p) {
    const Matrix& x = probes[p];
    if (x.cols() != model.model_dim) throw DimensionError("measure_model_lipschitz: probe width mismatch");
    if (dense) {
      out[p] = power_iteration_spectral_norm(stack_jacobian(model, x), opts.power);
      return;
    }
    const auto caches = forward_cached(model, x);
    const Eigen::Index n = x.rows();
    const double h = opts.fd_step;
    auto gram = [&](const Vector& v) -> Vector {
      const Matrix dir = unflatten_rows(v, n, model.model_dim);
      const Matrix jv = (stack_forward(model, x + h * dir) - stack_forward(model, x - h * dir)) / (2.0 * h);
      return flatten_rows(backward_stack(model, caches, jv, nullptr));
    };
    auto r = power_iteration_gram<double>(gram, n * model.model_dim, opts.power);
    r.value = std::sqrt(r.value);
    out[p] = r;
  });
  return out;
}

ObjectiveGradient objective_gradient(const ToyModel& model, const Dataset& data, const JasminConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw DomainError("objective_gradient: empty dataset");
  ObjectiveGradient g;
  for (const auto& layer : model.layers) {
    std::vector<HeadGradient> hg;
    for (const auto& w : layer) hg.push_back(HeadGradient::zeros_like(w));
    g.layers.push_back(std::move(hg));
  }
  g.readout = Matrix::Zero(model.readout.rows(), model.readout.cols());
  g.readout_bias = Vector::Zero(model.classes);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  std::size_t correct = 0;
  std::size_t maps = 0;

  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto caches = forward_cached(model, data.inputs[s]);
    const Matrix& out = caches.back().output;
    const Vector pooled = out.colwise().mean().transpose();
    const Vector logits = model.readout.transpose() * pooled + model.readout_bias;
    const double top = logits.maxCoeff();
    const double lse = top + std::log((logits.array() - top).exp().sum());
    const int label = data.labels[s];
    g.task_loss += (lse - logits(label)) * inv_n;
    Eigen::Index arg;
    logits.maxCoeff(&arg);
    if (arg == label) ++correct;

    Vector d_logits = (logits.array() - lse).exp().matrix();
    d_logits(label) -= 1.0;
    d_logits *= inv_n;
    g.readout += pooled * d_logits.transpose();
    g.readout_bias += d_logits;
    const Vector d_pooled = model.readout * d_logits;
    Matrix d_out = Vector::Constant(out.rows(), 1.0 / static_cast<double>(out.rows())) * d_pooled.transpose();

    std::vector<std::vector<Matrix>> d_maps(caches.size());
    for (std::size_t l = 0; l < caches.size(); ++l) {
      d_maps[l].resize(caches[l].heads.size());
      for (std::size_t h = 0; h < caches[l].heads.size(); ++h) {
        const Matrix& p = caches[l].heads[h].p;
        const bool need_grad = cfg.lambda != 0.0;
        const JasminContribution c = jasmin_map_term(p, cfg, need_grad ? &d_maps[l][h] : nullptr);
        g.jasmin_loss += c.value * inv_n;
        if (need_grad) d_maps[l][h] *= cfg.lambda * inv_n;
        double map_max = 0.0;
        for (Eigen::Index i = 0; i < p.rows(); ++i) map_max = std::max(map_max, row_g1(p.row(i)));
        g.max_g1 = std::max(g.max_g1, map_max);
        g.mean_max_g1 += map_max;
        ++maps;
      }
    }
    backward_stack(model, caches, std::move(d_out), &g.layers, &d_maps);
  }
  g.accuracy = static_cast<double>(correct) * inv_n;
  g.mean_max_g1 /= static_cast<double>(maps);
  return g;
}

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

TrainResult train(ToyModel model, const Dataset& data, const std::vector<Matrix>& probes, const JasminConfig& cfg,
                  const TrainOptions& opts) {
  cfg.validate();
  model.validate();
  if (data.size() == 0) throw DomainError("train: empty dataset");
  if (opts.steps < 1) throw DomainError("train: steps must be at least 1");
  if (!(opts.lr >= 0.0)) throw DomainError("train: lr must be nonnegative");
  if (opts.measure_every < 1) throw DomainError("train: measure_every must be at least 1");

  MeasureOptions mopts;
  mopts.power.seed = opts.seed;
  TrainResult result;
  ObjectiveGradient g = objective_gradient(model, data, cfg);
  for (std::size_t step = 1; step <= opts.steps; ++step) {
    for (std::size_t l = 0; l < model.layers.size(); ++l)
      for (std::size_t h = 0; h < model.layers[l].size(); ++h)
        model.layers[l][h] = step_head(model.layers[l][h], g.layers[l][h], opts.lr);
    model.readout -= opts.lr * g.readout;
    model.readout_bias -= opts.lr * g.readout_bias;

    g = objective_gradient(model, data, cfg);
    const double total = g.task_loss + cfg.lambda * g.jasmin_loss;
    if (!std::isfinite(total)) throw TrainingError("train: non-finite loss", step);

    TrainRecord rec;
    rec.step = step;
    rec.task_loss = g.task_loss;
    rec.jasmin_loss = g.jasmin_loss;
    rec.accuracy = g.accuracy;
    rec.max_g1 = g.max_g1;
    rec.mean_max_g1 = g.mean_max_g1;
    if (!probes.empty() && (step % opts.measure_every == 0 || step == opts.steps)) {
      std::vector<double> norms;
      for (const auto& r : measure_model_lipschitz(model, probes, mopts)) norms.push_back(r.value);
      rec.jacobian_median = median(norms);
      double sum = 0.0;
      for (double v : norms) sum += v;
      rec.jacobian_mean = sum / static_cast<double>(norms.size());
    }
    result.trace.records.push_back(rec);
  }
  result.model = std::move(model);
  return result;
}

double mean_topk_ratio(const ToyModel& model, const std::vector<Matrix>& inputs, std::size_t k) {
  if (k < 1) throw DomainError("mean_topk_ratio: k must be positive");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& x : inputs) {
    for (const auto& c : forward_cached(model, x)) {
      for (const auto& act : c.heads) {
        if (static_cast<std::size_t>(act.p.cols()) < k) throw DimensionError("mean_topk_ratio: rows shorter than k");
        for (Eigen::Index i = 0; i < act.p.rows(); ++i) {
          std::vector<double> row(static_cast<std::size_t>(act.p.cols()));
          for (Eigen::Index j = 0; j < act.p.cols(); ++j) row[static_cast<std::size_t>(j)] = act.p(i, j);
          std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end(),
                           std::greater<double>());
          const double xk = row[k - 1];
          const double x1 = *std::max_element(row.begin(), row.end());
          sum += x1 / xk;
          ++count;
        }
      }
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace attnlip
