#include "attnlip/jasmin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace attnlip {
namespace {

std::vector<Eigen::Index> descending_order(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(row.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&row](Eigen::Index a, Eigen::Index b) { return row(a) > row(b); });
  return order;
}

// Term value and, optionally, its gradient with respect to the row.
double row_term(const Eigen::Ref<const Eigen::RowVectorXd>& row, const JasminConfig& cfg,
                Eigen::RowVectorXd* grad) {
  const Eigen::Index n = row.size();
  const auto order = descending_order(row);
  auto at = [&](std::size_t pos) { return pos < order.size() ? row(order[pos]) : 0.0; };
  // g_m with its partials: dg/dx_(m) = 1 - 2x_(m) + x_(m+1), dg/dx_(m+1) = x_(m).
  auto add_g_partials = [&](std::size_t m, double weight) {
    const double xm = at(m - 1);
    const double xn = at(m);
    (*grad)(order[m - 1]) += weight * (1.0 - 2.0 * xm + xn);
    if (m < order.size()) (*grad)(order[m]) += weight * xm;
  };
  const double x1 = at(0);
  const double g1 = x1 * (1.0 - x1 + at(1));
  if (grad) grad->setZero(n);

  if (cfg.k == 0) {
    const double denom = g1 + cfg.epsilon;
    if (grad) add_g_partials(1, 1.0 / denom);
    return std::log(denom);
  }
  const double xk = at(cfg.k - 1);
  const double gk = xk * (1.0 - xk + at(cfg.k));
  const double denom = gk + cfg.epsilon;
  if (grad) {
    add_g_partials(1, 1.0 / g1);
    add_g_partials(cfg.k, -1.0 / denom);
  }
  return std::log(g1) - std::log(denom);
}

void check_row_length(Eigen::Index n, const JasminConfig& cfg) {
  if (cfg.k >= 2 && static_cast<std::size_t>(n) < cfg.k + 1)
    throw DimensionError("jasmin: rows of length " + std::to_string(n) + " are too short for k = " +
                         std::to_string(cfg.k));
}

}  // namespace

void JasminConfig::validate() const {
  if (k == 1) throw DomainError("JasminConfig: k = 1 makes the ratio identically 1");
  if (!(lambda >= 0.0)) throw DomainError("JasminConfig: lambda must be nonnegative");
  if (!(epsilon > 0.0)) throw DomainError("JasminConfig: epsilon must be positive");
}

double jasmin_row_term(const Eigen::Ref<const Eigen::RowVectorXd>& row, const JasminConfig& cfg) {
  cfg.validate();
  check_row_length(row.size(), cfg);
  return row_term(row, cfg, nullptr);
}

JasminContribution jasmin_map_term(const Matrix& p, const JasminConfig& cfg, Matrix* d_map) {
  cfg.validate();
  if (p.rows() == 0) throw DimensionError("jasmin: empty attention map");
  check_row_length(p.cols(), cfg);
  const Eigen::Index n = p.rows();
  JasminContribution out;
  Eigen::RowVectorXd grad;
  if (d_map) d_map->setZero(p.rows(), p.cols());

  if (cfg.aggregation == Aggregation::kMean) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      total += row_term(p.row(i), cfg, d_map ? &grad : nullptr);
      if (d_map) d_map->row(i) = grad / static_cast<double>(n);
    }
    out.value = total / static_cast<double>(n);
    return out;
  }

  Eigen::Index best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = row_term(p.row(i), cfg, nullptr);
    if (t > best_value || i == 0) {
      best_value = t;
      best = i;
    }
  }
  out.value = best_value;
  out.argmax_row = best;
  if (d_map) {
    row_term(p.row(best), cfg, &grad);
    d_map->row(best) = grad;
  }
  return out;
}

JasminValue jasmin_loss(const std::vector<LayerHeadMap>& maps, const JasminConfig& cfg) {
  if (maps.empty()) throw DomainError("jasmin_loss: no attention maps");
  JasminValue out;
  for (const auto& m : maps) {
    JasminContribution c = jasmin_map_term(m.map.p(), cfg);
    c.layer = m.layer;
    c.head = m.head;
    out.loss += c.value;
    out.per_layer_head.push_back(c);
  }
  return out;
}

double jasmin_objective(const InputSequence& x, const std::vector<AttentionHeadWeights>& heads,
                        const JasminConfig& cfg) {
  std::vector<LayerHeadMap> maps;
  for (std::size_t h = 0; h < heads.size(); ++h)
    maps.push_back({0, h, attention_forward(x, heads[h]).map});
  return cfg.lambda * jasmin_loss(maps, cfg).loss;
}

std::vector<HeadGradient> jasmin_gradient(const InputSequence& x, const std::vector<AttentionHeadWeights>& heads,
                                          const JasminConfig& cfg) {
  cfg.validate();
  if (heads.empty()) throw DomainError("jasmin_gradient: no heads");
  std::vector<HeadGradient> out;
  out.reserve(heads.size());
  for (const auto& w : heads) {
    if (cfg.lambda == 0.0) {
      out.push_back(HeadGradient::zeros_like(w));
      continue;
    }
    const HeadActivations act = attention_activations(x.x(), w);
    Matrix d_map;
    jasmin_map_term(act.p, cfg, &d_map);
    d_map *= cfg.lambda;
    const Matrix no_output_grad = Matrix::Zero(act.output.rows(), act.output.cols());
    out.push_back(attention_backward(x.x(), w, act, no_output_grad, &d_map).weights);
  }
  return out;
}

double specformer_penalty(const std::vector<AttentionHeadWeights>& heads, const SpecformerCoefficients& coeffs,
                          const PowerIterationOptions& opts) {
  double total = 0.0;
  for (const auto& w : heads) {
    const double q = spectral_norm(w.w_q(), opts);
    const double k = spectral_norm(w.w_k(), opts);
    const double v = spectral_norm(w.w_v(), opts);
    total += coeffs.query * q * q + coeffs.key * k * k + coeffs.value * v * v;
  }
  return total;
}

}  // namespace attnlip
