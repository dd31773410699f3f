#include "attnlip/bounds.hpp"

#include <cmath>
#include <numbers>

namespace attnlip {
namespace {

AttentionHeadWeights strip_bias(const AttentionHeadWeights& w) {
  if (!w.has_bias()) return w;
  // Only the weights matter here; a 1 x D dummy input carries them through.
  return bias_absorb(InputSequence(Matrix::Zero(1, w.model_dim())), w).w;
}

bool ratio_ok(double bound, double exact, double rel_slack) { return bound >= exact - rel_slack * exact; }

}  // namespace

BoundIngredients bound_ingredients(const InputSequence& x_in, const AttentionHeadWeights& w_in,
                                   const PowerIterationOptions& opts) {
  if (x_in.model_dim() != w_in.model_dim()) throw DimensionError("bound_ingredients: input and weights disagree on D");
  if (w_in.has_bias()) {
    const AbsorbedBias ab = bias_absorb(x_in, w_in);
    return bound_ingredients(ab.x, ab.w, opts);
  }
  BoundIngredients in;
  const AttentionOutput fwd = attention_forward(x_in, w_in);
  in.wv_norm = spectral_norm(w_in.w_v(), opts);
  in.wq_norm = spectral_norm(w_in.w_q(), opts);
  in.wk_norm = spectral_norm(w_in.w_k(), opts);
  in.a_norm = spectral_norm(w_in.a_matrix(), opts);
  in.x_norm = spectral_norm(x_in.x(), opts);
  in.x_frobenius = x_in.x().norm();
  in.p_norm = spectral_norm(fwd.map.p(), opts);
  in.radius = x_in.effective_radius();
  in.tokens = x_in.tokens();
  for (Eigen::Index i = 0; i < fwd.map.size(); ++i) {
    const SimplexVector row = fwd.map.row(i);
    in.max_g1 = std::max(in.max_g1, g_k(row, 1));
    in.max_sigma1 = std::max(in.max_sigma1, softmax_jacobian_singular_values(row)(0));
  }
  return in;
}

double bound_ours(const BoundIngredients& in, SoftmaxTerm term) {
  const double t = term == SoftmaxTerm::kExactSigma1 ? in.max_sigma1 : in.max_g1;
  return in.wv_norm * (in.p_norm + 2.0 * in.x_norm * in.x_norm * in.a_norm * t);
}

double bound_ours_appendix_c(const BoundIngredients& in) {
  const double sqrt_n = std::sqrt(static_cast<double>(in.tokens));
  return in.wv_norm * sqrt_n * (1.0 + 2.0 * in.radius * in.radius * in.a_norm);
}

double bound_specformer(const BoundIngredients& in, double ball_radius) {
  if (!(ball_radius >= 0.0)) throw DomainError("bound_specformer: ball radius must be nonnegative");
  const double n = static_cast<double>(in.tokens);
  const double r = in.x_frobenius + ball_radius;
  return n * (n + 1.0) * r * r * (in.wv_norm * in.wq_norm * in.wk_norm + in.wv_norm);
}

double bound_castin(double wv_norm, double a_norm, Eigen::Index n, double r) {
  if (n < 1) throw DomainError("bound_castin: n must be at least 1");
  if (!(r >= 0.0)) throw DomainError("bound_castin: radius must be nonnegative");
  const double nd = static_cast<double>(n);
  const double r2 = r * r;
  return std::numbers::sqrt3 * wv_norm * std::sqrt(a_norm * a_norm * r2 * r2 * (4.0 * nd + 1.0) + nd);
}

double bound_ours(const InputSequence& x, const AttentionHeadWeights& w, SoftmaxTerm term,
                  const PowerIterationOptions& opts) {
  return bound_ours(bound_ingredients(x, w, opts), term);
}

double bound_ours_appendix_c(const InputSequence& x, const AttentionHeadWeights& w,
                             const PowerIterationOptions& opts) {
  return bound_ours_appendix_c(bound_ingredients(x, w, opts));
}

double bound_specformer(const InputSequence& x, const AttentionHeadWeights& w, double ball_radius,
                        const PowerIterationOptions& opts) {
  return bound_specformer(bound_ingredients(x, w, opts), ball_radius);
}

double bound_castin(const AttentionHeadWeights& w_in, Eigen::Index n, double r, const PowerIterationOptions& opts) {
  const AttentionHeadWeights w = strip_bias(w_in);
  const double radius = w_in.has_bias() ? std::sqrt(r * r + 1.0) : r;
  return bound_castin(spectral_norm(w.w_v(), opts), spectral_norm(w.a_matrix(), opts), n, radius);
}

CertificationReport certify(const InputSequence& x, const std::vector<AttentionHeadWeights>& heads,
                            const CertifyOptions& opts) {
  CertificationReport out;
  out.heads.reserve(heads.size());
  std::vector<Matrix> jacobians;
  bool all_exact = opts.exact;
  for (const auto& w : heads) {
    BoundReport r;
    r.ingredients = bound_ingredients(x, w, opts.power);
    r.ours_eq4 = bound_ours(r.ingredients, SoftmaxTerm::kExactSigma1);
    r.ours_g1 = bound_ours(r.ingredients, SoftmaxTerm::kG1Upper);
    r.ours_appendix_c = bound_ours_appendix_c(r.ingredients);
    r.specformer = bound_specformer(r.ingredients, opts.ball_radius);
    r.castin = bound_castin(r.ingredients.wv_norm, r.ingredients.a_norm, r.ingredients.tokens, r.ingredients.radius);
    if (opts.exact && !out.capacity_exceeded) {
      try {
        jacobians.push_back(exact_attention_jacobian(x, w, opts.max_jacobian_entries));
        r.exact = power_iteration_spectral_norm(jacobians.back(), opts.power).value;
      } catch (const CapacityError&) {
        out.capacity_exceeded = true;
      }
    }
    all_exact = all_exact && r.exact.has_value();
    out.heads.push_back(std::move(r));
  }

  auto rss = [&](auto field) {
    double s = 0.0;
    for (const auto& r : out.heads) s += field(r) * field(r);
    return std::sqrt(s);
  };
  auto& agg = out.aggregate;
  agg.ours_eq4 = rss([](const BoundReport& r) { return r.ours_eq4; });
  agg.ours_g1 = rss([](const BoundReport& r) { return r.ours_g1; });
  agg.ours_appendix_c = rss([](const BoundReport& r) { return r.ours_appendix_c; });
  agg.specformer = rss([](const BoundReport& r) { return r.specformer; });
  agg.castin = rss([](const BoundReport& r) { return r.castin; });
  if (all_exact && !heads.empty()) {
    std::vector<double> norms;
    for (const auto& r : out.heads) norms.push_back(*r.exact);
    const MultiheadNormBound mh = multihead_jacobian_norm_bound(norms);
    agg.exact = mh.root_sum_square;
    agg.exact_sum = mh.sum;
    // Stacking per-head Jacobians vertically has the same spectral norm as
    // the horizontal concatenation of their transposes.
    Eigen::Index rows = 0;
    for (const auto& j : jacobians) rows += j.rows();
    Matrix stacked(rows, jacobians.front().cols());
    Eigen::Index r0 = 0;
    for (const auto& j : jacobians) {
      stacked.middleRows(r0, j.rows()) = j;
      r0 += j.rows();
    }
    agg.exact_concatenated = power_iteration_spectral_norm(stacked, opts.power).value;
  }
  return out;
}

std::vector<std::string> check_bound_report(const BoundReport& r, double rel_slack) {
  std::vector<std::string> issues;
  if (r.exact) {
    const double e = *r.exact;
    if (!ratio_ok(r.ours_eq4, e, rel_slack)) issues.push_back("ours_eq4 below exact");
    if (!ratio_ok(r.ours_g1, e, rel_slack)) issues.push_back("ours_g1 below exact");
    if (!ratio_ok(r.ours_appendix_c, e, rel_slack)) issues.push_back("ours_appendix_c below exact");
    if (!ratio_ok(r.specformer, e, rel_slack)) issues.push_back("specformer below exact");
    if (!ratio_ok(r.castin, e, rel_slack)) issues.push_back("castin below exact");
  }
  if (r.ours_eq4 > r.ours_g1 * (1.0 + rel_slack)) issues.push_back("exact-sigma variant above g1 variant");
  if (r.ours_g1 > r.specformer * (1.0 + rel_slack)) issues.push_back("ours_g1 above specformer");
  if (r.ours_appendix_c > r.castin * (1.0 + rel_slack)) issues.push_back("ours_appendix_c above castin");
  return issues;
}

RandomInstance make_random_instance(std::uint64_t seed, Eigen::Index n, Eigen::Index model_dim,
                                    Eigen::Index head_dim) {
  if (n < 1 || model_dim < 1 || head_dim < 1) throw DimensionError("make_random_instance: dims must be positive");
  Rng rng(seed);
  Matrix x = rng.normal_matrix(n, model_dim);
  Matrix wq = rng.normal_matrix(model_dim, head_dim);
  Matrix wk = rng.normal_matrix(model_dim, head_dim);
  Matrix wv = rng.normal_matrix(model_dim, head_dim);
  return {InputSequence(std::move(x)), AttentionHeadWeights(std::move(wq), std::move(wk), std::move(wv))};
}

}  // namespace attnlip
