#include "attnlip/attention.hpp"

#include <cmath>
#include <string>

namespace attnlip {
namespace {

void check_bias(const std::optional<Vector>& b, Eigen::Index d, const char* name) {
  if (!b) return;
  if (b->size() != d) throw DimensionError(std::string("AttentionHeadWeights: ") + name + " has wrong length");
  require_finite(*b, std::string("AttentionHeadWeights: ") + name);
}

Matrix with_bias(Matrix m, const std::optional<Vector>& b) {
  if (b) m.rowwise() += b->transpose();
  return m;
}

Matrix row_softmax(const Matrix& s) {
  Matrix p(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) p.row(i) = softmax_values(s.row(i).transpose()).transpose();
  return p;
}

void check_input(const Matrix& x, const AttentionHeadWeights& w) {
  if (x.rows() == 0) throw DimensionError("attention: empty input sequence");
  if (x.cols() != w.model_dim())
    throw DimensionError("attention: input has " + std::to_string(x.cols()) + " columns, weights expect " +
                         std::to_string(w.model_dim()));
}

}  // namespace

AttentionHeadWeights::AttentionHeadWeights(Matrix w_q, Matrix w_k, Matrix w_v, std::optional<Vector> bias_q,
                                           std::optional<Vector> bias_k, std::optional<Vector> bias_v)
    : w_q_(std::move(w_q)),
      w_k_(std::move(w_k)),
      w_v_(std::move(w_v)),
      bias_q_(std::move(bias_q)),
      bias_k_(std::move(bias_k)),
      bias_v_(std::move(bias_v)) {
  if (w_q_.rows() == 0 || w_q_.cols() == 0) throw DimensionError("AttentionHeadWeights: empty W_Q");
  if (w_k_.rows() != w_q_.rows() || w_k_.cols() != w_q_.cols() || w_v_.rows() != w_q_.rows() ||
      w_v_.cols() != w_q_.cols())
    throw DimensionError("AttentionHeadWeights: W_Q, W_K, W_V must share shape D x d");
  require_finite(w_q_, "AttentionHeadWeights: W_Q");
  require_finite(w_k_, "AttentionHeadWeights: W_K");
  require_finite(w_v_, "AttentionHeadWeights: W_V");
  check_bias(bias_q_, head_dim(), "bias_q");
  check_bias(bias_k_, head_dim(), "bias_k");
  check_bias(bias_v_, head_dim(), "bias_v");
}

Matrix AttentionHeadWeights::a_matrix() const {
  return w_q_ * w_k_.transpose() / std::sqrt(static_cast<double>(head_dim()));
}

double max_row_norm(const Matrix& x) { return x.rows() == 0 ? 0.0 : x.rowwise().norm().maxCoeff(); }

InputSequence::InputSequence(Matrix x, std::optional<double> radius) : x_(std::move(x)), radius_(radius) {
  require_finite(x_, "InputSequence");
  if (radius_) {
    if (!(*radius_ >= 0.0)) throw DomainError("InputSequence: radius must be nonnegative");
    if (max_row_norm(x_) > *radius_ + 1e-9) throw DomainError("InputSequence: a row norm exceeds the radius");
  }
}

AttentionMap::AttentionMap(Matrix p) : p_(std::move(p)) {
  if (p_.rows() != p_.cols()) throw DimensionError("AttentionMap: matrix is not square");
  if (!p_.allFinite() || (p_.size() > 0 && p_.minCoeff() < 0.0))
    throw DomainError("AttentionMap: entries must be finite and nonnegative");
  for (Eigen::Index i = 0; i < p_.rows(); ++i)
    if (std::abs(p_.row(i).sum() - 1.0) > kRowTolerance)
      throw DomainError("AttentionMap: row " + std::to_string(i) + " does not sum to 1");
}

SimplexVector AttentionMap::row(Eigen::Index i) const {
  Vector r = p_.row(i).transpose();
  Eigen::Index arg;
  r.maxCoeff(&arg);
  r(arg) += 1.0 - r.sum();
  return SimplexVector(std::move(r));
}

HeadActivations attention_activations(const Matrix& x, const AttentionHeadWeights& w) {
  check_input(x, w);
  HeadActivations act;
  act.q = with_bias(x * w.w_q(), w.bias_q());
  act.k = with_bias(x * w.w_k(), w.bias_k());
  act.v = with_bias(x * w.w_v(), w.bias_v());
  const double scale = 1.0 / std::sqrt(static_cast<double>(w.head_dim()));
  act.p = row_softmax(act.q * act.k.transpose() * scale);
  act.output = act.p * act.v;
  return act;
}

AttentionOutput attention_forward(const InputSequence& x, const AttentionHeadWeights& w) {
  HeadActivations act = attention_activations(x.x(), w);
  return {std::move(act.output), AttentionMap(std::move(act.p))};
}

AbsorbedBias bias_absorb(const InputSequence& x, const AttentionHeadWeights& w) {
  if (!w.has_bias()) throw DomainError("bias_absorb: head has no bias");
  const Eigen::Index n = x.tokens();
  const Eigen::Index dm = x.model_dim();
  Matrix xa(n, dm + 1);
  xa << x.x(), Vector::Ones(n);
  auto augment = [&](const Matrix& m, const std::optional<Vector>& b) {
    Matrix out(m.rows() + 1, m.cols());
    out.topRows(m.rows()) = m;
    out.bottomRows(1) = b ? Matrix(b->transpose()) : Matrix::Zero(1, m.cols());
    return out;
  };
  std::optional<double> radius;
  if (x.radius()) radius = std::sqrt(*x.radius() * *x.radius() + 1.0);
  return {InputSequence(std::move(xa), radius),
          AttentionHeadWeights(augment(w.w_q(), w.bias_q()), augment(w.w_k(), w.bias_k()),
                               augment(w.w_v(), w.bias_v()))};
}

Matrix exact_attention_jacobian(const InputSequence& x, const AttentionHeadWeights& w, double max_entries) {
  const Eigen::Index n = x.tokens();
  const Eigen::Index dm = x.model_dim();
  const Eigen::Index dh = w.head_dim();
  const double entries = static_cast<double>(n * dh) * static_cast<double>(n * dm);
  if (entries > max_entries)
    throw CapacityError("exact_attention_jacobian: " + std::to_string(n * dh) + " x " + std::to_string(n * dm) +
                        " Jacobian exceeds the dense budget");
  const HeadActivations act = attention_activations(x.x(), w);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix wv_t = w.w_v().transpose();
  const Matrix vx = wv_t * x.x().transpose();               // d x N
  const Matrix k_wq = act.k * w.w_q().transpose() * scale;  // N x D
  const Matrix q_wk = act.q * w.w_k().transpose() * scale;  // N x D, row i is q_i^T W_K^T / sqrt(d)

  Matrix jac(n * dh, n * dm);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector p = act.p.row(i).transpose();
    Matrix js = -p * p.transpose();
    js.diagonal() += p;
    const Matrix m = vx * js;  // d x N
    for (Eigen::Index j = 0; j < n; ++j) {
      Matrix block = m.col(j) * q_wk.row(i) + act.p(i, j) * wv_t;
      if (i == j) block += m * k_wq;
      jac.block(i * dh, j * dm, dh, dm) = block;
    }
  }
  return jac;
}

SpectralResult<double> exact_local_lipschitz(const InputSequence& x, const AttentionHeadWeights& w,
                                             const PowerIterationOptions& opts, double max_entries) {
  return power_iteration_spectral_norm(exact_attention_jacobian(x, w, max_entries), opts);
}

MultiheadNormBound multihead_jacobian_norm_bound(const std::vector<double>& per_head_norms) {
  MultiheadNormBound out;
  double squares = 0.0;
  for (double v : per_head_norms) {
    if (!(v >= 0.0)) throw DomainError("multihead_jacobian_norm_bound: negative or non-finite norm");
    squares += v * v;
    out.sum += v;
  }
  out.root_sum_square = std::sqrt(squares);
  return out;
}

HeadGradient HeadGradient::zeros_like(const AttentionHeadWeights& w) {
  HeadGradient g;
  g.w_q = Matrix::Zero(w.model_dim(), w.head_dim());
  g.w_k = g.w_q;
  g.w_v = g.w_q;
  if (w.bias_q()) g.b_q = Vector::Zero(w.head_dim());
  if (w.bias_k()) g.b_k = Vector::Zero(w.head_dim());
  if (w.bias_v()) g.b_v = Vector::Zero(w.head_dim());
  return g;
}

HeadGradient& HeadGradient::operator+=(const HeadGradient& other) {
  w_q += other.w_q;
  w_k += other.w_k;
  w_v += other.w_v;
  if (b_q.size()) b_q += other.b_q;
  if (b_k.size()) b_k += other.b_k;
  if (b_v.size()) b_v += other.b_v;
  return *this;
}

HeadGradient& HeadGradient::operator*=(double c) {
  w_q *= c;
  w_k *= c;
  w_v *= c;
  b_q *= c;
  b_k *= c;
  b_v *= c;
  return *this;
}

HeadBackward attention_backward(const Matrix& x, const AttentionHeadWeights& w, const HeadActivations& act,
                                const Matrix& d_output, const Matrix* d_map) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(w.head_dim()));
  Matrix d_p = d_output * act.v.transpose();
  if (d_map) d_p += *d_map;
  const Matrix d_v = act.p.transpose() * d_output;

  // Row-wise softmax backward: dS_i = p_i * (dP_i - <dP_i, p_i>).
  Matrix d_s(act.p.rows(), act.p.cols());
  for (Eigen::Index i = 0; i < act.p.rows(); ++i) {
    const double inner = d_p.row(i).dot(act.p.row(i));
    d_s.row(i) = act.p.row(i).array() * (d_p.row(i).array() - inner);
  }
  const Matrix d_q = d_s * act.k * scale;
  const Matrix d_k = d_s.transpose() * act.q * scale;

  HeadBackward out;
  out.weights.w_q = x.transpose() * d_q;
  out.weights.w_k = x.transpose() * d_k;
  out.weights.w_v = x.transpose() * d_v;
  if (w.bias_q()) out.weights.b_q = d_q.colwise().sum().transpose();
  if (w.bias_k()) out.weights.b_k = d_k.colwise().sum().transpose();
  if (w.bias_v()) out.weights.b_v = d_v.colwise().sum().transpose();
  out.input = d_q * w.w_q().transpose() + d_k * w.w_k().transpose() + d_v * w.w_v().transpose();
  return out;
}

}  // namespace attnlip
