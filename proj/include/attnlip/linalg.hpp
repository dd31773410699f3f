#pragma once

// Dense spectral primitives shared by every other module. Everything here is
// templated on the Eigen expression type so float, double and long double
// matrices all work; the rest of the library instantiates double.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "attnlip/error.hpp"
#include "attnlip/random.hpp"

namespace attnlip {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

template <typename Scalar>
struct SpectralResult {
  Scalar value = 0;  // estimated largest singular value
  std::size_t iterations = 0;
  bool converged = false;
  Scalar residual = 0;  // last relative change of the Rayleigh estimate
};

struct PowerIterationOptions {
  double tol = 1e-10;
  std::size_t max_iter = 10'000;
  std::uint64_t seed = 0;
};

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const std::string& what) {
  if (!m.allFinite()) throw DomainError(what + ": non-finite entry");
}

// Power iteration for the top eigenvalue of a symmetric PSD operator given
// only through its action. `apply_gram(v)` must return G v. The start vector
// is drawn uniformly from the unit sphere using `opts.seed`. The returned
// `value` is the top eigenvalue estimate (not its square root).
//
// The iterates are plain power iterates v <- G v / |G v|. The estimate at each
// step is the larger Ritz value of G on span{v, G v}, which lies between the
// Rayleigh quotient of v and the top eigenvalue and stays accurate when the
// two leading eigenvalues nearly coincide.
template <typename Scalar, typename ApplyGram>
SpectralResult<Scalar> power_iteration_gram(ApplyGram&& apply_gram, Eigen::Index dim,
                                            const PowerIterationOptions& opts) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (dim < 1) throw DimensionError("power iteration: empty operator");
  if (!(opts.tol > 0.0)) throw DomainError("power iteration: tol must be positive");
  if (opts.max_iter < 1) throw DomainError("power iteration: max_iter must be at least 1");

  Rng rng(opts.seed);
  Vec v = rng.unit_sphere(dim).template cast<Scalar>();
  SpectralResult<Scalar> out;
  Scalar previous = 0;
  for (std::size_t it = 1; it <= opts.max_iter; ++it) {
    Vec w = apply_gram(v);
    const Scalar rayleigh = v.dot(w);
    const Scalar wnorm = w.norm();
    out.iterations = it;
    if (!(rayleigh > 0) || wnorm == 0) {
      // The start vector lies in the null space: G is zero up to measure-zero events.
      out.value = 0;
      out.converged = true;
      out.residual = 0;
      return out;
    }
    Vec u = w - rayleigh * v;
    u -= v.dot(u) * v;
    const Scalar beta = u.norm();
    Scalar estimate = rayleigh;
    if (beta > std::numeric_limits<Scalar>::epsilon() * wnorm) {
      u /= beta;
      const Scalar c = u.dot(apply_gram(u));
      estimate = std::max(rayleigh, (rayleigh + c) / 2 + std::hypot((rayleigh - c) / 2, beta));
    }
    out.value = estimate;
    if (it > 1) {
      out.residual = std::abs(estimate - previous) / estimate;
      if (out.residual <= static_cast<Scalar>(opts.tol)) {
        out.converged = true;
        return out;
      }
    }
    previous = estimate;
    v = w / wnorm;
  }
  return out;
}

// Largest singular value of m by power iteration on m^T m. The Gram matrix is
// never formed; each step costs one product with m and one with m^T.
template <typename Derived>
SpectralResult<typename Derived::Scalar> power_iteration_spectral_norm(
    const Eigen::MatrixBase<Derived>& m, const PowerIterationOptions& opts = {}) {
  using Scalar = typename Derived::Scalar;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (m.rows() == 0 || m.cols() == 0) throw DimensionError("power iteration: empty matrix");
  require_finite(m, "power iteration");
  const auto& mat = m.derived();
  auto result = power_iteration_gram<Scalar>(
      [&mat](const Vec& v) -> Vec { return mat.transpose() * (mat * v); }, m.cols(), opts);
  result.value = std::sqrt(result.value);
  return result;
}

// Spectral norm shorthand used by the bound formulas.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& m,
                                       const PowerIterationOptions& opts = {}) {
  return power_iteration_spectral_norm(m, opts).value;
}

// All eigenvalues of a real symmetric matrix in descending order, by cyclic
// Jacobi rotations. Sweeps continue until the off-diagonal Frobenius norm is
// at most 1e-13 * ||m||_F.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> symmetric_eigenvalues(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (m.rows() != m.cols()) throw DimensionError("symmetric_eigenvalues: matrix is not square");
  if (m.rows() == 0) throw DimensionError("symmetric_eigenvalues: empty matrix");
  require_finite(m, "symmetric_eigenvalues");

  const Eigen::Index n = m.rows();
  const Scalar scale = std::max<Scalar>(1, m.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) > Scalar(1e-12) * scale)
        throw SymmetryError("symmetric_eigenvalues: matrix is not symmetric");

  Mat a = (m + m.transpose()) / Scalar(2);
  const Scalar threshold = Scalar(1e-13) * a.norm();
  auto off_diagonal = [&a, n] {
    Scalar s = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  constexpr int kMaxSweeps = 100;
  int sweep = 0;
  while (off_diagonal() > threshold) {
    if (++sweep > kMaxSweeps) throw EvaluationError("symmetric_eigenvalues: Jacobi did not converge");
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == 0) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (2 * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1));
        const Scalar c = 1 / std::sqrt(t * t + 1);
        const Scalar s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          a(k, p) = a(p, k) = c * akp - s * akq;
          a(k, q) = a(q, k) = s * akp + c * akq;
        }
        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = 0;
        a(q, p) = 0;
      }
    }
  }

  Vec eig = a.diagonal();
  std::sort(eig.data(), eig.data() + n, std::greater<Scalar>());
  return eig;
}

// Central-difference Jacobian of f at x0: column j is
// (f(x0 + h e_j) - f(x0 - h e_j)) / (2h).
template <typename Fn>
Matrix finite_difference_jacobian(Fn&& f, const Vector& x0, double h = 1e-5) {
  if (!(h > 0.0)) throw DomainError("finite_difference_jacobian: h must be positive");
  if (x0.size() == 0) throw DimensionError("finite_difference_jacobian: empty point");
  Matrix jac;
  Vector x = x0;
  for (Eigen::Index j = 0; j < x0.size(); ++j) {
    x(j) = x0(j) + h;
    const Vector plus = f(x);
    x(j) = x0(j) - h;
    const Vector minus = f(x);
    x(j) = x0(j);
    if (!plus.allFinite() || !minus.allFinite())
      throw EvaluationError("finite_difference_jacobian: non-finite function value");
    if (j == 0) jac.resize(plus.size(), x0.size());
    if (plus.size() != jac.rows() || minus.size() != jac.rows())
      throw DimensionError("finite_difference_jacobian: output size changed");
    jac.col(j) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

template <typename Scalar>
using BlockGrid = std::vector<std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>>;

// Concatenates a rectangular grid of blocks into one dense matrix. All blocks
// in a block row share a row count and all blocks in a block column share a
// column count.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> assemble_blocks(const BlockGrid<Scalar>& grid) {
  if (grid.empty() || grid.front().empty()) throw DimensionError("assemble_blocks: empty grid");
  const std::size_t block_cols = grid.front().size();
  std::vector<Eigen::Index> heights(grid.size());
  std::vector<Eigen::Index> widths(block_cols);
  for (std::size_t j = 0; j < block_cols; ++j) widths[j] = grid.front()[j].cols();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i].size() != block_cols) throw DimensionError("assemble_blocks: ragged block grid");
    heights[i] = grid[i].front().rows();
    for (std::size_t j = 0; j < block_cols; ++j) {
      if (grid[i][j].rows() != heights[i] || grid[i][j].cols() != widths[j])
        throw DimensionError("assemble_blocks: inconsistent block shape at (" + std::to_string(i) +
                             ", " + std::to_string(j) + ")");
    }
  }
  Eigen::Index total_rows = 0;
  Eigen::Index total_cols = 0;
  for (auto h : heights) total_rows += h;
  for (auto w : widths) total_cols += w;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(total_rows, total_cols);
  Eigen::Index r0 = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Eigen::Index c0 = 0;
    for (std::size_t j = 0; j < block_cols; ++j) {
      out.block(r0, c0, heights[i], widths[j]) = grid[i][j];
      c0 += widths[j];
    }
    r0 += heights[i];
  }
  return out;
}

// Spectral norm of a block matrix, assembled densely.
template <typename Scalar>
SpectralResult<Scalar> block_spectral_norm(const BlockGrid<Scalar>& grid,
                                           const PowerIterationOptions& opts = {}) {
  return power_iteration_spectral_norm(assemble_blocks(grid), opts);
}

}  // namespace attnlip
