#include "elas/numerics/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "elas/numerics/linalg.hpp"

namespace elas {

namespace {

// Column-major working copy: cols[j] is the j-th column of the tall matrix.
using Columns = std::vector<std::vector<double>>;

double dot(const std::vector<double>& x, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

// Fills near-zero columns of `basis` (flagged in `missing`) so that the full
// set is orthonormal, using modified Gram-Schmidt against unit vectors.
void complete_basis(Columns& basis, const std::vector<bool>& missing) {
  const std::size_t dim = basis.empty() ? 0 : basis[0].size();
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < basis.size(); ++j) {
    if (!missing[j]) continue;
    while (candidate < dim) {
      std::vector<double> v(dim, 0.0);
      v[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t q = 0; q < basis.size(); ++q) {
          if (q == j || (missing[q] && q > j)) continue;
          const double proj = dot(v, basis[q]);
          for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * basis[q][i];
        }
      }
      const double norm = std::sqrt(dot(v, v));
      if (norm > 1e-8) {
        for (double& x : v) x /= norm;
        basis[j] = std::move(v);
        break;
      }
    }
  }
}

struct TallSvd {
  Columns u;  // m-length columns, count n
  std::vector<double> s;
  Columns v;  // n-length columns, count n
};

// Requires rows >= cols.
TallSvd jacobi_tall(const MatrixD& a, const SvdOptions& options) {
  const std::size_t m = a.rows(), n = a.cols();
  Columns u(n, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) u[j][i] = a(i, j);
  Columns v(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

  double scale = 0.0;
  for (const auto& col : u) scale += dot(col, col);
  // Pairs whose norms are below this floor carry no information.
  const double floor_sq = scale * 1e-60;

  int sweep = 0;
  double worst = 0.0;
  for (; sweep < options.max_sweeps; ++sweep) {
    bool rotated = false;
    worst = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(u[p], u[p]);
        const double beta = dot(u[q], u[q]);
        const double gamma = dot(u[p], u[q]);
        if (alpha * beta <= floor_sq * floor_sq || gamma == 0.0) continue;
        const double off = std::abs(gamma) / std::sqrt(alpha * beta);
        worst = std::max(worst, off);
        if (off <= options.tolerance) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t =
            std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double up = u[p][i], uq = u[q][i];
          u[p][i] = c * up - s * uq;
          u[q][i] = s * up + c * uq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v[p][i], vq = v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }
  if (sweep >= options.max_sweeps) {
    std::ostringstream msg;
    msg << "svd: no convergence after " << sweep << " sweeps on " << shape_string(a)
        << " matrix; worst relative off-diagonal " << worst;
    throw NumericError(msg.str());
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(dot(u[j], u[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  TallSvd out;
  out.u.resize(n);
  out.v.resize(n);
  out.s.resize(n);
  const double sigma_max = n == 0 ? 0.0 : sigma[order[0]];
  const double cutoff = std::max(sigma_max * 1e-13, 1e-300);
  std::vector<bool> missing(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.v[k] = v[j];
    if (sigma[j] > cutoff) {
      out.s[k] = sigma[j];
      out.u[k] = u[j];
      for (double& x : out.u[k]) x /= sigma[j];
    } else {
      out.s[k] = sigma[j] > cutoff ? sigma[j] : 0.0;
      out.u[k] = std::vector<double>(m, 0.0);
      missing[k] = true;
    }
  }
  complete_basis(out.u, missing);
  return out;
}

}  // namespace

template <typename T>
SvdResult<T> svd(const BasicMatrix<T>& m, const SvdOptions& options) {
  if (!all_finite(m)) throw NumericError("svd: input contains non-finite entries");
  const bool wide = m.rows() < m.cols();
  const MatrixD work = wide ? transpose(m).template cast<double>() : m.template cast<double>();
  TallSvd t = jacobi_tall(work, options);
  const std::size_t rows = work.rows(), k = work.cols();

  // work = Ut diag(S) Vtᵀ; for the wide case m = workᵀ = Vt diag(S) Utᵀ.
  BasicMatrix<T> left(wide ? k : rows, k);
  BasicMatrix<T> right(k, wide ? rows : k);
  const Columns& left_cols = wide ? t.v : t.u;
  const Columns& right_cols = wide ? t.u : t.v;
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < left.rows(); ++i) left(i, j) = static_cast<T>(left_cols[j][i]);
    for (std::size_t i = 0; i < right.cols(); ++i) right(j, i) = static_cast<T>(right_cols[j][i]);
  }
  SvdResult<T> result;
  result.U = std::move(left);
  result.Vt = std::move(right);
  result.S.assign(t.s.begin(), t.s.end());
  return result;
}

template <typename T>
SvdResult<T> truncate(const SvdResult<T>& full, std::size_t k) {
  if (k > full.rank()) {
    throw ContractError("truncate: rank " + std::to_string(k) + " exceeds " +
                        std::to_string(full.rank()));
  }
  SvdResult<T> out;
  out.U = BasicMatrix<T>(full.U.rows(), k);
  out.Vt = BasicMatrix<T>(k, full.Vt.cols());
  out.S.assign(full.S.begin(), full.S.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t i = 0; i < full.U.rows(); ++i)
    for (std::size_t j = 0; j < k; ++j) out.U(i, j) = full.U(i, j);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < full.Vt.cols(); ++i) out.Vt(j, i) = full.Vt(j, i);
  return out;
}

template <typename T>
BasicMatrix<T> reconstruct(const SvdResult<T>& s) {
  BasicMatrix<T> us = s.U;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= s.S[j];
  return matmul(us, s.Vt);
}

template SvdResult<float> svd(const Matrix&, const SvdOptions&);
template SvdResult<double> svd(const MatrixD&, const SvdOptions&);
template SvdResult<float> truncate(const SvdResult<float>&, std::size_t);
template SvdResult<double> truncate(const SvdResult<double>&, std::size_t);
template Matrix reconstruct(const SvdResult<float>&);
template MatrixD reconstruct(const SvdResult<double>&);

}  // namespace elas
