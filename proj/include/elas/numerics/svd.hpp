#pragma once

#include <vector>

#include "elas/numerics/matrix.hpp"

namespace elas {

/// Thin SVD m = U · diag(S) · Vt with k = min(rows, cols).
///
/// S is non-increasing and non-negative. U (rows×k) has orthonormal columns and
/// Vt (k×cols) orthonormal rows, including the directions of zero singular
/// values, which are completed to an orthonormal basis.
template <typename T>
struct SvdResult {
  BasicMatrix<T> U;
  std::vector<T> S;
  BasicMatrix<T> Vt;

  std::size_t rank() const noexcept { return S.size(); }
};

struct SvdOptions {
  int max_sweeps = 10000;
  double tolerance = 1e-15;
};

/// One-sided (Hestenes) Jacobi SVD. Arithmetic is carried out in double for
/// both instantiations. Throws NumericError on non-finite input or when the
/// sweep cap is reached before convergence.
template <typename T>
SvdResult<T> svd(const BasicMatrix<T>& m, const SvdOptions& options = {});

/// Keeps the leading k singular triplets.
template <typename T>
SvdResult<T> truncate(const SvdResult<T>& full, std::size_t k);

/// U · diag(S) · Vt.
template <typename T>
BasicMatrix<T> reconstruct(const SvdResult<T>& s);

}  // namespace elas
