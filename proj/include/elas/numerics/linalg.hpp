#pragma once

#include "elas/numerics/matrix.hpp"

namespace elas {

// All kernels accumulate over the inner dimension in ascending index order, so
// results are bit-identical from call to call and match a naive triple loop.

/// a · b. Throws ContractError unless a.cols == b.rows.
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

/// a · bᵀ. Throws ContractError unless a.cols == b.cols.
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

/// aᵀ · b. Throws ContractError unless a.rows == b.rows.
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a);

/// a += b (same shape).
template <typename T>
void add_inplace(BasicMatrix<T>& a, const BasicMatrix<T>& b);

/// a += scale · b (same shape).
template <typename T>
void axpy_inplace(BasicMatrix<T>& a, T scale, const BasicMatrix<T>& b);

template <typename T>
BasicMatrix<T> hadamard(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
BasicMatrix<T> scaled(const BasicMatrix<T>& a, T scale);

/// Frobenius inner product, accumulated in double.
template <typename T>
double inner(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
double frobenius_norm(const BasicMatrix<T>& a);

/// ‖a − b‖_F / ‖b‖_F, or ‖a − b‖_F when b is zero.
template <typename T>
double relative_error(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
bool all_finite(const BasicMatrix<T>& a);

}  // namespace elas
