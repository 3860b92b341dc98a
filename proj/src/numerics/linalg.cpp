#include "elas/numerics/linalg.hpp"

#include <cmath>

namespace elas {

namespace {

template <typename T>
void require_same_shape(const BasicMatrix<T>& a, const BasicMatrix<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                        shape_string(b));
  }
}

}  // namespace

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ContractError("matmul: " + shape_string(a) + " x " + shape_string(b));
  }
  const std::size_t n = a.rows(), inner_dim = a.cols(), m = b.cols();
  BasicMatrix<T> c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    T* out = c.data() + i * m;
    const T* arow = a.data() + i * inner_dim;
    for (std::size_t k = 0; k < inner_dim; ++k) {
      const T aik = arow[k];
      const T* brow = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw ContractError("matmul_nt: " + shape_string(a) + " x " + shape_string(b) + "^T");
  }
  return matmul(a, transpose(b));
}

template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw ContractError("matmul_tn: " + shape_string(a) + "^T x " + shape_string(b));
  }
  const std::size_t inner_dim = a.rows(), n = a.cols(), m = b.cols();
  BasicMatrix<T> c(n, m);
  for (std::size_t k = 0; k < inner_dim; ++k) {
    const T* arow = a.data() + k * n;
    const T* brow = b.data() + k * m;
    for (std::size_t i = 0; i < n; ++i) {
      const T aki = arow[i];
      T* out = c.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) out[j] += aki * brow[j];
    }
  }
  return c;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a) {
  BasicMatrix<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <typename T>
void add_inplace(BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require_same_shape(a, b, "add");
  auto dst = a.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void axpy_inplace(BasicMatrix<T>& a, T scale, const BasicMatrix<T>& b) {
  require_same_shape(a, b, "axpy");
  auto dst = a.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

template <typename T>
BasicMatrix<T> hadamard(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require_same_shape(a, b, "hadamard");
  BasicMatrix<T> c = a;
  auto dst = c.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] *= src[i];
  return c;
}

template <typename T>
BasicMatrix<T> scaled(const BasicMatrix<T>& a, T scale) {
  BasicMatrix<T> c = a;
  for (T& v : c.values()) v *= scale;
  return c;
}

template <typename T>
double inner(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require_same_shape(a, b, "inner");
  double acc = 0.0;
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return acc;
}

template <typename T>
double frobenius_norm(const BasicMatrix<T>& a) {
  return std::sqrt(inner(a, a));
}

template <typename T>
double relative_error(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require_same_shape(a, b, "relative_error");
  double diff = 0.0, ref = 0.0;
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    diff += d * d;
    ref += static_cast<double>(y[i]) * static_cast<double>(y[i]);
  }
  return ref > 0.0 ? std::sqrt(diff / ref) : std::sqrt(diff);
}

template <typename T>
bool all_finite(const BasicMatrix<T>& a) {
  for (T v : a.values())
    if (!std::isfinite(v)) return false;
  return true;
}

#define ELAS_INSTANTIATE_LINALG(T)                                                   \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);      \
  template BasicMatrix<T> matmul_nt(const BasicMatrix<T>&, const BasicMatrix<T>&);   \
  template BasicMatrix<T> matmul_tn(const BasicMatrix<T>&, const BasicMatrix<T>&);   \
  template BasicMatrix<T> transpose(const BasicMatrix<T>&);                          \
  template void add_inplace(BasicMatrix<T>&, const BasicMatrix<T>&);                 \
  template void axpy_inplace(BasicMatrix<T>&, T, const BasicMatrix<T>&);             \
  template BasicMatrix<T> hadamard(const BasicMatrix<T>&, const BasicMatrix<T>&);    \
  template BasicMatrix<T> scaled(const BasicMatrix<T>&, T);                          \
  template double inner(const BasicMatrix<T>&, const BasicMatrix<T>&);               \
  template double frobenius_norm(const BasicMatrix<T>&);                             \
  template double relative_error(const BasicMatrix<T>&, const BasicMatrix<T>&);      \
  template bool all_finite(const BasicMatrix<T>&);

ELAS_INSTANTIATE_LINALG(float)
ELAS_INSTANTIATE_LINALG(double)

#undef ELAS_INSTANTIATE_LINALG

}  // namespace elas
