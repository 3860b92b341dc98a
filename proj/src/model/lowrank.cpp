#include "elas/model/lowrank.hpp"

#include <algorithm>
#include <iostream>

#include "elas/numerics/init.hpp"
#include "elas/numerics/linalg.hpp"

namespace elas {

template <typename T>
LowRankLinear<T> LowRankLinear<T>::xavier(std::size_t d_out, std::size_t d_in, std::size_t rank,
                                          std::uint64_t seed) {
  return from_factors(xavier_init<T>(d_out, rank, mix_seed(seed, 0)),
                      xavier_init<T>(rank, d_in, mix_seed(seed, 1)));
}

template <typename T>
LowRankLinear<T> LowRankLinear<T>::from_factors(BasicMatrix<T> a, BasicMatrix<T> b) {
  LowRankLinear layer{std::move(a), std::move(b)};
  layer.validate();
  if (layer.rank_exceeds_half()) {
    std::clog << "warning: low-rank layer " << layer.d_out() << "x" << layer.d_in() << " with rank "
              << layer.rank() << " exceeds half the smaller dimension\n";
  }
  return layer;
}

template <typename T>
void LowRankLinear<T>::validate() const {
  if (A.cols() != B.rows()) {
    throw ContractError("low-rank factors disagree on rank: A " + shape_string(A) + ", B " +
                        shape_string(B));
  }
  if (rank() == 0 || rank() > std::min(d_out(), d_in())) {
    throw ContractError("rank " + std::to_string(rank()) + " invalid for " +
                        shape_string(d_out(), d_in()) + " layer");
  }
}

template <typename T>
bool LowRankLinear<T>::rank_exceeds_half() const noexcept {
  return 2 * rank() > std::min(d_out(), d_in());
}

template <typename T>
BasicMatrix<T> LowRankLinear<T>::product() const {
  return matmul(A, B);
}

template <typename T>
BasicMatrix<T> lr_forward(const LowRankLinear<T>& layer, const BasicMatrix<T>& x) {
  if (x.cols() != layer.d_in()) {
    throw ContractError("lr_forward: input " + shape_string(x) + " for layer with d_in " +
                        std::to_string(layer.d_in()));
  }
  return matmul_nt(matmul_nt(x, layer.B), layer.A);
}

template <typename T>
LowRankGrads<T> lr_backward(const LowRankLinear<T>& layer, const BasicMatrix<T>& x,
                            const BasicMatrix<T>& grad_y) {
  if (x.cols() != layer.d_in() || grad_y.cols() != layer.d_out() || x.rows() != grad_y.rows()) {
    throw ContractError("lr_backward: input " + shape_string(x) + ", grad " +
                        shape_string(grad_y) + " for " + shape_string(layer.d_out(), layer.d_in()) +
                        " layer");
  }
  const BasicMatrix<T> hidden = matmul_nt(x, layer.B);
  const BasicMatrix<T> grad_hidden = matmul(grad_y, layer.A);
  LowRankGrads<T> g;
  g.A = matmul_tn(grad_y, hidden);
  g.B = matmul_tn(grad_hidden, x);
  g.x = matmul(grad_hidden, layer.B);
  return g;
}

template <typename T>
BasicMatrix<T> relu2_forward(const BasicMatrix<T>& z) {
  BasicMatrix<T> out(z.rows(), z.cols());
  const T* src = z.data();
  T* dst = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T r = src[i] > T{0} ? src[i] : T{0};
    dst[i] = r * r;
  }
  return out;
}

template <typename T>
BasicMatrix<T> relu2_backward(const BasicMatrix<T>& z, const BasicMatrix<T>& grad_out) {
  if (!z.same_shape(grad_out)) {
    throw ContractError("relu2_backward: " + shape_string(z) + " vs " + shape_string(grad_out));
  }
  BasicMatrix<T> out(z.rows(), z.cols());
  const T* src = z.data();
  const T* g = grad_out.data();
  T* dst = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) dst[i] = src[i] > T{0} ? T{2} * src[i] * g[i] : T{0};
  return out;
}

template struct LowRankLinear<float>;
template struct LowRankLinear<double>;
template Matrix lr_forward(const LowRankLinear<float>&, const Matrix&);
template MatrixD lr_forward(const LowRankLinear<double>&, const MatrixD&);
template LowRankGrads<float> lr_backward(const LowRankLinear<float>&, const Matrix&, const Matrix&);
template LowRankGrads<double> lr_backward(const LowRankLinear<double>&, const MatrixD&,
                                          const MatrixD&);
template Matrix relu2_forward(const Matrix&);
template MatrixD relu2_forward(const MatrixD&);
template Matrix relu2_backward(const Matrix&, const Matrix&);
template MatrixD relu2_backward(const MatrixD&, const MatrixD&);

}  // namespace elas
