#include "elas/model/ffn.hpp"

#include "elas/numerics/init.hpp"
#include "elas/numerics/linalg.hpp"

namespace elas {

template <typename T>
SparseFfn<T> SparseFfn<T>::xavier(std::size_t d_model, std::size_t d_ff, std::size_t rank,
                                  std::uint64_t seed, SparsifierVariant variant) {
  SparseFfn ffn{LowRankLinear<T>::xavier(d_ff, d_model, rank, mix_seed(seed, 0)),
                LowRankLinear<T>::xavier(d_model, d_ff, rank, mix_seed(seed, 1)),
                std::move(variant), true};
  ffn.validate();
  return ffn;
}

template <typename T>
void SparseFfn<T>::validate() const {
  up.validate();
  down.validate();
  if (down.d_in() != up.d_out() || down.d_out() != up.d_in()) {
    throw ContractError("ffn projections disagree: up " + shape_string(up.d_out(), up.d_in()) +
                        ", down " + shape_string(down.d_out(), down.d_in()));
  }
  if (sparsity_enabled) require_group_aligned(d_ff(), "SparseFfn");
  sparsifier.validate();
}

template <typename T>
double FfnSaved<T>::intermediate_bytes(double element_bytes) const noexcept {
  if (storage == StorageTag::packed24) {
    return pre_activation_packed.storage_bytes(element_bytes) +
           activation_packed.storage_bytes(element_bytes);
  }
  return static_cast<double>(pre_activation.size() + activation.size()) * element_bytes;
}

template <typename T>
FfnForward<T> ffn_forward(const SparseFfn<T>& ffn, const BasicMatrix<T>& x, bool sparsity_on) {
  FfnForward<T> out;
  FfnSaved<T>& saved = out.saved;
  saved.owner = &ffn;
  saved.input = x;

  BasicMatrix<T> z = lr_forward(ffn.up, x);
  BasicMatrix<T> a = relu2_forward(z);
  saved.natural_sparsity = zero_fraction(a);

  if (sparsity_on && ffn.sparsity_enabled) {
    require_group_aligned(ffn.d_ff(), "ffn_forward");
    const Mask24 mask = mask_top2(a);
    const BasicMatrix<T> a_sparse = sparsify(a, ffn.sparsifier);
    saved.storage = StorageTag::packed24;
    saved.activation_packed = pack_with_mask(a_sparse, mask);
    saved.pre_activation_packed = pack_with_mask(z, mask);
    const BasicMatrix<T> hidden = spmm(saved.activation_packed, transpose(ffn.down.B));
    out.y = matmul_nt(hidden, ffn.down.A);
  } else {
    saved.storage = StorageTag::dense;
    out.y = lr_forward(ffn.down, a);
    saved.pre_activation = std::move(z);
    saved.activation = std::move(a);
  }
  return out;
}

template <typename T>
FfnGrads<T> ffn_backward(const SparseFfn<T>& ffn, const FfnSaved<T>& saved,
                         const BasicMatrix<T>& grad_y) {
  if (saved.owner != &ffn) {
    throw ContractError("ffn_backward: saved activations belong to a different block");
  }
  if (grad_y.rows() != saved.tokens() || grad_y.cols() != ffn.d_model() ||
      saved.input.cols() != ffn.d_model()) {
    throw ContractError("ffn_backward: gradient " + shape_string(grad_y) + " does not match saved " +
                        shape_string(saved.input));
  }

  FfnGrads<T> g;
  BasicMatrix<T> pre_activation;
  if (saved.storage == StorageTag::packed24) {
    const auto& packed = saved.activation_packed;
    if (packed.rows != saved.tokens() || packed.cols != ffn.d_ff()) {
      throw ContractError("ffn_backward: packed activation has shape " +
                          shape_string(packed.rows, packed.cols));
    }
    const BasicMatrix<T> hidden = spmm(packed, transpose(ffn.down.B));
    const BasicMatrix<T> grad_hidden = matmul(grad_y, ffn.down.A);
    g.down_A = matmul_tn(grad_y, hidden);
    g.down_B = transpose(spmm_tn(packed, grad_hidden));
    g.activation_sparse = matmul(grad_hidden, ffn.down.B);
    g.activation = ste_backward(g.activation_sparse);
    pre_activation = unpack(saved.pre_activation_packed);
  } else {
    if (saved.activation.rows() != saved.tokens() || saved.activation.cols() != ffn.d_ff()) {
      throw ContractError("ffn_backward: dense activation has shape " +
                          shape_string(saved.activation));
    }
    LowRankGrads<T> down = lr_backward(ffn.down, saved.activation, grad_y);
    g.down_A = std::move(down.A);
    g.down_B = std::move(down.B);
    g.activation_sparse = std::move(down.x);
    g.activation = g.activation_sparse;
    pre_activation = saved.pre_activation;
  }

  const BasicMatrix<T> grad_z = relu2_backward(pre_activation, g.activation);
  LowRankGrads<T> up = lr_backward(ffn.up, saved.input, grad_z);
  g.up_A = std::move(up.A);
  g.up_B = std::move(up.B);
  g.x = std::move(up.x);
  return g;
}

template struct SparseFfn<float>;
template struct SparseFfn<double>;
template struct FfnSaved<float>;
template struct FfnSaved<double>;
template FfnForward<float> ffn_forward(const SparseFfn<float>&, const Matrix&, bool);
template FfnForward<double> ffn_forward(const SparseFfn<double>&, const MatrixD&, bool);
template FfnGrads<float> ffn_backward(const SparseFfn<float>&, const FfnSaved<float>&,
                                      const Matrix&);
template FfnGrads<double> ffn_backward(const SparseFfn<double>&, const FfnSaved<double>&,
                                       const MatrixD&);

}  // namespace elas
