#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "elas/model/ffn.hpp"
#include "elas/model/lowrank.hpp"

namespace elas {

struct ModelDims {
  std::size_t vocab = 256;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t seq_len = 64;
  std::size_t r_attn = 16;
  std::size_t r_mlp = 16;

  std::size_t head_dim() const noexcept { return d_model / heads; }
  void validate() const;
};

template <typename T>
struct AttentionBlock {
  LowRankLinear<T> q, k, v, o;
};

template <typename T>
struct TransformerLayer {
  BasicMatrix<T> attn_norm;  // 1 × d_model RMS-norm gain
  AttentionBlock<T> attn;
  BasicMatrix<T> ffn_norm;   // 1 × d_model
  SparseFfn<T> ffn;
};

/// Pre-norm causal decoder. Learned token and position embeddings; the output
/// head reuses the token embedding. Attention and FFN projections are
/// low-rank; only the FFN activation is ever sparsified.
template <typename T>
struct TinyTransformer {
  ModelDims dims;
  BasicMatrix<T> embedding;  // vocab × d_model
  BasicMatrix<T> position;   // seq_len × d_model
  std::vector<TransformerLayer<T>> layers;
  BasicMatrix<T> final_norm;  // 1 × d_model

  static TinyTransformer init(const ModelDims& dims, std::uint64_t seed,
                              const SparsifierVariant& variant = {});
  /// Same structure, every parameter zero; used as the gradient container.
  TinyTransformer zeros_like() const;

  /// Visits every trainable matrix in a fixed order with its dotted name.
  template <typename F>
  void for_each_parameter(F&& f);
  template <typename F>
  void for_each_parameter(F&& f) const;

  /// Visits every low-rank layer (attention q/k/v/o and FFN up/down).
  template <typename F>
  void for_each_low_rank(F&& f);

  std::size_t parameter_count() const;
};

/// Next-token batch: `batch` sequences of `seq` tokens laid out row-major.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;

  std::size_t tokens() const noexcept { return batch * seq; }
};

template <typename T>
struct AttentionSaved {
  BasicMatrix<T> input;       // residual stream entering the layer
  std::vector<T> inv_rms;     // per-row 1 / rms(input)
  BasicMatrix<T> normed;      // RMS-normed input
  BasicMatrix<T> q, k, v;
  std::vector<T> probs;       // batch · heads · seq · seq causal softmax
  BasicMatrix<T> context;     // attention output before the o projection
};

template <typename T>
struct LayerSaved {
  AttentionSaved<T> attn;
  BasicMatrix<T> mid;         // residual stream entering the FFN
  std::vector<T> ffn_inv_rms;
  FfnSaved<T> ffn;
};

/// Tensors retained by model_forward for model_backward.
template <typename T>
struct SavedActivations {
  const void* owner = nullptr;
  TokenBatch batch;
  std::vector<LayerSaved<T>> layers;
  BasicMatrix<T> final_input;
  std::vector<T> final_inv_rms;
  BasicMatrix<T> final_normed;
  BasicMatrix<T> probs;       // softmax of logits, tokens × vocab
  /// Number of FFN blocks that ran the sparsifier in this pass.
  std::size_t sparsifier_calls = 0;

  /// Mean natural (pre-mask) zero fraction of the FFN activations.
  double natural_sparsity() const;
  /// Bytes of saved FFN intermediates at `element_bytes` per value.
  double ffn_intermediate_bytes(double element_bytes) const;
};

template <typename T>
struct ModelForward {
  BasicMatrix<T> logits;  // tokens × vocab
  double loss = 0.0;      // mean next-token cross-entropy
  SavedActivations<T> saved;
};

/// Throws ContractError on out-of-range tokens or sequences longer than
/// dims.seq_len. With keep_activations false, `saved` only carries the
/// sparsity statistics.
template <typename T>
ModelForward<T> model_forward(const TinyTransformer<T>& model, const TokenBatch& batch,
                              bool sparsity_on, bool keep_activations = true);

/// Gradients of the mean loss, in a zeros_like() container.
template <typename T>
TinyTransformer<T> model_backward(const TinyTransformer<T>& model, const SavedActivations<T>& saved);

// --- template member definitions ---

template <typename T>
template <typename F>
void TinyTransformer<T>::for_each_parameter(F&& f) {
  f(std::string("embedding"), embedding);
  f(std::string("position"), position);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    f(p + "attn_norm", l.attn_norm);
    f(p + "attn.q.A", l.attn.q.A);
    f(p + "attn.q.B", l.attn.q.B);
    f(p + "attn.k.A", l.attn.k.A);
    f(p + "attn.k.B", l.attn.k.B);
    f(p + "attn.v.A", l.attn.v.A);
    f(p + "attn.v.B", l.attn.v.B);
    f(p + "attn.o.A", l.attn.o.A);
    f(p + "attn.o.B", l.attn.o.B);
    f(p + "ffn_norm", l.ffn_norm);
    f(p + "ffn.up.A", l.ffn.up.A);
    f(p + "ffn.up.B", l.ffn.up.B);
    f(p + "ffn.down.A", l.ffn.down.A);
    f(p + "ffn.down.B", l.ffn.down.B);
  }
  f(std::string("final_norm"), final_norm);
}

template <typename T>
template <typename F>
void TinyTransformer<T>::for_each_parameter(F&& f) const {
  const_cast<TinyTransformer*>(this)->for_each_parameter(
      [&](const std::string& name, BasicMatrix<T>& m) { f(name, static_cast<const BasicMatrix<T>&>(m)); });
}

template <typename T>
template <typename F>
void TinyTransformer<T>::for_each_low_rank(F&& f) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    f(p + "attn.q", l.attn.q);
    f(p + "attn.k", l.attn.k);
    f(p + "attn.v", l.attn.v);
    f(p + "attn.o", l.attn.o);
    f(p + "ffn.up", l.ffn.up);
    f(p + "ffn.down", l.ffn.down);
  }
}

}  // namespace elas
