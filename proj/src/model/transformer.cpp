#include "elas/model/transformer.hpp"

#include <cmath>

#include "elas/numerics/init.hpp"
#include "elas/numerics/linalg.hpp"

namespace elas {

namespace {

constexpr double kRmsEps = 1e-5;
constexpr double kEmbeddingStd = 0.02;

template <typename T>
BasicMatrix<T> rmsnorm_forward(const BasicMatrix<T>& x, const BasicMatrix<T>& gain,
                               std::vector<T>& inv_rms) {
  const std::size_t d = x.cols();
  BasicMatrix<T> y(x.rows(), d);
  inv_rms.resize(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T* in = x.data() + r * d;
    double ms = 0.0;
    for (std::size_t c = 0; c < d; ++c) ms += static_cast<double>(in[c]) * in[c];
    const T inv = static_cast<T>(1.0 / std::sqrt(ms / static_cast<double>(d) + kRmsEps));
    inv_rms[r] = inv;
    T* out = y.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) out[c] = in[c] * inv * gain.data()[c];
  }
  return y;
}

// Returns ∂L/∂x and accumulates ∂L/∂gain.
template <typename T>
BasicMatrix<T> rmsnorm_backward(const BasicMatrix<T>& x, const std::vector<T>& inv_rms,
                                const BasicMatrix<T>& gain, const BasicMatrix<T>& grad_y,
                                BasicMatrix<T>& grad_gain) {
  const std::size_t d = x.cols();
  BasicMatrix<T> gx(x.rows(), d);
  std::vector<T> dxhat(d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T* in = x.data() + r * d;
    const T* gy = grad_y.data() + r * d;
    const T inv = inv_rms[r];
    double proj = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const T xhat = in[c] * inv;
      dxhat[c] = gy[c] * gain.data()[c];
      grad_gain.data()[c] += gy[c] * xhat;
      proj += static_cast<double>(dxhat[c]) * xhat;
    }
    const T mean = static_cast<T>(proj / static_cast<double>(d));
    T* out = gx.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) out[c] = inv * (dxhat[c] - in[c] * inv * mean);
  }
  return gx;
}

template <typename T>
BasicMatrix<T> attention_forward(const ModelDims& dims, std::size_t batch, std::size_t seq,
                                 const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                                 const BasicMatrix<T>& v, std::vector<T>& probs) {
  const std::size_t d = dims.d_model, dh = dims.head_dim(), heads = dims.heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  BasicMatrix<T> context(batch * seq, d);
  probs.assign(batch * heads * seq * seq, T{0});
  std::vector<double> scores(seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t col = h * dh;
      T* p = probs.data() + (b * heads + h) * seq * seq;
      for (std::size_t t = 0; t < seq; ++t) {
        const T* qt = q.data() + (b * seq + t) * d + col;
        double peak = -INFINITY;
        for (std::size_t s = 0; s <= t; ++s) {
          const T* ks = k.data() + (b * seq + s) * d + col;
          T dot = 0;
          for (std::size_t c = 0; c < dh; ++c) dot += qt[c] * ks[c];
          scores[s] = static_cast<double>(dot * scale);
          peak = std::max(peak, scores[s]);
        }
        double total = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          scores[s] = std::exp(scores[s] - peak);
          total += scores[s];
        }
        T* out = context.data() + (b * seq + t) * d + col;
        for (std::size_t s = 0; s <= t; ++s) {
          const T w = static_cast<T>(scores[s] / total);
          p[t * seq + s] = w;
          const T* vs = v.data() + (b * seq + s) * d + col;
          for (std::size_t c = 0; c < dh; ++c) out[c] += w * vs[c];
        }
      }
    }
  }
  return context;
}

template <typename T>
void attention_backward(const ModelDims& dims, std::size_t batch, std::size_t seq,
                        const AttentionSaved<T>& saved, const BasicMatrix<T>& grad_context,
                        BasicMatrix<T>& gq, BasicMatrix<T>& gk, BasicMatrix<T>& gv) {
  const std::size_t d = dims.d_model, dh = dims.head_dim(), heads = dims.heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  gq = BasicMatrix<T>(batch * seq, d);
  gk = BasicMatrix<T>(batch * seq, d);
  gv = BasicMatrix<T>(batch * seq, d);
  std::vector<T> gp(seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t col = h * dh;
      const T* p = saved.probs.data() + (b * heads + h) * seq * seq;
      for (std::size_t t = 0; t < seq; ++t) {
        const std::size_t rt = (b * seq + t) * d + col;
        const T* gc = grad_context.data() + rt;
        double weighted = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          const std::size_t rs = (b * seq + s) * d + col;
          const T* vs = saved.v.data() + rs;
          T dot = 0;
          for (std::size_t c = 0; c < dh; ++c) dot += gc[c] * vs[c];
          gp[s] = dot;
          weighted += static_cast<double>(p[t * seq + s]) * dot;
          T* gvs = gv.data() + rs;
          const T w = p[t * seq + s];
          for (std::size_t c = 0; c < dh; ++c) gvs[c] += w * gc[c];
        }
        const T w_mean = static_cast<T>(weighted);
        const T* qt = saved.q.data() + rt;
        T* gqt = gq.data() + rt;
        for (std::size_t s = 0; s <= t; ++s) {
          const T gs = p[t * seq + s] * (gp[s] - w_mean) * scale;
          if (gs == T{0}) continue;
          const std::size_t rs = (b * seq + s) * d + col;
          const T* ks = saved.k.data() + rs;
          T* gks = gk.data() + rs;
          for (std::size_t c = 0; c < dh; ++c) {
            gqt[c] += gs * ks[c];
            gks[c] += gs * qt[c];
          }
        }
      }
    }
  }
}

template <typename T>
void store_factor_grads(LowRankLinear<T>& dst, LowRankGrads<T>& g) {
  dst.A = std::move(g.A);
  dst.B = std::move(g.B);
}

}  // namespace

void ModelDims::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model dims: " + what); };
  if (vocab == 0 || d_model == 0 || d_ff == 0 || heads == 0 || layers == 0 || seq_len == 0)
    fail("all dimensions must be positive");
  if (d_model % heads != 0) fail("d_model must be divisible by heads");
  if (r_attn == 0 || r_attn > d_model) fail("r_attn must lie in [1, d_model]");
  if (r_mlp == 0 || r_mlp > std::min(d_model, d_ff)) fail("r_mlp must lie in [1, min(d_model, d_ff)]");
}

template <typename T>
TinyTransformer<T> TinyTransformer<T>::init(const ModelDims& dims, std::uint64_t seed,
                                            const SparsifierVariant& variant) {
  dims.validate();
  TinyTransformer m;
  m.dims = dims;
  m.embedding = normal_matrix<T>(dims.vocab, dims.d_model, kEmbeddingStd, mix_seed(seed, 0));
  m.position = normal_matrix<T>(dims.seq_len, dims.d_model, kEmbeddingStd, mix_seed(seed, 1));
  m.final_norm = BasicMatrix<T>(1, dims.d_model, T{1});
  for (std::size_t i = 0; i < dims.layers; ++i) {
    const std::uint64_t ls = mix_seed(seed, 100 + i);
    TransformerLayer<T> layer{
        BasicMatrix<T>(1, dims.d_model, T{1}),
        {LowRankLinear<T>::xavier(dims.d_model, dims.d_model, dims.r_attn, mix_seed(ls, 0)),
         LowRankLinear<T>::xavier(dims.d_model, dims.d_model, dims.r_attn, mix_seed(ls, 1)),
         LowRankLinear<T>::xavier(dims.d_model, dims.d_model, dims.r_attn, mix_seed(ls, 2)),
         LowRankLinear<T>::xavier(dims.d_model, dims.d_model, dims.r_attn, mix_seed(ls, 3))},
        BasicMatrix<T>(1, dims.d_model, T{1}),
        SparseFfn<T>::xavier(dims.d_model, dims.d_ff, dims.r_mlp, mix_seed(ls, 4), variant)};
    m.layers.push_back(std::move(layer));
  }
  return m;
}

template <typename T>
TinyTransformer<T> TinyTransformer<T>::zeros_like() const {
  TinyTransformer z = *this;
  z.for_each_parameter([](const std::string&, BasicMatrix<T>& p) { p.fill(T{0}); });
  return z;
}

template <typename T>
std::size_t TinyTransformer<T>::parameter_count() const {
  std::size_t n = 0;
  for_each_parameter([&](const std::string&, const BasicMatrix<T>& p) { n += p.size(); });
  return n;
}

template <typename T>
double SavedActivations<T>::natural_sparsity() const {
  if (layers.empty()) return 0.0;
  double total = 0.0;
  for (const auto& l : layers) total += l.ffn.natural_sparsity;
  return total / static_cast<double>(layers.size());
}

template <typename T>
double SavedActivations<T>::ffn_intermediate_bytes(double element_bytes) const {
  double total = 0.0;
  for (const auto& l : layers) total += l.ffn.intermediate_bytes(element_bytes);
  return total;
}

template <typename T>
ModelForward<T> model_forward(const TinyTransformer<T>& model, const TokenBatch& batch,
                              bool sparsity_on, bool keep_activations) {
  const ModelDims& dims = model.dims;
  const std::size_t n = batch.tokens(), d = dims.d_model;
  if (batch.seq == 0 || batch.batch == 0) throw ContractError("model_forward: empty batch");
  if (batch.seq > dims.seq_len) {
    throw ContractError("model_forward: sequence length " + std::to_string(batch.seq) +
                        " exceeds configured maximum " + std::to_string(dims.seq_len));
  }
  if (batch.inputs.size() != n || batch.targets.size() != n) {
    throw ContractError("model_forward: token arrays do not match batch shape");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::int32_t tok : {batch.inputs[i], batch.targets[i]}) {
      if (tok < 0 || static_cast<std::size_t>(tok) >= dims.vocab) {
        throw ContractError("model_forward: token id " + std::to_string(tok) +
                            " outside vocabulary of " + std::to_string(dims.vocab));
      }
    }
  }

  ModelForward<T> out;
  SavedActivations<T>& saved = out.saved;
  saved.owner = &model;
  saved.batch = batch;
  saved.layers.resize(dims.layers);

  BasicMatrix<T> x(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const T* e = model.embedding.data() + static_cast<std::size_t>(batch.inputs[r]) * d;
    const T* p = model.position.data() + (r % batch.seq) * d;
    T* dst = x.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) dst[c] = e[c] + p[c];
  }

  for (std::size_t i = 0; i < dims.layers; ++i) {
    const TransformerLayer<T>& layer = model.layers[i];
    LayerSaved<T>& ls = saved.layers[i];
    AttentionSaved<T>& as = ls.attn;

    as.normed = rmsnorm_forward(x, layer.attn_norm, as.inv_rms);
    as.q = lr_forward(layer.attn.q, as.normed);
    as.k = lr_forward(layer.attn.k, as.normed);
    as.v = lr_forward(layer.attn.v, as.normed);
    as.context = attention_forward(dims, batch.batch, batch.seq, as.q, as.k, as.v, as.probs);
    const BasicMatrix<T> attn_out = lr_forward(layer.attn.o, as.context);
    as.input = std::move(x);
    x = as.input;
    add_inplace(x, attn_out);

    const BasicMatrix<T> h = rmsnorm_forward(x, layer.ffn_norm, ls.ffn_inv_rms);
    FfnForward<T> f = ffn_forward(layer.ffn, h, sparsity_on);
    if (f.saved.storage == StorageTag::packed24) ++saved.sparsifier_calls;
    ls.mid = x;
    add_inplace(x, f.y);
    ls.ffn = std::move(f.saved);

    if (!keep_activations) {
      const double natural = ls.ffn.natural_sparsity;
      ls = LayerSaved<T>{};
      ls.ffn.natural_sparsity = natural;
    }
  }

  const BasicMatrix<T> normed = rmsnorm_forward(x, model.final_norm, saved.final_inv_rms);
  out.logits = matmul_nt(normed, model.embedding);

  const std::size_t vocab = dims.vocab;
  BasicMatrix<T> probs(n, vocab);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const T* z = out.logits.data() + r * vocab;
    double peak = -INFINITY;
    for (std::size_t c = 0; c < vocab; ++c) peak = std::max(peak, static_cast<double>(z[c]));
    double total = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) total += std::exp(static_cast<double>(z[c]) - peak);
    const double log_total = std::log(total) + peak;
    loss += log_total - static_cast<double>(z[batch.targets[r]]);
    T* pr = probs.data() + r * vocab;
    for (std::size_t c = 0; c < vocab; ++c)
      pr[c] = static_cast<T>(std::exp(static_cast<double>(z[c]) - log_total));
  }
  out.loss = loss / static_cast<double>(n);

  if (keep_activations) {
    saved.final_input = std::move(x);
    saved.final_normed = normed;
    saved.probs = std::move(probs);
  }
  return out;
}

template <typename T>
TinyTransformer<T> model_backward(const TinyTransformer<T>& model, const SavedActivations<T>& saved) {
  if (saved.owner != &model) {
    throw ContractError("model_backward: saved activations belong to a different model");
  }
  const ModelDims& dims = model.dims;
  const TokenBatch& batch = saved.batch;
  const std::size_t n = batch.tokens(), d = dims.d_model;
  if (saved.probs.rows() != n || saved.layers.size() != dims.layers) {
    throw ContractError("model_backward: saved state is incomplete (forward ran without activations?)");
  }

  TinyTransformer<T> grads = model.zeros_like();

  BasicMatrix<T> grad_logits = saved.probs;
  const T inv_n = static_cast<T>(1.0 / static_cast<double>(n));
  for (std::size_t r = 0; r < n; ++r) {
    T* g = grad_logits.data() + r * dims.vocab;
    g[batch.targets[r]] -= T{1};
    for (std::size_t c = 0; c < dims.vocab; ++c) g[c] *= inv_n;
  }
  grads.embedding = matmul_tn(grad_logits, saved.final_normed);
  const BasicMatrix<T> grad_normed = matmul(grad_logits, model.embedding);
  BasicMatrix<T> gx = rmsnorm_backward(saved.final_input, saved.final_inv_rms, model.final_norm,
                                       grad_normed, grads.final_norm);

  for (std::size_t i = dims.layers; i-- > 0;) {
    const TransformerLayer<T>& layer = model.layers[i];
    TransformerLayer<T>& gl = grads.layers[i];
    const LayerSaved<T>& ls = saved.layers[i];

    FfnGrads<T> fg = ffn_backward(layer.ffn, ls.ffn, gx);
    gl.ffn.up.A = std::move(fg.up_A);
    gl.ffn.up.B = std::move(fg.up_B);
    gl.ffn.down.A = std::move(fg.down_A);
    gl.ffn.down.B = std::move(fg.down_B);
    BasicMatrix<T> g_mid = rmsnorm_backward(ls.mid, ls.ffn_inv_rms, layer.ffn_norm, fg.x, gl.ffn_norm);
    add_inplace(g_mid, gx);

    const AttentionSaved<T>& as = ls.attn;
    LowRankGrads<T> og = lr_backward(layer.attn.o, as.context, g_mid);
    store_factor_grads(gl.attn.o, og);
    BasicMatrix<T> gq, gk, gv;
    attention_backward(dims, batch.batch, batch.seq, as, og.x, gq, gk, gv);
    LowRankGrads<T> qg = lr_backward(layer.attn.q, as.normed, gq);
    LowRankGrads<T> kg = lr_backward(layer.attn.k, as.normed, gk);
    LowRankGrads<T> vg = lr_backward(layer.attn.v, as.normed, gv);
    BasicMatrix<T> g_normed = std::move(qg.x);
    add_inplace(g_normed, kg.x);
    add_inplace(g_normed, vg.x);
    store_factor_grads(gl.attn.q, qg);
    store_factor_grads(gl.attn.k, kg);
    store_factor_grads(gl.attn.v, vg);
    gx = rmsnorm_backward(as.input, as.inv_rms, layer.attn_norm, g_normed, gl.attn_norm);
    add_inplace(gx, g_mid);
  }

  for (std::size_t r = 0; r < n; ++r) {
    const T* g = gx.data() + r * d;
    T* ge = grads.embedding.data() + static_cast<std::size_t>(batch.inputs[r]) * d;
    T* gp = grads.position.data() + (r % batch.seq) * d;
    for (std::size_t c = 0; c < d; ++c) {
      ge[c] += g[c];
      gp[c] += g[c];
    }
  }
  return grads;
}

template struct TinyTransformer<float>;
template struct TinyTransformer<double>;
template struct SavedActivations<float>;
template struct SavedActivations<double>;
template ModelForward<float> model_forward(const TinyTransformer<float>&, const TokenBatch&, bool, bool);
template ModelForward<double> model_forward(const TinyTransformer<double>&, const TokenBatch&, bool,
                                            bool);
template TinyTransformer<float> model_backward(const TinyTransformer<float>&,
                                               const SavedActivations<float>&);
template TinyTransformer<double> model_backward(const TinyTransformer<double>&,
                                                const SavedActivations<double>&);

}  // namespace elas
