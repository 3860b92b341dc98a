#include <doctest.h>

#include <cmath>
#include <map>

#include "../support/oracles.hpp"
#include "elas/numerics/errors.hpp"
#include "elas/numerics/init.hpp"
#include "elas/numerics/linalg.hpp"
#include "elas/model/ffn.hpp"
#include "elas/model/transformer.hpp"

using namespace elas;

namespace {

// Scalar loss used for the block-level checks: L = ⟨y, w⟩ for a fixed w.
double probe_loss(const MatrixD& y, const MatrixD& w) { return inner(y, w); }

ModelDims small_dims() { return ModelDims{11, 16, 16, 2, 2, 8, 4, 4}; }

TokenBatch small_batch(const ModelDims& d, std::size_t batch, std::uint64_t seed) {
  TokenBatch b{batch, d.seq_len, {}, {}};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < b.tokens(); ++i) {
    b.inputs.push_back(static_cast<std::int32_t>(rng() % d.vocab));
    b.targets.push_back(static_cast<std::int32_t>(rng() % d.vocab));
  }
  return b;
}

std::map<std::string, MatrixD*> params_by_name(TinyTransformer<double>& m) {
  std::map<std::string, MatrixD*> out;
  m.for_each_parameter([&](const std::string& name, MatrixD& p) { out[name] = &p; });
  return out;
}

}  // namespace

TEST_CASE("lr_forward matches x·Bᵀ·Aᵀ against the naive product") {
  const auto layer = LowRankLinear<double>::xavier(12, 20, 5, 1);
  const MatrixD x = normal_matrix<double>(7, 20, 1.0, 2);
  const MatrixD want = oracle::naive_matmul(x, transpose(layer.product()));
  CHECK(relative_error(lr_forward(layer, x), want) < 1e-12);
  CHECK(lr_forward(layer, x).rows() == 7);
  CHECK(lr_forward(layer, x).cols() == 12);
  CHECK_THROWS_AS(lr_forward(layer, MatrixD(3, 19)), ContractError);
}

TEST_CASE("low-rank factors: validation and rank checks") {
  CHECK_THROWS_AS(LowRankLinear<double>::from_factors(MatrixD(4, 2), MatrixD(3, 5)), ContractError);
  CHECK_THROWS_AS(LowRankLinear<double>::from_factors(MatrixD(2, 3), MatrixD(3, 5)), ContractError);
  CHECK(LowRankLinear<double>::xavier(64, 64, 40, 0).rank_exceeds_half());
  CHECK_FALSE(LowRankLinear<double>::xavier(64, 64, 16, 0).rank_exceeds_half());
}

TEST_CASE("the product A·B always lies in the column space of A") {
  const auto layer = LowRankLinear<double>::xavier(10, 14, 3, 6);
  // Project each column of AB onto col(A) via the normal equations.
  const MatrixD& a = layer.A;
  const MatrixD w = layer.product();
  const MatrixD ata = matmul_tn(a, a);
  // 3×3 Gaussian elimination, no pivoting needed for a Gram matrix.
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double m[3][4];
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 3; ++c) m[r][c] = ata(r, c);
      double rhs = 0;
      for (std::size_t i = 0; i < a.rows(); ++i) rhs += a(i, r) * w(i, j);
      m[r][3] = rhs;
    }
    for (int p = 0; p < 3; ++p)
      for (int r = p + 1; r < 3; ++r) {
        const double f = m[r][p] / m[p][p];
        for (int c = p; c < 4; ++c) m[r][c] -= f * m[p][c];
      }
    double coef[3];
    for (int p = 2; p >= 0; --p) {
      double s = m[p][3];
      for (int c = p + 1; c < 3; ++c) s -= m[p][c] * coef[c];
      coef[p] = s / m[p][p];
    }
    double resid = 0, norm = 0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double proj = 0;
      for (int r = 0; r < 3; ++r) proj += a(i, r) * coef[r];
      resid += (proj - w(i, j)) * (proj - w(i, j));
      norm += w(i, j) * w(i, j);
    }
    CHECK(std::sqrt(resid / norm) < 1e-10);
  }
}

TEST_CASE("lr_backward agrees with central differences") {
  auto layer = LowRankLinear<double>::xavier(9, 13, 4, 3);
  MatrixD x = normal_matrix<double>(6, 13, 1.0, 4);
  const MatrixD w = normal_matrix<double>(6, 9, 1.0, 5);
  const auto g = lr_backward(layer, x, w);
  auto loss = [&] { return probe_loss(lr_forward(layer, x), w); };
  CHECK(oracle::grad_rel_error(g.A, oracle::numeric_gradient(layer.A, loss)) < 1e-6);
  CHECK(oracle::grad_rel_error(g.B, oracle::numeric_gradient(layer.B, loss)) < 1e-6);
  CHECK(oracle::grad_rel_error(g.x, oracle::numeric_gradient(x, loss)) < 1e-6);
}

TEST_CASE("relu2 forward and backward") {
  const MatrixD z(1, 4, std::vector<double>{-2.0, 0.0, 0.5, 3.0});
  CHECK(relu2_forward(z) == MatrixD(1, 4, std::vector<double>{0.0, 0.0, 0.25, 9.0}));
  const MatrixD ones(1, 4, 1.0);
  CHECK(relu2_backward(z, ones) == MatrixD(1, 4, std::vector<double>{0.0, 0.0, 1.0, 6.0}));

  // Away from the kink the derivative is smooth, so FD is exact to O(h²).
  MatrixD zz = normal_matrix<double>(5, 8, 1.0, 7);
  for (auto& v : zz.values())
    if (std::abs(v) < 1e-3) v = 0.1;
  const MatrixD w = normal_matrix<double>(5, 8, 1.0, 8);
  auto loss = [&] { return probe_loss(relu2_forward(zz), w); };
  CHECK(oracle::grad_rel_error(relu2_backward(zz, w), oracle::numeric_gradient(zz, loss)) < 1e-7);
}

TEST_CASE("dense FFN backward agrees with central differences") {
  auto ffn = SparseFfn<double>::xavier(12, 16, 4, 9);
  MatrixD x = normal_matrix<double>(5, 12, 1.0, 10);
  const MatrixD w = normal_matrix<double>(5, 12, 1.0, 11);
  const auto fwd = ffn_forward(ffn, x, false);
  CHECK(fwd.saved.storage == StorageTag::dense);
  const auto g = ffn_backward(ffn, fwd.saved, w);
  auto loss = [&] { return probe_loss(ffn_forward(ffn, x, false).y, w); };
  CHECK(oracle::grad_rel_error(g.up_A, oracle::numeric_gradient(ffn.up.A, loss)) < 1e-5);
  CHECK(oracle::grad_rel_error(g.up_B, oracle::numeric_gradient(ffn.up.B, loss)) < 1e-5);
  CHECK(oracle::grad_rel_error(g.down_A, oracle::numeric_gradient(ffn.down.A, loss)) < 1e-5);
  CHECK(oracle::grad_rel_error(g.down_B, oracle::numeric_gradient(ffn.down.B, loss)) < 1e-5);
  CHECK(oracle::grad_rel_error(g.x, oracle::numeric_gradient(x, loss)) < 1e-5);
}

TEST_CASE("sparse FFN: packed forward equals the dense-masked reference") {
  for (auto kind : {SparsifierKind::naive, SparsifierKind::soft_weights}) {
    SparsifierVariant variant;
    variant.kind = kind;
    const auto ffn = SparseFfn<float>::xavier(32, 64, 8, 12, variant);
    const Matrix x = normal_matrix<float>(16, 32, 1.0, 13);
    const auto fwd = ffn_forward(ffn, x, true);
    CHECK(fwd.saved.storage == StorageTag::packed24);

    const Matrix a = relu2_forward(lr_forward(ffn.up, x));
    const Matrix ref = lr_forward(ffn.down, sparsify(a, variant));
    CHECK(relative_error(fwd.y, ref) < 1e-5);
    CHECK(fwd.saved.natural_sparsity == doctest::Approx(zero_fraction(a)));
  }
}

TEST_CASE("sparse FFN: straight-through gradient is passed unchanged") {
  const auto ffn = SparseFfn<float>::xavier(16, 32, 4, 14);
  const Matrix x = normal_matrix<float>(8, 16, 1.0, 15);
  const Matrix gy = normal_matrix<float>(8, 16, 1.0, 16);
  const auto fwd = ffn_forward(ffn, x, true);
  const auto g = ffn_backward(ffn, fwd.saved, gy);
  CHECK(g.activation == g.activation_sparse);
  CHECK(g.activation == ste_backward(g.activation_sparse));
}

TEST_CASE("sparse FFN: with an already-2:4 activation the sparse path matches dense") {
  // Zero the up-projection rows feeding positions 2 and 3 of every group, so
  // the activation is already 2:4 and the mask changes nothing.
  auto ffn = SparseFfn<double>::xavier(8, 16, 4, 17);
  for (std::size_t f = 0; f < 16; ++f)
    if (f % 4 >= 2)
      for (std::size_t k = 0; k < ffn.up.rank(); ++k) ffn.up.A(f, k) = 0.0;
  const MatrixD x = normal_matrix<double>(6, 8, 1.0, 18);
  const MatrixD gy = normal_matrix<double>(6, 8, 1.0, 19);
  const auto dense = ffn_forward(ffn, x, false);
  const auto sparse = ffn_forward(ffn, x, true);
  CHECK(relative_error(sparse.y, dense.y) < 1e-12);
  const auto gd = ffn_backward(ffn, dense.saved, gy);
  const auto gs = ffn_backward(ffn, sparse.saved, gy);
  CHECK(relative_error(gs.up_A, gd.up_A) < 1e-12);
  CHECK(relative_error(gs.down_B, gd.down_B) < 1e-12);
  CHECK(relative_error(gs.x, gd.x) < 1e-12);
}

TEST_CASE("sparse FFN saves 9/16 of the dense intermediate bytes") {
  const auto ffn = SparseFfn<float>::xavier(16, 64, 4, 20);
  const Matrix x = normal_matrix<float>(32, 16, 1.0, 21);
  const double dense = ffn_forward(ffn, x, false).saved.intermediate_bytes(2.0);
  const double sparse = ffn_forward(ffn, x, true).saved.intermediate_bytes(2.0);
  CHECK(sparse / dense == doctest::Approx(9.0 / 16.0).epsilon(1e-12));
}

TEST_CASE("ffn_backward rejects foreign or mismatched saved state") {
  const auto a = SparseFfn<float>::xavier(8, 16, 4, 22);
  const auto b = SparseFfn<float>::xavier(8, 16, 4, 23);
  const Matrix x = normal_matrix<float>(4, 8, 1.0, 24);
  const auto fwd = ffn_forward(a, x, true);
  CHECK_THROWS_AS(ffn_backward(b, fwd.saved, Matrix(4, 8)), ContractError);
  CHECK_THROWS_AS(ffn_backward(a, fwd.saved, Matrix(3, 8)), ContractError);
  CHECK_THROWS_AS(SparseFfn<float>::xavier(8, 18, 4, 0), ShapeError);
}

TEST_CASE("transformer backward agrees with central differences in double") {
  const ModelDims d = small_dims();
  auto model = TinyTransformer<double>::init(d, 25);
  const TokenBatch batch = small_batch(d, 2, 26);
  const auto fwd = model_forward(model, batch, false);
  auto grads = model_backward(model, fwd.saved);
  auto loss = [&] { return model_forward(model, batch, false, false).loss; };

  auto p = params_by_name(model);
  auto g = params_by_name(grads);
  double worst = 0.0;
  std::string worst_name;
  for (auto& [name, param] : p) {
    const double err = oracle::grad_rel_error(*g[name], oracle::numeric_gradient(*param, loss));
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  }
  INFO("worst parameter: " << worst_name);
  CHECK(worst < 1e-5);
}

TEST_CASE("transformer: shapes, initial loss and edge cases") {
  const ModelDims d = small_dims();
  const auto model = TinyTransformer<float>::init(d, 27);
  const TokenBatch batch = small_batch(d, 3, 28);
  const auto fwd = model_forward(model, batch, true);
  CHECK(fwd.logits.rows() == batch.tokens());
  CHECK(fwd.logits.cols() == d.vocab);
  // Small random init: logits are nearly flat.
  CHECK(fwd.loss == doctest::Approx(std::log(static_cast<double>(d.vocab))).epsilon(0.1));
  CHECK(fwd.saved.sparsifier_calls == d.layers);
  CHECK(model_forward(model, batch, false).saved.sparsifier_calls == 0);

  TokenBatch bad = batch;
  bad.inputs[0] = static_cast<std::int32_t>(d.vocab);
  CHECK_THROWS_AS(model_forward(model, bad, false), ContractError);

  ModelDims one = d;
  one.vocab = 1;
  const auto single = TinyTransformer<float>::init(one, 0);
  TokenBatch zeros{1, d.seq_len, std::vector<std::int32_t>(d.seq_len, 0),
                   std::vector<std::int32_t>(d.seq_len, 0)};
  CHECK(model_forward(single, zeros, false).loss == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("transformer init is deterministic in the seed") {
  const ModelDims d = small_dims();
  const auto a = TinyTransformer<float>::init(d, 5);
  const auto b = TinyTransformer<float>::init(d, 5);
  const auto c = TinyTransformer<float>::init(d, 6);
  CHECK(a.embedding == b.embedding);
  CHECK(a.layers[1].ffn.down.B == b.layers[1].ffn.down.B);
  CHECK_FALSE(a.embedding == c.embedding);
}
