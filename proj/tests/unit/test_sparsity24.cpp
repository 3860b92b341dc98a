#include <doctest.h>

#include <cmath>
#include <sstream>

#include "../support/oracles.hpp"
#include "elas/numerics/errors.hpp"
#include "elas/numerics/init.hpp"
#include "elas/numerics/linalg.hpp"
#include "elas/sparsity24/packed24.hpp"
#include "elas/sparsity24/sparsify.hpp"

using namespace elas;

namespace {

Matrix row(std::initializer_list<float> v) { return Matrix(1, v.size(), std::vector<float>(v)); }

std::vector<std::uint8_t> mask_bits(const Matrix& z) { return mask_top2(z).keep; }

}  // namespace

TEST_CASE("mask_top2 keeps the two largest magnitudes") {
  CHECK(mask_bits(row({3, -1, 0.5f, 2})) == std::vector<std::uint8_t>{1, 0, 0, 1});
  CHECK(mask_bits(row({0, 0, 0, 0})) == std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(mask_bits(row({1, 2, 2, 0})) == std::vector<std::uint8_t>{0, 1, 1, 0});
  CHECK(mask_bits(row({1, 1, 2, 0})) == std::vector<std::uint8_t>{1, 0, 1, 0});
  CHECK(mask_bits(row({0, -5, 5, 5})) == std::vector<std::uint8_t>{0, 1, 1, 0});
  CHECK_THROWS_AS(mask_top2(Matrix(2, 6)), ShapeError);
}

TEST_CASE("mask_top2 matches the six-subset energy oracle") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Matrix z = normal_matrix<float>(8, 16, 1.0, s);
    // Force some ties.
    for (std::size_t i = 0; i < z.size(); i += 7) z.data()[i] = z.data()[i / 2 * 2] = 1.0f;
    CHECK(mask_top2(z).keep == oracle::brute_force_keep(z));
  }
}

TEST_CASE("sparsify_naive: definition, idempotence, nonnegative inputs") {
  CHECK(sparsify_naive(row({3, -1, 0.5f, 2})) == row({3, 0, 0, 2}));
  const Matrix z = normal_matrix<float>(6, 12, 1.0, 3);
  const Matrix once = sparsify_naive(z);
  CHECK(sparsify_naive(once) == once);
  CHECK(satisfies_24(once));
  for (std::size_t i = 0; i < z.size(); ++i)
    if (once.data()[i] != 0.0f) CHECK(once.data()[i] == z.data()[i]);

  Matrix pos = uniform_matrix<float>(5, 8, 0.0, 1.0, 4);
  const Matrix kept = sparsify_naive(pos);
  for (std::size_t g = 0; g < pos.size() / 4; ++g) {
    float min_kept = 2.0f, max_dropped = -1.0f;
    for (int i = 0; i < 4; ++i) {
      const float v = pos.data()[4 * g + i];
      if (kept.data()[4 * g + i] != 0.0f) min_kept = std::min(min_kept, v);
      else max_dropped = std::max(max_dropped, v);
    }
    CHECK(min_kept >= max_dropped);
  }
}

TEST_CASE("soft_weights closed-form example") {
  const Matrix z = row({4, 3, 1, 0});
  CHECK(soft_threshold24(z) == row({3, 2, 0, 0}));
  const Matrix out = sparsify_soft_weights(z, SparsifierVariant::soft_weights());
  CHECK(out(0, 0) == doctest::Approx(54.0 / 13.0).epsilon(1e-6));
  CHECK(out(0, 1) == doctest::Approx(36.0 / 13.0).epsilon(1e-6));
  CHECK(out(0, 2) == 0.0f);
  CHECK(out(0, 3) == 0.0f);
}

TEST_CASE("soft_weights degenerate tie gives zeros and unit scale") {
  const Matrix z = row({1, 1, 1, 1});
  CHECK(sparsify_soft_weights(z, SparsifierVariant::soft_weights()) == Matrix(1, 4));
  const auto c = calibrate_soft_scale(z);
  CHECK(c.scale == 1.0);
  CHECK(c.degenerate);
}

TEST_CASE("soft variants always satisfy the pattern") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Matrix z = normal_matrix<float>(7, 20, 1.0, 50 + s);
    CHECK(oracle::satisfies_pattern(sparsify_soft_weights(z, SparsifierVariant::soft_weights())));
    CHECK(oracle::satisfies_pattern(sparsify_soft_activation(z, SparsifierVariant::soft_activation_with_scale(0.7))));
  }
}

TEST_CASE("soft_activation uses its calibrated scale") {
  const Matrix z = normal_matrix<float>(4, 8, 1.0, 9);
  CHECK(sparsify_soft_activation(z, SparsifierVariant::soft_activation_with_scale(1.0)) == soft_threshold24(z));
  // Calibrating on the live batch reproduces the refit-per-call variant.
  CHECK(sparsify_soft_activation(z, SparsifierVariant::soft_activation(z)) ==
        sparsify_soft_weights(z, SparsifierVariant::soft_weights()));
  SparsifierVariant missing{SparsifierKind::soft_activation, std::nullopt, std::nullopt};
  CHECK_THROWS_AS(sparsify_soft_activation(z, missing), ConfigError);
  CHECK_THROWS_AS(SparsifierVariant::soft_activation_with_scale(-1.0).validate(), ConfigError);
}

TEST_CASE("calibrate_soft_scale") {
  CHECK(calibrate_soft_scale(row({4, 3, 1, 0})).scale == doctest::Approx(18.0 / 13.0));
  // Groups with two zeros have θ = 0, so S(z) = z and β = 1.
  const Matrix already = row({2, 0, -3, 0, 0, 5, 0, 1});
  const auto self = calibrate_soft_scale(already);
  CHECK(self.scale == doctest::Approx(1.0));
  CHECK_FALSE(self.degenerate);
  const Matrix z = normal_matrix<float>(6, 16, 1.0, 21);
  CHECK(calibrate_soft_scale(z).scale == doctest::Approx(calibrate_soft_scale(scaled(z, 3.5f)).scale).epsilon(1e-5));
  CHECK_THROWS_AS(calibrate_soft_scale(Matrix()), ShapeError);
}

TEST_CASE("pack and unpack") {
  const Packed24Tensor p = pack(row({3, 0, 0, 2}));
  CHECK(p.values == std::vector<float>{3, 2});
  CHECK(p.meta == std::vector<std::uint8_t>{0, 3});
  CHECK(unpack(p) == row({3, 0, 0, 2}));

  const Packed24Tensor single = pack(row({0, 0, 5, 0}));
  CHECK(single.values == std::vector<float>{0, 5});
  CHECK(single.meta == std::vector<std::uint8_t>{0, 2});
  CHECK(unpack(single) == row({0, 0, 5, 0}));

  CHECK(unpack(pack(Matrix(3, 8))) == Matrix(3, 8));
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Matrix z = sparsify_naive(normal_matrix<float>(5, 12, 1.0, 200 + s));
    CHECK(unpack(pack(z)) == z);
  }
}

TEST_CASE("pack reports the first offending group") {
  Matrix z(3, 8);
  z(2, 4) = z(2, 5) = z(2, 6) = 1.0f;
  try {
    pack(z);
    FAIL("expected PatternError");
  } catch (const PatternError& e) {
    CHECK(e.row() == 2);
    CHECK(e.group() == 1);
  }
  CHECK_THROWS_AS(pack(Matrix(1, 6)), ShapeError);
}

TEST_CASE("unpack rejects malformed metadata") {
  Packed24Tensor p = pack(row({3, 0, 0, 2}));
  p.meta = {1, 1};
  CHECK_THROWS_AS(unpack(p), FormatError);
  p.meta = {3, 0};
  CHECK_THROWS_AS(unpack(p), FormatError);
  p.meta = {0, 4};
  CHECK_THROWS_AS(unpack(p), FormatError);
}

TEST_CASE("spmm equals the dense masked product") {
  for (std::size_t n : {4u, 16u, 64u}) {
    const Matrix a = sparsify_naive(normal_matrix<float>(n + 3, n, 1.0, n));
    const Matrix w = normal_matrix<float>(n, n / 2 + 1, 1.0, n + 1);
    const Packed24Tensor p = pack(a);
    CHECK(relative_error(spmm(p, w), oracle::naive_matmul(a, w)) < 1e-5);
    const Matrix g = normal_matrix<float>(n + 3, 5, 1.0, n + 2);
    CHECK(relative_error(spmm_tn(p, g), oracle::naive_matmul(transpose(a), g)) < 1e-5);
  }
  Matrix pattern_rows(4, 8);
  for (std::size_t r = 0; r < 4; ++r) pattern_rows(r, 2 * r) = 1.0f;
  CHECK(spmm(pack(pattern_rows), Matrix::identity(8)) == pattern_rows);
  CHECK_THROWS_AS(spmm(pack(pattern_rows), Matrix(7, 2)), ContractError);
}

TEST_CASE("packed serialization round trip and corruption") {
  const Packed24Tensor p = pack(sparsify_naive(normal_matrix<float>(3, 8, 1.0, 77)));
  CHECK(deserialize_packed(serialize_packed(p)) == p);
  std::stringstream io;
  write_packed(io, p);
  CHECK(read_packed(io) == p);
  auto bytes = serialize_packed(p);
  bytes.pop_back();
  CHECK_THROWS_AS(deserialize_packed(bytes), FormatError);
  bytes = serialize_packed(p);
  bytes.back() = 7;
  CHECK_THROWS_AS(deserialize_packed(bytes), FormatError);
}

TEST_CASE("pack_with_mask stores companion values") {
  const Matrix z = normal_matrix<float>(2, 8, 1.0, 5);
  const Mask24 mask = mask_top2(z);
  const Packed24Tensor p = pack_with_mask(z, mask);
  CHECK(mask_of(p) == mask);
  CHECK(unpack(p) == apply_mask(z, mask));
  CHECK(p.storage_bytes(2.0) == doctest::Approx(16 * 0.5 * 2.25));
}

TEST_CASE("straight-through backward is the identity") {
  const Matrix g = normal_matrix<float>(3, 8, 1.0, 1);
  CHECK(ste_backward(g) == g);
  CHECK(ste_backward(Matrix(2, 4)) == Matrix(2, 4));
}

TEST_CASE("sparsifier names round trip") {
  for (auto kind : {SparsifierKind::naive, SparsifierKind::soft_weights, SparsifierKind::soft_activation})
    CHECK(parse_sparsifier_kind(to_string(kind)) == kind);
  CHECK_THROWS_AS(parse_sparsifier_kind("magnitude"), ConfigError);
}

TEST_CASE("mask_top2 and the oracle agree on tiny entries next to a large one") {
  const Matrix z(1, 4, std::vector<float>{1.0f, 5e-11f, 1e-10f, 0.0f});
  CHECK(mask_bits(z) == std::vector<std::uint8_t>{1, 0, 1, 0});
  CHECK(mask_bits(z) == oracle::brute_force_keep(z));
}
