#include <doctest.h>

#include <cmath>

#include "elas/numerics/errors.hpp"
#include "elas/numerics/init.hpp"
#include "elas/numerics/linalg.hpp"
#include "elas/optim/optimizer.hpp"
#include "elas/optim/schedule.hpp"

using namespace elas;

namespace {

ModelDims tiny() { return ModelDims{13, 16, 32, 2, 2, 8, 4, 4}; }

bool is_diagonal(const MatrixD& m, double tol) {
  double off = 0.0, diag = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) (i == j ? diag : off) += m(i, j) * m(i, j);
  return std::sqrt(off) <= tol * std::sqrt(diag);
}

}  // namespace

TEST_CASE("adam_update: first step is lr·g/(|g|+eps)") {
  MatrixD p(1, 3, std::vector<double>{1.0, -2.0, 0.5});
  const MatrixD g(1, 3, std::vector<double>{0.1, -4.0, 0.0});
  auto state = MomentState<double>::zeros_like(p);
  const AdamConfig cfg;
  adam_update(p, g, state, cfg, 0.01);
  CHECK(p(0, 0) == doctest::Approx(1.0 - 0.01 * 0.1 / (0.1 + 1e-8)));
  CHECK(p(0, 1) == doctest::Approx(-2.0 + 0.01 * 4.0 / (4.0 + 1e-8)));
  CHECK(p(0, 2) == 0.5);
  CHECK(state.steps == 1);
  CHECK(state.m(0, 1) == doctest::Approx(0.1 * -4.0));
  CHECK(state.v(0, 1) == doctest::Approx(0.001 * 16.0));
}

TEST_CASE("adam_update: second step matches the bias-corrected closed form") {
  MatrixD p(1, 1, 0.0);
  auto state = MomentState<double>::zeros_like(p);
  const AdamConfig cfg;
  adam_update(p, MatrixD(1, 1, 1.0), state, cfg, 0.1);
  adam_update(p, MatrixD(1, 1, 3.0), state, cfg, 0.1);
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * 3.0;
  const double v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  CHECK(p(0, 0) == doctest::Approx(-0.1 - 0.1 * mh / (std::sqrt(vh) + 1e-8)));
}

TEST_CASE("zero gradients leave parameters unchanged") {
  auto model = TinyTransformer<double>::init(tiny(), 1);
  const auto before = model;
  auto state = OptimizerState<double>::for_model(model, AdamConfig{}, 0);
  step_approx(state, model, model.zeros_like(), 1e-2);
  CHECK(model.embedding == before.embedding);
  CHECK(model.layers[0].ffn.up.A == before.layers[0].ffn.up.A);
  CHECK(model.final_norm == before.final_norm);
}

TEST_CASE("step_approx is deterministic and rejects non-finite gradients") {
  auto run = [] {
    auto model = TinyTransformer<float>::init(tiny(), 2);
    auto state = OptimizerState<float>::for_model(model, AdamConfig{}, 0);
    auto grads = model.zeros_like();
    grads.for_each_parameter([](const std::string&, Matrix& g) {
      g = normal_matrix<float>(g.rows(), g.cols(), 1.0, g.size());
    });
    for (int i = 0; i < 3; ++i) step_approx(state, model, grads, 1e-3);
    return model;
  };
  CHECK(run().layers[1].attn.q.B == run().layers[1].attn.q.B);

  auto model = TinyTransformer<float>::init(tiny(), 3);
  const auto before = model;
  auto state = OptimizerState<float>::for_model(model, AdamConfig{}, 0);
  auto grads = model.zeros_like();
  grads.layers[1].ffn.down.A(0, 0) = std::nanf("");
  CHECK_THROWS_AS(step_approx(state, model, grads, 1e-3), NumericError);
  CHECK(model.embedding == before.embedding);
  CHECK(state.moment("embedding").steps == 0);
}

TEST_CASE("clip_grad_norm bounds the global norm") {
  auto model = TinyTransformer<double>::init(tiny(), 4);
  auto grads = model.zeros_like();
  grads.embedding.fill(1.0);
  const double norm = std::sqrt(static_cast<double>(grads.embedding.size()));
  CHECK(clip_grad_norm(grads, 0.0) == doctest::Approx(norm));
  CHECK(clip_grad_norm(grads, 2.0) == doctest::Approx(norm));
  CHECK(clip_grad_norm(grads, 0.0) == doctest::Approx(2.0));
}

TEST_CASE("exact refresh keeps the product and balances the factors") {
  auto layer = LowRankLinear<double>::xavier(24, 40, 6, 5);
  // Unbalance on purpose.
  for (auto& v : layer.A.values()) v *= 50.0;
  for (auto& v : layer.B.values()) v /= 50.0;
  const auto out = rebalance_factors(layer);
  CHECK(relative_error(out.product(), layer.product()) < 1e-10);
  CHECK(is_diagonal(matmul_tn(out.A, out.A), 1e-8));
  CHECK(is_diagonal(matmul_nt(out.B, out.B), 1e-8));
  // Balanced: AᵀA == BBᵀ.
  CHECK(relative_error(matmul_tn(out.A, out.A), matmul_nt(out.B, out.B)) < 1e-8);

  // A second refresh of a balanced pair is a no-op up to signs of singular vectors.
  const auto again = rebalance_factors(out);
  CHECK(relative_error(again.product(), out.product()) < 1e-10);
  CHECK(relative_error(matmul_tn(again.A, again.A), matmul_tn(out.A, out.A)) < 1e-8);
}

TEST_CASE("refresh in float stays within 1e-5 and zeroes the moments") {
  auto model = TinyTransformer<float>::init(tiny(), 6);
  auto state = OptimizerState<float>::for_model(model, AdamConfig{}, 1);
  auto grads = model.zeros_like();
  grads.for_each_parameter([](const std::string&, Matrix& g) { g.fill(0.01f); });
  step_approx(state, model, grads, 1e-3);
  CHECK(state.moment("layers.0.ffn.up.A").steps == 1);

  std::vector<Matrix> before;
  model.for_each_low_rank([&](const std::string&, LowRankLinear<float>& l) { before.push_back(l.product()); });
  const auto outcomes = refresh_all(state, model);
  CHECK(outcomes.size() == 12);
  std::size_t i = 0;
  model.for_each_low_rank([&](const std::string& name, LowRankLinear<float>& l) {
    INFO(name);
    CHECK(relative_error(l.product(), before[i++]) < 1e-5);
    for (const char* s : {".A", ".B"}) {
      const auto& m = state.moment(name + s);
      CHECK(m.steps == 0);
      CHECK(frobenius_norm(m.m) == 0.0);
      CHECK(frobenius_norm(m.v) == 0.0);
    }
  });
  for (const auto& o : outcomes) {
    CHECK(o.refreshed);
    CHECK(o.warning.empty());
  }
  // Non-low-rank parameters keep their moments.
  CHECK(state.moment("embedding").steps == 1);
}

TEST_CASE("refresh schedule and unknown moments") {
  auto model = TinyTransformer<float>::init(tiny(), 7);
  auto state = OptimizerState<float>::for_model(model, AdamConfig{}, 500);
  CHECK(state.refresh_due(0));
  CHECK_FALSE(state.refresh_due(499));
  CHECK(state.refresh_due(500));
  state.refresh_every = 0;
  CHECK_FALSE(state.refresh_due(500));
  CHECK_THROWS_AS(state.moment("nope"), ContractError);
}

TEST_CASE("lr_at: linear warmup then cosine down to min_lr") {
  const LrSchedule s{1e-2, 1e-3, 0.1};
  CHECK(lr_at(s, 0, 1000) == 0.0);
  CHECK(lr_at(s, 50, 1000) == doctest::Approx(5e-3));
  CHECK(lr_at(s, 100, 1000) == doctest::Approx(1e-2));
  CHECK(lr_at(s, 550, 1000) == doctest::Approx(5.5e-3));
  CHECK(lr_at(s, 1000, 1000) == doctest::Approx(1e-3));
  CHECK(lr_at(s, 5000, 1000) == doctest::Approx(1e-3));
  for (std::int64_t t = 100; t < 1000; ++t) CHECK(lr_at(s, t + 1, 1000) <= lr_at(s, t, 1000));
}
