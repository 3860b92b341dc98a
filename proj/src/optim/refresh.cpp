#include <cmath>

#include "elas/numerics/linalg.hpp"
#include "elas/numerics/svd.hpp"
#include "elas/optim/optimizer.hpp"

namespace elas {

template <typename T>
LowRankLinear<T> rebalance_factors(const LowRankLinear<T>& layer) {
  layer.validate();
  const std::size_t r = layer.rank();
  const MatrixD product = matmul(layer.A.template cast<double>(), layer.B.template cast<double>());
  const SvdResult<double> top = truncate(svd(product), r);

  LowRankLinear<T> out;
  out.A = BasicMatrix<T>(layer.d_out(), r);
  out.B = BasicMatrix<T>(r, layer.d_in());
  for (std::size_t k = 0; k < r; ++k) {
    const double root = std::sqrt(top.S[k]);
    for (std::size_t i = 0; i < layer.d_out(); ++i) out.A(i, k) = static_cast<T>(top.U(i, k) * root);
    for (std::size_t j = 0; j < layer.d_in(); ++j) out.B(k, j) = static_cast<T>(root * top.Vt(k, j));
  }
  return out;
}

template <typename T>
RefreshOutcome step_exact_refresh(OptimizerState<T>& state, const std::string& name,
                                  LowRankLinear<T>& layer) {
  RefreshOutcome outcome;
  outcome.layer = name;
  LowRankLinear<T> balanced;
  try {
    balanced = rebalance_factors(layer);
  } catch (const NumericError& e) {
    outcome.warning = "refresh of '" + name + "' skipped: " + e.what();
    return outcome;
  }
  outcome.product_change = relative_error(balanced.product(), layer.product());
  layer = std::move(balanced);
  for (const char* suffix : {".A", ".B"}) {
    MomentState<T>& m = state.moment(name + suffix);
    m.m.fill(T{0});
    m.v.fill(T{0});
    m.steps = 0;
  }
  outcome.refreshed = true;
  return outcome;
}

template <typename T>
std::vector<RefreshOutcome> refresh_all(OptimizerState<T>& state, TinyTransformer<T>& model) {
  std::vector<RefreshOutcome> outcomes;
  model.for_each_low_rank([&](const std::string& name, LowRankLinear<T>& layer) {
    outcomes.push_back(step_exact_refresh(state, name, layer));
  });
  return outcomes;
}

template LowRankLinear<float> rebalance_factors(const LowRankLinear<float>&);
template LowRankLinear<double> rebalance_factors(const LowRankLinear<double>&);
template RefreshOutcome step_exact_refresh(OptimizerState<float>&, const std::string&,
                                           LowRankLinear<float>&);
template RefreshOutcome step_exact_refresh(OptimizerState<double>&, const std::string&,
                                           LowRankLinear<double>&);
template std::vector<RefreshOutcome> refresh_all(OptimizerState<float>&, TinyTransformer<float>&);
template std::vector<RefreshOutcome> refresh_all(OptimizerState<double>&, TinyTransformer<double>&);

}  // namespace elas
