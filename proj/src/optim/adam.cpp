#include <cmath>
#include <sstream>

#include "elas/numerics/linalg.hpp"
#include "elas/optim/optimizer.hpp"

namespace elas {

template <typename T>
void adam_update(BasicMatrix<T>& param, const BasicMatrix<T>& grad, MomentState<T>& state,
                 const AdamConfig& config, double lr) {
  if (!param.same_shape(grad) || !param.same_shape(state.m) || !param.same_shape(state.v)) {
    throw ContractError("adam_update: parameter " + shape_string(param) + ", gradient " +
                        shape_string(grad) + ", moments " + shape_string(state.m));
  }
  state.steps += 1;
  const double b1 = config.beta1, b2 = config.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
  const double step_size = lr / correction1;
  const double sqrt_c2 = std::sqrt(correction2);
  const double decay = lr * config.weight_decay;

  T* p = param.data();
  const T* g = grad.data();
  T* m = state.m.data();
  T* v = state.v.data();
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double gi = g[i];
    const double mi = b1 * m[i] + (1.0 - b1) * gi;
    const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    double pi = p[i];
    if (decay != 0.0) pi -= decay * pi;
    pi -= step_size * mi / (std::sqrt(vi) / sqrt_c2 + config.eps);
    p[i] = static_cast<T>(pi);
  }
}

template <typename T>
OptimizerState<T> OptimizerState<T>::for_model(const TinyTransformer<T>& model,
                                                const AdamConfig& adam, std::int64_t refresh_every) {
  OptimizerState s;
  s.adam = adam;
  s.refresh_every = refresh_every;
  model.for_each_parameter([&](const std::string& name, const BasicMatrix<T>& p) {
    s.names.push_back(name);
    s.moments.push_back(MomentState<T>::zeros_like(p));
  });
  return s;
}

template <typename T>
MomentState<T>& OptimizerState<T>::moment(const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return moments[i];
  throw ContractError("optimizer has no state for parameter '" + name + "'");
}

template <typename T>
const MomentState<T>& OptimizerState<T>::moment(const std::string& name) const {
  return const_cast<OptimizerState*>(this)->moment(name);
}

template <typename T>
void step_approx(OptimizerState<T>& state, TinyTransformer<T>& model, const TinyTransformer<T>& grads,
                 double lr) {
  std::vector<const BasicMatrix<T>*> grad_list;
  grads.for_each_parameter([&](const std::string& name, const BasicMatrix<T>& g) {
    if (!all_finite(g)) throw NumericError("non-finite gradient for '" + name + "'");
    grad_list.push_back(&g);
  });
  if (grad_list.size() != state.moments.size()) {
    throw ContractError("step_approx: gradient set does not match optimizer state");
  }
  std::size_t i = 0;
  model.for_each_parameter([&](const std::string& name, BasicMatrix<T>& p) {
    if (state.names[i] != name) {
      throw ContractError("step_approx: parameter order changed at '" + name + "'");
    }
    adam_update(p, *grad_list[i], state.moments[i], state.adam, lr);
    ++i;
  });
  state.step += 1;
}

template <typename T>
double clip_grad_norm(TinyTransformer<T>& grads, double max_norm) {
  double total = 0.0;
  grads.for_each_parameter([&](const std::string&, const BasicMatrix<T>& g) { total += inner(g, g); });
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const T scale = static_cast<T>(max_norm / norm);
    grads.for_each_parameter([&](const std::string&, BasicMatrix<T>& g) {
      for (T& v : g.values()) v *= scale;
    });
  }
  return norm;
}

template void adam_update(Matrix&, const Matrix&, MomentState<float>&, const AdamConfig&, double);
template void adam_update(MatrixD&, const MatrixD&, MomentState<double>&, const AdamConfig&, double);
template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void step_approx(OptimizerState<float>&, TinyTransformer<float>&,
                          const TinyTransformer<float>&, double);
template void step_approx(OptimizerState<double>&, TinyTransformer<double>&,
                          const TinyTransformer<double>&, double);
template double clip_grad_norm(TinyTransformer<float>&, double);
template double clip_grad_norm(TinyTransformer<double>&, double);

}  // namespace elas
