#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "elas/model/transformer.hpp"

namespace elas {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled (AdamW-style) weight decay; 0 disables it.
  double weight_decay = 0.0;
};

/// First/second moments of one parameter and the number of updates they have
/// absorbed since they were last reset (drives bias correction).
template <typename T>
struct MomentState {
  BasicMatrix<T> m;
  BasicMatrix<T> v;
  std::int64_t steps = 0;

  static MomentState zeros_like(const BasicMatrix<T>& p) {
    return {BasicMatrix<T>(p.rows(), p.cols()), BasicMatrix<T>(p.rows(), p.cols()), 0};
  }
};

/// One bias-corrected Adam update of `param` in place.
template <typename T>
void adam_update(BasicMatrix<T>& param, const BasicMatrix<T>& grad, MomentState<T>& state,
                 const AdamConfig& config, double lr);

/// Optimizer state for a TinyTransformer: one MomentState per parameter, in
/// for_each_parameter order.
template <typename T>
struct OptimizerState {
  AdamConfig adam;
  std::int64_t refresh_every = 500;
  std::int64_t step = 0;
  std::vector<std::string> names;
  std::vector<MomentState<T>> moments;

  static OptimizerState for_model(const TinyTransformer<T>& model, const AdamConfig& adam,
                                  std::int64_t refresh_every);

  /// Throws ContractError for unknown names.
  MomentState<T>& moment(const std::string& name);
  const MomentState<T>& moment(const std::string& name) const;

  /// Exact refresh is due after the update made at `completed_step`.
  bool refresh_due(std::int64_t completed_step) const noexcept {
    return refresh_every > 0 && completed_step % refresh_every == 0;
  }
};

/// Approximate step: independent Adam updates of every factor and dense
/// parameter. Throws NumericError, leaving model and state untouched, when any
/// gradient is non-finite.
template <typename T>
void step_approx(OptimizerState<T>& state, TinyTransformer<T>& model, const TinyTransformer<T>& grads,
                 double lr);

/// Scales `grads` so that their global L2 norm is at most `max_norm`; returns
/// the norm before scaling. max_norm <= 0 only measures.
template <typename T>
double clip_grad_norm(TinyTransformer<T>& grads, double max_norm);

struct RefreshOutcome {
  std::string layer;
  bool refreshed = false;
  /// ‖A'B' − AB‖_F / ‖AB‖_F.
  double product_change = 0.0;
  std::string warning;
};

/// Rebalanced factors of the same product: with AB = U S Vᵀ truncated to the
/// layer rank, A' = U √S and B' = √S Vᵀ. Throws NumericError if the SVD fails.
template <typename T>
LowRankLinear<T> rebalance_factors(const LowRankLinear<T>& layer);

/// Exact step for one layer: rebalances the factors and zeroes the moments of
/// "<name>.A" and "<name>.B". On SVD failure the layer is left as is and the
/// outcome carries a warning.
template <typename T>
RefreshOutcome step_exact_refresh(OptimizerState<T>& state, const std::string& name,
                                  LowRankLinear<T>& layer);

/// Exact step for every low-rank layer of the model.
template <typename T>
std::vector<RefreshOutcome> refresh_all(OptimizerState<T>& state, TinyTransformer<T>& model);

}  // namespace elas
