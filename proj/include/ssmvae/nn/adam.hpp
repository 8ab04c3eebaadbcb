#pragma once

#include <cstdint>

#include "ssmvae/nn/param_store.hpp"

namespace ssmvae::nn {

struct AdamState {
  ParamStore first_moment;
  ParamStore second_moment;
  std::int64_t step_count = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Zero moments shaped like `params`.
  static AdamState for_params(const ParamStore& params, double lr = 1e-4);
};

/// One bias-corrected Adam update. Throws NonFiniteError, leaving params and
/// state untouched, if any gradient is NaN/Inf or the update would produce one.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state);

}  // namespace ssmvae::nn
