#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ssmvae/nn/param_store.hpp"
#include "ssmvae/nn/tape.hpp"

namespace ssmvae::nn {

/// Builds a scalar loss on `tape` from `params`. Must be deterministic in
/// params (any noise frozen).
using DifferentiableLoss = std::function<Var(Tape& tape, const ParamStore& params)>;

struct GradCheckEntry {
  std::string name;
  double worst_rel_error = 0.0;  // over coordinates whose gradient exceeds the floor
  double worst_abs_error = 0.0;
  Eigen::Index checked = 0;  // coordinates whose gradient exceeds the floor
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed = true;
  double worst_rel_error = 0.0;
};

/// Compares reverse-mode gradients against central differences with step
/// `step * max(1, |p|)`. A coordinate fails only when its absolute error
/// exceeds `abs_floor` and its relative error exceeds `rel_tol`.
GradCheckReport finite_diff_check(const DifferentiableLoss& loss_fn, const ParamStore& params,
                                  double rel_tol, double abs_floor, double step = 1e-5);

}  // namespace ssmvae::nn
