#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmvae/model.hpp"
#include "ssmvae/nn/gradcheck.hpp"

namespace ssmvae {

struct GradSuiteEntry {
  std::string name;  // "<variant>/<objective>"
  nn::GradCheckReport report;
};

struct GradSuiteOptions {
  double rel_tol = 1e-4;
  double abs_floor = 1e-6;
  double step = 1e-5;
  std::uint64_t seed = 7;
};

/// Toy model (M = 2, K = 2, n_x = (3, 2), n_z = 2, one hidden layer of 4) with
/// parameters drawn at O(1) scale, plus a small batch with a missing
/// modality. The noise is frozen per objective.
SSMVAEModel toy_gradcheck_model(Variant variant, std::uint64_t seed,
                                bool unlabeled_per_modality = false);

struct ToyBatch {
  ModelInputs labeled;
  std::vector<int> labels;
  ModelInputs unlabeled;
};
ToyBatch toy_gradcheck_batch(const ModelConfig& cfg, std::uint64_t seed);

/// Finite-difference checks of the labeled, unlabeled and overall objectives
/// for every variant.
std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options = {});

}  // namespace ssmvae
