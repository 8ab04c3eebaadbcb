#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ssmvae {

/// Model family. t_poe is the full model; the others are the ablations:
/// Gaussian distributions in place of Student's t, and early (concatenate raw
/// modalities into one encoder) or late (average per-modality classifiers)
/// fusion in place of product-of-experts.
enum class Variant { kTPoe, kGaussianPoe, kTEarly, kTLate, kGaussianEarly, kGaussianLate };

enum class Fusion { kPoe, kEarly, kLate };

std::string_view to_string(Variant v);
/// Throws ContractViolation for unknown names.
Variant parse_variant(std::string_view name);

bool is_gaussian(Variant v);
Fusion fusion_of(Variant v);

struct ModelConfig {
  int num_modalities = 2;
  int num_classes = 2;
  int latent_dim = 64;
  std::vector<int> modality_dims;
  double nu = 5.0;
  double sigma2 = 1.0;
  std::vector<double> class_prior;  // empty means uniform
  double alpha_scale = 10.0;
  Variant variant = Variant::kTPoe;
  std::vector<int> hidden_dims = {512, 512};
  // Unlabeled objective: per-modality sum of labeled-style terms instead of
  // one term under the fused joint posterior.
  bool unlabeled_per_modality = false;
  // Dimension used for the entropy weight of the unlabeled objective; by
  // default the present modalities' total dimension plus K, row by row.
  std::optional<int> entropy_aug_dim;

  /// Fills defaults (uniform prior) and checks every invariant.
  void validate();
  std::vector<double> prior_or_uniform() const;
  int total_input_dim() const;
};

}  // namespace ssmvae
