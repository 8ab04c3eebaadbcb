#include "ssmvae/config.hpp"

#include <cmath>
#include <numeric>

#include "ssmvae/errors.hpp"

namespace ssmvae {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kTPoe: return "t_poe";
    case Variant::kGaussianPoe: return "gaussian_poe";
    case Variant::kTEarly: return "t_early";
    case Variant::kTLate: return "t_late";
    case Variant::kGaussianEarly: return "gaussian_early";
    case Variant::kGaussianLate: return "gaussian_late";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kTPoe, Variant::kGaussianPoe, Variant::kTEarly, Variant::kTLate,
                    Variant::kGaussianEarly, Variant::kGaussianLate}) {
    if (to_string(v) == name) return v;
  }
  throw ContractViolation("unknown variant '" + std::string(name) + "'");
}

bool is_gaussian(Variant v) {
  return v == Variant::kGaussianPoe || v == Variant::kGaussianEarly ||
         v == Variant::kGaussianLate;
}

Fusion fusion_of(Variant v) {
  switch (v) {
    case Variant::kTPoe:
    case Variant::kGaussianPoe: return Fusion::kPoe;
    case Variant::kTEarly:
    case Variant::kGaussianEarly: return Fusion::kEarly;
    case Variant::kTLate:
    case Variant::kGaussianLate: return Fusion::kLate;
  }
  return Fusion::kPoe;
}

void ModelConfig::validate() {
  if (num_modalities < 1) throw ContractViolation("ModelConfig: need at least one modality");
  if (num_classes < 2) throw ContractViolation("ModelConfig: need at least two classes");
  if (latent_dim < 1) throw ContractViolation("ModelConfig: latent_dim must be positive");
  if (static_cast<int>(modality_dims.size()) != num_modalities) {
    throw ContractViolation("ModelConfig: modality_dims must have one entry per modality");
  }
  for (int d : modality_dims) {
    if (d < 1) throw ContractViolation("ModelConfig: modality dims must be positive");
  }
  if (!is_gaussian(variant) && !(nu > 2.0)) {
    throw ContractViolation("ModelConfig: nu must exceed 2");
  }
  if (!(sigma2 > 0.0)) throw ContractViolation("ModelConfig: sigma2 must be positive");
  if (!(alpha_scale > 0.0)) throw ContractViolation("ModelConfig: alpha_scale must be positive");
  for (int h : hidden_dims) {
    if (h < 1) throw ContractViolation("ModelConfig: hidden widths must be positive");
  }
  if (class_prior.empty()) class_prior = prior_or_uniform();
  if (static_cast<int>(class_prior.size()) != num_classes) {
    throw ContractViolation("ModelConfig: class_prior must have K entries");
  }
  double total = 0.0;
  for (double p : class_prior) {
    if (!(p >= 0.0)) throw ContractViolation("ModelConfig: class_prior entries must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractViolation("ModelConfig: class_prior must sum to 1");
  }
  if (entropy_aug_dim && *entropy_aug_dim < 1) {
    throw ContractViolation("ModelConfig: entropy_aug_dim must be positive");
  }
}

std::vector<double> ModelConfig::prior_or_uniform() const {
  if (!class_prior.empty()) return class_prior;
  return std::vector<double>(static_cast<std::size_t>(num_classes), 1.0 / num_classes);
}

int ModelConfig::total_input_dim() const {
  return std::accumulate(modality_dims.begin(), modality_dims.end(), 0);
}

}  // namespace ssmvae
