#pragma once

#include <vector>

#include "ssmvae/config.hpp"
#include "ssmvae/tdist.hpp"

namespace ssmvae {

/// Per-modality posterior experts plus the prior expert. `experts` holds one
/// entry per true element of `present_mask`, in modality order.
struct ExpertSet {
  std::vector<TParams> experts;
  TParams prior;
  std::vector<bool> present_mask;

  void validate() const;
};

/// Precision-additive Gaussian product with the prior expert counted once.
/// Experts' scale_diag is read as a variance; dof fields are ignored. The
/// result carries dof = kGaussianDof. An empty expert list returns the prior.
TParams fuse_gaussian(const ExpertSet& s);

/// Moment-matched t fusion: each expert and the prior are replaced by their
/// covariance-matched Gaussian, fused as in fuse_gaussian, then re-wrapped as
/// a t with dof nu + sum_{present m} n_{x^m} + K whose covariance equals the
/// fused Gaussian covariance. An empty expert list returns the prior as is.
TParams fuse_t(const ExpertSet& s, const ModelConfig& cfg);

/// Joint dof nu + sum of present modality dims + K.
double joint_dof(const ModelConfig& cfg, const std::vector<bool>& present_mask);

}  // namespace ssmvae
