#include "ssmvae/poe.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "ssmvae/errors.hpp"

namespace ssmvae {

void ExpertSet::validate() const {
  const auto present = std::count(present_mask.begin(), present_mask.end(), true);
  if (static_cast<std::size_t>(present) != experts.size()) {
    throw ContractViolation("ExpertSet: " + std::to_string(experts.size()) +
                            " experts for " + std::to_string(present) + " present modalities");
  }
  prior.validate();
  for (const auto& e : experts) {
    e.validate();
    if (e.dim() != prior.dim()) {
      throw ContractViolation("ExpertSet: expert dimension differs from prior dimension");
    }
  }
}

namespace {

// Per-dimension precision sum and precision-weighted mean sum. Contributions
// are sorted before accumulation so the result does not depend on expert
// order, and adding an expert can only increase the precision.
std::pair<Vector, Vector> fuse_moments(const std::vector<Vector>& means,
                                       const std::vector<Vector>& variances,
                                       const Vector& prior_mean, const Vector& prior_var) {
  const int d = static_cast<int>(prior_mean.size());
  Vector fused_mean(d);
  Vector fused_var(d);
  std::vector<std::pair<double, double>> terms;
  for (int j = 0; j < d; ++j) {
    terms.clear();
    terms.emplace_back(1.0 / prior_var(j), prior_mean(j) / prior_var(j));
    for (std::size_t e = 0; e < means.size(); ++e) {
      const double precision = 1.0 / variances[e](j);
      terms.emplace_back(precision, means[e](j) * precision);
    }
    std::sort(terms.begin(), terms.end());
    double precision_sum = 0.0;
    double weighted_sum = 0.0;
    for (const auto& [p, w] : terms) {
      precision_sum += p;
      weighted_sum += w;
    }
    fused_var(j) = 1.0 / precision_sum;
    fused_mean(j) = fused_var(j) * weighted_sum;
  }
  return {std::move(fused_mean), std::move(fused_var)};
}

}  // namespace

TParams fuse_gaussian(const ExpertSet& s) {
  s.validate();
  if (s.experts.empty()) return s.prior;
  std::vector<Vector> means, variances;
  for (const auto& e : s.experts) {
    means.push_back(e.loc);
    variances.push_back(e.scale_diag);
  }
  auto [mean, var] = fuse_moments(means, variances, s.prior.loc, s.prior.scale_diag);
  return TParams{std::move(mean), std::move(var), kGaussianDof};
}

double joint_dof(const ModelConfig& cfg, const std::vector<bool>& present_mask) {
  double dof = cfg.nu + cfg.num_classes;
  for (std::size_t m = 0; m < present_mask.size(); ++m) {
    if (present_mask[m]) dof += cfg.modality_dims.at(m);
  }
  return dof;
}

TParams fuse_t(const ExpertSet& s, const ModelConfig& cfg) {
  s.validate();
  if (static_cast<int>(s.present_mask.size()) != cfg.num_modalities) {
    throw ContractViolation("fuse_t: present_mask length differs from modality count");
  }
  if (s.experts.empty()) return s.prior;
  std::vector<Vector> means, variances;
  for (const auto& e : s.experts) {
    if (!(e.dof > 2.0)) {
      throw UndefinedMoment("fuse_t: expert dof must exceed 2 for moment matching");
    }
    const Moments mo = t_moments(e);
    means.push_back(mo.mean);
    variances.push_back(mo.cov_diag);
  }
  const Moments prior = t_moments(s.prior);
  auto [mean, var] = fuse_moments(means, variances, prior.mean, prior.cov_diag);
  const double dof = joint_dof(cfg, s.present_mask);
  Vector scale = var * ((dof - 2.0) / dof);
  return TParams{std::move(mean), std::move(scale), dof};
}

}  // namespace ssmvae
