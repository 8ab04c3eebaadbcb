#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>

#include "ssmvae/random.hpp"
#include "ssmvae/types.hpp"

namespace ssmvae {

inline constexpr double kGaussianDof = std::numeric_limits<double>::infinity();

/// Diagonal multivariate Student's t: location, diagonal of the scale matrix
/// and degrees of freedom. dof == kGaussianDof denotes the Gaussian limit, in
/// which scale_diag is the variance.
struct TParams {
  Vector loc;
  Vector scale_diag;
  double dof = kGaussianDof;

  int dim() const { return static_cast<int>(loc.size()); }
  bool is_gaussian() const { return dof == kGaussianDof; }

  /// Throws ContractViolation on size mismatch, non-positive scale or dof.
  void validate() const;

  static TParams standard(int dim, double dof);
};

struct GammaDivergenceEstimate {
  double value = 0.0;
  double mc_stderr = 0.0;
  std::int64_t n_samples = 0;
};

/// One draw of the noise consumed by the t reparameterisation.
struct ReparamNoise {
  Vector eps;    // standard normal, length n_z
  double delta;  // chi-square draw
};

struct Moments {
  Vector mean;
  Vector cov_diag;
};

/// log t_d(z | loc, diag(scale), dof); Gaussian density when dof is infinite.
double t_logpdf(const TParams& p, const Vector& z);

/// z = mu + sqrt(nu_base / delta) * sigma (.) eps, where p_enc.loc is the raw
/// encoder mean and p_enc.scale_diag the raw encoder variance sigma^2. The
/// result is distributed as t(mu, sigma^2 / (1 + aug_dim / nu_base),
/// nu_base + aug_dim) when delta ~ chi^2(nu_base + aug_dim).
Vector t_sample_reparam(const TParams& p_enc, double nu_base, int aug_dim,
                        const ReparamNoise& noise);

/// Draws eps ~ N(0, I_dim) then delta ~ chi^2(chi_dof), in that order.
ReparamNoise draw_reparam_noise(Rng& rng, int dim, double chi_dof);

/// Mean and per-dimension variance; requires dof > 2.
Moments t_moments(const TParams& p);

/// log of the t normalising constant Gamma((nu+d)/2) / (Gamma(nu/2) (nu pi)^(d/2)).
double t_log_normalizer(double dof, int dim);

using LogDensity = std::function<double(const Vector&)>;

/// Monte-Carlo estimate of the gamma-power divergence
///
///   D_g(q || p) = (1/g) (||q||_{1+g} - int q (p / ||p||_{1+g})^g),
///
/// with ||f||_{1+g} = (int f^{1+g})^{1/(1+g)}, for g in (-1, 0). Samples are
/// drawn from q. When `log_p_norm` (log ||p||_{1+g}) is not supplied it is
/// estimated by importance sampling from the same draws. The standard error
/// comes from the delta method on the three sample means.
GammaDivergenceEstimate gamma_divergence_mc(const TParams& q, const LogDensity& log_p,
                                            double gamma, std::int64_t n, std::uint64_t seed,
                                            std::optional<double> log_p_norm = std::nullopt);

/// Paired version: D(q1 || p1) - D(q2 || p2) using identical noise for both
/// terms, with the standard error of the difference. q1, q2 must share a
/// dimension and dof.
GammaDivergenceEstimate gamma_divergence_mc_diff(const TParams& q1, const LogDensity& log_p1,
                                                 const TParams& q2, const LogDensity& log_p2,
                                                 double gamma, std::int64_t n, std::uint64_t seed,
                                                 double log_p_norm);

}  // namespace ssmvae
