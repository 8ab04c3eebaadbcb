#include <gtest/gtest.h>

#include <boost/math/quadrature/sinh_sinh.hpp>
#include <cmath>
#include <numbers>

#include "ssmvae/errors.hpp"
#include "ssmvae/random.hpp"
#include "ssmvae/tdist.hpp"

using namespace ssmvae;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Written out from the textbook density, independently of t_logpdf.
double reference_logpdf(const Vector& loc, const Vector& scale, double nu, const Vector& z) {
  const double d = static_cast<double>(loc.size());
  double maha = 0.0;
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < loc.size(); ++i) {
    maha += (z(i) - loc(i)) * (z(i) - loc(i)) / scale(i);
    log_det += std::log(scale(i));
  }
  return std::lgamma((nu + d) / 2) - std::lgamma(nu / 2) - d / 2 * std::log(nu * std::numbers::pi) -
         0.5 * log_det - (nu + d) / 2 * std::log1p(maha / nu);
}

}  // namespace

TEST(TLogPdf, CauchyModeIsOneOverPi) {
  const TParams p{vec({0.0}), vec({1.0}), 1.0};
  EXPECT_NEAR(std::exp(t_logpdf(p, vec({0.0}))), 1.0 / std::numbers::pi, 1e-12);
  EXPECT_NEAR(t_logpdf(p, vec({0.0})), -1.1447298858494002, 1e-12);
}

TEST(TLogPdf, SymmetricAboutLocation) {
  const TParams p{vec({0.3, -1.2}), vec({0.7, 2.5}), 4.5};
  const Vector a = vec({0.8, -0.4});
  EXPECT_EQ(t_logpdf(p, p.loc + a), t_logpdf(p, p.loc - a));
}

TEST(TLogPdf, MatchesReferenceDensity) {
  const Vector loc = vec({0.5, -1.0, 2.0});
  const Vector scale = vec({0.3, 1.7, 4.0});
  for (double nu : {2.5, 5.0, 30.0}) {
    const TParams p{loc, scale, nu};
    const Vector z = vec({-0.2, 0.4, 3.1});
    EXPECT_NEAR(t_logpdf(p, z), reference_logpdf(loc, scale, nu, z), 1e-12);
  }
}

TEST(TLogPdf, LargeDofApproachesGaussian) {
  const TParams p{vec({0.0}), vec({1.0}), 1e6};
  EXPECT_NEAR(t_logpdf(p, vec({0.0})), -0.5 * std::log(2.0 * std::numbers::pi), 1e-4);

  const double s = 2.3;
  const TParams q{vec({1.0}), vec({s}), 1e6};
  for (double u = -5.0; u <= 5.0; u += 0.5) {
    const double z = 1.0 + u * std::sqrt(s);
    const double gauss = -0.5 * std::log(2.0 * std::numbers::pi * s) - 0.5 * u * u;
    EXPECT_NEAR(t_logpdf(q, vec({z})), gauss, 1e-4 * std::abs(gauss)) << "u = " << u;
  }
}

TEST(TLogPdf, GaussianSentinel) {
  const TParams p{vec({0.0, 1.0}), vec({2.0, 0.5}), kGaussianDof};
  const Vector z = vec({0.4, 0.1});
  const double expected = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(1.0) -
                          0.5 * (0.16 / 2.0 + 0.81 / 0.5);
  EXPECT_NEAR(t_logpdf(p, z), expected, 1e-12);
}

TEST(TLogPdf, IntegratesToOneInOneAndTwoDims) {
  boost::math::quadrature::sinh_sinh<double> integrator;
  for (double nu : {1.0, 2.5, 7.0}) {
    const TParams p{vec({0.4}), vec({1.8}), nu};
    const double mass = integrator.integrate([&](double z) { return std::exp(t_logpdf(p, vec({z}))); });
    EXPECT_NEAR(mass, 1.0, 1e-3) << "nu = " << nu;
  }
  for (double nu : {3.0, 6.0}) {
    const TParams p{vec({0.0, 0.5}), vec({0.6, 1.4}), nu};
    const double mass = integrator.integrate([&](double a) {
      return integrator.integrate([&](double b) { return std::exp(t_logpdf(p, vec({a, b}))); });
    });
    EXPECT_NEAR(mass, 1.0, 1e-3) << "nu = " << nu;
  }
}

TEST(TLogPdf, RejectsBadInput) {
  const TParams p{vec({0.0, 0.0}), vec({1.0, 1.0}), 3.0};
  EXPECT_THROW(t_logpdf(p, vec({0.0})), ContractViolation);
  const TParams bad{vec({0.0}), vec({-1.0}), 3.0};
  EXPECT_THROW(t_logpdf(bad, vec({0.0})), ContractViolation);
}

TEST(TSampleReparam, ZeroNoiseReturnsMean) {
  const TParams enc{vec({1.5, -2.0}), vec({0.7, 3.0}), 9.0};
  const ReparamNoise noise{Vector::Zero(2), 3.7};
  const Vector z = t_sample_reparam(enc, 5.0, 4, noise);
  EXPECT_EQ(z(0), 1.5);
  EXPECT_EQ(z(1), -2.0);
}

TEST(TSampleReparam, UnitRadialFactorReturnsEps) {
  const TParams enc{Vector::Zero(3), Vector::Ones(3), 8.0};
  const Vector e = vec({0.3, -1.1, 2.4});
  const Vector z = t_sample_reparam(enc, 4.0, 4, ReparamNoise{e, 4.0});
  EXPECT_EQ(z, e);
}

TEST(TSampleReparam, RejectsNonPositiveDelta) {
  const TParams enc{Vector::Zero(1), Vector::Ones(1), 8.0};
  EXPECT_THROW(t_sample_reparam(enc, 4.0, 4, ReparamNoise{Vector::Zero(1), 0.0}), ContractViolation);
  EXPECT_THROW(t_sample_reparam(enc, 4.0, 4, ReparamNoise{Vector::Zero(1), -1.0}), ContractViolation);
}

TEST(TSampleReparam, MomentsMatchPosterior) {
  const double nu = 5.0;
  const int aug = 3;
  const Vector mu = vec({0.5, -1.0});
  const Vector var = vec({0.8, 2.0});
  const TParams enc{mu, var, nu + aug};
  const double nup = nu + aug;
  // Posterior t(mu, var / (1 + aug/nu), nu + aug), whose covariance is nup/(nup-2) times that.
  const Vector cov = (nup / (nup - 2.0)) * (var / (1.0 + aug / nu)).array();

  Rng rng(11);
  const int n = 100000;
  Vector sum = Vector::Zero(2);
  Vector sum_sq = Vector::Zero(2);
  for (int s = 0; s < n; ++s) {
    const Vector z = t_sample_reparam(enc, nu, aug, draw_reparam_noise(rng, 2, nup));
    sum += z;
    sum_sq += z.cwiseProduct(z);
  }
  const Vector mean = sum / n;
  const Vector emp_var = sum_sq / n - mean.cwiseProduct(mean);
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT(std::abs(emp_var(i) / cov(i) - 1.0), 0.05) << "dim " << i;
    EXPECT_LT(std::abs(mean(i) - mu(i)), 3.0 * std::sqrt(cov(i) / n)) << "dim " << i;
  }
}

TEST(TMoments, Examples) {
  EXPECT_DOUBLE_EQ(t_moments(TParams{vec({0.0}), vec({1.0}), 4.0}).cov_diag(0), 2.0);
  EXPECT_DOUBLE_EQ(t_moments(TParams{vec({0.0}), vec({0.5}), 3.0}).cov_diag(0), 1.5);
  const double s = 1.7;
  EXPECT_NEAR(t_moments(TParams{vec({0.0}), vec({s}), 1e6}).cov_diag(0) / s, 1.0, 1e-5);
  const Moments m = t_moments(TParams{vec({2.0, -3.0}), vec({1.0, 1.0}), 6.0});
  EXPECT_EQ(m.mean, vec({2.0, -3.0}));
}

TEST(TMoments, UndefinedAtLowDof) {
  EXPECT_THROW(t_moments(TParams{vec({0.0}), vec({1.0}), 2.0}), UndefinedMoment);
  EXPECT_THROW(t_moments(TParams{vec({0.0}), vec({1.0}), 1.5}), UndefinedMoment);
}

TEST(GammaDivergenceMc, IdenticalDistributionsGiveZero) {
  for (double nu : {3.0, 8.0}) {
    const TParams q{vec({0.2, -0.5}), vec({1.3, 0.6}), nu};
    const LogDensity log_p = [&](const Vector& z) { return t_logpdf(q, z); };
    const GammaDivergenceEstimate e = gamma_divergence_mc(q, log_p, -0.2, 100000, 5);
    EXPECT_LE(std::abs(e.value), 3.0 * e.mc_stderr + 1e-12) << "nu = " << nu;
    EXPECT_GE(e.mc_stderr, 0.0);
    EXPECT_EQ(e.n_samples, 100000);
  }
}

TEST(GammaDivergenceMc, Deterministic) {
  const TParams q{vec({0.0}), vec({1.0}), 5.0};
  const TParams p{vec({1.0}), vec({1.0}), 5.0};
  const LogDensity log_p = [&](const Vector& z) { return t_logpdf(p, z); };
  const auto a = gamma_divergence_mc(q, log_p, -0.25, 20000, 17);
  const auto b = gamma_divergence_mc(q, log_p, -0.25, 20000, 17);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.mc_stderr, b.mc_stderr);
}

TEST(GammaDivergenceMc, ShiftedPairsArePositive) {
  const double nu = 5.0;
  const TParams t0{vec({0.0}), vec({1.0}), nu};
  const TParams t1{vec({1.0}), vec({1.0}), nu};
  const double gamma = -2.0 / (nu + 1.0);
  const auto forward = gamma_divergence_mc(t0, [&](const Vector& z) { return t_logpdf(t1, z); },
                                           gamma, 1000000, 3);
  const auto backward = gamma_divergence_mc(t1, [&](const Vector& z) { return t_logpdf(t0, z); },
                                            gamma, 1000000, 4);
  EXPECT_GT(forward.value, 3.0 * forward.mc_stderr);
  EXPECT_GT(backward.value, 3.0 * backward.mc_stderr);
}

TEST(GammaDivergenceMc, RejectsGammaOutsideRange) {
  const TParams q{vec({0.0}), vec({1.0}), 5.0};
  const LogDensity log_p = [&](const Vector& z) { return t_logpdf(q, z); };
  EXPECT_THROW(gamma_divergence_mc(q, log_p, 0.0, 100, 1), UnsupportedRegime);
  EXPECT_THROW(gamma_divergence_mc(q, log_p, -1.0, 100, 1), UnsupportedRegime);
  EXPECT_THROW(gamma_divergence_mc(q, log_p, 0.3, 100, 1), UnsupportedRegime);
}

TEST(Rng, ChiSquareMoments) {
  Rng rng(3);
  const double dof = 7.0;
  const int n = 200000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.chi_square(dof);
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  EXPECT_NEAR(mean, dof, 3.0 * std::sqrt(2.0 * dof / n));
  EXPECT_NEAR(var / (2.0 * dof), 1.0, 0.03);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.normal(), b.normal());
    EXPECT_EQ(a.gamma(0.7), b.gamma(0.7));
  }
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}
