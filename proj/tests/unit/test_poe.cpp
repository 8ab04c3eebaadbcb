#include <gtest/gtest.h>

#include <algorithm>

#include "ssmvae/errors.hpp"
#include "ssmvae/poe.hpp"
#include "ssmvae/random.hpp"

using namespace ssmvae;

namespace {

TParams gauss(double mean, double var) {
  return TParams{Vector::Constant(1, mean), Vector::Constant(1, var), kGaussianDof};
}

ModelConfig config_for(std::vector<int> dims, int K = 2, double nu = 5.0) {
  ModelConfig cfg;
  cfg.num_modalities = static_cast<int>(dims.size());
  cfg.modality_dims = std::move(dims);
  cfg.num_classes = K;
  cfg.latent_dim = 3;
  cfg.nu = nu;
  cfg.validate();
  return cfg;
}

TParams random_t(Rng& rng, int d, double dof) {
  TParams p;
  p.loc.resize(d);
  p.scale_diag.resize(d);
  for (int i = 0; i < d; ++i) {
    p.loc(i) = 2.0 * rng.normal();
    p.scale_diag(i) = std::exp(rng.normal());
  }
  p.dof = dof;
  return p;
}

}  // namespace

TEST(FuseGaussian, EmptyReturnsPrior) {
  const ExpertSet s{{}, gauss(0.3, 1.7), {false, false}};
  const TParams f = fuse_gaussian(s);
  EXPECT_EQ(f.loc, s.prior.loc);
  EXPECT_EQ(f.scale_diag, s.prior.scale_diag);
}

TEST(FuseGaussian, OneEqualPrecisionExpert) {
  const TParams f = fuse_gaussian(ExpertSet{{gauss(2.0, 1.0)}, gauss(0.0, 1.0), {true}});
  EXPECT_DOUBLE_EQ(f.loc(0), 1.0);
  EXPECT_DOUBLE_EQ(f.scale_diag(0), 0.5);
  EXPECT_TRUE(f.is_gaussian());
}

TEST(FuseGaussian, TwoOpposedExperts) {
  const TParams f =
      fuse_gaussian(ExpertSet{{gauss(2.0, 1.0), gauss(-2.0, 1.0)}, gauss(0.0, 1.0), {true, true}});
  EXPECT_DOUBLE_EQ(f.loc(0), 0.0);
  EXPECT_DOUBLE_EQ(f.scale_diag(0), 1.0 / 3.0);
}

TEST(FuseGaussian, PrecisionWeightedOracle) {
  // prior N(0, 1), experts N(1, 0.5), N(4, 2): precision 1 + 2 + 0.5 = 3.5,
  // mean (0 + 2 + 2) / 3.5.
  const TParams f =
      fuse_gaussian(ExpertSet{{gauss(1.0, 0.5), gauss(4.0, 2.0)}, gauss(0.0, 1.0), {true, true}});
  EXPECT_NEAR(f.scale_diag(0), 1.0 / 3.5, 1e-15);
  EXPECT_NEAR(f.loc(0), 4.0 / 3.5, 1e-15);
}

TEST(FuseT, EmptyReturnsPrior) {
  const ModelConfig cfg = config_for({3, 2});
  const TParams prior = TParams::standard(3, cfg.nu);
  const TParams f = fuse_t(ExpertSet{{}, prior, {false, false}}, cfg);
  EXPECT_EQ(f.loc, prior.loc);
  EXPECT_EQ(f.scale_diag, prior.scale_diag);
  EXPECT_EQ(f.dof, prior.dof);
}

TEST(FuseT, MomentMatchingOracle) {
  // nu = 6, K = 2, dims (3, 2), both present: joint dof 6 + 5 + 2 = 13.
  const ModelConfig cfg = config_for({3, 2}, 2, 6.0);
  Rng rng(2);
  const TParams e1 = random_t(rng, 3, 11.0);
  const TParams e2 = random_t(rng, 3, 10.0);
  const TParams prior = TParams::standard(3, cfg.nu);
  const TParams f = fuse_t(ExpertSet{{e1, e2}, prior, {true, true}}, cfg);
  EXPECT_EQ(f.dof, 13.0);
  for (int i = 0; i < 3; ++i) {
    const double v0 = 6.0 / 4.0;
    const double v1 = 11.0 / 9.0 * e1.scale_diag(i);
    const double v2 = 10.0 / 8.0 * e2.scale_diag(i);
    const double prec = 1.0 / v0 + 1.0 / v1 + 1.0 / v2;
    const double mean = (e1.loc(i) / v1 + e2.loc(i) / v2) / prec;
    EXPECT_NEAR(f.loc(i), mean, 1e-12);
    EXPECT_NEAR(13.0 / 11.0 * f.scale_diag(i), 1.0 / prec, 1e-12);
  }
}

TEST(FuseT, IdenticalExpertsShrinkTowardPrior) {
  const ModelConfig cfg = config_for({2, 2});
  const TParams e{Vector::Constant(3, 1.5), Vector::Constant(3, 0.8), 9.0};
  const TParams prior = TParams::standard(3, cfg.nu);
  const TParams f = fuse_t(ExpertSet{{e, e}, prior, {true, true}}, cfg);
  const Vector fused_var = t_moments(f).cov_diag;
  const Vector expert_var = t_moments(e).cov_diag;
  const Vector prior_var = t_moments(prior).cov_diag;
  for (int i = 0; i < 3; ++i) {
    EXPECT_GT(f.loc(i), 0.0);
    EXPECT_LT(f.loc(i), 1.5);
    EXPECT_LT(fused_var(i), std::min(expert_var(i), prior_var(i)));
  }
}

TEST(FuseT, LargeDofMatchesGaussian) {
  const ModelConfig cfg = config_for({3, 2}, 2, 1e6);
  Rng rng(9);
  const TParams e1 = random_t(rng, 3, 1e6);
  const TParams e2 = random_t(rng, 3, 1e6);
  const TParams f = fuse_t(ExpertSet{{e1, e2}, TParams::standard(3, 1e6), {true, true}}, cfg);
  auto as_gauss = [](TParams p) {
    p.dof = kGaussianDof;
    return p;
  };
  const TParams g3 = fuse_gaussian(ExpertSet{{as_gauss(e1), as_gauss(e2)},
                                             TParams{Vector::Zero(3), Vector::Ones(3), kGaussianDof},
                                             {true, true}});
  const Vector cov = t_moments(f).cov_diag;
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(f.loc(i) / g3.loc(i), 1.0, 1e-4);
    EXPECT_NEAR(cov(i) / g3.scale_diag(i), 1.0, 1e-4);
  }
}

TEST(FuseT, RejectsLowDofExpert) {
  const ModelConfig cfg = config_for({2, 2});
  const TParams e{Vector::Zero(3), Vector::Ones(3), 2.0};
  EXPECT_THROW(fuse_t(ExpertSet{{e}, TParams::standard(3, cfg.nu), {true, false}}, cfg),
               UndefinedMoment);
}

TEST(ExpertSet, RejectsMaskMismatch) {
  const ExpertSet s{{gauss(0.0, 1.0)}, gauss(0.0, 1.0), {true, true}};
  EXPECT_THROW(fuse_gaussian(s), ContractViolation);
}

TEST(PoeProperties, PermutationInvariantExactly) {
  const ModelConfig cfg = config_for({2, 2, 2, 2});
  Rng rng(21);
  std::vector<TParams> experts;
  for (int m = 0; m < 4; ++m) experts.push_back(random_t(rng, 3, 9.0));
  const TParams prior = TParams::standard(3, cfg.nu);
  const std::vector<bool> all(4, true);
  const TParams base_t = fuse_t(ExpertSet{experts, prior, all}, cfg);
  std::vector<TParams> gexperts = experts;
  for (auto& e : gexperts) e.dof = kGaussianDof;
  const TParams gprior{Vector::Zero(3), Vector::Ones(3), kGaussianDof};
  const TParams base_g = fuse_gaussian(ExpertSet{gexperts, gprior, all});

  std::vector<int> order = {0, 1, 2, 3};
  while (std::next_permutation(order.begin(), order.end())) {
    std::vector<TParams> pe;
    std::vector<TParams> pg;
    for (int i : order) {
      pe.push_back(experts[static_cast<std::size_t>(i)]);
      pg.push_back(gexperts[static_cast<std::size_t>(i)]);
    }
    const TParams ft = fuse_t(ExpertSet{pe, prior, all}, cfg);
    const TParams fg = fuse_gaussian(ExpertSet{pg, gprior, all});
    EXPECT_EQ(ft.loc, base_t.loc);
    EXPECT_EQ(ft.scale_diag, base_t.scale_diag);
    EXPECT_EQ(fg.loc, base_g.loc);
    EXPECT_EQ(fg.scale_diag, base_g.scale_diag);
  }
}

TEST(PoeProperties, AddingExpertNeverIncreasesVariance) {
  // The t-mode comparison is between covariances: the joint dof grows with
  // every added modality, so scale_diag alone is not comparable.
  const ModelConfig cfg = config_for({2, 3, 1, 4});
  Rng rng(5);
  const TParams prior = TParams::standard(3, cfg.nu);
  const TParams gprior{Vector::Zero(3), Vector::Ones(3), kGaussianDof};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TParams> experts;
    std::vector<TParams> gexperts;
    std::vector<bool> mask(4, false);
    Vector prev_t = t_moments(prior).cov_diag;
    Vector prev_g = gprior.scale_diag;
    for (int m = 0; m < 4; ++m) {
      TParams e = random_t(rng, 3, 5.0 + cfg.modality_dims[static_cast<std::size_t>(m)] + 2);
      experts.push_back(e);
      e.dof = kGaussianDof;
      gexperts.push_back(e);
      mask[static_cast<std::size_t>(m)] = true;
      const Vector cur_t = t_moments(fuse_t(ExpertSet{experts, prior, mask}, cfg)).cov_diag;
      const Vector cur_g = fuse_gaussian(ExpertSet{gexperts, gprior, mask}).scale_diag;
      for (int i = 0; i < 3; ++i) {
        EXPECT_LE(cur_t(i), prev_t(i));
        EXPECT_LE(cur_g(i), prev_g(i));
      }
      prev_t = cur_t;
      prev_g = cur_g;
    }
  }
}

TEST(PoeProperties, MaskedModalityHasNoInfluence) {
  // Expert lists carry present modalities only; a three-modality set with
  // modality 1 absent must equal the same two experts fused under a
  // configuration that never had modality 1.
  const ModelConfig cfg3 = config_for({2, 7, 3});
  const ModelConfig cfg2 = config_for({2, 3});
  Rng rng(8);
  const TParams a = random_t(rng, 3, 9.0);
  const TParams c = random_t(rng, 3, 10.0);
  const TParams prior = TParams::standard(3, cfg3.nu);
  const TParams f3 = fuse_t(ExpertSet{{a, c}, prior, {true, false, true}}, cfg3);
  const TParams f2 = fuse_t(ExpertSet{{a, c}, prior, {true, true}}, cfg2);
  EXPECT_EQ(f3.loc, f2.loc);
  EXPECT_EQ(f3.scale_diag, f2.scale_diag);
  EXPECT_EQ(f3.dof, f2.dof);
  EXPECT_EQ(joint_dof(cfg3, {true, false, true}), 5.0 + 2 + 3 + 2);
}
