#include "ssmvae/checks.hpp"

#include "ssmvae/objective.hpp"
#include "ssmvae/random.hpp"

namespace ssmvae {

SSMVAEModel toy_gradcheck_model(Variant variant, std::uint64_t seed, bool unlabeled_per_modality) {
  ModelConfig cfg;
  cfg.num_modalities = 2;
  cfg.num_classes = 2;
  cfg.modality_dims = {3, 2};
  cfg.latent_dim = 2;
  cfg.hidden_dims = {4};
  cfg.nu = 5.0;
  cfg.sigma2 = 0.8;
  cfg.variant = variant;
  cfg.unlabeled_per_modality = unlabeled_per_modality;
  SSMVAEModel model = SSMVAEModel::init(cfg, seed);
  // The default initialisation is nearly zero, which makes every gradient
  // tiny; draw O(1) weights instead.
  Rng rng(derive_seed(seed, 99));
  for (auto& [name, m] : model.params) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = 0.5 * rng.normal();
  }
  return model;
}

ToyBatch toy_gradcheck_batch(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 98));
  auto make = [&](Eigen::Index rows) {
    ModelInputs in;
    for (int d : cfg.modality_dims) {
      Matrix x(rows, d);
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
      in.x.push_back(x);
    }
    in.present = MaskMatrix::Ones(rows, cfg.num_modalities);
    return in;
  };
  ToyBatch b;
  b.labeled = make(3);
  b.labels = {0, 1, 1};
  b.labeled.present(2, 1) = 0;
  b.labeled.x[1].row(2).setZero();
  b.unlabeled = make(3);
  b.unlabeled.present(1, 0) = 0;
  b.unlabeled.x[0].row(1).setZero();
  return b;
}

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& o) {
  std::vector<GradSuiteEntry> out;
  struct Case {
    Variant variant;
    bool per_modality;
  };
  const Case cases[] = {{Variant::kTPoe, false},          {Variant::kTPoe, true},
                        {Variant::kGaussianPoe, false},   {Variant::kTEarly, false},
                        {Variant::kTLate, false},         {Variant::kGaussianEarly, false},
                        {Variant::kGaussianLate, false}};
  for (const Case& c : cases) {
    const SSMVAEModel model = toy_gradcheck_model(c.variant, o.seed, c.per_modality);
    const ToyBatch batch = toy_gradcheck_batch(model.config, o.seed);
    const double alpha = default_alpha(model.config, 6);
    const std::string prefix =
        std::string(to_string(c.variant)) + (c.per_modality ? "+per_modality" : "");
    const std::uint64_t noise_seed = derive_seed(o.seed, 5);

    auto run = [&](const std::string& objective, const nn::DifferentiableLoss& loss) {
      out.push_back({prefix + "/" + objective,
                     nn::finite_diff_check(loss, model.params, o.rel_tol, o.abs_floor, o.step)});
    };
    if (model.fusion() != Fusion::kEarly && !c.per_modality) {
      run("labeled_modality0", [&](nn::Tape& t, const nn::ParamStore& p) {
        Rng rng(noise_seed);
        return graph::labeled_loss(t, model, p, batch.labeled.x[0], 0,
                                   one_hot(batch.labels, model.config.num_classes), rng);
      });
    }
    if (!c.per_modality) {
      run("labeled_all", [&](nn::Tape& t, const nn::ParamStore& p) {
        Rng rng(noise_seed);
        return graph::labeled_loss_all(t, model, p, batch.labeled, batch.labels, rng);
      });
    }
    run("unlabeled", [&](nn::Tape& t, const nn::ParamStore& p) {
      Rng rng(noise_seed);
      return graph::unlabeled_loss(t, model, p, batch.unlabeled, rng).total;
    });
    run("overall", [&](nn::Tape& t, const nn::ParamStore& p) {
      Rng rng(noise_seed);
      return graph::overall_loss(t, model, p, batch.labeled, batch.labels, batch.unlabeled, alpha,
                                 rng)
          .total;
    });
  }
  return out;
}

}  // namespace ssmvae
