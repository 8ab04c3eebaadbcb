#include "ssmvae/objective.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "ssmvae/errors.hpp"
#include "ssmvae/tdist.hpp"

namespace ssmvae {

GammaConstants gamma_constants_aug(double nu, int n_z, int aug_dim, double sigma2) {
  if (!(nu > 2.0) || !std::isfinite(nu)) {
    throw UnsupportedRegime("gamma constants need finite nu > 2, got " + std::to_string(nu));
  }
  if (n_z < 1 || aug_dim < 1) throw ContractViolation("gamma constants: dims must be positive");
  if (!(sigma2 > 0.0)) throw ContractViolation("gamma constants: sigma2 must be positive");
  const double n = aug_dim;
  const double m = n_z;
  GammaConstants c;
  c.nu = nu;
  c.n_z = n_z;
  c.aug_dim = aug_dim;
  c.sigma2 = sigma2;
  c.gamma = -2.0 / (nu + n + m);
  const double g1 = 1.0 + c.gamma;

  // ||q||_{1+g} for q = t(mu, Sigma / (1 + n/nu), nu + n) in n_z dims, over |Sigma|^e.
  const double nup = nu + n;
  const double log_kf = (g1 * t_log_normalizer(nup, n_z) + 0.5 * m * std::log(nup * std::numbers::pi) +
                         std::lgamma(0.5 * (nup - 2.0)) - std::lgamma(0.5 * (nup + m - 2.0))) /
                        g1;
  c.c1 = std::exp(log_kf - m * c.det_exponent() * std::log1p(n / nu));

  // Joint model density C sigma^-n (1 + r^2/nu)^{-(nu+n+m)/2} and its (1+g)-norm.
  const double log_c = t_log_normalizer(nu, aug_dim + n_z);
  const double log_sigma = 0.5 * std::log(sigma2);
  const double log_norm = (g1 * (log_c - n * log_sigma) + n * log_sigma +
                           0.5 * (n + m) * std::log(nu * std::numbers::pi) +
                           std::lgamma(0.5 * nu - 1.0) - std::lgamma(0.5 * (nu + n + m) - 1.0)) /
                          g1;
  c.c2 = std::exp(c.gamma * (log_c - n * log_sigma - log_norm));
  return c;
}

GammaConstants gamma_constants(double nu, int n_z, int n_x_m, int num_classes, double sigma2) {
  return gamma_constants_aug(nu, n_z, n_x_m + num_classes, sigma2);
}

double t_regularizer(const Vector& mu, const Vector& var, const GammaConstants& c) {
  return 0.5 * (mu.squaredNorm() + c.trace_coef() * var.sum() -
                c.det_coef() * std::exp(c.det_exponent() * var.array().log().sum()));
}

double gaussian_regularizer(const Vector& mu, const Vector& var) {
  return 0.5 * (mu.squaredNorm() + var.sum() - var.array().log().sum() -
                static_cast<double>(mu.size()));
}

double default_alpha(const ModelConfig& cfg, std::int64_t num_train_rows) {
  return cfg.alpha_scale * static_cast<double>(num_train_rows);
}

namespace {

using nn::Tape;
using nn::Var;

// Row-wise posterior on the tape. log_var is the log of the raw scale that
// the reparameterisation multiplies (encoder sigma^2, or the fused analogue);
// for Gaussian variants it is the log variance.
struct RowPosterior {
  Var mu;
  Var log_var;
  bool gaussian = false;
  Matrix trace_coef;  // rows x 1
  Matrix det_coef;
  Matrix det_exp;
  Matrix chi_dof;
};

class ConstantsCache {
 public:
  explicit ConstantsCache(const ModelConfig& cfg) : cfg_(cfg) {}
  const GammaConstants& get(int aug) {
    auto it = cache_.find(aug);
    if (it == cache_.end()) {
      it = cache_.emplace(aug, gamma_constants_aug(cfg_.nu, cfg_.latent_dim, aug, cfg_.sigma2))
               .first;
    }
    return it->second;
  }

 private:
  const ModelConfig& cfg_;
  std::map<int, GammaConstants> cache_;
};

void fill_t_constants(RowPosterior& post, const std::vector<int>& aug, ConstantsCache& cache,
                      double nu) {
  const auto n = static_cast<Eigen::Index>(aug.size());
  post.trace_coef.resize(n, 1);
  post.det_coef.resize(n, 1);
  post.det_exp.resize(n, 1);
  post.chi_dof.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const GammaConstants& c = cache.get(aug[static_cast<std::size_t>(i)]);
    post.trace_coef(i, 0) = c.trace_coef();
    post.det_coef(i, 0) = c.det_coef();
    post.det_exp(i, 0) = c.det_exponent();
    post.chi_dof(i, 0) = nu + c.aug_dim;
  }
}

RowPosterior from_encoder(Tape& tape, const graph::EncoderOut& e, const std::vector<int>& aug,
                          const SSMVAEModel& model, ConstantsCache& cache) {
  RowPosterior post;
  post.mu = e.mu;
  post.log_var = tape.scale(e.log_sigma, 2.0);
  post.gaussian = model.gaussian();
  if (!post.gaussian) fill_t_constants(post, aug, cache, model.config.nu);
  return post;
}

struct RowNoise {
  Matrix eps;     // rows x n_z
  Matrix radial;  // rows x 1
};

RowNoise draw_noise(Rng& rng, const RowPosterior& post, Eigen::Index rows, int n_z, double nu) {
  RowNoise noise{Matrix(rows, n_z), Matrix::Ones(rows, 1)};
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (post.gaussian) {
      for (int j = 0; j < n_z; ++j) noise.eps(i, j) = rng.normal();
    } else {
      const ReparamNoise r = draw_reparam_noise(rng, n_z, post.chi_dof(i, 0));
      noise.eps.row(i) = r.eps.transpose();
      noise.radial(i, 0) = std::sqrt(nu / r.delta);
    }
  }
  return noise;
}

Var sample_z(Tape& tape, const RowPosterior& post, const RowNoise& noise) {
  Var spread = tape.exp(tape.scale(post.log_var, 0.5)) * tape.constant(noise.eps);
  return post.mu + spread * tape.constant(noise.radial);
}

// Rows x 1: |mu|^2 + weighted trace - weighted determinant power (t), or
// the Gaussian KL times two.
Var regularizer_rows(Tape& tape, const RowPosterior& post, int n_z) {
  Var mu2 = tape.row_sum(tape.square(post.mu));
  Var trace = tape.row_sum(tape.exp(post.log_var));
  Var log_det = tape.row_sum(post.log_var);
  if (post.gaussian) return tape.shift(mu2 + trace - log_det, -static_cast<double>(n_z));
  Var det_power = tape.exp(log_det * tape.constant(post.det_exp));
  return mu2 + trace * tape.constant(post.trace_coef) - det_power * tape.constant(post.det_coef);
}

// Rows x 1 squared reconstruction error over the modalities flagged in
// `present` (all modalities if empty), divided by sigma^2.
Var reconstruction_rows(Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params,
                        const std::vector<int>& modalities, const std::vector<Matrix>& x,
                        const MaskMatrix* present, const Matrix& y, Var z) {
  Var total;
  for (int m : modalities) {
    Var mean = graph::decode(tape, model, params, m, y, z);
    Var err = tape.row_sum(tape.square(tape.constant(x[static_cast<std::size_t>(m)]) - mean));
    if (present) err = err * tape.constant(present->col(m).cast<double>());
    total = total.valid() ? total + err : err;
  }
  return tape.scale(total, 1.0 / model.config.sigma2);
}

Var row_loss(Tape& tape, const SSMVAEModel& model, const RowPosterior& post, Var recon) {
  return tape.scale(recon + regularizer_rows(tape, post, model.config.latent_dim), 0.5);
}

std::vector<Eigen::Index> rows_with(const MaskMatrix& present, int m) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < present.rows(); ++i) {
    if (present(i, m)) idx.push_back(i);
  }
  return idx;
}

Matrix take_rows(const Matrix& a, const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = a.row(idx[r]);
  return out;
}

std::vector<Matrix> masked_features(const ModelInputs& in) {
  std::vector<Matrix> x;
  for (std::size_t m = 0; m < in.x.size(); ++m) {
    const Matrix mask = in.present.col(static_cast<Eigen::Index>(m)).cast<double>();
    x.push_back((in.x[m].array().colwise() * mask.col(0).array()).matrix());
  }
  return x;
}

int present_aug(const ModelConfig& cfg, const MaskMatrix& present, Eigen::Index i) {
  int aug = cfg.num_classes;
  for (int m = 0; m < cfg.num_modalities; ++m) {
    if (present(i, m)) aug += cfg.modality_dims[static_cast<std::size_t>(m)];
  }
  return aug;
}

void require_rows_present(const MaskMatrix& present) {
  for (Eigen::Index i = 0; i < present.rows(); ++i) {
    if (present.row(i).cast<int>().sum() == 0) {
      throw ContractViolation("row " + std::to_string(i) + " has no modality present");
    }
  }
}

std::vector<int> all_modalities(const ModelConfig& cfg) {
  std::vector<int> ms(static_cast<std::size_t>(cfg.num_modalities));
  for (int m = 0; m < cfg.num_modalities; ++m) ms[static_cast<std::size_t>(m)] = m;
  return ms;
}

// Per-modality posterior of modality m for class hypothesis y.
RowPosterior modality_posterior(Tape& tape, const SSMVAEModel& model,
                                const nn::ParamStore& params, int m, const Matrix& x_m,
                                const Matrix& y, ConstantsCache& cache) {
  const int aug = model.config.modality_dims[static_cast<std::size_t>(m)] +
                  model.config.num_classes;
  return from_encoder(tape, graph::encode(tape, model, params, m, x_m, y),
                      std::vector<int>(static_cast<std::size_t>(x_m.rows()), aug), model, cache);
}

// Product of the present experts with the prior, row by row.
RowPosterior fused_posterior(Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params,
                             const std::vector<Matrix>& x, const MaskMatrix& present,
                             const Matrix& y, ConstantsCache& cache) {
  const ModelConfig& cfg = model.config;
  const Eigen::Index n = present.rows();
  const bool gaussian = model.gaussian();
  const double nu = cfg.nu;
  Var precision = tape.constant(Matrix::Constant(n, 1, gaussian ? 1.0 : (nu - 2.0) / nu));
  Var weighted;
  for (int m = 0; m < cfg.num_modalities; ++m) {
    const graph::EncoderOut e = graph::encode(tape, model, params, m, x[static_cast<std::size_t>(m)], y);
    Var var = tape.exp(tape.scale(e.log_sigma, 2.0));
    if (!gaussian) {
      const double aug = cfg.modality_dims[static_cast<std::size_t>(m)] + cfg.num_classes;
      var = tape.scale(var, nu / (nu + aug - 2.0));
    }
    Var prec = tape.constant(present.col(m).cast<double>()) / var;
    precision = precision + prec;
    Var w = prec * e.mu;
    weighted = weighted.valid() ? weighted + w : w;
  }
  RowPosterior post;
  post.gaussian = gaussian;
  post.mu = weighted / precision;
  post.log_var = tape.neg(tape.log(precision));
  if (!gaussian) {
    std::vector<int> aug(static_cast<std::size_t>(n));
    Matrix shift(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      aug[static_cast<std::size_t>(i)] = present_aug(cfg, present, i);
      shift(i, 0) = std::log((nu + aug[static_cast<std::size_t>(i)] - 2.0) / nu);
    }
    post.log_var = post.log_var + tape.constant(shift);
    fill_t_constants(post, aug, cache, nu);
  }
  return post;
}

RowPosterior early_posterior(Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params,
                             const ModelInputs& in, const Matrix& y, ConstantsCache& cache) {
  std::vector<int> aug(static_cast<std::size_t>(in.rows()));
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    aug[static_cast<std::size_t>(i)] = present_aug(model.config, in.present, i);
  }
  return from_encoder(tape, graph::encode_early(tape, model, params, in, y), aug, model, cache);
}

// Weight of the entropy term for each row.
Matrix entropy_weights(const SSMVAEModel& model, const std::vector<int>& aug,
                       ConstantsCache& cache) {
  Matrix w(static_cast<Eigen::Index>(aug.size()), 1);
  for (std::size_t i = 0; i < aug.size(); ++i) {
    double c = 1.0;
    if (!model.gaussian()) {
      c = cache.get(model.config.entropy_aug_dim.value_or(aug[i])).c1;
    }
    w(static_cast<Eigen::Index>(i), 0) = c;
  }
  return w;
}

// sum_rows [ sum_k q_k L_k + w H(q) ] given log q and the per-class row losses.
graph::UnlabeledTerms marginalise(Tape& tape, Var log_q, const std::vector<Var>& class_losses,
                                  const Matrix& entropy_weight) {
  std::vector<Var> weighted;
  std::vector<Var> plogp;
  for (std::size_t k = 0; k < class_losses.size(); ++k) {
    Var lq = tape.slice_cols(log_q, static_cast<int>(k), 1);
    Var q = tape.exp(lq);
    weighted.push_back(q * class_losses[k]);
    plogp.push_back(q * lq);
  }
  Var mixture = tape.row_sum(tape.concat_cols(weighted));
  Var entropy = tape.neg(tape.row_sum(tape.concat_cols(plogp)));
  Var ent_term = entropy * tape.constant(entropy_weight);
  return {tape.sum(mixture + ent_term), tape.sum(ent_term)};
}

double class_prior_offset(const ModelConfig& cfg, int k) {
  const std::vector<double> prior = cfg.prior_or_uniform();
  const double p = prior[static_cast<std::size_t>(k)];
  if (!(p > 0.0)) throw UnsupportedRegime("unlabeled loss needs a positive class prior");
  const double offset = -std::log(cfg.num_classes * p);
  return offset;
}

Var add_offset(Tape& tape, Var v, double offset) {
  return offset == 0.0 ? v : tape.shift(v, offset);
}

}  // namespace

namespace graph {

Var labeled_loss(Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params,
                 const Matrix& x_m, int m, const Matrix& y, Rng& rng) {
  if (x_m.rows() == 0) throw ContractViolation("labeled_loss: empty batch");
  ConstantsCache cache(model.config);
  const RowPosterior post = modality_posterior(tape, model, params, m, x_m, y, cache);
  const RowNoise noise = draw_noise(rng, post, x_m.rows(), model.config.latent_dim, model.config.nu);
  Var z = sample_z(tape, post, noise);
  std::vector<Matrix> x(static_cast<std::size_t>(model.config.num_modalities));
  x[static_cast<std::size_t>(m)] = x_m;
  Var recon = reconstruction_rows(tape, model, params, {m}, x, nullptr, y, z);
  return tape.mean(row_loss(tape, model, post, recon));
}

Var labeled_loss_all(Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params,
                     const ModelInputs& in, const std::vector<int>& labels, Rng& rng) {
  const ModelConfig& cfg = model.config;
  if (static_cast<Eigen::Index>(labels.size()) != in.rows()) {
    throw ContractViolation("labeled_loss_all: one label per row required");
  }
  if (in.rows() == 0) return tape.scalar_constant(0.0);
  const Matrix y = one_hot(labels, cfg.num_classes);
  if (model.fusion() == Fusion::kEarly) {
    require_rows_present(in.present);
    ConstantsCache cache(cfg);
    const RowPosterior post = early_posterior(tape, model, params, in, y, cache);
    const RowNoise noise = draw_noise(rng, post, in.rows(), cfg.latent_dim, cfg.nu);
    Var z = sample_z(tape, post, noise);
    Var recon = reconstruction_rows(tape, model, params, all_modalities(cfg), masked_features(in),
                                    &in.present, y, z);
    return tape.mean(row_loss(tape, model, post, recon));
  }
  Var total;
  for (int m = 0; m < cfg.num_modalities; ++m) {
    const auto idx = rows_with(in.present, m);
    if (idx.empty()) continue;
    Var term = labeled_loss(tape, model, params, take_rows(in.x[static_cast<std::size_t>(m)], idx),
                            m, take_rows(y, idx), rng);
    total = total.valid() ? total + term : term;
  }
  return total.valid() ? total : tape.scalar_constant(0.0);
}

UnlabeledTerms unlabeled_loss(Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params,
                              const ModelInputs& in, Rng& rng) {
  const ModelConfig& cfg = model.config;
  const int K = cfg.num_classes;
  if (in.rows() == 0) return {tape.scalar_constant(0.0), tape.scalar_constant(0.0)};
  require_rows_present(in.present);
  ConstantsCache cache(cfg);
  const Eigen::Index n = in.rows();
  const std::vector<Matrix> x = masked_features(in);

  if (model.fusion() == Fusion::kLate) {
    Var total;
    Var entropy;
    for (int m = 0; m < cfg.num_modalities; ++m) {
      const auto idx = rows_with(in.present, m);
      if (idx.empty()) continue;
      const Matrix x_m = take_rows(x[static_cast<std::size_t>(m)], idx);
      const auto rows = static_cast<Eigen::Index>(idx.size());
      Var log_q = modality_log_probs(tape, model, params, m, x_m);
      std::vector<Var> losses;
      RowNoise noise;
      for (int k = 0; k < K; ++k) {
        const Matrix y = one_hot_rows(rows, k, K);
        const RowPosterior post = modality_posterior(tape, model, params, m, x_m, y, cache);
        if (k == 0) noise = draw_noise(rng, post, rows, cfg.latent_dim, cfg.nu);
        std::vector<Matrix> xs(static_cast<std::size_t>(cfg.num_modalities));
        xs[static_cast<std::size_t>(m)] = x_m;
        Var recon = reconstruction_rows(tape, model, params, {m}, xs, nullptr, y,
                                        sample_z(tape, post, noise));
        losses.push_back(add_offset(tape, row_loss(tape, model, post, recon),
                                    class_prior_offset(cfg, k)));
      }
      const int aug = cfg.modality_dims[static_cast<std::size_t>(m)] + K;
      const UnlabeledTerms t = marginalise(
          tape, log_q, losses,
          entropy_weights(model, std::vector<int>(static_cast<std::size_t>(rows), aug), cache));
      total = total.valid() ? total + t.total : t.total;
      entropy = entropy.valid() ? entropy + t.entropy : t.entropy;
    }
    return {total, entropy};
  }

  std::vector<int> aug(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) aug[static_cast<std::size_t>(i)] = present_aug(cfg, in.present, i);
  Var log_q = classifier_log_probs(tape, model, params, in);
  const bool per_modality = cfg.unlabeled_per_modality && model.fusion() == Fusion::kPoe;

  // Noise is drawn once per row (per modality row when summing per-modality
  // terms) and shared by every class hypothesis.
  std::vector<RowNoise> noise;
  std::vector<Var> losses;
  for (int k = 0; k < K; ++k) {
    const Matrix y = one_hot_rows(n, k, K);
    Var loss_k;
    if (per_modality) {
      for (int m = 0; m < cfg.num_modalities; ++m) {
        const RowPosterior post =
            modality_posterior(tape, model, params, m, x[static_cast<std::size_t>(m)], y, cache);
        if (k == 0) noise.push_back(draw_noise(rng, post, n, cfg.latent_dim, cfg.nu));
        Var recon = reconstruction_rows(tape, model, params, {m}, x, nullptr, y,
                                        sample_z(tape, post, noise[static_cast<std::size_t>(m)]));
        Var term = row_loss(tape, model, post, recon) *
                   tape.constant(in.present.col(m).cast<double>());
        loss_k = loss_k.valid() ? loss_k + term : term;
      }
    } else {
      const RowPosterior post = model.fusion() == Fusion::kEarly
                                    ? early_posterior(tape, model, params, in, y, cache)
                                    : fused_posterior(tape, model, params, x, in.present, y, cache);
      if (k == 0) noise.push_back(draw_noise(rng, post, n, cfg.latent_dim, cfg.nu));
      Var recon = reconstruction_rows(tape, model, params, all_modalities(cfg), x, &in.present, y,
                                      sample_z(tape, post, noise[0]));
      loss_k = row_loss(tape, model, post, recon);
    }
    losses.push_back(add_offset(tape, loss_k, class_prior_offset(cfg, k)));
  }
  return marginalise(tape, log_q, losses, entropy_weights(model, aug, cache));
}

Var cross_entropy(Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params,
                  const ModelInputs& in, const std::vector<int>& labels) {
  const ModelConfig& cfg = model.config;
  if (static_cast<Eigen::Index>(labels.size()) != in.rows()) {
    throw ContractViolation("cross_entropy: one label per row required");
  }
  if (in.rows() == 0) return tape.scalar_constant(0.0);
  const Matrix y = one_hot(labels, cfg.num_classes);
  if (model.fusion() != Fusion::kLate) {
    Var ll = tape.row_sum(classifier_log_probs(tape, model, params, in) * tape.constant(y));
    return tape.neg(tape.mean(ll));
  }
  require_rows_present(in.present);
  Var total;
  for (int m = 0; m < cfg.num_modalities; ++m) {
    const auto idx = rows_with(in.present, m);
    if (idx.empty()) continue;
    Var lq = modality_log_probs(tape, model, params, m, take_rows(in.x[static_cast<std::size_t>(m)], idx));
    Var term = tape.neg(tape.mean(tape.row_sum(lq * tape.constant(take_rows(y, idx)))));
    total = total.valid() ? total + term : term;
  }
  return total;
}

OverallTerms overall_loss(Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params,
                          const ModelInputs& labeled, const std::vector<int>& labels,
                          const ModelInputs& unlabeled, double alpha, Rng& rng) {
  if (!(alpha >= 0.0)) throw ContractViolation("overall_loss: alpha must be >= 0");
  Var lab = labeled_loss_all(tape, model, params, labeled, labels, rng);
  const UnlabeledTerms unl = unlabeled_loss(tape, model, params, unlabeled, rng);
  Var total = lab + unl.total;
  OverallTerms out;
  if (alpha > 0.0 && labeled.rows() > 0) {
    Var cls = tape.scale(cross_entropy(tape, model, params, labeled, labels), alpha);
    total = total + cls;
    out.breakdown.classification = cls.scalar();
  }
  out.total = total;
  out.breakdown.labeled_gamma = lab.scalar();
  out.breakdown.unlabeled_gamma = unl.total.scalar();
  out.breakdown.entropy_term = unl.entropy.scalar();
  out.breakdown.total = total.scalar();
  return out;
}

}  // namespace graph

double labeled_loss(const SSMVAEModel& model, const Matrix& x_m, int m, const Matrix& y,
                    Rng& rng) {
  nn::Tape tape;
  return graph::labeled_loss(tape, model, model.params, x_m, m, y, rng).scalar();
}

double labeled_loss_all(const SSMVAEModel& model, const ModelInputs& in,
                        const std::vector<int>& labels, Rng& rng) {
  nn::Tape tape;
  return graph::labeled_loss_all(tape, model, model.params, in, labels, rng).scalar();
}

double unlabeled_loss(const SSMVAEModel& model, const ModelInputs& in, Rng& rng) {
  nn::Tape tape;
  return graph::unlabeled_loss(tape, model, model.params, in, rng).total.scalar();
}

LossBreakdown overall_loss(const SSMVAEModel& model, const ModelInputs& labeled,
                           const std::vector<int>& labels, const ModelInputs& unlabeled,
                           double alpha, Rng& rng) {
  nn::Tape tape;
  return graph::overall_loss(tape, model, model.params, labeled, labels, unlabeled, alpha, rng)
      .breakdown;
}

// ---------------------------------------------------------------------------
// Closed form versus Monte Carlo.

namespace {

// Small fixed decoder mu_theta(y, z) = relu([y z] W1 + b1) W2 + b2.
struct ToyDecoder {
  Matrix w1, w2;
  RowVector b1, b2;
  RowVector y;

  Vector operator()(const Vector& z) const {
    RowVector in(y.size() + z.size());
    in << y, z.transpose();
    const RowVector h = ((in * w1) + b1).cwiseMax(0.0);
    return ((h * w2) + b2).transpose();
  }
};

double radial_log_integral(double power, int dim, double nu) {
  // log of int_0^inf r^{dim-1} (1 + r^2/nu)^{-power} dr
  boost::math::quadrature::exp_sinh<double> integrator;
  const double d1 = dim - 1.0;
  // Rescale by the integrand at its peak to keep the quadrature in range.
  const double peak_r = std::sqrt(std::max(d1, 1e-12) * nu / std::max(2.0 * power - d1, 1e-12));
  const double log_peak = d1 * std::log(peak_r) - power * std::log1p(peak_r * peak_r / nu);
  auto f = [&](double r) {
    if (r <= 0.0) return 0.0;
    return std::exp(d1 * std::log(r) - power * std::log1p(r * r / nu) - log_peak);
  };
  return std::log(integrator.integrate(f)) + log_peak;
}

}  // namespace

McCheckReport closed_form_vs_mc_check(const McCheckConfig& cfg) {
  if (cfg.n_x < 1 || cfg.n_x > 4 || cfg.n_z < 1 || cfg.n_z > 2 || cfg.num_classes < 1 ||
      cfg.num_classes > 2) {
    throw ContractViolation("closed_form_vs_mc_check: toy dims only (n_x <= 4, n_z <= 2, K <= 2)");
  }
  if (cfg.n_mc < 2 || cfg.num_pairs < 4) throw ContractViolation("closed_form_vs_mc_check: bad sizes");
  const int n = cfg.n_x + cfg.num_classes;
  const int m = cfg.n_z;
  const double nu = cfg.nu;
  McCheckReport report;
  report.constants = gamma_constants(nu, m, cfg.n_x, cfg.num_classes, cfg.sigma2);
  report.constants.c1 *= 1.0 + cfg.c1_perturbation;
  const double gamma = report.constants.gamma;

  Rng setup(derive_seed(cfg.seed, 1));
  Vector x(cfg.n_x);
  for (int i = 0; i < cfg.n_x; ++i) x(i) = setup.normal();
  ToyDecoder dec;
  dec.y = RowVector::Zero(cfg.num_classes);
  dec.y(0) = 1.0;
  auto fill = [&](Eigen::Index r, Eigen::Index c, double sd) {
    Matrix w(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) w(i, j) = sd * setup.normal();
    }
    return w;
  };
  dec.w1 = fill(cfg.num_classes + m, cfg.decoder_hidden, 0.8);
  dec.b1 = fill(1, cfg.decoder_hidden, 0.3).row(0);
  dec.w2 = fill(cfg.decoder_hidden, cfg.n_x, 0.8);
  dec.b2 = fill(1, cfg.n_x, 0.3).row(0);

  const double log_sigma = 0.5 * std::log(cfg.sigma2);
  const double log_c = t_log_normalizer(nu, n + m);
  const double power = 0.5 * (nu + n + m);
  auto recon_with = [&](const ToyDecoder& de, const Vector& z) { return (x - de(z)).squaredNorm(); };

  // ||p||_{1+g}^{1+g} = (C sigma^-n)^{1+g} sigma^n |S^{d-1}| int r^{d-1} (1 + r^2/nu)^{-(1+g)(nu+d)/2} dr
  const int d = n + m;
  const double log_sphere = std::log(2.0) + 0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d);
  const double g1 = 1.0 + gamma;
  report.log_joint_norm = (g1 * (log_c - n * log_sigma) + n * log_sigma + log_sphere +
                           radial_log_integral(g1 * power, d, nu)) /
                          g1;
  report.kappa = -0.5 * nu * gamma *
                 std::exp(-gamma * (log_c - n * log_sigma - report.log_joint_norm));

  // "latent_only" uses a decoder that ignores z, so its difference is the
  // regularizer alone.
  std::vector<std::string> kinds = {"identical", "mean_only", "latent_only"};
  for (int p = 3; p < cfg.num_pairs - 1; ++p) kinds.emplace_back("full");
  kinds.emplace_back("local");

  report.passed = true;
  for (std::size_t p = 0; p < kinds.size(); ++p) {
    const std::string& kind = kinds[p];
    Rng prng(derive_seed(cfg.seed, 100 + p));
    auto draw = [&](double sd) {
      Vector v(m);
      for (int i = 0; i < m; ++i) v(i) = sd * prng.normal();
      return v;
    };
    const Vector mu1 = draw(0.7);
    const Vector log_var1 = draw(0.4);
    Vector mu2 = mu1;
    Vector log_var2 = log_var1;
    if (kind == "mean_only") {
      mu2 = draw(0.7);
    } else if (kind == "full" || kind == "latent_only") {
      mu2 = draw(0.7);
      log_var2 = draw(0.4);
    } else if (kind == "local") {
      mu2 = mu1 + draw(0.05);
      log_var2 = log_var1 + draw(0.05);
    }
    ToyDecoder pair_dec = dec;
    if (kind == "latent_only") pair_dec.w1.bottomRows(m).setZero();
    auto recon = [&](const Vector& z) { return recon_with(pair_dec, z); };
    const LogDensity log_joint = [&](const Vector& z) {
      return log_c - n * log_sigma -
             power * std::log1p((z.squaredNorm() + recon(z) / cfg.sigma2) / nu);
    };
    const Vector var1 = log_var1.array().exp();
    const Vector var2 = log_var2.array().exp();

    // Closed form: MC reconstruction (paired draws) plus analytic terms.
    Rng rrng(derive_seed(cfg.seed, 1000 + p));
    const TParams enc1{mu1, var1, nu + n};
    const TParams enc2{mu2, var2, nu + n};
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::int64_t s = 0; s < cfg.n_mc; ++s) {
      const ReparamNoise noise = draw_reparam_noise(rrng, m, nu + n);
      const double diff = recon(t_sample_reparam(enc1, nu, n, noise)) -
                          recon(t_sample_reparam(enc2, nu, n, noise));
      sum += diff;
      sum_sq += diff * diff;
    }
    const double count = static_cast<double>(cfg.n_mc);
    const double mean_diff = sum / count;
    const double var_diff = std::max(0.0, (sum_sq - count * mean_diff * mean_diff) / (count - 1.0));
    McPairResult r;
    r.kind = kind;
    r.closed_diff = 0.5 * mean_diff / cfg.sigma2 + t_regularizer(mu1, var1, report.constants) -
                    t_regularizer(mu2, var2, report.constants);
    r.closed_stderr = 0.5 * std::sqrt(var_diff / count) / cfg.sigma2;

    const double shrink = 1.0 + static_cast<double>(n) / nu;
    const TParams q1{mu1, var1 / shrink, nu + n};
    const TParams q2{mu2, var2 / shrink, nu + n};
    const GammaDivergenceEstimate est = gamma_divergence_mc_diff(
        q1, log_joint, q2, log_joint, gamma, cfg.n_mc, derive_seed(cfg.seed, 2000 + p),
        report.log_joint_norm);
    r.mc_diff = report.kappa * est.value;
    r.mc_stderr = std::abs(report.kappa) * est.mc_stderr;

    const double se = std::hypot(r.closed_stderr, r.mc_stderr);
    const double gap = std::abs(r.closed_diff - r.mc_diff);
    if (se > 0.0) {
      r.sigmas = gap / se;
      r.passed = r.sigmas <= cfg.tolerance_sigmas;
    } else {
      r.sigmas = gap == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
      r.passed = gap == 0.0;
    }
    report.passed = report.passed && r.passed;
    report.pairs.push_back(r);
  }
  return report;
}

}  // namespace ssmvae
