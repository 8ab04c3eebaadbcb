#include "ssmvae/model.hpp"

#include <cmath>

#include "ssmvae/errors.hpp"
#include "ssmvae/poe.hpp"

namespace ssmvae {

namespace {

constexpr std::uint64_t kEncoderTag = 100;
constexpr std::uint64_t kDecoderTag = 200;
constexpr std::uint64_t kClassifierTag = 300;
constexpr std::uint64_t kEarlyEncoderTag = 400;

void check_inputs(const ModelConfig& cfg, const ModelInputs& in) {
  if (static_cast<int>(in.x.size()) != cfg.num_modalities ||
      in.present.cols() != cfg.num_modalities) {
    throw ContractViolation("ModelInputs: expected " + std::to_string(cfg.num_modalities) +
                            " modalities");
  }
  for (int m = 0; m < cfg.num_modalities; ++m) {
    const Matrix& x = in.x[static_cast<std::size_t>(m)];
    if (x.rows() != in.rows() || x.cols() != cfg.modality_dims[static_cast<std::size_t>(m)]) {
      throw ContractViolation("ModelInputs: modality " + std::to_string(m) + " has shape " +
                              std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    }
  }
}

void require_some_present(const ModelInputs& in) {
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    bool any = false;
    for (Eigen::Index m = 0; m < in.present.cols(); ++m) any = any || in.present(i, m) != 0;
    if (!any) {
      throw ContractViolation("row " + std::to_string(i) + " has no modality present");
    }
  }
}

Matrix mask_column(const MaskMatrix& present, int m) {
  return present.col(m).cast<double>();
}

// Zero-imputed features of every modality followed by the presence flags.
Matrix masked_concat(const SSMVAEModel& model, const ModelInputs& in) {
  const int M = model.config.num_modalities;
  Matrix out(in.rows(), model.config.total_input_dim() + M);
  Eigen::Index offset = 0;
  for (int m = 0; m < M; ++m) {
    const Matrix& x = in.x[static_cast<std::size_t>(m)];
    const Matrix mask = mask_column(in.present, m);
    out.middleCols(offset, x.cols()) = x.array().colwise() * mask.col(0).array();
    offset += x.cols();
  }
  out.rightCols(M) = in.present.cast<double>();
  return out;
}

Matrix concat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

std::vector<TParams> posteriors_from_heads(const Matrix& mu, const Matrix& log_sigma,
                                           const std::vector<int>& aug, double nu,
                                           bool gaussian) {
  std::vector<TParams> out;
  out.reserve(static_cast<std::size_t>(mu.rows()));
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    const Vector var = (2.0 * log_sigma.row(i).transpose().array()).exp().matrix();
    if (gaussian) {
      out.push_back(TParams{mu.row(i).transpose(), var, kGaussianDof});
    } else {
      const double a = aug[static_cast<std::size_t>(i)];
      out.push_back(TParams{mu.row(i).transpose(), var / (1.0 + a / nu), nu + a});
    }
  }
  return out;
}

}  // namespace

ModelInputs ModelInputs::select_rows(const std::vector<Eigen::Index>& idx) const {
  ModelInputs out;
  const auto n = static_cast<Eigen::Index>(idx.size());
  out.present.resize(n, present.cols());
  for (const Matrix& x : this->x) out.x.emplace_back(n, x.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index src = idx[static_cast<std::size_t>(r)];
    out.present.row(r) = present.row(src);
    for (std::size_t m = 0; m < x.size(); ++m) out.x[m].row(r) = x[m].row(src);
  }
  return out;
}

SSMVAEModel SSMVAEModel::init(ModelConfig cfg, std::uint64_t seed) {
  cfg.validate();
  SSMVAEModel model;
  model.config = std::move(cfg);
  const int M = model.config.num_modalities;
  const Fusion fusion = model.fusion();
  if (fusion == Fusion::kEarly) {
    model.params.merge(model.encoder_prefix(0),
                       nn::init_params(model.encoder_spec(0), derive_seed(seed, kEarlyEncoderTag)));
  }
  for (int m = 0; m < M; ++m) {
    if (fusion != Fusion::kEarly) {
      model.params.merge(model.encoder_prefix(m),
                         nn::init_params(model.encoder_spec(m),
                                         derive_seed(seed, kEncoderTag + static_cast<unsigned>(m))));
    }
    model.params.merge(model.decoder_prefix(m),
                       nn::init_params(model.decoder_spec(m),
                                       derive_seed(seed, kDecoderTag + static_cast<unsigned>(m))));
    if (fusion == Fusion::kLate) {
      model.params.merge(
          model.classifier_prefix(m),
          nn::init_params(model.classifier_spec(m),
                          derive_seed(seed, kClassifierTag + static_cast<unsigned>(m))));
    }
  }
  if (fusion != Fusion::kLate) {
    model.params.merge(model.classifier_prefix(0),
                       nn::init_params(model.classifier_spec(0), derive_seed(seed, kClassifierTag)));
  }
  return model;
}

nn::MLPSpec SSMVAEModel::encoder_spec(int m) const {
  const int K = config.num_classes;
  const int in = fusion() == Fusion::kEarly
                     ? config.total_input_dim() + config.num_modalities + K
                     : config.modality_dims.at(static_cast<std::size_t>(m)) + K;
  return nn::MLPSpec{in, config.hidden_dims, 2 * config.latent_dim};
}

nn::MLPSpec SSMVAEModel::decoder_spec(int m) const {
  return nn::MLPSpec{config.num_classes + config.latent_dim, config.hidden_dims,
                     config.modality_dims.at(static_cast<std::size_t>(m))};
}

nn::MLPSpec SSMVAEModel::classifier_spec(int m) const {
  const int in = fusion() == Fusion::kLate
                     ? config.modality_dims.at(static_cast<std::size_t>(m))
                     : config.total_input_dim() + config.num_modalities;
  return nn::MLPSpec{in, config.hidden_dims, config.num_classes};
}

std::string SSMVAEModel::encoder_prefix(int m) const {
  return fusion() == Fusion::kEarly ? "enc/" : "enc" + std::to_string(m) + "/";
}
std::string SSMVAEModel::decoder_prefix(int m) const { return "dec" + std::to_string(m) + "/"; }
std::string SSMVAEModel::classifier_prefix(int m) const {
  return fusion() == Fusion::kLate ? "cls" + std::to_string(m) + "/" : "cls/";
}

Matrix one_hot(const std::vector<int>& labels, int num_classes) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ContractViolation("one_hot: label " + std::to_string(labels[i]) + " out of range");
    }
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

Matrix one_hot_rows(Eigen::Index rows, int k, int num_classes) {
  Matrix y = Matrix::Zero(rows, num_classes);
  y.col(k).setOnes();
  return y;
}

void check_one_hot(const Matrix& y, int num_classes) {
  if (y.cols() != num_classes) {
    throw ContractViolation("one-hot matrix has " + std::to_string(y.cols()) + " columns, expected " +
                            std::to_string(num_classes));
  }
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    int ones = 0;
    for (Eigen::Index k = 0; k < y.cols(); ++k) {
      if (y(i, k) == 1.0) {
        ++ones;
      } else if (y(i, k) != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw ContractViolation("row " + std::to_string(i) + " is not one-hot");
  }
}

namespace graph {

EncoderOut encode(nn::Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params, int m,
                  const Matrix& x_m, const Matrix& y) {
  const ModelConfig& cfg = model.config;
  if (model.fusion() == Fusion::kEarly) {
    throw ContractViolation("early fusion has no per-modality encoder");
  }
  if (m < 0 || m >= cfg.num_modalities) throw ContractViolation("modality index out of range");
  if (x_m.cols() != cfg.modality_dims[static_cast<std::size_t>(m)] || x_m.rows() != y.rows()) {
    throw ContractViolation("encode: feature/label shape mismatch for modality " +
                            std::to_string(m));
  }
  check_one_hot(y, cfg.num_classes);
  nn::Var h = nn::mlp_forward(tape, params, model.encoder_spec(m), model.encoder_prefix(m),
                              tape.constant(concat(x_m, y)));
  return {tape.slice_cols(h, 0, cfg.latent_dim),
          tape.slice_cols(h, cfg.latent_dim, cfg.latent_dim)};
}

EncoderOut encode_early(nn::Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params,
                        const ModelInputs& in, const Matrix& y) {
  const ModelConfig& cfg = model.config;
  if (model.fusion() != Fusion::kEarly) {
    throw ContractViolation("encode_early requires an early-fusion variant");
  }
  check_inputs(cfg, in);
  if (y.rows() != in.rows()) throw ContractViolation("encode_early: label row mismatch");
  check_one_hot(y, cfg.num_classes);
  nn::Var h = nn::mlp_forward(tape, params, model.encoder_spec(0), model.encoder_prefix(0),
                              tape.constant(concat(masked_concat(model, in), y)));
  return {tape.slice_cols(h, 0, cfg.latent_dim),
          tape.slice_cols(h, cfg.latent_dim, cfg.latent_dim)};
}

nn::Var decode(nn::Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params, int m,
               const Matrix& y, nn::Var z) {
  const ModelConfig& cfg = model.config;
  if (m < 0 || m >= cfg.num_modalities) throw ContractViolation("modality index out of range");
  if (z.cols() != cfg.latent_dim || z.rows() != y.rows()) {
    throw ContractViolation("decode: z is " + std::to_string(z.rows()) + "x" +
                            std::to_string(z.cols()) + " for " + std::to_string(y.rows()) +
                            " label rows and n_z = " + std::to_string(cfg.latent_dim));
  }
  if (y.cols() != cfg.num_classes) throw ContractViolation("decode: label width mismatch");
  nn::Var input = tape.concat_cols({tape.constant(y), z});
  return nn::mlp_forward(tape, params, model.decoder_spec(m), model.decoder_prefix(m), input);
}

nn::Var modality_log_probs(nn::Tape& tape, const SSMVAEModel& model,
                           const nn::ParamStore& params, int m, const Matrix& x_m) {
  if (model.fusion() != Fusion::kLate) {
    throw ContractViolation("per-modality classifiers exist only for late fusion");
  }
  nn::Var logits = nn::mlp_forward(tape, params, model.classifier_spec(m),
                                   model.classifier_prefix(m), tape.constant(x_m));
  return tape.log_softmax(logits);
}

nn::Var classifier_log_probs(nn::Tape& tape, const SSMVAEModel& model,
                             const nn::ParamStore& params, const ModelInputs& in) {
  const ModelConfig& cfg = model.config;
  check_inputs(cfg, in);
  require_some_present(in);
  if (model.fusion() != Fusion::kLate) {
    nn::Var logits = nn::mlp_forward(tape, params, model.classifier_spec(0),
                                     model.classifier_prefix(0),
                                     tape.constant(masked_concat(model, in)));
    return tape.log_softmax(logits);
  }
  const Matrix count = in.present.cast<double>().rowwise().sum();
  nn::Var mixture;
  for (int m = 0; m < cfg.num_modalities; ++m) {
    const Matrix weight = mask_column(in.present, m).cwiseQuotient(count);
    nn::Var probs =
        tape.exp(modality_log_probs(tape, model, params, m, in.x[static_cast<std::size_t>(m)]));
    nn::Var term = probs * tape.constant(weight);
    mixture = mixture.valid() ? mixture + term : term;
  }
  return tape.log(mixture);
}

}  // namespace graph

std::vector<TParams> encode_modality(const SSMVAEModel& model, int m, const Matrix& x_m,
                                     const Matrix& y) {
  nn::Tape tape;
  const graph::EncoderOut e = graph::encode(tape, model, model.params, m, x_m, y);
  const int aug = model.config.modality_dims.at(static_cast<std::size_t>(m)) +
                  model.config.num_classes;
  return posteriors_from_heads(e.mu.value(), e.log_sigma.value(),
                               std::vector<int>(static_cast<std::size_t>(x_m.rows()), aug),
                               model.config.nu, model.gaussian());
}

Matrix classify(const SSMVAEModel& model, const ModelInputs& in) {
  nn::Tape tape;
  return nn::exp_exact(graph::classifier_log_probs(tape, model, model.params, in).value());
}

Matrix decode_modality(const SSMVAEModel& model, int m, const Matrix& y, const Matrix& z) {
  nn::Tape tape;
  return graph::decode(tape, model, model.params, m, y, tape.constant(z)).value();
}

std::vector<TParams> joint_posterior(const SSMVAEModel& model, const ModelInputs& in,
                                     const Matrix& y) {
  const ModelConfig& cfg = model.config;
  check_inputs(cfg, in);
  if (y.rows() != in.rows()) throw ContractViolation("joint_posterior: label row mismatch");
  check_one_hot(y, cfg.num_classes);
  const int M = cfg.num_modalities;
  const std::size_t n = static_cast<std::size_t>(in.rows());
  const double prior_dof = model.gaussian() ? kGaussianDof : cfg.nu;

  if (model.fusion() == Fusion::kLate) {
    throw ContractViolation("late fusion has no joint posterior");
  }
  if (model.fusion() == Fusion::kEarly) {
    std::vector<TParams> out(n, TParams::standard(cfg.latent_dim, prior_dof));
    std::vector<Eigen::Index> rows;
    std::vector<int> aug;
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
      int dims = 0;
      for (int m = 0; m < M; ++m) {
        if (in.present(i, m)) dims += cfg.modality_dims[static_cast<std::size_t>(m)];
      }
      if (dims == 0) continue;
      rows.push_back(i);
      aug.push_back(dims + cfg.num_classes);
    }
    if (rows.empty()) return out;
    const ModelInputs sub = in.select_rows(rows);
    Matrix y_sub(static_cast<Eigen::Index>(rows.size()), y.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      y_sub.row(static_cast<Eigen::Index>(r)) = y.row(rows[r]);
    }
    nn::Tape tape;
    const graph::EncoderOut e = graph::encode_early(tape, model, model.params, sub, y_sub);
    const auto post = posteriors_from_heads(e.mu.value(), e.log_sigma.value(), aug, cfg.nu,
                                            model.gaussian());
    for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<std::size_t>(rows[r])] = post[r];
    return out;
  }

  std::vector<std::vector<TParams>> per_modality;
  for (int m = 0; m < M; ++m) {
    per_modality.push_back(encode_modality(model, m, in.x[static_cast<std::size_t>(m)], y));
  }
  std::vector<TParams> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ExpertSet set;
    set.prior = TParams::standard(cfg.latent_dim, prior_dof);
    for (int m = 0; m < M; ++m) {
      const bool present = in.present(static_cast<Eigen::Index>(i), m) != 0;
      set.present_mask.push_back(present);
      if (present) set.experts.push_back(per_modality[static_cast<std::size_t>(m)][i]);
    }
    out.push_back(model.gaussian() ? fuse_gaussian(set) : fuse_t(set, cfg));
  }
  return out;
}

}  // namespace ssmvae
