#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmvae/config.hpp"
#include "ssmvae/nn/mlp.hpp"
#include "ssmvae/nn/param_store.hpp"
#include "ssmvae/nn/tape.hpp"
#include "ssmvae/tdist.hpp"
#include "ssmvae/types.hpp"

namespace ssmvae {

/// Features of a batch as seen by the model: one [rows x n_m] matrix per
/// modality plus the presence mask [rows x M]. Absent entries are ignored
/// (treated as zeros).
struct ModelInputs {
  std::vector<Matrix> x;
  MaskMatrix present;

  Eigen::Index rows() const { return present.rows(); }
  /// Rows `idx` of every tensor, in the given order.
  ModelInputs select_rows(const std::vector<Eigen::Index>& idx) const;
};

/// Encoders, classifier(s) and decoders. Parameter names:
///   poe / late: "enc<m>/", "dec<m>/"; early: "enc/", "dec<m>/"
///   poe / early: "cls/"; late: "cls<m>/"
/// Encoders emit 2 n_z columns: the mean followed by log sigma.
struct SSMVAEModel {
  ModelConfig config;
  nn::ParamStore params;

  /// Validates `cfg` and draws every network from `seed`.
  static SSMVAEModel init(ModelConfig cfg, std::uint64_t seed);

  nn::MLPSpec encoder_spec(int m) const;
  nn::MLPSpec decoder_spec(int m) const;
  nn::MLPSpec classifier_spec(int m) const;
  std::string encoder_prefix(int m) const;
  std::string decoder_prefix(int m) const;
  std::string classifier_prefix(int m) const;

  Fusion fusion() const { return fusion_of(config.variant); }
  bool gaussian() const { return is_gaussian(config.variant); }
};

Matrix one_hot(const std::vector<int>& labels, int num_classes);
/// Every row equal to the indicator of class `k`.
Matrix one_hot_rows(Eigen::Index rows, int k, int num_classes);
/// Throws ContractViolation unless every row is a one-hot vector.
void check_one_hot(const Matrix& y, int num_classes);

/// Per-row posterior of modality m: t(mu, sigma^2 / (1 + (n_m + K)/nu), nu + n_m + K),
/// or N(mu, sigma^2) for Gaussian variants. Not defined for early fusion.
std::vector<TParams> encode_modality(const SSMVAEModel& model, int m, const Matrix& x_m,
                                     const Matrix& y);

/// q(y | x^1..x^M) as a [rows x K] probability matrix.
Matrix classify(const SSMVAEModel& model, const ModelInputs& in);

/// Decoder mean mu_theta(y, z) for modality m.
Matrix decode_modality(const SSMVAEModel& model, int m, const Matrix& y, const Matrix& z);

/// Per-row joint posterior: PoE of the present experts with the prior
/// (poe variants) or the single concatenating encoder (early fusion).
/// Not defined for late fusion.
std::vector<TParams> joint_posterior(const SSMVAEModel& model, const ModelInputs& in,
                                     const Matrix& y);

namespace graph {

/// Encoder heads recorded on a tape.
struct EncoderOut {
  nn::Var mu;         // rows x n_z
  nn::Var log_sigma;  // rows x n_z
};

EncoderOut encode(nn::Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params, int m,
                  const Matrix& x_m, const Matrix& y);
/// Early-fusion encoder over the concatenated (masked) features.
EncoderOut encode_early(nn::Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params,
                        const ModelInputs& in, const Matrix& y);
nn::Var decode(nn::Tape& tape, const SSMVAEModel& model, const nn::ParamStore& params, int m,
               const Matrix& y, nn::Var z);
/// Row-wise log q(y | x); late fusion averages the present modalities' probabilities.
nn::Var classifier_log_probs(nn::Tape& tape, const SSMVAEModel& model,
                             const nn::ParamStore& params, const ModelInputs& in);
/// Late fusion: log q_m(y | x^m) of one modality's classifier.
nn::Var modality_log_probs(nn::Tape& tape, const SSMVAEModel& model,
                           const nn::ParamStore& params, int m, const Matrix& x_m);

}  // namespace graph

}  // namespace ssmvae
