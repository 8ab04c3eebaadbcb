#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssmvae/datagen.hpp"
#include "ssmvae/model.hpp"
#include "ssmvae/nn/adam.hpp"
#include "ssmvae/objective.hpp"

namespace ssmvae {

// kScaledByRows: alpha = alpha_scale * (number of training rows).
enum class AlphaMode { kScaledByRows, kExplicit };

struct TrainConfig {
  int epochs = 0;
  int batch_size = 100;
  double lr = 1e-4;
  AlphaMode alpha_mode = AlphaMode::kScaledByRows;
  double alpha = 0.0;  // used when alpha_mode == kExplicit
  int eval_every = 1;
  std::uint64_t seed = 0;
  // Train (and report the loss) on rows with every modality present only.
  bool complete_rows_only = false;

  void validate() const;
};

struct MetricsReport {
  int epoch = 0;
  double overall_accuracy = 0.0;
  double minority_accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  LossBreakdown loss;

  bool operator==(const MetricsReport& other) const;
};

struct Prediction {
  std::vector<int> classes;
  Matrix probabilities;
};

/// Everything needed to reproduce an evaluation: parameters (stored as f32),
/// optimiser state, the resolved alpha and the evaluation noise seed.
struct Checkpoint {
  SSMVAEModel model;
  nn::AdamState adam;
  TrainConfig train;
  double alpha = 0.0;
  std::uint64_t eval_seed = 0;
  int epoch = 0;
  std::vector<int> class_sizes;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsReport> metrics;
};

ModelInputs to_model_inputs(const MultimodalBatch& batch);

/// Argmax of classify, ties to the lowest class index.
Prediction predict(const SSMVAEModel& model, const MultimodalBatch& batch);

/// The floor(K/2) classes with the fewest training rows; equal sizes rank the
/// higher index as smaller.
std::vector<int> minority_classes(const std::vector<int>& train_class_sizes);

/// Overall, per-class and minority accuracy of `predicted` against `labels`.
MetricsReport accuracy_metrics(const std::vector<int>& predicted,
                               const std::vector<std::int64_t>& labels, int num_classes,
                               const std::vector<int>& train_class_sizes);

/// Accuracies on a fully labelled test batch; the loss field is left zero.
MetricsReport evaluate(const SSMVAEModel& model, const MultimodalBatch& test,
                       const std::vector<int>& train_class_sizes);

/// Accuracies on `test` plus the overall loss on the full `train` batch with
/// noise from `eval_seed`.
MetricsReport evaluate_with_loss(const SSMVAEModel& model, const MultimodalBatch& train,
                                 const MultimodalBatch& test,
                                 const std::vector<int>& train_class_sizes, double alpha,
                                 std::uint64_t eval_seed, int epoch);

/// Parameters rounded to f32 and back, as stored in checkpoints.
nn::ParamStore quantize_f32(const nn::ParamStore& params);

using EvalCallback = std::function<void(const MetricsReport&, const Checkpoint&)>;

/// Training rows actually used under `cfg` (all rows, or complete rows only).
MultimodalBatch training_rows(const Dataset& data, const TrainConfig& cfg);

/// Trains from a fresh model. Evaluates at epoch 0, every eval_every epochs
/// and after the last epoch, on the f32 snapshot of the parameters. Throws
/// NonFiniteError naming the loss component that became NaN/Inf.
TrainResult train(ModelConfig model_config, const Dataset& data, const TrainConfig& cfg,
                  const EvalCallback& on_eval = {});

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& line);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace ssmvae
