#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmvae/tensor_io.hpp"
#include "ssmvae/types.hpp"

namespace ssmvae {

enum class NoiseTail { kGaussian, kStudentT };

struct ScenarioConfig {
  int num_classes = 4;
  int num_modalities = 2;
  std::vector<int> modality_dims = {8, 8};
  int samples_per_largest_class = 100;  // L_1
  double imbalance_ratio = 1.0;         // r = L_1 / L_K
  double labeled_fraction = 1.0;        // beta
  double missing_modality_fraction = 0.0;
  double cluster_separation = 4.0;  // minimum centroid distance per modality
  NoiseTail noise_tail = NoiseTail::kGaussian;
  double noise_dof = 5.0;  // used by kStudentT
  double noise_scale = 1.0;
  int test_samples_per_class = 50;
  std::uint64_t seed = 0;

  /// Throws ContractViolation for out-of-range fields.
  void validate() const;
};

inline constexpr std::int64_t kUnlabeled = -1;

struct MultimodalBatch {
  std::vector<MatrixF> features;  // per modality, rows x n_m; zero where absent
  std::vector<std::int64_t> labels;  // kUnlabeled when the label is hidden
  MaskMatrix modality_present;       // rows x M
  std::vector<std::uint8_t> label_present;

  Eigen::Index rows() const { return modality_present.rows(); }
  /// Checks shapes, >= 1 modality per row and label range.
  void validate(int num_classes) const;
  bool operator==(const MultimodalBatch& other) const;
};

struct Dataset {
  ScenarioConfig scenario;
  std::vector<int> class_sizes;  // training class sizes L_k
  MultimodalBatch train;
  MultimodalBatch test;
};

/// L_k = round(L_1 r^{-(k-1)/(K-1)}), rounding half up. Throws ScenarioError
/// when the smallest class rounds to zero.
std::vector<int> class_sizes(int num_classes, int largest, double ratio);

/// Deterministic in `config.seed`.
Dataset generate(const ScenarioConfig& config);

/// Rows whose every modality is present.
MultimodalBatch complete_rows(const MultimodalBatch& batch);

std::string scenario_to_json(const ScenarioConfig& config);
ScenarioConfig scenario_from_json(const std::string& text);

/// One split as an SMVT file with a JSON manifest entry.
TensorMap batch_to_tensors(const MultimodalBatch& batch, const std::string& manifest_json);
MultimodalBatch batch_from_tensors(const TensorMap& entries);

/// DIR/train.smvt and DIR/test.smvt; creates DIR if needed.
void save_dataset(const std::string& dir, const Dataset& data);
Dataset load_dataset(const std::string& dir);

}  // namespace ssmvae
