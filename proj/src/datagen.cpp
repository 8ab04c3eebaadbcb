#include "ssmvae/datagen.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "json.hpp"
#include "ssmvae/errors.hpp"
#include "ssmvae/random.hpp"

namespace ssmvae {

using nlohmann::json;

namespace {

constexpr std::uint64_t kCentroidTag = 10;
constexpr std::uint64_t kTrainTag = 20;
constexpr std::uint64_t kTestTag = 21;
constexpr std::uint64_t kLabelTag = 30;
constexpr std::uint64_t kMissingTag = 31;
constexpr std::uint64_t kShuffleTag = 32;

std::int64_t round_half_up(double x) { return static_cast<std::int64_t>(std::floor(x + 0.5)); }

// K centroids in `dim` dimensions, rescaled so that the closest pair sits
// exactly `separation` apart.
std::vector<Eigen::VectorXd> centroids(int K, int dim, double separation, Rng& rng) {
  std::vector<Eigen::VectorXd> c(static_cast<std::size_t>(K), Eigen::VectorXd(dim));
  for (auto& v : c) {
    for (int j = 0; j < dim; ++j) v(j) = rng.normal();
  }
  double closest = std::numeric_limits<double>::infinity();
  for (int a = 0; a < K; ++a) {
    for (int b = a + 1; b < K; ++b) {
      closest = std::min(closest, (c[static_cast<std::size_t>(a)] - c[static_cast<std::size_t>(b)]).norm());
    }
  }
  if (!(closest > 0.0)) throw ScenarioError("degenerate centroid draw");
  for (auto& v : c) v *= separation / closest;
  return c;
}

struct Sampler {
  const ScenarioConfig& cfg;
  std::vector<std::vector<Eigen::VectorXd>> centres;  // [m][k]

  // Rows of class `labels[i]`, fully observed.
  MultimodalBatch draw(const std::vector<std::int64_t>& labels, Rng& rng) const {
    const auto n = static_cast<Eigen::Index>(labels.size());
    MultimodalBatch b;
    for (int m = 0; m < cfg.num_modalities; ++m) {
      b.features.emplace_back(n, cfg.modality_dims[static_cast<std::size_t>(m)]);
    }
    b.labels = labels;
    b.modality_present = MaskMatrix::Ones(n, cfg.num_modalities);
    b.label_present.assign(labels.size(), 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
      for (int m = 0; m < cfg.num_modalities; ++m) {
        const Eigen::VectorXd& mu = centres[static_cast<std::size_t>(m)][k];
        Eigen::VectorXd e(mu.size());
        for (Eigen::Index j = 0; j < mu.size(); ++j) e(j) = rng.normal();
        if (cfg.noise_tail == NoiseTail::kStudentT) {
          e *= std::sqrt(cfg.noise_dof / rng.chi_square(cfg.noise_dof));
        }
        b.features[static_cast<std::size_t>(m)].row(i) =
            (mu + cfg.noise_scale * e).cast<float>().transpose();
      }
    }
    return b;
  }
};

std::vector<std::int64_t> shuffled_labels(const std::vector<int>& sizes, Rng& rng) {
  std::vector<std::int64_t> labels;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    labels.insert(labels.end(), static_cast<std::size_t>(sizes[k]), static_cast<std::int64_t>(k));
  }
  rng.shuffle(labels);
  return labels;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (num_classes < 2) throw ContractViolation("scenario: need at least two classes");
  if (num_modalities < 1) throw ContractViolation("scenario: need at least one modality");
  if (static_cast<int>(modality_dims.size()) != num_modalities) {
    throw ContractViolation("scenario: modality_dims must have one entry per modality");
  }
  for (int d : modality_dims) {
    if (d < 1) throw ContractViolation("scenario: modality dims must be positive");
  }
  if (samples_per_largest_class < num_classes) {
    throw ContractViolation("scenario: samples_per_largest_class must be >= K");
  }
  if (!(imbalance_ratio >= 1.0)) throw ContractViolation("scenario: imbalance_ratio must be >= 1");
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
    throw ContractViolation("scenario: labeled_fraction must lie in (0, 1]");
  }
  if (!(missing_modality_fraction >= 0.0 && missing_modality_fraction < 1.0)) {
    throw ContractViolation("scenario: missing_modality_fraction must lie in [0, 1)");
  }
  if (!(cluster_separation > 0.0)) throw ContractViolation("scenario: cluster_separation must be > 0");
  if (noise_tail == NoiseTail::kStudentT && !(noise_dof > 0.0)) {
    throw ContractViolation("scenario: noise_dof must be > 0");
  }
  if (!(noise_scale >= 0.0)) throw ContractViolation("scenario: noise_scale must be >= 0");
  if (test_samples_per_class < 0) throw ContractViolation("scenario: test size must be >= 0");
}

void MultimodalBatch::validate(int num_classes) const {
  const Eigen::Index n = rows();
  if (static_cast<Eigen::Index>(features.size()) != modality_present.cols()) {
    throw ContractViolation("batch: feature list and presence mask disagree on M");
  }
  for (const auto& f : features) {
    if (f.rows() != n) throw ContractViolation("batch: feature row count mismatch");
  }
  if (static_cast<Eigen::Index>(labels.size()) != n ||
      static_cast<Eigen::Index>(label_present.size()) != n) {
    throw ContractViolation("batch: label vectors have the wrong length");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (modality_present.row(i).cast<int>().sum() == 0) {
      throw ContractViolation("batch: row " + std::to_string(i) + " has no modality");
    }
    const auto y = labels[static_cast<std::size_t>(i)];
    if (label_present[static_cast<std::size_t>(i)]) {
      if (y < 0 || y >= num_classes) throw ContractViolation("batch: label out of range");
    } else if (y != kUnlabeled) {
      throw ContractViolation("batch: hidden labels must carry the sentinel");
    }
  }
}

bool MultimodalBatch::operator==(const MultimodalBatch& o) const {
  if (features.size() != o.features.size()) return false;
  for (std::size_t m = 0; m < features.size(); ++m) {
    if (features[m].rows() != o.features[m].rows() || features[m].cols() != o.features[m].cols() ||
        std::memcmp(features[m].data(), o.features[m].data(),
                    sizeof(float) * static_cast<std::size_t>(features[m].size())) != 0) {
      return false;
    }
  }
  return labels == o.labels && label_present == o.label_present &&
         modality_present.rows() == o.modality_present.rows() &&
         modality_present.cols() == o.modality_present.cols() &&
         modality_present == o.modality_present;
}

std::vector<int> class_sizes(int num_classes, int largest, double ratio) {
  if (num_classes < 2) throw ContractViolation("class_sizes: K must be >= 2");
  if (!(ratio >= 1.0)) throw ContractViolation("class_sizes: r must be >= 1");
  if (largest < num_classes) throw ContractViolation("class_sizes: L_1 must be >= K");
  std::vector<int> sizes(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) {
    const double exponent = -static_cast<double>(k) / (num_classes - 1);
    sizes[static_cast<std::size_t>(k)] =
        static_cast<int>(round_half_up(largest * std::pow(ratio, exponent)));
  }
  if (sizes.back() < 1) {
    throw ScenarioError("class_sizes: smallest class is empty (L_1 = " + std::to_string(largest) +
                        ", r = " + std::to_string(ratio) + ")");
  }
  return sizes;
}

Dataset generate(const ScenarioConfig& config) {
  config.validate();
  const int K = config.num_classes;
  const int M = config.num_modalities;
  if (config.missing_modality_fraction > 0.0 && M < 2) {
    throw ScenarioError("missing modalities need at least two modalities");
  }
  Dataset data;
  data.scenario = config;
  data.class_sizes = class_sizes(K, config.samples_per_largest_class, config.imbalance_ratio);

  Sampler sampler{config, {}};
  for (int m = 0; m < M; ++m) {
    Rng rng(derive_seed(config.seed, kCentroidTag + static_cast<std::uint64_t>(m)));
    sampler.centres.push_back(centroids(K, config.modality_dims[static_cast<std::size_t>(m)],
                                        config.cluster_separation, rng));
  }

  Rng order_rng(derive_seed(config.seed, kShuffleTag));
  const std::vector<std::int64_t> train_labels = shuffled_labels(data.class_sizes, order_rng);
  Rng train_rng(derive_seed(config.seed, kTrainTag));
  data.train = sampler.draw(train_labels, train_rng);

  // Exactly round(beta L_k) labelled rows per class.
  Rng label_rng(derive_seed(config.seed, kLabelTag));
  for (int k = 0; k < K; ++k) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < train_labels.size(); ++i) {
      if (train_labels[i] == k) rows.push_back(i);
    }
    const auto keep = round_half_up(config.labeled_fraction * static_cast<double>(rows.size()));
    if (keep < 1) {
      throw ScenarioError("class " + std::to_string(k) + " would have no labelled rows");
    }
    label_rng.shuffle(rows);
    for (std::size_t r = static_cast<std::size_t>(keep); r < rows.size(); ++r) {
      data.train.labels[rows[r]] = kUnlabeled;
      data.train.label_present[rows[r]] = 0;
    }
  }

  // Mask one uniformly chosen modality in a random subset of rows.
  if (config.missing_modality_fraction > 0.0) {
    Rng miss_rng(derive_seed(config.seed, kMissingTag));
    std::vector<std::size_t> rows(train_labels.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    miss_rng.shuffle(rows);
    const auto count = static_cast<std::size_t>(
        round_half_up(config.missing_modality_fraction * static_cast<double>(rows.size())));
    for (std::size_t r = 0; r < count; ++r) {
      const auto i = static_cast<Eigen::Index>(rows[r]);
      const auto m = static_cast<Eigen::Index>(miss_rng.uniform_index(static_cast<std::uint64_t>(M)));
      data.train.modality_present(i, m) = 0;
      data.train.features[static_cast<std::size_t>(m)].row(i).setZero();
    }
  }

  Rng test_rng(derive_seed(config.seed, kTestTag));
  const std::vector<int> test_sizes(static_cast<std::size_t>(K), config.test_samples_per_class);
  data.test = sampler.draw(shuffled_labels(test_sizes, test_rng), test_rng);
  return data;
}

MultimodalBatch complete_rows(const MultimodalBatch& batch) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    if ((batch.modality_present.row(i).array() != 0).all()) keep.push_back(i);
  }
  MultimodalBatch out;
  const auto n = static_cast<Eigen::Index>(keep.size());
  out.modality_present.resize(n, batch.modality_present.cols());
  for (const auto& f : batch.features) out.features.emplace_back(n, f.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index i = keep[static_cast<std::size_t>(r)];
    out.modality_present.row(r) = batch.modality_present.row(i);
    for (std::size_t m = 0; m < batch.features.size(); ++m) out.features[m].row(r) = batch.features[m].row(i);
    out.labels.push_back(batch.labels[static_cast<std::size_t>(i)]);
    out.label_present.push_back(batch.label_present[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::string scenario_to_json(const ScenarioConfig& c) {
  json j = {{"num_classes", c.num_classes},
            {"num_modalities", c.num_modalities},
            {"modality_dims", c.modality_dims},
            {"samples_per_largest_class", c.samples_per_largest_class},
            {"imbalance_ratio", c.imbalance_ratio},
            {"labeled_fraction", c.labeled_fraction},
            {"missing_modality_fraction", c.missing_modality_fraction},
            {"cluster_separation", c.cluster_separation},
            {"noise_tail", c.noise_tail == NoiseTail::kGaussian ? "gaussian" : "student_t"},
            {"noise_dof", c.noise_dof},
            {"noise_scale", c.noise_scale},
            {"test_samples_per_class", c.test_samples_per_class},
            {"seed", c.seed}};
  return j.dump();
}

ScenarioConfig scenario_from_json(const std::string& text) try {
  const json j = json::parse(text);
  ScenarioConfig c;
  c.num_classes = j.at("num_classes").get<int>();
  c.num_modalities = j.at("num_modalities").get<int>();
  c.modality_dims = j.at("modality_dims").get<std::vector<int>>();
  c.samples_per_largest_class = j.at("samples_per_largest_class").get<int>();
  c.imbalance_ratio = j.at("imbalance_ratio").get<double>();
  c.labeled_fraction = j.at("labeled_fraction").get<double>();
  c.missing_modality_fraction = j.at("missing_modality_fraction").get<double>();
  c.cluster_separation = j.at("cluster_separation").get<double>();
  const std::string tail = j.at("noise_tail").get<std::string>();
  if (tail != "gaussian" && tail != "student_t") {
    throw FormatError(FormatErrorKind::kBadEntry, "unknown noise tail " + tail);
  }
  c.noise_tail = tail == "gaussian" ? NoiseTail::kGaussian : NoiseTail::kStudentT;
  c.noise_dof = j.at("noise_dof").get<double>();
  c.noise_scale = j.at("noise_scale").get<double>();
  c.test_samples_per_class = j.at("test_samples_per_class").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
} catch (const nlohmann::json::exception& e) {
  throw FormatError(FormatErrorKind::kBadEntry, std::string("scenario: ") + e.what());
}

TensorMap batch_to_tensors(const MultimodalBatch& batch, const std::string& manifest_json) {
  TensorMap t;
  const auto n = static_cast<std::uint64_t>(batch.rows());
  for (std::size_t m = 0; m < batch.features.size(); ++m) {
    const MatrixF& f = batch.features[m];
    t["x/" + std::to_string(m)] =
        Tensor{{n, static_cast<std::uint64_t>(f.cols())},
               std::vector<float>(f.data(), f.data() + f.size())};
  }
  t["labels"] = Tensor{{n}, batch.labels};
  const MaskMatrix& p = batch.modality_present;
  t["modality_present"] = Tensor{{n, static_cast<std::uint64_t>(p.cols())},
                                 std::vector<std::uint8_t>(p.data(), p.data() + p.size())};
  t["label_present"] = Tensor{{n}, batch.label_present};
  json manifest = json::parse(manifest_json);
  std::vector<std::string> features;
  for (std::size_t m = 0; m < batch.features.size(); ++m) features.push_back("x/" + std::to_string(m));
  manifest["entries"] = {{"features", features},
                         {"labels", "labels"},
                         {"modality_present", "modality_present"},
                         {"label_present", "label_present"}};
  t["__manifest__"] = text_tensor(manifest.dump());
  return t;
}

MultimodalBatch batch_from_tensors(const TensorMap& entries) try {
  const json manifest = json::parse(tensor_text(require_entry(entries, "__manifest__", DType::kU8, 1)));
  const auto names = manifest.at("entries").at("features").get<std::vector<std::string>>();
  const Tensor& present = require_entry(entries, "modality_present", DType::kU8, 2);
  const std::uint64_t n = present.dims[0];
  if (present.dims[1] != names.size()) {
    throw FormatError(FormatErrorKind::kBadEntry, "modality_present width disagrees with manifest");
  }
  MultimodalBatch b;
  const auto& pv = std::get<std::vector<std::uint8_t>>(present.data);
  b.modality_present = Eigen::Map<const MaskMatrix>(pv.data(), static_cast<Eigen::Index>(n),
                                                    static_cast<Eigen::Index>(present.dims[1]));
  for (const auto& name : names) {
    const Tensor& x = require_entry(entries, name, DType::kF32, 2);
    if (x.dims[0] != n) throw FormatError(FormatErrorKind::kBadEntry, "row count mismatch in " + name);
    const auto& xv = std::get<std::vector<float>>(x.data);
    b.features.emplace_back(Eigen::Map<const MatrixF>(xv.data(), static_cast<Eigen::Index>(n),
                                                      static_cast<Eigen::Index>(x.dims[1])));
  }
  const Tensor& labels = require_entry(entries, "labels", DType::kI64, 1);
  const Tensor& lp = require_entry(entries, "label_present", DType::kU8, 1);
  if (labels.dims[0] != n || lp.dims[0] != n) {
    throw FormatError(FormatErrorKind::kBadEntry, "label vectors disagree with row count");
  }
  b.labels = std::get<std::vector<std::int64_t>>(labels.data);
  b.label_present = std::get<std::vector<std::uint8_t>>(lp.data);
  return b;
} catch (const nlohmann::json::exception& e) {
  throw FormatError(FormatErrorKind::kBadEntry, std::string("batch manifest: ") + e.what());
}

namespace {

std::string split_manifest(const Dataset& data, const std::string& split) {
  json j = {{"kind", "ssmvae-dataset"},
            {"split", split},
            {"scenario", json::parse(scenario_to_json(data.scenario))},
            {"class_sizes", data.class_sizes}};
  return j.dump();
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError(FormatErrorKind::kIo, "cannot create '" + dir + "': " + ec.message());
  write_smvt(dir + "/train.smvt", batch_to_tensors(data.train, split_manifest(data, "train")));
  write_smvt(dir + "/test.smvt", batch_to_tensors(data.test, split_manifest(data, "test")));
}

Dataset load_dataset(const std::string& dir) try {
  const TensorMap train = read_smvt(dir + "/train.smvt");
  const TensorMap test = read_smvt(dir + "/test.smvt");
  Dataset data;
  const json manifest = json::parse(tensor_text(require_entry(train, "__manifest__", DType::kU8, 1)));
  data.scenario = scenario_from_json(manifest.at("scenario").dump());
  data.class_sizes = manifest.at("class_sizes").get<std::vector<int>>();
  data.train = batch_from_tensors(train);
  data.test = batch_from_tensors(test);
  data.train.validate(data.scenario.num_classes);
  data.test.validate(data.scenario.num_classes);
  return data;
} catch (const nlohmann::json::exception& e) {
  throw FormatError(FormatErrorKind::kBadEntry, std::string("dataset manifest: ") + e.what());
}

}  // namespace ssmvae
