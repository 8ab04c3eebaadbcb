#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ssmvae/datagen.hpp"
#include "ssmvae/errors.hpp"
#include "ssmvae/tensor_io.hpp"

using namespace ssmvae;

namespace {

std::vector<std::uint8_t> file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ssmvae_test_" + name);
  std::filesystem::remove_all(dir);
  return dir.string();
}

FormatErrorKind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_smvt(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded";
  return FormatErrorKind::kIo;
}

void put_u64(std::vector<std::uint8_t>& b, std::size_t at, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
}

ScenarioConfig imbalanced(std::uint64_t seed) {
  ScenarioConfig s;
  s.num_classes = 4;
  s.modality_dims = {5, 3};
  s.samples_per_largest_class = 80;
  s.imbalance_ratio = 10.0;
  s.labeled_fraction = 0.3;
  s.missing_modality_fraction = 0.4;
  s.test_samples_per_class = 20;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(ClassSizes, Examples) {
  const std::vector<int> sizes = class_sizes(10, 1000, 100.0);
  EXPECT_EQ(sizes.front(), 1000);
  EXPECT_EQ(sizes[1], 599);
  EXPECT_EQ(sizes.back(), 10);
  EXPECT_EQ(class_sizes(5, 40, 1.0), std::vector<int>(5, 40));
}

TEST(ClassSizes, OracleAndMonotone) {
  for (int K : {2, 4, 10}) {
    for (double r : {1.0, 3.0, 10.0, 50.0}) {
      const std::vector<int> sizes = class_sizes(K, 500, r);
      for (int k = 0; k < K; ++k) {
        const double exact = 500.0 * std::pow(r, -static_cast<double>(k) / (K - 1));
        EXPECT_EQ(sizes[static_cast<std::size_t>(k)], static_cast<int>(std::floor(exact + 0.5)));
        if (k > 0) EXPECT_LE(sizes[static_cast<std::size_t>(k)], sizes[static_cast<std::size_t>(k - 1)]);
      }
    }
  }
}

TEST(ClassSizes, Infeasible) {
  EXPECT_THROW(class_sizes(4, 10, 100.0), ScenarioError);
  EXPECT_THROW(class_sizes(1, 10, 1.0), ContractViolation);
  EXPECT_THROW(class_sizes(4, 10, 0.5), ContractViolation);
}

TEST(Generate, FullyObservedWhenRequested) {
  ScenarioConfig s;
  s.seed = 3;
  const Dataset d = generate(s);
  EXPECT_TRUE((d.train.modality_present.array() == 1).all());
  for (auto lp : d.train.label_present) EXPECT_EQ(lp, 1);
  d.train.validate(s.num_classes);
  d.test.validate(s.num_classes);
}

TEST(Generate, LabeledCountsPerClass) {
  ScenarioConfig s;
  s.num_classes = 2;
  s.samples_per_largest_class = 500;
  s.imbalance_ratio = 10.0;  // class sizes 500 and 50
  s.labeled_fraction = 0.1;
  const Dataset d = generate(s);
  ASSERT_EQ(d.class_sizes, (std::vector<int>{500, 50}));
  std::vector<int> labeled(2, 0);
  for (std::size_t i = 0; i < d.train.labels.size(); ++i) {
    if (d.train.label_present[i]) ++labeled[static_cast<std::size_t>(d.train.labels[i])];
  }
  EXPECT_EQ(labeled[0], 50);
  EXPECT_EQ(labeled[1], 5);
}

TEST(Generate, ScenarioInvariants) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const ScenarioConfig s = imbalanced(seed);
    const Dataset d = generate(s);
    d.train.validate(s.num_classes);
    const int N = static_cast<int>(d.train.rows());
    int sum_sizes = 0;
    for (int L : d.class_sizes) sum_sizes += L;
    EXPECT_EQ(N, sum_sizes);
    int labeled = 0;
    int missing = 0;
    for (Eigen::Index i = 0; i < d.train.rows(); ++i) {
      labeled += d.train.label_present[static_cast<std::size_t>(i)];
      const int present = d.train.modality_present.row(i).cast<int>().sum();
      EXPECT_GE(present, 1);
      missing += present < s.num_modalities;
    }
    const double beta_hat = static_cast<double>(labeled) / N;
    EXPECT_LE(std::abs(beta_hat - s.labeled_fraction), static_cast<double>(s.num_classes) / N);
    EXPECT_EQ(missing, static_cast<int>(std::floor(s.missing_modality_fraction * N + 0.5)));
    std::vector<int> test_counts(4, 0);
    for (auto y : d.test.labels) ++test_counts[static_cast<std::size_t>(y)];
    EXPECT_EQ(test_counts, std::vector<int>(4, 20));
    EXPECT_TRUE((d.test.modality_present.array() == 1).all());
  }
}

TEST(Generate, Deterministic) {
  const Dataset a = generate(imbalanced(7));
  const Dataset b = generate(imbalanced(7));
  EXPECT_TRUE(a.train == b.train);
  EXPECT_TRUE(a.test == b.test);
  const Dataset c = generate(imbalanced(8));
  EXPECT_FALSE(a.train == c.train);

  const std::string da = temp_dir("det_a");
  const std::string db = temp_dir("det_b");
  save_dataset(da, a);
  save_dataset(db, b);
  EXPECT_EQ(file_bytes(da + "/train.smvt"), file_bytes(db + "/train.smvt"));
  EXPECT_EQ(file_bytes(da + "/test.smvt"), file_bytes(db + "/test.smvt"));
}

TEST(Generate, CentroidsAreSeparated) {
  ScenarioConfig s;
  s.num_classes = 3;
  s.noise_scale = 0.0;
  s.cluster_separation = 2.5;
  s.samples_per_largest_class = 5;
  const Dataset d = generate(s);
  // With zero noise every row sits on its class centroid.
  for (std::size_t m = 0; m < 2; ++m) {
    for (Eigen::Index i = 0; i < d.test.rows(); ++i) {
      for (Eigen::Index j = 0; j < d.test.rows(); ++j) {
        if (d.test.labels[static_cast<std::size_t>(i)] == d.test.labels[static_cast<std::size_t>(j)]) continue;
        const double dist = (d.test.features[m].row(i) - d.test.features[m].row(j)).cast<double>().norm();
        EXPECT_GE(dist, 2.5 * (1.0 - 1e-6));
      }
    }
  }
}

TEST(Generate, InfeasibleScenarios) {
  ScenarioConfig one_modality;
  one_modality.num_modalities = 1;
  one_modality.modality_dims = {4};
  one_modality.missing_modality_fraction = 0.2;
  EXPECT_THROW(generate(one_modality), ScenarioError);

  ScenarioConfig no_labels;
  no_labels.samples_per_largest_class = 20;
  no_labels.imbalance_ratio = 10.0;
  no_labels.labeled_fraction = 0.1;  // smallest class of 2 rows gets round(0.2) = 0
  EXPECT_THROW(generate(no_labels), ScenarioError);

  ScenarioConfig bad;
  bad.labeled_fraction = 0.0;
  EXPECT_THROW(generate(bad), ContractViolation);
}

TEST(Generate, StudentTNoiseIsHeavierTailed) {
  ScenarioConfig g;
  g.num_classes = 2;
  g.samples_per_largest_class = 3000;
  g.noise_tail = NoiseTail::kGaussian;
  ScenarioConfig t = g;
  t.noise_tail = NoiseTail::kStudentT;
  t.noise_dof = 3.0;
  auto kurtosis = [](const Dataset& d) {
    const Eigen::VectorXd x = d.train.features[0].col(0).cast<double>();
    double acc2 = 0.0;
    double acc4 = 0.0;
    int n = 0;
    for (int k = 0; k < 2; ++k) {
      double mean = 0.0;
      int count = 0;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (d.train.labels[static_cast<std::size_t>(i)] == k) {
          mean += x(i);
          ++count;
        }
      }
      mean /= count;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (d.train.labels[static_cast<std::size_t>(i)] == k) {
          const double c = x(i) - mean;
          acc2 += c * c;
          acc4 += c * c * c * c;
          ++n;
        }
      }
    }
    acc2 /= n;
    return acc4 / n / (acc2 * acc2);
  };
  EXPECT_NEAR(kurtosis(generate(g)), 3.0, 0.5);
  EXPECT_GT(kurtosis(generate(t)), 5.0);
}

TEST(DatasetIo, RoundTrip) {
  const Dataset d = generate(imbalanced(4));
  const std::string dir = temp_dir("roundtrip");
  save_dataset(dir, d);
  const Dataset back = load_dataset(dir);
  EXPECT_TRUE(back.train == d.train);
  EXPECT_TRUE(back.test == d.test);
  EXPECT_EQ(back.class_sizes, d.class_sizes);
  EXPECT_EQ(scenario_to_json(back.scenario), scenario_to_json(d.scenario));
}

TEST(DatasetIo, EmptyBatchRoundTrip) {
  MultimodalBatch b;
  b.features = {MatrixF(0, 3), MatrixF(0, 2)};
  b.modality_present.resize(0, 2);
  const TensorMap t = batch_to_tensors(b, "{}");
  const MultimodalBatch back = batch_from_tensors(decode_smvt(encode_smvt(t)));
  EXPECT_TRUE(back == b);
}

TEST(DatasetIo, ScenarioJsonRoundTrip) {
  ScenarioConfig s = imbalanced(99);
  s.noise_tail = NoiseTail::kStudentT;
  s.noise_dof = 2.5;
  s.cluster_separation = 1.0 / 3.0;
  const ScenarioConfig back = scenario_from_json(scenario_to_json(s));
  EXPECT_EQ(back.noise_tail, s.noise_tail);
  EXPECT_EQ(back.noise_dof, s.noise_dof);
  EXPECT_EQ(back.cluster_separation, s.cluster_separation);
  EXPECT_EQ(back.modality_dims, s.modality_dims);
  EXPECT_EQ(back.seed, s.seed);
  EXPECT_THROW(scenario_from_json("{not json"), FormatError);
}

TEST(Smvt, RoundTripAllDtypes) {
  TensorMap m;
  m["a"] = Tensor{{2, 2}, std::vector<float>{1.5f, -0.0f, 3e-38f, 7.0f}};
  m["b"] = Tensor{{3}, std::vector<std::int64_t>{-1, 0, (std::int64_t{1} << 62)}};
  m["c"] = Tensor{{0, 4}, std::vector<std::uint8_t>{}};
  m["d"] = text_tensor("héllo");
  const auto bytes = encode_smvt(m);
  EXPECT_EQ(bytes[0], 'S');
  EXPECT_EQ(bytes[3], 'T');
  const TensorMap back = decode_smvt(bytes);
  EXPECT_TRUE(back == m);
  EXPECT_EQ(tensor_text(back.at("d")), "héllo");
  EXPECT_EQ(encode_smvt(back), bytes);
}

TEST(Smvt, LittleEndianLayout) {
  TensorMap m;
  m["x"] = Tensor{{1}, std::vector<std::int64_t>{0x0102030405060708}};
  const auto b = encode_smvt(m);
  // magic(4) version(4) count(4) namelen(2) name(1) ndim(4) dim(8) dtype(1) payload(8)
  ASSERT_EQ(b.size(), 36u);
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[12], 1);
  EXPECT_EQ(b[14], 'x');
  EXPECT_EQ(b[15], 1);
  EXPECT_EQ(b[19], 1);
  EXPECT_EQ(b[27], 1);  // dtype i64
  EXPECT_EQ(b[28], 0x08);
  EXPECT_EQ(b[35], 0x01);
}

TEST(Smvt, CorruptionErrors) {
  TensorMap m;
  m["w"] = Tensor{{2, 3}, std::vector<float>(6, 1.0f)};
  const auto good = encode_smvt(m);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(decode_error(bad_magic), FormatErrorKind::kBadMagic);

  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_EQ(decode_error(bad_version), FormatErrorKind::kBadVersion);

  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, good.size() - 1}) {
    const std::vector<std::uint8_t> truncated(good.begin(), good.begin() + static_cast<long>(cut));
    EXPECT_EQ(decode_error(truncated), FormatErrorKind::kTruncated) << "cut " << cut;
  }

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(decode_error(trailing), FormatErrorKind::kTrailingBytes);

  // Header: 12 bytes, name length 2, name 1, ndim 4, then dims.
  const std::size_t dims_at = 12 + 2 + 1 + 4;
  auto overflow = good;
  put_u64(overflow, dims_at, std::uint64_t{1} << 62);
  put_u64(overflow, dims_at + 8, std::uint64_t{1} << 62);
  EXPECT_EQ(decode_error(overflow), FormatErrorKind::kDimensionOverflow);

  auto dtype = good;
  dtype[dims_at + 16] = 7;
  EXPECT_EQ(decode_error(dtype), FormatErrorKind::kBadDtype);

  const std::string dir = temp_dir("corrupt");
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/train.smvt", std::ios::binary);
    f.write(reinterpret_cast<const char*>(bad_magic.data()), static_cast<long>(bad_magic.size()));
  }
  EXPECT_THROW(load_dataset(dir), FormatError);
  EXPECT_THROW(read_smvt(dir + "/missing.smvt"), FormatError);
}

TEST(Smvt, RequireEntry) {
  TensorMap m;
  m["w"] = Tensor{{2, 3}, std::vector<float>(6, 1.0f)};
  EXPECT_NO_THROW(require_entry(m, "w", DType::kF32, 2));
  try {
    require_entry(m, "v", DType::kF32, 2);
    ADD_FAILURE();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::kMissingEntry);
  }
  try {
    require_entry(m, "w", DType::kI64, 2);
    ADD_FAILURE();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::kBadEntry);
  }
}
