#include <gtest/gtest.h>

#include <filesystem>

#include "ssmvae/errors.hpp"
#include "ssmvae/trainer.hpp"

using namespace ssmvae;

namespace {

ScenarioConfig separable(std::uint64_t seed) {
  ScenarioConfig s;
  s.num_classes = 3;
  s.modality_dims = {4, 3};
  s.samples_per_largest_class = 30;
  s.labeled_fraction = 0.5;
  s.missing_modality_fraction = 0.2;
  s.cluster_separation = 4.0;
  s.test_samples_per_class = 10;
  s.seed = seed;
  return s;
}

ModelConfig small_model(Variant v = Variant::kTPoe) {
  ModelConfig cfg;
  cfg.num_modalities = 2;
  cfg.num_classes = 3;
  cfg.modality_dims = {4, 3};
  cfg.latent_dim = 3;
  cfg.hidden_dims = {8};
  cfg.variant = v;
  return cfg;
}

TrainConfig quick(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 16;
  t.lr = 1e-3;
  t.eval_every = 2;
  t.seed = 5;
  return t;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ssmvae_trainer_" + name)).string();
}

}  // namespace

TEST(AccuracyMetrics, MinorityIsMeanOfSmallestHalf) {
  // Ten test rows per class; class k has 9, 8, 5, 3 correct.
  std::vector<int> pred;
  std::vector<std::int64_t> labels;
  const int correct[] = {9, 8, 5, 3};
  for (int k = 0; k < 4; ++k) {
    for (int i = 0; i < 10; ++i) {
      labels.push_back(k);
      pred.push_back(i < correct[k] ? k : (k + 1) % 4);
    }
  }
  const MetricsReport r = accuracy_metrics(pred, labels, 4, {400, 300, 200, 100});
  EXPECT_EQ(r.per_class_accuracy, (std::vector<double>{0.9, 0.8, 0.5, 0.3}));
  EXPECT_NEAR(r.minority_accuracy, 0.4, 1e-15);
  EXPECT_NEAR(r.overall_accuracy, (0.9 + 0.8 + 0.5 + 0.3) / 4.0, 1e-15);
}

TEST(AccuracyMetrics, PerfectAndConstantPredictors) {
  std::vector<std::int64_t> labels;
  for (int k = 0; k < 4; ++k) {
    for (int i = 0; i < 5; ++i) labels.push_back(k);
  }
  std::vector<int> perfect(labels.begin(), labels.end());
  const MetricsReport p = accuracy_metrics(perfect, labels, 4, {50, 40, 30, 20});
  EXPECT_EQ(p.overall_accuracy, 1.0);
  EXPECT_EQ(p.minority_accuracy, 1.0);

  const MetricsReport c = accuracy_metrics(std::vector<int>(20, 0), labels, 4, {50, 40, 30, 20});
  EXPECT_EQ(c.overall_accuracy, 0.25);
  EXPECT_EQ(c.minority_accuracy, 0.0);
  EXPECT_THROW(accuracy_metrics({}, {}, 4, {1, 1, 1, 1}), ContractViolation);
}

TEST(AccuracyMetrics, OverallIsCountWeightedMean) {
  std::vector<std::int64_t> labels = {0, 0, 0, 1, 2, 2};
  std::vector<int> pred = {0, 1, 0, 1, 0, 2};
  const MetricsReport r = accuracy_metrics(pred, labels, 3, {3, 2, 1});
  double weighted = 0.0;
  const double counts[] = {3, 1, 2};
  for (int k = 0; k < 3; ++k) weighted += counts[k] * r.per_class_accuracy[static_cast<std::size_t>(k)];
  EXPECT_DOUBLE_EQ(r.overall_accuracy, weighted / 6.0);
}

TEST(MinorityClasses, TiesRankHigherIndexAsSmaller) {
  EXPECT_EQ(minority_classes({5, 5, 5, 5}), (std::vector<int>{3, 2}));
  EXPECT_EQ(minority_classes({10, 2, 7, 2, 9}), (std::vector<int>{3, 1}));
  EXPECT_EQ(minority_classes({9, 1, 4}), (std::vector<int>{1}));
}

TEST(Predict, TieBreakAndDuplicates) {
  SSMVAEModel model = SSMVAEModel::init(small_model(), 1);
  for (auto& [name, m] : model.params) {
    if (name.rfind("cls/", 0) == 0) m.setZero();
  }
  const Dataset d = generate(separable(1));
  const Prediction p = predict(model, d.test);
  for (int c : p.classes) EXPECT_EQ(c, 0);

  model.params.at("cls/l1.bias") << 0.0, 0.0, 50.0;
  const Prediction q = predict(model, d.test);
  for (int c : q.classes) EXPECT_EQ(c, 2);

  SSMVAEModel random = SSMVAEModel::init(small_model(), 3);
  for (auto& [name, m] : random.params) m *= 500.0;
  MultimodalBatch dup = d.test;
  const Prediction base = predict(random, d.test);
  for (auto& f : dup.features) {
    MatrixF twice(2 * f.rows(), f.cols());
    twice << f, f;
    f = twice;
  }
  MaskMatrix mask(2 * dup.modality_present.rows(), dup.modality_present.cols());
  mask << d.test.modality_present, d.test.modality_present;
  dup.modality_present = mask;
  const Prediction both = predict(random, dup);
  for (std::size_t i = 0; i < base.classes.size(); ++i) {
    EXPECT_EQ(both.classes[i], base.classes[i]);
    EXPECT_EQ(both.classes[i + base.classes.size()], base.classes[i]);
  }
}

TEST(Train, ZeroEpochsEvaluatesInitialModel) {
  const Dataset d = generate(separable(2));
  const TrainResult r = train(small_model(), d, quick(0));
  ASSERT_EQ(r.metrics.size(), 1u);
  EXPECT_EQ(r.metrics[0].epoch, 0);
  const SSMVAEModel init = SSMVAEModel::init(small_model(), derive_seed(5, 1));
  EXPECT_TRUE(r.checkpoint.model.params == quantize_f32(init.params));
  EXPECT_EQ(r.checkpoint.adam.step_count, 0);
  EXPECT_EQ(r.checkpoint.alpha, 10.0 * static_cast<double>(d.train.rows()));
}

TEST(Train, EvaluationScheduleAndDeterminism) {
  const Dataset d = generate(separable(3));
  std::vector<int> seen;
  const TrainResult a = train(small_model(), d, quick(5), [&](const MetricsReport& m, const Checkpoint&) {
    seen.push_back(m.epoch);
  });
  EXPECT_EQ(seen, (std::vector<int>{0, 2, 4, 5}));
  const TrainResult b = train(small_model(), d, quick(5));
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) EXPECT_TRUE(a.metrics[i] == b.metrics[i]);
  EXPECT_TRUE(a.checkpoint.model.params == b.checkpoint.model.params);

  TrainConfig other = quick(5);
  other.seed = 6;
  const TrainResult c = train(small_model(), d, other);
  EXPECT_FALSE(c.metrics.back() == a.metrics.back());
}

TEST(Train, CheckpointReproducesFinalMetrics) {
  const Dataset d = generate(separable(4));
  for (Variant v : {Variant::kTPoe, Variant::kGaussianEarly, Variant::kTLate}) {
    const TrainResult r = train(small_model(v), d, quick(3));
    const std::string path = temp_path(std::string(to_string(v)) + ".smvt");
    save_checkpoint(path, r.checkpoint);
    const Checkpoint ck = load_checkpoint(path);
    EXPECT_TRUE(ck.model.params == r.checkpoint.model.params);
    EXPECT_TRUE(ck.adam.first_moment == quantize_f32(r.checkpoint.adam.first_moment));
    EXPECT_EQ(ck.adam.step_count, r.checkpoint.adam.step_count);
    EXPECT_EQ(ck.alpha, r.checkpoint.alpha);
    EXPECT_EQ(ck.epoch, 3);
    const MetricsReport again = evaluate_with_loss(ck.model, training_rows(d, ck.train), d.test,
                                                   ck.class_sizes, ck.alpha, ck.eval_seed, ck.epoch);
    EXPECT_TRUE(again == r.metrics.back()) << to_string(v);
  }
}

TEST(Train, CompleteRowsOnly) {
  const Dataset d = generate(separable(5));
  TrainConfig cfg = quick(1);
  cfg.complete_rows_only = true;
  const MultimodalBatch rows = training_rows(d, cfg);
  EXPECT_LT(rows.rows(), d.train.rows());
  EXPECT_TRUE((rows.modality_present.array() == 1).all());
  const TrainResult r = train(small_model(), d, cfg);
  EXPECT_EQ(r.checkpoint.alpha, 10.0 * static_cast<double>(rows.rows()));
}

TEST(Train, NonFiniteLossNamesComponent) {
  const Dataset d = generate(separable(6));
  ModelConfig cfg = small_model();
  cfg.sigma2 = 1e-320;
  try {
    train(cfg, d, quick(1));
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("labeled_gamma"), std::string::npos) << e.what();
  }
}

TEST(Train, ConfigValidation) {
  TrainConfig t = quick(1);
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ContractViolation);
  t = quick(-1);
  EXPECT_THROW(t.validate(), ContractViolation);
  EXPECT_EQ(TrainConfig{}.batch_size, 100);
  EXPECT_EQ(TrainConfig{}.lr, 1e-4);
}

TEST(MetricsJson, LosslessRoundTrip) {
  MetricsReport r;
  r.epoch = 17;
  r.overall_accuracy = 2.0 / 3.0;
  r.minority_accuracy = 0.1 + 0.2;
  r.per_class_accuracy = {1.0 / 7.0, 0.0, 1.0};
  r.loss.labeled_gamma = -1.2345678901234567e-7;
  r.loss.unlabeled_gamma = 123456.789;
  r.loss.classification = 1e300;
  r.loss.entropy_term = 5e-324;
  r.loss.total = std::nextafter(1.0, 2.0);
  EXPECT_TRUE(metrics_from_json(metrics_to_json(r)) == r);
}

TEST(ModelConfigJson, RoundTrip) {
  ModelConfig c = small_model(Variant::kGaussianLate);
  c.class_prior = {0.5, 0.25, 0.25};
  c.entropy_aug_dim = 9;
  c.unlabeled_per_modality = true;
  c.nu = 7.25;
  const ModelConfig back = model_config_from_json(model_config_to_json(c));
  EXPECT_EQ(model_config_to_json(back), model_config_to_json(c));
  EXPECT_EQ(back.variant, Variant::kGaussianLate);
  EXPECT_EQ(back.entropy_aug_dim, std::optional<int>(9));
}
