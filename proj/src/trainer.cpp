#include "ssmvae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "ssmvae/errors.hpp"

namespace ssmvae {

using nlohmann::json;

namespace {

constexpr std::uint64_t kModelTag = 1;
constexpr std::uint64_t kNoiseTag = 2;
constexpr std::uint64_t kEvalTag = 3;
constexpr std::uint64_t kShuffleTag = 4;

MultimodalBatch take(const MultimodalBatch& b, const std::vector<Eigen::Index>& idx) {
  MultimodalBatch out;
  const auto n = static_cast<Eigen::Index>(idx.size());
  out.modality_present.resize(n, b.modality_present.cols());
  for (const auto& f : b.features) out.features.emplace_back(n, f.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index i = idx[static_cast<std::size_t>(r)];
    out.modality_present.row(r) = b.modality_present.row(i);
    for (std::size_t m = 0; m < b.features.size(); ++m) out.features[m].row(r) = b.features[m].row(i);
    out.labels.push_back(b.labels[static_cast<std::size_t>(i)]);
    out.label_present.push_back(b.label_present[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::vector<int> int_labels(const MultimodalBatch& b) {
  std::vector<int> out;
  out.reserve(b.labels.size());
  for (auto y : b.labels) out.push_back(static_cast<int>(y));
  return out;
}

struct Split {
  std::vector<Eigen::Index> labeled, unlabeled;
};

Split split_rows(const MultimodalBatch& b) {
  Split s;
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    (b.label_present[static_cast<std::size_t>(i)] ? s.labeled : s.unlabeled).push_back(i);
  }
  return s;
}

std::vector<Eigen::Index> chunk(const std::vector<Eigen::Index>& v, std::size_t b, std::size_t parts) {
  const std::size_t lo = b * v.size() / parts;
  const std::size_t hi = (b + 1) * v.size() / parts;
  return {v.begin() + static_cast<std::ptrdiff_t>(lo), v.begin() + static_cast<std::ptrdiff_t>(hi)};
}

void check_finite(const LossBreakdown& l, int epoch) {
  const std::pair<const char*, double> parts[] = {{"labeled_gamma", l.labeled_gamma},
                                                  {"unlabeled_gamma", l.unlabeled_gamma},
                                                  {"entropy_term", l.entropy_term},
                                                  {"classification", l.classification},
                                                  {"total", l.total}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) {
      throw NonFiniteError("non-finite loss component '" + std::string(name) + "' (" +
                           std::to_string(v) + ") in epoch " + std::to_string(epoch));
    }
  }
}

json loss_json(const LossBreakdown& l) {
  return {{"labeled_gamma", l.labeled_gamma},
          {"unlabeled_gamma", l.unlabeled_gamma},
          {"classification", l.classification},
          {"entropy_term", l.entropy_term},
          {"total", l.total}};
}

LossBreakdown loss_from_json(const json& j) {
  LossBreakdown l;
  l.labeled_gamma = j.at("labeled_gamma").get<double>();
  l.unlabeled_gamma = j.at("unlabeled_gamma").get<double>();
  l.classification = j.at("classification").get<double>();
  l.entropy_term = j.at("entropy_term").get<double>();
  l.total = j.at("total").get<double>();
  return l;
}

json train_config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"alpha_mode", c.alpha_mode == AlphaMode::kScaledByRows ? "scaled_by_rows" : "explicit"},
          {"alpha", c.alpha},
          {"eval_every", c.eval_every},
          {"seed", c.seed},
          {"complete_rows_only", c.complete_rows_only}};
}

TrainConfig train_config_from(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.alpha_mode = j.at("alpha_mode").get<std::string>() == "explicit" ? AlphaMode::kExplicit
                                                                      : AlphaMode::kScaledByRows;
  c.alpha = j.at("alpha").get<double>();
  c.eval_every = j.at("eval_every").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.complete_rows_only = j.at("complete_rows_only").get<bool>();
  return c;
}

Tensor matrix_tensor(const Matrix& m) {
  std::vector<float> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      v[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<float>(m(i, j));
    }
  }
  return Tensor{{static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                std::move(v)};
}

Matrix tensor_matrix(const Tensor& t) {
  if (t.dims.size() != 2 || t.dtype() != DType::kF32) {
    throw FormatError(FormatErrorKind::kBadEntry, "expected a 2-d f32 tensor");
  }
  const auto& v = std::get<std::vector<float>>(t.data);
  Matrix m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = static_cast<double>(v[static_cast<std::size_t>(i * m.cols() + j)]);
    }
  }
  return m;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ContractViolation("epochs must be >= 0");
  if (batch_size < 1) throw ContractViolation("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ContractViolation("lr must be > 0");
  if (eval_every < 1) throw ContractViolation("eval_every must be >= 1");
  if (alpha_mode == AlphaMode::kExplicit && !(alpha >= 0.0)) {
    throw ContractViolation("alpha must be >= 0");
  }
}

bool MetricsReport::operator==(const MetricsReport& o) const {
  return epoch == o.epoch && overall_accuracy == o.overall_accuracy &&
         minority_accuracy == o.minority_accuracy && per_class_accuracy == o.per_class_accuracy &&
         loss.labeled_gamma == o.loss.labeled_gamma &&
         loss.unlabeled_gamma == o.loss.unlabeled_gamma &&
         loss.classification == o.loss.classification &&
         loss.entropy_term == o.loss.entropy_term && loss.total == o.loss.total;
}

ModelInputs to_model_inputs(const MultimodalBatch& batch) {
  ModelInputs in;
  for (const auto& f : batch.features) in.x.push_back(f.cast<double>());
  in.present = batch.modality_present;
  return in;
}

Prediction predict(const SSMVAEModel& model, const MultimodalBatch& batch) {
  Prediction p;
  p.probabilities = classify(model, to_model_inputs(batch));
  for (Eigen::Index i = 0; i < p.probabilities.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < p.probabilities.cols(); ++k) {
      if (p.probabilities(i, k) > p.probabilities(i, best)) best = k;
    }
    p.classes.push_back(best);
  }
  return p;
}

std::vector<int> minority_classes(const std::vector<int>& sizes) {
  std::vector<int> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const int sa = sizes[static_cast<std::size_t>(a)];
    const int sb = sizes[static_cast<std::size_t>(b)];
    return sa != sb ? sa < sb : a > b;
  });
  order.resize(sizes.size() / 2);
  return order;
}

MetricsReport accuracy_metrics(const std::vector<int>& predicted,
                               const std::vector<std::int64_t>& labels, int num_classes,
                               const std::vector<int>& train_class_sizes) {
  const int K = num_classes;
  if (labels.empty()) throw ContractViolation("evaluate: empty test set");
  if (predicted.size() != labels.size()) {
    throw ContractViolation("evaluate: one prediction per label required");
  }
  if (static_cast<int>(train_class_sizes.size()) != K) {
    throw ContractViolation("evaluate: need one training class size per class");
  }
  std::vector<double> correct(static_cast<std::size_t>(K), 0.0);
  std::vector<double> total(static_cast<std::size_t>(K), 0.0);
  double all_correct = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= K) {
      throw ContractViolation("evaluate: test set must be fully labelled");
    }
    const auto y = static_cast<std::size_t>(labels[i]);
    total[y] += 1.0;
    if (predicted[i] == static_cast<int>(y)) {
      correct[y] += 1.0;
      all_correct += 1.0;
    }
  }
  MetricsReport r;
  r.overall_accuracy = all_correct / static_cast<double>(labels.size());
  for (int k = 0; k < K; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    r.per_class_accuracy.push_back(total[kk] > 0.0 ? correct[kk] / total[kk] : 0.0);
  }
  const std::vector<int> minority = minority_classes(train_class_sizes);
  double sum = 0.0;
  for (int k : minority) sum += r.per_class_accuracy[static_cast<std::size_t>(k)];
  r.minority_accuracy = minority.empty() ? 0.0 : sum / static_cast<double>(minority.size());
  return r;
}

MetricsReport evaluate(const SSMVAEModel& model, const MultimodalBatch& test,
                       const std::vector<int>& train_class_sizes) {
  if (test.rows() == 0) throw ContractViolation("evaluate: empty test set");
  for (auto lp : test.label_present) {
    if (!lp) throw ContractViolation("evaluate: test set must be fully labelled");
  }
  return accuracy_metrics(predict(model, test).classes, test.labels, model.config.num_classes,
                          train_class_sizes);
}

MetricsReport evaluate_with_loss(const SSMVAEModel& model, const MultimodalBatch& train,
                                 const MultimodalBatch& test,
                                 const std::vector<int>& train_class_sizes, double alpha,
                                 std::uint64_t eval_seed, int epoch) {
  MetricsReport r = evaluate(model, test, train_class_sizes);
  r.epoch = epoch;
  const Split s = split_rows(train);
  const MultimodalBatch lab = take(train, s.labeled);
  const MultimodalBatch unl = take(train, s.unlabeled);
  Rng rng(eval_seed);
  r.loss = overall_loss(model, to_model_inputs(lab), int_labels(lab), to_model_inputs(unl), alpha,
                        rng);
  return r;
}

nn::ParamStore quantize_f32(const nn::ParamStore& params) {
  nn::ParamStore out = params;
  for (auto& [name, m] : out) m = m.cast<float>().cast<double>();
  return out;
}

MultimodalBatch training_rows(const Dataset& data, const TrainConfig& cfg) {
  return cfg.complete_rows_only ? complete_rows(data.train) : data.train;
}

TrainResult train(ModelConfig model_config, const Dataset& data, const TrainConfig& cfg,
                  const EvalCallback& on_eval) {
  cfg.validate();
  model_config.validate();
  const MultimodalBatch train_set = training_rows(data, cfg);
  train_set.validate(model_config.num_classes);
  const auto n_rows = static_cast<std::int64_t>(train_set.rows());
  if (n_rows == 0) throw ContractViolation("train: empty training set");

  SSMVAEModel model = SSMVAEModel::init(model_config, derive_seed(cfg.seed, kModelTag));
  nn::AdamState adam = nn::AdamState::for_params(model.params, cfg.lr);
  const double alpha =
      cfg.alpha_mode == AlphaMode::kExplicit ? cfg.alpha : default_alpha(model.config, n_rows);
  const std::uint64_t eval_seed = derive_seed(cfg.seed, kEvalTag);
  Rng noise(derive_seed(cfg.seed, kNoiseTag));
  Rng shuffle(derive_seed(cfg.seed, kShuffleTag));

  TrainResult result;
  auto evaluate_now = [&](int epoch) {
    Checkpoint ck;
    ck.model.config = model.config;
    ck.model.params = quantize_f32(model.params);
    ck.adam = adam;
    ck.train = cfg;
    ck.alpha = alpha;
    ck.eval_seed = eval_seed;
    ck.epoch = epoch;
    ck.class_sizes = data.class_sizes;
    MetricsReport r = evaluate_with_loss(ck.model, train_set, data.test, data.class_sizes, alpha,
                                         eval_seed, epoch);
    check_finite(r.loss, epoch);
    result.metrics.push_back(r);
    if (on_eval) on_eval(r, ck);
    result.checkpoint = std::move(ck);
  };

  evaluate_now(0);
  Split split = split_rows(train_set);
  const auto num_batches = static_cast<std::size_t>((n_rows + cfg.batch_size - 1) / cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle.shuffle(split.labeled);
    shuffle.shuffle(split.unlabeled);
    for (std::size_t b = 0; b < num_batches; ++b) {
      const MultimodalBatch lab = take(train_set, chunk(split.labeled, b, num_batches));
      const MultimodalBatch unl = take(train_set, chunk(split.unlabeled, b, num_batches));
      if (lab.rows() == 0 && unl.rows() == 0) continue;
      nn::Tape tape;
      const graph::OverallTerms terms =
          graph::overall_loss(tape, model, model.params, to_model_inputs(lab), int_labels(lab),
                              to_model_inputs(unl), alpha, noise);
      check_finite(terms.breakdown, epoch);
      tape.backward(terms.total);
      nn::adam_step(model.params, tape.gradients(model.params), adam);
    }
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) evaluate_now(epoch);
  }
  return result;
}

std::string model_config_to_json(const ModelConfig& c) {
  json j = {{"num_modalities", c.num_modalities},
            {"num_classes", c.num_classes},
            {"latent_dim", c.latent_dim},
            {"modality_dims", c.modality_dims},
            {"nu", c.nu},
            {"sigma2", c.sigma2},
            {"class_prior", c.class_prior},
            {"alpha_scale", c.alpha_scale},
            {"variant", std::string(to_string(c.variant))},
            {"hidden_dims", c.hidden_dims},
            {"unlabeled_per_modality", c.unlabeled_per_modality},
            {"entropy_aug_dim", c.entropy_aug_dim ? json(*c.entropy_aug_dim) : json(nullptr)}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig c;
  c.num_modalities = j.at("num_modalities").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.modality_dims = j.at("modality_dims").get<std::vector<int>>();
  c.nu = j.at("nu").get<double>();
  c.sigma2 = j.at("sigma2").get<double>();
  c.class_prior = j.at("class_prior").get<std::vector<double>>();
  c.alpha_scale = j.at("alpha_scale").get<double>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  c.unlabeled_per_modality = j.at("unlabeled_per_modality").get<bool>();
  if (!j.at("entropy_aug_dim").is_null()) c.entropy_aug_dim = j.at("entropy_aug_dim").get<int>();
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  TensorMap t;
  for (const auto& [name, m] : ck.model.params) t["param/" + name] = matrix_tensor(m);
  for (const auto& [name, m] : ck.adam.first_moment) t["adam/m/" + name] = matrix_tensor(m);
  for (const auto& [name, m] : ck.adam.second_moment) t["adam/v/" + name] = matrix_tensor(m);
  t["adam/step"] = Tensor{{1}, std::vector<std::int64_t>{ck.adam.step_count}};
  json manifest = {{"kind", "ssmvae-checkpoint"},
                   {"model", json::parse(model_config_to_json(ck.model.config))},
                   {"train", train_config_json(ck.train)},
                   {"alpha", ck.alpha},
                   {"eval_seed", ck.eval_seed},
                   {"epoch", ck.epoch},
                   {"class_sizes", ck.class_sizes},
                   {"adam", {{"lr", ck.adam.lr},
                             {"beta1", ck.adam.beta1},
                             {"beta2", ck.adam.beta2},
                             {"epsilon", ck.adam.epsilon}}}};
  t["__manifest__"] = text_tensor(manifest.dump());
  write_smvt(path, t);
}

Checkpoint load_checkpoint(const std::string& path) try {
  const TensorMap t = read_smvt(path);
  const json manifest = json::parse(tensor_text(require_entry(t, "__manifest__", DType::kU8, 1)));
  if (manifest.at("kind").get<std::string>() != "ssmvae-checkpoint") {
    throw FormatError(FormatErrorKind::kBadEntry, "'" + path + "' is not a checkpoint");
  }
  Checkpoint ck;
  ck.model = SSMVAEModel::init(model_config_from_json(manifest.at("model").dump()), 0);
  ck.adam = nn::AdamState::for_params(ck.model.params);
  for (auto& [name, m] : ck.model.params) {
    const std::string pname = "param/" + name;
    const Matrix loaded = tensor_matrix(require_entry(t, pname, DType::kF32, 2));
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) {
      throw FormatError(FormatErrorKind::kBadEntry, "shape mismatch for " + pname);
    }
    m = loaded;
    ck.adam.first_moment.at(name) = tensor_matrix(require_entry(t, "adam/m/" + name, DType::kF32, 2));
    ck.adam.second_moment.at(name) = tensor_matrix(require_entry(t, "adam/v/" + name, DType::kF32, 2));
  }
  ck.adam.step_count = std::get<std::vector<std::int64_t>>(require_entry(t, "adam/step", DType::kI64, 1).data).at(0);
  const json& adam = manifest.at("adam");
  ck.adam.lr = adam.at("lr").get<double>();
  ck.adam.beta1 = adam.at("beta1").get<double>();
  ck.adam.beta2 = adam.at("beta2").get<double>();
  ck.adam.epsilon = adam.at("epsilon").get<double>();
  ck.train = train_config_from(manifest.at("train"));
  ck.alpha = manifest.at("alpha").get<double>();
  ck.eval_seed = manifest.at("eval_seed").get<std::uint64_t>();
  ck.epoch = manifest.at("epoch").get<int>();
  ck.class_sizes = manifest.at("class_sizes").get<std::vector<int>>();
  return ck;
} catch (const nlohmann::json::exception& e) {
  throw FormatError(FormatErrorKind::kBadEntry, std::string("checkpoint manifest: ") + e.what());
}

std::string metrics_to_json(const MetricsReport& r) {
  json j = {{"epoch", r.epoch},
            {"overall_accuracy", r.overall_accuracy},
            {"minority_accuracy", r.minority_accuracy},
            {"per_class_accuracy", r.per_class_accuracy},
            {"loss", loss_json(r.loss)}};
  return j.dump();
}

MetricsReport metrics_from_json(const std::string& line) {
  const json j = json::parse(line);
  MetricsReport r;
  r.epoch = j.at("epoch").get<int>();
  r.overall_accuracy = j.at("overall_accuracy").get<double>();
  r.minority_accuracy = j.at("minority_accuracy").get<double>();
  r.per_class_accuracy = j.at("per_class_accuracy").get<std::vector<double>>();
  r.loss = loss_from_json(j.at("loss"));
  return r;
}

}  // namespace ssmvae
