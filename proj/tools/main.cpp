// Command-line front end: gen, train, eval, gradcheck, mccheck.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssmvae/checks.hpp"
#include "ssmvae/datagen.hpp"
#include "ssmvae/errors.hpp"
#include "ssmvae/objective.hpp"
#include "ssmvae/tensor_io.hpp"
#include "ssmvae/trainer.hpp"

namespace {

using namespace ssmvae;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct GenArgs {
  std::string out;
  ScenarioConfig scenario;
  std::string noise = "gaussian";
};

struct TrainArgs {
  std::string data;
  std::string out;
  TrainConfig train;
  std::optional<double> alpha;
  double nu = 5.0;
  int latent_dim = 64;
  std::string variant = "t_poe";
  std::vector<int> hidden = {512, 512};
  double sigma2 = 1.0;
  bool unlabeled_per_modality = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
};

struct McArgs {
  McCheckConfig cfg;
};

int run_gen(GenArgs& a) {
  if (a.noise == "gaussian") {
    a.scenario.noise_tail = NoiseTail::kGaussian;
  } else if (a.noise == "student_t") {
    a.scenario.noise_tail = NoiseTail::kStudentT;
  } else {
    throw ContractViolation("--noise must be gaussian or student_t");
  }
  a.scenario.num_modalities = static_cast<int>(a.scenario.modality_dims.size());
  const Dataset data = generate(a.scenario);
  save_dataset(a.out, data);
  std::cerr << "wrote " << data.train.rows() << " training and " << data.test.rows()
            << " test rows to " << a.out << "\n";
  return kExitOk;
}

int run_train(TrainArgs& a) {
  const Dataset data = load_dataset(a.data);
  ModelConfig cfg;
  cfg.num_modalities = data.scenario.num_modalities;
  cfg.num_classes = data.scenario.num_classes;
  cfg.modality_dims = data.scenario.modality_dims;
  cfg.latent_dim = a.latent_dim;
  cfg.nu = a.nu;
  cfg.sigma2 = a.sigma2;
  cfg.variant = parse_variant(a.variant);
  cfg.hidden_dims = a.hidden;
  cfg.unlabeled_per_modality = a.unlabeled_per_modality;
  if (a.alpha) {
    a.train.alpha_mode = AlphaMode::kExplicit;
    a.train.alpha = *a.alpha;
  }
  a.train.validate();
  cfg.validate();

  std::filesystem::create_directories(a.out);
  const std::string ckpt_path = a.out + "/checkpoint.smvt";
  std::ofstream metrics(a.out + "/metrics.jsonl", std::ios::trunc);
  if (!metrics) throw FormatError(FormatErrorKind::kIo, "cannot write metrics in " + a.out);
  train(cfg, data, a.train, [&](const MetricsReport& r, const Checkpoint& ck) {
    const std::string line = metrics_to_json(r);
    metrics << line << "\n";
    metrics.flush();
    std::cout << line << "\n";
    save_checkpoint(ckpt_path, ck);
  });
  return kExitOk;
}

int run_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Dataset data = load_dataset(a.data);
  const MultimodalBatch train_rows = training_rows(data, ck.train);
  const MetricsReport r = evaluate_with_loss(ck.model, train_rows, data.test, ck.class_sizes,
                                             ck.alpha, ck.eval_seed, ck.epoch);
  std::cout << metrics_to_json(r) << "\n";
  return kExitOk;
}

int run_gradcheck() {
  bool ok = true;
  for (const GradSuiteEntry& e : run_gradient_suite()) {
    Eigen::Index checked = 0;
    for (const auto& p : e.report.entries) checked += p.checked;
    std::printf("%s %-36s worst_rel=%.3e coords=%lld\n", e.report.passed ? "PASS" : "FAIL",
                e.name.c_str(), e.report.worst_rel_error, static_cast<long long>(checked));
    ok = ok && e.report.passed;
  }
  return ok ? kExitOk : kExitRuntime;
}

int run_mccheck(const McArgs& a) {
  const McCheckReport r = closed_form_vs_mc_check(a.cfg);
  json pairs = json::array();
  for (const auto& p : r.pairs) {
    pairs.push_back({{"kind", p.kind},
                     {"closed_diff", p.closed_diff},
                     {"closed_stderr", p.closed_stderr},
                     {"mc_diff", p.mc_diff},
                     {"mc_stderr", p.mc_stderr},
                     {"sigmas", p.sigmas},
                     {"passed", p.passed}});
  }
  json out = {{"gamma", r.constants.gamma},
              {"c1", r.constants.c1},
              {"c2", r.constants.c2},
              {"kappa", r.kappa},
              {"log_joint_norm", r.log_joint_norm},
              {"pairs", pairs},
              {"passed", r.passed}};
  std::cout << out.dump(2) << "\n";
  return r.passed ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised multimodal VAE with Student's t latents"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "generate a synthetic multimodal dataset");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--classes", gen.scenario.num_classes, "number of classes K");
  g->add_option("--dims", gen.scenario.modality_dims, "feature dims per modality")->delimiter(',');
  g->add_option("--samples-per-class", gen.scenario.samples_per_largest_class,
                "rows in the largest class");
  g->add_option("--imbalance-ratio", gen.scenario.imbalance_ratio, "r = L_1 / L_K");
  g->add_option("--labeled-fraction", gen.scenario.labeled_fraction, "labelled share per class");
  g->add_option("--missing-fraction", gen.scenario.missing_modality_fraction,
                "share of rows missing one modality");
  g->add_option("--separation", gen.scenario.cluster_separation, "minimum centroid distance");
  g->add_option("--noise", gen.noise, "gaussian or student_t");
  g->add_option("--noise-dof", gen.scenario.noise_dof, "dof of student_t noise");
  g->add_option("--noise-scale", gen.scenario.noise_scale, "noise scale");
  g->add_option("--test-per-class", gen.scenario.test_samples_per_class, "test rows per class");
  g->add_option("--seed", gen.scenario.seed, "random seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model and stream metrics");
  t->add_option("--data", tr.data, "dataset directory")->required();
  t->add_option("--out", tr.out, "output directory")->required();
  t->add_option("--epochs", tr.train.epochs, "training epochs")->required();
  t->add_option("--batch-size", tr.train.batch_size, "mini-batch size");
  t->add_option("--lr", tr.train.lr, "Adam learning rate");
  t->add_option("--alpha", tr.alpha, "classification weight (default 10 N)");
  t->add_option("--eval-every", tr.train.eval_every, "epochs between evaluations");
  t->add_option("--seed", tr.train.seed, "random seed");
  t->add_option("--variant", tr.variant,
                "t_poe, gaussian_poe, t_early, t_late, gaussian_early, gaussian_late");
  t->add_option("--nu", tr.nu, "degrees of freedom");
  t->add_option("--latent-dim", tr.latent_dim, "latent dimension n_z");
  t->add_option("--hidden", tr.hidden, "hidden layer widths")->delimiter(',');
  t->add_option("--sigma2", tr.sigma2, "decoder variance scale");
  t->add_flag("--complete-only", tr.train.complete_rows_only,
              "train only on rows with every modality");
  t->add_flag("--unlabeled-per-modality", tr.unlabeled_per_modality,
              "sum per-modality terms in the unlabeled loss");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint; prints metrics JSON");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
  e->add_option("--data", ev.data, "dataset directory")->required();

  app.add_subcommand("gradcheck", "finite-difference checks of every objective");

  McArgs mc;
  auto* m = app.add_subcommand("mccheck", "closed-form loss versus Monte-Carlo divergence");
  m->add_option("--n-mc", mc.cfg.n_mc, "Monte-Carlo samples per pair");
  m->add_option("--pairs", mc.cfg.num_pairs, "number of parameter pairs");
  m->add_option("--nu", mc.cfg.nu, "degrees of freedom");
  m->add_option("--seed", mc.cfg.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*g) return run_gen(gen);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (app.got_subcommand("gradcheck")) return run_gradcheck();
    if (*m) return run_mccheck(mc);
  } catch (const ContractViolation& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitValidation;
  } catch (const ScenarioError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitValidation;
  } catch (const UnsupportedRegime& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
