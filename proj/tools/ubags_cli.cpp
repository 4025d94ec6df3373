// Command-line front end for the experiment engine. Each subcommand builds an
// ExperimentConfig from (optional) --config JSON plus explicit flag overrides,
// then hands off to the corresponding cmd_* function.

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "ubags/experiment.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Flag storage for one subcommand. Defaults mirror ExperimentConfig's; values
// are only copied into the config for flags the user actually passed, so they
// never clobber a --config file.
struct CommonFlags {
  std::string config;
  std::string out = "out";
  bool desk = false;

  std::string data_kind = "gaussian";
  size_t dim = 2;
  double separation = 4.0;
  double noise_sd = 1.0;
  std::string pool_path;
  std::vector<int> positive_classes;
  size_t test_size = 4000;
  double test_prior = 0.5;

  size_t m = 10;
  size_t bag_size = 2000;
  double prior_lo = 0.1;
  double prior_hi = 0.9;
  std::string size_shift = "none";
  double tau = 1.0;

  std::string selector = "alignment";
  std::string estimator = "standard";
  int pairs = 4;
  double loss_threshold = 0.7;
  int warmup_epochs = 10;
  int pvu_epochs = 40;
  double delta = 0.1;
  double gamma_bbe = 0.01;
  double min_tail = 0.1;
  bool no_slack = false;
  double regroup_fraction = 0.1;
  bool raw_confident = false;

  std::string prior_source = "eccpe";
  std::string trainer = "umssc";
  std::string pi_d_mode = "given";
  double pi_d = 0.5;

  std::string final_arch = "linear";
  int final_epochs = 300;
  int hidden = 16;
  int batch = 64;
  double lr = 0.05;
  double weight_decay = 0.0;

  int repeats = 1;
  uint64_t seed = 1;
};

struct Wiring {
  std::vector<std::pair<CLI::Option*, std::function<void(ubags::ExperimentConfig&)>>> appliers;
  CLI::Option* config_opt = nullptr;
  CLI::Option* final_epochs_opt = nullptr;
};

void setup_experiment_flags(CLI::App* sub, CommonFlags& fl, Wiring& w) {
  auto add = [&w](CLI::Option* opt, std::function<void(ubags::ExperimentConfig&)> f) {
    w.appliers.emplace_back(opt, std::move(f));
    return opt;
  };

  w.config_opt = sub->add_option("--config", fl.config, "JSON config; flags override its fields")
                     ->check(CLI::ExistingFile);
  sub->add_option("--out", fl.out, "output directory (relative paths land under $UBAGS_OUT)")
      ->capture_default_str();

  add(sub->add_option("--data", fl.data_kind, "data source")
          ->check(CLI::IsMember({"gaussian", "csv", "idx"}))
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.data.kind = fl.data_kind; });
  add(sub->add_option("--dim", fl.dim, "gaussian feature dimension")->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.data.gauss.dim = fl.dim; });
  add(sub->add_option("--separation", fl.separation, "gaussian class-mean separation")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.data.gauss.separation = fl.separation; });
  add(sub->add_option("--noise-sd", fl.noise_sd, "gaussian per-axis standard deviation")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.data.gauss.noise_sd = fl.noise_sd; });
  add(sub->add_option("--pool", fl.pool_path, "pool file for csv/idx data"),
      [&fl](ubags::ExperimentConfig& c) { c.data.path = fl.pool_path; });
  add(sub->add_option("--positive-classes", fl.positive_classes,
                      "class ids mapped to +1 (idx data)")
          ->delimiter(','),
      [&fl](ubags::ExperimentConfig& c) { c.data.positive_classes = fl.positive_classes; });
  add(sub->add_option("--test-size", fl.test_size, "held-out labeled test rows")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.data.test_size = fl.test_size; });
  add(sub->add_option("--test-prior", fl.test_prior, "positive rate of the synthetic test pool")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.data.test_prior = fl.test_prior; });

  add(sub->add_option("--m", fl.m, "number of bags")->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.bags.m = fl.m; });
  add(sub->add_option("--bag-size", fl.bag_size, "rows per bag")->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.bags.bag_size = fl.bag_size; });
  add(sub->add_option("--prior-lo", fl.prior_lo, "smallest bag prior")->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.bags.prior_lo = fl.prior_lo; });
  add(sub->add_option("--prior-hi", fl.prior_hi, "largest bag prior")->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.bags.prior_hi = fl.prior_hi; });
  add(sub->add_option("--size-shift", fl.size_shift, "bag-size perturbation")
          ->check(CLI::IsMember({"none", "half-scaled", "random-simplex"}))
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.bags.size_shift = fl.size_shift; });
  add(sub->add_option("--tau", fl.tau, "scale factor for half-scaled bags")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.bags.tau = fl.tau; });

  add(sub->add_option("--selector", fl.selector, "confident-example selector")
          ->check(CLI::IsMember({"loss", "confident-joint", "alignment"}))
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.ccpe.selector = ubags::selector_from(fl.selector); });
  add(sub->add_option("--estimator", fl.estimator, "per-bag prior estimator")
          ->check(CLI::IsMember({"standard", "rempe", "bbe"}))
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) {
        c.ccpe.estimator = ubags::estimator_from(fl.estimator);
      });
  add(sub->add_option("--pairs", fl.pairs, "pairs the extended run averages over")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.ccpe.pair_count = fl.pairs; });
  add(sub->add_option("--loss-threshold", fl.loss_threshold,
                      "posterior cut for the loss selector")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.ccpe.loss_threshold = fl.loss_threshold; });
  add(sub->add_option("--warmup-epochs", fl.warmup_epochs, "selector warm-up epochs")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.ccpe.warmup.epochs = fl.warmup_epochs; });
  add(sub->add_option("--pvu-epochs", fl.pvu_epochs, "estimator scorer epochs")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.ccpe.pvu.epochs = fl.pvu_epochs; });
  add(sub->add_option("--delta", fl.delta, "tail-bound confidence level")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.ccpe.kappa.delta = fl.delta; });
  add(sub->add_option("--gamma-bbe", fl.gamma_bbe, "bin-rate floor in the bbe objective")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.ccpe.kappa.gamma_bbe = fl.gamma_bbe; });
  add(sub->add_option("--min-tail", fl.min_tail, "smallest usable component tail mass")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.ccpe.kappa.min_tail = fl.min_tail; });
  add(sub->add_flag("--no-slack", fl.no_slack, "drop the finite-sample slack terms"),
      [](ubags::ExperimentConfig& c) { c.ccpe.kappa.with_slack = false; });
  add(sub->add_option("--regroup-fraction", fl.regroup_fraction,
                      "fraction the regrouped estimator transplants")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.ccpe.regroup_fraction = fl.regroup_fraction; });
  add(sub->add_flag("--raw-confident", fl.raw_confident,
                    "skip selection; whole pseudo sides feed the estimator"),
      [](ubags::ExperimentConfig& c) { c.ccpe.raw_confident = true; });

  add(sub->add_option("--prior-source", fl.prior_source, "where training priors come from")
          ->check(CLI::IsMember({"ccpe", "eccpe", "mosm", "true"}))
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.prior_source = fl.prior_source; });
  add(sub->add_option("--trainer", fl.trainer, "classifier training scheme")
          ->check(CLI::IsMember({"umssc", "mcm"}))
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.trainer = fl.trainer; });
  add(sub->add_option("--pi-d", fl.pi_d, "test-distribution positive rate")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.pi_d = fl.pi_d; });
  add(sub->add_option("--pi-d-mode", fl.pi_d_mode, "use the given rate or estimate it")
          ->check(CLI::IsMember({"given", "estimate"}))
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.pi_d_mode = fl.pi_d_mode; });

  add(sub->add_option("--final-arch", fl.final_arch, "final classifier architecture")
          ->check(CLI::IsMember({"linear", "mlp"}))
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) {
        c.final_scorer.arch = fl.final_arch == "mlp" ? ubags::Arch::mlp : ubags::Arch::linear;
      });
  w.final_epochs_opt =
      add(sub->add_option("--final-epochs", fl.final_epochs, "final training epochs")
              ->capture_default_str(),
          [&fl](ubags::ExperimentConfig& c) { c.final_scorer.epochs = fl.final_epochs; });
  add(sub->add_option("--hidden", fl.hidden, "mlp hidden width")->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) {
        c.final_scorer.hidden = fl.hidden;
        c.ccpe.warmup.hidden = fl.hidden;
      });
  add(sub->add_option("--batch", fl.batch, "minibatch size")->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) {
        c.final_scorer.batch_size = fl.batch;
        c.ccpe.warmup.batch_size = fl.batch;
        c.ccpe.pvu.batch_size = fl.batch;
      });
  add(sub->add_option("--lr", fl.lr, "learning rate")->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) {
        c.final_scorer.learning_rate = fl.lr;
        c.ccpe.warmup.learning_rate = fl.lr;
        c.ccpe.pvu.learning_rate = fl.lr;
      });
  add(sub->add_option("--weight-decay", fl.weight_decay, "L2 coefficient")
          ->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.final_scorer.weight_decay = fl.weight_decay; });

  add(sub->add_option("--repeats", fl.repeats, "independent repeats")->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.repeats = fl.repeats; });
  add(sub->add_option("--seed", fl.seed, "master seed")->capture_default_str(),
      [&fl](ubags::ExperimentConfig& c) { c.seed = fl.seed; });

  sub->add_flag("--desk", fl.desk, "desk-scale run: final epochs 50 unless --final-epochs given");
}

ubags::ExperimentConfig build_config(const CommonFlags& fl, const Wiring& w) {
  ubags::ExperimentConfig cfg;
  if (w.config_opt->count() > 0) cfg = ubags::config_from_json(read_file(fl.config));
  for (const auto& [opt, apply] : w.appliers)
    if (opt->count() > 0) apply(cfg);
  if (fl.desk && w.final_epochs_opt->count() == 0) cfg.final_scorer.epochs = 50;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"binary classification from unlabeled bags with one known prior-order pair"};
  app.require_subcommand(1);

  CLI::App* synth = app.add_subcommand("synth", "write bags + test pool as CSV with a manifest");
  CommonFlags fl_synth;
  Wiring w_synth;
  setup_experiment_flags(synth, fl_synth, w_synth);

  CLI::App* estimate = app.add_subcommand("estimate", "estimate every bag's class prior");
  CommonFlags fl_estimate;
  Wiring w_estimate;
  setup_experiment_flags(estimate, fl_estimate, w_estimate);

  CLI::App* train = app.add_subcommand("train", "full pipeline: estimate priors, train, evaluate");
  CommonFlags fl_train;
  Wiring w_train;
  setup_experiment_flags(train, fl_train, w_train);

  CLI::App* ablate = app.add_subcommand("ablate", "full pipeline vs. the three ablated variants");
  CommonFlags fl_ablate;
  Wiring w_ablate;
  setup_experiment_flags(ablate, fl_ablate, w_ablate);

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a labeled CSV pool");
  std::string eval_checkpoint, eval_pool, eval_out = "out";
  eval->add_option("--checkpoint", eval_checkpoint, "saved scorer")->required();
  eval->add_option("--pool", eval_pool, "labeled CSV pool")->required();
  eval->add_option("--out", eval_out, "output directory")->capture_default_str();

  CLI::App* report = app.add_subcommand("report", "recompute a summary from a rows CSV");
  std::string report_rows, report_out = "out";
  report->add_option("--rows", report_rows, "rows CSV from estimate/train/ablate")->required();
  report->add_option("--out", report_out, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return ubags::cmd_synth(build_config(fl_synth, w_synth), fl_synth.out);
    if (*estimate)
      return ubags::cmd_estimate(build_config(fl_estimate, w_estimate), fl_estimate.out);
    if (*train) return ubags::cmd_train(build_config(fl_train, w_train), fl_train.out);
    if (*ablate) return ubags::cmd_ablate(build_config(fl_ablate, w_ablate), fl_ablate.out);
    if (*eval) return ubags::cmd_eval(eval_checkpoint, eval_pool, eval_out);
    if (*report) return ubags::cmd_report(report_rows, report_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
