#include "ubags/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <set>

#include <json.hpp>

#include "ubags/confident.hpp"
#include "ubags/rng.hpp"

namespace ubags {

namespace {

using nlohmann::json;

// seed streams
enum : uint64_t {
  kStreamRepeat = 31,
  kStreamBagDraw = 32,
  kStreamTestDraw = 33,
  kStreamPoolSplit = 34,
  kStreamShiftCfg = 35,
  kStreamPiD = 36,
};

size_t round_half_up(double x) { return size_t(std::floor(x + 0.5)); }

void draw_gaussian_row(Rng& rng, const GaussianSpec& g, int label, double* out) {
  double center = (label == 1 ? 0.5 : -0.5) * g.separation;
  out[0] = center + g.noise_sd * rng.normal();
  for (size_t j = 1; j < g.dim; ++j) out[j] = g.noise_sd * rng.normal();
}

Bag draw_gaussian_bag(const GaussianSpec& g, double prior, size_t size, uint64_t seed) {
  Bag bag;
  bag.true_prior = prior;
  bag.features = Matrix(size, g.dim);
  bag.hidden_labels.resize(size);
  size_t pos = std::min(size, round_half_up(prior * double(size)));
  std::vector<int> labels(size, -1);
  std::fill(labels.begin(), labels.begin() + long(pos), 1);
  Rng rng(seed);
  rng.shuffle(labels);
  for (size_t i = 0; i < size; ++i) {
    bag.hidden_labels[i] = labels[i];
    draw_gaussian_row(rng, g, labels[i], bag.features.row(i));
  }
  return bag;
}

std::vector<BagSpec> layout_specs(const ExperimentConfig& cfg, uint64_t repeat_seed) {
  std::vector<double> priors = even_priors(cfg.bags.m, cfg.bags.prior_lo, cfg.bags.prior_hi);
  std::vector<BagSpec> specs(cfg.bags.m);
  for (size_t j = 0; j < cfg.bags.m; ++j) specs[j] = {priors[j], cfg.bags.bag_size};
  if (cfg.bags.size_shift == "half-scaled")
    specs = apply_size_shift(specs, SizeShiftMode::half_scaled, cfg.bags.tau,
                             derive_seed(repeat_seed, kStreamShiftCfg));
  else if (cfg.bags.size_shift == "random-simplex")
    specs = apply_size_shift(specs, SizeShiftMode::random_simplex, cfg.bags.tau,
                             derive_seed(repeat_seed, kStreamShiftCfg));
  return specs;
}

// CSV helpers: fixed formatting keeps reruns byte-identical
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct CsvWriter {
  FILE* f = nullptr;
  explicit CsvWriter(const std::string& path) {
    f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  }
  ~CsvWriter() {
    if (f) std::fclose(f);
  }
  void line(const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
      if (i) std::fputc(',', f);
      std::fputs(fields[i].c_str(), f);
    }
    std::fputc('\n', f);
  }
};

void write_text(const std::string& path, const std::string& text) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1));
}

}  // namespace

// --- config json -------------------------------------------------------------

std::string selector_name(Selector s) {
  switch (s) {
    case Selector::loss:
      return "loss";
    case Selector::confident_joint:
      return "confident-joint";
    case Selector::alignment:
      return "alignment";
  }
  return "?";
}

Selector selector_from(const std::string& s) {
  if (s == "loss") return Selector::loss;
  if (s == "confident-joint") return Selector::confident_joint;
  if (s == "alignment") return Selector::alignment;
  throw std::invalid_argument("unknown selector '" + s + "'");
}

std::string estimator_name(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::standard:
      return "standard";
    case EstimatorKind::rempe:
      return "rempe";
    case EstimatorKind::bbe:
      return "bbe";
  }
  return "?";
}

EstimatorKind estimator_from(const std::string& s) {
  if (s == "standard") return EstimatorKind::standard;
  if (s == "rempe") return EstimatorKind::rempe;
  if (s == "bbe") return EstimatorKind::bbe;
  throw std::invalid_argument("unknown estimator '" + s + "'");
}

namespace {

json scorer_to_json(const ScorerConfig& c) {
  return json{{"arch", c.arch == Arch::linear ? "linear" : "mlp"},
              {"hidden", c.hidden},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"seed", c.seed}};
}

ScorerConfig scorer_from_json(const json& j) {
  ScorerConfig c;
  std::string arch = j.at("arch").get<std::string>();
  if (arch == "linear")
    c.arch = Arch::linear;
  else if (arch == "mlp")
    c.arch = Arch::mlp;
  else
    throw std::invalid_argument("unknown arch '" + arch + "'");
  c.hidden = j.at("hidden").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

}  // namespace

bool operator==(const ScorerConfig& a, const ScorerConfig& b) {
  return a.arch == b.arch && a.hidden == b.hidden && a.epochs == b.epochs &&
         a.batch_size == b.batch_size && a.learning_rate == b.learning_rate &&
         a.weight_decay == b.weight_decay && a.seed == b.seed;
}

bool operator==(const KappaConfig& a, const KappaConfig& b) {
  return a.delta == b.delta && a.gamma_bbe == b.gamma_bbe && a.min_tail == b.min_tail &&
         a.with_slack == b.with_slack;
}

bool operator==(const CcpeConfig& a, const CcpeConfig& b) {
  return a.selector == b.selector && a.estimator == b.estimator && a.pair_count == b.pair_count &&
         a.loss_threshold == b.loss_threshold && a.warmup == b.warmup && a.pvu == b.pvu &&
         a.kappa == b.kappa && a.regroup_fraction == b.regroup_fraction &&
         a.raw_confident == b.raw_confident && a.seed == b.seed;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.data == b.data && a.bags == b.bags && a.ccpe == b.ccpe &&
         a.prior_source == b.prior_source && a.trainer == b.trainer &&
         a.final_scorer == b.final_scorer && a.pi_d_mode == b.pi_d_mode && a.pi_d == b.pi_d &&
         a.repeats == b.repeats && a.seed == b.seed;
}

void ExperimentConfig::validate() const {
  if (data.kind != "gaussian" && data.kind != "csv" && data.kind != "idx")
    throw std::invalid_argument("config: data.kind must be gaussian, csv or idx");
  if (data.kind != "gaussian" && data.path.empty())
    throw std::invalid_argument("config: pool-backed data needs data.path");
  if (data.kind == "idx" && data.positive_classes.empty())
    throw std::invalid_argument("config: idx data needs positive_classes");
  if (data.kind == "gaussian" && data.gauss.dim < 1)
    throw std::invalid_argument("config: gaussian dim must be >= 1");
  if (!(data.gauss.noise_sd > 0.0)) throw std::invalid_argument("config: noise_sd must be > 0");
  if (data.test_size < 1) throw std::invalid_argument("config: test_size must be >= 1");
  if (!(data.test_prior >= 0.0 && data.test_prior <= 1.0))
    throw std::invalid_argument("config: test_prior must be in [0,1]");
  if (bags.m < 2) throw std::invalid_argument("config: m must be >= 2");
  if (bags.bag_size < 1) throw std::invalid_argument("config: bag_size must be >= 1");
  if (!(bags.prior_lo >= 0.0 && bags.prior_hi <= 1.0 && bags.prior_lo <= bags.prior_hi))
    throw std::invalid_argument("config: need 0 <= prior_lo <= prior_hi <= 1");
  if (bags.size_shift != "none" && bags.size_shift != "half-scaled" &&
      bags.size_shift != "random-simplex")
    throw std::invalid_argument("config: unknown size_shift");
  if (!(bags.tau > 0.0)) throw std::invalid_argument("config: tau must be > 0");
  ccpe.validate();
  final_scorer.validate();
  if (prior_source != "ccpe" && prior_source != "eccpe" && prior_source != "mosm" &&
      prior_source != "true")
    throw std::invalid_argument("config: unknown prior_source");
  if (trainer != "umssc" && trainer != "mcm")
    throw std::invalid_argument("config: trainer must be umssc or mcm");
  if (pi_d_mode != "given" && pi_d_mode != "estimate")
    throw std::invalid_argument("config: pi_d_mode must be given or estimate");
  if (!(pi_d > 0.0 && pi_d < 1.0)) throw std::invalid_argument("config: pi_d must be in (0,1)");
  if (repeats < 1) throw std::invalid_argument("config: repeats must be >= 1");
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["data"] = {{"kind", cfg.data.kind},
               {"dim", cfg.data.gauss.dim},
               {"separation", cfg.data.gauss.separation},
               {"noise_sd", cfg.data.gauss.noise_sd},
               {"path", cfg.data.path},
               {"positive_classes", cfg.data.positive_classes},
               {"test_size", cfg.data.test_size},
               {"test_prior", cfg.data.test_prior}};
  j["bags"] = {{"m", cfg.bags.m},
               {"bag_size", cfg.bags.bag_size},
               {"prior_lo", cfg.bags.prior_lo},
               {"prior_hi", cfg.bags.prior_hi},
               {"size_shift", cfg.bags.size_shift},
               {"tau", cfg.bags.tau}};
  j["ccpe"] = {{"selector", selector_name(cfg.ccpe.selector)},
               {"estimator", estimator_name(cfg.ccpe.estimator)},
               {"pair_count", cfg.ccpe.pair_count},
               {"loss_threshold", cfg.ccpe.loss_threshold},
               {"warmup", scorer_to_json(cfg.ccpe.warmup)},
               {"pvu", scorer_to_json(cfg.ccpe.pvu)},
               {"kappa",
                {{"delta", cfg.ccpe.kappa.delta},
                 {"gamma_bbe", cfg.ccpe.kappa.gamma_bbe},
                 {"min_tail", cfg.ccpe.kappa.min_tail},
                 {"with_slack", cfg.ccpe.kappa.with_slack}}},
               {"regroup_fraction", cfg.ccpe.regroup_fraction},
               {"raw_confident", cfg.ccpe.raw_confident},
               {"seed", cfg.ccpe.seed}};
  j["prior_source"] = cfg.prior_source;
  j["trainer"] = cfg.trainer;
  j["final_scorer"] = scorer_to_json(cfg.final_scorer);
  j["pi_d_mode"] = cfg.pi_d_mode;
  j["pi_d"] = cfg.pi_d;
  j["repeats"] = cfg.repeats;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig cfg;
  const json& d = j.at("data");
  cfg.data.kind = d.at("kind").get<std::string>();
  cfg.data.gauss.dim = d.at("dim").get<size_t>();
  cfg.data.gauss.separation = d.at("separation").get<double>();
  cfg.data.gauss.noise_sd = d.at("noise_sd").get<double>();
  cfg.data.path = d.at("path").get<std::string>();
  cfg.data.positive_classes = d.at("positive_classes").get<std::vector<int>>();
  cfg.data.test_size = d.at("test_size").get<size_t>();
  cfg.data.test_prior = d.at("test_prior").get<double>();
  const json& b = j.at("bags");
  cfg.bags.m = b.at("m").get<size_t>();
  cfg.bags.bag_size = b.at("bag_size").get<size_t>();
  cfg.bags.prior_lo = b.at("prior_lo").get<double>();
  cfg.bags.prior_hi = b.at("prior_hi").get<double>();
  cfg.bags.size_shift = b.at("size_shift").get<std::string>();
  cfg.bags.tau = b.at("tau").get<double>();
  const json& c = j.at("ccpe");
  cfg.ccpe.selector = selector_from(c.at("selector").get<std::string>());
  cfg.ccpe.estimator = estimator_from(c.at("estimator").get<std::string>());
  cfg.ccpe.pair_count = c.at("pair_count").get<int>();
  cfg.ccpe.loss_threshold = c.at("loss_threshold").get<double>();
  cfg.ccpe.warmup = scorer_from_json(c.at("warmup"));
  cfg.ccpe.pvu = scorer_from_json(c.at("pvu"));
  cfg.ccpe.kappa.delta = c.at("kappa").at("delta").get<double>();
  cfg.ccpe.kappa.gamma_bbe = c.at("kappa").at("gamma_bbe").get<double>();
  cfg.ccpe.kappa.min_tail = c.at("kappa").at("min_tail").get<double>();
  cfg.ccpe.kappa.with_slack = c.at("kappa").at("with_slack").get<bool>();
  cfg.ccpe.regroup_fraction = c.at("regroup_fraction").get<double>();
  cfg.ccpe.raw_confident = c.at("raw_confident").get<bool>();
  cfg.ccpe.seed = c.at("seed").get<uint64_t>();
  cfg.prior_source = j.at("prior_source").get<std::string>();
  cfg.trainer = j.at("trainer").get<std::string>();
  cfg.final_scorer = scorer_from_json(j.at("final_scorer"));
  cfg.pi_d_mode = j.at("pi_d_mode").get<std::string>();
  cfg.pi_d = j.at("pi_d").get<double>();
  cfg.repeats = j.at("repeats").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

// --- task building -------------------------------------------------------------

TaskData build_task(const ExperimentConfig& cfg, uint64_t repeat_seed) {
  cfg.validate();
  TaskData task;
  std::vector<BagSpec> specs = layout_specs(cfg, repeat_seed);

  if (cfg.data.kind == "gaussian") {
    task.bags.bags.resize(specs.size());
    for (size_t j = 0; j < specs.size(); ++j)
      task.bags.bags[j] = draw_gaussian_bag(cfg.data.gauss, specs[j].prior, specs[j].size,
                                            derive_seed(repeat_seed, kStreamBagDraw, j));
    task.bags.resampled_across_bags = false;

    size_t test_pos = round_half_up(cfg.data.test_prior * double(cfg.data.test_size));
    test_pos = std::min(test_pos, cfg.data.test_size);
    task.test_features = Matrix(cfg.data.test_size, cfg.data.gauss.dim);
    task.test_labels.assign(cfg.data.test_size, -1);
    std::fill(task.test_labels.begin(), task.test_labels.begin() + long(test_pos), 1);
    Rng rng(derive_seed(repeat_seed, kStreamTestDraw));
    rng.shuffle(task.test_labels);
    for (size_t i = 0; i < cfg.data.test_size; ++i)
      draw_gaussian_row(rng, cfg.data.gauss, task.test_labels[i], task.test_features.row(i));
  } else {
    LabeledPool pool =
        cfg.data.kind == "csv"
            ? load_pool(cfg.data.path, PoolFormat::csv)
            : load_pool(cfg.data.path, PoolFormat::idx,
                        std::set<int>(cfg.data.positive_classes.begin(),
                                      cfg.data.positive_classes.end()));
    if (pool.size() <= cfg.data.test_size)
      throw std::invalid_argument("pool too small for the requested test split");

    // deterministic split: shuffled rows, test first
    std::vector<size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(repeat_seed, kStreamPoolSplit));
    rng.shuffle(order);

    task.test_features = Matrix(cfg.data.test_size, pool.features.cols);
    task.test_labels.resize(cfg.data.test_size);
    for (size_t i = 0; i < cfg.data.test_size; ++i) {
      std::copy(pool.features.row(order[i]), pool.features.row(order[i]) + pool.features.cols,
                task.test_features.row(i));
      task.test_labels[i] = pool.labels[order[i]];
    }
    LabeledPool rest;
    rest.features = Matrix(pool.size() - cfg.data.test_size, pool.features.cols);
    rest.labels.resize(pool.size() - cfg.data.test_size);
    for (size_t i = cfg.data.test_size; i < pool.size(); ++i) {
      size_t r = i - cfg.data.test_size;
      std::copy(pool.features.row(order[i]), pool.features.row(order[i]) + pool.features.cols,
                rest.features.row(r));
      rest.labels[r] = pool.labels[order[i]];
    }
    task.bags = sample_bags(rest, specs, derive_seed(repeat_seed, kStreamBagDraw));
    return task;
  }

  size_t hi = 0, lo = 0;
  for (size_t j = 1; j < specs.size(); ++j) {
    if (specs[j].prior > specs[hi].prior) hi = j;
    if (specs[j].prior < specs[lo].prior) lo = j;
  }
  task.bags.declared_hi = hi;
  task.bags.declared_lo = lo;
  return task;
}

PriorVector resolve_priors(const BagCollection& bags, const ExperimentConfig& cfg) {
  if (cfg.prior_source == "true") {
    PriorVector pv;
    pv.method = "true";
    for (const auto& b : bags.bags) {
      pv.priors.push_back(b.true_prior);
      PriorEstimate e;
      e.value = e.side1 = e.side2 = b.true_prior;
      e.method = "true";
      pv.per_bag.push_back(e);
    }
    return pv;
  }
  CcpeConfig ccfg = cfg.ccpe;
  if (cfg.prior_source == "ccpe") return run_ccpe(bags, ccfg);
  if (cfg.prior_source == "eccpe") return run_eccpe(bags, ccfg);
  return run_mos_m(bags, ccfg);
}

std::string resolve_out_dir(const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::path p(out_dir);
  if (!p.is_absolute()) {
    const char* root = std::getenv("UBAGS_OUT");
    p = fs::path(root && *root ? root : ".") / p;
  }
  fs::create_directories(p);
  return p.string();
}

// --- commands ------------------------------------------------------------------

int cmd_synth(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::string dir = resolve_out_dir(out_dir);
  int failures = 0;
  for (int r = 0; r < cfg.repeats; ++r) {
    uint64_t rs = derive_seed(cfg.seed, kStreamRepeat, uint64_t(r));
    try {
      TaskData task = build_task(cfg, rs);
      json manifest;
      manifest["repeat"] = r;
      manifest["seed"] = rs;
      manifest["m"] = task.bags.m();
      manifest["declared_hi"] = task.bags.declared_hi;
      manifest["declared_lo"] = task.bags.declared_lo;
      manifest["resampled_across_bags"] = task.bags.resampled_across_bags;
      json bag_list = json::array();
      for (size_t j = 0; j < task.bags.m(); ++j) {
        char name[64];
        std::snprintf(name, sizeof name, "bag_r%03d_%03zu.csv", r, j);
        const Bag& bag = task.bags.bags[j];
        save_pool_csv(dir + "/" + name, bag.features, bag.hidden_labels);
        bag_list.push_back({{"file", name},
                            {"size", bag.size()},
                            {"prior", bag.true_prior}});
      }
      manifest["bags"] = bag_list;
      char tname[64];
      std::snprintf(tname, sizeof tname, "test_r%03d.csv", r);
      save_pool_csv(dir + "/" + tname, task.test_features, task.test_labels);
      manifest["test"] = tname;
      char mname[64];
      std::snprintf(mname, sizeof mname, "manifest_r%03d.json", r);
      write_text(dir + "/" + mname, manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
      std::fprintf(stderr, "synth repeat %d failed: %s\n", r, e.what());
      ++failures;
    }
  }
  write_text(dir + "/config_echo.json", config_to_json(cfg));
  return failures == 0 ? 0 : 1;
}

int cmd_estimate(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::string dir = resolve_out_dir(out_dir);
  CsvWriter rows(dir + "/estimate_rows.csv");
  rows.line({"repeat", "seed", "bag", "true_prior", "estimated_prior", "abs_error", "side1",
             "side2", "method", "flagged"});
  CsvWriter warns(dir + "/estimate_warnings.csv");
  warns.line({"repeat", "warning"});

  std::vector<double> repeat_mae;
  int failures = 0;
  for (int r = 0; r < cfg.repeats; ++r) {
    uint64_t rs = derive_seed(cfg.seed, kStreamRepeat, uint64_t(r));
    try {
      TaskData task = build_task(cfg, rs);
      ExperimentConfig rcfg = cfg;
      rcfg.ccpe.seed = derive_seed(rs, kStreamBagDraw, 99);
      PriorVector pv = resolve_priors(task.bags, rcfg);
      double mae = 0.0;
      for (size_t j = 0; j < task.bags.m(); ++j) {
        double err = std::fabs(pv.priors[j] - task.bags.bags[j].true_prior);
        mae += err;
        rows.line({std::to_string(r), std::to_string(rs), std::to_string(j),
                   fmt(task.bags.bags[j].true_prior), fmt(pv.priors[j]), fmt(err),
                   fmt(pv.per_bag[j].side1), fmt(pv.per_bag[j].side2), pv.method,
                   pv.per_bag[j].flagged ? "1" : "0"});
      }
      mae /= double(task.bags.m());
      repeat_mae.push_back(mae);
      for (const auto& w : pv.warnings) warns.line({std::to_string(r), "\"" + w + "\""});
    } catch (const std::exception& e) {
      std::fprintf(stderr, "estimate repeat %d failed: %s\n", r, e.what());
      warns.line({std::to_string(r), std::string("\"repeat failed: ") + e.what() + "\""});
      ++failures;
    }
  }

  CsvWriter summary(dir + "/estimate_summary.csv");
  summary.line({"method", "repeats_requested", "repeats_succeeded", "mae_mean", "mae_sd",
                "mae_x100_mean", "mae_x100_sd"});
  if (!repeat_mae.empty()) {
    double m = mean_of(repeat_mae), sd = sample_sd(repeat_mae);
    summary.line({cfg.prior_source, std::to_string(cfg.repeats),
                  std::to_string(int(repeat_mae.size())), fmt(m), fmt(sd), fmt(100.0 * m),
                  fmt(100.0 * sd)});
  } else {
    summary.line({cfg.prior_source, std::to_string(cfg.repeats), "0", "nan", "nan", "nan", "nan"});
  }
  write_text(dir + "/config_echo.json", config_to_json(cfg));
  return failures == 0 ? 0 : 1;
}

namespace {

// warm-up + selection for one pseudo-labeled set, honoring raw_confident
ConfidentSets select_confident(const PseudoLabeledSet& set, const CcpeConfig& ccfg,
                               uint64_t warm_seed) {
  if (ccfg.raw_confident) {
    ConfidentSets conf;
    for (size_t i = 0; i < set.pseudo.size(); ++i)
      (set.pseudo[i] == 1 ? conf.positive_idx : conf.negative_idx).push_back(i);
    conf.method = "raw";
    return conf;
  }
  ScorerConfig wcfg = ccfg.warmup;
  wcfg.seed = warm_seed;
  Scorer warm = train_binary(set.features, set.pseudo, {}, wcfg);
  switch (ccfg.selector) {
    case Selector::loss:
      return select_by_loss(set, warm, ccfg.loss_threshold);
    case Selector::confident_joint:
      return select_by_confident_joint(set, warm);
    case Selector::alignment:
      return select_by_alignment(set, warm);
  }
  throw std::logic_error("unknown selector");
}

// shared by cmd_train and cmd_ablate: run one repeat end to end
struct TrainOutcome {
  double accuracy = 0.0;
  double mae = -1.0;  // of the priors used, vs the recorded ones; -1 when skipped
  double pi_d_used = 0.0;
  std::string prior_method;
};

TrainOutcome run_training(const ExperimentConfig& cfg, const TaskData& task, uint64_t rs,
                          const std::string& checkpoint_path) {
  TrainOutcome out;
  ExperimentConfig rcfg = cfg;
  rcfg.ccpe.seed = derive_seed(rs, kStreamBagDraw, 99);
  PriorVector pv = resolve_priors(task.bags, rcfg);
  out.prior_method = pv.method;
  if (!pv.priors.empty()) {
    out.mae = 0.0;
    for (size_t j = 0; j < task.bags.m(); ++j)
      out.mae += std::fabs(pv.priors[j] - task.bags.bags[j].true_prior);
    out.mae /= double(task.bags.m());
  }

  double pi_d = cfg.pi_d;
  if (cfg.pi_d_mode == "estimate") {
    // confident sets from the declared pair feed the test-prior estimate
    const BagCollection& bags = task.bags;
    PseudoLabeledSet set = assign_pseudo_labels(bags.bags[bags.declared_hi],
                                                bags.bags[bags.declared_lo], bags.declared_hi,
                                                bags.declared_lo);
    ConfidentSets conf =
        select_confident(set, rcfg.ccpe, derive_seed(rs, kStreamPiD, 1));
    EstimatorConfig ecfg;
    ecfg.kappa = rcfg.ccpe.kappa;
    ecfg.pvu = rcfg.ccpe.pvu;
    ecfg.regroup_fraction = rcfg.ccpe.regroup_fraction;
    ecfg.seed = derive_seed(rs, kStreamPiD, 2);
    pi_d = estimate_test_prior(task.test_features, set, conf, ecfg);
    pi_d = std::min(std::max(pi_d, 0.01), 0.99);  // keep the transition well posed
  }
  out.pi_d_used = pi_d;

  ScorerConfig fcfg = cfg.final_scorer;
  fcfg.seed = derive_seed(rs, kStreamPiD, 3);
  Scorer clf = cfg.trainer == "umssc" ? train_umssc(task.bags, pv.priors, pi_d, fcfg)
                                      : train_mcm(task.bags, pv.priors, pi_d, fcfg);
  out.accuracy = accuracy(clf, task.test_features, task.test_labels);
  if (!checkpoint_path.empty()) clf.save(checkpoint_path);
  return out;
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::string dir = resolve_out_dir(out_dir);
  CsvWriter rows(dir + "/train_rows.csv");
  rows.line({"repeat", "seed", "prior_source", "trainer", "pi_d_mode", "pi_d_used", "prior_mae",
             "accuracy", "checkpoint"});

  std::vector<double> accs;
  int failures = 0;
  for (int r = 0; r < cfg.repeats; ++r) {
    uint64_t rs = derive_seed(cfg.seed, kStreamRepeat, uint64_t(r));
    try {
      TaskData task = build_task(cfg, rs);
      char ckpt[64];
      std::snprintf(ckpt, sizeof ckpt, "checkpoint_r%03d.plsc", r);
      TrainOutcome res = run_training(cfg, task, rs, dir + "/" + ckpt);
      accs.push_back(res.accuracy);
      rows.line({std::to_string(r), std::to_string(rs), cfg.prior_source, cfg.trainer,
                 cfg.pi_d_mode, fmt(res.pi_d_used), res.mae < 0 ? "na" : fmt(res.mae),
                 fmt(res.accuracy), ckpt});
    } catch (const std::exception& e) {
      std::fprintf(stderr, "train repeat %d failed: %s\n", r, e.what());
      ++failures;
    }
  }

  CsvWriter summary(dir + "/train_summary.csv");
  summary.line({"trainer", "prior_source", "repeats_requested", "repeats_succeeded", "acc_mean",
                "acc_sd"});
  if (!accs.empty())
    summary.line({cfg.trainer, cfg.prior_source, std::to_string(cfg.repeats),
                  std::to_string(int(accs.size())), fmt(mean_of(accs)), fmt(sample_sd(accs))});
  else
    summary.line({cfg.trainer, cfg.prior_source, std::to_string(cfg.repeats), "0", "nan", "nan"});
  write_text(dir + "/config_echo.json", config_to_json(cfg));
  return failures == 0 ? 0 : 1;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& pool_csv,
             const std::string& out_dir) {
  std::string dir = resolve_out_dir(out_dir);
  Scorer s = Scorer::load(checkpoint_path);
  LabeledPool pool = load_pool_csv(pool_csv);
  double acc = accuracy(s, pool.features, pool.labels);
  CsvWriter rows(dir + "/eval.csv");
  rows.line({"checkpoint", "pool", "rows", "accuracy"});
  rows.line({checkpoint_path, pool_csv, std::to_string(pool.size()), fmt(acc)});
  std::printf("accuracy %s on %zu rows\n", fmt(acc).c_str(), pool.size());
  return 0;
}

int cmd_ablate(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::string dir = resolve_out_dir(out_dir);
  CsvWriter rows(dir + "/ablate_rows.csv");
  rows.line({"repeat", "seed", "variant", "accuracy", "prior_mae"});

  const char* variants[] = {"full", "no-prior-estimation", "no-confident-collection",
                            "no-warmup"};
  std::vector<std::vector<double>> accs(4);
  int failures = 0;

  for (int r = 0; r < cfg.repeats; ++r) {
    uint64_t rs = derive_seed(cfg.seed, kStreamRepeat, uint64_t(r));
    TaskData task;
    try {
      task = build_task(cfg, rs);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "ablate repeat %d failed to build data: %s\n", r, e.what());
      ++failures;
      continue;
    }

    for (int v = 0; v < 4; ++v) {
      try {
        double acc = 0.0, mae = -1.0;
        if (v == 0) {
          TrainOutcome res = run_training(cfg, task, rs, "");
          acc = res.accuracy;
          mae = res.mae;
        } else if (v == 1) {
          // drop prior estimation: fit directly on the confident examples
          const BagCollection& bags = task.bags;
          PseudoLabeledSet set = assign_pseudo_labels(bags.bags[bags.declared_hi],
                                                      bags.bags[bags.declared_lo],
                                                      bags.declared_hi, bags.declared_lo);
          ConfidentSets conf = select_confident(set, cfg.ccpe, derive_seed(rs, kStreamPiD, 11));
          std::vector<size_t> keep(conf.positive_idx);
          keep.insert(keep.end(), conf.negative_idx.begin(), conf.negative_idx.end());
          Matrix X = gather_rows(set.features, keep);
          std::vector<int> y;
          y.reserve(keep.size());
          for (size_t i : keep) y.push_back(set.pseudo[i]);
          ScorerConfig fcfg = cfg.final_scorer;
          fcfg.seed = derive_seed(rs, kStreamPiD, 12);
          Scorer clf = train_binary(X, y, {}, fcfg);
          acc = accuracy(clf, task.test_features, task.test_labels);
        } else if (v == 2) {
          // drop confident collection: raw pseudo sides feed the estimators
          ExperimentConfig vcfg = cfg;
          if (vcfg.prior_source == "true") vcfg.prior_source = "eccpe";
          vcfg.ccpe.raw_confident = true;
          TrainOutcome res = run_training(vcfg, task, rs, "");
          acc = res.accuracy;
          mae = res.mae;
        } else {
          // drop warm-up: the selector sees a converged scorer instead
          ExperimentConfig vcfg = cfg;
          if (vcfg.prior_source == "true") vcfg.prior_source = "eccpe";
          vcfg.ccpe.warmup.epochs = cfg.ccpe.warmup.epochs * 10;
          TrainOutcome res = run_training(vcfg, task, rs, "");
          acc = res.accuracy;
          mae = res.mae;
        }
        accs[v].push_back(acc);
        rows.line({std::to_string(r), std::to_string(rs), variants[v], fmt(acc),
                   mae < 0 ? "na" : fmt(mae)});
      } catch (const std::exception& e) {
        std::fprintf(stderr, "ablate repeat %d variant %s failed: %s\n", r, variants[v], e.what());
        ++failures;
      }
    }
  }

  CsvWriter summary(dir + "/ablate_summary.csv");
  summary.line({"variant", "runs", "acc_mean", "acc_sd", "gap_vs_full"});
  double full_mean = accs[0].empty() ? 0.0 : mean_of(accs[0]);
  for (int v = 0; v < 4; ++v) {
    if (accs[v].empty()) {
      summary.line({variants[v], "0", "nan", "nan", "nan"});
      continue;
    }
    double m = mean_of(accs[v]);
    summary.line({variants[v], std::to_string(int(accs[v].size())), fmt(m),
                  fmt(sample_sd(accs[v])), fmt(full_mean - m)});
  }
  write_text(dir + "/config_echo.json", config_to_json(cfg));
  return failures == 0 ? 0 : 1;
}

int cmd_report(const std::string& rows_csv, const std::string& out_dir) {
  // recompute a summary from a rows file; the numeric column is the last one
  // named accuracy / abs_error / estimated_prior
  FILE* f = std::fopen(rows_csv.c_str(), "rb");
  if (!f) throw std::runtime_error("report: cannot open " + rows_csv);
  std::string content;
  char buf[1 << 16];
  size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) content.append(buf, got);
  std::fclose(f);

  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos < content.size()) {
    size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    if (eol > pos) lines.push_back(content.substr(pos, eol - pos));
    pos = eol + 1;
  }
  if (lines.size() < 2) throw ParseError("report: " + rows_csv + " has no data rows");

  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
      size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        out.push_back(line.substr(start));
        return out;
      }
      out.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
  };

  std::vector<std::string> header = split(lines[0]);
  long col = -1;
  for (const char* want : {"accuracy", "abs_error"}) {
    for (size_t iH = 0; iH < header.size(); ++iH)
      if (header[iH] == want) col = long(iH);
    if (col >= 0) break;
  }
  if (col < 0) throw ParseError("report: no accuracy or abs_error column in " + rows_csv);

  std::vector<double> vals;
  for (size_t i = 1; i < lines.size(); ++i) {
    auto fields = split(lines[i]);
    if (long(fields.size()) <= col)
      throw ParseError("report: row " + std::to_string(i + 1) + " too short");
    vals.push_back(std::strtod(fields[size_t(col)].c_str(), nullptr));
  }

  std::string dir = resolve_out_dir(out_dir);
  CsvWriter out(dir + "/report_summary.csv");
  out.line({"source", "column", "rows", "mean", "sd"});
  out.line({rows_csv, header[size_t(col)], std::to_string(vals.size()), fmt(mean_of(vals)),
            fmt(sample_sd(vals))});
  std::printf("%s: %zu rows, %s mean %s sd %s\n", rows_csv.c_str(), vals.size(),
              header[size_t(col)].c_str(), fmt(mean_of(vals)).c_str(),
              fmt(sample_sd(vals)).c_str());
  return 0;
}

}  // namespace ubags
