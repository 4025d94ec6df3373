#pragma once
// Experiment engine behind the CLI: one config struct that round-trips through
// JSON, task builders for synthetic Gaussian and pool-backed data, and the
// command implementations. Every command writes CSV reports plus a config
// echo, derives all randomness from the config seed, and never embeds
// timestamps, so reruns are byte-identical.

#include <cstdint>
#include <string>
#include <vector>

#include "ubags/ccpe.hpp"
#include "ubags/classify.hpp"
#include "ubags/data.hpp"
#include "ubags/types.hpp"

namespace ubags {

struct GaussianSpec {
  size_t dim = 2;
  double separation = 4.0;  // distance between the class means (first axis)
  double noise_sd = 1.0;

  bool operator==(const GaussianSpec&) const = default;
};

struct DatasetSpec {
  std::string kind = "gaussian";  // "gaussian" | "csv" | "idx"
  GaussianSpec gauss;
  std::string path;                    // pool file for csv/idx
  std::vector<int> positive_classes;   // idx binarization
  size_t test_size = 4000;
  double test_prior = 0.5;  // hidden positive rate of the synthetic test pool

  bool operator==(const DatasetSpec&) const = default;
};

struct BagLayout {
  size_t m = 10;
  size_t bag_size = 2000;
  double prior_lo = 0.1;
  double prior_hi = 0.9;
  std::string size_shift = "none";  // "none" | "half-scaled" | "random-simplex"
  double tau = 1.0;

  bool operator==(const BagLayout&) const = default;
};

struct ExperimentConfig {
  DatasetSpec data;
  BagLayout bags;
  CcpeConfig ccpe;
  std::string prior_source = "eccpe";  // "ccpe" | "eccpe" | "mosm" | "true"
  std::string trainer = "umssc";       // "umssc" | "mcm"
  ScorerConfig final_scorer;           // the classifier fit (300 epochs default)
  std::string pi_d_mode = "given";     // "given" | "estimate"
  double pi_d = 0.5;
  int repeats = 1;
  uint64_t seed = 1;

  void validate() const;
};

// canonical names used in configs, reports, and CLI flags
std::string selector_name(Selector s);
Selector selector_from(const std::string& s);
std::string estimator_name(EstimatorKind e);
EstimatorKind estimator_from(const std::string& s);

bool operator==(const ScorerConfig& a, const ScorerConfig& b);
bool operator==(const KappaConfig& a, const KappaConfig& b);
bool operator==(const CcpeConfig& a, const CcpeConfig& b);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);

// One repeat's data: the bags plus a held-out labeled test pool.
struct TaskData {
  BagCollection bags;
  Matrix test_features;
  std::vector<int> test_labels;
};

TaskData build_task(const ExperimentConfig& cfg, uint64_t repeat_seed);

// Prior vector per the config's prior_source ("true" reads the bags' recorded
// priors and skips estimation).
PriorVector resolve_priors(const BagCollection& bags, const ExperimentConfig& cfg);

// Output root: relative out_dir values land under $UBAGS_OUT (default ".").
std::string resolve_out_dir(const std::string& out_dir);

// Commands; each returns 0 only when every repeat succeeded.
int cmd_synth(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_estimate(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_eval(const std::string& checkpoint_path, const std::string& pool_csv,
             const std::string& out_dir);
int cmd_ablate(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_report(const std::string& rows_csv, const std::string& out_dir);

}  // namespace ubags
