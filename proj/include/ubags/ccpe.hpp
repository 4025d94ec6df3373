#pragma once
// Prior-vector estimation over a whole bag collection. The single-pair run
// pseudo-labels the declared pair, warm-fits a scorer, collects confident
// examples, and estimates every bag's prior. The extended run ranks all pairs
// by the estimated gap and averages per-bag estimates over the widest pairs.

#include <cstdint>
#include <string>
#include <vector>

#include "ubags/prior_est.hpp"
#include "ubags/scorer.hpp"
#include "ubags/types.hpp"

namespace ubags {

enum class Selector { loss, confident_joint, alignment };
enum class EstimatorKind { standard, rempe, bbe };

struct CcpeConfig {
  Selector selector = Selector::alignment;
  EstimatorKind estimator = EstimatorKind::standard;
  int pair_count = 4;           // pairs the extended run re-estimates with
  double loss_threshold = 0.7;  // posterior cut for the loss selector
  ScorerConfig warmup;          // short fit feeding the selectors
  ScorerConfig pvu;             // component-vs-bag fits inside the estimators
  KappaConfig kappa;
  double regroup_fraction = 0.1;
  // Skip selection entirely and hand the whole pseudo sides to the estimator.
  // Exists for the ablation runs; degrades the estimates by design.
  bool raw_confident = false;
  uint64_t seed = 0;

  CcpeConfig() {
    warmup.arch = Arch::mlp;
    warmup.epochs = 10;
    pvu.arch = Arch::linear;
    pvu.epochs = 40;
  }

  void validate() const;
};

// One pair the run leaned on, for provenance.
struct PairUse {
  size_t hi = 0;
  size_t lo = 0;
  double gap = 0.0;  // estimated prior gap when ranked (0 for the declared run)
  bool ok = true;    // false: skipped after a failure
  std::string error;
};

struct PriorVector {
  std::vector<double> priors;            // one per bag
  std::vector<PriorEstimate> per_bag;    // estimates behind the priors
  std::vector<PairUse> pairs_used;
  std::string method;                    // "ccpe" | "eccpe" | "mosm"
  std::vector<std::string> warnings;
};

// Single-pair run on the collection's declared pair.
PriorVector run_ccpe(const BagCollection& bags, const CcpeConfig& cfg);

// Per-bag estimates from one explicit pair (hi gets pseudo label +1). Seeds
// depend only on (cfg.seed, hi, lo, bag), so the same pair always reproduces.
std::vector<PriorEstimate> estimate_with_pair(const BagCollection& bags, size_t hi, size_t lo,
                                              const CcpeConfig& cfg);

// All unordered pairs, larger estimated prior first (ties: lower index), sorted
// by descending gap; equal gaps keep index order.
std::vector<PairUse> rank_pairs(const std::vector<double>& priors);

// Extended run: initial single-pair estimates rank the pairs, the widest
// pair_count pairs are re-estimated, and per-bag results are averaged over the
// surviving pairs. Failed pairs are skipped with a warning; all pairs failing
// is an error.
PriorVector run_eccpe(const BagCollection& bags, const CcpeConfig& cfg);

// Pairwise-mutual variant: the widest pairs (ranked from the initial run) are
// estimated with the two-ratio inversion; a bag covered by several pairs gets
// the mean, and a bag covered by none keeps its initial estimate, flagged in
// the warnings.
PriorVector run_mos_m(const BagCollection& bags, const CcpeConfig& cfg);

}  // namespace ubags
