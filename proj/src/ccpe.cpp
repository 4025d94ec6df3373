#include "ubags/ccpe.hpp"

#include <algorithm>
#include <cmath>

#include "ubags/confident.hpp"
#include "ubags/rng.hpp"

namespace ubags {

namespace {

// seed streams
enum : uint64_t { kStreamWarmup = 21, kStreamEstimator = 22, kStreamMutual = 23 };

void validate_collection(const BagCollection& bags) {
  if (bags.m() < 2) throw std::invalid_argument("bag collection: need at least 2 bags");
  if (bags.declared_hi >= bags.m() || bags.declared_lo >= bags.m() ||
      bags.declared_hi == bags.declared_lo)
    throw std::invalid_argument("bag collection: declared pair indices invalid");
  for (const auto& b : bags.bags)
    if (b.size() == 0) throw std::invalid_argument("bag collection: empty bag");
}

ConfidentSets run_selector(const PseudoLabeledSet& set, const Scorer& warm, const CcpeConfig& cfg) {
  switch (cfg.selector) {
    case Selector::loss:
      return select_by_loss(set, warm, cfg.loss_threshold);
    case Selector::confident_joint:
      return select_by_confident_joint(set, warm);
    case Selector::alignment:
      return select_by_alignment(set, warm);
  }
  throw std::logic_error("unknown selector");
}

PriorEstimate run_estimator(const Matrix& bag, const PseudoLabeledSet& set,
                            const ConfidentSets& conf, const CcpeConfig& cfg, uint64_t seed) {
  EstimatorConfig ecfg;
  ecfg.kappa = cfg.kappa;
  ecfg.pvu = cfg.pvu;
  ecfg.regroup_fraction = cfg.regroup_fraction;
  ecfg.seed = seed;
  switch (cfg.estimator) {
    case EstimatorKind::standard:
      return estimate_standard(bag, set, conf, ecfg);
    case EstimatorKind::rempe:
      return estimate_rempe(bag, set, conf, ecfg);
    case EstimatorKind::bbe:
      return estimate_bbe(bag, set, conf, ecfg);
  }
  throw std::logic_error("unknown estimator");
}

}  // namespace

void CcpeConfig::validate() const {
  if (pair_count < 1) throw std::invalid_argument("ccpe config: pair_count must be >= 1");
  if (!(loss_threshold > 0.0 && loss_threshold < 1.0))
    throw std::invalid_argument("ccpe config: loss_threshold must be in (0,1)");
  warmup.validate();
  pvu.validate();
  kappa.validate();
  if (!(regroup_fraction > 0.0 && regroup_fraction <= 0.5))
    throw std::invalid_argument("ccpe config: regroup_fraction must be in (0, 0.5]");
}

std::vector<PriorEstimate> estimate_with_pair(const BagCollection& bags, size_t hi, size_t lo,
                                              const CcpeConfig& cfg) {
  cfg.validate();
  validate_collection(bags);
  if (hi >= bags.m() || lo >= bags.m() || hi == lo)
    throw std::invalid_argument("estimate_with_pair: bad pair");

  PseudoLabeledSet set = assign_pseudo_labels(bags.bags[hi], bags.bags[lo], hi, lo);
  ConfidentSets conf;
  if (cfg.raw_confident) {
    for (size_t i = 0; i < set.pseudo.size(); ++i)
      (set.pseudo[i] == 1 ? conf.positive_idx : conf.negative_idx).push_back(i);
    conf.method = "raw";
  } else {
    ScorerConfig wcfg = cfg.warmup;
    wcfg.seed = derive_seed(cfg.seed, kStreamWarmup, hi, lo);
    Scorer warm = train_binary(set.features, set.pseudo, {}, wcfg);
    conf = run_selector(set, warm, cfg);
  }

  std::vector<PriorEstimate> out;
  out.reserve(bags.m());
  for (size_t j = 0; j < bags.m(); ++j)
    out.push_back(run_estimator(bags.bags[j].features, set, conf, cfg,
                                derive_seed(cfg.seed, kStreamEstimator, hi * 4096 + lo, j)));
  return out;
}

PriorVector run_ccpe(const BagCollection& bags, const CcpeConfig& cfg) {
  PriorVector pv;
  pv.method = "ccpe";
  pv.per_bag = estimate_with_pair(bags, bags.declared_hi, bags.declared_lo, cfg);
  pv.priors.reserve(pv.per_bag.size());
  for (const auto& e : pv.per_bag) pv.priors.push_back(e.value);
  pv.pairs_used.push_back({bags.declared_hi, bags.declared_lo, 0.0, true, ""});
  for (size_t j = 0; j < pv.per_bag.size(); ++j)
    if (pv.per_bag[j].flagged)
      pv.warnings.push_back("bag " + std::to_string(j) + ": " + pv.per_bag[j].note);
  return pv;
}

std::vector<PairUse> rank_pairs(const std::vector<double>& priors) {
  size_t m = priors.size();
  if (m < 2) throw std::invalid_argument("rank_pairs: need at least 2 priors");
  std::vector<PairUse> pairs;
  pairs.reserve(m * (m - 1) / 2);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = i + 1; j < m; ++j) {
      PairUse p;
      // larger estimated prior goes first; ties keep the lower index first
      if (priors[j] > priors[i]) {
        p.hi = j;
        p.lo = i;
      } else {
        p.hi = i;
        p.lo = j;
      }
      p.gap = std::fabs(priors[i] - priors[j]);
      pairs.push_back(p);
    }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const PairUse& a, const PairUse& b) { return a.gap > b.gap; });
  return pairs;
}

PriorVector run_eccpe(const BagCollection& bags, const CcpeConfig& cfg) {
  PriorVector init = run_ccpe(bags, cfg);
  std::vector<PairUse> ranked = rank_pairs(init.priors);

  PriorVector pv;
  pv.method = "eccpe";
  pv.warnings = init.warnings;
  size_t want = size_t(cfg.pair_count);
  if (want > ranked.size()) {
    pv.warnings.push_back("pair_count " + std::to_string(want) + " exceeds the " +
                          std::to_string(ranked.size()) + " available pairs; using all");
    want = ranked.size();
  }

  size_t m = bags.m();
  std::vector<double> sum(m, 0.0);
  std::vector<double> sum_s1(m, 0.0), sum_s2(m, 0.0);
  std::vector<int> flagged(m, 0);
  size_t survived = 0;
  for (size_t t = 0; t < want; ++t) {
    PairUse pair = ranked[t];
    try {
      std::vector<PriorEstimate> ests = estimate_with_pair(bags, pair.hi, pair.lo, cfg);
      for (size_t j = 0; j < m; ++j) {
        sum[j] += ests[j].value;
        sum_s1[j] += ests[j].side1;
        sum_s2[j] += ests[j].side2;
        flagged[j] += ests[j].flagged ? 1 : 0;
      }
      ++survived;
    } catch (const std::runtime_error& e) {
      pair.ok = false;
      pair.error = e.what();
      pv.warnings.push_back("pair (" + std::to_string(pair.hi) + "," + std::to_string(pair.lo) +
                            ") skipped: " + e.what());
    }
    pv.pairs_used.push_back(pair);
  }
  if (survived == 0)
    throw std::runtime_error("run_eccpe: every ranked pair failed; no estimates to average");

  pv.priors.resize(m);
  pv.per_bag.resize(m);
  for (size_t j = 0; j < m; ++j) {
    pv.priors[j] = sum[j] / double(survived);
    pv.per_bag[j].value = pv.priors[j];
    pv.per_bag[j].side1 = sum_s1[j] / double(survived);
    pv.per_bag[j].side2 = sum_s2[j] / double(survived);
    pv.per_bag[j].method = "eccpe";
    pv.per_bag[j].flagged = flagged[j] > 0;
    if (flagged[j] > 0)
      pv.per_bag[j].note = std::to_string(flagged[j]) + " contributing pair estimate(s) flagged";
  }
  return pv;
}

PriorVector run_mos_m(const BagCollection& bags, const CcpeConfig& cfg) {
  PriorVector init = run_ccpe(bags, cfg);
  std::vector<PairUse> ranked = rank_pairs(init.priors);

  PriorVector pv;
  pv.method = "mosm";
  pv.warnings = init.warnings;
  size_t want = std::min(size_t(cfg.pair_count), ranked.size());
  if (size_t(cfg.pair_count) > ranked.size())
    pv.warnings.push_back("pair_count exceeds available pairs; using all");

  size_t m = bags.m();
  std::vector<double> sum(m, 0.0);
  std::vector<int> count(m, 0);
  for (size_t t = 0; t < want; ++t) {
    PairUse pair = ranked[t];
    EstimatorConfig ecfg;
    ecfg.kappa = cfg.kappa;
    ecfg.pvu = cfg.pvu;
    ecfg.regroup_fraction = cfg.regroup_fraction;
    ecfg.seed = derive_seed(cfg.seed, kStreamMutual, pair.hi, pair.lo);
    try {
      auto [est_hi, est_lo] =
          estimate_pair_mutual(bags.bags[pair.hi].features, bags.bags[pair.lo].features, ecfg);
      sum[pair.hi] += est_hi.value;
      count[pair.hi] += 1;
      sum[pair.lo] += est_lo.value;
      count[pair.lo] += 1;
    } catch (const std::runtime_error& e) {
      pair.ok = false;
      pair.error = e.what();
      pv.warnings.push_back("pair (" + std::to_string(pair.hi) + "," + std::to_string(pair.lo) +
                            ") skipped: " + e.what());
    }
    pv.pairs_used.push_back(pair);
  }

  pv.priors.resize(m);
  pv.per_bag.resize(m);
  for (size_t j = 0; j < m; ++j) {
    if (count[j] > 0) {
      pv.priors[j] = sum[j] / double(count[j]);
      pv.per_bag[j].method = "mutual";
      pv.per_bag[j].value = pv.priors[j];
      pv.per_bag[j].side1 = pv.per_bag[j].side2 = pv.priors[j];
    } else {
      pv.priors[j] = init.priors[j];
      pv.per_bag[j] = init.per_bag[j];
      pv.per_bag[j].flagged = true;
      pv.warnings.push_back("bag " + std::to_string(j) +
                            " covered by no surviving pair; initial estimate kept");
    }
  }
  return pv;
}

}  // namespace ubags
