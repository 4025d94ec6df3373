#include "ubags/prior_est.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ubags/confident.hpp"
#include "ubags/numerics.hpp"
#include "ubags/rng.hpp"

namespace ubags {

namespace {

// seed streams
enum : uint64_t {
  kStreamSide1 = 1,
  kStreamSide2 = 2,
  kStreamRegroup = 3,
  kStreamSplit = 4,
  kStreamMutualPlus = 5,
  kStreamMutualMinus = 6,
};

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

// train component(+1) vs mixture(-1), return scores for both sets
std::pair<std::vector<double>, std::vector<double>> pvu_scores(const Matrix& component,
                                                               const Matrix& mixture,
                                                               ScorerConfig cfg, uint64_t seed) {
  if (component.rows == 0 || mixture.rows == 0)
    throw std::invalid_argument("pvu fit: both sample sets must be nonempty");
  Matrix X(component.rows + mixture.rows, component.cols);
  std::copy(component.data.begin(), component.data.end(), X.data.begin());
  std::copy(mixture.data.begin(), mixture.data.end(),
            X.data.begin() + long(component.data.size()));
  std::vector<int> y(component.rows, 1);
  y.insert(y.end(), mixture.rows, -1);
  cfg.seed = seed;
  Scorer s = train_binary(X, y, {}, cfg);
  return {s.predict_proba(component), s.predict_proba(mixture)};
}

struct SideOutcome {
  double value = 0.0;
  bool ok = false;
  std::string error;
};

PriorEstimate combine_sides(SideOutcome s1, SideOutcome s2, const std::string& method) {
  PriorEstimate est;
  est.method = method;
  if (s1.ok && s2.ok) {
    est.side1 = s1.value;
    est.side2 = s2.value;
    est.value = 0.5 * (s1.value + s2.value);
    return est;
  }
  if (!s1.ok && !s2.ok)
    throw UnstableTailError(method + ": both sides failed (" + s1.error + "; " + s2.error + ")");
  const SideOutcome& ok = s1.ok ? s1 : s2;
  const SideOutcome& bad = s1.ok ? s2 : s1;
  est.side1 = s1.ok ? s1.value : ok.value;
  est.side2 = s2.ok ? s2.value : ok.value;
  est.value = ok.value;
  est.flagged = true;
  est.note = std::string(s1.ok ? "negative" : "positive") + " side failed: " + bad.error;
  return est;
}

PriorEstimate two_sided(const Matrix& bag, const Matrix& conf_pos, const Matrix& conf_neg,
                        const EstimatorConfig& cfg, const std::string& method) {
  SideOutcome s1, s2;
  try {
    auto [comp, mix] = pvu_scores(conf_pos, bag, cfg.pvu, derive_seed(cfg.seed, kStreamSide1));
    s1.value = clip01(kappa_hat(comp, mix, cfg.kappa));
    s1.ok = true;
  } catch (const UnstableTailError& e) {
    s1.error = e.what();
  }
  try {
    auto [comp, mix] = pvu_scores(conf_neg, bag, cfg.pvu, derive_seed(cfg.seed, kStreamSide2));
    s2.value = clip01(1.0 - kappa_hat(comp, mix, cfg.kappa));
    s2.ok = true;
  } catch (const UnstableTailError& e) {
    s2.error = e.what();
  }
  return combine_sides(s1, s2, method);
}

}  // namespace

void KappaConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("kappa config: delta must be in (0,1)");
  if (gamma_bbe < 0.0) throw std::invalid_argument("kappa config: gamma_bbe must be >= 0");
  if (!(min_tail > 0.0 && min_tail < 1.0))
    throw std::invalid_argument("kappa config: min_tail must be in (0,1)");
}

void EstimatorConfig::validate() const {
  kappa.validate();
  pvu.validate();
  if (!(regroup_fraction > 0.0 && regroup_fraction <= 0.5))
    throw std::invalid_argument("estimator config: regroup_fraction must be in (0, 0.5]");
}

double kappa_hat(const std::vector<double>& component_scores,
                 const std::vector<double>& mixture_scores, const KappaConfig& cfg) {
  cfg.validate();
  if (component_scores.empty() || mixture_scores.empty())
    throw std::invalid_argument("kappa_hat: empty score sample");
  for (double v : component_scores)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("kappa_hat: score outside [0,1]");
  for (double v : mixture_scores)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("kappa_hat: score outside [0,1]");

  TailCurve comp = make_tail_curve(component_scores);
  TailCurve mix = make_tail_curve(mixture_scores);

  std::vector<double> candidates(component_scores);
  candidates.insert(candidates.end(), mixture_scores.begin(), mixture_scores.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  double eps_c = 0.0, eps_m = 0.0;
  if (cfg.with_slack) {
    eps_c = std::sqrt(std::log(2.0 / cfg.delta) / (2.0 * double(comp.n())));
    eps_m = std::sqrt(std::log(2.0 / cfg.delta) / (2.0 * double(mix.n())));
  }

  double best = std::numeric_limits<double>::infinity();
  for (double z : candidates) {
    double qp = tail_fraction(comp, z);
    if (qp < cfg.min_tail) continue;
    double denom = qp - eps_c;
    if (denom <= 0.0) continue;
    double qu = tail_fraction(mix, z);
    best = std::min(best, (qu + eps_m) / denom);
  }
  if (!std::isfinite(best))
    throw UnstableTailError("kappa_hat: no threshold keeps the component tail above min_tail (" +
                            std::to_string(cfg.min_tail) + ") after slack");
  return clip01(best);
}

PriorEstimate estimate_standard(const Matrix& bag, const PseudoLabeledSet& src,
                                const ConfidentSets& conf, const EstimatorConfig& cfg) {
  cfg.validate();
  if (conf.positive_idx.empty() || conf.negative_idx.empty())
    throw EmptySelectionError("estimate_standard: a confident side is empty");
  Matrix conf_pos = gather_rows(src.features, conf.positive_idx);
  Matrix conf_neg = gather_rows(src.features, conf.negative_idx);
  return two_sided(bag, conf_pos, conf_neg, cfg, "standard");
}

ConfidentSets regroup(const PseudoLabeledSet& src, const ConfidentSets& conf, double fraction,
                      const ScorerConfig& scorer_cfg, uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 0.5))
    throw std::invalid_argument("regroup: fraction must be in (0, 0.5]");
  if (conf.positive_idx.empty() || conf.negative_idx.empty())
    throw EmptySelectionError("regroup: a confident side is empty");

  Matrix conf_pos = gather_rows(src.features, conf.positive_idx);
  Matrix conf_neg = gather_rows(src.features, conf.negative_idx);
  Matrix X(conf_pos.rows + conf_neg.rows, conf_pos.cols);
  std::copy(conf_pos.data.begin(), conf_pos.data.end(), X.data.begin());
  std::copy(conf_neg.data.begin(), conf_neg.data.end(), X.data.begin() + long(conf_pos.data.size()));
  std::vector<int> y(conf_pos.rows, 1);
  y.insert(y.end(), conf_neg.rows, -1);
  ScorerConfig cfg = scorer_cfg;
  cfg.seed = derive_seed(seed, kStreamRegroup);
  Scorer s = train_binary(X, y, {}, cfg);

  // rank by the posterior of the row's own side; the k smallest cross over
  auto transplant = [&](const Matrix& rows, const std::vector<size_t>& idx, bool own_is_positive) {
    std::vector<double> p = s.predict_proba(rows);
    std::vector<size_t> order(idx.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      double pa = own_is_positive ? p[a] : 1.0 - p[a];
      double pb = own_is_positive ? p[b] : 1.0 - p[b];
      if (pa != pb) return pa < pb;
      return idx[a] < idx[b];  // deterministic tie break
    });
    size_t k = size_t(std::ceil(fraction * double(idx.size())));
    k = std::min(k, idx.size());
    std::vector<size_t> out;
    out.reserve(k);
    for (size_t i = 0; i < k; ++i) out.push_back(idx[order[i]]);
    return out;
  };

  std::vector<size_t> neg_to_pos = transplant(conf_neg, conf.negative_idx, false);
  std::vector<size_t> pos_to_neg = transplant(conf_pos, conf.positive_idx, true);

  ConfidentSets out;
  out.method = conf.method + "+regrouped";
  out.positive_idx = conf.positive_idx;
  out.positive_idx.insert(out.positive_idx.end(), neg_to_pos.begin(), neg_to_pos.end());
  out.negative_idx = conf.negative_idx;
  out.negative_idx.insert(out.negative_idx.end(), pos_to_neg.begin(), pos_to_neg.end());
  return out;
}

PriorEstimate estimate_rempe(const Matrix& bag, const PseudoLabeledSet& src,
                             const ConfidentSets& conf, const EstimatorConfig& cfg) {
  cfg.validate();
  ConfidentSets grouped = regroup(src, conf, cfg.regroup_fraction, cfg.pvu, cfg.seed);
  Matrix conf_pos = gather_rows(src.features, grouped.positive_idx);
  Matrix conf_neg = gather_rows(src.features, grouped.negative_idx);
  PriorEstimate est = two_sided(bag, conf_pos, conf_neg, cfg, "rempe");
  return est;
}

BbeArgmin bbe_argmin(const std::vector<double>& holdout_component,
                     const std::vector<double>& holdout_mixture, double delta, double gamma) {
  if (holdout_component.empty() || holdout_mixture.empty())
    throw std::invalid_argument("bbe_argmin: empty holdout");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("bbe_argmin: delta in (0,1)");
  if (gamma < 0.0) throw std::invalid_argument("bbe_argmin: gamma must be >= 0");

  TailCurve comp = make_tail_curve(holdout_component);
  TailCurve mix = make_tail_curve(holdout_mixture);
  double slack = std::sqrt(std::log(4.0 / delta) / (2.0 * double(mix.n()))) +
                 std::sqrt(std::log(4.0 / delta) / (2.0 * double(comp.n())));

  std::vector<double> candidates(holdout_component);
  candidates.insert(candidates.end(), holdout_mixture.begin(), holdout_mixture.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  BbeArgmin best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (double c : candidates) {
    double qp = tail_fraction(comp, c);
    if (qp <= 0.0) continue;  // candidates above every component score carry no signal
    double qu = tail_fraction(mix, c);
    double obj = qu / qp + (1.0 + gamma) / qp * slack;
    if (obj < best_obj) {  // strict: ties keep the smallest candidate
      best_obj = obj;
      best.c_hat = c;
      best.ratio = qu / qp;
    }
  }
  return best;
}

PriorEstimate estimate_bbe(const Matrix& bag, const PseudoLabeledSet& src,
                           const ConfidentSets& conf, const EstimatorConfig& cfg) {
  cfg.validate();
  if (conf.positive_idx.empty() || conf.negative_idx.empty())
    throw EmptySelectionError("estimate_bbe: a confident side is empty");
  if (bag.rows < 2) throw std::invalid_argument("estimate_bbe: bag needs at least 2 rows");

  auto split_half = [](size_t n, uint64_t seed) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    size_t half = n / 2;
    return std::pair<std::vector<size_t>, std::vector<size_t>>(
        {order.begin(), order.begin() + long(half)}, {order.begin() + long(half), order.end()});
  };

  auto take = [](const Matrix& X, const std::vector<size_t>& idx) { return gather_rows(X, idx); };

  auto one_side = [&](const std::vector<size_t>& conf_idx, uint64_t stream) -> double {
    if (conf_idx.size() < 2)
      throw std::invalid_argument("estimate_bbe: need at least 2 confident rows per side");
    Matrix conf_rows = gather_rows(src.features, conf_idx);
    auto [conf_fit, conf_hold] = split_half(conf_rows.rows, derive_seed(cfg.seed, kStreamSplit, stream));
    auto [bag_fit, bag_hold] = split_half(bag.rows, derive_seed(cfg.seed, kStreamSplit, stream + 16));

    Matrix fit_comp = take(conf_rows, conf_fit);
    Matrix fit_mix = take(bag, bag_fit);
    Matrix X(fit_comp.rows + fit_mix.rows, fit_comp.cols);
    std::copy(fit_comp.data.begin(), fit_comp.data.end(), X.data.begin());
    std::copy(fit_mix.data.begin(), fit_mix.data.end(), X.data.begin() + long(fit_comp.data.size()));
    std::vector<int> y(fit_comp.rows, 1);
    y.insert(y.end(), fit_mix.rows, -1);
    ScorerConfig scfg = cfg.pvu;
    scfg.seed = derive_seed(cfg.seed, stream);
    Scorer s = train_binary(X, y, {}, scfg);

    std::vector<double> z_comp = s.predict_proba(take(conf_rows, conf_hold));
    std::vector<double> z_mix = s.predict_proba(take(bag, bag_hold));
    BbeArgmin arg = bbe_argmin(z_comp, z_mix, cfg.kappa.delta, cfg.kappa.gamma_bbe);
    return arg.ratio;
  };

  PriorEstimate est;
  est.method = "bbe";
  est.side1 = clip01(one_side(conf.positive_idx, kStreamSide1));
  est.side2 = clip01(1.0 - one_side(conf.negative_idx, kStreamSide2));
  est.value = 0.5 * (est.side1 + est.side2);
  return est;
}

void mutual_forward(double pi_plus, double pi_minus, double* kappa_plus, double* kappa_minus) {
  if (!(pi_plus > 0.0 && pi_plus <= 1.0) || !(pi_minus >= 0.0 && pi_minus < 1.0) ||
      pi_minus > pi_plus)
    throw std::invalid_argument("mutual_forward: need 0 <= pi_minus <= pi_plus, pi_plus > 0, pi_minus < 1");
  *kappa_plus = (1.0 - pi_plus) / (1.0 - pi_minus);
  *kappa_minus = pi_minus / pi_plus;
}

void mutual_invert(double kappa_plus, double kappa_minus, double* pi_plus, double* pi_minus) {
  if (!(kappa_plus >= 0.0 && kappa_plus <= 1.0) || !(kappa_minus >= 0.0 && kappa_minus <= 1.0))
    throw std::invalid_argument("mutual_invert: ratios must lie in [0,1]");
  double prod = kappa_plus * kappa_minus;
  if (prod >= 1.0 - 1e-6)
    throw UnstableInversionError("mutual_invert: ratio product " + std::to_string(prod) +
                                 " too close to 1; the pair's priors are too close to separate");
  double denom = 1.0 - prod;
  *pi_plus = (1.0 - kappa_plus) / denom;
  *pi_minus = (1.0 - kappa_plus) * kappa_minus / denom;
}

std::pair<PriorEstimate, PriorEstimate> estimate_pair_mutual(const Matrix& bag_plus,
                                                             const Matrix& bag_minus,
                                                             const EstimatorConfig& cfg) {
  cfg.validate();
  // ratio of the minus bag mixed into the plus bag: minus is the component
  auto [comp_p, mix_p] =
      pvu_scores(bag_minus, bag_plus, cfg.pvu, derive_seed(cfg.seed, kStreamMutualPlus));
  double kappa_plus = kappa_hat(comp_p, mix_p, cfg.kappa);
  // and the reverse
  auto [comp_m, mix_m] =
      pvu_scores(bag_plus, bag_minus, cfg.pvu, derive_seed(cfg.seed, kStreamMutualMinus));
  double kappa_minus = kappa_hat(comp_m, mix_m, cfg.kappa);

  double pi_plus, pi_minus;
  mutual_invert(kappa_plus, kappa_minus, &pi_plus, &pi_minus);

  PriorEstimate hi, lo;
  hi.method = lo.method = "mutual";
  hi.value = hi.side1 = hi.side2 = pi_plus;
  lo.value = lo.side1 = lo.side2 = pi_minus;
  return {hi, lo};
}

}  // namespace ubags
