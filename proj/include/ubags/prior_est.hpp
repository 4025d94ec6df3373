#pragma once
// Mixture-proportion estimation. Every estimator reduces to tail-ratio
// searches over one-dimensional scores from a component-vs-bag scorer fit:
//   kappa_hat(component, mixture) = min over thresholds z of the mixture tail
//   over the component tail, optionally padded with finite-sample slack.
// A bag's positive prior is estimated from the confident-positive side, its
// complement from the confident-negative side, and the two are averaged.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ubags/scorer.hpp"
#include "ubags/types.hpp"

namespace ubags {

struct KappaConfig {
  double delta = 0.1;       // tail-bound confidence level, in (0,1)
  double gamma_bbe = 0.01;  // extra multiplier on the fit/holdout objective's slack
  double min_tail = 0.1;    // smallest component tail a threshold may use, in (0,1)
  bool with_slack = true;   // false: plain ratio minimum (exact oracle mode)

  void validate() const;
};

// Minimum over candidate thresholds z (the union of both score samples) of
//   (mixture_tail(z) + eps_mix) / (component_tail(z) - eps_comp),
// restricted to component_tail(z) >= min_tail, clipped to [0,1]. With slack,
// eps = sqrt(ln(2/delta) / (2n)) per sample set. Throws UnstableTailError when
// no threshold survives the restriction.
double kappa_hat(const std::vector<double>& component_scores,
                 const std::vector<double>& mixture_scores, const KappaConfig& cfg);

struct PriorEstimate {
  double value = 0.0;
  double side1 = 0.0;  // from the confident-positive reference
  double side2 = 0.0;  // from the confident-negative reference (complemented)
  std::string method;
  bool flagged = false;  // one side failed; value is the surviving side
  std::string note;
};

struct EstimatorConfig {
  KappaConfig kappa;
  ScorerConfig pvu;               // component-vs-bag scorer fits
  double regroup_fraction = 0.1;  // transplant share for the regrouped variant
  uint64_t seed = 0;

  void validate() const;
};

// Two-sided estimate for one bag. src/conf hold the confident examples; bag is
// the unlabeled bag under estimation.
PriorEstimate estimate_standard(const Matrix& bag, const PseudoLabeledSet& src,
                                const ConfidentSets& conf, const EstimatorConfig& cfg);

// Copy the fraction of confident negatives that look most positive (under a
// positives-vs-negatives scorer) into the positive side, and symmetrically the
// most negative-looking positives into the negative side. The returned sets
// deliberately cross pseudo sides; fraction must lie in (0, 0.5].
ConfidentSets regroup(const PseudoLabeledSet& src, const ConfidentSets& conf, double fraction,
                      const ScorerConfig& scorer_cfg, uint64_t seed);

// estimate_standard on the regrouped sets.
PriorEstimate estimate_rempe(const Matrix& bag, const PseudoLabeledSet& src,
                             const ConfidentSets& conf, const EstimatorConfig& cfg);

struct BbeArgmin {
  double c_hat = 0.0;   // chosen threshold
  double ratio = 0.0;   // mixture tail over component tail at c_hat
};

// Fit/holdout ratio objective: minimize over candidates c (sample points with
// a positive component tail)
//   qu(c)/qp(c) + ((1+gamma)/qp(c)) * (sqrt(ln(4/delta)/(2 n_u)) + sqrt(ln(4/delta)/(2 n_p))).
// Ties keep the smallest c.
BbeArgmin bbe_argmin(const std::vector<double>& holdout_component,
                     const std::vector<double>& holdout_mixture, double delta, double gamma);

// Two-sided estimate built on bbe_argmin: each side splits its confident rows
// and the bag 50/50 into fit/holdout halves, trains the scorer on the fit
// halves, and evaluates the objective on the holdouts.
PriorEstimate estimate_bbe(const Matrix& bag, const PseudoLabeledSet& src,
                           const ConfidentSets& conf, const EstimatorConfig& cfg);

// Forward map from a pair's true priors (pi_minus <= pi_plus, pi_plus > 0,
// pi_minus < 1) to the two cross-contamination ratios.
void mutual_forward(double pi_plus, double pi_minus, double* kappa_plus, double* kappa_minus);

// Inversion of the forward map. Throws UnstableInversionError when
// kappa_plus * kappa_minus >= 1 - 1e-6.
void mutual_invert(double kappa_plus, double kappa_minus, double* pi_plus, double* pi_minus);

// Pairwise estimator that needs no confident sets: each bag of the pair serves
// as the component against the other as mixture, and the two ratio estimates
// are inverted into (pi_plus, pi_minus).
std::pair<PriorEstimate, PriorEstimate> estimate_pair_mutual(const Matrix& bag_plus,
                                                             const Matrix& bag_minus,
                                                             const EstimatorConfig& cfg);

}  // namespace ubags
