#pragma once
// Classifier training that consumes estimated priors. Two routes:
//  - a transition layer that rewrites the model's positive-class probability
//    into per-bag membership probabilities, trained with log loss on bag ids;
//  - a pairing of bags into high/low-prior couples trained on a weighted sum
//    of bias-corrected pairwise risks.

#include <array>
#include <cstdint>
#include <vector>

#include "ubags/prior_est.hpp"
#include "ubags/scorer.hpp"
#include "ubags/types.hpp"

namespace ubags {

// T_j(eta) = (a_j * eta + b_j) / (c * eta + d); sum_j T_j is identically 1
// because c and d are the coefficient sums.
struct TransitionLayer {
  std::vector<double> a;
  std::vector<double> b;
  double c = 0.0;
  double d = 0.0;

  size_t m() const { return a.size(); }
  double eval(size_t j, double eta) const { return (a[j] * eta + b[j]) / (c * eta + d); }
  double deriv(size_t j, double eta) const {
    double den = c * eta + d;
    return (a[j] * d - c * b[j]) / (den * den);
  }
};

// a_j = rho_j (prior_j - pi_d), b_j = rho_j pi_d (1 - prior_j), rho_j by size.
// Throws SingularTransitionError when the denominator is not positive on [0,1].
TransitionLayer build_transition(const std::vector<double>& priors,
                                 const std::vector<size_t>& sizes, double pi_d);

// Mean of -log T_{bag_of[i]}(sigmoid(score_i)), probabilities floored at
// 1e-12; optionally fills d(mean loss)/d(score_i).
double surrogate_loss(const TransitionLayer& T, const std::vector<double>& scores,
                      const std::vector<size_t>& bag_of, std::vector<double>* dloss_dscore = nullptr);

// Fit a scorer on all bags with bag ids as surrogate labels.
Scorer train_umssc(const BagCollection& bags, const std::vector<double>& priors, double pi_d,
                   const ScorerConfig& cfg);

struct McmPairing {
  std::vector<std::array<size_t, 2>> pairs;  // {higher-prior bag, lower-prior bag}
  std::vector<double> weights;               // normalized to sum 1
  long dropped = -1;                         // bag left out when m is odd
  double objective = 0.0;                    // sum of nbar * gap^2 over the pairs
};

// Pairing maximizing sum_t nbar_t * gap_t^2 with nbar the harmonic pair size.
// Equal sizes use the exact sorted rule (largest prior with smallest); unequal
// sizes search all perfect matchings up to m = 10 and fall back to a greedy
// match above that. Odd m drops the bag whose exclusion leaves the largest
// objective. Throws std::invalid_argument when every gap is zero.
McmPairing pair_bags_mcm(const std::vector<double>& priors, const std::vector<size_t>& sizes);

// Bias-corrected risk of one high/low pair with contamination ratios
// theta_hi > theta_lo and test-time positive prior pi_d. With correction, the
// two class-risk terms are clamped at zero. Optionally fills the gradient of
// the risk with respect to each score.
double uu_c_risk(const std::vector<double>& scores_hi, const std::vector<double>& scores_lo,
                 double theta_hi, double theta_lo, double pi_d, bool correction,
                 std::vector<double>* grad_hi = nullptr, std::vector<double>* grad_lo = nullptr);

// Fit a scorer on the weighted sum of pairwise corrected risks over the
// pairing chosen by pair_bags_mcm.
Scorer train_mcm(const BagCollection& bags, const std::vector<double>& priors, double pi_d,
                 const ScorerConfig& cfg);

// Prior of an unlabeled feature set, treated as one extra bag and estimated
// with the standard two-sided estimator from the given confident sets.
double estimate_test_prior(const Matrix& test_features, const PseudoLabeledSet& src,
                           const ConfidentSets& conf, const EstimatorConfig& cfg);

// Fraction of rows whose thresholded probability matches the labels.
double accuracy(const Scorer& s, const Matrix& X, const std::vector<int>& y);

}  // namespace ubags
