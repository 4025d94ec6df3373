#pragma once
// Small numeric kernels the selectors and estimators are built on: a scalar
// two-component Gaussian mixture fit, a dominant-eigenpair solver, and exact
// empirical tail curves.

#include <vector>

#include "ubags/types.hpp"

namespace ubags {

// Two-component scalar Gaussian mixture; component 0 has the smaller mean.
struct Gmm2 {
  double weight[2] = {0.5, 0.5};
  double mean[2] = {0.0, 0.0};
  double var[2] = {1.0, 1.0};
};

struct Gmm2Options {
  int max_iters = 200;
  double tol = 1e-8;  // stop when log-likelihood improves by less than this
};

// EM fit. Init is pinned (sort, split at the median, per-half moments), so the
// result depends only on the multiset of values. Variances are floored at
// 1e-6 times the overall sample variance. Throws DegenerateInputError when all
// values coincide, std::invalid_argument for n < 2.
Gmm2 em_fit_gmm2(const std::vector<double>& values, const Gmm2Options& opts = {},
                 std::vector<double>* loglik_trace = nullptr);

// Posterior responsibility of each component at x; out sums to 1.
void gmm2_posterior(const Gmm2& g, double x, double out[2]);

struct EigResult {
  std::vector<double> vec;  // unit length; largest-magnitude entry positive
  double value = 0.0;
  int iters = 0;
  double residual = 0.0;  // ||G v - value * v||_2 at return
};

// Dominant eigenpair of a symmetric PSD matrix by power iteration. Stops when
// the residual drops to 1e-8 * eigenvalue or after 10000 iterations. Throws
// DegenerateInputError on the zero matrix.
EigResult top_eigvec(const Matrix& gram);

// Empirical upper tail of a sample: fraction(z) = #(samples >= z) / n, exact.
struct TailCurve {
  std::vector<double> sorted;  // ascending
  size_t n() const { return sorted.size(); }
};

TailCurve make_tail_curve(std::vector<double> samples);
double tail_fraction(const TailCurve& curve, double z);

}  // namespace ubags
