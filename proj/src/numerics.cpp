#include "ubags/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ubags {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

double log_normal_pdf(double x, double mean, double var) {
  double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

}  // namespace

Gmm2 em_fit_gmm2(const std::vector<double>& values, const Gmm2Options& opts,
                 std::vector<double>* loglik_trace) {
  size_t n = values.size();
  if (n < 2) throw std::invalid_argument("em_fit_gmm2: need at least 2 values");
  if (opts.max_iters < 1) throw std::invalid_argument("em_fit_gmm2: max_iters must be >= 1");

  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back())
    throw DegenerateInputError("em_fit_gmm2: all values identical");

  double total_mean = 0.0;
  for (double v : sorted) total_mean += v;
  total_mean /= double(n);
  double total_var = 0.0;
  for (double v : sorted) total_var += (v - total_mean) * (v - total_mean);
  total_var /= double(n);
  const double var_floor = 1e-6 * total_var;

  // init: median split of the sorted sample, moments per half
  Gmm2 g;
  size_t half = n / 2;
  auto half_moments = [&](size_t lo, size_t hi, double& mean, double& var) {
    mean = 0.0;
    for (size_t i = lo; i < hi; ++i) mean += sorted[i];
    mean /= double(hi - lo);
    var = 0.0;
    for (size_t i = lo; i < hi; ++i) var += (sorted[i] - mean) * (sorted[i] - mean);
    var /= double(hi - lo);
    var = std::max(var, var_floor);
  };
  half_moments(0, half, g.mean[0], g.var[0]);
  half_moments(half, n, g.mean[1], g.var[1]);
  g.weight[0] = double(half) / double(n);
  g.weight[1] = 1.0 - g.weight[0];

  std::vector<double> resp(n);  // responsibility of component 1
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    // E step in log space
    double ll = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double l0 = std::log(g.weight[0]) + log_normal_pdf(sorted[i], g.mean[0], g.var[0]);
      double l1 = std::log(g.weight[1]) + log_normal_pdf(sorted[i], g.mean[1], g.var[1]);
      double hi = std::max(l0, l1);
      double z = std::exp(l0 - hi) + std::exp(l1 - hi);
      ll += hi + std::log(z);
      resp[i] = std::exp(l1 - hi) / z;
    }
    if (loglik_trace) loglik_trace->push_back(ll);
    if (ll - prev_ll < opts.tol && iter > 0) break;
    prev_ll = ll;

    // M step
    double r1 = 0.0;
    for (size_t i = 0; i < n; ++i) r1 += resp[i];
    double r0 = double(n) - r1;
    // a collapsed component keeps its parameters; the other one still updates
    if (r1 > 1e-10 * double(n)) {
      double m1 = 0.0;
      for (size_t i = 0; i < n; ++i) m1 += resp[i] * sorted[i];
      m1 /= r1;
      double v1 = 0.0;
      for (size_t i = 0; i < n; ++i) v1 += resp[i] * (sorted[i] - m1) * (sorted[i] - m1);
      g.mean[1] = m1;
      g.var[1] = std::max(v1 / r1, var_floor);
    }
    if (r0 > 1e-10 * double(n)) {
      double m0 = 0.0;
      for (size_t i = 0; i < n; ++i) m0 += (1.0 - resp[i]) * sorted[i];
      m0 /= r0;
      double v0 = 0.0;
      for (size_t i = 0; i < n; ++i) v0 += (1.0 - resp[i]) * (sorted[i] - m0) * (sorted[i] - m0);
      g.mean[0] = m0;
      g.var[0] = std::max(v0 / r0, var_floor);
    }
    g.weight[1] = r1 / double(n);
    g.weight[0] = 1.0 - g.weight[1];
  }

  if (g.mean[0] > g.mean[1]) {
    std::swap(g.mean[0], g.mean[1]);
    std::swap(g.var[0], g.var[1]);
    std::swap(g.weight[0], g.weight[1]);
  }
  return g;
}

void gmm2_posterior(const Gmm2& g, double x, double out[2]) {
  double l0 = std::log(std::max(g.weight[0], 1e-300)) + log_normal_pdf(x, g.mean[0], g.var[0]);
  double l1 = std::log(std::max(g.weight[1], 1e-300)) + log_normal_pdf(x, g.mean[1], g.var[1]);
  double hi = std::max(l0, l1);
  double e0 = std::exp(l0 - hi), e1 = std::exp(l1 - hi);
  out[0] = e0 / (e0 + e1);
  out[1] = e1 / (e0 + e1);
}

EigResult top_eigvec(const Matrix& gram) {
  if (gram.rows == 0 || gram.rows != gram.cols)
    throw std::invalid_argument("top_eigvec: matrix must be square and nonempty");
  size_t d = gram.rows;

  bool all_zero = true;
  for (double v : gram.data)
    if (v != 0.0) {
      all_zero = false;
      break;
    }
  if (all_zero) throw DegenerateInputError("top_eigvec: zero matrix has no dominant eigenpair");

  // start vector deliberately skewed so it is never orthogonal to the
  // dominant eigenvector of the matrices we meet in practice
  std::vector<double> v(d), w(d);
  for (size_t i = 0; i < d; ++i) v[i] = 1.0 + 0.01 * double(i + 1) / double(d);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;

  EigResult res;
  const int max_iters = 10000;
  for (int iter = 1; iter <= max_iters; ++iter) {
    for (size_t i = 0; i < d; ++i) {
      double s = 0.0;
      const double* row = gram.row(i);
      for (size_t j = 0; j < d; ++j) s += row[j] * v[j];
      w[i] = s;
    }
    double lambda = 0.0;  // Rayleigh quotient, v is unit length
    for (size_t i = 0; i < d; ++i) lambda += v[i] * w[i];
    double resid = 0.0;
    for (size_t i = 0; i < d; ++i) {
      double r = w[i] - lambda * v[i];
      resid += r * r;
    }
    resid = std::sqrt(resid);
    res.iters = iter;
    res.value = lambda;
    res.residual = resid;
    if (lambda > 0.0 && resid <= 1e-8 * lambda) break;
    if (iter == max_iters) break;  // keep res consistent with the current v

    double wn = 0.0;
    for (double x : w) wn += x * x;
    wn = std::sqrt(wn);
    if (wn < 1e-300) {
      // fell into the null space; nudge deterministically and restart
      for (size_t i = 0; i < d; ++i) w[i] = (i % 2 == 0) ? 1.0 : -0.5;
      wn = 0.0;
      for (double x : w) wn += x * x;
      wn = std::sqrt(wn);
    }
    for (size_t i = 0; i < d; ++i) v[i] = w[i] / wn;
  }

  // sign convention: the largest-magnitude entry is positive
  size_t arg = 0;
  for (size_t i = 1; i < d; ++i)
    if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
  if (v[arg] < 0.0)
    for (double& x : v) x = -x;
  res.vec = std::move(v);
  return res;
}

TailCurve make_tail_curve(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("make_tail_curve: empty sample");
  std::sort(samples.begin(), samples.end());
  return TailCurve{std::move(samples)};
}

double tail_fraction(const TailCurve& curve, double z) {
  if (curve.sorted.empty()) throw std::invalid_argument("tail_fraction: empty curve");
  auto it = std::lower_bound(curve.sorted.begin(), curve.sorted.end(), z);
  return double(curve.sorted.end() - it) / double(curve.sorted.size());
}

}  // namespace ubags
