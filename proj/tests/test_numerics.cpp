#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ubags/numerics.hpp"
#include "ubags/rng.hpp"
#include "ubags/types.hpp"

using namespace ubags;

namespace {

// Oracle: dominant eigenpair of a symmetric 3x3 via the characteristic
// polynomial (trigonometric solution) plus null-space extraction. Independent
// of the power iteration under test.
struct Eig3 {
  double value;
  double vec[3];
};

Eig3 eig3_oracle(const double a[3][3]) {
  double p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
  double q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
  double b00 = a[0][0] - q, b11 = a[1][1] - q, b22 = a[2][2] - q;
  double p2 = b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * p1;
  double p = std::sqrt(p2 / 6.0);
  // det(B)/2 with B = (A - qI)/p
  double c00 = b00 / p, c11 = b11 / p, c22 = b22 / p;
  double c01 = a[0][1] / p, c02 = a[0][2] / p, c12 = a[1][2] / p;
  double detb = c00 * (c11 * c22 - c12 * c12) - c01 * (c01 * c22 - c12 * c02) +
                c02 * (c01 * c12 - c11 * c02);
  double r = std::clamp(detb / 2.0, -1.0, 1.0);
  double phi = std::acos(r) / 3.0;
  double lam = q + 2.0 * p * std::cos(phi);  // largest root

  // null space of (A - lam I): cross product of two independent rows
  double m[3][3] = {{a[0][0] - lam, a[0][1], a[0][2]},
                    {a[0][1], a[1][1] - lam, a[1][2]},
                    {a[0][2], a[1][2], a[2][2] - lam}};
  double best[3] = {0, 0, 0};
  double best_norm = -1.0;
  int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (auto& pr : pairs) {
    const double* u = m[pr[0]];
    const double* w = m[pr[1]];
    double cx = u[1] * w[2] - u[2] * w[1];
    double cy = u[2] * w[0] - u[0] * w[2];
    double cz = u[0] * w[1] - u[1] * w[0];
    double nn = cx * cx + cy * cy + cz * cz;
    if (nn > best_norm) {
      best_norm = nn;
      best[0] = cx;
      best[1] = cy;
      best[2] = cz;
    }
  }
  double nrm = std::sqrt(best[0] * best[0] + best[1] * best[1] + best[2] * best[2]);
  Eig3 out;
  out.value = lam;
  for (int i = 0; i < 3; ++i) out.vec[i] = best[i] / nrm;
  // orient: largest-|entry| positive, matching the library's convention
  int arg = 0;
  for (int i = 1; i < 3; ++i)
    if (std::fabs(out.vec[i]) > std::fabs(out.vec[arg])) arg = i;
  if (out.vec[arg] < 0)
    for (double& v : out.vec) v = -v;
  return out;
}

Matrix mat3(const double a[3][3]) {
  Matrix g(3, 3);
  for (size_t i = 0; i < 3; ++i)
    for (size_t j = 0; j < 3; ++j) g.at(i, j) = a[i][j];
  return g;
}

// Oracle: brute-force tail fraction by counting.
double tail_oracle(const std::vector<double>& sample, double z) {
  size_t c = 0;
  for (double v : sample) c += (v >= z);
  return double(c) / double(sample.size());
}

double gauss_pdf(double x, double mu, double var) {
  return std::exp(-(x - mu) * (x - mu) / (2.0 * var)) / std::sqrt(6.283185307179586 * var);
}

// Oracle: direct mixture log-likelihood for a fitted model.
double gmm2_loglik(const Gmm2& g, const std::vector<double>& xs) {
  double ll = 0.0;
  for (double x : xs)
    ll += std::log(g.weight[0] * gauss_pdf(x, g.mean[0], g.var[0]) +
                   g.weight[1] * gauss_pdf(x, g.mean[1], g.var[1]));
  return ll;
}

}  // namespace

TEST_CASE("top eigvec matches the 3x3 characteristic-polynomial oracle") {
  Rng rng(911);
  for (int trial = 0; trial < 50; ++trial) {
    // random PSD: A = B^T B
    double b[3][3], a[3][3] = {};
    for (auto& row : b)
      for (double& v : row) v = rng.uniform(-2.0, 2.0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) a[i][j] += b[k][i] * b[k][j];
    Eig3 want = eig3_oracle(a);
    // skip near-degenerate spectra where the dominant pair is ill-conditioned
    double tr = a[0][0] + a[1][1] + a[2][2];
    if (want.value < 0.4 * tr) continue;
    EigResult got = top_eigvec(mat3(a));
    CHECK(got.value == doctest::Approx(want.value).epsilon(1e-7));
    for (int i = 0; i < 3; ++i) CHECK(got.vec[i] == doctest::Approx(want.vec[i]).epsilon(1e-5));
  }
}

TEST_CASE("top eigvec on a diagonal matrix is exact") {
  Matrix g(2, 2);
  g.at(0, 0) = 3.0;
  g.at(1, 1) = 1.0;
  EigResult r = top_eigvec(g);
  CHECK(r.value == doctest::Approx(3.0));
  CHECK(r.vec[0] == doctest::Approx(1.0));
  CHECK(r.vec[1] == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("top eigvec direction is scale invariant") {
  double a[3][3] = {{4, 1, 0}, {1, 3, 1}, {0, 1, 2}};
  EigResult r1 = top_eigvec(mat3(a));
  for (auto& row : a)
    for (double& v : row) v *= 7.5;
  EigResult r2 = top_eigvec(mat3(a));
  CHECK(r2.value == doctest::Approx(7.5 * r1.value));
  for (int i = 0; i < 3; ++i) CHECK(r2.vec[i] == doctest::Approx(r1.vec[i]).epsilon(1e-7));
}

TEST_CASE("top eigvec rejects the zero matrix") {
  Matrix g(3, 3);
  CHECK_THROWS_AS(top_eigvec(g), DegenerateInputError);
}

TEST_CASE("gmm2 recovers well-separated components") {
  Rng rng(4242);
  std::vector<double> xs;
  for (int i = 0; i < 200; ++i) xs.push_back(rng.normal(0.0, 0.5));
  for (int i = 0; i < 200; ++i) xs.push_back(rng.normal(4.0, 0.5));
  Gmm2 g = em_fit_gmm2(xs);
  CHECK(g.mean[0] == doctest::Approx(0.0).epsilon(0.15));
  CHECK(g.mean[1] == doctest::Approx(4.0).epsilon(0.05));
  CHECK(g.mean[0] < g.mean[1]);  // component 0 has the smaller mean
  CHECK(g.weight[0] == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("gmm2 log-likelihood trace is monotone and matches the direct oracle") {
  Rng rng(7);
  std::vector<double> xs;
  for (int i = 0; i < 150; ++i) xs.push_back(rng.normal(0.0, 1.0));
  for (int i = 0; i < 100; ++i) xs.push_back(rng.normal(2.5, 0.7));
  std::vector<double> trace;
  Gmm2 g = em_fit_gmm2(xs, {}, &trace);
  REQUIRE(trace.size() >= 2);
  for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] >= trace[i - 1] - 1e-9);
  CHECK(trace.back() == doctest::Approx(gmm2_loglik(g, xs)).epsilon(1e-9));
}

TEST_CASE("gmm2 fit is invariant to input order") {
  Rng rng(99);
  std::vector<double> xs;
  for (int i = 0; i < 80; ++i) xs.push_back(rng.normal(0.0, 1.0));
  for (int i = 0; i < 80; ++i) xs.push_back(rng.normal(3.0, 1.0));
  Gmm2 a = em_fit_gmm2(xs);
  std::vector<double> rev(xs.rbegin(), xs.rend());
  Gmm2 b = em_fit_gmm2(rev);
  CHECK(a.mean[0] == b.mean[0]);
  CHECK(a.mean[1] == b.mean[1]);
  CHECK(a.var[0] == b.var[0]);
  CHECK(a.weight[0] == b.weight[0]);
}

TEST_CASE("gmm2 on a two-valued sample puts a component at each value") {
  std::vector<double> xs;
  for (int i = 0; i < 30; ++i) xs.push_back(1.0);
  for (int i = 0; i < 70; ++i) xs.push_back(5.0);
  Gmm2 g = em_fit_gmm2(xs);
  CHECK(g.mean[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(g.mean[1] == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(g.weight[0] == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("gmm2 rejects degenerate input") {
  std::vector<double> same(50, 2.0);
  CHECK_THROWS_AS(em_fit_gmm2(same), DegenerateInputError);
  std::vector<double> tiny = {1.0};
  CHECK_THROWS_AS(em_fit_gmm2(tiny), std::invalid_argument);
}

TEST_CASE("gmm2 posteriors sum to one and favor the near component") {
  Gmm2 g;
  g.mean[0] = 0.0;
  g.mean[1] = 4.0;
  g.var[0] = g.var[1] = 1.0;
  double p[2];
  gmm2_posterior(g, -0.5, p);
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[0] > 0.95);
  gmm2_posterior(g, 4.5, p);
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[1] > 0.95);
}

TEST_CASE("tail curve reproduces hand counts") {
  TailCurve c = make_tail_curve({0.1, 0.4, 0.4, 0.9});
  CHECK(tail_fraction(c, 0.0) == doctest::Approx(1.0));
  CHECK(tail_fraction(c, 0.1) == doctest::Approx(1.0));
  CHECK(tail_fraction(c, 0.4) == doctest::Approx(0.75));
  CHECK(tail_fraction(c, 0.400001) == doctest::Approx(0.25));
  CHECK(tail_fraction(c, 0.9) == doctest::Approx(0.25));
  CHECK(tail_fraction(c, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("tail curve matches brute-force counting on random samples") {
  Rng rng(31337);
  std::vector<double> xs;
  for (int i = 0; i < 257; ++i) xs.push_back(rng.uniform(-3.0, 3.0));
  xs.push_back(xs[10]);  // force ties
  xs.push_back(xs[20]);
  TailCurve c = make_tail_curve(xs);
  for (int i = 0; i < 100; ++i) {
    double z = rng.uniform(-3.5, 3.5);
    CHECK(tail_fraction(c, z) == doctest::Approx(tail_oracle(xs, z)).epsilon(1e-12));
  }
  for (double v : {xs[5], xs[10], xs[200]}) {
    CHECK(tail_fraction(c, v) == doctest::Approx(tail_oracle(xs, v)).epsilon(1e-12));
  }
}
