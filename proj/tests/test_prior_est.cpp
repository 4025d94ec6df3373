#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ubags/prior_est.hpp"
#include "ubags/rng.hpp"
#include "ubags/types.hpp"

using namespace ubags;

namespace {

// brute-force zero-slack oracle: scan the union of both samples as
// thresholds, tails counted directly.
double kappa_oracle(const std::vector<double>& comp, const std::vector<double>& mix,
                    double min_tail) {
  std::vector<double> cand = comp;
  cand.insert(cand.end(), mix.begin(), mix.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  double best = std::numeric_limits<double>::infinity();
  for (double z : cand) {
    size_t cp = 0, cm = 0;
    for (double v : comp)
      if (v >= z) ++cp;
    for (double v : mix)
      if (v >= z) ++cm;
    double qp = double(cp) / double(comp.size());
    if (qp < min_tail) continue;
    best = std::min(best, (double(cm) / double(mix.size())) / qp);
  }
  return std::min(1.0, std::max(0.0, best));
}

// brute-force oracle for the fit/holdout ratio objective
BbeArgmin bbe_oracle(const std::vector<double>& comp, const std::vector<double>& mix, double delta,
                     double gamma) {
  std::vector<double> cand = comp;
  cand.insert(cand.end(), mix.begin(), mix.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  double slack = std::sqrt(std::log(4.0 / delta) / (2.0 * double(mix.size()))) +
                 std::sqrt(std::log(4.0 / delta) / (2.0 * double(comp.size())));
  BbeArgmin best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (double c : cand) {
    size_t cp = 0, cm = 0;
    for (double v : comp)
      if (v >= c) ++cp;
    for (double v : mix)
      if (v >= c) ++cm;
    if (cp == 0) continue;
    double qp = double(cp) / double(comp.size());
    double qu = double(cm) / double(mix.size());
    double obj = qu / qp + (1.0 + gamma) / qp * slack;
    if (obj < best_obj) {
      best_obj = obj;
      best.c_hat = c;
      best.ratio = qu / qp;
    }
  }
  return best;
}

std::vector<double> random_scores(Rng& rng, size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = 0.1 * double(rng.below(11));  // grid {0.0, 0.1, ..., 1.0}
  return v;
}

KappaConfig no_slack(double min_tail = 0.1) {
  KappaConfig cfg;
  cfg.with_slack = false;
  cfg.min_tail = min_tail;
  return cfg;
}

// 1-D gaussian rows around per-label centers
Matrix cluster_rows(const std::vector<std::pair<double, size_t>>& centers, double sd,
                    uint64_t seed) {
  size_t n = 0;
  for (auto& c : centers) n += c.second;
  Matrix m(n, 1);
  Rng rng(seed);
  size_t r = 0;
  for (auto& c : centers)
    for (size_t i = 0; i < c.second; ++i) m.at(r++, 0) = c.first + sd * rng.normal();
  return m;
}

// pseudo-labeled set from explicit positive / negative row blocks, with the
// confident sets simply pointing at the blocks
struct LabeledSetup {
  PseudoLabeledSet src;
  ConfidentSets conf;
};

LabeledSetup make_setup(const Matrix& pos, const Matrix& neg) {
  LabeledSetup s;
  s.src.features = Matrix(pos.rows + neg.rows, pos.cols);
  std::copy(pos.data.begin(), pos.data.end(), s.src.features.data.begin());
  std::copy(neg.data.begin(), neg.data.end(),
            s.src.features.data.begin() + long(pos.data.size()));
  s.src.pseudo.assign(pos.rows, 1);
  s.src.pseudo.insert(s.src.pseudo.end(), neg.rows, -1);
  s.src.origin.assign(s.src.size(), 0);
  s.conf.method = "given";
  for (size_t i = 0; i < pos.rows; ++i) s.conf.positive_idx.push_back(i);
  for (size_t i = 0; i < neg.rows; ++i) s.conf.negative_idx.push_back(pos.rows + i);
  return s;
}

EstimatorConfig fast_estimator(uint64_t seed) {
  EstimatorConfig cfg;
  cfg.pvu.arch = Arch::linear;
  cfg.pvu.epochs = 80;
  cfg.pvu.learning_rate = 0.1;
  cfg.pvu.weight_decay = 0.01;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("zero-slack ratio minimum matches a hand computation") {
  // candidates and tails worked out by hand:
  //   z=0.6 gives component tail 1.0 and mixture tail 0.5 -> ratio 0.5,
  //   every other threshold gives a larger ratio.
  std::vector<double> comp = {0.9, 0.8, 0.7, 0.6};
  std::vector<double> mix = {0.9, 0.8, 0.1, 0.1};
  CHECK(kappa_hat(comp, mix, no_slack(0.25)) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("zero-slack ratio minimum equals the brute-force oracle on random grids") {
  Rng rng(31);
  for (int t = 0; t < 60; ++t) {
    size_t nc = 2 + rng.below(10), nm = 2 + rng.below(10);
    std::vector<double> comp = random_scores(rng, nc);
    std::vector<double> mix = random_scores(rng, nm);
    double min_tail = 0.05 + 0.1 * double(rng.below(4));
    double want = kappa_oracle(comp, mix, min_tail);
    if (!std::isfinite(want)) continue;
    CAPTURE(t);
    CHECK(kappa_hat(comp, mix, no_slack(min_tail)) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("a sample measured against itself has ratio one") {
  std::vector<double> s = {0.2, 0.4, 0.4, 0.7, 0.95};
  CHECK(kappa_hat(s, s, no_slack()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("slack never lowers the estimate and a singleton component is unstable") {
  Rng rng(77);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> comp = random_scores(rng, 5 + rng.below(20));
    std::vector<double> mix = random_scores(rng, 5 + rng.below(20));
    KappaConfig plain = no_slack();
    KappaConfig slack = plain;
    slack.with_slack = true;
    double a = kappa_hat(comp, mix, plain);
    double b;
    try {
      b = kappa_hat(comp, mix, slack);
    } catch (const UnstableTailError&) {
      continue;  // slack may kill every candidate at tiny n; that is its job
    }
    CHECK(b >= a - 1e-12);
  }
  // n=1 component: eps ~ 1.22 exceeds any tail, every denominator dies
  KappaConfig slack;
  CHECK_THROWS_AS(kappa_hat({0.9}, {0.5, 0.6}, slack), UnstableTailError);
}

TEST_CASE("large-sample ratio recovers a planted mixing weight") {
  // mixture = 0.3 * component + 0.7 * background, supports separated at 0.5
  Rng rng(13);
  std::vector<double> comp(20000), mix(20000);
  for (double& v : comp) v = 0.5 + 0.5 * rng.uniform01();
  for (size_t i = 0; i < mix.size(); ++i)
    mix[i] = i < 6000 ? 0.5 + 0.5 * rng.uniform01() : 0.5 * rng.uniform01();
  CHECK(kappa_hat(comp, mix, no_slack()) == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("ratio inputs are validated") {
  KappaConfig cfg = no_slack();
  CHECK_THROWS_AS(kappa_hat({}, {0.5}, cfg), std::invalid_argument);
  CHECK_THROWS_AS(kappa_hat({0.5}, {}, cfg), std::invalid_argument);
  CHECK_THROWS_AS(kappa_hat({1.5}, {0.5}, cfg), std::invalid_argument);
  KappaConfig bad = cfg;
  bad.delta = 0.0;
  CHECK_THROWS_AS(kappa_hat({0.5}, {0.5}, bad), std::invalid_argument);
  bad = cfg;
  bad.min_tail = 1.0;
  CHECK_THROWS_AS(kappa_hat({0.5}, {0.5}, bad), std::invalid_argument);
}

TEST_CASE("fit/holdout argmin matches a hand computation") {
  // slack = 2 * sqrt(ln(8)/8); the c=0.6 candidate wins with ratio 0.5
  std::vector<double> zp = {0.9, 0.8, 0.7, 0.6};
  std::vector<double> zu = {0.9, 0.8, 0.1, 0.1};
  BbeArgmin got = bbe_argmin(zp, zu, 0.5, 0.0);
  CHECK(got.c_hat == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(got.ratio == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("fit/holdout argmin equals the brute-force oracle on random grids") {
  Rng rng(47);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> comp = random_scores(rng, 2 + rng.below(15));
    std::vector<double> mix = random_scores(rng, 2 + rng.below(15));
    double delta = 0.05 + 0.2 * rng.uniform01();
    double gamma = 0.05 * double(rng.below(3));
    BbeArgmin want = bbe_oracle(comp, mix, delta, gamma);
    BbeArgmin got = bbe_argmin(comp, mix, delta, gamma);
    CAPTURE(t);
    CHECK(got.c_hat == doctest::Approx(want.c_hat).epsilon(1e-12));
    CHECK(got.ratio == doctest::Approx(want.ratio).epsilon(1e-12));
  }
}

TEST_CASE("contamination ratios invert back to the priors they came from") {
  // hand case: ratios (0.25, 0.5) come from priors (6/7, 3/7)
  double pp, pm;
  mutual_invert(0.25, 0.5, &pp, &pm);
  CHECK(pp == doctest::Approx(6.0 / 7.0).epsilon(1e-12));
  CHECK(pm == doctest::Approx(3.0 / 7.0).epsilon(1e-12));

  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    double lo = rng.uniform(0.0, 0.89);
    double hi = lo + 0.01 + (0.99 - lo - 0.01) * rng.uniform01();
    double kp, km;
    mutual_forward(hi, lo, &kp, &km);
    double rp, rm;
    mutual_invert(kp, km, &rp, &rm);
    CAPTURE(t);
    CHECK(std::abs(rp - hi) <= 1e-9);
    CHECK(std::abs(rm - lo) <= 1e-9);
  }

  CHECK_THROWS_AS(mutual_invert(1.0, 1.0, &pp, &pm), UnstableInversionError);
  CHECK_THROWS_AS(mutual_invert(0.9999999, 1.0, &pp, &pm), UnstableInversionError);
  CHECK_THROWS_AS(mutual_forward(0.3, 0.7, &pp, &pm), std::invalid_argument);
}

TEST_CASE("two-sided estimate lands near a separable bag's prior and is deterministic") {
  Matrix conf_pos = cluster_rows({{2.0, 60}}, 0.4, 101);
  Matrix conf_neg = cluster_rows({{-2.0, 60}}, 0.4, 102);
  LabeledSetup s = make_setup(conf_pos, conf_neg);
  Matrix bag = cluster_rows({{2.0, 180}, {-2.0, 120}}, 0.4, 103);  // prior 0.6

  EstimatorConfig cfg = fast_estimator(5);
  PriorEstimate est = estimate_standard(bag, s.src, s.conf, cfg);
  CHECK(est.method == "standard");
  CHECK(!est.flagged);
  CHECK(est.value == doctest::Approx(0.6).epsilon(0.18));
  CHECK(est.side1 == doctest::Approx(0.6).epsilon(0.3));
  CHECK(est.side2 == doctest::Approx(0.6).epsilon(0.3));
  CHECK(est.value == doctest::Approx(0.5 * (est.side1 + est.side2)).epsilon(1e-12));

  PriorEstimate again = estimate_standard(bag, s.src, s.conf, cfg);
  CHECK(again.value == est.value);  // bitwise: same seeds, same arithmetic
}

TEST_CASE("a side that cannot stabilize is flagged and the other side carries the value") {
  Matrix conf_pos = cluster_rows({{2.0, 1}}, 0.0, 104);  // singleton: slack kills side 1
  Matrix conf_neg = cluster_rows({{-2.0, 60}}, 0.4, 105);
  LabeledSetup s = make_setup(conf_pos, conf_neg);
  Matrix bag = cluster_rows({{2.0, 120}, {-2.0, 80}}, 0.4, 106);

  PriorEstimate est = estimate_standard(bag, s.src, s.conf, fast_estimator(6));
  CHECK(est.flagged);
  CHECK(est.note.find("positive side failed") != std::string::npos);
  CHECK(est.value == est.side2);
}

TEST_CASE("regrouping adds the crossers on top of the originals, deterministically") {
  Matrix conf_pos = cluster_rows({{2.0, 10}}, 0.5, 107);
  Matrix conf_neg = cluster_rows({{-2.0, 20}}, 0.5, 108);
  LabeledSetup s = make_setup(conf_pos, conf_neg);

  ScorerConfig pvu;
  pvu.arch = Arch::linear;
  pvu.epochs = 40;
  ConfidentSets grouped = regroup(s.src, s.conf, 0.25, pvu, 9);
  CHECK(grouped.method == "given+regrouped");
  // ceil(0.25 * 20) = 5 negatives cross to the positive side, ceil(0.25*10)=3 back
  REQUIRE(grouped.positive_idx.size() == 15);
  REQUIRE(grouped.negative_idx.size() == 23);
  for (size_t i = 0; i < 10; ++i) CHECK(grouped.positive_idx[i] == s.conf.positive_idx[i]);
  for (size_t i = 10; i < 15; ++i) {
    bool from_neg = std::find(s.conf.negative_idx.begin(), s.conf.negative_idx.end(),
                              grouped.positive_idx[i]) != s.conf.negative_idx.end();
    CHECK(from_neg);
  }
  ConfidentSets again = regroup(s.src, s.conf, 0.25, pvu, 9);
  CHECK(again.positive_idx == grouped.positive_idx);
  CHECK(again.negative_idx == grouped.negative_idx);

  CHECK_THROWS_AS(regroup(s.src, s.conf, 0.0, pvu, 9), std::invalid_argument);
  CHECK_THROWS_AS(regroup(s.src, s.conf, 0.6, pvu, 9), std::invalid_argument);
}

TEST_CASE("regrouping repairs a truncated confident support") {
  // the positive class has two clusters; the confident positives hold only
  // one, while a slice of the other ended up on the negative side. the plain
  // estimate misses that cluster's mass; the regrouped variant transplants it
  // back and lands closer to the truth.
  Matrix conf_pos = cluster_rows({{2.0, 40}}, 0.3, 109);
  Matrix conf_neg = cluster_rows({{-2.0, 40}, {0.5, 12}}, 0.3, 110);
  LabeledSetup s = make_setup(conf_pos, conf_neg);
  // bag: 60% positives split across both clusters, 40% negatives
  Matrix bag = cluster_rows({{2.0, 250}, {0.5, 110}, {-2.0, 240}}, 0.3, 111);
  double truth = 0.6;

  EstimatorConfig cfg = fast_estimator(17);
  double err_standard = std::abs(estimate_standard(bag, s.src, s.conf, cfg).value - truth);
  double err_regrouped = std::abs(estimate_rempe(bag, s.src, s.conf, cfg).value - truth);
  CHECK(err_regrouped < err_standard);
}

TEST_CASE("split fit/holdout estimate lands near a separable bag's prior") {
  Matrix conf_pos = cluster_rows({{2.0, 80}}, 0.4, 112);
  Matrix conf_neg = cluster_rows({{-2.0, 80}}, 0.4, 113);
  LabeledSetup s = make_setup(conf_pos, conf_neg);
  Matrix bag = cluster_rows({{2.0, 240}, {-2.0, 160}}, 0.4, 114);  // prior 0.6

  PriorEstimate est = estimate_bbe(bag, s.src, s.conf, fast_estimator(21));
  CHECK(est.method == "bbe");
  CHECK(est.value == doctest::Approx(0.6).epsilon(0.2));
  PriorEstimate again = estimate_bbe(bag, s.src, s.conf, fast_estimator(21));
  CHECK(again.value == est.value);
}

TEST_CASE("pairwise mutual estimation recovers both priors of a separable pair") {
  Matrix bag_hi = cluster_rows({{2.0, 1200}, {-2.0, 300}}, 0.5, 115);  // prior 0.8
  Matrix bag_lo = cluster_rows({{2.0, 300}, {-2.0, 1200}}, 0.5, 116);  // prior 0.2

  EstimatorConfig cfg = fast_estimator(33);
  auto [hi, lo] = estimate_pair_mutual(bag_hi, bag_lo, cfg);
  CHECK(hi.method == "mutual");
  CHECK(hi.value == doctest::Approx(0.8).epsilon(0.15));
  CHECK(lo.value == doctest::Approx(0.2).epsilon(0.75));  // absolute 0.15 on a small value
  CHECK(std::abs(lo.value - 0.2) <= 0.15);
  CHECK(hi.value > lo.value);
}

TEST_CASE("a pair with identical composition refuses to invert") {
  Matrix a = cluster_rows({{2.0, 300}, {-2.0, 300}}, 0.5, 117);
  Matrix b = cluster_rows({{2.0, 300}, {-2.0, 300}}, 0.5, 118);
  CHECK_THROWS_AS(estimate_pair_mutual(a, b, fast_estimator(41)), UnstableInversionError);
}
