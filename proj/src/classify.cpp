#include "ubags/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ubags/rng.hpp"

namespace ubags {

namespace {

constexpr double kProbFloor = 1e-12;

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

double nbar(size_t n_hi, size_t n_lo) {
  return 2.0 * double(n_hi) * double(n_lo) / double(n_hi + n_lo);
}

double pair_term(const std::vector<double>& priors, const std::vector<size_t>& sizes, size_t i,
                 size_t j) {
  double gap = priors[i] - priors[j];
  return nbar(sizes[i], sizes[j]) * gap * gap;
}

// exhaustive perfect-matching search; the first item pairs with each remaining
// one in turn, so every matching is visited exactly once
void enumerate_matchings(const std::vector<double>& priors, const std::vector<size_t>& sizes,
                         const std::vector<size_t>& items, std::vector<std::array<size_t, 2>>& cur,
                         double cur_total, double& best_total,
                         std::vector<std::array<size_t, 2>>& best_pairs) {
  if (items.empty()) {
    if (cur_total > best_total) {
      best_total = cur_total;
      best_pairs = cur;
    }
    return;
  }
  size_t a = items[0];
  for (size_t k = 1; k < items.size(); ++k) {
    size_t b = items[k];
    std::vector<size_t> rest;
    rest.reserve(items.size() - 2);
    for (size_t t = 1; t < items.size(); ++t)
      if (t != k) rest.push_back(items[t]);
    cur.push_back({a, b});
    enumerate_matchings(priors, sizes, rest, cur, cur_total + pair_term(priors, sizes, a, b),
                        best_total, best_pairs);
    cur.pop_back();
  }
}

}  // namespace

TransitionLayer build_transition(const std::vector<double>& priors,
                                 const std::vector<size_t>& sizes, double pi_d) {
  if (priors.size() != sizes.size() || priors.size() < 2)
    throw std::invalid_argument("build_transition: need matching priors/sizes for >= 2 bags");
  if (!(pi_d > 0.0 && pi_d < 1.0))
    throw std::invalid_argument("build_transition: pi_d must be in (0,1)");
  size_t total = 0;
  for (size_t n : sizes) {
    if (n == 0) throw std::invalid_argument("build_transition: zero-size bag");
    total += n;
  }
  for (double p : priors)
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("build_transition: prior outside [0,1]");

  TransitionLayer T;
  T.a.resize(priors.size());
  T.b.resize(priors.size());
  for (size_t j = 0; j < priors.size(); ++j) {
    double rho = double(sizes[j]) / double(total);
    T.a[j] = rho * (priors[j] - pi_d);
    T.b[j] = rho * pi_d * (1.0 - priors[j]);
  }
  // the sums ARE the denominator coefficients, same accumulation order
  T.c = 0.0;
  T.d = 0.0;
  for (double v : T.a) T.c += v;
  for (double v : T.b) T.d += v;

  // denominator is linear in eta; positivity at both ends keeps it positive
  if (!(T.d > 0.0) || !(T.c + T.d > 0.0))
    throw SingularTransitionError("build_transition: denominator not positive on [0,1]");
  return T;
}

double surrogate_loss(const TransitionLayer& T, const std::vector<double>& scores,
                      const std::vector<size_t>& bag_of, std::vector<double>* dloss_dscore) {
  if (scores.size() != bag_of.size())
    throw std::invalid_argument("surrogate_loss: scores and bag ids differ");
  if (scores.empty()) throw std::invalid_argument("surrogate_loss: empty batch");
  double n = double(scores.size());
  if (dloss_dscore) dloss_dscore->assign(scores.size(), 0.0);

  double total = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    size_t j = bag_of[i];
    if (j >= T.m()) throw std::invalid_argument("surrogate_loss: bag id out of range");
    double eta = sigmoid(scores[i]);
    double p = T.eval(j, eta);
    if (p > kProbFloor) {
      total += -std::log(p);
      if (dloss_dscore)
        (*dloss_dscore)[i] = -(T.deriv(j, eta) / p) * eta * (1.0 - eta) / n;
    } else {
      total += -std::log(kProbFloor);
      // flat region of the floor: no gradient
    }
  }
  return total / n;
}

Scorer train_umssc(const BagCollection& bags, const std::vector<double>& priors, double pi_d,
                   const ScorerConfig& cfg) {
  if (priors.size() != bags.m())
    throw std::invalid_argument("train_umssc: one prior per bag required");
  std::vector<size_t> sizes;
  for (const auto& b : bags.bags) sizes.push_back(b.size());
  TransitionLayer T = build_transition(priors, sizes, pi_d);

  size_t total = 0;
  for (size_t n : sizes) total += n;
  Matrix X(total, bags.bags[0].features.cols);
  std::vector<size_t> bag_of(total);
  size_t at = 0;
  for (size_t j = 0; j < bags.m(); ++j) {
    const Matrix& F = bags.bags[j].features;
    std::copy(F.data.begin(), F.data.end(), X.data.begin() + long(at * X.cols));
    std::fill(bag_of.begin() + long(at), bag_of.begin() + long(at + F.rows), j);
    at += F.rows;
  }

  Scorer s = Scorer::make(cfg, X.cols);
  std::vector<size_t> batch_bags;
  train_minibatch(s, X, cfg,
                  [&](const std::vector<size_t>& idx, const std::vector<double>& sc,
                      std::vector<double>& dl) {
                    batch_bags.resize(idx.size());
                    for (size_t k = 0; k < idx.size(); ++k) batch_bags[k] = bag_of[idx[k]];
                    return surrogate_loss(T, sc, batch_bags, &dl);
                  });
  return s;
}

McmPairing pair_bags_mcm(const std::vector<double>& priors, const std::vector<size_t>& sizes) {
  if (priors.size() != sizes.size() || priors.size() < 2)
    throw std::invalid_argument("pair_bags_mcm: need matching priors/sizes for >= 2 bags");
  size_t m = priors.size();

  // candidate bag index lists: full for even m, one drop for odd m
  std::vector<std::vector<size_t>> candidates;
  if (m % 2 == 0) {
    std::vector<size_t> all(m);
    std::iota(all.begin(), all.end(), 0);
    candidates.push_back(all);
  } else {
    for (size_t drop = 0; drop < m; ++drop) {
      std::vector<size_t> rest;
      for (size_t j = 0; j < m; ++j)
        if (j != drop) rest.push_back(j);
      candidates.push_back(rest);
    }
  }

  McmPairing best;
  double best_total = -1.0;
  for (auto& group : candidates) {
    std::vector<std::array<size_t, 2>> pairs;
    double total;

    bool equal_sizes = true;
    for (size_t j : group)
      if (sizes[j] != sizes[group[0]]) equal_sizes = false;

    if (equal_sizes) {
      // sorted rule: widest spread first (exact for equal sizes)
      std::vector<size_t> order(group);
      std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (priors[a] != priors[b]) return priors[a] > priors[b];
        return a < b;
      });
      for (size_t t = 0; t < order.size() / 2; ++t)
        pairs.push_back({order[t], order[order.size() - 1 - t]});
      total = 0.0;
      for (auto& p : pairs) total += pair_term(priors, sizes, p[0], p[1]);
    } else if (group.size() <= 10) {
      std::vector<std::array<size_t, 2>> cur;
      total = -1.0;
      enumerate_matchings(priors, sizes, group, cur, 0.0, total, pairs);
    } else {
      // greedy: repeatedly take the best remaining couple
      std::vector<size_t> left(group);
      total = 0.0;
      while (!left.empty()) {
        double best_term = -1.0;
        size_t bi = 0, bj = 1;
        for (size_t x = 0; x < left.size(); ++x)
          for (size_t y = x + 1; y < left.size(); ++y) {
            double term = pair_term(priors, sizes, left[x], left[y]);
            if (term > best_term) {
              best_term = term;
              bi = x;
              bj = y;
            }
          }
        pairs.push_back({left[bi], left[bj]});
        total += best_term;
        std::vector<size_t> next;
        for (size_t t = 0; t < left.size(); ++t)
          if (t != bi && t != bj) next.push_back(left[t]);
        left = next;
      }
    }

    if (total > best_total) {
      best_total = total;
      best.pairs = pairs;
      if (m % 2 == 1) {
        // recover which bag was dropped
        std::vector<uint8_t> in(m, 0);
        for (size_t j : group) in[j] = 1;
        for (size_t j = 0; j < m; ++j)
          if (!in[j]) best.dropped = long(j);
      }
    }
  }

  // orient pairs (higher prior first; ties lower index) and weight them
  best.objective = best_total;
  best.weights.clear();
  double wsum = 0.0;
  for (auto& p : best.pairs) {
    if (priors[p[1]] > priors[p[0]]) std::swap(p[0], p[1]);
    else if (priors[p[1]] == priors[p[0]] && p[1] < p[0]) std::swap(p[0], p[1]);
    double w = pair_term(priors, sizes, p[0], p[1]);
    best.weights.push_back(w);
    wsum += w;
  }
  if (!(wsum > 0.0))
    throw std::invalid_argument("pair_bags_mcm: every pair gap is zero; nothing to train on");
  for (double& w : best.weights) w /= wsum;
  return best;
}

double uu_c_risk(const std::vector<double>& scores_hi, const std::vector<double>& scores_lo,
                 double theta_hi, double theta_lo, double pi_d, bool correction,
                 std::vector<double>* grad_hi, std::vector<double>* grad_lo) {
  if (scores_hi.empty() || scores_lo.empty())
    throw std::invalid_argument("uu_c_risk: both bags must contribute scores");
  if (!(theta_hi > theta_lo))
    throw std::invalid_argument("uu_c_risk: need theta_hi > theta_lo (degenerate pair)");
  if (!(pi_d >= 0.0 && pi_d <= 1.0)) throw std::invalid_argument("uu_c_risk: pi_d outside [0,1]");

  double n_hi = double(scores_hi.size()), n_lo = double(scores_lo.size());
  double L_hi_pos = 0.0, L_hi_neg = 0.0, L_lo_pos = 0.0, L_lo_neg = 0.0;
  for (double s : scores_hi) {
    L_hi_pos += logistic_loss_value(s, +1);
    L_hi_neg += logistic_loss_value(s, -1);
  }
  for (double s : scores_lo) {
    L_lo_pos += logistic_loss_value(s, +1);
    L_lo_neg += logistic_loss_value(s, -1);
  }
  L_hi_pos /= n_hi;
  L_hi_neg /= n_hi;
  L_lo_pos /= n_lo;
  L_lo_neg /= n_lo;

  double span = theta_hi - theta_lo;
  double R_p = ((1.0 - theta_lo) * L_hi_pos - (1.0 - theta_hi) * L_lo_pos) / span;
  double R_n = (theta_hi * L_lo_neg - theta_lo * L_hi_neg) / span;

  double term_p = pi_d * R_p;
  double term_n = (1.0 - pi_d) * R_n;
  bool clamp_p = correction && !(term_p > 0.0);
  bool clamp_n = correction && !(term_n > 0.0);
  double risk = (clamp_p ? 0.0 : term_p) + (clamp_n ? 0.0 : term_n);

  if (grad_hi || grad_lo) {
    if (grad_hi) grad_hi->assign(scores_hi.size(), 0.0);
    if (grad_lo) grad_lo->assign(scores_lo.size(), 0.0);
    // d term_p / dL_hi_pos etc., zero on clamped branches
    double c_hi_pos = clamp_p ? 0.0 : pi_d * (1.0 - theta_lo) / span;
    double c_lo_pos = clamp_p ? 0.0 : -pi_d * (1.0 - theta_hi) / span;
    double c_lo_neg = clamp_n ? 0.0 : (1.0 - pi_d) * theta_hi / span;
    double c_hi_neg = clamp_n ? 0.0 : -(1.0 - pi_d) * theta_lo / span;
    if (grad_hi)
      for (size_t i = 0; i < scores_hi.size(); ++i)
        (*grad_hi)[i] = (c_hi_pos * logistic_loss_dscore(scores_hi[i], +1) +
                         c_hi_neg * logistic_loss_dscore(scores_hi[i], -1)) /
                        n_hi;
    if (grad_lo)
      for (size_t i = 0; i < scores_lo.size(); ++i)
        (*grad_lo)[i] = (c_lo_pos * logistic_loss_dscore(scores_lo[i], +1) +
                         c_lo_neg * logistic_loss_dscore(scores_lo[i], -1)) /
                        n_lo;
  }
  return risk;
}

Scorer train_mcm(const BagCollection& bags, const std::vector<double>& priors, double pi_d,
                 const ScorerConfig& cfg) {
  if (priors.size() != bags.m())
    throw std::invalid_argument("train_mcm: one prior per bag required");
  std::vector<size_t> sizes;
  for (const auto& b : bags.bags) sizes.push_back(b.size());
  McmPairing pairing = pair_bags_mcm(priors, sizes);

  // rows of the paired bags only; the dropped bag (odd m) stays out
  struct RowMeta {
    size_t pair;
    bool hi;
  };
  size_t total = 0;
  for (auto& p : pairing.pairs) total += sizes[p[0]] + sizes[p[1]];
  Matrix X(total, bags.bags[0].features.cols);
  std::vector<RowMeta> meta(total);
  size_t at = 0;
  for (size_t t = 0; t < pairing.pairs.size(); ++t) {
    for (int side = 0; side < 2; ++side) {
      const Matrix& F = bags.bags[pairing.pairs[t][side]].features;
      std::copy(F.data.begin(), F.data.end(), X.data.begin() + long(at * X.cols));
      for (size_t r = 0; r < F.rows; ++r) meta[at + r] = {t, side == 0};
      at += F.rows;
    }
  }

  Scorer s = Scorer::make(cfg, X.cols);
  std::vector<double> sc_hi, sc_lo, g_hi, g_lo;
  std::vector<size_t> pos_hi, pos_lo;
  train_minibatch(
      s, X, cfg,
      [&](const std::vector<size_t>& idx, const std::vector<double>& sc, std::vector<double>& dl) {
        double batch_risk = 0.0;
        for (size_t t = 0; t < pairing.pairs.size(); ++t) {
          sc_hi.clear();
          sc_lo.clear();
          pos_hi.clear();
          pos_lo.clear();
          for (size_t k = 0; k < idx.size(); ++k) {
            if (meta[idx[k]].pair != t) continue;
            if (meta[idx[k]].hi) {
              sc_hi.push_back(sc[k]);
              pos_hi.push_back(k);
            } else {
              sc_lo.push_back(sc[k]);
              pos_lo.push_back(k);
            }
          }
          // a pair needs both sides in the batch to contribute
          if (sc_hi.empty() || sc_lo.empty()) continue;
          double theta_hi = priors[pairing.pairs[t][0]];
          double theta_lo = priors[pairing.pairs[t][1]];
          double w = pairing.weights[t];
          double r = uu_c_risk(sc_hi, sc_lo, theta_hi, theta_lo, pi_d, true, &g_hi, &g_lo);
          batch_risk += w * r;
          for (size_t k = 0; k < pos_hi.size(); ++k) dl[pos_hi[k]] += w * g_hi[k];
          for (size_t k = 0; k < pos_lo.size(); ++k) dl[pos_lo[k]] += w * g_lo[k];
        }
        return batch_risk;
      });
  return s;
}

double estimate_test_prior(const Matrix& test_features, const PseudoLabeledSet& src,
                           const ConfidentSets& conf, const EstimatorConfig& cfg) {
  return estimate_standard(test_features, src, conf, cfg).value;
}

double accuracy(const Scorer& s, const Matrix& X, const std::vector<int>& y) {
  if (X.rows != y.size()) throw std::invalid_argument("accuracy: rows and labels differ");
  if (X.rows == 0) throw std::invalid_argument("accuracy: empty evaluation set");
  size_t hits = 0;
  for (size_t i = 0; i < X.rows; ++i) {
    int pred = s.predict_proba(X.row(i)) >= 0.5 ? 1 : -1;
    if (pred == y[i]) ++hits;
  }
  return double(hits) / double(X.rows);
}

}  // namespace ubags
