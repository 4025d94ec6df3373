#include "ubags/confident.hpp"

#include <cstring>

#include "ubags/numerics.hpp"

namespace ubags {

namespace {

void assert_sides(const PseudoLabeledSet& set, const ConfidentSets& out) {
  for (size_t i : out.positive_idx)
    if (set.pseudo[i] != 1) throw std::logic_error("confident: positive index on the -1 side");
  for (size_t i : out.negative_idx)
    if (set.pseudo[i] != -1) throw std::logic_error("confident: negative index on the +1 side");
}

void require_nonempty(const ConfidentSets& out, const char* method) {
  if (out.positive_idx.empty())
    throw EmptySelectionError(std::string(method) + ": no confident rows on the +1 side");
  if (out.negative_idx.empty())
    throw EmptySelectionError(std::string(method) + ": no confident rows on the -1 side");
}

}  // namespace

PseudoLabeledSet assign_pseudo_labels(const Bag& bag_hi, const Bag& bag_lo, size_t hi_index,
                                      size_t lo_index) {
  if (bag_hi.size() == 0 || bag_lo.size() == 0)
    throw std::invalid_argument("assign_pseudo_labels: both bags must be nonempty");
  if (bag_hi.features.cols != bag_lo.features.cols)
    throw std::invalid_argument("assign_pseudo_labels: feature width mismatch");

  PseudoLabeledSet set;
  set.features = Matrix(bag_hi.size() + bag_lo.size(), bag_hi.features.cols);
  std::memcpy(set.features.row(0), bag_hi.features.data.data(),
              bag_hi.features.data.size() * sizeof(double));
  std::memcpy(set.features.row(bag_hi.size()), bag_lo.features.data.data(),
              bag_lo.features.data.size() * sizeof(double));
  set.pseudo.assign(bag_hi.size(), 1);
  set.pseudo.insert(set.pseudo.end(), bag_lo.size(), -1);
  set.origin.assign(bag_hi.size(), hi_index);
  set.origin.insert(set.origin.end(), bag_lo.size(), lo_index);
  if (!bag_hi.hidden_labels.empty() && !bag_lo.hidden_labels.empty()) {
    set.hidden = bag_hi.hidden_labels;
    set.hidden.insert(set.hidden.end(), bag_lo.hidden_labels.begin(), bag_lo.hidden_labels.end());
  }
  return set;
}

ConfidentSets select_by_loss(const PseudoLabeledSet& set, const Scorer& scorer, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("select_by_loss: threshold must be in (0,1)");
  std::vector<double> losses = per_example_logistic_loss(scorer, set.features, set.pseudo);
  Gmm2 g = em_fit_gmm2(losses);

  ConfidentSets out;
  out.method = "loss";
  double post[2];
  for (size_t i = 0; i < losses.size(); ++i) {
    gmm2_posterior(g, losses[i], post);
    if (post[0] >= threshold)  // component 0 has the smaller mean loss
      (set.pseudo[i] == 1 ? out.positive_idx : out.negative_idx).push_back(i);
  }
  require_nonempty(out, "select_by_loss");
  assert_sides(set, out);
  return out;
}

ConfidentSets select_by_confident_joint(const PseudoLabeledSet& set, const Scorer& scorer) {
  std::vector<double> p_plus = scorer.predict_proba(set.features);

  double t_plus = 0.0, t_minus = 0.0;
  size_t n_plus = 0, n_minus = 0;
  for (size_t i = 0; i < set.size(); ++i) {
    if (set.pseudo[i] == 1) {
      t_plus += p_plus[i];
      ++n_plus;
    } else {
      t_minus += 1.0 - p_plus[i];
      ++n_minus;
    }
  }
  if (n_plus == 0 || n_minus == 0)
    throw std::invalid_argument("select_by_confident_joint: a pseudo side is empty");
  t_plus /= double(n_plus);
  t_minus /= double(n_minus);

  ConfidentSets out;
  out.method = "confident-joint";
  for (size_t i = 0; i < set.size(); ++i) {
    int argmax = p_plus[i] >= 0.5 ? 1 : -1;
    double p_arg = argmax == 1 ? p_plus[i] : 1.0 - p_plus[i];
    double t_arg = argmax == 1 ? t_plus : t_minus;
    // the diagonal: the argmax class clears its threshold and matches the
    // working label
    if (p_arg >= t_arg && argmax == set.pseudo[i])
      (set.pseudo[i] == 1 ? out.positive_idx : out.negative_idx).push_back(i);
  }
  require_nonempty(out, "select_by_confident_joint");
  assert_sides(set, out);
  return out;
}

ConfidentSets select_by_alignment(const PseudoLabeledSet& set, const Scorer& scorer) {
  ConfidentSets out;
  out.method = "alignment";

  for (int side = 0; side < 2; ++side) {
    int want = side == 0 ? 1 : -1;
    std::vector<size_t> rows;
    for (size_t i = 0; i < set.size(); ++i)
      if (set.pseudo[i] == want) rows.push_back(i);
    if (rows.size() < 2)
      throw std::invalid_argument("select_by_alignment: a pseudo side has fewer than 2 rows");

    size_t dz = scorer.embed_dim();
    std::vector<std::vector<double>> z(rows.size());
    Matrix gram(dz, dz);
    for (size_t k = 0; k < rows.size(); ++k) {
      z[k] = scorer.embed(set.features.row(rows[k]));
      for (size_t a = 0; a < dz; ++a)
        for (size_t b = 0; b < dz; ++b) gram.at(a, b) += z[k][a] * z[k][b];
    }
    EigResult eig = top_eigvec(gram);

    std::vector<double> align(rows.size());
    for (size_t k = 0; k < rows.size(); ++k) {
      double dot = 0.0;
      for (size_t a = 0; a < dz; ++a) dot += eig.vec[a] * z[k][a];
      align[k] = dot * dot;  // squared, so the sign of the eigenvector cancels
    }

    Gmm2 g = em_fit_gmm2(align);
    double post[2];
    auto& keep = want == 1 ? out.positive_idx : out.negative_idx;
    for (size_t k = 0; k < rows.size(); ++k) {
      gmm2_posterior(g, align[k], post);
      if (post[1] >= 0.5)  // larger-mean component; ties land on the kept side
        keep.push_back(rows[k]);
    }
  }
  require_nonempty(out, "select_by_alignment");
  assert_sides(set, out);
  return out;
}

Matrix gather_rows(const Matrix& features, const std::vector<size_t>& idx) {
  Matrix out(idx.size(), features.cols);
  for (size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= features.rows) throw std::invalid_argument("gather_rows: index out of range");
    std::memcpy(out.row(k), features.row(idx[k]), features.cols * sizeof(double));
  }
  return out;
}

}  // namespace ubags
