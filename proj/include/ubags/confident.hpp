#pragma once
// Confident-example collection. The declared pair is pseudo-labeled (+1 for
// the larger-prior bag), a warm scorer grades every row, and one of three
// selectors keeps the rows whose working label looks trustworthy.

#include "ubags/scorer.hpp"
#include "ubags/types.hpp"

namespace ubags {

// Rows of bag_hi get pseudo label +1, rows of bag_lo get -1. hi_index / lo_index
// are recorded as the origin bag ids; hidden labels are carried when both bags
// have them.
PseudoLabeledSet assign_pseudo_labels(const Bag& bag_hi, const Bag& bag_lo, size_t hi_index,
                                      size_t lo_index);

// Loss-mixture selector: fit a two-component mixture to the per-row logistic
// losses under the pseudo labels; keep rows whose posterior for the
// smaller-mean (clean) component reaches `threshold`. Throws
// EmptySelectionError when a side ends up empty.
ConfidentSets select_by_loss(const PseudoLabeledSet& set, const Scorer& scorer, double threshold);

// Agreement-joint selector: per-class thresholds t_s are the mean predicted
// probability of class s over the rows pseudo-labeled s; a row is kept when
// its argmax class meets that class's threshold and agrees with the pseudo
// label (the diagonal of the 2x2 joint).
ConfidentSets select_by_confident_joint(const PseudoLabeledSet& set, const Scorer& scorer);

// Alignment selector: per pseudo class, squared inner products between each
// row's latent vector and the dominant eigenvector of that class's gram
// matrix; a two-component mixture on those alignments keeps the rows owned by
// the larger-mean component (posterior >= 0.5).
ConfidentSets select_by_alignment(const PseudoLabeledSet& set, const Scorer& scorer);

// Rows of `set` the indices point at, as a feature matrix.
Matrix gather_rows(const Matrix& features, const std::vector<size_t>& idx);

}  // namespace ubags
