#pragma once
// Pool loading, binarization, and bag construction. Bags are drawn without
// replacement inside a bag; reuse across bags is permitted and flagged on the
// collection so downstream reports can disclose it.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ubags/types.hpp"

namespace ubags {

// Requested prior and size for one bag.
struct BagSpec {
  double prior = 0.5;  // positive fraction, in [0,1]
  size_t size = 0;     // rows, >= 1
};

// Map raw class ids to +1 (members of positive_classes) / -1 (everything else).
LabeledPool make_binary_task(const MulticlassPool& pool, const std::set<int>& positive_classes);

// m priors evenly spaced over [lo, hi]; m >= 2.
std::vector<double> even_priors(size_t m, double lo, double hi);

// Draw the bags. Positive counts are round(prior * size) with ties rounding
// up. The declared pair is the max-prior bag (hi) and the min-prior bag (lo),
// ties resolved to the lowest index. Throws CapacityError when a single bag
// wants more rows of one class than the pool holds.
BagCollection sample_bags(const LabeledPool& pool, const std::vector<BagSpec>& specs,
                          uint64_t seed);

enum class SizeShiftMode { half_scaled, random_simplex };

// half_scaled: ceil(m/2) randomly chosen bags get size max(1, ceil(tau * n_j)).
// random_simplex: sizes redrawn uniformly over the compositions of the total
// (each bag keeps size >= 1); tau is ignored.
std::vector<BagSpec> apply_size_shift(const std::vector<BagSpec>& specs, SizeShiftMode mode,
                                      double tau, uint64_t seed);

enum class PoolFormat { csv, idx };

// csv: header "label,f1,...,fd", label +1/-1, one row per example.
// idx: path names the images file; the labels file is the sibling with
// "images" -> "labels" and "idx3" -> "idx1"; positive_classes defines the
// binarization and must be nonempty for idx.
LabeledPool load_pool(const std::string& path, PoolFormat format,
                      const std::set<int>& positive_classes = {});

// idx pair with explicit paths; pixels are scaled to [0,1].
MulticlassPool load_idx(const std::string& images_path, const std::string& labels_path);

LabeledPool load_pool_csv(const std::string& path);
void save_pool_csv(const std::string& path, const Matrix& features, const std::vector<int>& labels);

}  // namespace ubags
