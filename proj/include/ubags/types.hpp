#pragma once
// Shared data shapes and the error taxonomy. Data-dependent failures get their
// own exception types so callers can catch and fall back; programming errors
// surface as std::invalid_argument.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ubags {

// Row-major dense matrix; rows are examples, columns are features.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(size_t i) { return data.data() + i * cols; }
  const double* row(size_t i) const { return data.data() + i * cols; }
  double& at(size_t i, size_t j) { return data[i * cols + j]; }
  double at(size_t i, size_t j) const { return data[i * cols + j]; }

  void append_row(const double* v) {
    data.insert(data.end(), v, v + cols);
    ++rows;
  }
};

// Labeled example pool; labels are +1 / -1.
struct LabeledPool {
  Matrix features;
  std::vector<int> labels;
  size_t size() const { return labels.size(); }
};

// Pool with raw class ids, before binarization.
struct MulticlassPool {
  Matrix features;
  std::vector<int> labels;
};

// One unlabeled bag. Hidden labels stay attached for evaluation only; nothing
// in the estimation or training path may read them.
struct Bag {
  Matrix features;
  std::vector<int> hidden_labels;
  double true_prior = 0.0;
  size_t size() const { return features.rows; }
};

struct BagCollection {
  std::vector<Bag> bags;
  size_t declared_hi = 0;  // bag whose positive prior is known to be larger
  size_t declared_lo = 0;  // bag whose positive prior is known to be smaller
  bool resampled_across_bags = false;  // some pool row landed in two bags
  size_t m() const { return bags.size(); }
};

// Rows from the declared pair with working labels: +1 for rows drawn from the
// larger-prior bag, -1 for the smaller one.
struct PseudoLabeledSet {
  Matrix features;
  std::vector<int> pseudo;        // +1 / -1 working label
  std::vector<size_t> origin;     // bag index each row came from
  std::vector<int> hidden;        // true labels when known; empty otherwise
  size_t size() const { return pseudo.size(); }
};

// Indices (into a PseudoLabeledSet) the selector kept on each side.
struct ConfidentSets {
  std::vector<size_t> positive_idx;
  std::vector<size_t> negative_idx;
  std::string method;
};

// --- error taxonomy ---------------------------------------------------------

// No usable threshold survives the tail restriction in a ratio search.
struct UnstableTailError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Pairwise inversion hit a near-singular system (estimated priors too close).
struct UnstableInversionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A selector produced an empty side.
struct EmptySelectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Transition denominator is not positive on [0,1].
struct SingularTransitionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A bag asked for more rows of one class than the pool holds.
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file contents (CSV, idx, checkpoints).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input with no information to work with (all-identical sample, zero matrix).
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ubags
