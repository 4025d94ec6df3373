#pragma once
// Binary scorers: a linear model and a one-hidden-layer sigmoid network,
// trained by plain minibatch gradient descent. The trainer is generic over the
// per-example loss so the bag-level risk objectives can reuse it.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ubags/types.hpp"

namespace ubags {

enum class Arch { linear = 0, mlp = 1 };

struct ScorerConfig {
  Arch arch = Arch::linear;
  int hidden = 16;  // mlp only
  int epochs = 300;
  int batch_size = 64;
  double learning_rate = 0.05;
  double weight_decay = 0.0;
  uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

class Scorer {
 public:
  Scorer() = default;

  // fresh scorer with seed-determined initialization (linear starts at zero)
  static Scorer make(const ScorerConfig& cfg, size_t input_dim);

  double raw_score(const double* x) const;
  std::vector<double> raw_scores(const Matrix& X) const;

  // logistic link, clamped strictly inside (0,1)
  double predict_proba(const double* x) const;
  std::vector<double> predict_proba(const Matrix& X) const;

  // latent representation: hidden activations for the mlp, the input itself
  // for the linear model
  std::vector<double> embed(const double* x) const;
  size_t embed_dim() const;

  // accumulate dloss_dscore * d(score)/d(theta) into grad
  void add_score_grad(const double* x, double dloss_dscore, std::vector<double>& grad) const;

  void negate_output();  // flips the raw score's sign

  void save(const std::string& path) const;
  static Scorer load(const std::string& path);  // throws ParseError

  Arch arch() const { return arch_; }
  size_t input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }

 private:
  Arch arch_ = Arch::linear;
  size_t input_dim_ = 0;
  int hidden_ = 0;
  // linear: [w(d), b]; mlp: [W1(h*d), b1(h), w2(h), b2]
  std::vector<double> theta_;
};

// Fills dloss_dscore (same length as idx) and returns the batch loss value.
using BatchLoss = std::function<double(const std::vector<size_t>& idx,
                                       const std::vector<double>& scores,
                                       std::vector<double>& dloss_dscore)>;

// Shared minibatch loop: seed-determined permutation each epoch, consecutive
// slices as batches (the last one may be short), update
// theta -= lr * (batch gradient + weight_decay * theta).
void train_minibatch(Scorer& s, const Matrix& X, const ScorerConfig& cfg, const BatchLoss& loss);

struct TrainDiagnostics {
  bool single_label = false;  // every example carried the same label
};

// Logistic-loss fit. weights may be empty (uniform) or one nonnegative value
// per row; batch objective is the weighted mean loss. Training proceeds even
// when only one label is present; diag reports it so callers can decide.
Scorer train_binary(const Matrix& X, const std::vector<int>& y, const std::vector<double>& weights,
                    const ScorerConfig& cfg, TrainDiagnostics* diag = nullptr);

// ln(1 + exp(-y * score)) per row, computed in overflow-safe form.
std::vector<double> per_example_logistic_loss(const Scorer& s, const Matrix& X,
                                              const std::vector<int>& y);

double logistic_loss_value(double score, int label);
double logistic_loss_dscore(double score, int label);

// Full-batch objective / gradient of the training problem (weighted mean
// logistic loss plus 0.5 * weight_decay * |theta|^2); the trainer steps on
// exactly this gradient, so tests can difference it.
double logistic_objective(const Scorer& s, const Matrix& X, const std::vector<int>& y,
                          const std::vector<double>& weights, double weight_decay);
std::vector<double> logistic_gradient(const Scorer& s, const Matrix& X, const std::vector<int>& y,
                                      const std::vector<double>& weights, double weight_decay);

}  // namespace ubags
