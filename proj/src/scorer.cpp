#include "ubags/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "ubags/rng.hpp"

namespace ubags {

namespace {

constexpr char kMagic[5] = {'P', 'L', 'S', 'C', '1'};
constexpr double kProbaClamp = 1e-15;

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

// Hidden activation. Bounded and nonnegative: saturated examples of the two
// classes land near disjoint corners of [0,1]^h, so class directions separate
// by angle and per-class embedding norms stay tight — the geometry the
// alignment-based confident selection relies on.
double hidden_act(double a) { return sigmoid(a); }
double hidden_act_grad(double a) {
  double s = sigmoid(a);
  return s * (1.0 - s);
}

// seed streams inside one training run
enum : uint64_t { kStreamInit = 1, kStreamEpoch = 2 };

}  // namespace

void ScorerConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("scorer config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("scorer config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("scorer config: learning_rate must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("scorer config: weight_decay must be >= 0");
  if (arch == Arch::mlp && hidden < 1)
    throw std::invalid_argument("scorer config: hidden must be >= 1 for the mlp");
}

Scorer Scorer::make(const ScorerConfig& cfg, size_t input_dim) {
  cfg.validate();
  if (input_dim == 0) throw std::invalid_argument("scorer: input_dim must be >= 1");
  Scorer s;
  s.arch_ = cfg.arch;
  s.input_dim_ = input_dim;
  if (cfg.arch == Arch::linear) {
    s.hidden_ = 0;
    s.theta_.assign(input_dim + 1, 0.0);  // zero start is the standard convex fit
  } else {
    s.hidden_ = cfg.hidden;
    size_t h = size_t(cfg.hidden), d = input_dim;
    s.theta_.assign(h * d + h + h + 1, 0.0);
    Rng rng(derive_seed(cfg.seed, kStreamInit));
    double w1_scale = 1.0 / std::sqrt(double(d));
    for (size_t i = 0; i < h * d; ++i) s.theta_[i] = rng.uniform(-w1_scale, w1_scale);
    // b1 stays zero
    double w2_scale = 1.0 / std::sqrt(double(h));
    for (size_t i = 0; i < h; ++i) s.theta_[h * d + h + i] = rng.uniform(-w2_scale, w2_scale);
    // b2 stays zero
  }
  return s;
}

double Scorer::raw_score(const double* x) const {
  size_t d = input_dim_;
  if (arch_ == Arch::linear) {
    double s = theta_[d];
    for (size_t j = 0; j < d; ++j) s += theta_[j] * x[j];
    return s;
  }
  size_t h = size_t(hidden_);
  const double* W1 = theta_.data();
  const double* b1 = theta_.data() + h * d;
  const double* w2 = theta_.data() + h * d + h;
  double b2 = theta_[h * d + h + h];
  double s = b2;
  for (size_t i = 0; i < h; ++i) {
    double a = b1[i];
    const double* row = W1 + i * d;
    for (size_t j = 0; j < d; ++j) a += row[j] * x[j];
    s += w2[i] * hidden_act(a);
  }
  return s;
}

std::vector<double> Scorer::raw_scores(const Matrix& X) const {
  if (X.cols != input_dim_) throw std::invalid_argument("scorer: feature width mismatch");
  std::vector<double> out(X.rows);
  for (size_t i = 0; i < X.rows; ++i) out[i] = raw_score(X.row(i));
  return out;
}

double Scorer::predict_proba(const double* x) const {
  double p = sigmoid(raw_score(x));
  return std::min(std::max(p, kProbaClamp), 1.0 - kProbaClamp);
}

std::vector<double> Scorer::predict_proba(const Matrix& X) const {
  if (X.cols != input_dim_) throw std::invalid_argument("scorer: feature width mismatch");
  std::vector<double> out(X.rows);
  for (size_t i = 0; i < X.rows; ++i) out[i] = predict_proba(X.row(i));
  return out;
}

std::vector<double> Scorer::embed(const double* x) const {
  size_t d = input_dim_;
  if (arch_ == Arch::linear) return std::vector<double>(x, x + d);
  size_t h = size_t(hidden_);
  const double* W1 = theta_.data();
  const double* b1 = theta_.data() + h * d;
  std::vector<double> z(h);
  for (size_t i = 0; i < h; ++i) {
    double a = b1[i];
    const double* row = W1 + i * d;
    for (size_t j = 0; j < d; ++j) a += row[j] * x[j];
    z[i] = hidden_act(a);
  }
  return z;
}

size_t Scorer::embed_dim() const {
  return arch_ == Arch::linear ? input_dim_ : size_t(hidden_);
}

void Scorer::add_score_grad(const double* x, double g, std::vector<double>& grad) const {
  size_t d = input_dim_;
  if (arch_ == Arch::linear) {
    for (size_t j = 0; j < d; ++j) grad[j] += g * x[j];
    grad[d] += g;
    return;
  }
  size_t h = size_t(hidden_);
  const double* W1 = theta_.data();
  const double* b1 = theta_.data() + h * d;
  const double* w2 = theta_.data() + h * d + h;
  for (size_t i = 0; i < h; ++i) {
    double a = b1[i];
    const double* row = W1 + i * d;
    for (size_t j = 0; j < d; ++j) a += row[j] * x[j];
    double t = hidden_act(a);
    grad[h * d + h + i] += g * t;                    // w2
    double back = g * w2[i] * hidden_act_grad(a);    // through the activation
    grad[h * d + i] += back;                  // b1
    double* gw1 = grad.data() + i * d;
    for (size_t j = 0; j < d; ++j) gw1[j] += back * x[j];
  }
  grad[h * d + h + h] += g;  // b2
}

void Scorer::negate_output() {
  size_t d = input_dim_;
  if (arch_ == Arch::linear) {
    for (size_t j = 0; j <= d; ++j) theta_[j] = -theta_[j];
    return;
  }
  size_t h = size_t(hidden_);
  for (size_t i = 0; i < h + 1; ++i) theta_[h * d + h + i] = -theta_[h * d + h + i];
}

// --- checkpoint container: magic, then named little-endian f64 arrays -------

namespace {

void write_u32(FILE* f, uint32_t v) { std::fwrite(&v, sizeof v, 1, f); }
void write_u64(FILE* f, uint64_t v) { std::fwrite(&v, sizeof v, 1, f); }

void write_array(FILE* f, const std::string& name, const double* data, size_t count) {
  write_u32(f, uint32_t(name.size()));
  std::fwrite(name.data(), 1, name.size(), f);
  write_u64(f, uint64_t(count));
  std::fwrite(data, sizeof(double), count, f);
}

struct Reader {
  const unsigned char* p;
  size_t left;
  std::string path;

  void need(size_t n, const char* what) {
    if (left < n)
      throw ParseError("checkpoint " + path + ": truncated while reading " + what);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v;
    std::memcpy(&v, p, 4);
    p += 4;
    left -= 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v;
    std::memcpy(&v, p, 8);
    p += 8;
    left -= 8;
    return v;
  }
};

}  // namespace

void Scorer::save(const std::string& path) const {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  std::fwrite(kMagic, 1, sizeof kMagic, f);
  write_u32(f, 4);  // array count
  double meta_arch = double(int(arch_));
  double meta_dim = double(input_dim_);
  double meta_hidden = double(hidden_);
  write_array(f, "arch", &meta_arch, 1);
  write_array(f, "input_dim", &meta_dim, 1);
  write_array(f, "hidden", &meta_hidden, 1);
  write_array(f, "theta", theta_.data(), theta_.size());
  std::fclose(f);
}

Scorer Scorer::load(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::fseek(f, 0, SEEK_END);
  long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<unsigned char> buf(size_t(std::max(size, 0L)));
  if (!buf.empty() && std::fread(buf.data(), 1, buf.size(), f) != buf.size()) {
    std::fclose(f);
    throw ParseError("checkpoint " + path + ": short read");
  }
  std::fclose(f);

  if (buf.size() < sizeof kMagic || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
    throw ParseError("checkpoint " + path + ": expected magic PLSC1");

  Reader r{buf.data() + sizeof kMagic, buf.size() - sizeof kMagic, path};
  uint32_t count = r.u32("array count");
  std::vector<std::pair<std::string, std::vector<double>>> arrays;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = r.u32("array name length");
    r.need(name_len, "array name");
    std::string name(reinterpret_cast<const char*>(r.p), name_len);
    r.p += name_len;
    r.left -= name_len;
    uint64_t n = r.u64("array length");
    r.need(size_t(n) * sizeof(double), ("array " + name).c_str());
    std::vector<double> vals(static_cast<size_t>(n));
    std::memcpy(vals.data(), r.p, size_t(n) * sizeof(double));
    r.p += size_t(n) * sizeof(double);
    r.left -= size_t(n) * sizeof(double);
    arrays.emplace_back(std::move(name), std::move(vals));
  }
  if (r.left != 0) throw ParseError("checkpoint " + path + ": trailing bytes after arrays");

  auto find = [&](const char* name) -> std::vector<double>& {
    for (auto& a : arrays)
      if (a.first == name) return a.second;
    throw ParseError("checkpoint " + path + ": missing array " + name);
  };

  Scorer s;
  auto& arch = find("arch");
  auto& dim = find("input_dim");
  auto& hidden = find("hidden");
  if (arch.size() != 1 || dim.size() != 1 || hidden.size() != 1)
    throw ParseError("checkpoint " + path + ": malformed metadata arrays");
  int arch_id = int(arch[0]);
  if (arch_id != 0 && arch_id != 1)
    throw ParseError("checkpoint " + path + ": unknown arch id");
  s.arch_ = Arch(arch_id);
  s.input_dim_ = size_t(dim[0]);
  s.hidden_ = int(hidden[0]);
  s.theta_ = find("theta");
  size_t expect = s.arch_ == Arch::linear
                      ? s.input_dim_ + 1
                      : size_t(s.hidden_) * s.input_dim_ + 2 * size_t(s.hidden_) + 1;
  if (s.input_dim_ == 0 || s.theta_.size() != expect)
    throw ParseError("checkpoint " + path + ": parameter count inconsistent with shape");
  return s;
}

// --- training ----------------------------------------------------------------

void train_minibatch(Scorer& s, const Matrix& X, const ScorerConfig& cfg, const BatchLoss& loss) {
  cfg.validate();
  if (X.rows == 0) throw std::invalid_argument("train: empty dataset");
  if (X.cols != s.input_dim()) throw std::invalid_argument("train: feature width mismatch");

  std::vector<size_t> order(X.rows);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(s.params().size());
  std::vector<size_t> batch;
  std::vector<double> scores, dl;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, kStreamEpoch, uint64_t(epoch)));
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
      size_t end = std::min(order.size(), start + size_t(cfg.batch_size));
      batch.assign(order.begin() + long(start), order.begin() + long(end));
      scores.resize(batch.size());
      for (size_t k = 0; k < batch.size(); ++k) scores[k] = s.raw_score(X.row(batch[k]));
      dl.assign(batch.size(), 0.0);
      loss(batch, scores, dl);

      std::fill(grad.begin(), grad.end(), 0.0);
      for (size_t k = 0; k < batch.size(); ++k)
        if (dl[k] != 0.0) s.add_score_grad(X.row(batch[k]), dl[k], grad);
      auto& theta = s.params();
      if (cfg.weight_decay > 0.0)
        for (size_t i = 0; i < theta.size(); ++i) grad[i] += cfg.weight_decay * theta[i];
      for (size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg.learning_rate * grad[i];
    }
  }
}

double logistic_loss_value(double score, int label) {
  double m = double(label) * score;
  // ln(1 + exp(-m)) without overflow
  return m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

double logistic_loss_dscore(double score, int label) {
  double m = double(label) * score;
  return -double(label) / (1.0 + std::exp(m));
}

Scorer train_binary(const Matrix& X, const std::vector<int>& y, const std::vector<double>& weights,
                    const ScorerConfig& cfg, TrainDiagnostics* diag) {
  if (X.rows != y.size()) throw std::invalid_argument("train_binary: rows and labels differ");
  if (X.rows == 0) throw std::invalid_argument("train_binary: empty dataset");
  if (!weights.empty() && weights.size() != y.size())
    throw std::invalid_argument("train_binary: weights must be empty or one per row");
  for (double w : weights)
    if (w < 0.0) throw std::invalid_argument("train_binary: negative weight");
  for (int lbl : y)
    if (lbl != 1 && lbl != -1) throw std::invalid_argument("train_binary: labels must be +1/-1");

  bool has_pos = false, has_neg = false;
  for (int lbl : y) (lbl == 1 ? has_pos : has_neg) = true;
  if (diag) diag->single_label = !(has_pos && has_neg);

  Scorer s = Scorer::make(cfg, X.cols);
  train_minibatch(s, X, cfg, [&](const std::vector<size_t>& idx, const std::vector<double>& sc,
                                 std::vector<double>& dl) {
    double wsum = 0.0;
    if (weights.empty()) {
      wsum = double(idx.size());
      for (size_t k = 0; k < idx.size(); ++k) dl[k] = logistic_loss_dscore(sc[k], y[idx[k]]);
    } else {
      for (size_t k = 0; k < idx.size(); ++k) wsum += weights[idx[k]];
      if (wsum <= 0.0) return 0.0;  // all-zero-weight batch contributes nothing
      for (size_t k = 0; k < idx.size(); ++k)
        dl[k] = weights[idx[k]] * logistic_loss_dscore(sc[k], y[idx[k]]);
    }
    double total = 0.0;
    for (size_t k = 0; k < idx.size(); ++k) {
      double w = weights.empty() ? 1.0 : weights[idx[k]];
      total += w * logistic_loss_value(sc[k], y[idx[k]]);
    }
    for (double& g : dl) g /= wsum;
    return total / wsum;
  });
  return s;
}

std::vector<double> per_example_logistic_loss(const Scorer& s, const Matrix& X,
                                              const std::vector<int>& y) {
  if (X.rows != y.size()) throw std::invalid_argument("logistic loss: rows and labels differ");
  std::vector<double> out(X.rows);
  for (size_t i = 0; i < X.rows; ++i) out[i] = logistic_loss_value(s.raw_score(X.row(i)), y[i]);
  return out;
}

double logistic_objective(const Scorer& s, const Matrix& X, const std::vector<int>& y,
                          const std::vector<double>& weights, double weight_decay) {
  double total = 0.0, wsum = 0.0;
  for (size_t i = 0; i < X.rows; ++i) {
    double w = weights.empty() ? 1.0 : weights[i];
    total += w * logistic_loss_value(s.raw_score(X.row(i)), y[i]);
    wsum += w;
  }
  double obj = total / wsum;
  if (weight_decay > 0.0)
    for (double t : s.params()) obj += 0.5 * weight_decay * t * t;
  return obj;
}

std::vector<double> logistic_gradient(const Scorer& s, const Matrix& X, const std::vector<int>& y,
                                      const std::vector<double>& weights, double weight_decay) {
  std::vector<double> grad(s.params().size(), 0.0);
  double wsum = 0.0;
  for (size_t i = 0; i < X.rows; ++i) wsum += weights.empty() ? 1.0 : weights[i];
  for (size_t i = 0; i < X.rows; ++i) {
    double w = weights.empty() ? 1.0 : weights[i];
    if (w == 0.0) continue;
    double g = w * logistic_loss_dscore(s.raw_score(X.row(i)), y[i]) / wsum;
    s.add_score_grad(X.row(i), g, grad);
  }
  if (weight_decay > 0.0) {
    const auto& theta = s.params();
    for (size_t i = 0; i < grad.size(); ++i) grad[i] += weight_decay * theta[i];
  }
  return grad;
}

}  // namespace ubags
