#include "ubags/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <numeric>

#include "ubags/rng.hpp"

namespace ubags {

namespace {

// seed streams
enum : uint64_t { kStreamBagPos = 1, kStreamBagNeg = 2, kStreamBagMix = 3, kStreamShift = 4 };

size_t round_half_up(double x) { return size_t(std::floor(x + 0.5)); }

// first k entries of a seeded partial shuffle of 0..n-1
std::vector<size_t> draw_without_replacement(size_t n, size_t k, Rng& rng) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + size_t(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

LabeledPool make_binary_task(const MulticlassPool& pool, const std::set<int>& positive_classes) {
  if (positive_classes.empty())
    throw std::invalid_argument("make_binary_task: positive class set is empty");
  if (pool.features.rows != pool.labels.size())
    throw std::invalid_argument("make_binary_task: rows and labels differ");
  LabeledPool out;
  out.features = pool.features;
  out.labels.resize(pool.labels.size());
  for (size_t i = 0; i < pool.labels.size(); ++i)
    out.labels[i] = positive_classes.count(pool.labels[i]) ? 1 : -1;
  return out;
}

std::vector<double> even_priors(size_t m, double lo, double hi) {
  if (m < 2) throw std::invalid_argument("even_priors: need m >= 2");
  if (!(lo <= hi) || lo < 0.0 || hi > 1.0)
    throw std::invalid_argument("even_priors: need 0 <= lo <= hi <= 1");
  std::vector<double> out(m);
  double step = (hi - lo) / double(m - 1);
  for (size_t j = 0; j < m; ++j) out[j] = lo + step * double(j);
  return out;
}

BagCollection sample_bags(const LabeledPool& pool, const std::vector<BagSpec>& specs,
                          uint64_t seed) {
  if (specs.size() < 2) throw std::invalid_argument("sample_bags: need at least 2 bags");
  if (pool.features.rows != pool.labels.size())
    throw std::invalid_argument("sample_bags: pool rows and labels differ");
  for (const auto& s : specs) {
    if (s.size < 1) throw std::invalid_argument("sample_bags: bag size must be >= 1");
    if (s.prior < 0.0 || s.prior > 1.0)
      throw std::invalid_argument("sample_bags: prior must be in [0,1]");
  }

  std::vector<size_t> pos_rows, neg_rows;
  for (size_t i = 0; i < pool.labels.size(); ++i)
    (pool.labels[i] == 1 ? pos_rows : neg_rows).push_back(i);

  BagCollection coll;
  coll.bags.resize(specs.size());
  std::vector<uint8_t> used(pool.labels.size(), 0);
  bool overlap = false;

  for (size_t j = 0; j < specs.size(); ++j) {
    size_t want_pos = round_half_up(specs[j].prior * double(specs[j].size));
    want_pos = std::min(want_pos, specs[j].size);
    size_t want_neg = specs[j].size - want_pos;
    if (want_pos > pos_rows.size())
      throw CapacityError("sample_bags: bag " + std::to_string(j) + " wants " +
                          std::to_string(want_pos) + " positives, pool has " +
                          std::to_string(pos_rows.size()));
    if (want_neg > neg_rows.size())
      throw CapacityError("sample_bags: bag " + std::to_string(j) + " wants " +
                          std::to_string(want_neg) + " negatives, pool has " +
                          std::to_string(neg_rows.size()));

    Rng rng_pos(derive_seed(seed, kStreamBagPos, j));
    Rng rng_neg(derive_seed(seed, kStreamBagNeg, j));
    auto pos_pick = draw_without_replacement(pos_rows.size(), want_pos, rng_pos);
    auto neg_pick = draw_without_replacement(neg_rows.size(), want_neg, rng_neg);

    std::vector<size_t> rows;
    rows.reserve(specs[j].size);
    for (size_t k : pos_pick) rows.push_back(pos_rows[k]);
    for (size_t k : neg_pick) rows.push_back(neg_rows[k]);
    Rng rng_mix(derive_seed(seed, kStreamBagMix, j));
    rng_mix.shuffle(rows);

    Bag& bag = coll.bags[j];
    bag.features = Matrix(rows.size(), pool.features.cols);
    bag.hidden_labels.resize(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
      std::memcpy(bag.features.row(r), pool.features.row(rows[r]),
                  pool.features.cols * sizeof(double));
      bag.hidden_labels[r] = pool.labels[rows[r]];
      if (used[rows[r]]) overlap = true;
      used[rows[r]] = 1;
    }
    bag.true_prior = specs[j].prior;
  }

  coll.resampled_across_bags = overlap;
  size_t hi = 0, lo = 0;
  for (size_t j = 1; j < specs.size(); ++j) {
    if (specs[j].prior > specs[hi].prior) hi = j;
    if (specs[j].prior < specs[lo].prior) lo = j;
  }
  coll.declared_hi = hi;
  coll.declared_lo = lo;
  return coll;
}

std::vector<BagSpec> apply_size_shift(const std::vector<BagSpec>& specs, SizeShiftMode mode,
                                      double tau, uint64_t seed) {
  if (specs.empty()) throw std::invalid_argument("apply_size_shift: no bags");
  std::vector<BagSpec> out(specs);
  Rng rng(derive_seed(seed, kStreamShift));

  if (mode == SizeShiftMode::half_scaled) {
    if (!(tau > 0.0)) throw std::invalid_argument("apply_size_shift: tau must be > 0");
    size_t m = specs.size();
    size_t k = (m + 1) / 2;
    auto chosen = draw_without_replacement(m, k, rng);
    for (size_t j : chosen)
      out[j].size = std::max<size_t>(1, size_t(std::ceil(tau * double(specs[j].size))));
    return out;
  }

  // random_simplex: uniform composition of the original total into m parts >= 1,
  // via m-1 distinct cut points in {1, ..., total-1}
  size_t total = 0;
  for (const auto& s : specs) total += s.size;
  size_t m = specs.size();
  if (total < m) throw std::invalid_argument("apply_size_shift: total too small to split");
  auto cuts_idx = draw_without_replacement(total - 1, m - 1, rng);
  std::vector<size_t> cuts(cuts_idx);
  for (size_t& c : cuts) c += 1;  // shift into {1, ..., total-1}
  std::sort(cuts.begin(), cuts.end());
  size_t prev = 0;
  for (size_t j = 0; j < m; ++j) {
    size_t next = (j + 1 == m) ? total : cuts[j];
    out[j].size = next - prev;
    prev = next;
  }
  return out;
}

// --- CSV ---------------------------------------------------------------------

LabeledPool load_pool_csv(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("load_pool: cannot open " + path);
  std::string content;
  char buf[1 << 16];
  size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) content.append(buf, got);
  std::fclose(f);

  LabeledPool pool;
  size_t line_no = 0;
  size_t d = 0;
  size_t pos = 0;
  std::vector<double> row;
  while (pos < content.size()) {
    size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    std::string line = content.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;

    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }

    if (line_no == 1) {
      if (fields.empty() || fields[0] != "label")
        throw ParseError(path + ": header must start with 'label'");
      if (fields.size() < 2) throw ParseError(path + ": header has no feature columns");
      d = fields.size() - 1;
      pool.features.cols = d;
      continue;
    }
    if (fields.size() != d + 1)
      throw ParseError(path + ": row " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " columns, expected " +
                       std::to_string(d + 1));

    int label;
    if (fields[0] == "+1" || fields[0] == "1")
      label = 1;
    else if (fields[0] == "-1")
      label = -1;
    else
      throw ParseError(path + ": row " + std::to_string(line_no) + " has label '" + fields[0] +
                       "', expected +1 or -1");

    row.resize(d);
    for (size_t j = 0; j < d; ++j) {
      char* end = nullptr;
      row[j] = std::strtod(fields[j + 1].c_str(), &end);
      if (end == fields[j + 1].c_str() || *end != '\0')
        throw ParseError(path + ": row " + std::to_string(line_no) + " has a bad number '" +
                         fields[j + 1] + "'");
    }
    pool.features.append_row(row.data());
    pool.labels.push_back(label);
  }
  if (line_no == 0) throw ParseError(path + ": empty file");
  return pool;
}

void save_pool_csv(const std::string& path, const Matrix& features, const std::vector<int>& labels) {
  if (features.rows != labels.size())
    throw std::invalid_argument("save_pool_csv: rows and labels differ");
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("save_pool_csv: cannot open " + path + " for writing");
  std::fputs("label", f);
  for (size_t j = 1; j <= features.cols; ++j) std::fprintf(f, ",f%zu", j);
  std::fputc('\n', f);
  for (size_t i = 0; i < features.rows; ++i) {
    std::fprintf(f, "%+d", labels[i]);
    // %.17g round-trips doubles exactly
    for (size_t j = 0; j < features.cols; ++j) std::fprintf(f, ",%.17g", features.at(i, j));
    std::fputc('\n', f);
  }
  std::fclose(f);
}

// --- idx ----------------------------------------------------------------------

namespace {

uint32_t read_be32(FILE* f, const std::string& path, const char* what) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4)
    throw ParseError(path + ": truncated while reading " + what);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

}  // namespace

MulticlassPool load_idx(const std::string& images_path, const std::string& labels_path) {
  FILE* fi = std::fopen(images_path.c_str(), "rb");
  if (!fi) throw std::runtime_error("load_idx: cannot open " + images_path);
  uint32_t magic = read_be32(fi, images_path, "magic");
  if (magic != 0x00000803) {
    std::fclose(fi);
    throw ParseError(images_path + ": bad image magic");
  }
  uint32_t n = read_be32(fi, images_path, "count");
  uint32_t rows = read_be32(fi, images_path, "rows");
  uint32_t cols = read_be32(fi, images_path, "cols");
  size_t d = size_t(rows) * size_t(cols);
  std::vector<unsigned char> pixels(size_t(n) * d);
  if (std::fread(pixels.data(), 1, pixels.size(), fi) != pixels.size()) {
    std::fclose(fi);
    throw ParseError(images_path + ": truncated pixel data");
  }
  std::fclose(fi);

  FILE* fl = std::fopen(labels_path.c_str(), "rb");
  if (!fl) throw std::runtime_error("load_idx: cannot open " + labels_path);
  uint32_t lmagic = read_be32(fl, labels_path, "magic");
  if (lmagic != 0x00000801) {
    std::fclose(fl);
    throw ParseError(labels_path + ": bad label magic");
  }
  uint32_t ln = read_be32(fl, labels_path, "count");
  if (ln != n) {
    std::fclose(fl);
    throw ParseError(labels_path + ": label count " + std::to_string(ln) +
                     " does not match image count " + std::to_string(n));
  }
  std::vector<unsigned char> raw(ln);
  if (std::fread(raw.data(), 1, raw.size(), fl) != raw.size()) {
    std::fclose(fl);
    throw ParseError(labels_path + ": truncated label data");
  }
  std::fclose(fl);

  MulticlassPool pool;
  pool.features = Matrix(n, d);
  for (size_t i = 0; i < size_t(n) * d; ++i) pool.features.data[i] = double(pixels[i]) / 255.0;
  pool.labels.assign(raw.begin(), raw.end());
  return pool;
}

LabeledPool load_pool(const std::string& path, PoolFormat format,
                      const std::set<int>& positive_classes) {
  if (format == PoolFormat::csv) return load_pool_csv(path);
  std::string labels_path = path;
  auto replace_all = [](std::string& s, const std::string& from, const std::string& to) {
    size_t at = 0;
    while ((at = s.find(from, at)) != std::string::npos) {
      s.replace(at, from.size(), to);
      at += to.size();
    }
  };
  replace_all(labels_path, "images", "labels");
  replace_all(labels_path, "idx3", "idx1");
  if (labels_path == path)
    throw std::invalid_argument("load_pool: cannot derive a labels path from " + path);
  return make_binary_task(load_idx(path, labels_path), positive_classes);
}

}  // namespace ubags
