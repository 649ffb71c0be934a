#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "calprune/dataset.hpp"
#include "calprune/rng.hpp"

namespace calprune {

enum class DataSource { gaussian_mixture, idx_pair, csv };

struct DatasetSpec {
  DataSource source = DataSource::gaussian_mixture;
  std::size_t num_classes = 2;
  std::vector<std::size_t> per_class;  // gaussian_mixture: instances drawn per class
  double noise = 0.0;                  // label-flip probability, in [0, 0.5)
  std::uint64_t seed = 0;
  double radius = 3.0;                 // class means sit on a circle of this radius
  std::filesystem::path images, labels, csv;
  std::string label_column = "y";

  void validate() const {
    if (num_classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
    if (!(noise >= 0.0 && noise < 0.5)) throw std::invalid_argument("label noise must lie in [0, 0.5)");
    if (source == DataSource::gaussian_mixture) {
      if (per_class.size() != num_classes) throw std::invalid_argument("per-class sizes must list one size per class");
      for (std::size_t n : per_class) {
        if (n == 0) throw std::invalid_argument("per-class sizes must be positive");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Gaussian mixture in 2-D: class k has mean radius * (cos 2πk/K, sin 2πk/K) and
// identity covariance. Means do not depend on the seed, so train, validation
// and test draws with different seeds share one distribution.

inline std::vector<std::pair<double, double>> mixture_means(std::size_t num_classes, double radius) {
  std::vector<std::pair<double, double>> means;
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(num_classes);
    means.emplace_back(radius * std::cos(a), radius * std::sin(a));
  }
  return means;
}

/// Flips `label` to a uniformly chosen different class with probability `noise`.
inline std::size_t noisy_label(Rng& rng, std::size_t label, std::size_t num_classes, double noise) {
  if (noise <= 0.0 || !rng.bernoulli(noise)) return label;
  std::size_t other = static_cast<std::size_t>(rng.below(num_classes - 1));
  if (other >= label) ++other;
  return other;
}

inline Dataset generate_gaussian_mixture(const DatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto means = mixture_means(spec.num_classes, spec.radius);
  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.feature_dim = 2;
  std::size_t id = 0;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t i = 0; i < spec.per_class[k]; ++i) {
      Instance inst;
      const double x0 = means[k].first + rng.normal();
      const double x1 = means[k].second + rng.normal();
      inst.features = {x0, x1};
      inst.label = noisy_label(rng, k, spec.num_classes, spec.noise);
      inst.id = id++;
      ds.instances.push_back(std::move(inst));
    }
  }
  return ds;
}

/// Exact class posterior of the mixture at x, including the label-flip channel:
/// p(y=k|x) = (1-noise) * pi_k(x) + noise/(K-1) * (1 - pi_k(x)).
inline std::vector<double> mixture_posterior(const std::vector<double>& x, std::size_t num_classes, double noise,
                                             double radius = 3.0) {
  const auto means = mixture_means(num_classes, radius);
  std::vector<double> logit(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double d0 = x[0] - means[k].first, d1 = x[1] - means[k].second;
    logit[k] = -0.5 * (d0 * d0 + d1 * d1);
  }
  const double m = *std::max_element(logit.begin(), logit.end());
  double s = 0.0;
  for (double& l : logit) s += (l = std::exp(l - m));
  std::vector<double> post(num_classes);
  const double off = num_classes > 1 ? noise / static_cast<double>(num_classes - 1) : 0.0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double clean = logit[k] / s;
    post[k] = (1.0 - noise) * clean + off * (1.0 - clean);
  }
  return post;
}

// ---------------------------------------------------------------------------
// IDX files (big-endian):
//   offset 0  u32 magic   0x00000803 images (3 dims) / 0x00000801 labels (1 dim)
//   offset 4  u32 count
//   images:   offset 8 u32 rows, offset 12 u32 cols, offset 16 count*rows*cols u8 pixels
//   labels:   offset 8 count u8 labels

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                               const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw std::runtime_error(path.string() + ": truncated header, need 4 bytes at offset " + std::to_string(offset) +
                             ", file has " + std::to_string(bytes.size()));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void expect_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
  if (got != want) {
    std::ostringstream os;
    os << path.string() << ": bad IDX magic at offset 0: got 0x" << std::hex << got << ", expected 0x" << want;
    throw std::runtime_error(os.str());
  }
}

}  // namespace detail

/// Loads an IDX image/label pair; pixels are scaled by 1/255. When
/// `num_classes` is not given it is one more than the largest label.
inline Dataset load_idx_pair(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                             std::optional<std::size_t> num_classes = std::nullopt) {
  const auto img = detail::read_file_bytes(images_path);
  const auto lab = detail::read_file_bytes(labels_path);
  detail::expect_magic(detail::read_be32(img, 0, images_path), kIdxImagesMagic, images_path);
  detail::expect_magic(detail::read_be32(lab, 0, labels_path), kIdxLabelsMagic, labels_path);
  const std::size_t n_img = detail::read_be32(img, 4, images_path);
  const std::size_t rows = detail::read_be32(img, 8, images_path);
  const std::size_t cols = detail::read_be32(img, 12, images_path);
  const std::size_t n_lab = detail::read_be32(lab, 4, labels_path);
  if (n_img != n_lab) {
    throw std::runtime_error("IDX count mismatch: " + std::to_string(n_img) + " images (offset 4 of " +
                             images_path.string() + ") vs " + std::to_string(n_lab) + " labels (offset 4 of " +
                             labels_path.string() + ")");
  }
  const std::size_t dim = rows * cols;
  const std::size_t need_img = 16 + n_img * dim;
  if (img.size() < need_img) {
    throw std::runtime_error(images_path.string() + ": truncated pixel data, expected " + std::to_string(need_img) +
                             " bytes, file ends at offset " + std::to_string(img.size()));
  }
  if (lab.size() < 8 + n_lab) {
    throw std::runtime_error(labels_path.string() + ": truncated label data, expected " +
                             std::to_string(8 + n_lab) + " bytes, file ends at offset " + std::to_string(lab.size()));
  }
  Dataset ds;
  ds.feature_dim = dim;
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n_img; ++i) {
    Instance inst;
    inst.features.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) inst.features[j] = static_cast<double>(img[16 + i * dim + j]) / 255.0;
    inst.label = lab[8 + i];
    inst.id = i;
    max_label = std::max(max_label, inst.label);
    ds.instances.push_back(std::move(inst));
  }
  ds.num_classes = num_classes.value_or(std::max<std::size_t>(2, max_label + 1));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.instances[i].label >= ds.num_classes) {
      throw std::runtime_error(labels_path.string() + ": label " + std::to_string(ds.instances[i].label) +
                               " at offset " + std::to_string(8 + i) + " is outside [0, " +
                               std::to_string(ds.num_classes) + ")");
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CSV: comma separated, first line is a header naming every column; the label
// column holds non-negative integers, every other column is a numeric feature.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

inline std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

inline Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                        std::optional<std::size_t> num_classes = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) == std::vector<std::string>{""}) {
    throw std::runtime_error(path.string() + ": empty file, expected a header row");
  }
  const auto header = detail::split_csv_line(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) throw std::runtime_error(path.string() + ": no label column '" + label_column + "'");
  const std::size_t label_col = static_cast<std::size_t>(label_it - header.begin());

  Dataset ds;
  ds.feature_dim = header.size() - 1;
  std::size_t row = 1;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(row) + " has " +
                               std::to_string(cells.size()) + " columns, header has " + std::to_string(header.size()));
    }
    Instance inst;
    inst.id = ds.size();
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = detail::parse_number(cells[c]);
      if (!v) {
        throw std::runtime_error(path.string() + ": row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                                 " ('" + header[c] + "'): not a number: '" + cells[c] + "'");
      }
      if (c == label_col) {
        if (*v < 0.0 || *v != std::floor(*v)) {
          throw std::runtime_error(path.string() + ": row " + std::to_string(row) + ": label '" + cells[c] +
                                   "' is not a non-negative integer");
        }
        inst.label = static_cast<std::size_t>(*v);
        max_label = std::max(max_label, inst.label);
      } else {
        inst.features.push_back(*v);
      }
    }
    if (num_classes && inst.label >= *num_classes) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(row) + ": label " +
                               std::to_string(inst.label) + " outside [0, " + std::to_string(*num_classes) + ")");
    }
    ds.instances.push_back(std::move(inst));
  }
  if (ds.empty()) throw std::runtime_error(path.string() + ": no data rows");
  ds.num_classes = num_classes.value_or(std::max<std::size_t>(2, max_label + 1));
  return ds;
}

inline Dataset load_dataset(const DatasetSpec& spec) {
  switch (spec.source) {
    case DataSource::gaussian_mixture: return generate_gaussian_mixture(spec);
    case DataSource::idx_pair: return load_idx_pair(spec.images, spec.labels, spec.num_classes);
    case DataSource::csv: return load_csv(spec.csv, spec.label_column, spec.num_classes);
  }
  throw std::invalid_argument("unknown data source");
}

// ---------------------------------------------------------------------------

/// Per class: seeded shuffle, first floor(fraction * n_k) to train, the rest to
/// validation. Both halves keep the input order; train EMA scores are reset to 0.
inline std::pair<ScoredDataset, Dataset> stratified_split(const Dataset& dataset, double train_fraction,
                                                          std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train fraction must lie in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class.at(dataset.instances[i].label).push_back(i);

  std::vector<bool> to_train(dataset.size(), false);
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto members = by_class[k];
    if (members.size() < 2) {
      throw std::invalid_argument("class " + std::to_string(k) + " has " + std::to_string(members.size()) +
                                  " instances; a split needs at least 2");
    }
    Rng rng(mix_seed(seed, k));
    rng.shuffle(members);
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(members.size())));
    for (std::size_t r = 0; r < n_train; ++r) to_train[members[r]] = true;
  }

  ScoredDataset train;
  Dataset val;
  train.num_classes = val.num_classes = dataset.num_classes;
  train.feature_dim = val.feature_dim = dataset.feature_dim;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    Instance inst = dataset.instances[i];
    inst.ema = 0.0;
    (to_train[i] ? train : val).instances.push_back(std::move(inst));
  }
  return {std::move(train), std::move(val)};
}

/// Positions 0..n-1 permuted by a generator seeded from (seed, epoch), cut into
/// consecutive blocks of batch_size; the last block may be shorter.
inline std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size, std::size_t epoch,
                                                         std::uint64_t seed) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(perm);
  std::vector<std::vector<std::size_t>> blocks;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    blocks.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start), perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return blocks;
}

}  // namespace calprune
