#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "calprune/array.hpp"

namespace calprune {

struct Instance {
  std::vector<double> features;
  std::size_t label = 0;
  std::size_t id = 0;   // stable across splits and pruning
  double ema = 0.0;     // EMA confidence score; 0 until the first update
};

/// Labelled instances over classes {0..num_classes-1}. When the EMA field is in
/// use (training set under pruning) this is the scored dataset.
struct Dataset {
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<Instance> instances;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (const auto& inst : instances) counts.at(inst.label) += 1;
    return counts;
  }

  /// Checks labels, feature widths and finiteness.
  void validate() const {
    if (num_classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& inst = instances[i];
      if (inst.label >= num_classes) {
        throw std::invalid_argument("instance " + std::to_string(i) + " has label " + std::to_string(inst.label) +
                                    " outside [0, " + std::to_string(num_classes) + ")");
      }
      if (inst.features.size() != feature_dim) {
        throw std::invalid_argument("instance " + std::to_string(i) + " has " +
                                    std::to_string(inst.features.size()) + " features, expected " +
                                    std::to_string(feature_dim));
      }
      for (double v : inst.features) {
        if (!std::isfinite(v)) throw std::invalid_argument("instance " + std::to_string(i) + " has a non-finite feature");
      }
    }
  }

  /// Features of the selected instances as an (n x d) array.
  Array feature_matrix(const std::vector<std::size_t>& rows) const {
    Array out = Array::zeros({rows.size(), feature_dim});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& f = instances[rows[r]].features;
      for (std::size_t j = 0; j < feature_dim; ++j) out.at(r, j) = f[j];
    }
    return out;
  }

  Array feature_matrix() const {
    std::vector<std::size_t> all(instances.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return feature_matrix(all);
  }

  /// Labels of the selected instances as a rank-1 array of class ids.
  Array label_vector(const std::vector<std::size_t>& rows) const {
    Array out = Array::zeros({rows.size()});
    for (std::size_t r = 0; r < rows.size(); ++r) out[r] = static_cast<double>(instances[rows[r]].label);
    return out;
  }
};

using ScoredDataset = Dataset;

}  // namespace calprune
