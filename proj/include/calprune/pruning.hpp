#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "calprune/dataset.hpp"

namespace calprune {

/// Destination for non-fatal diagnostics. Defaults to stderr; tests may swap it.
inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& msg) { warning_sink()(msg); }

struct PruneSchedule {
  double epsilon = 10.0;   // percent of each class removed per prune, in (0, 100)
  double kappa = 0.3;      // EMA weight of the newest confidence
  std::size_t interval = 5;          // prune every `interval` epochs; 0 disables the periodic form
  std::set<std::size_t> epochs;      // explicit prune epochs, used in addition to the interval
  std::size_t warmup_epochs = 0;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 100.0)) throw std::invalid_argument("prune.epsilon must lie in (0, 100)");
    if (!(kappa >= 0.0 && kappa <= 1.0)) throw std::invalid_argument("prune.kappa must lie in [0, 1]");
    if (interval == 0 && epochs.empty()) throw std::invalid_argument("prune schedule has neither interval nor epochs");
    if (epochs.count(0) != 0) throw std::invalid_argument("prune epochs are 1-based");
    if (!epochs.empty() && *epochs.begin() < warmup_epochs) {
      throw std::invalid_argument("prune epoch " + std::to_string(*epochs.begin()) + " precedes the warmup of " +
                                  std::to_string(warmup_epochs) + " epochs");
    }
  }
};

/// e <- kappa * c + (1 - kappa) * e for every instance, keyed by instance id.
inline ScoredDataset update_ema(const ScoredDataset& dataset, const std::unordered_map<std::size_t, double>& confidences,
                                double kappa) {
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw std::invalid_argument("kappa must lie in [0, 1]");
  if (kappa == 0.0) warn("EMA factor kappa = 0: scores never change");
  ScoredDataset out = dataset;
  for (auto& inst : out.instances) {
    auto it = confidences.find(inst.id);
    if (it == confidences.end()) {
      throw std::invalid_argument("no confidence recorded for instance id " + std::to_string(inst.id));
    }
    if (!(it->second >= 0.0 && it->second <= 1.0)) {
      throw std::invalid_argument("confidence for instance id " + std::to_string(inst.id) + " is outside [0, 1]");
    }
    inst.ema = kappa * it->second + (1.0 - kappa) * inst.ema;
  }
  return out;
}

/// Number removed from a class of size n at prune fraction epsilon (percent).
inline std::size_t prune_count(std::size_t n, double epsilon) {
  return static_cast<std::size_t>(std::floor(epsilon / 100.0 * static_cast<double>(n)));
}

/// Removes, per class, the floor(epsilon% * n_k) instances with the lowest EMA
/// (ties: lower id first). Survivors keep their relative order; classes are
/// concatenated in ascending class index.
inline ScoredDataset prune_using_ema(const ScoredDataset& dataset, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 100.0)) throw std::invalid_argument("prune epsilon must lie in (0, 100)");
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < dataset.instances.size(); ++i) by_class.at(dataset.instances[i].label).push_back(i);

  ScoredDataset out;
  out.num_classes = dataset.num_classes;
  out.feature_dim = dataset.feature_dim;
  out.instances.reserve(dataset.size());
  std::vector<bool> removed(dataset.size(), false);
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    const auto& members = by_class[k];
    if (members.empty()) throw std::invalid_argument("class " + std::to_string(k) + " has no instances to prune");
    std::vector<std::size_t> order = members;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& ia = dataset.instances[a];
      const auto& ib = dataset.instances[b];
      if (ia.ema != ib.ema) return ia.ema < ib.ema;
      return ia.id < ib.id;
    });
    const std::size_t m = prune_count(members.size(), epsilon);
    for (std::size_t r = 0; r < m; ++r) removed[order[r]] = true;
    for (std::size_t i : members) {
      if (!removed[i]) out.instances.push_back(dataset.instances[i]);
    }
  }
  return out;
}

inline bool should_prune(std::size_t epoch, const PruneSchedule& schedule) {
  if (epoch < schedule.warmup_epochs) return false;
  if (schedule.interval != 0 && epoch % schedule.interval == 0) return true;
  return schedule.epochs.count(epoch) != 0;
}

}  // namespace calprune
