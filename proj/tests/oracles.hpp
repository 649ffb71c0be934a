#pragma once

// Reference implementations written directly from the definitions, kept
// deliberately naive so they share no code paths with the library.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

#include "calprune/dataset.hpp"
#include "calprune/metrics.hpp"
#include "calprune/rng.hpp"

namespace calprune::testing {

// ECE = sum over bins (lo, hi] of |B|/n * |acc(B) - conf(B)|, with membership
// decided by comparing against the edge values m/M directly.
inline double oracle_ece(const std::vector<EvalRecord>& records, std::size_t bins) {
  const double n = static_cast<double>(records.size());
  double ece = 0.0;
  for (std::size_t m = 1; m <= bins; ++m) {
    const double lo = static_cast<double>(m - 1) / static_cast<double>(bins);
    const double hi = static_cast<double>(m) / static_cast<double>(bins);
    double count = 0, conf = 0, correct = 0;
    for (const auto& r : records) {
      const bool in = (m == 1) ? r.confidence <= hi : (r.confidence > lo && r.confidence <= hi);
      if (!in) continue;
      count += 1;
      conf += r.confidence;
      correct += r.correct ? 1 : 0;
    }
    if (count > 0) ece += count / n * std::abs(correct / count - conf / count);
  }
  return ece;
}

inline std::optional<double> oracle_subset_ece(const std::vector<EvalRecord>& records, double delta,
                                               std::size_t bins) {
  std::vector<EvalRecord> s;
  for (const auto& r : records) {
    if (r.confidence >= delta) s.push_back(r);
  }
  if (s.empty()) return std::nullopt;
  return oracle_ece(s, bins);
}

// O(n^2) pair count: a correct record beating an incorrect one scores 1, a tie 1/2.
inline std::optional<double> oracle_auroc(const std::vector<EvalRecord>& records) {
  double wins = 0, pairs = 0;
  for (const auto& a : records) {
    if (!a.correct) continue;
    for (const auto& b : records) {
      if (b.correct) continue;
      pairs += 1;
      if (a.confidence > b.confidence) wins += 1;
      else if (a.confidence == b.confidence) wins += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / pairs;
}

// e_j = kappa * sum_{t=1..j} (1 - kappa)^(j - t) c_t
inline double oracle_ema(const std::vector<double>& c, double kappa) {
  const std::size_t j = c.size();
  double e = 0.0;
  for (std::size_t t = 1; t <= j; ++t) e += kappa * std::pow(1.0 - kappa, static_cast<double>(j - t)) * c[t - 1];
  return e;
}

// Ids removed from one class: the floor(eps/100 * n) smallest (ema, id) pairs.
inline std::set<std::size_t> oracle_pruned_ids(const std::vector<Instance>& members, double epsilon) {
  std::vector<std::pair<double, std::size_t>> keyed;
  for (const auto& m : members) keyed.emplace_back(m.ema, m.id);
  std::sort(keyed.begin(), keyed.end());
  const auto count = static_cast<std::size_t>(std::floor(epsilon / 100.0 * static_cast<double>(members.size())));
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i) out.insert(keyed[i].second);
  return out;
}

// Class size after `times` prunes at epsilon percent.
inline std::size_t oracle_compound(std::size_t n, double epsilon, std::size_t times) {
  for (std::size_t i = 0; i < times; ++i) {
    n -= static_cast<std::size_t>(std::floor(epsilon / 100.0 * static_cast<double>(n)));
  }
  return n;
}

// Random records; a fraction of confidences snap to bin edges or repeat, so
// boundary and tie handling is exercised.
inline std::vector<EvalRecord> random_records(Rng& rng, std::size_t n, std::size_t bins) {
  std::vector<EvalRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double c;
    const double u = rng.uniform();
    if (u < 0.15) {
      c = static_cast<double>(rng.below(bins + 1)) / static_cast<double>(bins);
    } else if (u < 0.25 && !out.empty()) {
      c = out[rng.below(out.size())].confidence;
    } else {
      c = rng.uniform();
    }
    const bool correct = rng.uniform() < c;
    out.push_back(EvalRecord{c, correct, 0, correct ? 0u : 1u});
  }
  return out;
}

inline Dataset random_scored_dataset(Rng& rng, const std::vector<std::size_t>& class_sizes, bool coarse_ema) {
  Dataset ds;
  ds.num_classes = class_sizes.size();
  ds.feature_dim = 1;
  std::vector<Instance> all;
  std::size_t id = 0;
  for (std::size_t k = 0; k < class_sizes.size(); ++k) {
    for (std::size_t i = 0; i < class_sizes[k]; ++i) {
      const double ema = coarse_ema ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
      all.push_back(Instance{{static_cast<double>(id)}, k, id, ema});
      ++id;
    }
  }
  rng.shuffle(all);
  ds.instances = std::move(all);
  return ds;
}

}  // namespace calprune::testing
