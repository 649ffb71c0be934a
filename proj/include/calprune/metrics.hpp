#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

namespace calprune {

struct EvalRecord {
  double confidence = 0.0;
  bool correct = false;
  std::size_t predicted = 0;
  std::size_t label = 0;
};

inline EvalRecord make_record(double confidence, std::size_t predicted, std::size_t label) {
  return EvalRecord{confidence, predicted == label, predicted, label};
}

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;  // 0 when count == 0
  double accuracy = 0.0;         // 0 when count == 0
};

struct SubsetEntry {
  double delta = 0.0;
  std::size_t count = 0;
  double fraction_percent = 0.0;
  std::optional<double> ece;  // nullopt marks an empty high-confidence subset
};

struct CalibrationReport {
  std::size_t num_records = 0;
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
  std::vector<SubsetEntry> subsets;
  double test_error = 0.0;       // percent
  std::optional<double> auroc;   // nullopt when all records are correct, or all incorrect
  double nll = 0.0;              // mean negative log-likelihood of the true label, when available
};

/// Bin index for confidence c among M equal bins ((m-1)/M, m/M]; c <= 0 goes to bin 0.
/// Edges are compared as the doubles m/M so every caller agrees on boundaries.
inline std::size_t bin_index(double c, std::size_t bins) {
  if (c <= 0.0) return 0;
  const double m = static_cast<double>(bins);
  std::size_t b = static_cast<std::size_t>(std::max(0.0, std::ceil(c * m) - 1.0));
  b = std::min(b, bins - 1);
  while (b > 0 && c <= static_cast<double>(b) / m) --b;
  while (b + 1 < bins && c > static_cast<double>(b + 1) / m) ++b;
  return b;
}

inline std::vector<CalibrationBin> calibration_bins(const std::vector<EvalRecord>& records, std::size_t num_bins) {
  if (num_bins < 1) throw std::invalid_argument("need at least one bin");
  std::vector<CalibrationBin> bins(num_bins);
  std::vector<double> conf_sum(num_bins, 0.0);
  std::vector<std::size_t> hits(num_bins, 0);
  const double m = static_cast<double>(num_bins);
  for (std::size_t b = 0; b < num_bins; ++b) {
    bins[b].lower = static_cast<double>(b) / m;
    bins[b].upper = static_cast<double>(b + 1) / m;
  }
  for (const auto& r : records) {
    const std::size_t b = bin_index(r.confidence, num_bins);
    bins[b].count += 1;
    conf_sum[b] += r.confidence;
    if (r.correct) hits[b] += 1;
  }
  for (std::size_t b = 0; b < num_bins; ++b) {
    if (bins[b].count == 0) continue;
    const double n = static_cast<double>(bins[b].count);
    bins[b].mean_confidence = conf_sum[b] / n;
    bins[b].accuracy = static_cast<double>(hits[b]) / n;
  }
  return bins;
}

/// sum_m |B_m|/n * |acc_m - conf_m|
inline double ece_from_bins(const std::vector<CalibrationBin>& bins) {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.count;
  if (n == 0) return 0.0;
  double ece = 0.0;
  for (const auto& b : bins) {
    if (b.count == 0) continue;
    ece += static_cast<double>(b.count) / static_cast<double>(n) * std::fabs(b.accuracy - b.mean_confidence);
  }
  return ece;
}

inline CalibrationReport binned_ece(const std::vector<EvalRecord>& records, std::size_t num_bins) {
  if (records.empty()) throw std::invalid_argument("binned_ece: no records");
  CalibrationReport report;
  report.num_records = records.size();
  report.bins = calibration_bins(records, num_bins);
  report.ece = ece_from_bins(report.bins);
  return report;
}

inline std::vector<EvalRecord> high_confidence_subset(const std::vector<EvalRecord>& records, double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must lie in (0, 1]");
  std::vector<EvalRecord> out;
  for (const auto& r : records) {
    if (r.confidence >= delta) out.push_back(r);
  }
  return out;
}

/// Size of S_delta as a percentage of all records.
inline double high_confidence_fraction(const std::vector<EvalRecord>& records, double delta) {
  if (records.empty()) return 0.0;
  return 100.0 * static_cast<double>(high_confidence_subset(records, delta).size()) /
         static_cast<double>(records.size());
}

/// ECE over S_delta only; nullopt when S_delta is empty.
inline std::optional<double> ece_on_subset(const std::vector<EvalRecord>& records, double delta,
                                           std::size_t num_bins) {
  const auto subset = high_confidence_subset(records, delta);
  if (subset.empty()) return std::nullopt;
  return binned_ece(subset, num_bins).ece;
}

inline SubsetEntry subset_entry(const std::vector<EvalRecord>& records, double delta, std::size_t num_bins) {
  SubsetEntry e;
  e.delta = delta;
  e.count = high_confidence_subset(records, delta).size();
  e.fraction_percent = records.empty() ? 0.0 : 100.0 * static_cast<double>(e.count) / static_cast<double>(records.size());
  e.ece = ece_on_subset(records, delta, num_bins);
  return e;
}

/// P(conf of a random correct record > conf of a random incorrect one), ties
/// counted one half. Computed from mid-ranks in O(n log n).
inline std::optional<double> refinement_auroc(const std::vector<EvalRecord>& records) {
  std::vector<std::pair<double, bool>> v;
  v.reserve(records.size());
  std::size_t pos = 0;
  for (const auto& r : records) {
    v.emplace_back(r.confidence, r.correct);
    if (r.correct) ++pos;
  }
  const std::size_t neg = v.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < v.size() && v[j].first == v[i].first) {
      if (v[j].second) ++pos_in_group;
      ++j;
    }
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    rank_sum += mid_rank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

/// Percentage of incorrect records.
inline double test_error(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("test_error: no records");
  std::size_t wrong = 0;
  for (const auto& r : records) {
    if (!r.correct) ++wrong;
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(records.size());
}

/// Full report: bins, ECE, one subset entry per delta, test error, AUROC.
inline CalibrationReport calibration_report(const std::vector<EvalRecord>& records, std::size_t num_bins,
                                            const std::vector<double>& deltas) {
  CalibrationReport report = binned_ece(records, num_bins);
  for (double d : deltas) report.subsets.push_back(subset_entry(records, d, num_bins));
  report.test_error = test_error(records);
  report.auroc = refinement_auroc(records);
  return report;
}

struct ReliabilityRow {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::optional<double> confidence;  // empty for an empty bin
  std::optional<double> accuracy;
  std::optional<double> gap;         // accuracy - confidence
};

inline std::vector<ReliabilityRow> export_reliability_data(const CalibrationReport& report) {
  std::vector<ReliabilityRow> rows;
  rows.reserve(report.bins.size());
  for (const auto& b : report.bins) {
    ReliabilityRow row{b.lower, b.upper, b.count, std::nullopt, std::nullopt, std::nullopt};
    if (b.count > 0) {
      row.confidence = b.mean_confidence;
      row.accuracy = b.accuracy;
      row.gap = b.accuracy - b.mean_confidence;
    }
    rows.push_back(row);
  }
  return rows;
}

struct HistogramRow {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double fraction = 0.0;
};

/// Confidence histogram over the same bins as the reliability table.
inline std::vector<HistogramRow> confidence_histogram(const CalibrationReport& report) {
  std::vector<HistogramRow> rows;
  for (const auto& b : report.bins) {
    const double f = report.num_records == 0 ? 0.0 : static_cast<double>(b.count) / static_cast<double>(report.num_records);
    rows.push_back({b.lower, b.upper, b.count, f});
  }
  return rows;
}

}  // namespace calprune
