#pragma once

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "calprune/metrics.hpp"
#include "calprune/trainer.hpp"

namespace calprune {

/// Six significant digits, the fixed precision of every human-facing number.
inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// v rounded to six significant digits, for JSON reports.
inline double round6(double v) { return std::strtod(fmt6(v).c_str(), nullptr); }

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(round6(*v)) : nlohmann::json(nullptr);
}

inline nlohmann::json report_json(const CalibrationReport& r) {
  nlohmann::json j;
  j["num_records"] = r.num_records;
  j["ece"] = round6(r.ece);
  j["test_error_percent"] = round6(r.test_error);
  j["auroc"] = optional_json(r.auroc);
  j["nll"] = round6(r.nll);
  j["bins"] = nlohmann::json::array();
  for (const auto& b : r.bins) {
    j["bins"].push_back({{"lower", round6(b.lower)},
                         {"upper", round6(b.upper)},
                         {"count", b.count},
                         {"mean_confidence", round6(b.mean_confidence)},
                         {"accuracy", round6(b.accuracy)}});
  }
  j["subsets"] = nlohmann::json::array();
  for (const auto& s : r.subsets) {
    j["subsets"].push_back({{"delta", round6(s.delta)},
                            {"count", s.count},
                            {"fraction_percent", round6(s.fraction_percent)},
                            {"ece", optional_json(s.ece)},
                            {"empty", !s.ece.has_value()}});
  }
  return j;
}

inline CalibrationReport report_from_json(const nlohmann::json& j) {
  CalibrationReport r;
  r.num_records = j.at("num_records").get<std::size_t>();
  r.ece = j.at("ece").get<double>();
  r.test_error = j.at("test_error_percent").get<double>();
  if (!j.at("auroc").is_null()) r.auroc = j.at("auroc").get<double>();
  r.nll = j.value("nll", 0.0);
  for (const auto& b : j.at("bins")) {
    r.bins.push_back({b.at("lower").get<double>(), b.at("upper").get<double>(), b.at("count").get<std::size_t>(),
                      b.at("mean_confidence").get<double>(), b.at("accuracy").get<double>()});
  }
  for (const auto& s : j.at("subsets")) {
    SubsetEntry e{s.at("delta").get<double>(), s.at("count").get<std::size_t>(),
                  s.at("fraction_percent").get<double>(), std::nullopt};
    if (!s.at("ece").is_null()) e.ece = s.at("ece").get<double>();
    r.subsets.push_back(e);
  }
  return r;
}

/// Run document (format "calprune-run", version 1). Wall-clock time is kept out
/// so identical runs serialise to identical bytes.
inline nlohmann::json run_json(const RunResult& run, const nlohmann::json& config) {
  nlohmann::json j;
  j["format"] = "calprune-run";
  j["version"] = 1;
  j["config"] = config;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : run.epochs) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", round6(e.train_loss)},
                           {"learning_rate", round6(e.learning_rate)},
                           {"surviving", e.surviving},
                           {"samples_processed", e.samples_processed}});
  }
  j["prune_events"] = nlohmann::json::array();
  for (const auto& p : run.prune_events) {
    j["prune_events"].push_back(
        {{"epoch", p.epoch}, {"removed_per_class", p.removed_per_class}, {"surviving_total", p.surviving_total}});
  }
  const std::size_t initial = run.epochs.empty() ? 0 : run.epochs.front().surviving;
  const std::size_t without = initial * run.epochs.size();
  j["sample_updates"] = {{"total", run.total_sample_updates},
                         {"without_pruning", without},
                         {"reduction_percent",
                          round6(without == 0 ? 0.0
                                              : 100.0 * static_cast<double>(without - run.total_sample_updates) /
                                                    static_cast<double>(without))}};
  j["test"] = report_json(run.test_report);
  return j;
}

inline std::string reliability_csv(const CalibrationReport& report) {
  std::ostringstream os;
  os << "bin_lower,bin_upper,count,confidence,accuracy,gap\n";
  for (const auto& row : export_reliability_data(report)) {
    os << fmt6(row.lower) << ',' << fmt6(row.upper) << ',' << row.count << ','
       << (row.confidence ? fmt6(*row.confidence) : "") << ',' << (row.accuracy ? fmt6(*row.accuracy) : "") << ','
       << (row.gap ? fmt6(*row.gap) : "") << '\n';
  }
  return os.str();
}

inline std::string histogram_csv(const CalibrationReport& report) {
  std::ostringstream os;
  os << "bin_lower,bin_upper,count,fraction\n";
  for (const auto& row : confidence_histogram(report)) {
    os << fmt6(row.lower) << ',' << fmt6(row.upper) << ',' << row.count << ',' << fmt6(row.fraction) << '\n';
  }
  return os.str();
}

/// One "name value" line per metric, in a fixed order.
inline std::string metric_lines(const CalibrationReport& r) {
  std::ostringstream os;
  os << "ece " << fmt6(r.ece) << '\n';
  for (const auto& s : r.subsets) {
    const std::string tag = fmt6(s.delta);
    os << "ece_s" << tag << ' ' << (s.ece ? fmt6(*s.ece) : std::string("empty")) << '\n';
    os << "size_s" << tag << "_percent " << fmt6(s.fraction_percent) << '\n';
  }
  os << "test_error_percent " << fmt6(r.test_error) << '\n';
  os << "auroc " << (r.auroc ? fmt6(*r.auroc) : std::string("undefined")) << '\n';
  os << "nll " << fmt6(r.nll) << '\n';
  return os.str();
}

}  // namespace calprune
