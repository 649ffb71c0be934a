#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <unistd.h>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "calprune/config.hpp"
#include "calprune/digest.hpp"
#include "calprune/model.hpp"
#include "calprune/report.hpp"
#include "calprune/svg.hpp"
#include "calprune/trainer.hpp"

namespace calprune {

/// Environment variable that, when set, replaces the output directory.
inline constexpr const char* kOutputDirEnv = "CALPRUNE_OUTPUT_DIR";

inline constexpr const char* kRunFile = "run.json";
inline constexpr const char* kEvalFile = "report.json";
inline constexpr const char* kReliabilityCsv = "reliability.csv";
inline constexpr const char* kHistogramCsv = "histogram.csv";
inline constexpr const char* kReliabilitySvg = "reliability.svg";
inline constexpr const char* kHistogramSvg = "histogram.svg";
inline constexpr const char* kCheckpointFile = "model.json";
inline constexpr const char* kManifestFile = "manifest.json";

/// Named file contents written together, followed by a manifest of digests.
/// Files land in a temporary sibling directory that is renamed into place
/// only once everything, manifest included, is on disk.
class Bundle {
 public:
  void add(const std::string& name, std::string contents) { files_.emplace_back(name, std::move(contents)); }

  const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

  nlohmann::json manifest(double wall_clock_seconds) const {
    nlohmann::json m;
    m["format"] = "calprune-manifest";
    m["version"] = 1;
    m["files"] = nlohmann::json::array();
    for (const auto& [name, body] : files_) {
      m["files"].push_back({{"name", name}, {"bytes", body.size()}, {"sha256", sha256_hex(body)}});
    }
    m["wall_clock_seconds"] = round6(wall_clock_seconds);
    return m;
  }

  void write(const std::filesystem::path& dir, double wall_clock_seconds, bool force) const {
    namespace fs = std::filesystem;
    if (fs::exists(dir)) {
      if (!force && !fs::is_empty(dir)) {
        throw std::runtime_error("output directory " + dir.string() + " exists and is not empty (use --force)");
      }
    }
    const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
    fs::create_directories(parent);
    const fs::path tmp = parent / ("." + dir.filename().string() + ".tmp-" + std::to_string(::getpid()));
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    for (const auto& [name, body] : files_) write_file(tmp / name, body);
    write_file(tmp / kManifestFile, manifest(wall_clock_seconds).dump(2) + "\n");
    if (fs::exists(dir)) fs::remove_all(dir);
    fs::rename(tmp, dir);
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;

  static void write_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    out << body;
    if (!out) throw std::runtime_error("failed writing " + path.string());
  }
};

inline void add_report_files(Bundle& bundle, const CalibrationReport& report, const std::string& title) {
  SvgStyle style;
  style.title = title;
  bundle.add(kReliabilityCsv, reliability_csv(report));
  bundle.add(kHistogramCsv, histogram_csv(report));
  bundle.add(kReliabilitySvg, render_reliability_svg(export_reliability_data(report), style));
  bundle.add(kHistogramSvg, render_histogram_svg(confidence_histogram(report), style));
}

/// Output directory precedence: explicit flag, then the environment
/// variable, then the configured value.
inline std::filesystem::path resolve_output_dir(const std::optional<std::filesystem::path>& flag,
                                                const std::filesystem::path& configured) {
  if (flag) return *flag;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return configured;
}

struct TrainOutcome {
  RunResult run;
  std::filesystem::path output_dir;
  nlohmann::json run_document;
};

/// Loads data, trains, evaluates and writes the run bundle. Prints one
/// "name value" line per metric to `out`.
inline TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& out, bool force = false) {
  Splits splits = load_splits(cfg);
  const MlpParams init = init_mlp(mlp_widths(cfg, splits.train.feature_dim), cfg.model_seed);
  RunResult run = train_with_pruning(splits.train, splits.test, init, cfg.train);

  nlohmann::json config_echo = cfg.normalized;
  config_echo["dataset"]["train_size"] = splits.train.size();
  config_echo["dataset"]["val_size"] = splits.val.size();
  config_echo["dataset"]["test_size"] = splits.test.size();
  nlohmann::json doc = run_json(run, config_echo);

  Bundle bundle;
  bundle.add(kRunFile, doc.dump(2) + "\n");
  add_report_files(bundle, run.test_report, "Test reliability");
  bundle.add(kCheckpointFile, checkpoint_json(run.params).dump(1) + "\n");
  const auto& dir = cfg.output_dir;
  bundle.write(dir, run.wall_clock_seconds, force);

  out << metric_lines(run.test_report);
  out << "sample_updates " << run.total_sample_updates << '\n';
  out << "sample_updates_without_pruning " << doc["sample_updates"]["without_pruning"].get<std::size_t>() << '\n';
  out << "prune_events " << run.prune_events.size() << '\n';
  out << "output_dir " << dir.string() << '\n';
  return TrainOutcome{std::move(run), dir, std::move(doc)};
}

inline void check_compatible(const MlpParams& params, const Dataset& data) {
  if (data.feature_dim != params.input_dim()) {
    throw std::invalid_argument("data has " + std::to_string(data.feature_dim) + " features, checkpoint expects " +
                                std::to_string(params.input_dim()));
  }
  if (data.num_classes != params.num_classes()) {
    throw std::invalid_argument("data has " + std::to_string(data.num_classes) + " classes, checkpoint has " +
                                std::to_string(params.num_classes()));
  }
}

/// Evaluation-only bundle for a checkpoint on a dataset.
inline CalibrationReport cmd_evaluate(const MlpParams& params, const Dataset& data, std::size_t bins,
                                      const std::vector<double>& deltas, const std::filesystem::path& out_dir,
                                      std::ostream& out, bool force = false) {
  check_compatible(params, data);
  const CalibrationReport report = evaluate_model(params, data, bins, deltas);
  nlohmann::json doc;
  doc["format"] = "calprune-eval";
  doc["version"] = 1;
  doc["report"] = report_json(report);
  Bundle bundle;
  bundle.add(kEvalFile, doc.dump(2) + "\n");
  add_report_files(bundle, report, "Reliability");
  const auto& dir = out_dir;
  bundle.write(dir, 0.0, force);
  out << metric_lines(report);
  out << "output_dir " << dir.string() << '\n';
  return report;
}

struct CalibrationOutcome {
  TemperatureFit fit;
  CalibrationReport before;
  CalibrationReport after;
};

/// Fits a temperature on `val`, reports test metrics before and after
/// scaling, and writes the post-scaling bundle.
inline CalibrationOutcome cmd_calibrate(const MlpParams& params, const Dataset& val, const Dataset& test,
                                        std::size_t bins, const std::vector<double>& deltas,
                                        const std::filesystem::path& out_dir, std::ostream& out, bool force = false,
                                        const TemperatureSearch& search = {}) {
  check_compatible(params, val);
  check_compatible(params, test);
  CalibrationOutcome o;
  o.fit = fit_temperature(params, val, search);
  o.before = evaluate_model(params, test, bins, deltas);
  o.after = evaluate_with_temperature(params, test, o.fit.temperature, bins, deltas);
  nlohmann::json doc;
  doc["format"] = "calprune-calibration";
  doc["version"] = 1;
  doc["temperature"] = round6(o.fit.temperature);
  doc["val_nll_before"] = round6(o.fit.nll_before);
  doc["val_nll_after"] = round6(o.fit.nll_after);
  doc["before"] = report_json(o.before);
  doc["report"] = report_json(o.after);
  Bundle bundle;
  bundle.add(kEvalFile, doc.dump(2) + "\n");
  add_report_files(bundle, o.after, "Reliability after temperature scaling");
  const auto& dir = out_dir;
  bundle.write(dir, 0.0, force);
  out << "temperature " << fmt6(o.fit.temperature) << '\n';
  out << "val_nll_before " << fmt6(o.fit.nll_before) << '\n';
  out << "val_nll_after " << fmt6(o.fit.nll_after) << '\n';
  out << "ece_before " << fmt6(o.before.ece) << '\n';
  out << "ece_after " << fmt6(o.after.ece) << '\n';
  out << "test_error_before_percent " << fmt6(o.before.test_error) << '\n';
  out << "test_error_after_percent " << fmt6(o.after.test_error) << '\n';
  out << "output_dir " << dir.string() << '\n';
  return o;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Verifies a bundle's manifest digests and prints the metrics it records.
/// Returns the number of files whose digest does not match.
inline std::size_t cmd_report(const std::filesystem::path& dir, std::ostream& out) {
  const auto manifest = nlohmann::json::parse(read_text_file(dir / kManifestFile));
  if (manifest.value("format", "") != "calprune-manifest") throw std::runtime_error("not a calprune manifest");
  std::size_t bad = 0;
  for (const auto& f : manifest.at("files")) {
    const std::string name = f.at("name").get<std::string>();
    const auto path = dir / name;
    const bool ok = std::filesystem::exists(path) && sha256_hex(read_text_file(path)) == f.at("sha256").get<std::string>();
    if (!ok) ++bad;
    out << "file " << name << ' ' << (ok ? "ok" : "MISMATCH") << '\n';
  }
  nlohmann::json doc;
  if (std::filesystem::exists(dir / kRunFile)) {
    doc = nlohmann::json::parse(read_text_file(dir / kRunFile));
    out << metric_lines(report_from_json(doc.at("test")));
    out << "sample_updates " << doc.at("sample_updates").at("total").get<std::size_t>() << '\n';
    out << "sample_updates_without_pruning " << doc.at("sample_updates").at("without_pruning").get<std::size_t>()
        << '\n';
  } else if (std::filesystem::exists(dir / kEvalFile)) {
    doc = nlohmann::json::parse(read_text_file(dir / kEvalFile));
    out << metric_lines(report_from_json(doc.at("report")));
  }
  out << "wall_clock_seconds " << fmt6(manifest.value("wall_clock_seconds", 0.0)) << '\n';
  return bad;
}

}  // namespace calprune
