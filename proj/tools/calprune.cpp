#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "calprune/calprune.hpp"

using namespace calprune;

namespace {

struct DataArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string csv, images, labels, label_column = "y";
  std::string val_csv, val_images, val_labels;
  std::optional<std::size_t> classes;
};

RunConfig config_from_args(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json root = path.empty() ? nlohmann::json::object() : read_config_file(path);
  for (const auto& text : overrides) {
    auto [key, value] = parse_override(text);
    apply_override(root, key, value);
  }
  return parse_run_config(root);
}

Dataset load_direct(const std::string& csv, const std::string& images, const std::string& labels,
                    const DataArgs& a) {
  if (!csv.empty()) return load_csv(csv, a.label_column, a.classes);
  if (!images.empty() && !labels.empty()) return load_idx_pair(images, labels, a.classes);
  throw std::invalid_argument("no dataset given: use --config, --csv or --images with --labels");
}

void add_data_options(CLI::App* cmd, DataArgs& a, bool with_val) {
  cmd->add_option("-c,--config", a.config, "Run configuration (JSON); its test split is used");
  cmd->add_option("--set", a.overrides, "Override a config key, e.g. --set loss.lambda=5");
  cmd->add_option("--csv", a.csv, "Test data as CSV");
  cmd->add_option("--images", a.images, "Test images (IDX)");
  cmd->add_option("--labels", a.labels, "Test labels (IDX)");
  cmd->add_option("--label-column", a.label_column, "CSV label column name");
  cmd->add_option("--classes", a.classes, "Number of classes");
  if (with_val) {
    cmd->add_option("--val-csv", a.val_csv, "Validation data as CSV");
    cmd->add_option("--val-images", a.val_images, "Validation images (IDX)");
    cmd->add_option("--val-labels", a.val_labels, "Validation labels (IDX)");
  }
}

std::vector<double> parse_deltas(const std::vector<std::string>& raw) {
  std::vector<double> out;
  for (const auto& text : raw) {
    if (text.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size()) throw std::invalid_argument("--deltas: not a number: '" + text + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibration-aware training with confidence-based data pruning"};
  app.require_subcommand(1);

  std::optional<std::string> out_flag;
  bool force = false;

  auto* train = app.add_subcommand("train", "Train a model and write a run bundle");
  std::string train_config;
  std::vector<std::string> train_overrides;
  train->add_option("-c,--config", train_config, "Run configuration (JSON)");
  train->add_option("--set", train_overrides, "Override a config key, e.g. --set loss.lambda=5");
  train->add_option("-o,--out", out_flag, "Output directory");
  train->add_flag("--force", force, "Replace an existing output directory");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint and write a report bundle");
  DataArgs eval_args;
  std::string checkpoint;
  std::optional<std::size_t> bins;
  std::vector<std::string> deltas;
  evaluate->add_option("--checkpoint", checkpoint, "Model checkpoint (model.json)")->required();
  add_data_options(evaluate, eval_args, false);
  evaluate->add_option("--bins", bins, "Number of calibration bins");
  auto* eval_deltas = evaluate->add_option("--deltas", deltas, "Confidence thresholds for high-confidence subsets")
                          ->expected(0, -1);
  evaluate->add_option("-o,--out", out_flag, "Output directory");
  evaluate->add_flag("--force", force, "Replace an existing output directory");

  auto* calibrate = app.add_subcommand("calibrate", "Fit a temperature on validation data");
  DataArgs cal_args;
  calibrate->add_option("--checkpoint", checkpoint, "Model checkpoint (model.json)")->required();
  add_data_options(calibrate, cal_args, true);
  calibrate->add_option("--bins", bins, "Number of calibration bins");
  auto* cal_deltas = calibrate->add_option("--deltas", deltas, "Confidence thresholds for high-confidence subsets")
                         ->expected(0, -1);
  calibrate->add_option("-o,--out", out_flag, "Output directory");
  calibrate->add_flag("--force", force, "Replace an existing output directory");

  auto* report = app.add_subcommand("report", "Verify a bundle and print its metrics");
  std::string bundle_dir;
  report->add_option("dir", bundle_dir, "Bundle directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      RunConfig cfg = config_from_args(train_config, train_overrides);
      cfg.output_dir = resolve_output_dir(out_flag, cfg.output_dir);
      cmd_train(cfg, std::cout, force);
      return 0;
    }
    if (*evaluate || *calibrate) {
      DataArgs& a = *evaluate ? eval_args : cal_args;
      const MlpParams params = load_checkpoint(checkpoint);
      std::size_t m = 10;
      std::vector<double> ds{0.95, 0.99};
      std::filesystem::path configured = *evaluate ? "calprune-eval" : "calprune-calibration";
      Dataset test, val;
      if (!a.config.empty()) {
        const RunConfig cfg = config_from_args(a.config, a.overrides);
        Splits splits = load_splits(cfg);
        test = std::move(splits.test);
        val = std::move(splits.val);
        m = cfg.train.bins;
        ds = cfg.train.eval_deltas;
      } else {
        test = load_direct(a.csv, a.images, a.labels, a);
        if (*calibrate) val = load_direct(a.val_csv, a.val_images, a.val_labels, a);
      }
      if (bins) m = *bins;
      if ((*evaluate ? eval_deltas : cal_deltas)->count() > 0) ds = parse_deltas(deltas);
      const auto dir = resolve_output_dir(out_flag, configured);
      if (*evaluate) {
        cmd_evaluate(params, test, m, ds, dir, std::cout, force);
      } else {
        cmd_calibrate(params, val, test, m, ds, dir, std::cout, force);
      }
      return 0;
    }
    if (*report) {
      const std::size_t bad = cmd_report(bundle_dir, std::cout);
      return bad == 0 ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const TrainingAborted& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
