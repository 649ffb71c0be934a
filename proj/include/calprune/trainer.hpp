#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "calprune/data.hpp"
#include "calprune/dataset.hpp"
#include "calprune/diff_graph.hpp"
#include "calprune/losses.hpp"
#include "calprune/metrics.hpp"
#include "calprune/model.hpp"
#include "calprune/pruning.hpp"
#include "calprune/sgd.hpp"

namespace calprune {

struct TrainConfig {
  std::size_t max_epochs = 60;
  std::size_t batch_size = 128;
  double learning_rate = 0.1;
  std::vector<std::size_t> lr_milestones;
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  LossSpec loss;
  std::optional<PruneSchedule> prune;
  std::vector<double> eval_deltas{0.95, 0.99};
  std::size_t bins = 10;
  bool record_confidences = false;  // keep every per-epoch training confidence in the result

  void validate(std::size_t num_classes) const {
    if (max_epochs == 0) throw std::invalid_argument("train.max_epochs must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("train.batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be > 0");
    if (!(lr_decay_factor > 0.0)) throw std::invalid_argument("train.lr_decay_factor must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train.momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("train.weight_decay must be >= 0");
    if (bins == 0) throw std::invalid_argument("eval.bins must be >= 1");
    for (double d : eval_deltas) {
      if (!(d > 0.0 && d <= 1.0)) throw std::invalid_argument("eval.deltas entries must lie in (0, 1]");
    }
    loss.validate();
    if (prune) {
      prune->validate();
      if (batch_size < 10 * num_classes) {
        warn("pruning enabled with batch size " + std::to_string(batch_size) + " < 10 * K = " +
             std::to_string(10 * num_classes));
      }
    }
  }
};

/// lr * factor^(number of milestones <= epoch)
inline double lr_at_epoch(std::size_t epoch, const TrainConfig& config) {
  double lr = config.learning_rate;
  for (std::size_t m : config.lr_milestones) {
    if (m <= epoch) lr *= config.lr_decay_factor;
  }
  return lr;
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // sample-weighted mean over the epoch's minibatches
  double learning_rate = 0.0;
  std::size_t surviving = 0;
  std::size_t samples_processed = 0;
};

struct PruneEvent {
  std::size_t epoch = 0;
  std::vector<std::size_t> removed_per_class;
  std::size_t surviving_total = 0;
};

struct RunResult {
  MlpParams params;
  std::vector<EpochLog> epochs;
  std::vector<PruneEvent> prune_events;
  CalibrationReport test_report;
  ScoredDataset final_train;
  std::size_t total_sample_updates = 0;
  double wall_clock_seconds = 0.0;
  /// id -> confidence per epoch the instance was trained in (record_confidences only).
  std::map<std::size_t, std::vector<double>> confidence_history;
};

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::size_t epoch, std::size_t batch)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

/// Forward + predict over a whole dataset.
inline std::vector<EvalRecord> eval_records(const MlpParams& params, const Dataset& dataset, double* mean_nll = nullptr) {
  const Array logits = forward_logits(params, dataset.feature_matrix());
  const auto preds = predict(logits);
  std::vector<EvalRecord> records;
  records.reserve(preds.size());
  double nll = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::size_t y = dataset.instances[i].label;
    records.push_back(make_record(preds[i].confidence, preds[i].label, y));
    nll -= preds[i].log_probs.at(y);
  }
  if (mean_nll != nullptr && !preds.empty()) *mean_nll = nll / static_cast<double>(preds.size());
  return records;
}

inline CalibrationReport evaluate_model(const MlpParams& params, const Dataset& dataset, std::size_t bins,
                                        const std::vector<double>& deltas) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_model: empty dataset");
  if (dataset.feature_dim != params.input_dim() || dataset.num_classes != params.num_classes()) {
    throw std::invalid_argument("dataset (d=" + std::to_string(dataset.feature_dim) + ", K=" +
                                std::to_string(dataset.num_classes) + ") does not match model (d=" +
                                std::to_string(params.input_dim()) + ", K=" + std::to_string(params.num_classes()) +
                                ")");
  }
  double nll = 0.0;
  const auto records = eval_records(params, dataset, &nll);
  CalibrationReport report = calibration_report(records, bins, deltas);
  report.nll = nll;
  return report;
}

/// Minibatch SGD over the surviving training set with the configured loss;
/// per-instance confidences from each minibatch forward pass feed the EMA
/// scores, and scheduled epochs prune the lowest-EMA instances per class.
inline RunResult train_with_pruning(ScoredDataset train, const Dataset& test, MlpParams model,
                                    const TrainConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t K = model.num_classes();
  if (train.num_classes != K || test.num_classes != K) {
    throw std::invalid_argument("datasets have " + std::to_string(train.num_classes) + "/" +
                                std::to_string(test.num_classes) + " classes, model has " + std::to_string(K));
  }
  if (train.feature_dim != model.input_dim() || test.feature_dim != model.input_dim()) {
    throw std::invalid_argument("feature width does not match model input width " + std::to_string(model.input_dim()));
  }
  if (train.empty()) throw std::invalid_argument("empty training set");
  config.validate(K);

  DiffGraph graph;
  const NodeId x = graph.input("x");
  const NodeId targets = graph.input("targets");
  const NodeId logits = build_mlp_logits(graph, x, model.widths);
  const NodeId log_probs = graph.log_softmax(logits);
  const NodeId loss = total_loss(graph, log_probs, targets, config.loss, K);
  graph.set_root(loss);

  RunResult result;
  Velocity velocity = Velocity::zeros_like(model);
  Bindings bindings;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    SgdHyper hyper{lr_at_epoch(epoch, config), config.momentum, config.weight_decay};
    const auto blocks = minibatches(train.size(), config.batch_size, epoch, config.seed);
    std::unordered_map<std::size_t, double> confidences;
    confidences.reserve(train.size());
    double loss_sum = 0.0;
    std::size_t processed = 0;

    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& rows = blocks[b];
      bindings["x"] = train.feature_matrix(rows);
      bindings["targets"] = train.label_vector(rows);
      bind_params(model, bindings);
      const double value = graph.forward(bindings).item();
      if (!std::isfinite(value)) {
        throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b),
                              epoch, b);
      }
      const Array& lp = graph.value(log_probs);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        double m = lp.at(r, 0);
        for (std::size_t j = 1; j < K; ++j) m = std::max(m, lp.at(r, j));
        const double c = std::exp(m);
        const std::size_t id = train.instances[rows[r]].id;
        confidences[id] = c;
        if (config.record_confidences) result.confidence_history[id].push_back(c);
      }
      const Gradients grads = graph.backward();
      sgd_update(model, grads, velocity, hyper);
      loss_sum += value * static_cast<double>(rows.size());
      processed += rows.size();
    }

    result.epochs.push_back({epoch, loss_sum / static_cast<double>(processed), hyper.learning_rate, train.size(),
                             processed});
    result.total_sample_updates += processed;

    if (config.prune) {
      train = update_ema(train, confidences, config.prune->kappa);
      if (should_prune(epoch, *config.prune)) {
        const auto before = train.class_counts();
        try {
          train = prune_using_ema(train, config.prune->epsilon);
        } catch (const std::invalid_argument& e) {
          throw TrainingAborted("pruning at epoch " + std::to_string(epoch) + " failed: " + e.what(), epoch,
                                blocks.size());
        }
        const auto after = train.class_counts();
        PruneEvent ev{epoch, {}, train.size()};
        for (std::size_t k = 0; k < K; ++k) {
          ev.removed_per_class.push_back(before[k] - after[k]);
          if (after[k] == 0) {
            throw TrainingAborted("pruning at epoch " + std::to_string(epoch) + " emptied class " + std::to_string(k),
                                  epoch, blocks.size());
          }
        }
        result.prune_events.push_back(std::move(ev));
      }
    }
  }

  result.test_report = evaluate_model(model, test, config.bins, config.eval_deltas);
  result.params = std::move(model);
  result.final_train = std::move(train);
  result.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

// ---------------------------------------------------------------------------
// Post-hoc temperature scaling.

struct TemperatureSearch {
  double lower = 0.05;
  double upper = 10.0;
  double resolution = 1e-3;
};

struct TemperatureFit {
  double temperature = 1.0;
  double nll_before = 0.0;  // at T = 1
  double nll_after = 0.0;   // at the fitted T
};

/// Mean NLL of softmax(logits / T) against the labels.
inline double temperature_nll(const Array& logits, const std::vector<std::size_t>& labels, double temperature) {
  const std::size_t rows = logits.shape()[0], k = logits.shape()[1];
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double m = logits.at(r, 0) / temperature;
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits.at(r, j) / temperature);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(logits.at(r, j) / temperature - m);
    total -= logits.at(r, labels[r]) / temperature - (m + std::log(s));
  }
  return total / static_cast<double>(rows);
}

inline Array apply_temperature(const Array& logits, double temperature) {
  Array out = logits;
  for (double& v : out.data()) v /= temperature;
  return out;
}

/// Golden-section search for the NLL-minimising temperature, then compared
/// against T = 1 so the result never does worse than the unscaled logits.
inline TemperatureFit fit_temperature(const Array& logits, const std::vector<std::size_t>& labels,
                                      const TemperatureSearch& search = {}) {
  if (logits.rank() != 2 || logits.shape()[0] == 0) throw std::invalid_argument("fit_temperature: no logits");
  if (labels.size() != logits.shape()[0]) throw std::invalid_argument("fit_temperature: label count mismatch");
  if (!(search.lower > 0.0 && search.upper > search.lower && search.resolution > 0.0)) {
    throw std::invalid_argument("fit_temperature: invalid search bounds");
  }
  auto f = [&](double t) { return temperature_nll(logits, labels, t); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = search.lower, b = search.upper;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > search.resolution) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  TemperatureFit fit;
  fit.nll_before = f(1.0);
  fit.temperature = 0.5 * (a + b);
  fit.nll_after = f(fit.temperature);
  if (search.lower <= 1.0 && 1.0 <= search.upper) {
    const bool one_wins = fit.nll_before < fit.nll_after || (fit.nll_before == fit.nll_after && 1.0 < fit.temperature);
    if (one_wins) {
      fit.temperature = 1.0;
      fit.nll_after = fit.nll_before;
    }
  }
  return fit;
}

inline TemperatureFit fit_temperature(const MlpParams& params, const Dataset& val, const TemperatureSearch& search = {}) {
  if (val.empty()) throw std::invalid_argument("fit_temperature: empty validation set");
  std::vector<std::size_t> labels;
  for (const auto& inst : val.instances) labels.push_back(inst.label);
  return fit_temperature(forward_logits(params, val.feature_matrix()), labels, search);
}

/// Report for logits divided by T.
inline CalibrationReport evaluate_with_temperature(const MlpParams& params, const Dataset& dataset, double temperature,
                                                   std::size_t bins, const std::vector<double>& deltas) {
  const Array logits = apply_temperature(forward_logits(params, dataset.feature_matrix()), temperature);
  const auto preds = predict(logits);
  std::vector<EvalRecord> records;
  double nll = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    records.push_back(make_record(preds[i].confidence, preds[i].label, dataset.instances[i].label));
    nll -= preds[i].log_probs.at(dataset.instances[i].label);
  }
  CalibrationReport report = calibration_report(records, bins, deltas);
  report.nll = nll / static_cast<double>(preds.size());
  return report;
}

}  // namespace calprune
