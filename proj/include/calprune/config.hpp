#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "calprune/data.hpp"
#include "calprune/losses.hpp"
#include "calprune/pruning.hpp"
#include "calprune/rng.hpp"
#include "calprune/trainer.hpp"

namespace calprune {

/// Raised for any invalid configuration; `key` is the dotted path at fault.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::invalid_argument(key + ": " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct DataConfig {
  DataSource source = DataSource::gaussian_mixture;
  std::size_t num_classes = 4;
  std::vector<std::size_t> per_class{556, 556, 556, 556};
  std::vector<std::size_t> test_per_class{250, 250, 250, 250};
  double noise = 0.15;
  std::uint64_t seed = 11;
  double radius = 3.0;
  double train_fraction = 0.9;
  std::filesystem::path images, labels, test_images, test_labels, csv, test_csv;
  std::string label_column = "y";
};

struct RunConfig {
  DataConfig data;
  std::vector<std::size_t> hidden{64, 64};
  std::uint64_t model_seed = 1;
  TrainConfig train;
  std::filesystem::path output_dir = "calprune-run";
  nlohmann::json normalized;  // every key with its effective value
};

struct Splits {
  ScoredDataset train;
  Dataset val;
  Dataset test;
};

namespace detail {

inline const std::set<std::string>& allowed_keys(const std::string& section) {
  static const std::map<std::string, std::set<std::string>> keys{
      {"", {"dataset", "model", "train", "loss", "prune", "eval", "output"}},
      {"dataset",
       {"source", "num_classes", "per_class", "test_per_class", "noise", "seed", "radius", "train_fraction", "images",
        "labels", "test_images", "test_labels", "csv", "test_csv", "label_column"}},
      {"model", {"hidden", "seed"}},
      {"train",
       {"max_epochs", "batch_size", "learning_rate", "lr_milestones", "lr_decay_factor", "momentum", "weight_decay",
        "seed", "record_confidences"}},
      {"loss", {"kind", "gamma", "ls_epsilon", "aux", "alpha", "lambda"}},
      {"prune", {"enabled", "epsilon", "kappa", "interval", "epochs", "warmup_epochs"}},
      {"eval", {"bins", "deltas"}},
      {"output", {"dir"}},
  };
  auto it = keys.find(section);
  if (it == keys.end()) throw ConfigError(section, "unknown section");
  return it->second;
}

inline void reject_unknown(const nlohmann::json& j, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section.empty() ? "<root>" : section, "expected an object");
  const auto& allowed = allowed_keys(section);
  for (const auto& [k, _] : j.items()) {
    if (allowed.count(k) == 0) throw ConfigError(section.empty() ? k : section + "." + k, "unknown key");
  }
}

template <class T>
T get_or(const nlohmann::json& section, const std::string& path, const char* key, T fallback) {
  if (!section.contains(key)) return fallback;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    const auto& v = section.at(key);
    if (v.is_number() && !v.is_number_unsigned() && v.get<double>() < 0) {
      throw ConfigError(path + "." + key, "must be non-negative, got " + v.dump());
    }
  }
  try {
    return section.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + "." + key, "wrong type: " + section.at(key).dump());
  }
}

/// A per-class size given as one integer is repeated for every class.
inline std::vector<std::size_t> per_class_sizes(const nlohmann::json& section, const char* key, std::size_t k,
                                                std::vector<std::size_t> fallback) {
  if (!section.contains(key)) {
    if (fallback.size() == k) return fallback;
    return std::vector<std::size_t>(k, fallback.empty() ? 0 : fallback.front());
  }
  const auto& v = section.at(key);
  try {
    if (v.is_number_integer()) {
      if (v.get<long long>() < 0) throw ConfigError(std::string("dataset.") + key, "must be non-negative");
      return std::vector<std::size_t>(k, v.get<std::size_t>());
    }
    auto sizes = v.get<std::vector<std::size_t>>();
    if (sizes.size() != k) throw ConfigError(std::string("dataset.") + key, "needs one size per class");
    return sizes;
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("dataset.") + key, "expected a non-negative integer or a list of them");
  }
}

template <class F>
void checked(const std::string& key, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace detail

/// Sets `value` at a dotted path such as "loss.lambda", creating objects on the way.
inline void apply_override(nlohmann::json& root, const std::string& path, const nlohmann::json& value) {
  nlohmann::json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(path, "malformed override key");
    if (node->is_null()) *node = nlohmann::json::object();
    if (!node->is_object()) throw ConfigError(path, "override descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

/// Parses "key=value"; the value is read as JSON when possible, else as a string.
inline std::pair<std::string, nlohmann::json> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(text, "override must look like key=value");
  const std::string key = text.substr(0, eq), raw = text.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  return {key, value};
}

inline RunConfig parse_run_config(const nlohmann::json& root) {
  using detail::get_or;
  detail::reject_unknown(root, "");
  RunConfig cfg;
  const nlohmann::json empty = nlohmann::json::object();
  auto section = [&](const char* name) -> const nlohmann::json& {
    if (!root.contains(name)) return empty;
    detail::reject_unknown(root.at(name), name);
    return root.at(name);
  };

  const auto& ds = section("dataset");
  DataConfig& d = cfg.data;
  const std::string source = get_or<std::string>(ds, "dataset", "source", "gaussian_mixture");
  if (source == "gaussian_mixture") d.source = DataSource::gaussian_mixture;
  else if (source == "idx") d.source = DataSource::idx_pair;
  else if (source == "csv") d.source = DataSource::csv;
  else throw ConfigError("dataset.source", "expected gaussian_mixture, idx or csv, got '" + source + "'");
  d.num_classes = get_or<std::size_t>(ds, "dataset", "num_classes", d.num_classes);
  if (d.num_classes < 2) throw ConfigError("dataset.num_classes", "must be >= 2");
  d.per_class = detail::per_class_sizes(ds, "per_class", d.num_classes, d.per_class);
  d.test_per_class = detail::per_class_sizes(ds, "test_per_class", d.num_classes, d.test_per_class);
  d.noise = get_or<double>(ds, "dataset", "noise", d.noise);
  if (!(d.noise >= 0.0 && d.noise < 0.5)) throw ConfigError("dataset.noise", "must lie in [0, 0.5)");
  d.seed = get_or<std::uint64_t>(ds, "dataset", "seed", d.seed);
  d.radius = get_or<double>(ds, "dataset", "radius", d.radius);
  d.train_fraction = get_or<double>(ds, "dataset", "train_fraction", d.train_fraction);
  if (!(d.train_fraction > 0.0 && d.train_fraction < 1.0)) throw ConfigError("dataset.train_fraction", "must lie in (0, 1)");
  d.images = get_or<std::string>(ds, "dataset", "images", "");
  d.labels = get_or<std::string>(ds, "dataset", "labels", "");
  d.test_images = get_or<std::string>(ds, "dataset", "test_images", "");
  d.test_labels = get_or<std::string>(ds, "dataset", "test_labels", "");
  d.csv = get_or<std::string>(ds, "dataset", "csv", "");
  d.test_csv = get_or<std::string>(ds, "dataset", "test_csv", "");
  d.label_column = get_or<std::string>(ds, "dataset", "label_column", d.label_column);
  if (d.source == DataSource::idx_pair) {
    for (const char* k : {"images", "labels", "test_images", "test_labels"}) {
      if (!ds.contains(k)) throw ConfigError(std::string("dataset.") + k, "required for source idx");
    }
  }
  if (d.source == DataSource::csv) {
    for (const char* k : {"csv", "test_csv"}) {
      if (!ds.contains(k)) throw ConfigError(std::string("dataset.") + k, "required for source csv");
    }
  }

  const auto& md = section("model");
  cfg.hidden = get_or<std::vector<std::size_t>>(md, "model", "hidden", cfg.hidden);
  for (std::size_t w : cfg.hidden) {
    if (w == 0) throw ConfigError("model.hidden", "widths must be positive");
  }
  cfg.model_seed = get_or<std::uint64_t>(md, "model", "seed", cfg.model_seed);

  TrainConfig& t = cfg.train;
  const auto& tr = section("train");
  t.max_epochs = get_or<std::size_t>(tr, "train", "max_epochs", t.max_epochs);
  t.batch_size = get_or<std::size_t>(tr, "train", "batch_size", t.batch_size);
  t.learning_rate = get_or<double>(tr, "train", "learning_rate", t.learning_rate);
  t.lr_milestones = get_or<std::vector<std::size_t>>(tr, "train", "lr_milestones", {30, 45});
  t.lr_decay_factor = get_or<double>(tr, "train", "lr_decay_factor", t.lr_decay_factor);
  t.momentum = get_or<double>(tr, "train", "momentum", t.momentum);
  t.weight_decay = get_or<double>(tr, "train", "weight_decay", t.weight_decay);
  t.seed = get_or<std::uint64_t>(tr, "train", "seed", 7);
  t.record_confidences = get_or<bool>(tr, "train", "record_confidences", false);

  const auto& ls = section("loss");
  detail::checked("loss.kind", [&] { t.loss.kind = parse_loss_kind(get_or<std::string>(ls, "loss", "kind", "flsd")); });
  t.loss.gamma = get_or<double>(ls, "loss", "gamma", 3.0);
  t.loss.ls_epsilon = get_or<double>(ls, "loss", "ls_epsilon", 0.05);
  const std::string aux = get_or<std::string>(ls, "loss", "aux", "huber");
  if (aux != "none") {
    AuxLossSpec a;
    detail::checked("loss.aux", [&] { a.kind = parse_aux_kind(aux); });
    a.alpha = get_or<double>(ls, "loss", "alpha", 0.005);
    a.lambda = get_or<double>(ls, "loss", "lambda", 10.0);
    if (!(a.lambda >= 0.0)) throw ConfigError("loss.lambda", "must be >= 0");
    if (!(a.alpha > 0.0)) throw ConfigError("loss.alpha", "must be > 0");
    t.loss.aux = a;
  }
  detail::checked("loss", [&] { t.loss.validate(); });

  const auto& pr = section("prune");
  if (get_or<bool>(pr, "prune", "enabled", true)) {
    PruneSchedule s;
    s.epsilon = get_or<double>(pr, "prune", "epsilon", 10.0);
    s.kappa = get_or<double>(pr, "prune", "kappa", 0.3);
    s.interval = get_or<std::size_t>(pr, "prune", "interval", 5);
    const auto epochs = get_or<std::vector<std::size_t>>(pr, "prune", "epochs", {});
    s.epochs = std::set<std::size_t>(epochs.begin(), epochs.end());
    const std::size_t default_warmup = t.lr_milestones.empty() ? 0 : *std::min_element(t.lr_milestones.begin(), t.lr_milestones.end());
    s.warmup_epochs = get_or<std::size_t>(pr, "prune", "warmup_epochs", default_warmup);
    detail::checked("prune", [&] { s.validate(); });
    t.prune = s;
  }

  const auto& ev = section("eval");
  t.bins = get_or<std::size_t>(ev, "eval", "bins", 10);
  t.eval_deltas = get_or<std::vector<double>>(ev, "eval", "deltas", {0.95, 0.99});

  const auto& out = section("output");
  cfg.output_dir = get_or<std::string>(out, "output", "dir", cfg.output_dir.string());

  detail::checked("train", [&] { t.validate(d.num_classes); });

  // Echo of the effective configuration, written into the run document.
  nlohmann::json& n = cfg.normalized;
  n["dataset"] = {{"source", source},        {"num_classes", d.num_classes}, {"noise", d.noise},
                  {"seed", d.seed},          {"train_fraction", d.train_fraction}};
  if (d.source == DataSource::gaussian_mixture) {
    n["dataset"]["per_class"] = d.per_class;
    n["dataset"]["test_per_class"] = d.test_per_class;
    n["dataset"]["radius"] = d.radius;
  } else if (d.source == DataSource::idx_pair) {
    n["dataset"]["images"] = d.images.string();
    n["dataset"]["labels"] = d.labels.string();
    n["dataset"]["test_images"] = d.test_images.string();
    n["dataset"]["test_labels"] = d.test_labels.string();
  } else {
    n["dataset"]["csv"] = d.csv.string();
    n["dataset"]["test_csv"] = d.test_csv.string();
    n["dataset"]["label_column"] = d.label_column;
  }
  n["model"] = {{"hidden", cfg.hidden}, {"seed", cfg.model_seed}};
  n["train"] = {{"max_epochs", t.max_epochs},       {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate}, {"lr_milestones", t.lr_milestones},
                {"lr_decay_factor", t.lr_decay_factor}, {"momentum", t.momentum},
                {"weight_decay", t.weight_decay},   {"seed", t.seed},
                {"record_confidences", t.record_confidences}};
  n["loss"] = {{"kind", to_string(t.loss.kind)}, {"gamma", t.loss.gamma}, {"ls_epsilon", t.loss.ls_epsilon},
               {"aux", t.loss.aux ? to_string(t.loss.aux->kind) : "none"}};
  if (t.loss.aux) {
    n["loss"]["alpha"] = t.loss.aux->alpha;
    n["loss"]["lambda"] = t.loss.aux->lambda;
  }
  n["prune"] = {{"enabled", t.prune.has_value()}};
  if (t.prune) {
    n["prune"]["epsilon"] = t.prune->epsilon;
    n["prune"]["kappa"] = t.prune->kappa;
    n["prune"]["interval"] = t.prune->interval;
    n["prune"]["epochs"] = std::vector<std::size_t>(t.prune->epochs.begin(), t.prune->epochs.end());
    n["prune"]["warmup_epochs"] = t.prune->warmup_epochs;
  }
  n["eval"] = {{"bins", t.bins}, {"deltas", t.eval_deltas}};
  return cfg;
}

inline nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false, true);
  if (j.is_discarded()) throw ConfigError(path.string(), "not valid JSON");
  return j;
}

inline std::vector<std::size_t> mlp_widths(const RunConfig& cfg, std::size_t input_dim) {
  std::vector<std::size_t> widths{input_dim};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(cfg.data.num_classes);
  return widths;
}

/// Builds train/validation/test sets. The training pool is split
/// stratified into train and validation; the test set is drawn or loaded
/// separately.
inline Splits load_splits(const RunConfig& cfg) {
  const DataConfig& d = cfg.data;
  Dataset pool, test;
  switch (d.source) {
    case DataSource::gaussian_mixture: {
      DatasetSpec spec;
      spec.num_classes = d.num_classes;
      spec.noise = d.noise;
      spec.radius = d.radius;
      spec.per_class = d.per_class;
      spec.seed = d.seed;
      pool = generate_gaussian_mixture(spec);
      spec.per_class = d.test_per_class;
      spec.seed = mix_seed(d.seed, 0x7e57);
      test = generate_gaussian_mixture(spec);
      break;
    }
    case DataSource::idx_pair:
      pool = load_idx_pair(d.images, d.labels, d.num_classes);
      test = load_idx_pair(d.test_images, d.test_labels, d.num_classes);
      break;
    case DataSource::csv:
      pool = load_csv(d.csv, d.label_column, d.num_classes);
      test = load_csv(d.test_csv, d.label_column, d.num_classes);
      break;
  }
  pool.validate();
  test.validate();
  if (test.feature_dim != pool.feature_dim) throw std::invalid_argument("train and test feature widths differ");
  auto [train, val] = stratified_split(pool, d.train_fraction, d.seed);
  return Splits{std::move(train), std::move(val), std::move(test)};
}

}  // namespace calprune
