#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "calprune/array.hpp"
#include "calprune/diff_graph.hpp"
#include "calprune/rng.hpp"

namespace calprune {

/// Fully connected ReLU network. Layer i maps widths[i] -> widths[i+1];
/// weights are stored (fan_in x fan_out) so a batch is multiplied on the left.
struct MlpParams {
  std::vector<std::size_t> widths;
  std::vector<Array> weights;
  std::vector<Array> biases;

  std::size_t input_dim() const { return widths.front(); }
  std::size_t num_classes() const { return widths.back(); }
  std::size_t num_layers() const { return weights.size(); }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

inline std::string weight_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".weight"; }
inline std::string bias_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }

inline void validate_widths(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw std::invalid_argument("an MLP needs at least an input and an output width");
  for (std::size_t w : widths) {
    if (w == 0) throw std::invalid_argument("MLP layer widths must be positive");
  }
}

/// Glorot-uniform weights, zero biases.
inline MlpParams init_mlp(const std::vector<std::size_t>& widths, std::uint64_t seed) {
  validate_widths(widths);
  Rng rng(seed);
  MlpParams p;
  p.widths = widths;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Array w = Array::zeros({fan_in, fan_out});
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Array::zeros({fan_out}));
  }
  return p;
}

/// Affine + ReLU for hidden layers, affine only for the output layer.
inline Array forward_logits(const MlpParams& params, const Array& batch) {
  if (batch.rank() != 2 || batch.shape()[1] != params.input_dim()) {
    throw std::invalid_argument("batch shape " + shape_string(batch.shape()) + " does not match input width " +
                                std::to_string(params.input_dim()));
  }
  Array h = batch;
  const std::size_t rows = batch.shape()[0];
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    const Array& w = params.weights[l];
    const Array& b = params.biases[l];
    const std::size_t inner = w.shape()[0], cols = w.shape()[1];
    Array out = Array::zeros({rows, cols});
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t k = 0; k < inner; ++k) {
        const double hik = h.at(i, k);
        for (std::size_t j = 0; j < cols; ++j) out.at(i, j) += hik * w.at(k, j);
      }
      for (std::size_t j = 0; j < cols; ++j) {
        double v = out.at(i, j) + b[j];
        if (l + 1 < params.num_layers() && v < 0.0) v = 0.0;
        out.at(i, j) = v;
      }
    }
    h = std::move(out);
  }
  return h;
}

struct Prediction {
  std::vector<double> log_probs;
  std::size_t label = 0;
  double confidence = 0.0;
};

/// Row-wise log-softmax, argmax (lowest index on ties), confidence = max probability.
inline std::vector<Prediction> predict(const Array& logits) {
  if (logits.rank() != 2 || logits.shape()[1] < 2) {
    throw std::invalid_argument("predict needs n x K logits with K >= 2, got " + shape_string(logits.shape()));
  }
  const std::size_t rows = logits.shape()[0], k = logits.shape()[1];
  std::vector<Prediction> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double m = logits.at(r, 0);
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits.at(r, j));
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(logits.at(r, j) - m);
    const double lse = m + std::log(s);
    Prediction& p = out[r];
    p.log_probs.resize(k);
    for (std::size_t j = 0; j < k; ++j) p.log_probs[j] = logits.at(r, j) - lse;
    for (std::size_t j = 1; j < k; ++j) {
      if (p.log_probs[j] > p.log_probs[p.label]) p.label = j;
    }
    p.confidence = std::exp(p.log_probs[p.label]);
  }
  return out;
}

/// Appends the MLP to `graph` reading from leaf `input`; parameters become
/// leaves named by weight_name()/bias_name(). Returns the logits node.
inline NodeId build_mlp_logits(DiffGraph& graph, NodeId input, const std::vector<std::size_t>& widths) {
  validate_widths(widths);
  NodeId h = input;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const NodeId w = graph.parameter(weight_name(l));
    const NodeId b = graph.parameter(bias_name(l));
    h = graph.add(graph.matmul(h, w), b);
    if (l + 2 < widths.size()) h = graph.relu(h);
  }
  return h;
}

inline void bind_params(const MlpParams& params, Bindings& bindings) {
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    bindings[weight_name(l)] = params.weights[l];
    bindings[bias_name(l)] = params.biases[l];
  }
}

// Checkpoint file (JSON, version 1):
//   { "format": "calprune-mlp", "version": 1, "widths": [d, h1, ..., K],
//     "layers": [ { "weight": [row-major fan_in*fan_out], "bias": [fan_out] }, ... ] }
// Doubles are written in shortest round-trip form, so save/load is bit exact.
inline constexpr const char* kCheckpointFormat = "calprune-mlp";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_json(const MlpParams& params) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["widths"] = params.widths;
  j["layers"] = nlohmann::json::array();
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    j["layers"].push_back({{"weight", params.weights[l].data()}, {"bias", params.biases[l].data()}});
  }
  return j;
}

inline MlpParams params_from_checkpoint(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    throw std::runtime_error("not a calprune-mlp checkpoint");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + j.value("version", nlohmann::json()).dump());
  }
  MlpParams p;
  p.widths = j.at("widths").get<std::vector<std::size_t>>();
  validate_widths(p.widths);
  const auto& layers = j.at("layers");
  if (layers.size() + 1 != p.widths.size()) throw std::runtime_error("checkpoint layer count does not match widths");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    p.weights.emplace_back(Shape{p.widths[l], p.widths[l + 1]}, layers[l].at("weight").get<std::vector<double>>());
    p.biases.emplace_back(Shape{p.widths[l + 1]}, layers[l].at("bias").get<std::vector<double>>());
  }
  return p;
}

inline void save_checkpoint(const MlpParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_json(params).dump(1) << '\n';
}

inline MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  try {
    return params_from_checkpoint(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace calprune
