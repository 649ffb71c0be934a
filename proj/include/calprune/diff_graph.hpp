#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "calprune/array.hpp"

namespace calprune {

/// Floor applied inside every explicit log of a probability.
inline constexpr double kLogFloor = 1e-12;

enum class OpKind {
  input,
  parameter,
  constant,
  matmul,
  add,
  sub,
  mul,
  scale,
  add_scalar,
  relu,
  exp,
  log,
  abs,
  pow,
  pow_gated,
  log_softmax,
  gather,
  row_max,
  row_sum,
  mean_batch,
  sum,
  stop_gradient,
  huber,
  argmax_match,
  one_hot,
};

inline const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::constant: return "constant";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::relu: return "relu";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::abs: return "abs";
    case OpKind::pow: return "pow";
    case OpKind::pow_gated: return "pow_gated";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::gather: return "gather";
    case OpKind::row_max: return "row_max";
    case OpKind::row_sum: return "row_sum";
    case OpKind::mean_batch: return "mean_batch";
    case OpKind::sum: return "sum";
    case OpKind::stop_gradient: return "stop_gradient";
    case OpKind::huber: return "huber";
    case OpKind::argmax_match: return "argmax_match";
    case OpKind::one_hot: return "one_hot";
  }
  return "?";
}

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

using Bindings = std::map<std::string, Array>;
using Gradients = std::map<std::string, Array>;

/// Maps a gate value to the exponent used by a gated power node.
using ExponentRule = std::function<double(double)>;

/// Reverse-mode differentiation over a static graph of dense arrays.
///
/// Nodes are appended in topological order by the builder methods. Shapes are
/// resolved at forward() time, so a single graph can be re-evaluated with
/// minibatches of different sizes. Not safe for concurrent forward/backward on
/// one instance.
class DiffGraph {
 public:
  NodeId input(const std::string& name) { return add_leaf(OpKind::input, name); }
  NodeId parameter(const std::string& name) { return add_leaf(OpKind::parameter, name); }

  NodeId constant(Array value) {
    Node n;
    n.op = OpKind::constant;
    n.value = std::move(value);
    return push(std::move(n));
  }

  NodeId matmul(NodeId a, NodeId b) { return push_op(OpKind::matmul, {a, b}); }
  /// Elementwise; `b` may also be rank 0, or a row vector broadcast over the leading axis of `a`.
  NodeId add(NodeId a, NodeId b) { return push_op(OpKind::add, {a, b}); }
  NodeId sub(NodeId a, NodeId b) { return push_op(OpKind::sub, {a, b}); }
  NodeId mul(NodeId a, NodeId b) { return push_op(OpKind::mul, {a, b}); }
  NodeId scale(NodeId a, double factor) { return push_op(OpKind::scale, {a}, factor); }
  NodeId add_scalar(NodeId a, double offset) { return push_op(OpKind::add_scalar, {a}, offset); }
  NodeId relu(NodeId a) { return push_op(OpKind::relu, {a}); }
  NodeId exp(NodeId a) { return push_op(OpKind::exp, {a}); }
  NodeId log(NodeId a) { return push_op(OpKind::log, {a}); }
  NodeId abs(NodeId a) { return push_op(OpKind::abs, {a}); }
  NodeId pow(NodeId a, double exponent) { return push_op(OpKind::pow, {a}, exponent); }

  /// base^rule(gate) elementwise. The exponent is a per-element constant
  /// recomputed on each forward pass; no gradient reaches `gate`.
  NodeId pow_gated(NodeId base, NodeId gate, ExponentRule rule) {
    NodeId id = push_op(OpKind::pow_gated, {base, gate});
    nodes_[id.index].rule = std::move(rule);
    return id;
  }

  NodeId log_softmax(NodeId a) { return push_op(OpKind::log_softmax, {a}); }
  /// Picks x[i, index[i]] per row; `index` holds integer-valued class ids.
  NodeId gather(NodeId x, NodeId index) { return push_op(OpKind::gather, {x, index}); }
  NodeId row_max(NodeId a) { return push_op(OpKind::row_max, {a}); }
  NodeId row_sum(NodeId a) { return push_op(OpKind::row_sum, {a}); }
  NodeId mean_batch(NodeId a) { return push_op(OpKind::mean_batch, {a}); }
  NodeId sum(NodeId a) { return push_op(OpKind::sum, {a}); }
  NodeId stop_gradient(NodeId a) { return push_op(OpKind::stop_gradient, {a}); }
  NodeId huber(NodeId a, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("huber alpha must be > 0");
    return push_op(OpKind::huber, {a}, alpha);
  }
  /// 1 where argmax of row i (lowest index on ties) equals index[i], else 0. Not differentiable.
  NodeId argmax_match(NodeId x, NodeId index) { return push_op(OpKind::argmax_match, {x, index}); }
  /// One-hot rows of width `classes`. Not differentiable.
  NodeId one_hot(NodeId index, std::size_t classes) {
    NodeId id = push_op(OpKind::one_hot, {index});
    nodes_[id.index].count = classes;
    return id;
  }

  void set_root(NodeId id) {
    check_id(id);
    root_ = id;
  }
  NodeId root() const {
    if (nodes_.empty()) throw std::logic_error("empty graph has no root");
    return root_.value_or(NodeId{nodes_.size() - 1});
  }

  std::size_t node_count() const { return nodes_.size(); }
  OpKind op(NodeId id) const { return nodes_.at(id.index).op; }
  const std::vector<std::size_t>& inputs_of(NodeId id) const { return nodes_.at(id.index).inputs; }
  const Array& value(NodeId id) const { return nodes_.at(id.index).value; }
  const Array& adjoint(NodeId id) const { return nodes_.at(id.index).adjoint; }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (const auto& n : nodes_) {
      if (n.op == OpKind::parameter) out.push_back(n.name);
    }
    return out;
  }

  std::optional<NodeId> find_leaf(const std::string& name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      if ((n.op == OpKind::input || n.op == OpKind::parameter) && n.name == name) return NodeId{i};
    }
    return std::nullopt;
  }

  /// Evaluates every node in order and returns the root's value.
  const Array& forward(const Bindings& bindings) {
    for (const auto& [name, _] : bindings) {
      if (!find_leaf(name)) throw std::invalid_argument("binding '" + name + "' names no leaf of the graph");
    }
    for (auto& n : nodes_) {
      if (n.op == OpKind::input || n.op == OpKind::parameter) {
        auto it = bindings.find(n.name);
        if (it == bindings.end()) throw std::invalid_argument("leaf '" + n.name + "' is not bound");
        n.value = it->second;
      } else if (n.op != OpKind::constant) {
        eval(n);
      }
    }
    forwarded_ = true;
    return nodes_[root().index].value;
  }

  /// Propagates adjoints from the scalar root. Returns gradients for parameter leaves.
  Gradients backward() {
    if (!forwarded_) throw std::logic_error("backward() called before forward()");
    const NodeId r = root();
    if (nodes_[r.index].value.rank() != 0) {
      throw std::invalid_argument("backward() needs a scalar root, got shape " +
                                  shape_string(nodes_[r.index].value.shape()));
    }
    for (auto& n : nodes_) n.adjoint = Array::zeros(n.value.shape());
    nodes_[r.index].adjoint[0] = 1.0;
    for (std::size_t i = r.index + 1; i-- > 0;) propagate(nodes_[i]);

    Gradients grads;
    for (const auto& n : nodes_) {
      if (n.op == OpKind::parameter) grads[n.name] = n.adjoint;
    }
    return grads;
  }

 private:
  struct Node {
    OpKind op = OpKind::constant;
    std::vector<std::size_t> inputs;
    double param = 0.0;
    std::size_t count = 0;
    ExponentRule rule;
    std::string name;
    Array value;
    Array adjoint;
  };

  std::vector<Node> nodes_;
  std::optional<NodeId> root_;
  bool forwarded_ = false;

  void check_id(NodeId id) const {
    if (id.index >= nodes_.size()) throw std::out_of_range("node id out of range");
  }

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    forwarded_ = false;
    return NodeId{nodes_.size() - 1};
  }

  NodeId add_leaf(OpKind op, const std::string& name) {
    if (find_leaf(name)) throw std::invalid_argument("duplicate leaf name '" + name + "'");
    Node n;
    n.op = op;
    n.name = name;
    return push(std::move(n));
  }

  NodeId push_op(OpKind op, std::initializer_list<NodeId> ins, double param = 0.0) {
    Node n;
    n.op = op;
    n.param = param;
    for (NodeId id : ins) {
      check_id(id);
      n.inputs.push_back(id.index);
    }
    return push(std::move(n));
  }

  const Array& in(const Node& n, std::size_t k) const { return nodes_[n.inputs[k]].value; }
  Array& adj_in(const Node& n, std::size_t k) { return nodes_[n.inputs[k]].adjoint; }

  [[noreturn]] static void shape_error(const Node& n, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string(op_name(n.op)) + ": incompatible shapes " + shape_string(a) +
                                " and " + shape_string(b));
  }

  [[noreturn]] static void rank_error(const Node& n, const Shape& a, const char* want) {
    throw std::invalid_argument(std::string(op_name(n.op)) + ": expected " + want + ", got shape " +
                                shape_string(a));
  }

  enum class Broadcast { same, scalar, row };

  static Broadcast broadcast_kind(const Node& n, const Array& a, const Array& b) {
    if (a.shape() == b.shape()) return Broadcast::same;
    if (b.rank() == 0) return Broadcast::scalar;
    if (a.rank() == 2 && b.rank() == 1 && b.shape()[0] == a.shape()[1]) return Broadcast::row;
    shape_error(n, a.shape(), b.shape());
  }

  static std::size_t rhs_index(Broadcast k, std::size_t i, std::size_t cols) {
    switch (k) {
      case Broadcast::same: return i;
      case Broadcast::scalar: return 0;
      case Broadcast::row: return i % cols;
    }
    return i;
  }

  static std::size_t class_index(const Node& n, double v, std::size_t classes) {
    if (!(v >= 0.0) || v != std::floor(v) || static_cast<std::size_t>(v) >= classes) {
      throw std::invalid_argument(std::string(op_name(n.op)) + ": class index " + std::to_string(v) +
                                  " outside [0, " + std::to_string(classes) + ")");
    }
    return static_cast<std::size_t>(v);
  }

  static void require_matrix(const Node& n, const Array& a) {
    if (a.rank() != 2) rank_error(n, a.shape(), "a rank-2 array");
  }

  static void require_index_vector(const Node& n, const Array& x, const Array& idx) {
    if (idx.rank() != 1 || idx.shape()[0] != x.shape()[0]) shape_error(n, x.shape(), idx.shape());
  }

  static std::size_t first_argmax(const Array& x, std::size_t row) {
    const std::size_t k = x.cols();
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (x.at(row, j) > x.at(row, best)) best = j;
    }
    return best;
  }

  static double pow_grad(double base, double exponent) {
    if (exponent == 0.0) return 0.0;
    return exponent * std::pow(base, exponent - 1.0);
  }

  void eval(Node& n) {
    switch (n.op) {
      case OpKind::input:
      case OpKind::parameter:
      case OpKind::constant:
        return;
      case OpKind::matmul: {
        const Array& a = in(n, 0);
        const Array& b = in(n, 1);
        require_matrix(n, a);
        require_matrix(n, b);
        if (a.shape()[1] != b.shape()[0]) shape_error(n, a.shape(), b.shape());
        const std::size_t rows = a.shape()[0], inner = a.shape()[1], cols = b.shape()[1];
        Array out = Array::zeros({rows, cols});
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t k = 0; k < inner; ++k) {
            const double aik = a.at(i, k);
            for (std::size_t j = 0; j < cols; ++j) out.at(i, j) += aik * b.at(k, j);
          }
        }
        n.value = std::move(out);
        return;
      }
      case OpKind::add:
      case OpKind::sub:
      case OpKind::mul: {
        const Array& a = in(n, 0);
        const Array& b = in(n, 1);
        const Broadcast kind = broadcast_kind(n, a, b);
        Array out = Array::zeros(a.shape());
        const std::size_t cols = a.cols();
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double rhs = b[rhs_index(kind, i, cols)];
          out[i] = n.op == OpKind::add ? a[i] + rhs : n.op == OpKind::sub ? a[i] - rhs : a[i] * rhs;
        }
        n.value = std::move(out);
        return;
      }
      case OpKind::scale:
      case OpKind::add_scalar:
      case OpKind::relu:
      case OpKind::exp:
      case OpKind::log:
      case OpKind::abs:
      case OpKind::pow:
      case OpKind::stop_gradient:
      case OpKind::huber: {
        const Array& a = in(n, 0);
        Array out = Array::zeros(a.shape());
        const double p = n.param;
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double x = a[i];
          double y = x;
          switch (n.op) {
            case OpKind::scale: y = x * p; break;
            case OpKind::add_scalar: y = x + p; break;
            case OpKind::relu: y = x > 0.0 ? x : 0.0; break;
            case OpKind::exp: y = std::exp(x); break;
            case OpKind::log: y = std::log(std::max(x, kLogFloor)); break;
            case OpKind::abs: y = std::fabs(x); break;
            case OpKind::pow: y = std::pow(x, p); break;
            case OpKind::huber: y = std::fabs(x) <= p ? 0.5 * x * x : p * (std::fabs(x) - 0.5 * p); break;
            default: break;
          }
          out[i] = y;
        }
        n.value = std::move(out);
        return;
      }
      case OpKind::pow_gated: {
        const Array& base = in(n, 0);
        const Array& gate = in(n, 1);
        if (base.shape() != gate.shape()) shape_error(n, base.shape(), gate.shape());
        Array out = Array::zeros(base.shape());
        for (std::size_t i = 0; i < base.size(); ++i) out[i] = std::pow(base[i], n.rule(gate[i]));
        n.value = std::move(out);
        return;
      }
      case OpKind::log_softmax: {
        const Array& a = in(n, 0);
        if (a.rank() != 1 && a.rank() != 2) rank_error(n, a.shape(), "a rank-1 or rank-2 array");
        Array out = Array::zeros(a.shape());
        const std::size_t k = a.rank() == 1 ? a.size() : a.shape()[1];
        const std::size_t rows = k == 0 ? 0 : a.size() / k;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* row = a.data().data() + r * k;
          double m = row[0];
          for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
          double s = 0.0;
          for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
          const double lse = m + std::log(s);
          for (std::size_t j = 0; j < k; ++j) out[r * k + j] = row[j] - lse;
        }
        n.value = std::move(out);
        return;
      }
      case OpKind::gather:
      case OpKind::argmax_match: {
        const Array& x = in(n, 0);
        const Array& idx = in(n, 1);
        require_matrix(n, x);
        require_index_vector(n, x, idx);
        const std::size_t rows = x.shape()[0], k = x.shape()[1];
        Array out = Array::zeros({rows});
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t t = class_index(n, idx[r], k);
          out[r] = n.op == OpKind::gather ? x.at(r, t) : (first_argmax(x, r) == t ? 1.0 : 0.0);
        }
        n.value = std::move(out);
        return;
      }
      case OpKind::row_max:
      case OpKind::row_sum: {
        const Array& x = in(n, 0);
        require_matrix(n, x);
        const std::size_t rows = x.shape()[0], k = x.shape()[1];
        if (k == 0) rank_error(n, x.shape(), "at least one column");
        Array out = Array::zeros({rows});
        for (std::size_t r = 0; r < rows; ++r) {
          if (n.op == OpKind::row_max) {
            out[r] = x.at(r, first_argmax(x, r));
          } else {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += x.at(r, j);
            out[r] = s;
          }
        }
        n.value = std::move(out);
        return;
      }
      case OpKind::mean_batch: {
        const Array& x = in(n, 0);
        if (x.rank() != 1 && x.rank() != 2) rank_error(n, x.shape(), "a rank-1 or rank-2 array");
        const std::size_t rows = x.shape()[0];
        if (rows == 0) throw std::invalid_argument("mean_batch: empty batch");
        if (x.rank() == 1) {
          double s = 0.0;
          for (double v : x.data()) s += v;
          n.value = Array::scalar(s / static_cast<double>(rows));
        } else {
          const std::size_t k = x.shape()[1];
          Array out = Array::zeros({k});
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < k; ++j) out[j] += x.at(r, j);
          }
          for (std::size_t j = 0; j < k; ++j) out[j] /= static_cast<double>(rows);
          n.value = std::move(out);
        }
        return;
      }
      case OpKind::sum: {
        double s = 0.0;
        for (double v : in(n, 0).data()) s += v;
        n.value = Array::scalar(s);
        return;
      }
      case OpKind::one_hot: {
        const Array& idx = in(n, 0);
        if (idx.rank() != 1) rank_error(n, idx.shape(), "a rank-1 index array");
        Array out = Array::zeros({idx.size(), n.count});
        for (std::size_t r = 0; r < idx.size(); ++r) out.at(r, class_index(n, idx[r], n.count)) = 1.0;
        n.value = std::move(out);
        return;
      }
    }
  }

  void propagate(Node& n) {
    const Array& g = n.adjoint;
    switch (n.op) {
      case OpKind::input:
      case OpKind::parameter:
      case OpKind::constant:
      case OpKind::stop_gradient:
      case OpKind::argmax_match:
      case OpKind::one_hot:
        return;
      case OpKind::matmul: {
        const Array& a = in(n, 0);
        const Array& b = in(n, 1);
        const std::size_t rows = a.shape()[0], inner = a.shape()[1], cols = b.shape()[1];
        Array& ga = adj_in(n, 0);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t k = 0; k < inner; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += g.at(i, j) * b.at(k, j);
            ga.at(i, k) += s;
          }
        }
        Array& gb = adj_in(n, 1);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t k = 0; k < inner; ++k) {
            const double aik = a.at(i, k);
            for (std::size_t j = 0; j < cols; ++j) gb.at(k, j) += aik * g.at(i, j);
          }
        }
        return;
      }
      case OpKind::add:
      case OpKind::sub:
      case OpKind::mul: {
        const Array& a = in(n, 0);
        const Array& b = in(n, 1);
        const Broadcast kind = broadcast_kind(n, a, b);
        const std::size_t cols = a.cols();
        Array& ga = adj_in(n, 0);
        for (std::size_t i = 0; i < a.size(); ++i) {
          const std::size_t bi = rhs_index(kind, i, cols);
          ga[i] += n.op == OpKind::mul ? g[i] * b[bi] : g[i];
        }
        Array& gb = adj_in(n, 1);
        for (std::size_t i = 0; i < a.size(); ++i) {
          const std::size_t bi = rhs_index(kind, i, cols);
          gb[bi] += n.op == OpKind::add ? g[i] : n.op == OpKind::sub ? -g[i] : g[i] * a[i];
        }
        return;
      }
      case OpKind::scale:
      case OpKind::add_scalar:
      case OpKind::relu:
      case OpKind::exp:
      case OpKind::log:
      case OpKind::abs:
      case OpKind::pow:
      case OpKind::huber: {
        const Array& a = in(n, 0);
        Array& ga = adj_in(n, 0);
        const double p = n.param;
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double x = a[i];
          double d = 1.0;
          switch (n.op) {
            case OpKind::scale: d = p; break;
            case OpKind::add_scalar: d = 1.0; break;
            case OpKind::relu: d = x > 0.0 ? 1.0 : 0.0; break;
            case OpKind::exp: d = n.value[i]; break;
            case OpKind::log: d = x > kLogFloor ? 1.0 / x : 0.0; break;
            case OpKind::abs: d = x > 0.0 ? 1.0 : x < 0.0 ? -1.0 : 0.0; break;
            case OpKind::pow: d = pow_grad(x, p); break;
            case OpKind::huber: d = std::fabs(x) <= p ? x : (x > 0.0 ? p : -p); break;
            default: break;
          }
          ga[i] += g[i] * d;
        }
        return;
      }
      case OpKind::pow_gated: {
        const Array& base = in(n, 0);
        const Array& gate = in(n, 1);
        Array& gb = adj_in(n, 0);
        for (std::size_t i = 0; i < base.size(); ++i) gb[i] += g[i] * pow_grad(base[i], n.rule(gate[i]));
        return;
      }
      case OpKind::log_softmax: {
        Array& ga = adj_in(n, 0);
        const Array& y = n.value;
        const std::size_t k = y.rank() == 1 ? y.size() : y.shape()[1];
        const std::size_t rows = k == 0 ? 0 : y.size() / k;
        for (std::size_t r = 0; r < rows; ++r) {
          double gs = 0.0;
          for (std::size_t j = 0; j < k; ++j) gs += g[r * k + j];
          for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += g[r * k + j] - std::exp(y[r * k + j]) * gs;
        }
        return;
      }
      case OpKind::gather: {
        const Array& idx = in(n, 1);
        Array& gx = adj_in(n, 0);
        for (std::size_t r = 0; r < idx.size(); ++r) gx.at(r, static_cast<std::size_t>(idx[r])) += g[r];
        return;
      }
      case OpKind::row_max: {
        const Array& x = in(n, 0);
        Array& gx = adj_in(n, 0);
        for (std::size_t r = 0; r < x.shape()[0]; ++r) gx.at(r, first_argmax(x, r)) += g[r];
        return;
      }
      case OpKind::row_sum: {
        const Array& x = in(n, 0);
        Array& gx = adj_in(n, 0);
        for (std::size_t r = 0; r < x.shape()[0]; ++r) {
          for (std::size_t j = 0; j < x.shape()[1]; ++j) gx.at(r, j) += g[r];
        }
        return;
      }
      case OpKind::mean_batch: {
        const Array& x = in(n, 0);
        Array& gx = adj_in(n, 0);
        const double inv = 1.0 / static_cast<double>(x.shape()[0]);
        if (x.rank() == 1) {
          for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[0] * inv;
        } else {
          const std::size_t k = x.shape()[1];
          for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i % k] * inv;
        }
        return;
      }
      case OpKind::sum: {
        Array& gx = adj_in(n, 0);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
        return;
      }
    }
  }
};

}  // namespace calprune
