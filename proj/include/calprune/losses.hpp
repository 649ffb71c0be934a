#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "calprune/diff_graph.hpp"

namespace calprune {

enum class LossKind { nll, focal, flsd, brier, label_smoothing };
enum class AuxKind { huber, dca, mdca };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::nll: return "nll";
    case LossKind::focal: return "focal";
    case LossKind::flsd: return "flsd";
    case LossKind::brier: return "brier";
    case LossKind::label_smoothing: return "label_smoothing";
  }
  return "?";
}

inline const char* to_string(AuxKind k) {
  switch (k) {
    case AuxKind::huber: return "huber";
    case AuxKind::dca: return "dca";
    case AuxKind::mdca: return "mdca";
  }
  return "?";
}

inline LossKind parse_loss_kind(const std::string& s) {
  for (LossKind k : {LossKind::nll, LossKind::focal, LossKind::flsd, LossKind::brier, LossKind::label_smoothing}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown loss kind '" + s + "'");
}

inline AuxKind parse_aux_kind(const std::string& s) {
  for (AuxKind k : {AuxKind::huber, AuxKind::dca, AuxKind::mdca}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown auxiliary loss kind '" + s + "'");
}

struct AuxLossSpec {
  AuxKind kind = AuxKind::huber;
  double alpha = 0.005;
  double lambda = 10.0;
};

struct LossSpec {
  LossKind kind = LossKind::flsd;
  double gamma = 3.0;
  double ls_epsilon = 0.05;
  std::optional<AuxLossSpec> aux;

  void validate() const {
    if (!(gamma >= 0.0)) throw std::invalid_argument("loss.gamma must be >= 0");
    if (kind == LossKind::label_smoothing && !(ls_epsilon >= 0.0 && ls_epsilon < 1.0)) {
      throw std::invalid_argument("loss.ls_epsilon must lie in [0, 1)");
    }
    if (aux) {
      if (!(aux->lambda >= 0.0)) throw std::invalid_argument("loss.lambda must be >= 0");
      if (aux->kind == AuxKind::huber && !(aux->alpha > 0.0)) {
        throw std::invalid_argument("loss.alpha must be > 0 for the huber auxiliary loss");
      }
    }
  }
};

// All builders take a node of row-wise log-probabilities (n x K) and a node of
// integer-valued targets (n) and return a scalar node holding the batch mean.

inline NodeId nll_loss(DiffGraph& g, NodeId log_probs, NodeId targets) {
  return g.scale(g.mean_batch(g.gather(log_probs, targets)), -1.0);
}

/// -(1 - p_t)^gamma * log p_t. log p_t is read straight from the log-softmax output.
inline NodeId focal_loss(DiffGraph& g, NodeId log_probs, NodeId targets, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("focal gamma must be >= 0");
  const NodeId log_pt = g.gather(log_probs, targets);
  const NodeId one_minus_pt = g.add_scalar(g.scale(g.exp(log_pt), -1.0), 1.0);
  const NodeId weight = g.pow(one_minus_pt, gamma);
  return g.scale(g.mean_batch(g.mul(weight, log_pt)), -1.0);
}

/// Sample-dependent focal exponent: 5 below probability 0.2, else 3.
inline double flsd_gamma(double p_target) { return p_target < 0.2 ? 5.0 : 3.0; }

inline NodeId flsd_loss(DiffGraph& g, NodeId log_probs, NodeId targets) {
  const NodeId log_pt = g.gather(log_probs, targets);
  const NodeId pt = g.exp(log_pt);
  const NodeId one_minus_pt = g.add_scalar(g.scale(pt, -1.0), 1.0);
  const NodeId weight = g.pow_gated(one_minus_pt, pt, flsd_gamma);
  return g.scale(g.mean_batch(g.mul(weight, log_pt)), -1.0);
}

/// Scalar Huber function: x^2/2 inside [-alpha, alpha], alpha(|x| - alpha/2) outside.
inline double huber_value(double x, double alpha) {
  const double ax = std::fabs(x);
  return ax <= alpha ? 0.5 * x * x : alpha * (ax - 0.5 * alpha);
}

inline NodeId huber_fn(DiffGraph& g, NodeId x, double alpha) { return g.huber(x, alpha); }

/// Batch mean confidence minus batch accuracy; the accuracy side carries no gradient.
inline NodeId confidence_accuracy_gap(DiffGraph& g, NodeId log_probs, NodeId targets) {
  const NodeId confidence = g.exp(g.row_max(log_probs));
  const NodeId accuracy = g.stop_gradient(g.mean_batch(g.argmax_match(log_probs, targets)));
  return g.sub(g.mean_batch(confidence), accuracy);
}

inline NodeId aux_huber_loss(DiffGraph& g, NodeId log_probs, NodeId targets, double alpha) {
  return g.huber(confidence_accuracy_gap(g, log_probs, targets), alpha);
}

inline NodeId dca_aux_loss(DiffGraph& g, NodeId log_probs, NodeId targets) {
  return g.abs(confidence_accuracy_gap(g, log_probs, targets));
}

/// Mean over classes of |mean predicted probability - label frequency|.
inline NodeId mdca_aux_loss(DiffGraph& g, NodeId log_probs, NodeId targets, std::size_t num_classes) {
  const NodeId mean_prob = g.mean_batch(g.exp(log_probs));
  const NodeId frequency = g.stop_gradient(g.mean_batch(g.one_hot(targets, num_classes)));
  return g.mean_batch(g.abs(g.sub(mean_prob, frequency)));
}

inline NodeId brier_loss(DiffGraph& g, NodeId log_probs, NodeId targets, std::size_t num_classes) {
  const NodeId diff = g.sub(g.exp(log_probs), g.one_hot(targets, num_classes));
  return g.mean_batch(g.row_sum(g.mul(diff, diff)));
}

/// Cross-entropy against (1 - eps) on the true class and eps/(K-1) elsewhere.
inline NodeId label_smoothing_loss(DiffGraph& g, NodeId log_probs, NodeId targets, std::size_t num_classes,
                                   double ls_epsilon) {
  if (num_classes < 2) throw std::invalid_argument("label smoothing needs K >= 2");
  const double off = ls_epsilon / static_cast<double>(num_classes - 1);
  const NodeId soft = g.add_scalar(g.scale(g.one_hot(targets, num_classes), 1.0 - ls_epsilon - off), off);
  return g.scale(g.mean_batch(g.row_sum(g.mul(soft, log_probs))), -1.0);
}

inline NodeId baseline_loss(DiffGraph& g, LossKind kind, NodeId log_probs, NodeId targets, std::size_t num_classes,
                            double ls_epsilon) {
  switch (kind) {
    case LossKind::brier: return brier_loss(g, log_probs, targets, num_classes);
    case LossKind::label_smoothing: return label_smoothing_loss(g, log_probs, targets, num_classes, ls_epsilon);
    default: throw std::invalid_argument(std::string("not a baseline loss: ") + to_string(kind));
  }
}

inline NodeId classification_loss(DiffGraph& g, NodeId log_probs, NodeId targets, const LossSpec& spec,
                                  std::size_t num_classes) {
  switch (spec.kind) {
    case LossKind::nll: return nll_loss(g, log_probs, targets);
    case LossKind::focal: return focal_loss(g, log_probs, targets, spec.gamma);
    case LossKind::flsd: return flsd_loss(g, log_probs, targets);
    case LossKind::brier:
    case LossKind::label_smoothing:
      return baseline_loss(g, spec.kind, log_probs, targets, num_classes, spec.ls_epsilon);
  }
  throw std::invalid_argument("unknown loss kind");
}

inline NodeId aux_loss(DiffGraph& g, NodeId log_probs, NodeId targets, const AuxLossSpec& aux,
                       std::size_t num_classes) {
  switch (aux.kind) {
    case AuxKind::huber: return aux_huber_loss(g, log_probs, targets, aux.alpha);
    case AuxKind::dca: return dca_aux_loss(g, log_probs, targets);
    case AuxKind::mdca: return mdca_aux_loss(g, log_probs, targets, num_classes);
  }
  throw std::invalid_argument("unknown auxiliary loss kind");
}

/// Classification loss plus lambda times the auxiliary loss. With no auxiliary
/// term, or lambda == 0, the classification node itself is returned.
inline NodeId total_loss(DiffGraph& g, NodeId log_probs, NodeId targets, const LossSpec& spec,
                         std::size_t num_classes) {
  spec.validate();
  const NodeId cls = classification_loss(g, log_probs, targets, spec, num_classes);
  if (!spec.aux || spec.aux->lambda == 0.0) return cls;
  return g.add(cls, g.scale(aux_loss(g, log_probs, targets, *spec.aux, num_classes), spec.aux->lambda));
}

}  // namespace calprune
