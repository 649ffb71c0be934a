#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "calprune/diff_graph.hpp"

namespace calprune {

struct LeafCheck {
  std::string leaf;
  double max_relative_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<LeafCheck> leaves;

  bool passed() const {
    return std::all_of(leaves.begin(), leaves.end(), [](const LeafCheck& l) { return l.passed; });
  }
  double max_relative_error() const {
    double m = 0.0;
    for (const auto& l : leaves) m = std::max(m, l.max_relative_error);
    return m;
  }
};

/// Compares backward() against central differences on every coordinate of
/// every parameter leaf. Failures are reported, never thrown.
inline GradCheckReport grad_check(DiffGraph& graph, const Bindings& bindings, double step, double tol) {
  graph.forward(bindings);
  const Gradients analytic = graph.backward();

  GradCheckReport report;
  Bindings probe = bindings;
  for (const auto& [name, grad] : analytic) {
    LeafCheck check{name};
    Array& theta = probe.at(name);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + step;
      const double up = graph.forward(probe).item();
      theta[i] = saved - step;
      const double down = graph.forward(probe).item();
      theta[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::fabs(grad[i] - numeric) / std::max(1e-8, std::fabs(grad[i]) + std::fabs(numeric));
      check.max_relative_error = std::max(check.max_relative_error, err);
    }
    check.passed = check.max_relative_error <= tol;
    report.leaves.push_back(std::move(check));
  }
  // leave cached values consistent with the unperturbed bindings
  graph.forward(bindings);
  return report;
}

}  // namespace calprune
