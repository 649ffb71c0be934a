#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "calprune/array.hpp"
#include "calprune/rng.hpp"

namespace calprune::testing {

inline Array random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Array::matrix(rows, cols, v);
}

inline Array random_vector(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Array::vector(v);
}

inline Array random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(rng.below(classes));
  return Array::vector(v);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("calprune-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace calprune::testing
