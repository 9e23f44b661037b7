#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "neustrom/rng.hpp"
#include "neustrom/tensor.hpp"

namespace testutil {

inline neustrom::Tensor random_tensor(neustrom::Shape shape, double lo, double hi,
                                      neustrom::Rng& rng) {
  return neustrom::Tensor::uniform(std::move(shape), lo, hi, rng);
}

inline bool approx(double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol; }

/// Scratch directory under the build tree; wiped per use.
inline std::filesystem::path temp_dir(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / ("neustrom_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testutil
