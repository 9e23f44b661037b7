#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/tensor.hpp"

namespace neustrom {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Write through a temp file and rename, so interrupted runs never leave a
/// truncated artifact behind.
inline void atomic_write(const std::filesystem::path& path,
                         const std::function<void(std::ostream&)>& writer, bool binary = false) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
    if (!out) throw std::runtime_error("atomic_write: cannot open '" + tmp.string() + "'");
    writer(out);
    if (!out) throw std::runtime_error("atomic_write: failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
  atomic_write(path, [&](std::ostream& os) { os << text; });
}

/// Matrix as CSV without a header (values at full precision).
inline void write_csv_matrix(std::ostream& os, const Tensor& m) {
  if (m.rank() != 2) throw std::invalid_argument("write_csv_matrix: need a rank-2 tensor");
  for (int i = 0; i < m.dim(0); ++i) {
    for (int j = 0; j < m.dim(1); ++j) {
      if (j) os << ',';
      os << fmt_double(m.at(i, j));
    }
    os << '\n';
  }
}

/// CSV matrix reader (no header; used by the heatmap re-renderer).
inline Tensor read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv_matrix: cannot open '" + path + "'");
  std::vector<double> values;
  std::string line;
  int cols = -1, rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int c = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::stod(cell));
      ++c;
    }
    if (cols < 0)
      cols = c;
    else if (c != cols)
      throw std::runtime_error("read_csv_matrix: ragged row in '" + path + "'");
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("read_csv_matrix: '" + path + "' is empty");
  return Tensor({rows, cols}, std::move(values));
}

/// Grayscale heatmap: binary PGM (P5), max-normalized. Negative values clamp
/// to black.
inline void write_pgm(const std::filesystem::path& path, const Tensor& m) {
  if (m.rank() != 2) throw std::invalid_argument("write_pgm: need a rank-2 tensor");
  double maxv = 0.0;
  for (int64_t i = 0; i < m.size(); ++i) maxv = std::max(maxv, m[i]);
  atomic_write(
      path,
      [&](std::ostream& os) {
        os << "P5\n" << m.dim(1) << ' ' << m.dim(0) << "\n255\n";
        for (int64_t i = 0; i < m.size(); ++i) {
          const double v = m[i] <= 0.0 || maxv <= 0.0 ? 0.0 : m[i] / maxv;
          os.put(static_cast<char>(static_cast<int>(v * 255.0 + 0.5)));
        }
      },
      /*binary=*/true);
}

}  // namespace neustrom
