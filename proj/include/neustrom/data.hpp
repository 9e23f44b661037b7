#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/rng.hpp"
#include "neustrom/tensor.hpp"
#include "neustrom/train.hpp"

namespace neustrom {

struct Dataset {
  Tensor points;                // n x d
  std::vector<int> labels;      // primary label set, empty when unlabeled
  std::vector<int> labels_alt;  // second label set (two-circles half split)
};

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

enum class SyntheticKind { kOneCircle, kSquareGrid, kTwoCircles };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kOneCircle;
  int n = 500;           // points (per circle for two-circles)
  int side = 32;         // square-grid side length
  double radius = 1.0;   // circle radius / inner radius
  double radius2 = 2.0;  // outer radius (two-circles)
  double spacing = 1.0;  // grid spacing
  double noise = 0.0;    // gaussian noise stddev per coordinate
  uint64_t seed = 0;
};

/// One circle: n points at angles 2*pi*i/n. Square grid: side^2 lattice
/// points. Two circles: two concentric rings; the first label set is circle
/// membership, the second splits the plane into angular halves and therefore
/// crosses both circles.
inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.noise < 0.0) throw std::invalid_argument("gen_synthetic: noise must be >= 0");
  Rng rng(derive_seed(spec.seed, "synthetic"));
  Dataset out;
  const double two_pi = 2.0 * 3.14159265358979323846;
  switch (spec.kind) {
    case SyntheticKind::kOneCircle: {
      if (spec.n < 2) throw std::invalid_argument("gen_synthetic: need n >= 2");
      out.points = Tensor::zeros({spec.n, 2});
      for (int i = 0; i < spec.n; ++i) {
        const double a = two_pi * i / spec.n;
        out.points.at(i, 0) = spec.radius * std::cos(a) + spec.noise * rng.gaussian();
        out.points.at(i, 1) = spec.radius * std::sin(a) + spec.noise * rng.gaussian();
      }
      break;
    }
    case SyntheticKind::kSquareGrid: {
      if (spec.side < 2) throw std::invalid_argument("gen_synthetic: need side >= 2");
      const int n = spec.side * spec.side;
      out.points = Tensor::zeros({n, 2});
      for (int i = 0; i < spec.side; ++i)
        for (int j = 0; j < spec.side; ++j) {
          const int idx = i * spec.side + j;
          out.points.at(idx, 0) = spec.spacing * i + spec.noise * rng.gaussian();
          out.points.at(idx, 1) = spec.spacing * j + spec.noise * rng.gaussian();
        }
      break;
    }
    case SyntheticKind::kTwoCircles: {
      if (spec.n < 2) throw std::invalid_argument("gen_synthetic: need n >= 2 per circle");
      const int n = 2 * spec.n;
      out.points = Tensor::zeros({n, 2});
      out.labels.resize(static_cast<size_t>(n));
      out.labels_alt.resize(static_cast<size_t>(n));
      for (int c = 0; c < 2; ++c) {
        const double radius = c == 0 ? spec.radius : spec.radius2;
        for (int i = 0; i < spec.n; ++i) {
          const int idx = c * spec.n + i;
          const double a = two_pi * i / spec.n;
          out.points.at(idx, 0) = radius * std::cos(a) + spec.noise * rng.gaussian();
          out.points.at(idx, 1) = radius * std::sin(a) + spec.noise * rng.gaussian();
          out.labels[static_cast<size_t>(idx)] = c;
          out.labels_alt[static_cast<size_t>(idx)] = a < 3.14159265358979323846 ? 0 : 1;
        }
      }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// IDX binary format
// ---------------------------------------------------------------------------

/// Parse an IDX file: two zero bytes, a type byte (only 0x08, unsigned byte,
/// is supported), a dimension-count byte, big-endian u32 dimensions, then the
/// payload. Rank >= 2 payloads (images) are scaled to [0,1]; rank-1 payloads
/// (labels) are returned as raw values.
inline Tensor load_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_idx: cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 4)
    throw std::runtime_error("load_idx: '" + path + "' too short for an IDX header");
  if (bytes[0] != 0 || bytes[1] != 0)
    throw std::runtime_error("load_idx: bad magic in '" + path + "' (first two bytes must be 0)");
  if (bytes[2] != 0x08)
    throw std::runtime_error("load_idx: unsupported type byte 0x" +
                             [&] {
                               char b[8];
                               std::snprintf(b, sizeof(b), "%02x", bytes[2]);
                               return std::string(b);
                             }() +
                             " in '" + path + "' (only 0x08 unsigned byte is supported)");
  const int ndim = bytes[3];
  const size_t header = 4 + 4 * static_cast<size_t>(ndim);
  if (bytes.size() < header)
    throw std::runtime_error("load_idx: truncated dimension table in '" + path + "'");
  Shape shape(static_cast<size_t>(ndim));
  int64_t count = 1;
  for (int i = 0; i < ndim; ++i) {
    const size_t o = 4 + 4 * static_cast<size_t>(i);
    const uint32_t dim = (static_cast<uint32_t>(bytes[o]) << 24) |
                         (static_cast<uint32_t>(bytes[o + 1]) << 16) |
                         (static_cast<uint32_t>(bytes[o + 2]) << 8) |
                         static_cast<uint32_t>(bytes[o + 3]);
    shape[static_cast<size_t>(i)] = static_cast<int>(dim);
    count *= dim;
  }
  if (bytes.size() != header + static_cast<size_t>(count))
    throw std::runtime_error("load_idx: truncated payload in '" + path + "': expected " +
                             std::to_string(header + static_cast<size_t>(count)) + " bytes, got " +
                             std::to_string(bytes.size()));
  std::vector<double> values(static_cast<size_t>(count));
  const double scale = ndim >= 2 ? 1.0 / 255.0 : 1.0;
  for (int64_t i = 0; i < count; ++i)
    values[static_cast<size_t>(i)] = scale * bytes[header + static_cast<size_t>(i)];
  return Tensor(std::move(shape), std::move(values));
}

/// Fixture writer for the same format. Values must already be bytes (0..255).
inline void write_idx(const std::string& path, const Shape& shape,
                      const std::vector<unsigned char>& payload) {
  if (numel(shape) != static_cast<int64_t>(payload.size()))
    throw std::invalid_argument("write_idx: payload does not match shape");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_idx: cannot open '" + path + "'");
  const unsigned char head[4] = {0, 0, 0x08, static_cast<unsigned char>(shape.size())};
  out.write(reinterpret_cast<const char*>(head), 4);
  for (int d : shape) {
    const unsigned char dim[4] = {static_cast<unsigned char>((d >> 24) & 0xff),
                                  static_cast<unsigned char>((d >> 16) & 0xff),
                                  static_cast<unsigned char>((d >> 8) & 0xff),
                                  static_cast<unsigned char>(d & 0xff)};
    out.write(reinterpret_cast<const char*>(dim), 4);
  }
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
}

/// Flatten an (n, h, w) image tensor to n x (h*w).
inline Tensor flatten_images(const Tensor& images) {
  if (images.rank() < 2) throw std::invalid_argument("flatten_images: rank must be >= 2");
  int64_t per = 1;
  for (int i = 1; i < images.rank(); ++i) per *= images.dim(i);
  return Tensor({images.dim(0), static_cast<int>(per)}, images.values());
}

// ---------------------------------------------------------------------------
// CSV datasets
// ---------------------------------------------------------------------------

/// CSV dataset: one header row, one point per row, label columns last.
inline Dataset load_csv_dataset(const std::string& path, int label_cols = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv_dataset: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_csv_dataset: '" + path + "' is empty");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("load_csv_dataset: ragged row in '" + path + "'");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("load_csv_dataset: no data rows in '" + path + "'");
  const int total_cols = static_cast<int>(rows.front().size());
  if (label_cols < 0 || label_cols >= total_cols)
    throw std::invalid_argument("load_csv_dataset: label column count out of range");
  const int d = total_cols - label_cols;
  const int n = static_cast<int>(rows.size());
  Dataset out;
  out.points = Tensor::zeros({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.points.at(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  if (label_cols >= 1) {
    out.labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      out.labels[static_cast<size_t>(i)] =
          static_cast<int>(std::lround(rows[static_cast<size_t>(i)][static_cast<size_t>(d)]));
  }
  if (label_cols >= 2) {
    out.labels_alt.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      out.labels_alt[static_cast<size_t>(i)] =
          static_cast<int>(std::lround(rows[static_cast<size_t>(i)][static_cast<size_t>(d + 1)]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labeled splits
// ---------------------------------------------------------------------------

struct LabeledSplit {
  std::vector<int> train_idx;
  std::vector<int> test_idx;
  double fraction = 0.0;
  uint64_t trial_seed = 0;
};

/// Seeded permutation split: the first round-half-up(fraction * n) indices
/// train, the rest test. No stratification.
inline LabeledSplit split_labeled(int n, double fraction, uint64_t trial_seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split_labeled: fraction must lie in (0,1)");
  const int train_count = static_cast<int>(std::floor(fraction * n + 0.5));
  if (train_count == 0 || train_count == n)
    throw std::invalid_argument("split_labeled: fraction " + std::to_string(fraction) +
                                " yields an empty train or test side at n=" + std::to_string(n));
  std::vector<int> perm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  Rng rng(trial_seed);
  rng.shuffle(perm);
  LabeledSplit split;
  split.fraction = fraction;
  split.trial_seed = trial_seed;
  split.train_idx.assign(perm.begin(), perm.begin() + train_count);
  split.test_idx.assign(perm.begin() + train_count, perm.end());
  std::sort(split.train_idx.begin(), split.train_idx.end());
  std::sort(split.test_idx.begin(), split.test_idx.end());
  return split;
}

// ---------------------------------------------------------------------------
// Ring-walk environment
// ---------------------------------------------------------------------------

struct StepKernel {
  double p_left = 0.4;
  double p_stay = 0.2;
  double p_right = 0.4;
};

/// Random walk on a ring of `size` positions, observed as 2-D coordinates on
/// a circle. Every trajectory starts at a uniformly drawn position and takes
/// `trajectory_length` steps of the step kernel.
class RingWalk : public EpisodeSource {
 public:
  RingWalk(int size, StepKernel step, int trajectory_length, double radius = 1.0)
      : size_(size), step_(step), length_(trajectory_length), radius_(radius) {
    if (size < 3) throw std::invalid_argument("RingWalk: ring size must be >= 3");
    if (trajectory_length < 1)
      throw std::invalid_argument("RingWalk: trajectory needs at least 2 states (T >= 1)");
    const double total = step.p_left + step.p_stay + step.p_right;
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("RingWalk: step kernel must sum to 1");
  }

  int observation_dim() const override { return 2; }

  int size() const { return size_; }
  double radius() const { return radius_; }

  /// Coordinates of ring node `pos`.
  void observe(int pos, double* out) const {
    const double a = 2.0 * 3.14159265358979323846 * pos / size_;
    out[0] = radius_ * std::cos(a);
    out[1] = radius_ * std::sin(a);
  }

  /// All distinct node coordinates (size x 2), the natural evaluation set.
  Tensor states() const {
    Tensor s = Tensor::zeros({size_, 2});
    for (int i = 0; i < size_; ++i) observe(i, s.data() + static_cast<size_t>(i) * 2);
    return s;
  }

  Tensor next_trajectory(Rng& rng) override {
    Tensor traj = Tensor::zeros({length_ + 1, 2});
    int pos = static_cast<int>(rng.below(static_cast<uint64_t>(size_)));
    observe(pos, traj.data());
    for (int t = 1; t <= length_; ++t) {
      const double u = rng.uniform();
      if (u < step_.p_left)
        pos = (pos + size_ - 1) % size_;
      else if (u < step_.p_left + step_.p_stay)
        ;  // stay
      else
        pos = (pos + 1) % size_;
      observe(pos, traj.data() + static_cast<size_t>(t) * 2);
    }
    return traj;
  }

 private:
  int size_;
  StepKernel step_;
  int length_;
  double radius_;
};

inline RingWalk ring_walk(int size, StepKernel step, int trajectory_length, double radius = 1.0) {
  return RingWalk(size, step, trajectory_length, radius);
}

}  // namespace neustrom
