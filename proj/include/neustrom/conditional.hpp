#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/kernel.hpp"
#include "neustrom/tensor.hpp"

namespace neustrom {

/// Sparse row-stochastic n x n conditional probability. Only strictly
/// positive entries are stored; every row sums to 1 within 1e-10.
class ConditionalMatrix {
 public:
  struct Entry {
    int col;
    double p;
  };

  ConditionalMatrix(int n, std::vector<std::vector<Entry>> rows)
      : n_(n), rows_(std::move(rows)) {
    if (static_cast<int>(rows_.size()) != n)
      throw std::invalid_argument("ConditionalMatrix: row count mismatch");
    for (int i = 0; i < n_; ++i) {
      double s = 0.0;
      for (const Entry& e : rows_[static_cast<size_t>(i)]) {
        if (e.col < 0 || e.col >= n_)
          throw std::invalid_argument("ConditionalMatrix: column out of range in row " +
                                      std::to_string(i));
        if (!(e.p > 0.0) || e.p > 1.0 + 1e-12)
          throw std::invalid_argument("ConditionalMatrix: probability outside (0,1] in row " +
                                      std::to_string(i));
        s += e.p;
      }
      if (std::abs(s - 1.0) > 1e-10)
        throw std::invalid_argument("ConditionalMatrix: row " + std::to_string(i) +
                                    " sums to " + std::to_string(s));
    }
  }

  int n() const { return n_; }
  const std::vector<Entry>& row(int i) const { return rows_[static_cast<size_t>(i)]; }

  /// Stored probability, or 0 for an absent entry.
  double prob(int i, int j) const {
    for (const Entry& e : rows_[static_cast<size_t>(i)])
      if (e.col == j) return e.p;
    return 0.0;
  }

  int64_t entry_count() const {
    int64_t c = 0;
    for (const auto& r : rows_) c += static_cast<int64_t>(r.size());
    return c;
  }

  /// Three-column CSV: row, col, prob.
  void to_csv(std::ostream& os) const {
    os << "row,col,prob\n";
    char buf[64];
    for (int i = 0; i < n_; ++i)
      for (const Entry& e : rows_[static_cast<size_t>(i)]) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", i, e.col, e.p);
        os << buf;
      }
  }

 private:
  int n_;
  std::vector<std::vector<Entry>> rows_;
};

/// Row-normalized kernel conditional over a dataset (points are rows of
/// `data`). Without a kNN restriction the normalizer runs over all points
/// including the self term. With knn set, the support of row i is the knn
/// nearest neighbors of point i (self excluded, distance ties broken by the
/// lower index) and the row is normalized over that support only.
inline ConditionalMatrix build_row_normalized(const Tensor& data, const KernelSpec& spec,
                                              std::optional<int> knn = std::nullopt) {
  if (data.rank() != 2) throw std::invalid_argument("build_row_normalized: data must be n x d");
  const int n = data.dim(0);
  const int d = data.dim(1);
  if (n < 2) throw std::invalid_argument("build_row_normalized: need at least 2 points");
  if (knn && (*knn < 1 || *knn >= n))
    throw std::invalid_argument("build_row_normalized: knn must be in [1, n)");

  std::vector<std::vector<ConditionalMatrix::Entry>> rows(static_cast<size_t>(n));
  std::vector<double> kvals(static_cast<size_t>(n));
  std::vector<int> order;
  for (int i = 0; i < n; ++i) {
    std::span<const double> xi(data.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d));
    for (int j = 0; j < n; ++j) {
      std::span<const double> xj(data.data() + static_cast<size_t>(j) * d, static_cast<size_t>(d));
      kvals[static_cast<size_t>(j)] = kernel_eval(spec, xi, xj);
    }
    std::vector<ConditionalMatrix::Entry>& row = rows[static_cast<size_t>(i)];
    if (knn) {
      order.clear();
      for (int j = 0; j < n; ++j)
        if (j != i) order.push_back(j);
      // larger kernel value = nearer; ties by lower index
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return kvals[static_cast<size_t>(a)] > kvals[static_cast<size_t>(b)];
      });
      order.resize(static_cast<size_t>(*knn));
      std::sort(order.begin(), order.end());
      double mass = 0.0;
      for (int j : order) mass += kvals[static_cast<size_t>(j)];
      if (mass < 1e-300)
        throw std::runtime_error("build_row_normalized: kernel mass underflow in row " +
                                 std::to_string(i));
      for (int j : order) {
        const double p = kvals[static_cast<size_t>(j)] / mass;
        if (p > 0.0) row.push_back({j, p});
      }
    } else {
      double mass = 0.0;
      for (int j = 0; j < n; ++j) mass += kvals[static_cast<size_t>(j)];
      if (mass < 1e-300)
        throw std::runtime_error("build_row_normalized: kernel mass underflow in row " +
                                 std::to_string(i));
      for (int j = 0; j < n; ++j) {
        const double p = kvals[static_cast<size_t>(j)] / mass;
        if (p > 0.0) row.push_back({j, p});
      }
    }
  }
  return ConditionalMatrix(n, std::move(rows));
}

/// Label-derived conditional: row i is uniform over every point of the same
/// class, including i itself.
inline ConditionalMatrix build_supervised(const std::vector<int>& labels) {
  const int n = static_cast<int>(labels.size());
  if (n == 0) throw std::invalid_argument("build_supervised: empty label array");
  std::vector<std::vector<int>> members_by_class;
  std::vector<int> class_of(labels.size());
  {
    std::vector<int> classes;
    for (size_t i = 0; i < labels.size(); ++i) {
      auto it = std::find(classes.begin(), classes.end(), labels[i]);
      if (it == classes.end()) {
        classes.push_back(labels[i]);
        members_by_class.emplace_back();
        it = classes.end() - 1;
      }
      const size_t c = static_cast<size_t>(it - classes.begin());
      class_of[i] = static_cast<int>(c);
      members_by_class[c].push_back(static_cast<int>(i));
    }
  }
  std::vector<std::vector<ConditionalMatrix::Entry>> rows(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& members = members_by_class[static_cast<size_t>(class_of[static_cast<size_t>(i)])];
    const double p = 1.0 / static_cast<double>(members.size());
    for (int j : members) rows[static_cast<size_t>(i)].push_back({j, p});
  }
  return ConditionalMatrix(n, std::move(rows));
}

}  // namespace neustrom
