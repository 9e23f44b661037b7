#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/conditional.hpp"
#include "neustrom/tape.hpp"
#include "neustrom/tensor.hpp"

namespace neustrom {

/// Full KL divergence between p_in and the normalized output kernel:
/// sum_ij p(j|i) log( p(j|i) (g_i.c + eps) / (g_i.g_j + eps) ).
/// Matches the training objective up to the (constant) entropy of p_in, so it
/// is the human-readable diagnostic of record. G holds g vectors as columns.
inline double kl_eval(const ConditionalMatrix& p_in, const Tensor& g, std::span<const double> c) {
  if (g.rank() != 2 || g.dim(1) != p_in.n())
    throw std::invalid_argument("kl_eval: G must be r x n with n matching p_in");
  const int r = g.dim(0);
  const int n = p_in.n();
  if (static_cast<int>(c.size()) != r) throw std::invalid_argument("kl_eval: c must have r entries");
  double kl = 0.0;
  std::vector<double> gi(static_cast<size_t>(r));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < r; ++k) gi[static_cast<size_t>(k)] = g.at(k, i);
    double gc = 0.0;
    for (int k = 0; k < r; ++k) gc += gi[static_cast<size_t>(k)] * c[static_cast<size_t>(k)];
    for (const auto& e : p_in.row(i)) {
      double gg = 0.0;
      for (int k = 0; k < r; ++k) gg += gi[static_cast<size_t>(k)] * g.at(k, e.col);
      kl += e.p * std::log(e.p * (gc + kLogEps) / (gg + kLogEps));
    }
  }
  return kl;
}

// ---------------------------------------------------------------------------
// Precision/recall-gain curves
// ---------------------------------------------------------------------------

struct PrgPoint {
  double threshold;
  double precision;
  double recall;
  double precision_gain;  // raw, can be negative (down to -inf when precision = 0)
  double recall_gain;
};

/// Operating points from sweeping every unique score as a threshold, plus the
/// trapezoidal area under the curve of points clipped to [0,1]^2. Raw gains
/// are retained for export; only the AUC uses the clipped values.
struct PrgCurve {
  std::vector<PrgPoint> points;  // sorted by recall_gain ascending
  double auc = 0.0;
  double positive_prior = 0.0;

  void to_csv(std::ostream& os) const {
    os << "threshold,precision,recall,precision_gain,recall_gain,clipped_precision_gain,clipped_recall_gain\n";
    char buf[256];
    for (const PrgPoint& p : points) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", p.threshold,
                    p.precision, p.recall, p.precision_gain, p.recall_gain,
                    std::clamp(p.precision_gain, 0.0, 1.0), std::clamp(p.recall_gain, 0.0, 1.0));
      os << buf;
    }
  }
};

inline PrgCurve prg_curve(const Tensor& scores, const Tensor& truth, double positive_prior) {
  if (scores.shape() != truth.shape() || scores.rank() != 2)
    throw std::invalid_argument("prg_curve: scores and truth must be equal-shape matrices");
  const int64_t total = scores.size();
  int64_t positives = 0;
  for (int64_t i = 0; i < total; ++i) {
    const double t = truth[i];
    if (t != 0.0 && t != 1.0)
      throw std::invalid_argument("prg_curve: truth entries must be 0 or 1");
    if (t == 1.0) ++positives;
  }
  if (positives == 0 || positives == total)
    throw std::invalid_argument("prg_curve: truth needs at least one positive and one negative");

  // order entries by descending score; cumulative counts give the confusion
  // numbers at every unique-threshold operating point
  std::vector<int64_t> order(static_cast<size_t>(total));
  for (int64_t i = 0; i < total; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int64_t a, int64_t b) { return scores[a] > scores[b]; });

  const double pi = positive_prior;
  auto gain = [pi](double v) {
    if (v <= 0.0) return -std::numeric_limits<double>::infinity();
    return (v - pi) / ((1.0 - pi) * v);
  };

  PrgCurve curve;
  curve.positive_prior = pi;
  int64_t tp = 0;
  for (int64_t idx = 0; idx < total; ++idx) {
    const int64_t e = order[static_cast<size_t>(idx)];
    if (truth[e] == 1.0) ++tp;
    const bool last_of_threshold =
        idx + 1 == total || scores[order[static_cast<size_t>(idx + 1)]] != scores[e];
    if (!last_of_threshold) continue;
    const double prec = static_cast<double>(tp) / static_cast<double>(idx + 1);
    const double rec = static_cast<double>(tp) / static_cast<double>(positives);
    curve.points.push_back({scores[e], prec, rec, gain(prec), gain(rec)});
  }

  std::stable_sort(curve.points.begin(), curve.points.end(), [](const PrgPoint& a, const PrgPoint& b) {
    if (a.recall_gain != b.recall_gain) return a.recall_gain < b.recall_gain;
    return a.precision_gain > b.precision_gain;
  });

  // AUC over clipped points; the leftmost point extends horizontally to
  // recall-gain 0 (the all-positive threshold always lands at recall-gain 1,
  // so no right extension is needed)
  double auc = 0.0;
  double prev_rg = 0.0;
  double prev_pg = 0.0;
  bool first = true;
  for (const PrgPoint& p : curve.points) {
    const double rg = std::clamp(p.recall_gain, 0.0, 1.0);
    const double pg = std::clamp(p.precision_gain, 0.0, 1.0);
    if (first) {
      auc += rg * pg;  // flat extension from rg=0
      first = false;
    } else {
      auc += (rg - prev_rg) * 0.5 * (pg + prev_pg);
    }
    prev_rg = rg;
    prev_pg = pg;
  }
  curve.auc = auc;
  return curve;
}

// ---------------------------------------------------------------------------
// NMF with hard assignment
// ---------------------------------------------------------------------------

struct NmfResult {
  std::vector<int> labels;         // argmax component per column
  Tensor u;                        // r x k
  Tensor v;                        // k x n
  double reconstruction_error = 0; // Frobenius norm of the residual
  int iterations_used = 0;
  std::vector<int> zero_columns;   // columns of H with no mass, assigned by tie rule
};

/// Multiplicative-update NMF (Frobenius objective) followed by hard
/// assignment of each column to its dominant component.
inline NmfResult nmf_ha(const Tensor& h, int k, int iterations = 500, uint64_t seed = 0) {
  if (h.rank() != 2) throw std::invalid_argument("nmf_ha: H must be a matrix");
  if (k < 2) throw std::invalid_argument("nmf_ha: component count must be at least 2");
  const int r = h.dim(0);
  const int n = h.dim(1);
  double mean = 0.0;
  for (int64_t i = 0; i < h.size(); ++i) {
    if (h[i] < 0.0) throw std::invalid_argument("nmf_ha: H must be nonnegative");
    mean += h[i];
  }
  mean /= static_cast<double>(h.size());

  Rng rng(seed);
  const double init_scale = std::sqrt(std::max(mean, 1e-12) / k);
  Tensor u = Tensor::zeros({r, k});
  Tensor v = Tensor::zeros({k, n});
  for (int64_t i = 0; i < u.size(); ++i) u[i] = init_scale * (0.05 + 0.95 * rng.uniform());
  for (int64_t i = 0; i < v.size(); ++i) v[i] = init_scale * (0.05 + 0.95 * rng.uniform());

  constexpr double kDelta = 1e-12;
  auto frobenius_error = [&]() {
    double acc = 0.0;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < n; ++j) {
        double uv = 0.0;
        for (int c = 0; c < k; ++c) uv += u.at(i, c) * v.at(c, j);
        const double d = h.at(i, j) - uv;
        acc += d * d;
      }
    return std::sqrt(acc);
  };

  NmfResult result;
  double prev_err = frobenius_error();
  int iters = 0;
  for (int it = 0; it < iterations; ++it) {
    // V <- V * (U^T H) / (U^T U V + delta)
    Tensor utu = Tensor::zeros({k, k});
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) {
        double acc = 0.0;
        for (int i = 0; i < r; ++i) acc += u.at(i, a) * u.at(i, b);
        utu.at(a, b) = acc;
      }
    for (int a = 0; a < k; ++a)
      for (int j = 0; j < n; ++j) {
        double num = 0.0;
        for (int i = 0; i < r; ++i) num += u.at(i, a) * h.at(i, j);
        double den = kDelta;
        for (int b = 0; b < k; ++b) den += utu.at(a, b) * v.at(b, j);
        v.at(a, j) *= num / den;
      }
    // U <- U * (H V^T) / (U V V^T + delta)
    Tensor vvt = Tensor::zeros({k, k});
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += v.at(a, j) * v.at(b, j);
        vvt.at(a, b) = acc;
      }
    for (int i = 0; i < r; ++i)
      for (int a = 0; a < k; ++a) {
        double num = 0.0;
        for (int j = 0; j < n; ++j) num += h.at(i, j) * v.at(a, j);
        double den = kDelta;
        for (int b = 0; b < k; ++b) den += u.at(i, b) * vvt.at(b, a);
        u.at(i, a) *= num / den;
      }
    iters = it + 1;
    const double err = frobenius_error();
    const bool plateaued = std::abs(prev_err - err) <= 1e-6 * std::max(prev_err, 1e-30);
    prev_err = err;
    if (plateaued) break;
  }

  result.u = std::move(u);
  result.v = std::move(v);
  result.reconstruction_error = prev_err;
  result.iterations_used = iters;
  result.labels.resize(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    double col_mass = 0.0;
    for (int i = 0; i < r; ++i) col_mass += h.at(i, j);
    int best = 0;
    double best_v = result.v.at(0, j);
    for (int a = 1; a < k; ++a)
      if (result.v.at(a, j) > best_v) {
        best_v = result.v.at(a, j);
        best = a;
      }
    if (col_mass == 0.0) {
      result.zero_columns.push_back(j);
      best = 0;
    }
    result.labels[static_cast<size_t>(j)] = best;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Accuracy under optimal component-to-class matching
// ---------------------------------------------------------------------------

struct MatchResult {
  double accuracy = 0.0;
  Tensor confusion;            // k x k counts, rows true classes, cols matched components
  std::vector<int> component_to_class;  // matching used
};

/// Accuracy of predicted component ids against true labels, maximizing the
/// confusion-matrix trace over one-to-one component/class assignments (exact
/// bitmask DP; class counts here are small).
inline MatchResult accuracy_with_matching(const std::vector<int>& pred,
                                          const std::vector<int>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw std::invalid_argument("accuracy_with_matching: label arrays must be equal and non-empty");
  auto dense_ids = [](const std::vector<int>& v, std::vector<int>& out) {
    std::vector<int> uniq(v);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    out.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i)
      out[i] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), v[i]) - uniq.begin());
    return static_cast<int>(uniq.size());
  };
  std::vector<int> p, t;
  const int kp = dense_ids(pred, p);
  const int kt = dense_ids(truth, t);
  const int k = std::max(kp, kt);
  if (k > 20)
    throw std::invalid_argument("accuracy_with_matching: label-set size " + std::to_string(k) +
                                " exceeds the exact-matching limit");

  std::vector<int64_t> counts(static_cast<size_t>(k) * k, 0);
  for (size_t i = 0; i < p.size(); ++i) counts[static_cast<size_t>(t[i]) * k + p[i]]++;

  // dp over subsets of components; true classes processed in index order
  const int full = 1 << k;
  std::vector<int64_t> dp(static_cast<size_t>(full), -1);
  dp[0] = 0;
  for (int mask = 0; mask < full; ++mask) {
    if (dp[static_cast<size_t>(mask)] < 0) continue;
    const int row = __builtin_popcount(static_cast<unsigned>(mask));
    if (row == k) continue;
    for (int c = 0; c < k; ++c) {
      if (mask & (1 << c)) continue;
      const int nm = mask | (1 << c);
      const int64_t val = dp[static_cast<size_t>(mask)] + counts[static_cast<size_t>(row) * k + c];
      if (val > dp[static_cast<size_t>(nm)]) dp[static_cast<size_t>(nm)] = val;
    }
  }

  // recover assignment
  std::vector<int> class_to_comp(static_cast<size_t>(k), -1);
  {
    int mask = full - 1;
    for (int row = k - 1; row >= 0; --row) {
      // find which component was chosen for this row on the optimal path
      int c = -1;
      for (int cand = 0; cand < k; ++cand) {
        if (!(mask & (1 << cand))) continue;
        const int pm = mask ^ (1 << cand);
        if (dp[static_cast<size_t>(pm)] >= 0 &&
            dp[static_cast<size_t>(pm)] + counts[static_cast<size_t>(row) * k + cand] ==
                dp[static_cast<size_t>(mask)]) {
          c = cand;
          break;
        }
      }
      class_to_comp[static_cast<size_t>(row)] = c;
      mask ^= (1 << c);
    }
  }

  MatchResult res;
  res.component_to_class.assign(static_cast<size_t>(k), -1);
  for (int cls = 0; cls < k; ++cls)
    res.component_to_class[static_cast<size_t>(class_to_comp[static_cast<size_t>(cls)])] = cls;
  res.confusion = Tensor::zeros({k, k});
  for (int cls = 0; cls < k; ++cls)
    for (int comp = 0; comp < k; ++comp)
      res.confusion.at(cls, res.component_to_class[static_cast<size_t>(comp)]) +=
          static_cast<double>(counts[static_cast<size_t>(cls) * k + comp]);
  res.accuracy = static_cast<double>(dp[static_cast<size_t>(full - 1)]) /
                 static_cast<double>(pred.size());
  return res;
}

// ---------------------------------------------------------------------------
// Receptive-field metrics
// ---------------------------------------------------------------------------

struct RfMetrics {
  std::vector<double> sparsity;   // per cell: fraction of responses below tau
  std::vector<double> locality;   // per cell: response-weighted spread / dataset spread
  std::vector<uint8_t> defined;   // 0 for cells with no response mass
  double mean_sparsity = 0.0;     // over defined cells
  double mean_locality = 0.0;
};

/// Sparsity and locality of each cell's receptive field (rows of G^T). The
/// locality score is the response-weighted mean squared distance of the input
/// coordinates to the cell's response-weighted centroid, normalized by the
/// same quantity for the whole dataset; small means spatially local.
inline RfMetrics rf_metrics(const Tensor& g, const Tensor& coords, double tau) {
  if (g.rank() != 2 || coords.rank() != 2 || g.dim(1) != coords.dim(0))
    throw std::invalid_argument("rf_metrics: G must be r x n and coords n x d");
  const int r = g.dim(0);
  const int n = g.dim(1);
  const int d = coords.dim(1);

  std::vector<double> global_centroid(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) global_centroid[static_cast<size_t>(j)] += coords.at(i, j);
  for (double& x : global_centroid) x /= n;
  double global_spread = 0.0;
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
      const double diff = coords.at(i, j) - global_centroid[static_cast<size_t>(j)];
      acc += diff * diff;
    }
    global_spread += acc;
  }
  global_spread /= n;

  RfMetrics m;
  m.sparsity.resize(static_cast<size_t>(r));
  m.locality.resize(static_cast<size_t>(r));
  m.defined.resize(static_cast<size_t>(r));
  int defined_count = 0;
  std::vector<double> centroid(static_cast<size_t>(d));
  for (int cell = 0; cell < r; ++cell) {
    int below = 0;
    double mass = 0.0;
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const double w = g.at(cell, i);
      if (w < tau) ++below;
      mass += w;
      for (int j = 0; j < d; ++j) centroid[static_cast<size_t>(j)] += w * coords.at(i, j);
    }
    m.sparsity[static_cast<size_t>(cell)] = static_cast<double>(below) / n;
    if (mass <= 0.0) {
      m.defined[static_cast<size_t>(cell)] = 0;
      m.locality[static_cast<size_t>(cell)] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    for (double& x : centroid) x /= mass;
    double spread = 0.0;
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) {
        const double diff = coords.at(i, j) - centroid[static_cast<size_t>(j)];
        acc += diff * diff;
      }
      spread += g.at(cell, i) * acc;
    }
    spread /= mass;
    m.defined[static_cast<size_t>(cell)] = 1;
    m.locality[static_cast<size_t>(cell)] = global_spread > 0.0 ? spread / global_spread : 0.0;
    m.mean_sparsity += m.sparsity[static_cast<size_t>(cell)];
    m.mean_locality += m.locality[static_cast<size_t>(cell)];
    ++defined_count;
  }
  if (defined_count > 0) {
    m.mean_sparsity /= defined_count;
    m.mean_locality /= defined_count;
  }
  return m;
}

}  // namespace neustrom
