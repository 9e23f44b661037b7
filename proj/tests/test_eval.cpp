#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "neustrom/eval.hpp"

#include "helpers.hpp"

using namespace neustrom;

TEST_CASE("kl matches the hand-computed 2x2 case") {
  // G columns g1 = (1,0), g2 = (1/9, 1); with c = g1 + g2 the normalized
  // model rows are (0.9, 0.1) and (9/91, 82/91); p_in matches row 2 exactly
  // so only row 1 contributes: 0.5 log(0.5/0.9) + 0.5 log(0.5/0.1) = log(5/3)
  Tensor g({2, 2}, {1.0, 1.0 / 9.0, 0.0, 1.0});
  std::vector<double> c = {1.0 + 1.0 / 9.0, 1.0};
  std::vector<std::vector<ConditionalMatrix::Entry>> rows(2);
  rows[0] = {{0, 0.5}, {1, 0.5}};
  rows[1] = {{0, 9.0 / 91.0}, {1, 82.0 / 91.0}};
  ConditionalMatrix p_in(2, std::move(rows));
  REQUIRE(kl_eval(p_in, g, c) == Catch::Approx(std::log(5.0 / 3.0)).margin(1e-9));
}

TEST_CASE("kl vanishes when the output kernel reproduces the conditional") {
  Rng rng(5);
  const int r = 4, n = 6;
  Tensor g = Tensor::uniform({r, n}, 0.1, 1.0, rng);
  std::vector<double> c(static_cast<size_t>(r), 0.0);
  for (int k = 0; k < r; ++k)
    for (int i = 0; i < n; ++i) c[static_cast<size_t>(k)] += g.at(k, i);
  // define p_in as exactly the normalized output rows
  std::vector<std::vector<ConditionalMatrix::Entry>> rows(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double den = 0.0;
    for (int k = 0; k < r; ++k) den += g.at(k, i) * c[static_cast<size_t>(k)];
    double sum = 0.0;
    std::vector<double> numer(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
      double num = 0.0;
      for (int k = 0; k < r; ++k) num += g.at(k, i) * g.at(k, j);
      numer[static_cast<size_t>(j)] = num / den;
      sum += numer[static_cast<size_t>(j)];
    }
    // exact normalization to absorb roundoff
    for (int j = 0; j < n; ++j) rows[static_cast<size_t>(i)].push_back({j, numer[static_cast<size_t>(j)] / sum});
  }
  ConditionalMatrix p_in(n, std::move(rows));
  REQUIRE(std::abs(kl_eval(p_in, g, c)) < 1e-8);
}

TEST_CASE("kl is nonnegative on random draws") {
  Rng rng(6);
  for (int round = 0; round < 100; ++round) {
    const int r = 3, n = 5;
    Tensor g = Tensor::uniform({r, n}, 0.05, 1.0, rng);
    std::vector<double> c(static_cast<size_t>(r), 0.0);
    for (int k = 0; k < r; ++k)
      for (int i = 0; i < n; ++i) c[static_cast<size_t>(k)] += g.at(k, i);
    std::vector<std::vector<ConditionalMatrix::Entry>> rows(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      std::vector<double> w(static_cast<size_t>(n));
      double s = 0.0;
      for (int j = 0; j < n; ++j) {
        w[static_cast<size_t>(j)] = rng.uniform(0.01, 1.0);
        s += w[static_cast<size_t>(j)];
      }
      for (int j = 0; j < n; ++j) rows[static_cast<size_t>(i)].push_back({j, w[static_cast<size_t>(j)] / s});
    }
    ConditionalMatrix p_in(n, std::move(rows));
    REQUIRE(kl_eval(p_in, g, c) >= -1e-10);
  }
}

TEST_CASE("perfect scores land on the (1,1) operating point with unit area") {
  Tensor truth({2, 2}, {1, 0, 0, 1});
  PrgCurve curve = prg_curve(truth, truth, 0.5);
  REQUIRE(curve.auc == 1.0);
  bool has_perfect = false;
  for (const auto& p : curve.points)
    if (p.precision_gain == 1.0 && p.recall_gain == 1.0) has_perfect = true;
  REQUIRE(has_perfect);
}

TEST_CASE("constant scores pin precision gain at zero") {
  Tensor scores({2, 2}, {0.4, 0.4, 0.4, 0.4});
  Tensor truth({2, 2}, {1, 0, 0, 1});
  PrgCurve curve = prg_curve(scores, truth, 0.5);
  REQUIRE(curve.points.size() == 1);
  REQUIRE(curve.points[0].precision_gain == 0.0);
  REQUIRE(curve.auc == 0.0);
}

TEST_CASE("three-by-three case matches the hand-enumerated thresholds") {
  Tensor scores({3, 3}, {2, 2, 1, 1, 2, 1, 1, 1, 2});
  Tensor truth({3, 3}, {1, 1, 0, 0, 1, 1, 0, 0, 1});
  const double prior = 5.0 / 9.0;
  PrgCurve curve = prg_curve(scores, truth, prior);
  REQUIRE(curve.points.size() == 2);
  // threshold 2: precision 1 (gain 1), recall 4/5 (gain 11/16)
  REQUIRE(curve.points[0].threshold == 2.0);
  REQUIRE(curve.points[0].precision_gain == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(curve.points[0].recall_gain == Catch::Approx(11.0 / 16.0).margin(1e-12));
  // threshold 1: precision = prior (gain 0), recall 1 (gain 1)
  REQUIRE(curve.points[1].threshold == 1.0);
  REQUIRE(curve.points[1].precision_gain == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(curve.points[1].recall_gain == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(curve.auc == Catch::Approx(27.0 / 32.0).margin(1e-12));
}

TEST_CASE("prg is invariant to strictly monotone score transforms") {
  Rng rng(9);
  Tensor scores = Tensor::uniform({4, 4}, 0.0, 1.0, rng);
  Tensor truth = Tensor::zeros({4, 4});
  for (int64_t i = 0; i < truth.size(); ++i) truth[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  truth[0] = 1.0;
  truth[1] = 0.0;
  Tensor warped = scores;
  for (int64_t i = 0; i < warped.size(); ++i) {
    const double s = warped[i];
    warped[i] = 2.0 * s * s * s + 1.0;
  }
  double pos = 0.0;
  for (int64_t i = 0; i < truth.size(); ++i) pos += truth[i];
  const double prior = pos / 16.0;
  PrgCurve a = prg_curve(scores, truth, prior);
  PrgCurve b = prg_curve(warped, truth, prior);
  REQUIRE(a.points.size() == b.points.size());
  for (size_t i = 0; i < a.points.size(); ++i) {
    REQUIRE(a.points[i].precision_gain == Catch::Approx(b.points[i].precision_gain).margin(1e-12));
    REQUIRE(a.points[i].recall_gain == Catch::Approx(b.points[i].recall_gain).margin(1e-12));
  }
  REQUIRE(a.auc == Catch::Approx(b.auc).margin(1e-12));
}

TEST_CASE("prg rejects degenerate truth") {
  Tensor scores({2, 2}, {1, 2, 3, 4});
  REQUIRE_THROWS_AS(prg_curve(scores, Tensor::zeros({2, 2}), 0.5), std::invalid_argument);
  REQUIRE_THROWS_AS(prg_curve(scores, Tensor::full({2, 2}, 1.0), 0.5), std::invalid_argument);
  Tensor bad({2, 2}, {1, 0, 0.5, 1});
  REQUIRE_THROWS_AS(prg_curve(scores, bad, 0.5), std::invalid_argument);
}

TEST_CASE("nmf separates orthogonal blocks exactly") {
  // block-diagonal H: first 3 columns live on rows 0-1, last 3 on rows 2-3
  Tensor h = Tensor::zeros({4, 6});
  Rng rng(12);
  for (int j = 0; j < 3; ++j) {
    h.at(0, j) = rng.uniform(0.5, 1.0);
    h.at(1, j) = rng.uniform(0.5, 1.0);
    h.at(2, j + 3) = rng.uniform(0.5, 1.0);
    h.at(3, j + 3) = rng.uniform(0.5, 1.0);
  }
  NmfResult res = nmf_ha(h, 2, 500, 3);
  const std::vector<int> truth = {0, 0, 0, 1, 1, 1};
  REQUIRE(accuracy_with_matching(res.labels, truth).accuracy == 1.0);
}

TEST_CASE("nmf rejects a single component") {
  REQUIRE_THROWS_AS(nmf_ha(Tensor::full({2, 2}, 1.0), 1), std::invalid_argument);
}

TEST_CASE("nmf reconstruction error is non-increasing along the iterations") {
  Rng rng(13);
  Tensor h = Tensor::uniform({6, 10}, 0.0, 1.0, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (int iters : {1, 3, 6, 12, 25, 50, 100}) {
    NmfResult res = nmf_ha(h, 3, iters, 77);
    REQUIRE(res.reconstruction_error <= prev + 1e-12);
    prev = res.reconstruction_error;
  }
}

TEST_CASE("nmf is deterministic given the seed and flags zero columns") {
  Tensor h = Tensor::zeros({3, 4});
  h.at(0, 0) = 1.0;
  h.at(1, 1) = 1.0;
  h.at(2, 3) = 1.0;  // column 2 left at zero
  NmfResult a = nmf_ha(h, 2, 100, 9);
  NmfResult b = nmf_ha(h, 2, 100, 9);
  REQUIRE(a.labels == b.labels);
  REQUIRE(a.zero_columns == std::vector<int>{2});
  REQUIRE(a.labels[2] == 0);  // tie rule
}

TEST_CASE("matching accuracy is exact on identical and permuted labels") {
  const std::vector<int> truth = {0, 0, 1, 1, 2, 2};
  REQUIRE(accuracy_with_matching(truth, truth).accuracy == 1.0);
  const std::vector<int> renamed = {2, 2, 0, 0, 1, 1};
  MatchResult res = accuracy_with_matching(renamed, truth);
  REQUIRE(res.accuracy == 1.0);
  // confusion matrix is diagonal after matching
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) REQUIRE(res.confusion.at(i, j) == (i == j ? 2.0 : 0.0));
}

TEST_CASE("matching agrees with brute-force permutation search") {
  Rng rng(14);
  for (int round = 0; round < 30; ++round) {
    const int n = 40, k = 4;
    std::vector<int> pred(n), truth(n);
    for (int i = 0; i < n; ++i) {
      pred[static_cast<size_t>(i)] = static_cast<int>(rng.below(k));
      truth[static_cast<size_t>(i)] = static_cast<int>(rng.below(k));
    }
    const double got = accuracy_with_matching(pred, truth).accuracy;
    // oracle: maximize matches over all k! component relabelings
    std::vector<int> perm = {0, 1, 2, 3};
    int best = 0;
    do {
      int hits = 0;
      for (int i = 0; i < n; ++i)
        if (perm[static_cast<size_t>(pred[static_cast<size_t>(i)])] == truth[static_cast<size_t>(i)])
          ++hits;
      best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
    REQUIRE(got == Catch::Approx(static_cast<double>(best) / n).margin(1e-12));
  }
}

TEST_CASE("random predictions score above chance but remain modest after matching") {
  Rng rng(15);
  const int n = 1000, k = 10;
  std::vector<int> pred(n), truth(n);
  for (int i = 0; i < n; ++i) {
    pred[static_cast<size_t>(i)] = static_cast<int>(rng.below(k));
    truth[static_cast<size_t>(i)] = i % k;
  }
  const double acc = accuracy_with_matching(pred, truth).accuracy;
  REQUIRE(acc >= 1.0 / k);  // matching can only improve on chance
  REQUIRE(acc <= 0.25);
}

TEST_CASE("one-hot receptive fields are maximally sparse and perfectly local") {
  const int n = 5;
  Tensor g = Tensor::identity(n);  // cell i fires on point i only
  Rng rng(16);
  Tensor coords = Tensor::gaussian({n, 2}, 1.0, rng);
  RfMetrics m = rf_metrics(g, coords, 1e-3);
  for (int c = 0; c < n; ++c) {
    REQUIRE(m.sparsity[static_cast<size_t>(c)] == Catch::Approx((n - 1.0) / n).margin(1e-12));
    REQUIRE(m.locality[static_cast<size_t>(c)] == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("uniform receptive fields have locality one") {
  const int n = 8;
  Tensor g = Tensor::full({3, n}, 0.5);
  Rng rng(17);
  Tensor coords = Tensor::gaussian({n, 2}, 1.0, rng);
  RfMetrics m = rf_metrics(g, coords, 1e-3);
  for (int c = 0; c < 3; ++c) {
    REQUIRE(m.locality[static_cast<size_t>(c)] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(m.sparsity[static_cast<size_t>(c)] == 0.0);
  }
}

TEST_CASE("cells with no response mass are flagged undefined") {
  Tensor g = Tensor::zeros({2, 4});
  g.at(0, 1) = 1.0;
  Rng rng(18);
  Tensor coords = Tensor::gaussian({4, 2}, 1.0, rng);
  RfMetrics m = rf_metrics(g, coords, 1e-3);
  REQUIRE(m.defined[0] == 1);
  REQUIRE(m.defined[1] == 0);
  REQUIRE(std::isnan(m.locality[1]));
}
