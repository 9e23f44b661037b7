#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "neustrom/gradcheck.hpp"
#include "neustrom/model.hpp"

#include "helpers.hpp"

using namespace neustrom;

namespace {

/// Small deterministic model for unit tests.
Model make_test_model(bool use_rff, bool learn_gamma, KernelKind kind, uint64_t seed,
                      int input_dim = 2, int hidden = 5, int out = 4, int r = 3, int n = 12) {
  ModelConfig cfg;
  cfg.embedding.input_dim = input_dim;
  cfg.embedding.use_rff = use_rff;
  cfg.embedding.rff_half_count = 3;
  cfg.embedding.learn_rff_gamma = learn_gamma;
  cfg.embedding.hidden_dim = hidden;
  cfg.embedding.output_dim = out;
  cfg.landmarks = r;
  cfg.kernel = {kind, kind == KernelKind::kRbf ? 1.0 : 0.0};
  Rng rng(seed);
  Tensor data = Tensor::gaussian({n, input_dim}, 1.0, rng);
  return init_model(data, cfg, seed);
}

}  // namespace

TEST_CASE("embedding with zero weights returns the zero vector") {
  EmbeddingConfig cfg;
  cfg.input_dim = 3;
  cfg.use_rff = false;
  cfg.hidden_dim = 4;
  cfg.output_dim = 2;
  Embedding e = init_embedding(cfg, 1);
  e.A1 = Tensor::zeros({4, 3});
  e.b1 = Tensor::zeros({4});
  e.A2 = Tensor::zeros({2, 4});
  e.b2 = Tensor::zeros({2});
  const std::vector<double> v = e.embed(std::vector<double>{1.0, -2.0, 3.0});
  REQUIRE(v == std::vector<double>{0.0, 0.0});
}

TEST_CASE("prelu slope 1 with zero biases makes the embedding linear") {
  EmbeddingConfig cfg;
  cfg.input_dim = 2;
  cfg.use_rff = false;
  cfg.hidden_dim = 3;
  cfg.output_dim = 2;
  Embedding e = init_embedding(cfg, 3);
  e.b1 = Tensor::zeros({3});
  e.b2 = Tensor::zeros({2});
  e.slope = Tensor::scalar(1.0);
  const std::vector<double> x = {0.4, -1.1};
  const std::vector<double> y = {-0.9, 0.3};
  std::vector<double> sum = {x[0] + y[0], x[1] + y[1]};
  const auto vx = e.embed(x);
  const auto vy = e.embed(y);
  const auto vs = e.embed(sum);
  for (int i = 0; i < 2; ++i)
    REQUIRE(vs[static_cast<size_t>(i)] ==
            Catch::Approx(vx[static_cast<size_t>(i)] + vy[static_cast<size_t>(i)]).margin(1e-12));
}

TEST_CASE("kernel layer hits 1 on a landmark and decays to 0 far away") {
  Tensor w({2, 1}, {0.0, 1.0});
  KernelSpec spec{KernelKind::kRbf, 1.0};
  auto at_landmark = kernel_layer(w, std::vector<double>{1.0}, spec);
  REQUIRE(at_landmark[1] == 1.0);
  auto far = kernel_layer(w, std::vector<double>{1e4}, spec);
  REQUIRE(far[0] == 0.0);
  REQUIRE(far[1] == 0.0);
  auto mid = kernel_layer(w, std::vector<double>{0.5}, spec);
  REQUIRE(mid[0] == Catch::Approx(std::exp(-0.25)).epsilon(1e-12));
  REQUIRE(mid[1] == Catch::Approx(std::exp(-0.25)).epsilon(1e-12));
}

TEST_CASE("nystrom reconstruction is exact on landmark pairs") {
  Rng rng(21);
  const int r = 20, d = 3;
  Tensor w = Tensor::gaussian({r, d}, 1.0, rng);
  KernelSpec spec{KernelKind::kRbf, 0.7};
  NystromBaseline baseline(w, spec, 0.0);
  std::vector<std::vector<double>> f(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i)
    f[static_cast<size_t>(i)] =
        nystrom_feature(baseline, {w.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)});
  double worst = 0.0;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) {
      double dot = 0.0;
      for (int k = 0; k < r; ++k) dot += f[static_cast<size_t>(i)][static_cast<size_t>(k)] *
                                         f[static_cast<size_t>(j)][static_cast<size_t>(k)];
      const double exact =
          kernel_eval(spec, {w.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)},
                      {w.data() + static_cast<size_t>(j) * d, static_cast<size_t>(d)});
      worst = std::max(worst, std::abs(dot - exact));
    }
  REQUIRE(worst <= 1e-8);
}

TEST_CASE("single-landmark nystrom feature reduces to the kernel value") {
  Tensor w({1, 2}, {0.3, -0.4});
  NystromBaseline baseline(w, {KernelKind::kRbf, 1.0}, 0.0);
  const std::vector<double> v = {1.0, 1.0};
  const auto f = nystrom_feature(baseline, v);
  REQUIRE(f.size() == 1);
  REQUIRE(f[0] == Catch::Approx(kernel_eval({KernelKind::kRbf, 1.0}, w.values(), v)).margin(1e-12));
}

TEST_CASE("sigma rectifies and renormalizes") {
  std::vector<double> a = {-1.0, 3.0, 4.0};
  apply_sigma(a, 1.0);
  REQUIRE(a[0] == 0.0);
  REQUIRE(a[1] == Catch::Approx(0.6).margin(1e-9));
  REQUIRE(a[2] == Catch::Approx(0.8).margin(1e-9));
}

TEST_CASE("neustrom feature on its own landmark with identity readout is the unit spike") {
  NeuralNystromHead head;
  head.W = Tensor({1, 2}, {0.5, 0.5});
  head.M = Tensor::identity(1);
  head.kernel = {KernelKind::kRbf, 1.0};
  const auto g = neustrom_feature(head, std::vector<double>{0.5, 0.5});
  REQUIRE(g.size() == 1);
  REQUIRE(g[0] == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("neustrom features are nonnegative with unit norm under the rbf kernel") {
  Model m = make_test_model(true, false, KernelKind::kRbf, 5);
  Rng rng(55);
  for (int round = 0; round < 100; ++round) {
    const Tensor x = Tensor::gaussian({2}, 1.5, rng);
    const auto g = m.features(x.values());
    double nsq = 0.0;
    for (double v : g) {
      REQUIRE(v >= 0.0);
      nsq += v * v;
    }
    REQUIRE(std::sqrt(nsq) == Catch::Approx(1.0).margin(1e-8));
  }
}

TEST_CASE("exp-dot kernels rescale the feature norm to sqrt K(v,v)") {
  Model m = make_test_model(true, false, KernelKind::kExpDot, 6);
  Rng rng(56);
  const Tensor x = Tensor::gaussian({2}, 0.5, rng);
  const std::vector<double> v = m.embedding.embed(x.values());
  const auto g = m.features(x.values());
  double nsq = 0.0;
  for (double gv : g) nsq += gv * gv;
  REQUIRE(std::sqrt(nsq) ==
          Catch::Approx(std::sqrt(kernel_self({KernelKind::kExpDot, 0.0}, v))).epsilon(1e-8));
}

TEST_CASE("kmeans recovers well-separated cluster centers") {
  Rng rng(77);
  const std::vector<std::vector<double>> centers = {{0, 0}, {10, 0}, {0, 10}};
  Tensor pts = Tensor::zeros({60, 2});
  for (int i = 0; i < 60; ++i) {
    const auto& c = centers[static_cast<size_t>(i % 3)];
    pts.at(i, 0) = c[0] + 0.1 * rng.gaussian();
    pts.at(i, 1) = c[1] + 0.1 * rng.gaussian();
  }
  Tensor cent = kmeans(pts, 3, 123);
  for (const auto& c : centers) {
    double best = 1e9;
    for (int k = 0; k < 3; ++k) {
      const double dx = cent.at(k, 0) - c[0], dy = cent.at(k, 1) - c[1];
      best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
    REQUIRE(best < 0.15);
  }
}

TEST_CASE("kmeans with r equal to n returns the points themselves") {
  Tensor pts({4, 1}, {0.0, 1.0, 5.0, 9.0});
  Tensor cent = kmeans(pts, 4, 9);
  std::vector<double> got(cent.values());
  std::sort(got.begin(), got.end());
  REQUIRE(got == std::vector<double>{0.0, 1.0, 5.0, 9.0});
}

TEST_CASE("kmeans on identical points parks every centroid there") {
  Tensor pts({5, 2}, std::vector<double>(10, 3.5));
  Tensor cent = kmeans(pts, 2, 4);
  for (int64_t i = 0; i < cent.size(); ++i) REQUIRE(cent[i] == 3.5);
}

TEST_CASE("kmeans rejects more clusters than points") {
  Tensor pts({2, 1}, {0.0, 1.0});
  REQUIRE_THROWS_AS(kmeans(pts, 3, 1), std::invalid_argument);
}

TEST_CASE("init_model sets M to the identity and is reproducible") {
  Model a = make_test_model(true, false, KernelKind::kRbf, 9, 2, 5, 4, 3, 15);
  Model b = make_test_model(true, false, KernelKind::kRbf, 9, 2, 5, 4, 3, 15);
  REQUIRE(a.head.M.same_values(Tensor::identity(3)));
  REQUIRE(a.head.W.same_values(b.head.W));
  REQUIRE(a.head.W.dim(0) == 3);
  REQUIRE(a.head.W.dim(1) == 4);
}

TEST_CASE("batched feature graph matches the host forward path") {
  Rng rng(31);
  for (bool use_rff : {false, true}) {
    for (bool learn_gamma : {false, true}) {
      if (!use_rff && learn_gamma) continue;
      for (KernelKind kind : {KernelKind::kRbf, KernelKind::kExpDot}) {
        Model m = make_test_model(use_rff, learn_gamma, kind, 40 + (use_rff ? 1 : 0));
        const int B = 7;
        Tensor x_cols = Tensor::gaussian({2, B}, 1.0, rng);
        Tape t;
        ModelBinding bind = bind_model(t, m);
        VarId g = build_feature_graph(t, m, bind, x_cols);
        auto gv = t.value(g);
        const int r = m.head.landmark_count();
        for (int b = 0; b < B; ++b) {
          std::vector<double> x = {x_cols.at(0, b), x_cols.at(1, b)};
          const auto host = m.features(x);
          for (int k = 0; k < r; ++k)
            REQUIRE(gv[static_cast<size_t>(k) * B + b] ==
                    Catch::Approx(host[static_cast<size_t>(k)]).margin(1e-12));
        }
      }
    }
  }
}

TEST_CASE("feature gradients match finite differences for all parameters") {
  // probe loss: sum(g * probe) over a 3-column batch
  for (bool use_rff : {false, true}) {
    for (bool learn_gamma : {false, true}) {
      if (!use_rff && learn_gamma) continue;
      Model m = make_test_model(use_rff, learn_gamma, KernelKind::kRbf, 60 + (learn_gamma ? 1 : 0));
      Rng rng(61);
      Tensor x_cols = Tensor::gaussian({2, 3}, 1.0, rng);
      Tensor probe = Tensor::uniform({m.head.landmark_count(), 3}, -1.0, 1.0, rng);

      auto eval = [&]() {
        Tape t;
        ModelBinding bind = bind_model(t, m);
        VarId g = build_feature_graph(t, m, bind, x_cols);
        return t.value_scalar(t.sum(t.mul(g, t.leaf(probe, false))));
      };
      Tape t;
      ModelBinding bind = bind_model(t, m);
      VarId g = build_feature_graph(t, m, bind, x_cols);
      t.backward(t.sum(t.mul(g, t.leaf(probe, false))));
      const auto analytic = t.gradients(bind.named());
      const GradCheckReport report = check_gradients(m.params(), analytic, eval);
      INFO("worst " << report.worst_param << "[" << report.worst_index << "] rel err "
                    << report.max_rel_err << " (rff=" << use_rff << " learn=" << learn_gamma << ")");
      REQUIRE(report.max_rel_err < 1e-4);
    }
  }
}
