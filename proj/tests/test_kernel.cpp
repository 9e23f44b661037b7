#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "neustrom/kernel.hpp"

#include "helpers.hpp"

using namespace neustrom;

TEST_CASE("rbf kernel is 1 at zero distance") {
  KernelSpec spec{KernelKind::kRbf, 30.0};
  const std::vector<double> x = {0.3, -1.2, 4.0};
  REQUIRE(kernel_eval(spec, x, x) == 1.0);
}

TEST_CASE("rbf kernel at gamma 30 and squared distance 0.1") {
  KernelSpec spec{KernelKind::kRbf, 30.0};
  const std::vector<double> x = {0.0};
  const std::vector<double> y = {std::sqrt(0.1)};
  REQUIRE(kernel_eval(spec, x, y) == Catch::Approx(std::exp(-3.0)).epsilon(1e-12));
}

TEST_CASE("exp-dot kernel is 1 for orthogonal inputs") {
  KernelSpec spec{KernelKind::kExpDot, 1.0};
  const std::vector<double> x = {1.0, 0.0};
  const std::vector<double> y = {0.0, 2.5};
  REQUIRE(kernel_eval(spec, x, y) == 1.0);
  REQUIRE(kernel_self(spec, x) == Catch::Approx(std::exp(1.0)));
}

TEST_CASE("kernel_eval rejects dimension mismatches") {
  KernelSpec spec;
  const std::vector<double> x = {1.0, 2.0};
  const std::vector<double> y = {1.0};
  REQUIRE_THROWS_AS(kernel_eval(spec, x, y), std::invalid_argument);
}

TEST_CASE("rff banks are reproducible from the seed") {
  RffBank a = rff_sample(3, 64, 2.0, 42);
  RffBank b = rff_sample(3, 64, 2.0, 42);
  RffBank c = rff_sample(3, 64, 2.0, 43);
  REQUIRE(a.base_freqs == b.base_freqs);
  REQUIRE(a.base_freqs != c.base_freqs);
}

TEST_CASE("rff frequency statistics match the sampling distribution") {
  const int d = 3, D = 2000;
  const double gamma = 1.7;
  RffBank bank = rff_sample(d, D, gamma, 7);
  // frequencies are sqrt(gamma) * base; check base statistics and scale
  double mean = 0.0;
  for (double f : bank.base_freqs) mean += f;
  mean /= static_cast<double>(bank.base_freqs.size());
  REQUIRE(std::abs(mean) <= 3.0 / std::sqrt(static_cast<double>(d) * D));
  // per-coordinate variance of the scaled frequencies approaches 2*gamma,
  // the spectral measure of exp(-gamma d^2)
  for (int coord = 0; coord < d; ++coord) {
    double var = 0.0;
    for (int l = 0; l < D; ++l) {
      const double w =
          std::sqrt(2.0 * gamma) * bank.base_freqs[static_cast<size_t>(l) * d + coord];
      var += w * w;
    }
    var /= D;
    REQUIRE(var == Catch::Approx(2.0 * gamma).epsilon(0.10));
  }
}

TEST_CASE("rff features always have unit norm") {
  Rng rng(11);
  RffBank bank = rff_sample(4, 128, 0.8, 3);
  for (int round = 0; round < 20; ++round) {
    const Tensor x = Tensor::gaussian({4}, 2.0, rng);
    const std::vector<double> phi = rff_map(bank, x.values());
    REQUIRE(static_cast<int>(phi.size()) == 2 * 128);
    double nsq = 0.0;
    for (double v : phi) nsq += v * v;
    REQUIRE(nsq == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("rff inner products converge to the exact rbf kernel") {
  const double gamma = 1.0;
  const int d = 3;
  Rng rng(2024);
  std::vector<std::vector<double>> xs, ys;
  for (int p = 0; p < 100; ++p) {
    std::vector<double> x(d), y(d);
    for (int i = 0; i < d; ++i) {
      x[static_cast<size_t>(i)] = rng.gaussian() * 0.5;
      y[static_cast<size_t>(i)] = rng.gaussian() * 0.5;
    }
    xs.push_back(x);
    ys.push_back(y);
  }
  KernelSpec exact{KernelKind::kRbf, gamma};
  auto mean_error = [&](int D) {
    RffBank bank = rff_sample(d, D, gamma, 555);
    double err = 0.0;
    for (int p = 0; p < 100; ++p) {
      const std::vector<double> px = rff_map(bank, xs[static_cast<size_t>(p)]);
      const std::vector<double> py = rff_map(bank, ys[static_cast<size_t>(p)]);
      double dot = 0.0;
      for (size_t i = 0; i < px.size(); ++i) dot += px[i] * py[i];
      err += std::abs(dot - kernel_eval(exact, xs[static_cast<size_t>(p)], ys[static_cast<size_t>(p)]));
    }
    return err / 100.0;
  };
  const double err_small = mean_error(200);
  const double err_big = mean_error(2000);
  REQUIRE(err_big <= 0.05);
  REQUIRE(err_big < err_small);
}

TEST_CASE("rff_map rejects dimension mismatches") {
  RffBank bank = rff_sample(3, 8, 1.0, 1);
  const std::vector<double> x = {1.0, 2.0};
  REQUIRE_THROWS_AS(rff_map(bank, x), std::invalid_argument);
}
