#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "neustrom/linalg.hpp"

#include "helpers.hpp"

using namespace neustrom;

TEST_CASE("jacobi solves a known 2x2 system") {
  Tensor a({2, 2}, {2, 1, 1, 2});
  EigResult eig = jacobi_eigh(a);
  REQUIRE(eig.eigenvalues[0] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(eig.eigenvalues[1] == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("jacobi reconstructs random symmetric matrices") {
  Rng rng(3);
  const int n = 12;
  Tensor a = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double v = rng.uniform(-1, 1);
      a.at(i, j) = v;
      a.at(j, i) = v;
    }
  EigResult eig = jacobi_eigh(a);
  // A v_k = lambda_k v_k and orthonormal columns
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      double av = 0.0;
      for (int j = 0; j < n; ++j) av += a.at(i, j) * eig.eigenvectors.at(j, k);
      REQUIRE(av == Catch::Approx(eig.eigenvalues[k] * eig.eigenvectors.at(i, k)).margin(1e-10));
    }
    for (int l = k; l < n; ++l) {
      double d = 0.0;
      for (int i = 0; i < n; ++i) d += eig.eigenvectors.at(i, k) * eig.eigenvectors.at(i, l);
      REQUIRE(d == Catch::Approx(k == l ? 1.0 : 0.0).margin(1e-10));
    }
  }
}

TEST_CASE("inverse square root squares to the inverse") {
  Rng rng(17);
  const int n = 6;
  // SPD matrix X X^T + I
  Tensor x = Tensor::gaussian({n, n}, 1.0, rng);
  Tensor a = Tensor::identity(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += x.at(i, k) * x.at(j, k);
      a.at(i, j) += acc;
    }
  Tensor b = inverse_sqrt_psd(a, 0.0);
  // b * a * b should be the identity
  Tensor ab = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += a.at(i, k) * b.at(k, j);
      ab.at(i, j) = acc;
    }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += b.at(i, k) * ab.at(k, j);
      REQUIRE(acc == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-9));
    }
}

TEST_CASE("inverse square root reports indefinite inputs with a condition diagnostic") {
  Tensor a({2, 2}, {1, 0, 0, -1});
  try {
    inverse_sqrt_psd(a, 0.0);
    FAIL("expected rejection");
  } catch (const std::runtime_error& e) {
    REQUIRE(std::string(e.what()).find("condition") != std::string::npos);
  }
}

TEST_CASE("singular values match the Frobenius norm and known diagonals") {
  Tensor a({2, 3}, {3, 0, 0, 0, 2, 0});
  auto sv = singular_values(a);
  REQUIRE(sv.size() == 2);
  REQUIRE(sv[0] == Catch::Approx(3.0).margin(1e-10));
  REQUIRE(sv[1] == Catch::Approx(2.0).margin(1e-10));

  Rng rng(9);
  Tensor b = Tensor::gaussian({4, 7}, 1.0, rng);
  auto sb = singular_values(b);
  double sum_sq = 0.0;
  for (double s : sb) sum_sq += s * s;
  double frob = 0.0;
  for (int64_t i = 0; i < b.size(); ++i) frob += b[i] * b[i];
  REQUIRE(sum_sq == Catch::Approx(frob).epsilon(1e-10));
}
