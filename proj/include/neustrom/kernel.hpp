#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/rng.hpp"
#include "neustrom/tensor.hpp"

namespace neustrom {

enum class KernelKind { kRbf, kExpDot };

/// Positive-definite kernel choice. For rbf, gamma is the inverse squared
/// length scale: K(x,y) = exp(-gamma * |x-y|^2), so K(x,x) = 1. For exp-dot,
/// K(x,y) = exp(x.y) and the diagonal K(x,x) = exp(|x|^2) is input-dependent.
struct KernelSpec {
  KernelKind kind = KernelKind::kRbf;
  double gamma = 1.0;
};

inline double kernel_eval(const KernelSpec& spec, std::span<const double> x,
                          std::span<const double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("kernel_eval: dimension mismatch " + std::to_string(x.size()) +
                                " vs " + std::to_string(y.size()));
  double acc = 0.0;
  if (spec.kind == KernelKind::kRbf) {
    for (size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - y[i];
      acc += d * d;
    }
    return std::exp(-spec.gamma * acc);
  }
  for (size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return std::exp(acc);
}

/// K(x, x) without forming the pair.
inline double kernel_self(const KernelSpec& spec, std::span<const double> x) {
  if (spec.kind == KernelKind::kRbf) return 1.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::exp(acc);
}

/// Random Fourier feature bank for the RBF kernel. The spectral measure of
/// exp(-gamma |x-y|^2) is N(0, 2 gamma I), so frequencies are
/// omega_l = sqrt(2 gamma) * base_l with base_l ~ N(0, I) fixed at sampling
/// time; a learnable gamma rescales the fixed draw instead of changing it.
/// The feature is (1/sqrt(D)) [cos(omega.x)... , sin(omega.x)...] in R^{2D},
/// which makes phi(x).phi(y) a D-sample estimate of exp(-gamma |x-y|^2) and
/// pins |phi(x)|^2 = 1 for every x.
struct RffBank {
  int input_dim = 0;
  int half_count = 0;  // D; output dimension is 2D
  double gamma = 1.0;
  std::vector<double> base_freqs;  // D x input_dim, row-major, unit variance

  int output_dim() const { return 2 * half_count; }
};

inline RffBank rff_sample(int input_dim, int half_count, double gamma, uint64_t seed) {
  if (half_count < 1) throw std::invalid_argument("rff_sample: D must be >= 1");
  if (input_dim < 1) throw std::invalid_argument("rff_sample: input dim must be >= 1");
  RffBank bank;
  bank.input_dim = input_dim;
  bank.half_count = half_count;
  bank.gamma = gamma;
  bank.base_freqs.resize(static_cast<size_t>(half_count) * input_dim);
  Rng rng(seed);
  for (double& f : bank.base_freqs) f = rng.gaussian();
  return bank;
}

inline std::vector<double> rff_map(const RffBank& bank, std::span<const double> x) {
  if (static_cast<int>(x.size()) != bank.input_dim)
    throw std::invalid_argument("rff_map: input dim " + std::to_string(x.size()) +
                                " does not match bank dim " + std::to_string(bank.input_dim));
  const double root_gamma = std::sqrt(2.0 * bank.gamma);
  const double norm = 1.0 / std::sqrt(static_cast<double>(bank.half_count));
  std::vector<double> out(static_cast<size_t>(bank.output_dim()));
  for (int l = 0; l < bank.half_count; ++l) {
    const double* w = bank.base_freqs.data() + static_cast<size_t>(l) * bank.input_dim;
    double proj = 0.0;
    for (int i = 0; i < bank.input_dim; ++i) proj += w[i] * x[i];
    proj *= root_gamma;
    out[static_cast<size_t>(l)] = norm * std::cos(proj);
    out[static_cast<size_t>(bank.half_count + l)] = norm * std::sin(proj);
  }
  return out;
}

}  // namespace neustrom
