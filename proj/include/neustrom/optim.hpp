#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/tensor.hpp"

namespace neustrom {

/// Named views of trainable tensors.
using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;

struct AmsGradConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// AMSGrad: Adam with a non-decreasing elementwise maximum of the second
/// moment in the denominator. Bias correction follows the usual convention
/// (first moment corrected by 1-beta1^t, max second moment by 1-beta2^t).
class AmsGrad {
 public:
  explicit AmsGrad(AmsGradConfig cfg = {}) : cfg_(cfg) {}

  /// Update every parameter that has an entry in `grads`. A gradient keyed to
  /// no known parameter is an error.
  void step(const ParamRefs& params, const std::map<std::string, Tensor>& grads, double lr) {
    for (const auto& [name, g] : grads) {
      Tensor* p = nullptr;
      for (const auto& [pname, pt] : params)
        if (pname == name) {
          p = pt;
          break;
        }
      if (p == nullptr)
        throw std::invalid_argument("amsgrad: gradient for unknown parameter '" + name + "'");
      apply(name, *p, std::span<const double>(g.values()), lr);
    }
  }

  /// Single-parameter update against a gradient span (the training-loop path;
  /// avoids building a gradient map per step).
  void apply(const std::string& name, Tensor& value, std::span<const double> grad, double lr) {
    if (static_cast<int64_t>(grad.size()) != value.size())
      throw std::invalid_argument("amsgrad: gradient size mismatch for parameter '" + name + "'");
    State& s = state_.try_emplace(name, value.shape()).first->second;
    s.step += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.step));
    double* m = s.m.data();
    double* v = s.v.data();
    double* vh = s.vhat.data();
    double* p = value.data();
    const int64_t n = value.size();
    for (int64_t i = 0; i < n; ++i) {
      const double g = grad[static_cast<size_t>(i)];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      if (v[i] > vh[i]) vh[i] = v[i];
      const double mhat = m[i] / bc1;
      const double denom = std::sqrt(vh[i] / bc2) + cfg_.epsilon;
      p[i] -= lr * mhat / denom;
    }
  }

  /// Max-second-moment buffer, or nullptr if the parameter was never stepped.
  const Tensor* max_second_moment(const std::string& name) const {
    auto it = state_.find(name);
    return it == state_.end() ? nullptr : &it->second.vhat;
  }

  const AmsGradConfig& config() const { return cfg_; }

 private:
  struct State {
    explicit State(const Shape& shape)
        : m(Tensor::zeros(shape)), v(Tensor::zeros(shape)), vhat(Tensor::zeros(shape)) {}
    Tensor m, v, vhat;
    int64_t step = 0;
  };
  AmsGradConfig cfg_;
  std::map<std::string, State> state_;
};

/// Reduce-on-plateau learning-rate schedule with a hard stopping rule.
/// An epoch counts as "bad" when the loss fails to beat the best seen by more
/// than `threshold`; `patience` bad epochs trigger a reduction, after which
/// the bad-epoch counter is frozen for `cooldown` epochs. Training stops when
/// the rate falls to `min_lr`.
class PlateauScheduler {
 public:
  struct Result {
    double lr;
    bool stop;
  };

  explicit PlateauScheduler(double initial_lr, int patience = 10, int cooldown = 10,
                            double threshold = 1e-5, double factor = 0.5, double min_lr = 1e-8)
      : lr_(initial_lr),
        patience_(patience),
        cooldown_(cooldown),
        threshold_(threshold),
        factor_(factor),
        min_lr_(min_lr) {}

  Result step(double epoch_loss) {
    if (!std::isfinite(epoch_loss))
      throw std::invalid_argument("scheduler: epoch loss must be finite");
    if (epoch_loss < best_ - threshold_) {
      best_ = epoch_loss;
      num_bad_ = 0;
    } else if (cooldown_left_ > 0) {
      --cooldown_left_;
    } else {
      ++num_bad_;
      if (num_bad_ >= patience_) {
        lr_ = std::max(lr_ * factor_, min_lr_);
        num_bad_ = 0;
        cooldown_left_ = cooldown_;
      }
    }
    return {lr_, lr_ <= min_lr_};
  }

  double lr() const { return lr_; }

 private:
  double lr_;
  int patience_;
  int cooldown_;
  double threshold_;
  double factor_;
  double min_lr_;
  double best_ = std::numeric_limits<double>::infinity();
  int num_bad_ = 0;
  int cooldown_left_ = 0;
};

}  // namespace neustrom
