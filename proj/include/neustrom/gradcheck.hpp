#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "neustrom/optim.hpp"
#include "neustrom/tensor.hpp"

namespace neustrom {

/// Central-difference gradient checking. The oracle re-evaluates the forward
/// function at perturbed parameter values and never touches the backward
/// pass, so it stays independent of the code it is checking.

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  bool pass(double tol) const { return max_rel_err <= tol; }
};

/// Relative error with a floor so near-zero gradient pairs compare absolutely.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Central difference d(eval)/d(param[idx]) at step h. Restores the entry.
inline double central_difference(Tensor& param, int64_t idx, double h,
                                 const std::function<double()>& eval) {
  const double saved = param[idx];
  param[idx] = saved + h;
  const double fp = eval();
  param[idx] = saved - h;
  const double fm = eval();
  param[idx] = saved;
  return (fp - fm) / (2.0 * h);
}

/// Compare analytic gradients against central differences for every entry of
/// every listed parameter. `eval` must recompute the loss from the current
/// parameter values on each call.
inline GradCheckReport check_gradients(const ParamRefs& params,
                                       const std::map<std::string, Tensor>& analytic,
                                       const std::function<double()>& eval, double h = 1e-5,
                                       double floor = 1e-6) {
  GradCheckReport report;
  for (const auto& [name, tensor] : params) {
    auto it = analytic.find(name);
    if (it == analytic.end())
      throw std::invalid_argument("check_gradients: no analytic gradient for '" + name + "'");
    for (int64_t i = 0; i < tensor->size(); ++i) {
      const double num = central_difference(*tensor, i, h, eval);
      const double err = relative_error(it->second[i], num, floor);
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace neustrom
