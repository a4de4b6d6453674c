#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "pehl/nn/layers.hpp"

namespace pehl::nn {

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates drawn uniformly without replacement across all params;
  // 0 checks every coordinate.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
  double denominator_floor = 1e-6;
  // Fourth-order stencil f(x±h), f(x±2h) instead of the second-order one.
  bool five_point = false;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
};

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Compares the gradients written by `analytic` (which must zero and then fill
/// every Param::grad) against central differences of `loss`. Inputs to be
/// checked are passed as Params alongside the weights. `loss` must be a
/// deterministic function of the param values.
GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::function<void()>& analytic, const ParamList& params,
                           const GradCheckOptions& options = {});

}  // namespace pehl::nn
