#include "pehl/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace pehl::nn {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::function<void()>& analytic, const ParamList& params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  analytic();
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  std::size_t total = 0;
  for (const Param* p : params) {
    grads.push_back(p->grad);
    total += static_cast<std::size_t>(p->value.size());
  }

  std::vector<std::size_t> coords(total);
  std::iota(coords.begin(), coords.end(), 0);
  if (options.max_coordinates > 0 && options.max_coordinates < total) {
    Rng rng(derive_seed(options.seed, 0x67726164));
    // Partial Fisher-Yates: the first k entries are a uniform sample.
    for (std::size_t i = 0; i < options.max_coordinates; ++i) {
      std::swap(coords[i], coords[i + uniform_index(rng, total - i)]);
    }
    coords.resize(options.max_coordinates);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  std::size_t param_idx = 0;
  std::size_t base = 0;
  for (std::size_t c : coords) {
    while (c >= base + static_cast<std::size_t>(params[param_idx]->value.size())) {
      base += static_cast<std::size_t>(params[param_idx]->value.size());
      ++param_idx;
    }
    Param& p = *params[param_idx];
    const auto k = static_cast<Eigen::Index>(c - base);
    double& v = p.value.data()[k];
    const double saved = v;
    auto at = [&](double offset) {
      v = saved + offset;
      const double f = loss();
      v = saved;
      return f;
    };
    const double h = options.step;
    const double numeric = options.five_point
                               ? (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h)
                               : (at(h) - at(-h)) / (2.0 * h);
    const double a = grads[param_idx].data()[k];
    const double rel = relative_error(a, numeric, options.denominator_floor);
    report.max_abs_error = std::max(report.max_abs_error, std::abs(a - numeric));
    if (rel > report.max_relative_error || report.checked == 0) {
      report.max_relative_error = std::max(report.max_relative_error, rel);
      report.worst_param = p.name;
      report.worst_index = k;
    }
    ++report.checked;
  }
  return report;
}

}  // namespace pehl::nn
