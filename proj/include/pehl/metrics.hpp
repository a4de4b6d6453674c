#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <variant>
#include <vector>

#include "json.hpp"

namespace pehl {

// Labels throughout this module are 0 (benign) or 1 (malicious); a sample is
// predicted malicious when its score is >= the threshold.

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

ConfusionCounts confusion_at(std::span<const double> scores, std::span<const int> labels,
                             double threshold = 0.5);

/// (TPR + TNR) / 2. With a single class present the rate of that class is
/// returned instead.
double balanced_accuracy(std::span<const double> scores, std::span<const int> labels,
                         double threshold = 0.5);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocAuc {
  std::optional<double> auc;  // absent when only one class is present
  std::vector<RocPoint> roc;
};

/// AUC as the tie-aware rank statistic (average ranks). The ROC has one point
/// per distinct score plus +inf/-inf sentinels, so it runs from (0,0) to (1,1).
RocAuc roc_auc_points(std::span<const double> scores, std::span<const int> labels);

// Trapezoidal area under a ROC polyline.
double trapezoid_area(std::span<const RocPoint> roc);

struct EvalReport {
  double balanced_accuracy = 0.0;
  bool single_class = false;
  std::optional<double> auc;
  std::vector<RocPoint> roc;
  ConfusionCounts confusion;
  double threshold = 0.5;

  nlohmann::json to_json() const;
};

EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                           double threshold = 0.5);

void write_roc_csv(std::ostream& out, std::span<const RocPoint> roc);

struct PlattCalibrator {
  double a = 1.0;
  double b = 0.0;
};

struct IsotonicCalibrator {
  std::vector<double> breakpoints;  // sorted distinct scores
  std::vector<double> values;       // nondecreasing fitted values
};

/// Output probability re-calibration: sigmoid(a*s + b) or a monotone step
/// function.
class Calibrator {
 public:
  explicit Calibrator(PlattCalibrator p) : impl_(p) {}
  explicit Calibrator(IsotonicCalibrator iso) : impl_(std::move(iso)) {}

  double apply(double score) const;
  std::vector<double> apply(std::span<const double> scores) const;

  bool is_platt() const { return std::holds_alternative<PlattCalibrator>(impl_); }
  const PlattCalibrator& platt() const { return std::get<PlattCalibrator>(impl_); }
  const IsotonicCalibrator& isotonic() const { return std::get<IsotonicCalibrator>(impl_); }

  nlohmann::json to_json() const;

 private:
  std::variant<PlattCalibrator, IsotonicCalibrator> impl_;
};

/// Platt scaling fitted directly on probability outputs by Newton's method
/// with backtracking, using Platt's smoothed targets (N+ + 1)/(N+ + 2) and
/// 1/(N- + 2). Throws DataError on fewer than 2 points or a single class.
Calibrator platt_calibrate(std::span<const double> scores, std::span<const int> labels);

/// Pool-adjacent-violators least-squares monotone fit of labels ordered by
/// score. Equal scores are pooled before fitting.
Calibrator isotonic_calibrate(std::span<const double> scores, std::span<const int> labels);

}  // namespace pehl
