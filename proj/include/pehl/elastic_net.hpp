#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "pehl/ngram.hpp"

namespace pehl {

/// Labeled binary-presence design matrix. Labels are -1 (benign) or +1
/// (malicious).
struct SparseDataset {
  std::vector<SparseBinaryVector> rows;
  std::vector<int> labels;
  std::size_t dim = 0;

  std::size_t size() const { return rows.size(); }
  SparseDataset subset(std::span<const std::size_t> idx) const;
};

struct LinearModel {
  std::vector<double> w;
  double intercept = 0.0;
  double C = 1.0;

  std::size_t nnz() const;
};

struct ElasticNetOptions {
  double tolerance = 1e-4;  // max KKT residual at convergence
  int max_outer_iterations = 500;
  int max_inner_passes = 200;
  bool fit_intercept = true;
};

struct FitDiagnostics {
  int outer_iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
  // Objective value at the start of every outer iteration plus the final one.
  std::vector<double> objective_trace;
};

// f(w) = 1/2 |w|_1 + 1/4 |w|_2^2 + C * sum_i log(1 + exp(-y_i (w.x_i + b))).
double elastic_net_objective(const SparseDataset& data, const LinearModel& model);

// Largest violation of the optimality conditions over all coordinates
// (the unpenalized intercept included when fitted).
double kkt_residual(const SparseDataset& data, const LinearModel& model,
                    bool fit_intercept = true);

/// Minimizes the elastic-net logistic objective with a GLMNET-style
/// second-order method: each outer iteration builds the quadratic model of
/// the log-loss, solves it by cyclic coordinate descent with soft
/// thresholding, then backtracks along the resulting direction until the
/// Armijo condition holds, so the recorded objective never increases.
///
/// Throws DataError when C <= 0, dims disagree, or (with an intercept) only
/// one class is present; DivergenceError on a non-finite objective.
LinearModel train_elastic_net(const SparseDataset& data, double C,
                              const LinearModel* init = nullptr,
                              const ElasticNetOptions& options = {},
                              FitDiagnostics* diagnostics = nullptr);

struct PathStep {
  double C = 0.0;
  LinearModel model;
  std::size_t nnz = 0;
  double train_balanced_accuracy = 0.0;
  std::optional<double> cv_balanced_accuracy;
  FitDiagnostics diagnostics;
};

struct RegularizationPath {
  std::vector<PathStep> steps;

  void write_csv(std::ostream& out) const;
};

/// Fits one model per C (ascending), each warm-started from the previous
/// one. folds >= 2 adds stratified k-fold balanced accuracy, itself computed
/// with a warm-started path per fold; folds == 0 disables it.
RegularizationPath regularization_path(const SparseDataset& data, std::span<const double> c_grid,
                                       int folds = 0, std::uint64_t seed = 0,
                                       const ElasticNetOptions& options = {});

// sigmoid(w.x + b); throws DataError on a dimension mismatch.
double predict_score(const LinearModel& model, const SparseBinaryVector& x);

std::vector<double> log_spaced_grid(double lo, double hi, int count);

}  // namespace pehl
