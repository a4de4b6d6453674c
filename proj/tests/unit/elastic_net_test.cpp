#include <gtest/gtest.h>

#include <cmath>

#include "pehl/elastic_net.hpp"
#include "pehl/error.hpp"
#include "pehl/metrics.hpp"
#include "sparse_problems.hpp"
#include "test_support.hpp"

using namespace pehl;

namespace {

using pehl::testing::random_problem;

std::vector<double> scores_of(const SparseDataset& data, const LinearModel& m) {
  std::vector<double> s;
  for (const auto& x : data.rows) s.push_back(predict_score(m, x));
  return s;
}

std::vector<int> zero_one(const SparseDataset& data) {
  std::vector<int> y;
  for (int v : data.labels) y.push_back(v > 0 ? 1 : 0);
  return y;
}

}  // namespace

TEST(ElasticNet, ZeroModelObjective) {
  Rng rng(1);
  const auto data = random_problem(rng, 37, 10, 0.3);
  LinearModel m;
  m.w.assign(10, 0.0);
  m.C = 2.5;
  EXPECT_NEAR(elastic_net_objective(data, m), 2.5 * 37 * std::log(2.0), 1e-12);
}

TEST(ElasticNet, OneSampleThresholdAgreesWithGridSearch) {
  SparseDataset data;
  data.dim = 1;
  data.rows.push_back({{0}, 1});
  data.labels.push_back(1);
  ElasticNetOptions opt;
  opt.fit_intercept = false;
  opt.tolerance = 1e-10;
  for (double C : {0.25, 0.5, 1.0, 1.2, 2.0, 5.0}) {
    SCOPED_TRACE(C);
    const LinearModel m = train_elastic_net(data, C, nullptr, opt);
    double best_w = 0.0;
    double best_f = INFINITY;
    for (int k = -20000; k <= 20000; ++k) {
      const double w = k * 1e-4;
      const double f = 0.5 * std::abs(w) + 0.25 * w * w + C * std::log1p(std::exp(-w));
      if (f < best_f) {
        best_f = f;
        best_w = w;
      }
    }
    EXPECT_NEAR(m.w[0], best_w, 2e-4);
    if (C <= 1.0) EXPECT_EQ(m.w[0], 0.0);
    if (C > 1.0) EXPECT_GT(m.w[0], 0.0);
  }
}

TEST(ElasticNet, SeparableDataFitsPerfectly) {
  // y = +1 iff feature 0 is present; feature 1 is noise.
  SparseDataset data;
  data.dim = 2;
  Rng rng(2);
  for (int i = 0; i < 60; ++i) {
    SparseBinaryVector x{{}, 2};
    const bool pos = i % 2 == 0;
    if (pos) x.active.push_back(0);
    if (uniform01(rng) < 0.5) x.active.push_back(1);
    data.rows.push_back(x);
    data.labels.push_back(pos ? 1 : -1);
  }
  const LinearModel m = train_elastic_net(data, 100.0);
  const auto s = scores_of(data, m);
  const auto y = zero_one(data);
  double best = 0.0;
  for (double t : s) best = std::max(best, balanced_accuracy(s, y, t));
  EXPECT_EQ(best, 1.0);
  EXPECT_EQ(balanced_accuracy(s, y), 1.0);
}

TEST(ElasticNet, KktAndMonotoneObjectiveOnRandomProblems) {
  for (int trial = 0; trial < 20; ++trial) {
    SCOPED_TRACE(trial);
    Rng rng(100 + static_cast<std::uint64_t>(trial));
    const auto data = random_problem(rng, 40 + 7 * static_cast<std::size_t>(trial), 25, 0.25);
    const double C = 0.05 * std::pow(2.0, trial % 8);
    FitDiagnostics diag;
    const LinearModel m = train_elastic_net(data, C, nullptr, {}, &diag);
    ASSERT_TRUE(diag.converged);
    EXPECT_LE(kkt_residual(data, m), 1e-4);
    for (std::size_t k = 1; k < diag.objective_trace.size(); ++k) {
      EXPECT_LE(diag.objective_trace[k], diag.objective_trace[k - 1]);
    }
  }
}

TEST(ElasticNet, SmallCGivesEmptyModels) {
  Rng rng(3);
  const auto data = random_problem(rng, 80, 12, 0.3);
  // Gradient of the log-loss at w = 0 with the intercept at its optimum.
  double pos = 0;
  for (int y : data.labels) pos += y > 0;
  const double b = std::log(pos / (static_cast<double>(data.size()) - pos));
  double gmax = 0.0;
  std::vector<double> g(data.dim, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double y = data.labels[i];
    const double r = -y / (1.0 + std::exp(y * b));
    for (auto j : data.rows[i].active) g[j] += r;
  }
  for (double v : g) gmax = std::max(gmax, std::abs(v));
  const double c_min = 0.5 / gmax;
  const std::vector<double> grid{c_min * 0.1, c_min * 0.5, c_min * 0.99};
  const auto path = regularization_path(data, grid);
  for (const auto& step : path.steps) EXPECT_EQ(step.nnz, 0u);
  const std::vector<double> above{c_min * 1.5};
  EXPECT_GT(regularization_path(data, above).steps[0].nnz, 0u);
}

TEST(ElasticNet, WarmPathMatchesColdStarts) {
  Rng rng(4);
  const auto data = random_problem(rng, 150, 30, 0.2);
  const auto grid = log_spaced_grid(0.01, 10.0, 10);
  ElasticNetOptions opt;
  opt.tolerance = 1e-9;
  const auto path = regularization_path(data, grid, 0, 0, opt);
  ASSERT_EQ(path.steps.size(), 10u);
  for (const auto& step : path.steps) {
    const LinearModel cold = train_elastic_net(data, step.C, nullptr, opt);
    EXPECT_EQ(step.nnz, cold.nnz());
    for (std::size_t j = 0; j < cold.w.size(); ++j) EXPECT_NEAR(step.model.w[j], cold.w[j], 1e-6);
    EXPECT_NEAR(step.model.intercept, cold.intercept, 1e-6);
  }
}

TEST(ElasticNet, PathRecordsCrossValidation) {
  Rng rng(5);
  const auto data = random_problem(rng, 120, 15, 0.3);
  const std::vector<double> grid{0.1, 1.0};
  const auto path = regularization_path(data, grid, 3, 9);
  for (const auto& step : path.steps) {
    ASSERT_TRUE(step.cv_balanced_accuracy.has_value());
    EXPECT_GE(*step.cv_balanced_accuracy, 0.0);
    EXPECT_LE(*step.cv_balanced_accuracy, 1.0);
  }
  std::ostringstream os;
  path.write_csv(os);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "C,nnz,train_balacc,cv_balacc");
}

TEST(ElasticNet, PredictScore) {
  LinearModel zero;
  zero.w.assign(4, 0.0);
  EXPECT_EQ(predict_score(zero, {{0, 2}, 4}), 0.5);
  LinearModel m;
  m.w = {std::log(3.0) - 0.25, 7.0};
  m.intercept = 0.25;
  EXPECT_NEAR(predict_score(m, {{0}, 2}), 0.75, 1e-15);
  EXPECT_THROW(predict_score(m, {{0}, 3}), DataError);

  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    LinearModel r;
    r.w.resize(8);
    for (double& w : r.w) w = 6.0 * uniform01(rng) - 3.0;
    r.intercept = 2.0 * uniform01(rng) - 1.0;
    SparseBinaryVector x{{}, 8};
    long double z = r.intercept;
    for (std::uint32_t j = 0; j < 8; ++j) {
      if (uniform01(rng) < 0.5) {
        x.active.push_back(j);
        z += r.w[j];
      }
    }
    const long double expected = 1.0L / (1.0L + std::exp(-z));
    EXPECT_NEAR(predict_score(r, x), static_cast<double>(expected), 1e-12);
  }
}

TEST(ElasticNet, Errors) {
  SparseDataset one_class;
  one_class.dim = 1;
  one_class.rows = {{{0}, 1}, {{}, 1}};
  one_class.labels = {1, 1};
  EXPECT_THROW(train_elastic_net(one_class, 1.0), DataError);
  Rng rng(7);
  const auto data = random_problem(rng, 20, 4, 0.5);
  EXPECT_THROW(train_elastic_net(data, 0.0), DataError);
}
