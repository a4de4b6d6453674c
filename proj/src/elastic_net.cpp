#include "pehl/elastic_net.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <string>

#include "pehl/error.hpp"
#include "pehl/metrics.hpp"
#include "pehl/rng.hpp"

namespace pehl {

namespace {

constexpr double kL1 = 0.5;
constexpr double kL2 = 0.25;  // gradient of the L2 term is 2 * kL2 * w
constexpr double kArmijo = 0.01;
constexpr double kBacktrack = 0.5;
constexpr int kMaxLineSearch = 60;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(-z)) without overflow.
double log1pexp_neg(double z) {
  return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double sign(double v) { return (v > 0) - (v < 0); }

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

struct ColumnIndex {
  std::vector<std::size_t> offsets;  // dim + 1
  std::vector<std::uint32_t> rows;
};

ColumnIndex build_columns(const SparseDataset& data) {
  ColumnIndex idx;
  idx.offsets.assign(data.dim + 1, 0);
  for (const auto& r : data.rows) {
    for (auto j : r.active) ++idx.offsets[j + 1];
  }
  std::partial_sum(idx.offsets.begin(), idx.offsets.end(), idx.offsets.begin());
  idx.rows.resize(idx.offsets.back());
  std::vector<std::size_t> cursor(idx.offsets.begin(), idx.offsets.end() - 1);
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    for (auto j : data.rows[i].active) idx.rows[cursor[j]++] = static_cast<std::uint32_t>(i);
  }
  return idx;
}

void check_dataset(const SparseDataset& data) {
  if (data.rows.size() != data.labels.size()) {
    throw DataError("elastic net: row and label counts differ");
  }
  for (const auto& r : data.rows) {
    if (r.dim != data.dim) throw DataError("elastic net: row dimension mismatch");
  }
  for (int y : data.labels) {
    if (y != 1 && y != -1) throw DataError("elastic net: labels must be -1 or +1");
  }
}

std::vector<double> margins(const SparseDataset& data, const LinearModel& m) {
  std::vector<double> out(data.size(), m.intercept);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (auto j : data.rows[i].active) out[i] += m.w[j];
  }
  return out;
}

double penalty(std::span<const double> w) {
  double l1 = 0.0;
  double l2 = 0.0;
  for (double v : w) {
    l1 += std::abs(v);
    l2 += v * v;
  }
  return kL1 * l1 + kL2 * l2;
}

double loss_from_margins(const SparseDataset& data, std::span<const double> m) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) s += log1pexp_neg(data.labels[i] * m[i]);
  return s;
}

// Gradient of the log-loss sum with respect to each margin.
std::vector<double> margin_gradient(const SparseDataset& data, std::span<const double> m) {
  std::vector<double> r(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double y = data.labels[i];
    r[i] = -y * sigmoid(-y * m[i]);
  }
  return r;
}

double residual_from_gradient(const LinearModel& model, std::span<const double> grad_w,
                              double grad_b, bool fit_intercept) {
  double worst = fit_intercept ? std::abs(model.C * grad_b) : 0.0;
  for (std::size_t j = 0; j < model.w.size(); ++j) {
    const double cg = model.C * grad_w[j];
    const double wj = model.w[j];
    const double r = wj == 0.0 ? std::max(0.0, std::abs(cg) - kL1)
                               : std::abs(cg + kL1 * sign(wj) + 2 * kL2 * wj);
    worst = std::max(worst, r);
  }
  return worst;
}

}  // namespace

SparseDataset SparseDataset::subset(std::span<const std::size_t> idx) const {
  SparseDataset out;
  out.dim = dim;
  out.rows.reserve(idx.size());
  out.labels.reserve(idx.size());
  for (auto i : idx) {
    out.rows.push_back(rows[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::size_t LinearModel::nnz() const {
  return static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double v) { return v != 0.0; }));
}

double elastic_net_objective(const SparseDataset& data, const LinearModel& model) {
  const auto m = margins(data, model);
  return penalty(model.w) + model.C * loss_from_margins(data, m);
}

double kkt_residual(const SparseDataset& data, const LinearModel& model, bool fit_intercept) {
  const auto m = margins(data, model);
  const auto r = margin_gradient(data, m);
  std::vector<double> g(data.dim, 0.0);
  double gb = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    gb += r[i];
    for (auto j : data.rows[i].active) g[j] += r[i];
  }
  return residual_from_gradient(model, g, gb, fit_intercept);
}

LinearModel train_elastic_net(const SparseDataset& data, double C, const LinearModel* init,
                              const ElasticNetOptions& options, FitDiagnostics* diagnostics) {
  if (!(C > 0.0) || !std::isfinite(C)) throw DataError("elastic net: C must be positive");
  check_dataset(data);
  if (data.size() == 0) throw DataError("elastic net: empty training set");
  const bool has_pos = std::count(data.labels.begin(), data.labels.end(), 1) > 0;
  const bool has_neg = std::count(data.labels.begin(), data.labels.end(), -1) > 0;
  if (options.fit_intercept && !(has_pos && has_neg)) {
    throw DataError("elastic net: training data must contain both classes");
  }

  LinearModel model;
  model.C = C;
  if (init != nullptr) {
    if (init->w.size() != data.dim) throw DataError("elastic net: warm start dimension mismatch");
    model.w = init->w;
    model.intercept = options.fit_intercept ? init->intercept : 0.0;
  } else {
    model.w.assign(data.dim, 0.0);
  }

  const ColumnIndex cols = build_columns(data);
  const std::size_t n = data.size();
  const std::size_t dim = data.dim;

  FitDiagnostics diag;
  std::vector<double> m = margins(data, model);
  double objective = penalty(model.w) + C * loss_from_margins(data, m);
  if (!std::isfinite(objective)) throw DivergenceError("elastic net: non-finite objective");

  std::vector<double> grad(dim);
  std::vector<double> hdiag(dim);
  std::vector<double> d(dim);
  std::vector<double> q(n);
  std::vector<double> D(n);
  std::vector<double> trial(n);

  for (int outer = 0;; ++outer) {
    diag.objective_trace.push_back(objective);

    const auto r = margin_gradient(data, m);
    double grad_b = 0.0;
    double hess_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(m[i]);
      D[i] = std::max(p * (1.0 - p), 1e-12);
      grad_b += r[i];
      hess_b += D[i];
    }
    for (std::size_t j = 0; j < dim; ++j) {
      double g = 0.0;
      double h = 0.0;
      for (std::size_t k = cols.offsets[j]; k < cols.offsets[j + 1]; ++k) {
        const auto i = cols.rows[k];
        g += r[i];
        h += D[i];
      }
      grad[j] = g;
      hdiag[j] = h;
    }

    diag.kkt_residual = residual_from_gradient(model, grad, grad_b, options.fit_intercept);
    diag.outer_iterations = outer;
    if (diag.kkt_residual <= options.tolerance) {
      diag.converged = true;
      break;
    }
    if (outer >= options.max_outer_iterations) break;

    // Coordinate descent on the quadratic model. q tracks X d (+ d_b).
    std::fill(d.begin(), d.end(), 0.0);
    std::fill(q.begin(), q.end(), 0.0);
    double d_b = 0.0;
    const double inner_tol = 0.1 * diag.kkt_residual;
    for (int pass = 0; pass < options.max_inner_passes; ++pass) {
      double max_step = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const std::size_t begin = cols.offsets[j];
        const std::size_t end = cols.offsets[j + 1];
        if (begin == end && model.w[j] == 0.0 && d[j] == 0.0) continue;
        double dq = 0.0;
        for (std::size_t k = begin; k < end; ++k) dq += D[cols.rows[k]] * q[cols.rows[k]];
        const double ch = C * hdiag[j];
        const double u = model.w[j] + d[j];
        const double z = ch * u - C * (grad[j] + dq);
        const double a = ch + 2 * kL2;
        const double next = soft_threshold(z, kL1) / a;
        const double step = next - u;
        if (step != 0.0) {
          d[j] += step;
          for (std::size_t k = begin; k < end; ++k) q[cols.rows[k]] += step;
          max_step = std::max(max_step, std::abs(step) * a);
        }
      }
      if (options.fit_intercept) {
        double dq = 0.0;
        for (std::size_t i = 0; i < n; ++i) dq += D[i] * q[i];
        const double step = -(grad_b + dq) / hess_b;
        if (step != 0.0) {
          d_b += step;
          for (auto& v : q) v += step;
          max_step = std::max(max_step, std::abs(step) * C * hess_b);
        }
      }
      if (max_step <= inner_tol) break;
    }

    // Predicted decrease of the first-order model plus the exact penalty change.
    double delta = C * grad_b * d_b;
    double pen_new = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      delta += C * grad[j] * d[j];
      const double nw = model.w[j] + d[j];
      pen_new += kL1 * std::abs(nw) + kL2 * nw * nw;
    }
    const double pen_old = penalty(model.w);
    delta += pen_new - pen_old;
    if (!(delta < 0.0)) {
      // No descent direction left at working precision.
      break;
    }

    double t = 1.0;
    bool accepted = false;
    std::vector<double> w_trial(dim);
    double f_trial = objective;
    for (int ls = 0; ls < kMaxLineSearch; ++ls) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = m[i] + t * q[i];
      for (std::size_t j = 0; j < dim; ++j) w_trial[j] = model.w[j] + t * d[j];
      f_trial = penalty(w_trial) + C * loss_from_margins(data, trial);
      if (!std::isfinite(f_trial)) throw DivergenceError("elastic net: non-finite objective");
      if (f_trial - objective <= kArmijo * t * delta) {
        accepted = true;
        break;
      }
      t *= kBacktrack;
    }
    if (!accepted) break;

    model.w.swap(w_trial);
    model.intercept += t * d_b;
    m.swap(trial);
    objective = f_trial;
  }

  if (diagnostics != nullptr) *diagnostics = std::move(diag);
  return model;
}

RegularizationPath regularization_path(const SparseDataset& data, std::span<const double> c_grid,
                                       int folds, std::uint64_t seed,
                                       const ElasticNetOptions& options) {
  if (c_grid.empty()) throw DataError("regularization path: empty C grid");
  for (std::size_t k = 1; k < c_grid.size(); ++k) {
    if (!(c_grid[k] > c_grid[k - 1])) {
      throw DataError("regularization path: C grid must be strictly increasing");
    }
  }
  if (folds == 1 || folds < 0) throw DataError("regularization path: folds must be 0 or >= 2");

  auto to01 = [](const SparseDataset& ds) {
    std::vector<int> y(ds.labels.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = ds.labels[i] > 0 ? 1 : 0;
    return y;
  };
  auto scores_of = [](const SparseDataset& ds, const LinearModel& m) {
    std::vector<double> s(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) s[i] = predict_score(m, ds.rows[i]);
    return s;
  };

  RegularizationPath path;
  const auto y_all = to01(data);
  const LinearModel* prev = nullptr;
  for (double C : c_grid) {
    PathStep step;
    step.C = C;
    step.model = train_elastic_net(data, C, prev, options, &step.diagnostics);
    step.nnz = step.model.nnz();
    step.train_balanced_accuracy = balanced_accuracy(scores_of(data, step.model), y_all);
    path.steps.push_back(std::move(step));
    prev = &path.steps.back().model;
  }

  if (folds >= 2) {
    // Stratified assignment: shuffle each class, deal round-robin.
    Rng rng(derive_seed(seed, 0xC5));
    std::vector<int> fold_of(data.size());
    for (int cls : {-1, 1}) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.labels[i] == cls) members.push_back(i);
      }
      for (std::size_t k = members.size(); k > 1; --k) {
        std::swap(members[k - 1], members[uniform_index(rng, k)]);
      }
      for (std::size_t k = 0; k < members.size(); ++k) {
        fold_of[members[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
      }
    }
    std::vector<double> sum(c_grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
      std::vector<std::size_t> tr;
      std::vector<std::size_t> te;
      for (std::size_t i = 0; i < data.size(); ++i) (fold_of[i] == f ? te : tr).push_back(i);
      const SparseDataset train = data.subset(tr);
      const SparseDataset test = data.subset(te);
      const auto y_test = to01(test);
      // C weighs a summed loss; rescaling keeps the per-sample penalty of
      // each fold equal to that of the full fit the estimate stands for.
      const double scale = static_cast<double>(data.size()) / static_cast<double>(train.size());
      LinearModel warm;
      const LinearModel* init = nullptr;
      for (std::size_t k = 0; k < c_grid.size(); ++k) {
        warm = train_elastic_net(train, c_grid[k] * scale, init, options);
        init = &warm;
        sum[k] += balanced_accuracy(scores_of(test, warm), y_test);
      }
    }
    for (std::size_t k = 0; k < c_grid.size(); ++k) {
      path.steps[k].cv_balanced_accuracy = sum[k] / folds;
    }
  }
  return path;
}

void RegularizationPath::write_csv(std::ostream& out) const {
  out << "C,nnz,train_balacc,cv_balacc\n";
  const auto old = out.precision(17);
  for (const auto& s : steps) {
    out << s.C << ',' << s.nnz << ',' << s.train_balanced_accuracy << ',';
    if (s.cv_balanced_accuracy) out << *s.cv_balanced_accuracy;
    out << '\n';
  }
  out.precision(old);
}

double predict_score(const LinearModel& model, const SparseBinaryVector& x) {
  if (x.dim != model.w.size()) {
    throw DataError("predict_score: input dimension " + std::to_string(x.dim) +
                    " does not match model dimension " + std::to_string(model.w.size()));
  }
  double z = model.intercept;
  for (auto j : x.active) z += model.w[j];
  return sigmoid(z);
}

std::vector<double> log_spaced_grid(double lo, double hi, int count) {
  if (!(lo > 0 && hi > lo) || count < 2) throw DataError("log_spaced_grid: invalid bounds");
  std::vector<double> out(static_cast<std::size_t>(count));
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (int k = 0; k < count; ++k) out[k] = std::exp(a + (b - a) * k / (count - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

}  // namespace pehl
