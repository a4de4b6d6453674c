#include "pehl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pehl/error.hpp"

namespace pehl {

namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
  }
}

}  // namespace

ConfusionCounts confusion_at(std::span<const double> scores, std::span<const int> labels,
                             double threshold) {
  check_sizes(scores, labels);
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1) {
      pred ? ++c.tp : ++c.fn;
    } else {
      pred ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

double balanced_accuracy(std::span<const double> scores, std::span<const int> labels,
                         double threshold) {
  const auto c = confusion_at(scores, labels, threshold);
  const std::size_t pos = c.tp + c.fn;
  const std::size_t neg = c.tn + c.fp;
  if (pos == 0 && neg == 0) throw DataError("balanced accuracy of an empty set");
  if (pos == 0) return static_cast<double>(c.tn) / static_cast<double>(neg);
  if (neg == 0) return static_cast<double>(c.tp) / static_cast<double>(pos);
  const double tpr = static_cast<double>(c.tp) / static_cast<double>(pos);
  const double tnr = static_cast<double>(c.tn) / static_cast<double>(neg);
  return 0.5 * (tpr + tnr);
}

RocAuc roc_auc_points(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  const std::size_t n = scores.size();
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = n - pos;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  RocAuc out;
  if (pos > 0 && neg > 0) {
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j < n && scores[order[j]] == scores[order[i]]) ++j;
      const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
      for (std::size_t k = i; k < j; ++k) {
        if (labels[order[k]] == 1) rank_sum += avg_rank;
      }
      i = j;
    }
    const double p = static_cast<double>(pos);
    out.auc = (rank_sum - p * (p + 1) / 2) / (p * static_cast<double>(neg));
  }

  // ROC: walk thresholds from the highest score down.
  const double inf = std::numeric_limits<double>::infinity();
  out.roc.push_back({0.0, 0.0, inf});
  std::size_t tp = 0;
  std::size_t fp = 0;
  auto rate = [](std::size_t k, std::size_t total) {
    return total == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(total);
  };
  for (std::size_t i = n; i > 0;) {
    const double s = scores[order[i - 1]];
    while (i > 0 && scores[order[i - 1]] == s) {
      labels[order[i - 1]] == 1 ? ++tp : ++fp;
      --i;
    }
    out.roc.push_back({rate(fp, neg), rate(tp, pos), s});
  }
  out.roc.push_back({1.0, 1.0, -inf});
  return out;
}

double trapezoid_area(std::span<const RocPoint> roc) {
  double area = 0.0;
  for (std::size_t k = 1; k < roc.size(); ++k) {
    area += (roc[k].fpr - roc[k - 1].fpr) * (roc[k].tpr + roc[k - 1].tpr) / 2;
  }
  return area;
}

EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                           double threshold) {
  EvalReport r;
  r.threshold = threshold;
  r.confusion = confusion_at(scores, labels, threshold);
  r.single_class = (r.confusion.tp + r.confusion.fn == 0) || (r.confusion.tn + r.confusion.fp == 0);
  r.balanced_accuracy = balanced_accuracy(scores, labels, threshold);
  auto ra = roc_auc_points(scores, labels);
  r.auc = ra.auc;
  r.roc = std::move(ra.roc);
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["balanced_accuracy"] = balanced_accuracy;
  j["single_class"] = single_class;
  j["auc"] = auc ? nlohmann::json(*auc) : nlohmann::json(nullptr);
  j["threshold"] = threshold;
  j["confusion"] = {{"tp", confusion.tp}, {"fp", confusion.fp}, {"tn", confusion.tn},
                    {"fn", confusion.fn}};
  return j;
}

void write_roc_csv(std::ostream& out, std::span<const RocPoint> roc) {
  out << "fpr,tpr,threshold\n";
  const auto old = out.precision(17);
  for (const auto& p : roc) {
    out << p.fpr << ',' << p.tpr << ',';
    if (std::isinf(p.threshold)) {
      out << (p.threshold > 0 ? "inf" : "-inf");
    } else {
      out << p.threshold;
    }
    out << '\n';
  }
  out.precision(old);
}

double Calibrator::apply(double score) const {
  if (const auto* p = std::get_if<PlattCalibrator>(&impl_)) {
    const double z = p->a * score + p->b;
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  const auto& iso = std::get<IsotonicCalibrator>(impl_);
  const auto it = std::upper_bound(iso.breakpoints.begin(), iso.breakpoints.end(), score);
  if (it == iso.breakpoints.begin()) return iso.values.front();
  return iso.values[static_cast<std::size_t>(it - iso.breakpoints.begin()) - 1];
}

std::vector<double> Calibrator::apply(std::span<const double> scores) const {
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = apply(scores[i]);
  return out;
}

nlohmann::json Calibrator::to_json() const {
  if (const auto* p = std::get_if<PlattCalibrator>(&impl_)) {
    return {{"kind", "platt"}, {"a", p->a}, {"b", p->b}};
  }
  const auto& iso = std::get<IsotonicCalibrator>(impl_);
  return {{"kind", "isotonic"}, {"breakpoints", iso.breakpoints}, {"values", iso.values}};
}

Calibrator platt_calibrate(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  if (scores.size() < 2) throw DataError("Platt scaling needs at least 2 points");
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw DataError("Platt scaling needs both classes");

  // Minimizes the cross-entropy of sigmoid(a*s + b) against smoothed targets.
  const double hi = (pos + 1) / (pos + 2);
  const double lo = 1 / (neg + 2);
  const std::size_t n = scores.size();
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = labels[i] == 1 ? hi : lo;

  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = a * scores[i] + b;
      // -t log sigmoid(z) - (1-t) log(1 - sigmoid(z))
      f += z >= 0 ? (1 - t[i]) * z + std::log1p(std::exp(-z))
                  : -t[i] * z + std::log1p(std::exp(z));
    }
    return f;
  };

  double a = 0.0;
  double b = std::log((pos + 1) / (neg + 1));
  double f = objective(a, b);
  constexpr double kRidge = 1e-12;
  for (int iter = 0; iter < 100; ++iter) {
    double g1 = 0, g2 = 0, h11 = kRidge, h22 = kRidge, h21 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = a * scores[i] + b;
      const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      const double d1 = p - t[i];
      const double d2 = p * (1 - p);
      g1 += scores[i] * d1;
      g2 += d1;
      h11 += scores[i] * scores[i] * d2;
      h22 += d2;
      h21 += scores[i] * d2;
    }
    if (std::abs(g1) < 1e-10 && std::abs(g2) < 1e-10) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    bool moved = false;
    while (step >= 1e-10) {
      const double na = a + step * da;
      const double nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < f + 1e-4 * step * gd) {
        a = na;
        b = nb;
        f = nf;
        moved = true;
        break;
      }
      step /= 2;
    }
    if (!moved) break;
  }
  return Calibrator(PlattCalibrator{a, b});
}

Calibrator isotonic_calibrate(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  if (scores.size() < 2) throw DataError("isotonic calibration needs at least 2 points");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  struct Block {
    double sum;
    double weight;
    std::size_t first_group;
  };
  std::vector<double> xs;
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < order.size();) {
    const double x = scores[order[i]];
    double sum = 0.0;
    double w = 0.0;
    while (i < order.size() && scores[order[i]] == x) {
      sum += labels[order[i]];
      w += 1.0;
      ++i;
    }
    xs.push_back(x);
    blocks.push_back({sum, w, xs.size() - 1});
    // Merge while the previous block's mean exceeds this one's.
    while (blocks.size() > 1) {
      const Block& cur = blocks.back();
      const Block& prev = blocks[blocks.size() - 2];
      if (prev.sum * cur.weight <= cur.sum * prev.weight) break;
      Block merged{prev.sum + cur.sum, prev.weight + cur.weight, prev.first_group};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }

  IsotonicCalibrator iso;
  iso.breakpoints = xs;
  iso.values.resize(xs.size());
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const std::size_t end = k + 1 < blocks.size() ? blocks[k + 1].first_group : xs.size();
    const double mean = blocks[k].sum / blocks[k].weight;
    for (std::size_t g = blocks[k].first_group; g < end; ++g) iso.values[g] = mean;
  }
  return Calibrator(std::move(iso));
}

}  // namespace pehl
