#include "pehl/forest.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>

#include "pehl/error.hpp"
#include "pehl/rng.hpp"

namespace pehl {

namespace {

constexpr double kMinGain = 1e-12;

struct Candidate {
  double gain = 0.0;
  std::int32_t feature = -1;
  SplitKind split = SplitKind::none;
  double value = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureTable& data, std::span<const int> labels, const ForestOptions& opt,
              int max_features, Rng& rng)
      : data_(data), labels_(labels), opt_(opt), max_features_(max_features), rng_(rng) {}

  Tree build(std::vector<std::uint32_t> sample) {
    total_ = static_cast<double>(sample.size());
    grow(sample, 0);
    return std::move(tree_);
  }

 private:
  std::array<double, 2> count(std::span<const std::uint32_t> idx) const {
    std::array<double, 2> c{};
    for (auto i : idx) c[labels_[i]] += 1.0;
    return c;
  }

  static double child_term(const std::array<double, 2>& c, double n_parent) {
    const double n = c[0] + c[1];
    return n / n_parent * gini_impurity(c);
  }

  void consider(Candidate& best, double gain, std::int32_t f, SplitKind kind, double value) const {
    // Strict improvement keeps the lowest feature index, then lowest threshold.
    if (gain > kMinGain && gain > best.gain) best = Candidate{gain, f, kind, value};
  }

  void eval_category(Candidate& best, std::span<const std::uint32_t> idx, std::int32_t f,
                     double parent_gini, double n) {
    std::vector<double> cats;
    cats.reserve(idx.size());
    for (auto i : idx) cats.push_back(data_.at(i, f));
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    if (cats.size() < 2) return;
    const double c = cats[uniform_index(rng_, cats.size())];
    std::array<double, 2> l{}, r{};
    for (auto i : idx) (data_.at(i, f) == c ? l : r)[labels_[i]] += 1.0;
    const double gain = parent_gini - child_term(l, n) - child_term(r, n);
    consider(best, gain, f, SplitKind::category, c);
  }

  void eval_random_threshold(Candidate& best, std::span<const std::uint32_t> idx, std::int32_t f,
                             double parent_gini, double n) {
    double lo = data_.at(idx[0], f);
    double hi = lo;
    for (auto i : idx) {
      lo = std::min(lo, data_.at(i, f));
      hi = std::max(hi, data_.at(i, f));
    }
    if (!(hi > lo)) return;
    double theta = lo + uniform01(rng_) * (hi - lo);
    if (!(theta > lo)) theta = hi;  // keep the minimum on the left
    std::array<double, 2> l{}, r{};
    for (auto i : idx) (data_.at(i, f) < theta ? l : r)[labels_[i]] += 1.0;
    const double gain = parent_gini - child_term(l, n) - child_term(r, n);
    consider(best, gain, f, SplitKind::threshold, theta);
  }

  void eval_best_threshold(Candidate& best, std::span<const std::uint32_t> idx, std::int32_t f,
                           double parent_gini, double n, const std::array<double, 2>& totals) {
    std::vector<std::pair<double, int>> vals;
    vals.reserve(idx.size());
    for (auto i : idx) vals.emplace_back(data_.at(i, f), labels_[i]);
    std::sort(vals.begin(), vals.end());
    std::array<double, 2> l{};
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      l[vals[k].second] += 1.0;
      if (vals[k].first == vals[k + 1].first) continue;
      const std::array<double, 2> r{totals[0] - l[0], totals[1] - l[1]};
      const double gain = parent_gini - child_term(l, n) - child_term(r, n);
      double theta = 0.5 * (vals[k].first + vals[k + 1].first);
      if (!(theta > vals[k].first)) theta = vals[k + 1].first;
      consider(best, gain, f, SplitKind::threshold, theta);
    }
  }

  std::vector<std::int32_t> candidates() {
    const auto d = static_cast<std::int32_t>(data_.cols());
    std::vector<std::int32_t> all(static_cast<std::size_t>(d));
    std::iota(all.begin(), all.end(), 0);
    if (max_features_ >= d) return all;
    // Partial Fisher-Yates, then ascending order for tie-breaking.
    for (std::int32_t k = 0; k < max_features_; ++k) {
      const auto j = k + static_cast<std::int32_t>(uniform_index(rng_, static_cast<std::uint64_t>(d - k)));
      std::swap(all[k], all[j]);
    }
    all.resize(static_cast<std::size_t>(max_features_));
    std::sort(all.begin(), all.end());
    return all;
  }

  std::int32_t grow(std::vector<std::uint32_t>& idx, int depth) {
    const auto me = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const auto counts = count(idx);
    const double n = counts[0] + counts[1];
    {
      TreeNode& node = tree_.nodes.back();
      node.class_counts = counts;
      node.p_t = n / total_;
      node.gini = gini_impurity(counts);
    }
    const double parent_gini = tree_.nodes[me].gini;
    const bool pure = counts[0] == 0.0 || counts[1] == 0.0;
    if (pure || n < opt_.min_samples_split || (opt_.max_depth >= 0 && depth >= opt_.max_depth)) {
      return me;
    }

    Candidate best;
    for (std::int32_t f : candidates()) {
      if (data_.kinds[f] == FeatureKind::categorical) {
        eval_category(best, idx, f, parent_gini, n);
      } else if (opt_.kind == ForestKind::extra_trees) {
        eval_random_threshold(best, idx, f, parent_gini, n);
      } else {
        eval_best_threshold(best, idx, f, parent_gini, n, counts);
      }
    }
    if (best.split == SplitKind::none) return me;

    std::vector<std::uint32_t> left;
    std::vector<std::uint32_t> right;
    for (auto i : idx) {
      const double x = data_.at(i, best.feature);
      const bool go_left = best.split == SplitKind::category ? x == best.value : x < best.value;
      (go_left ? left : right).push_back(i);
    }
    std::vector<std::uint32_t>().swap(idx);

    {
      TreeNode& node = tree_.nodes[me];
      node.split = best.split;
      node.feature = best.feature;
      node.value = best.value;
      node.p_left = static_cast<double>(left.size()) / n;
      node.p_right = static_cast<double>(right.size()) / n;
    }
    const auto l = grow(left, depth + 1);
    const auto r = grow(right, depth + 1);
    tree_.nodes[me].left = l;
    tree_.nodes[me].right = r;
    return me;
  }

  const FeatureTable& data_;
  std::span<const int> labels_;
  const ForestOptions& opt_;
  int max_features_;
  Rng& rng_;
  double total_ = 0.0;
  Tree tree_;
};

const TreeNode& leaf_for(const Tree& tree, std::span<const double> row) {
  std::size_t k = 0;
  while (!tree.nodes[k].is_leaf()) {
    const auto& node = tree.nodes[k];
    const double x = row[static_cast<std::size_t>(node.feature)];
    const bool go_left = node.split == SplitKind::category ? x == node.value : x < node.value;
    k = static_cast<std::size_t>(go_left ? node.left : node.right);
  }
  return tree.nodes[k];
}

}  // namespace

FeatureTable FeatureTable::for_header_schema() {
  FeatureTable t;
  for (const auto& e : feature_schema()) {
    t.kinds.push_back(e.kind);
    t.names.push_back(e.name);
  }
  return t;
}

void FeatureTable::append(std::span<const double> row) {
  if (row.size() != cols()) throw DataError("feature row width does not match table");
  values.insert(values.end(), row.begin(), row.end());
  ++rows;
}

std::string_view to_string(ForestKind kind) {
  return kind == ForestKind::random_forest ? "random-forest" : "extra-trees";
}

ForestKind forest_kind_from_string(std::string_view s) {
  if (s == "random-forest" || s == "rf") return ForestKind::random_forest;
  if (s == "extra-trees" || s == "et") return ForestKind::extra_trees;
  throw DataError("unknown forest kind: " + std::string(s));
}

double gini_impurity(const std::array<double, 2>& counts) {
  const double n = counts[0] + counts[1];
  if (n <= 0.0) return 0.0;
  const double p0 = counts[0] / n;
  const double p1 = counts[1] / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

TreeEnsemble train_forest(const FeatureTable& data, std::span<const int> labels,
                          const ForestOptions& options) {
  if (data.rows == 0) throw DataError("train_forest: empty training data");
  if (labels.size() != data.rows) throw DataError("train_forest: label count mismatch");
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("train_forest: labels must be 0 or 1");
  }
  if (options.n_trees < 1) throw DataError("train_forest: n_trees must be positive");

  const auto d = static_cast<int>(data.cols());
  int max_features = options.max_features;
  if (max_features <= 0) {
    max_features = options.kind == ForestKind::random_forest
                       ? static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))))
                       : d;
  }
  max_features = std::min(max_features, d);

  TreeEnsemble ens;
  ens.kind = options.kind;
  ens.n_trees = options.n_trees;
  ens.seed = options.seed;
  ens.feature_names = data.names;
  ens.feature_kinds = data.kinds;
  ens.trees.reserve(static_cast<std::size_t>(options.n_trees));

  const bool bootstrap = options.kind == ForestKind::random_forest && options.bootstrap;
  for (int t = 0; t < options.n_trees; ++t) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::uint32_t> sample(data.rows);
    if (bootstrap) {
      for (auto& s : sample) s = static_cast<std::uint32_t>(uniform_index(rng, data.rows));
      std::sort(sample.begin(), sample.end());
    } else {
      std::iota(sample.begin(), sample.end(), 0u);
    }
    TreeBuilder builder(data, labels, options, max_features, rng);
    ens.trees.push_back(builder.build(std::move(sample)));
  }
  return ens;
}

double predict_proba(const TreeEnsemble& ensemble, std::span<const double> row) {
  if (row.size() != ensemble.feature_kinds.size()) {
    throw DataError("predict_proba: feature vector does not match the ensemble schema");
  }
  double sum = 0.0;
  for (const auto& tree : ensemble.trees) {
    const auto& leaf = leaf_for(tree, row);
    const double n = leaf.class_counts[0] + leaf.class_counts[1];
    sum += n > 0 ? leaf.class_counts[1] / n : 0.0;
  }
  return sum / static_cast<double>(ensemble.trees.size());
}

double predict_proba(const TreeEnsemble& ensemble, const FeatureVector& x) {
  const auto row = x.as_row();
  return predict_proba(ensemble, std::span<const double>(row));
}

MdiReport mdi_scores(const TreeEnsemble& ensemble) {
  const std::size_t d = ensemble.feature_kinds.size();
  MdiReport rep;
  rep.names = ensemble.feature_names;
  rep.mdi.assign(d, 0.0);
  for (const auto& tree : ensemble.trees) {
    std::vector<double> per_tree(d, 0.0);
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) continue;
      const double delta = node.gini - node.p_left * tree.nodes[node.left].gini -
                           node.p_right * tree.nodes[node.right].gini;
      per_tree[static_cast<std::size_t>(node.feature)] += node.p_t * delta;
    }
    for (std::size_t s = 0; s < d; ++s) rep.mdi[s] += per_tree[s];
  }
  if (!ensemble.trees.empty()) {
    for (auto& v : rep.mdi) v /= static_cast<double>(ensemble.trees.size());
  }
  const double top = rep.mdi.empty() ? 0.0 : *std::max_element(rep.mdi.begin(), rep.mdi.end());
  rep.ri.assign(d, 0.0);
  if (top > 0.0) {
    for (std::size_t s = 0; s < d; ++s) rep.ri[s] = rep.mdi[s] / top;
  }
  return rep;
}

std::vector<std::size_t> MdiReport::ranking() const {
  std::vector<std::size_t> order(mdi.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mdi[a] > mdi[b]; });
  return order;
}

void MdiReport::write_tsv(std::ostream& out) const {
  out << "rank\tfeature\tmdi\tri\n";
  const auto old = out.precision(10);
  std::size_t rank = 1;
  for (auto s : ranking()) {
    out << rank++ << '\t' << names[s] << '\t' << mdi[s] << '\t' << ri[s] << '\n';
  }
  out.precision(old);
}

nlohmann::json MdiReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (auto s : ranking()) {
    arr.push_back({{"feature", names[s]}, {"index", s}, {"mdi", mdi[s]}, {"ri", ri[s]}});
  }
  return arr;
}

}  // namespace pehl
