#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pehl/header_features.hpp"

namespace pehl {

/// Dense row-major design matrix with per-column kinds. Categorical columns
/// hold small integer codes; flag and numeric columns are split by threshold.
struct FeatureTable {
  std::vector<double> values;  // rows * cols
  std::vector<FeatureKind> kinds;
  std::vector<std::string> names;
  std::size_t rows = 0;

  std::size_t cols() const { return kinds.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * cols(), cols());
  }

  // Empty table laid out by the 115-entry header schema.
  static FeatureTable for_header_schema();
  void append(std::span<const double> row);
};

enum class ForestKind { random_forest, extra_trees };

std::string_view to_string(ForestKind kind);
ForestKind forest_kind_from_string(std::string_view s);

enum class SplitKind : std::uint8_t { none, threshold, category };

struct TreeNode {
  SplitKind split = SplitKind::none;
  std::int32_t feature = -1;
  // threshold: x < value goes left; category: x == value goes left.
  double value = 0.0;
  std::array<double, 2> class_counts{};
  double p_t = 0.0;   // fraction of the tree's training sample reaching the node
  double gini = 0.0;  // G(t)
  std::int32_t left = -1;
  std::int32_t right = -1;
  double p_left = 0.0;
  double p_right = 0.0;

  bool is_leaf() const { return split == SplitKind::none; }
  bool operator==(const TreeNode&) const = default;
};

// Nodes are stored in depth-first preorder; index 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  bool operator==(const Tree&) const = default;
};

struct ForestOptions {
  ForestKind kind = ForestKind::random_forest;
  int n_trees = 100;
  std::uint64_t seed = 0;
  // Candidate features per node; 0 means ceil(sqrt(d)) for random forests and
  // all d features for extra-trees.
  int max_features = 0;
  int max_depth = -1;  // unlimited
  int min_samples_split = 2;
  // Only meaningful for random forests; extra-trees never bootstrap.
  bool bootstrap = true;
};

struct TreeEnsemble {
  std::vector<Tree> trees;
  ForestKind kind = ForestKind::random_forest;
  int n_trees = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;
  std::vector<FeatureKind> feature_kinds;

  bool operator==(const TreeEnsemble&) const = default;
};

double gini_impurity(const std::array<double, 2>& counts);

/// Trains each tree from its own seed derived from options.seed and the tree
/// index. Labels are 0/1. Throws DataError on empty data; single-class data
/// yields single-leaf trees.
TreeEnsemble train_forest(const FeatureTable& data, std::span<const int> labels,
                          const ForestOptions& options);

// Mean over trees of the reached leaf's positive-class fraction.
double predict_proba(const TreeEnsemble& ensemble, std::span<const double> row);
double predict_proba(const TreeEnsemble& ensemble, const FeatureVector& x);

struct MdiReport {
  std::vector<std::string> names;
  std::vector<double> mdi;
  std::vector<double> ri;  // mdi / max(mdi); zeros when every mdi is zero

  // Feature indices by descending MDI, ties by index.
  std::vector<std::size_t> ranking() const;
  void write_tsv(std::ostream& out) const;
  nlohmann::json to_json() const;
};

/// Mean decrease in impurity: per tree, the sum over internal nodes splitting
/// on s of p(t) * (G(t) - p_L G(t_L) - p_R G(t_R)), averaged over trees.
MdiReport mdi_scores(const TreeEnsemble& ensemble);

}  // namespace pehl
