#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlran/sparse_matrix.hpp"

namespace mlran {

// Gini impurity 1 - sum p_i^2 of a (not necessarily normalised) count vector.
double gini(std::span<const double> counts) noexcept;

struct TreeHyper {
  std::size_t max_depth = 0;          // 0 = unlimited
  std::size_t min_samples_split = 2;
  std::size_t max_features = 0;       // candidate columns per node; 0 = all
  std::uint64_t seed = 42;

  bool operator==(const TreeHyper&) const = default;
};

// Internal nodes test one binary column: value 0 goes left, 1 goes right.
struct TreeNode {
  std::int64_t feature = -1;  // -1 for a leaf
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double n_samples = 0;       // weighted training samples reaching the node
  std::vector<double> distribution;  // class probabilities, sums to 1

  bool leaf() const noexcept { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct TreeModel {
  std::vector<std::string> classes;
  std::size_t n_features = 0;
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  TreeHyper hyper;

  const std::vector<double>& leaf_distribution(std::span<const ColumnIndex> active) const;
  std::uint32_t predict(std::span<const ColumnIndex> active) const;
  std::size_t depth() const;

  bool operator==(const TreeModel&) const = default;
};

// Greedy CART on binary features using Gini decrease. Ties between columns
// go to the lowest column index; zero-gain splits are allowed while a node
// is impure so parity-style targets remain learnable. With max_features set,
// candidates are drawn without replacement until that many non-constant
// columns are found. `sample_weight` (empty = all ones) holds integer
// multiplicities such as bootstrap counts.
TreeModel train_tree(const SparseBinaryMatrix& X, std::span<const std::uint32_t> y,
                     std::span<const std::string> classes, const TreeHyper& hyper = {},
                     std::span<const double> sample_weight = {});

enum class EnsembleVariant { RandomForest, ExtraTrees };

struct EnsembleHyper {
  std::size_t n_estimators = 100;
  std::size_t max_depth = 0;
  std::size_t min_samples_split = 2;
  std::uint64_t seed = 42;
  unsigned threads = 1;

  bool operator==(const EnsembleHyper&) const = default;
};

// Random forest: bootstrap resamples, floor(sqrt(m)) candidate columns per
// node, majority vote. Extra trees: full sample, the same random candidate
// draw (a binary column admits only one threshold), mean leaf distribution.
struct EnsembleModel {
  EnsembleVariant variant = EnsembleVariant::RandomForest;
  std::vector<std::string> classes;
  std::size_t n_features = 0;
  std::vector<TreeModel> trees;
  EnsembleHyper hyper;

  bool bootstrap() const noexcept { return variant == EnsembleVariant::RandomForest; }
  // Random forest: vote shares. Extra trees: mean leaf distribution.
  std::vector<double> proba(std::span<const ColumnIndex> active) const;
  // Argmax of proba with ties to the lowest class index.
  std::uint32_t predict(std::span<const ColumnIndex> active) const;

  bool operator==(const EnsembleModel&) const = default;
};

// Tree t draws from the stream derive_seed(hyper.seed, t), so the result does
// not depend on hyper.threads.
EnsembleModel train_ensemble(const SparseBinaryMatrix& X, std::span<const std::uint32_t> y,
                             std::span<const std::string> classes, const EnsembleHyper& hyper,
                             EnsembleVariant variant);

std::size_t sqrt_feature_count(std::size_t n_features) noexcept;

}  // namespace mlran
