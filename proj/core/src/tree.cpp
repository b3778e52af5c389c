#include "mlran/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "mlran/errors.hpp"
#include "mlran/parallel.hpp"
#include "mlran/rng.hpp"

namespace mlran {

namespace {

struct Frame {
  std::uint32_t node;
  std::size_t begin;
  std::size_t end;
  std::size_t depth;
};

class TreeBuilder {
 public:
  TreeBuilder(const SparseBinaryMatrix& X, std::span<const std::uint32_t> y, std::size_t k, const TreeHyper& hyper,
              std::span<const double> weight)
      : X_(X), y_(y), k_(k), hyper_(hyper), weight_(weight), rng_(hyper.seed),
        acc_(X.cols() * k, 0.0), mark_(X.cols(), 0), perm_(X.cols()) {
    std::iota(perm_.begin(), perm_.end(), ColumnIndex{0});
  }

  std::vector<TreeNode> build() {
    std::vector<std::uint32_t> samples;
    for (std::size_t i = 0; i < X_.rows(); ++i) {
      if (w(i) > 0) samples.push_back(static_cast<std::uint32_t>(i));
    }
    nodes_.push_back({});
    std::vector<Frame> stack{{0, 0, samples.size(), 0}};
    while (!stack.empty()) {
      const Frame f = stack.back();
      stack.pop_back();
      std::span<std::uint32_t> node_samples(samples.data() + f.begin, f.end - f.begin);

      std::vector<double> counts(k_, 0.0);
      for (auto s : node_samples) counts[y_[s]] += w(s);
      const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
      TreeNode& node = nodes_[f.node];
      node.n_samples = total;
      node.distribution = counts;
      if (total > 0) {
        for (double& p : node.distribution) p /= total;
      } else {
        std::fill(node.distribution.begin(), node.distribution.end(), 1.0 / static_cast<double>(k_));
      }

      const bool depth_reached = hyper_.max_depth > 0 && f.depth >= hyper_.max_depth;
      const bool too_small = total < static_cast<double>(std::max<std::size_t>(hyper_.min_samples_split, 2));
      const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;
      if (depth_reached || too_small || pure) continue;

      const auto column = best_split(node_samples, counts, total);
      if (!column) continue;

      const auto mid = std::stable_partition(node_samples.begin(), node_samples.end(),
                                             [&](std::uint32_t s) { return !X_.get(s, *column); });
      const std::size_t split = f.begin + static_cast<std::size_t>(mid - node_samples.begin());
      const auto left = static_cast<std::uint32_t>(nodes_.size());
      nodes_.push_back({});
      nodes_.push_back({});
      TreeNode& parent = nodes_[f.node];
      parent.feature = *column;
      parent.left = left;
      parent.right = left + 1;
      // right pushed first so the left subtree is finished first
      stack.push_back({left + 1, split, f.end, f.depth + 1});
      stack.push_back({left, f.begin, split, f.depth + 1});
    }
    return std::move(nodes_);
  }

 private:
  double w(std::size_t i) const { return weight_.empty() ? 1.0 : weight_[i]; }

  std::optional<ColumnIndex> best_split(std::span<const std::uint32_t> samples, const std::vector<double>& counts,
                                        double total) {
    std::vector<ColumnIndex> touched;
    for (auto s : samples) {
      for (ColumnIndex c : X_.row(s)) {
        if (!mark_[c]) {
          mark_[c] = 1;
          touched.push_back(c);
        }
        acc_[static_cast<std::size_t>(c) * k_ + y_[s]] += w(s);
      }
    }

    const double parent = gini(counts);
    std::optional<ColumnIndex> best;
    double best_gain = -1.0;
    std::vector<double> left(k_);
    auto consider = [&](ColumnIndex c) -> bool {
      if (!mark_[c]) return false;  // constant zero in this node
      std::span<const double> right(&acc_[static_cast<std::size_t>(c) * k_], k_);
      const double wr = std::accumulate(right.begin(), right.end(), 0.0);
      if (wr >= total) return false;  // constant one
      for (std::size_t j = 0; j < k_; ++j) left[j] = counts[j] - right[j];
      const double wl = total - wr;
      const double gain = parent - (wl / total) * gini(left) - (wr / total) * gini(right);
      if (gain > best_gain || (gain == best_gain && best && c < *best)) {
        best_gain = gain;
        best = c;
      }
      return true;
    };

    const std::size_t m = X_.cols();
    if (hyper_.max_features == 0 || hyper_.max_features >= m) {
      std::sort(touched.begin(), touched.end());
      for (ColumnIndex c : touched) consider(c);
    } else {
      // partial Fisher-Yates over a persistent permutation
      std::size_t found = 0;
      for (std::size_t i = 0; i < m && found < hyper_.max_features; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng_.below(m - i));
        std::swap(perm_[i], perm_[j]);
        if (consider(perm_[i])) ++found;
      }
    }

    for (ColumnIndex c : touched) {
      mark_[c] = 0;
      std::fill_n(acc_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * k_), k_, 0.0);
    }
    return best;
  }

  const SparseBinaryMatrix& X_;
  std::span<const std::uint32_t> y_;
  std::size_t k_;
  const TreeHyper& hyper_;
  std::span<const double> weight_;
  SplitMix64 rng_;
  std::vector<double> acc_;
  std::vector<char> mark_;
  std::vector<ColumnIndex> perm_;
  std::vector<TreeNode> nodes_;
};

void check_inputs(const SparseBinaryMatrix& X, std::span<const std::uint32_t> y, std::size_t k) {
  if (y.size() != X.rows()) throw LengthMismatch("labels and matrix rows differ");
  if (k == 0) throw InvalidArgument("no classes");
  for (auto label : y) {
    if (label >= k) throw InvalidArgument("label out of range");
  }
}

std::uint32_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<std::uint32_t>(best);
}

}  // namespace

double gini(std::span<const double> counts) noexcept {
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0) return 0.0;
  double sq = 0.0;
  for (double c : counts) sq += (c / total) * (c / total);
  return 1.0 - sq;
}

const std::vector<double>& TreeModel::leaf_distribution(std::span<const ColumnIndex> active) const {
  std::size_t i = 0;
  while (!nodes[i].leaf()) {
    const auto c = static_cast<ColumnIndex>(nodes[i].feature);
    i = std::binary_search(active.begin(), active.end(), c) ? nodes[i].right : nodes[i].left;
  }
  return nodes[i].distribution;
}

std::uint32_t TreeModel::predict(std::span<const ColumnIndex> active) const {
  return argmax(leaf_distribution(active));
}

std::size_t TreeModel::depth() const {
  std::size_t deepest = 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes[i].leaf()) {
      stack.push_back({nodes[i].left, d + 1});
      stack.push_back({nodes[i].right, d + 1});
    }
  }
  return deepest;
}

TreeModel train_tree(const SparseBinaryMatrix& X, std::span<const std::uint32_t> y,
                     std::span<const std::string> classes, const TreeHyper& hyper,
                     std::span<const double> sample_weight) {
  check_inputs(X, y, classes.size());
  if (!sample_weight.empty() && sample_weight.size() != X.rows()) {
    throw LengthMismatch("sample weights and matrix rows differ");
  }
  TreeModel model;
  model.classes.assign(classes.begin(), classes.end());
  model.n_features = X.cols();
  model.hyper = hyper;
  model.nodes = TreeBuilder(X, y, classes.size(), model.hyper, sample_weight).build();
  return model;
}

std::size_t sqrt_feature_count(std::size_t n_features) noexcept {
  auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n_features)));
  while (r * r > n_features) --r;
  while ((r + 1) * (r + 1) <= n_features) ++r;
  return std::max<std::size_t>(1, r);
}

std::vector<double> EnsembleModel::proba(std::span<const ColumnIndex> active) const {
  std::vector<double> out(classes.size(), 0.0);
  if (trees.empty()) return out;
  for (const auto& t : trees) {
    if (variant == EnsembleVariant::RandomForest) {
      out[t.predict(active)] += 1.0;
    } else {
      const auto& dist = t.leaf_distribution(active);
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += dist[c];
    }
  }
  for (double& v : out) v /= static_cast<double>(trees.size());
  return out;
}

std::uint32_t EnsembleModel::predict(std::span<const ColumnIndex> active) const { return argmax(proba(active)); }

EnsembleModel train_ensemble(const SparseBinaryMatrix& X, std::span<const std::uint32_t> y,
                             std::span<const std::string> classes, const EnsembleHyper& hyper,
                             EnsembleVariant variant) {
  check_inputs(X, y, classes.size());
  if (hyper.n_estimators == 0) throw InvalidArgument("n_estimators must be positive");
  EnsembleModel model;
  model.variant = variant;
  model.classes.assign(classes.begin(), classes.end());
  model.n_features = X.cols();
  model.hyper = hyper;
  model.trees.resize(hyper.n_estimators);

  const std::size_t n = X.rows();
  parallel_for(hyper.n_estimators, hyper.threads, [&](std::size_t t) {
    SplitMix64 rng(derive_seed(hyper.seed, t));
    std::vector<double> weight;
    if (variant == EnsembleVariant::RandomForest && n > 0) {
      weight.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) weight[rng.below(n)] += 1.0;
    }
    TreeHyper th;
    th.max_depth = hyper.max_depth;
    th.min_samples_split = hyper.min_samples_split;
    th.max_features = sqrt_feature_count(X.cols());
    th.seed = rng.next();
    model.trees[t] = train_tree(X, y, classes, th, weight);
  });
  return model;
}

}  // namespace mlran
