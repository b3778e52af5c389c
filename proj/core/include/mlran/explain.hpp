#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlran/features.hpp"
#include "mlran/logreg.hpp"
#include "mlran/sparse_matrix.hpp"

namespace mlran {

struct Attribution {
  ColumnIndex column = 0;
  std::string name;  // empty when no names were supplied
  double value = 0;
};

// Per-column means of X (the linear-SHAP background).
std::vector<double> column_means(const SparseBinaryMatrix& X);

// Logit of weight row `row` at a dense point (e.g. the background means).
double linear_logit(const LogRegModel& model, std::span<const double> x, std::size_t row = 0);

// Exact SHAP values of the logit of weight row `row` (binary: the positive
// class) under feature independence: phi_i = w_i * (x_i - mean_i). One entry
// per column that is active or has a non-zero mean, in column order.
// Throws ColumnMismatch when widths disagree.
std::vector<Attribution> shap_linear(const LogRegModel& model, std::span<const ColumnIndex> active,
                                     std::span<const double> background_means, std::size_t row = 0,
                                     std::span<const std::string> names = {});

struct GlobalAttribution {
  ColumnIndex column = 0;
  std::string name;
  std::optional<FeatureGroup> group;
  double mean_abs = 0;
};

struct ShapGlobalReport {
  std::vector<GlobalAttribution> ranked;          // top_n by mean |phi|, ties to lower column
  std::map<std::string, std::size_t> group_counts;  // group label -> entries in `ranked`
};

// Ranks columns by mean |phi| over the rows of X_eval. `names` and `groups`
// describe the model's columns and may be empty.
ShapGlobalReport shap_global(const LogRegModel& model, const SparseBinaryMatrix& X_eval,
                             std::span<const double> background_means, std::size_t top_n, std::size_t row = 0,
                             std::span<const std::string> names = {}, std::span<const FeatureGroup> groups = {});

// Probability of the explained class for every row of a batch.
using ProbaFn = std::function<std::vector<double>(const SparseBinaryMatrix&)>;

struct LimeParams {
  std::size_t n_samples = 5000;
  std::optional<double> kernel_width;  // default 0.75 * sqrt(active count)
  std::size_t top_k = 5;
  double ridge = 1.0;
  std::uint64_t seed = 42;
};

struct LimeResult {
  std::vector<Attribution> attributions;  // top_k by |value|, ties to lower column
  double intercept = 0;
  double r2 = 0;
  double kernel_width = 0;
  double instance_probability = 0;
  std::string diagnostic;  // non-empty for a degenerate neighbourhood
};

// Samples n_samples binary neighbours of x (the first is x itself; every
// other one keeps each active column with probability 1/2), weights them
// by exp(-d^2 / width^2) with d the Hamming distance, and fits a weighted
// ridge regression of the explained probability on the kept indicators.
// Throws InvalidArgument when n_samples < 100.
LimeResult lime_explain(const ProbaFn& predict, std::span<const ColumnIndex> active, std::size_t n_cols,
                        const LimeParams& params = {}, std::span<const std::string> names = {});

// Serialisation helpers for the CLI.
std::string global_to_json(const ShapGlobalReport& report);
std::string global_to_csv(const ShapGlobalReport& report);
std::string lime_to_json(const std::vector<std::pair<std::string, LimeResult>>& explained);

}  // namespace mlran
