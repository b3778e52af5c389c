#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mlran/logreg.hpp"
#include "mlran/sparse_matrix.hpp"
#include "mlran/tree.hpp"

namespace mlran {

enum class ModelVariant { LogisticRegression, DecisionTree, RandomForest, ExtraTrees };

std::string_view to_string(ModelVariant v);
std::optional<ModelVariant> parse_model_variant(std::string_view s);

struct ModelHyper {
  LogRegHyper logreg;
  std::size_t n_estimators = 100;
  std::size_t max_depth = 0;  // 0 = unlimited
  std::size_t min_samples_split = 2;
  std::uint64_t seed = 42;
  unsigned threads = 1;
};

using Classifier = std::variant<LogRegModel, TreeModel, EnsembleModel>;

Classifier train_classifier(ModelVariant variant, const SparseBinaryMatrix& X, std::span<const std::uint32_t> y,
                            std::span<const std::string> classes, const ModelHyper& hyper);

ModelVariant variant_of(const Classifier& model);
const std::vector<std::string>& class_names(const Classifier& model);
std::size_t feature_count(const Classifier& model);

// Row-major n x k class probabilities.
struct ProbaMatrix {
  std::size_t rows = 0;
  std::size_t classes = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t r) const { return {values.data() + r * classes, classes}; }
};

// Both throw ColumnMismatch when X.cols() differs from the model's width.
// Logistic: argmax of probabilities. Random forest: majority vote. Extra
// trees: argmax of the mean leaf distribution. Ties go to the lowest class.
std::vector<std::uint32_t> predict(const Classifier& model, const SparseBinaryMatrix& X);
ProbaMatrix predict_proba(const Classifier& model, const SparseBinaryMatrix& X);

// JSON model document tagged "version": "MLRMODEL v1".
std::string model_to_json(const Classifier& model);
// Throws FormatError on a malformed or foreign document.
Classifier model_from_json(std::string_view text);

}  // namespace mlran
