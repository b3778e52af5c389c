#include "mlran/classifier.hpp"

#include <json.hpp>

#include "mlran/errors.hpp"

namespace mlran {

using nlohmann::json;

namespace {

constexpr std::string_view kVariantNames[] = {"logistic_regression", "decision_tree", "random_forest", "extra_trees"};
constexpr std::string_view kModelVersion = "MLRMODEL v1";

json nodes_to_json(const std::vector<TreeNode>& nodes) {
  json out = json::array();
  for (const auto& n : nodes) out.push_back(json::array({n.feature, n.left, n.right, n.n_samples, n.distribution}));
  return out;
}

std::vector<TreeNode> nodes_from_json(const json& j, std::size_t n_classes, std::size_t n_features) {
  std::vector<TreeNode> nodes;
  for (const auto& row : j) {
    TreeNode n;
    n.feature = row.at(0).get<std::int64_t>();
    n.left = row.at(1).get<std::uint32_t>();
    n.right = row.at(2).get<std::uint32_t>();
    n.n_samples = row.at(3).get<double>();
    n.distribution = row.at(4).get<std::vector<double>>();
    if (n.distribution.size() != n_classes) throw FormatError("tree node distribution has wrong width");
    if (n.feature >= static_cast<std::int64_t>(n_features)) throw FormatError("tree node column out of range");
    nodes.push_back(std::move(n));
  }
  for (const auto& n : nodes) {
    if (!n.leaf() && (n.left >= nodes.size() || n.right >= nodes.size())) throw FormatError("tree child out of range");
  }
  if (nodes.empty()) throw FormatError("tree has no nodes");
  return nodes;
}

void check_width(const Classifier& model, const SparseBinaryMatrix& X) {
  if (X.cols() != feature_count(model)) {
    throw ColumnMismatch("model expects " + std::to_string(feature_count(model)) + " columns, matrix has " +
                         std::to_string(X.cols()));
  }
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string_view to_string(ModelVariant v) { return kVariantNames[static_cast<int>(v)]; }

std::optional<ModelVariant> parse_model_variant(std::string_view s) {
  for (int i = 0; i < 4; ++i) {
    if (kVariantNames[i] == s) return static_cast<ModelVariant>(i);
  }
  return std::nullopt;
}

Classifier train_classifier(ModelVariant variant, const SparseBinaryMatrix& X, std::span<const std::uint32_t> y,
                            std::span<const std::string> classes, const ModelHyper& hyper) {
  switch (variant) {
    case ModelVariant::LogisticRegression:
      return train_logreg(X, y, classes, hyper.logreg);
    case ModelVariant::DecisionTree: {
      TreeHyper th;
      th.max_depth = hyper.max_depth;
      th.min_samples_split = hyper.min_samples_split;
      th.seed = hyper.seed;
      return train_tree(X, y, classes, th);
    }
    case ModelVariant::RandomForest:
    case ModelVariant::ExtraTrees: {
      EnsembleHyper eh;
      eh.n_estimators = hyper.n_estimators;
      eh.max_depth = hyper.max_depth;
      eh.min_samples_split = hyper.min_samples_split;
      eh.seed = hyper.seed;
      eh.threads = hyper.threads;
      return train_ensemble(X, y, classes, eh,
                            variant == ModelVariant::RandomForest ? EnsembleVariant::RandomForest
                                                                  : EnsembleVariant::ExtraTrees);
    }
  }
  throw InvalidArgument("unknown model variant");
}

ModelVariant variant_of(const Classifier& model) {
  return std::visit(overloaded{
                        [](const LogRegModel&) { return ModelVariant::LogisticRegression; },
                        [](const TreeModel&) { return ModelVariant::DecisionTree; },
                        [](const EnsembleModel& e) {
                          return e.variant == EnsembleVariant::RandomForest ? ModelVariant::RandomForest
                                                                            : ModelVariant::ExtraTrees;
                        },
                    },
                    model);
}

const std::vector<std::string>& class_names(const Classifier& model) {
  return std::visit([](const auto& m) -> const std::vector<std::string>& { return m.classes; }, model);
}

std::size_t feature_count(const Classifier& model) {
  return std::visit([](const auto& m) { return m.n_features; }, model);
}

ProbaMatrix predict_proba(const Classifier& model, const SparseBinaryMatrix& X) {
  check_width(model, X);
  ProbaMatrix out;
  out.rows = X.rows();
  out.classes = class_names(model).size();
  out.values.reserve(out.rows * out.classes);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto row = X.row(r);
    const std::vector<double> p = std::visit(overloaded{
                                                 [&](const LogRegModel& m) { return m.proba(row); },
                                                 [&](const TreeModel& m) { return m.leaf_distribution(row); },
                                                 [&](const EnsembleModel& m) { return m.proba(row); },
                                             },
                                             model);
    out.values.insert(out.values.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<std::uint32_t> predict(const Classifier& model, const SparseBinaryMatrix& X) {
  check_width(model, X);
  std::vector<std::uint32_t> out;
  out.reserve(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto row = X.row(r);
    out.push_back(std::visit(overloaded{
                                 [&](const LogRegModel& m) {
                                   const auto p = m.proba(row);
                                   std::size_t best = 0;
                                   for (std::size_t c = 1; c < p.size(); ++c) {
                                     if (p[c] > p[best]) best = c;
                                   }
                                   return static_cast<std::uint32_t>(best);
                                 },
                                 [&](const TreeModel& m) { return m.predict(row); },
                                 [&](const EnsembleModel& m) { return m.predict(row); },
                             },
                             model));
  }
  return out;
}

std::string model_to_json(const Classifier& model) {
  json doc;
  doc["version"] = kModelVersion;
  doc["variant"] = to_string(variant_of(model));
  doc["classes"] = class_names(model);
  doc["n_features"] = feature_count(model);
  std::visit(overloaded{
                 [&](const LogRegModel& m) {
                   doc["hyperparameters"] = {{"C", m.hyper.C},
                                             {"tol", m.hyper.tol},
                                             {"max_iter", m.hyper.max_iter},
                                             {"seed", m.hyper.seed},
                                             {"penalty", "l2"}};
                   doc["weights"] = m.weights;
                   doc["intercepts"] = m.intercepts;
                   doc["diagnostics"] = {{"iterations", m.diagnostics.iterations},
                                         {"final_loss", m.diagnostics.final_loss},
                                         {"gradient_norm", m.diagnostics.gradient_norm},
                                         {"converged", m.diagnostics.converged},
                                         {"message", m.diagnostics.message}};
                 },
                 [&](const TreeModel& m) {
                   doc["hyperparameters"] = {{"max_depth", m.hyper.max_depth},
                                             {"min_samples_split", m.hyper.min_samples_split},
                                             {"max_features", m.hyper.max_features},
                                             {"seed", m.hyper.seed}};
                   doc["nodes"] = nodes_to_json(m.nodes);
                 },
                 [&](const EnsembleModel& m) {
                   doc["hyperparameters"] = {{"n_estimators", m.hyper.n_estimators},
                                             {"max_depth", m.hyper.max_depth},
                                             {"min_samples_split", m.hyper.min_samples_split},
                                             {"seed", m.hyper.seed},
                                             {"bootstrap", m.bootstrap()}};
                   json trees = json::array();
                   for (const auto& t : m.trees) {
                     trees.push_back({{"max_features", t.hyper.max_features},
                                      {"seed", t.hyper.seed},
                                      {"nodes", nodes_to_json(t.nodes)}});
                   }
                   doc["trees"] = std::move(trees);
                 },
             },
             model);
  return doc.dump(1) + "\n";
}

Classifier model_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text.begin(), text.end());
    if (doc.at("version").get<std::string>() != kModelVersion) throw FormatError("unsupported model version");
    const auto variant = parse_model_variant(doc.at("variant").get<std::string>());
    if (!variant) throw FormatError("unknown model variant");
    const auto classes = doc.at("classes").get<std::vector<std::string>>();
    const auto n_features = doc.at("n_features").get<std::size_t>();
    const json& hp = doc.at("hyperparameters");

    switch (*variant) {
      case ModelVariant::LogisticRegression: {
        LogRegModel m;
        m.classes = classes;
        m.n_features = n_features;
        m.hyper.C = hp.at("C").get<double>();
        m.hyper.tol = hp.at("tol").get<double>();
        m.hyper.max_iter = hp.at("max_iter").get<std::size_t>();
        m.hyper.seed = hp.at("seed").get<std::uint64_t>();
        m.weights = doc.at("weights").get<std::vector<std::vector<double>>>();
        m.intercepts = doc.at("intercepts").get<std::vector<double>>();
        const json& d = doc.at("diagnostics");
        m.diagnostics.iterations = d.at("iterations").get<std::size_t>();
        m.diagnostics.final_loss = d.at("final_loss").get<double>();
        m.diagnostics.gradient_norm = d.at("gradient_norm").get<double>();
        m.diagnostics.converged = d.at("converged").get<bool>();
        m.diagnostics.message = d.at("message").get<std::string>();
        const std::size_t rows = classes.size() == 2 ? 1 : classes.size();
        if (classes.size() < 2 || m.weights.size() != rows || m.intercepts.size() != rows) {
          throw FormatError("logistic model has inconsistent shapes");
        }
        for (const auto& w : m.weights) {
          if (w.size() != n_features) throw FormatError("logistic weight vector has wrong width");
        }
        return m;
      }
      case ModelVariant::DecisionTree: {
        TreeModel m;
        m.classes = classes;
        m.n_features = n_features;
        m.hyper.max_depth = hp.at("max_depth").get<std::size_t>();
        m.hyper.min_samples_split = hp.at("min_samples_split").get<std::size_t>();
        m.hyper.max_features = hp.at("max_features").get<std::size_t>();
        m.hyper.seed = hp.at("seed").get<std::uint64_t>();
        m.nodes = nodes_from_json(doc.at("nodes"), classes.size(), n_features);
        return m;
      }
      case ModelVariant::RandomForest:
      case ModelVariant::ExtraTrees: {
        EnsembleModel m;
        m.variant = *variant == ModelVariant::RandomForest ? EnsembleVariant::RandomForest : EnsembleVariant::ExtraTrees;
        m.classes = classes;
        m.n_features = n_features;
        m.hyper.n_estimators = hp.at("n_estimators").get<std::size_t>();
        m.hyper.max_depth = hp.at("max_depth").get<std::size_t>();
        m.hyper.min_samples_split = hp.at("min_samples_split").get<std::size_t>();
        m.hyper.seed = hp.at("seed").get<std::uint64_t>();
        for (const auto& t : doc.at("trees")) {
          TreeModel tree;
          tree.classes = classes;
          tree.n_features = n_features;
          tree.hyper.max_depth = m.hyper.max_depth;
          tree.hyper.min_samples_split = m.hyper.min_samples_split;
          tree.hyper.max_features = t.at("max_features").get<std::size_t>();
          tree.hyper.seed = t.at("seed").get<std::uint64_t>();
          tree.nodes = nodes_from_json(t.at("nodes"), classes.size(), n_features);
          m.trees.push_back(std::move(tree));
        }
        if (m.trees.size() != m.hyper.n_estimators) throw FormatError("ensemble tree count mismatch");
        return m;
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("model document: ") + e.what());
  }
  throw FormatError("unreachable model variant");
}

}  // namespace mlran
