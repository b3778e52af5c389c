#include "mlran/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "mlran/digest.hpp"
#include "mlran/errors.hpp"
#include "mlran/metrics.hpp"

namespace mlran {

using nlohmann::json;

namespace {

constexpr std::string_view kStageNames[] = {"MI_FILTER", "CHI2_FILTER", "RFE"};
constexpr std::string_view kMethodNames[] = {"mi", "chi2"};

std::vector<std::uint64_t> class_totals(std::span<const std::uint32_t> labels, std::size_t k) {
  std::vector<std::uint64_t> totals(k, 0);
  for (auto y : labels) {
    if (y >= k) throw InvalidArgument("label out of range");
    ++totals[y];
  }
  return totals;
}

void check_dense(std::span<const std::uint8_t> column, std::span<const std::uint32_t> labels) {
  if (column.size() != labels.size()) throw LengthMismatch("column and labels differ in length");
  if (column.empty()) throw InvalidArgument("empty column");
}

// counts of x = 1 per class for a dense column
std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>> dense_table(std::span<const std::uint8_t> column,
                                                                              std::span<const std::uint32_t> labels) {
  const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::uint64_t> active(k, 0);
  for (std::size_t i = 0; i < column.size(); ++i) {
    if (column[i]) ++active[labels[i]];
  }
  return {std::move(active), class_totals(labels, k)};
}

std::vector<double> column_importance(const LogRegModel& model) {
  std::vector<double> imp(model.n_features, 0.0);
  if (model.binary()) {
    for (std::size_t j = 0; j < imp.size(); ++j) imp[j] = std::abs(model.weights[0][j]);
  } else {
    for (std::size_t j = 0; j < imp.size(); ++j) {
      double sq = 0.0;
      for (const auto& w : model.weights) sq += w[j] * w[j];
      imp[j] = std::sqrt(sq);
    }
  }
  return imp;
}

void count_groups(SelectionManifest& m, std::span<const FeatureGroup> groups) {
  if (groups.empty()) return;
  for (FeatureGroup g : kAllFeatureGroups) m.per_group_counts[std::string(group_label(g))] = {};
  for (FeatureGroup g : groups) ++m.per_group_counts[std::string(group_label(g))].before;
  for (ColumnIndex c : m.kept_columns) ++m.per_group_counts[std::string(group_label(groups[c]))].after;
}

}  // namespace

std::string_view to_string(ScoreMethod m) { return kMethodNames[static_cast<int>(m)]; }
std::string_view to_string(SelectionStage s) { return kStageNames[static_cast<int>(s)]; }

std::optional<ScoreMethod> parse_score_method(std::string_view s) {
  if (s == "mi") return ScoreMethod::MutualInformation;
  if (s == "chi2") return ScoreMethod::ChiSquare;
  return std::nullopt;
}

double mutual_information_from_counts(std::span<const std::uint64_t> active_per_class,
                                      std::span<const std::uint64_t> class_totals) {
  if (active_per_class.size() != class_totals.size()) throw LengthMismatch("count vectors differ in length");
  const double n = static_cast<double>(std::accumulate(class_totals.begin(), class_totals.end(), std::uint64_t{0}));
  if (n == 0) return 0.0;
  const double n1 =
      static_cast<double>(std::accumulate(active_per_class.begin(), active_per_class.end(), std::uint64_t{0}));
  const double nx[2] = {n - n1, n1};
  double mi = 0.0;
  for (std::size_t c = 0; c < class_totals.size(); ++c) {
    const double ny = static_cast<double>(class_totals[c]);
    const double cell[2] = {ny - static_cast<double>(active_per_class[c]), static_cast<double>(active_per_class[c])};
    for (int x = 0; x < 2; ++x) {
      if (cell[x] > 0) mi += (cell[x] / n) * std::log(cell[x] * n / (nx[x] * ny));
    }
  }
  return std::max(0.0, mi);
}

double chi_square_from_counts(std::span<const std::uint64_t> active_per_class,
                              std::span<const std::uint64_t> class_totals) {
  if (active_per_class.size() != class_totals.size()) throw LengthMismatch("count vectors differ in length");
  const double n = static_cast<double>(std::accumulate(class_totals.begin(), class_totals.end(), std::uint64_t{0}));
  if (n == 0) return 0.0;
  const double n1 =
      static_cast<double>(std::accumulate(active_per_class.begin(), active_per_class.end(), std::uint64_t{0}));
  const double nx[2] = {n - n1, n1};
  double chi = 0.0;
  for (std::size_t c = 0; c < class_totals.size(); ++c) {
    const double ny = static_cast<double>(class_totals[c]);
    const double observed[2] = {ny - static_cast<double>(active_per_class[c]),
                                static_cast<double>(active_per_class[c])};
    for (int x = 0; x < 2; ++x) {
      const double expected = nx[x] * ny / n;
      if (expected > 0) chi += (observed[x] - expected) * (observed[x] - expected) / expected;
    }
  }
  return chi;
}

double mutual_information(std::span<const std::uint8_t> column, std::span<const std::uint32_t> labels) {
  check_dense(column, labels);
  const auto [active, totals] = dense_table(column, labels);
  return mutual_information_from_counts(active, totals);
}

double chi_square(std::span<const std::uint8_t> column, std::span<const std::uint32_t> labels) {
  check_dense(column, labels);
  const auto [active, totals] = dense_table(column, labels);
  return chi_square_from_counts(active, totals);
}

std::vector<double> score_columns(const SparseBinaryMatrix& X, std::span<const std::uint32_t> labels,
                                  std::size_t n_classes, ScoreMethod method) {
  if (labels.size() != X.rows()) throw LengthMismatch("labels and matrix rows differ");
  const auto totals = class_totals(labels, n_classes);
  std::vector<std::uint64_t> active(X.cols() * n_classes, 0);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    for (ColumnIndex c : X.row(r)) ++active[static_cast<std::size_t>(c) * n_classes + labels[r]];
  }
  std::vector<double> scores(X.cols());
  for (std::size_t c = 0; c < X.cols(); ++c) {
    std::span<const std::uint64_t> counts(&active[c * n_classes], n_classes);
    scores[c] = method == ScoreMethod::MutualInformation ? mutual_information_from_counts(counts, totals)
                                                         : chi_square_from_counts(counts, totals);
  }
  return scores;
}

std::string dataset_digest(const SparseBinaryMatrix& X, std::span<const std::uint32_t> labels) {
  Sha256 h;
  h.update(to_mlrsparse(X));
  h.update("labels:");
  for (auto y : labels) h.update(std::to_string(y)).update(",");
  return h.hex_digest();
}

std::vector<FeatureGroup> column_groups(const FeatureVocabulary& vocab, std::span<const ColumnIndex> columns) {
  std::vector<FeatureGroup> out;
  out.reserve(columns.size());
  for (ColumnIndex c : columns) out.push_back(vocab.group(c));
  return out;
}

std::vector<FeatureGroup> column_groups(const FeatureVocabulary& vocab) {
  std::vector<FeatureGroup> out;
  out.reserve(vocab.size());
  for (FeatureGroup g : kAllFeatureGroups) out.insert(out.end(), vocab.group_spans()[static_cast<std::size_t>(g)], g);
  return out;
}

SelectionManifest filter_by_threshold(const SparseBinaryMatrix& X, std::span<const std::uint32_t> labels,
                                      std::size_t n_classes, std::span<const FeatureGroup> groups,
                                      ScoreMethod method, double threshold) {
  if (groups.size() != X.cols()) throw LengthMismatch("one group per column required");
  const auto scores = score_columns(X, labels, n_classes, method);

  SelectionManifest m;
  m.stage = method == ScoreMethod::MutualInformation ? SelectionStage::MiFilter : SelectionStage::Chi2Filter;
  m.params["threshold"] = threshold;
  m.input_digest = dataset_digest(X, labels);
  for (FeatureGroup g : kAllFeatureGroups) {
    for (std::size_t c = 0; c < X.cols(); ++c) {
      if (groups[c] == g && scores[c] > threshold) m.kept_columns.push_back(static_cast<ColumnIndex>(c));
    }
  }
  std::sort(m.kept_columns.begin(), m.kept_columns.end());
  std::vector<double> kept_scores;
  for (ColumnIndex c : m.kept_columns) kept_scores.push_back(scores[c]);
  m.scores = std::move(kept_scores);
  count_groups(m, groups);
  return m;
}

SelectionManifest filter_by_threshold(const SparseBinaryMatrix& X, std::span<const std::uint32_t> labels,
                                      std::size_t n_classes, const FeatureVocabulary& vocab, ScoreMethod method,
                                      double threshold) {
  if (vocab.size() != X.cols()) throw ColumnMismatch("vocabulary and matrix widths differ");
  return filter_by_threshold(X, labels, n_classes, column_groups(vocab), method, threshold);
}

std::size_t rfe_batch_size(std::size_t surviving, std::size_t target, double step_fraction) {
  if (surviving <= target) return 0;
  // the epsilon keeps e.g. 0.1 * 30 = 3.0000000000000004 from rounding up to 4
  const auto batch = static_cast<std::size_t>(std::ceil(step_fraction * static_cast<double>(surviving) - 1e-9));
  return std::min(std::max<std::size_t>(batch, 1), surviving - target);
}

SelectionManifest rfe(const SparseBinaryMatrix& X, std::span<const std::uint32_t> labels,
                      std::span<const std::string> classes, const RfeParams& params,
                      std::span<const FeatureGroup> groups) {
  if (params.target_count < 1) throw InvalidArgument("RFE target must be at least 1");
  if (params.target_count > X.cols()) {
    throw TargetTooLarge("RFE target " + std::to_string(params.target_count) + " exceeds " +
                         std::to_string(X.cols()) + " columns");
  }
  if (!(params.step_fraction > 0 && params.step_fraction < 1)) throw InvalidArgument("step must lie in (0, 1)");
  if (!groups.empty() && groups.size() != X.cols()) throw LengthMismatch("one group per column required");

  SelectionManifest m;
  m.stage = SelectionStage::Rfe;
  m.params = {{"target_count", static_cast<double>(params.target_count)},
              {"step", params.step_fraction},
              {"C", params.ranker.C},
              {"tol", params.ranker.tol},
              {"max_iter", static_cast<double>(params.ranker.max_iter)}};
  m.input_digest = dataset_digest(X, labels);

  std::vector<ColumnIndex> survivors(X.cols());
  std::iota(survivors.begin(), survivors.end(), ColumnIndex{0});
  std::size_t round = 0;
  auto fit = [&]() {
    auto model = train_logreg(X.select_columns(survivors), labels, classes, params.ranker);
    if (!model.diagnostics.converged) {
      m.warnings.push_back("round " + std::to_string(round) + ": ranker did not converge (" +
                           model.diagnostics.message + ")");
    }
    return column_importance(model);
  };

  while (survivors.size() > params.target_count) {
    const auto importance = fit();
    std::vector<std::size_t> order(survivors.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (importance[a] != importance[b]) return importance[a] < importance[b];
      return survivors[a] > survivors[b];
    });
    const std::size_t drop = rfe_batch_size(survivors.size(), params.target_count, params.step_fraction);
    std::vector<char> dropped(survivors.size(), 0);
    for (std::size_t i = 0; i < drop; ++i) {
      dropped[order[i]] = 1;
      m.elimination_order.push_back(survivors[order[i]]);
    }
    std::vector<ColumnIndex> next;
    next.reserve(survivors.size() - drop);
    for (std::size_t i = 0; i < survivors.size(); ++i) {
      if (!dropped[i]) next.push_back(survivors[i]);
    }
    survivors = std::move(next);
    ++round;
  }
  m.scores = fit();
  m.kept_columns = std::move(survivors);
  m.params["rounds"] = static_cast<double>(round);
  count_groups(m, groups);
  return m;
}

std::size_t sweep_count(double percentage, std::size_t n_columns) {
  return static_cast<std::size_t>(std::floor(percentage / 100.0 * static_cast<double>(n_columns) + 1e-9));
}

SweepResult rfe_sweep(const SparseBinaryMatrix& X_train, std::span<const std::uint32_t> y_train,
                      const SparseBinaryMatrix& X_eval, std::span<const std::uint32_t> y_eval,
                      std::span<const std::string> classes, std::span<const double> percentages,
                      double step_fraction, const LogRegHyper& hyper) {
  if (X_train.cols() != X_eval.cols()) throw ColumnMismatch("train and evaluation widths differ");
  if (y_eval.size() != X_eval.rows()) throw LengthMismatch("evaluation labels and rows differ");
  SweepResult result;
  std::optional<double> best_accuracy;
  for (double p : percentages) {
    SweepEntry e;
    e.percentage = p;
    e.count = sweep_count(p, X_train.cols());
    try {
      RfeParams params{e.count, step_fraction, hyper};
      const auto manifest = rfe(X_train, y_train, classes, params);
      e.survivors = manifest.kept_columns;
      const auto model = train_logreg(X_train.select_columns(e.survivors), y_train, classes, hyper);
      const auto X_eval_sel = X_eval.select_columns(e.survivors);
      std::vector<std::uint32_t> pred;
      pred.reserve(X_eval_sel.rows());
      for (std::size_t r = 0; r < X_eval_sel.rows(); ++r) {
        const auto proba = model.proba(X_eval_sel.row(r));
        pred.push_back(static_cast<std::uint32_t>(std::max_element(proba.begin(), proba.end()) - proba.begin()));
      }
      e.balanced_accuracy = balanced_accuracy(y_eval, pred, classes.size());
    } catch (const Error& err) {
      e.error = err.what();
    }
    if (e.balanced_accuracy && (!best_accuracy || *e.balanced_accuracy > *best_accuracy ||
                                (*e.balanced_accuracy == *best_accuracy && e.count < *result.best_count))) {
      best_accuracy = e.balanced_accuracy;
      result.best_count = e.count;
    }
    result.entries.push_back(std::move(e));
  }
  return result;
}

std::string sweep_to_json(const SweepResult& sweep) {
  json doc;
  auto& entries = doc["entries"] = json::array();
  for (const auto& e : sweep.entries) {
    json j = {{"percentage", e.percentage}, {"count", e.count}};
    j["balanced_accuracy"] = e.balanced_accuracy ? json(*e.balanced_accuracy) : json(nullptr);
    if (e.error) j["error"] = *e.error;
    j["survivors"] = e.survivors;
    entries.push_back(std::move(j));
  }
  doc["best_count"] = sweep.best_count ? json(*sweep.best_count) : json(nullptr);
  return doc.dump(2) + "\n";
}

std::vector<ColumnIndex> compose_columns(std::span<const ColumnIndex> outer, std::span<const ColumnIndex> inner) {
  std::vector<ColumnIndex> out;
  out.reserve(inner.size());
  for (ColumnIndex i : inner) {
    if (i >= outer.size()) throw InvalidArgument("inner column outside outer selection");
    out.push_back(outer[i]);
  }
  return out;
}

std::string manifest_to_json(const SelectionManifest& m) {
  json doc;
  doc["stage"] = to_string(m.stage);
  doc["params"] = m.params;
  doc["kept_columns"] = m.kept_columns;
  json groups = json::object();
  for (const auto& [label, c] : m.per_group_counts) groups[label] = {{"before", c.before}, {"after", c.after}};
  doc["per_group_counts"] = std::move(groups);
  if (m.scores) doc["scores"] = *m.scores;
  if (!m.elimination_order.empty()) doc["elimination_order"] = m.elimination_order;
  if (!m.warnings.empty()) doc["warnings"] = m.warnings;
  doc["input_digest"] = m.input_digest;
  return doc.dump(1) + "\n";
}

SelectionManifest manifest_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text.begin(), text.end());
    SelectionManifest m;
    const auto stage = doc.at("stage").get<std::string>();
    bool found = false;
    for (int i = 0; i < 3; ++i) {
      if (kStageNames[i] == stage) {
        m.stage = static_cast<SelectionStage>(i);
        found = true;
      }
    }
    if (!found) throw FormatError("unknown selection stage '" + stage + "'");
    m.params = doc.at("params").get<std::map<std::string, double>>();
    m.kept_columns = doc.at("kept_columns").get<std::vector<ColumnIndex>>();
    for (const auto& [label, c] : doc.at("per_group_counts").items()) {
      m.per_group_counts[label] = {c.at("before").get<std::size_t>(), c.at("after").get<std::size_t>()};
    }
    if (doc.contains("scores")) m.scores = doc["scores"].get<std::vector<double>>();
    if (doc.contains("elimination_order")) m.elimination_order = doc["elimination_order"].get<std::vector<ColumnIndex>>();
    if (doc.contains("warnings")) m.warnings = doc["warnings"].get<std::vector<std::string>>();
    m.input_digest = doc.at("input_digest").get<std::string>();
    for (std::size_t i = 1; i < m.kept_columns.size(); ++i) {
      if (m.kept_columns[i] <= m.kept_columns[i - 1]) throw FormatError("kept_columns not strictly increasing");
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("selection manifest: ") + e.what());
  }
}

}  // namespace mlran
