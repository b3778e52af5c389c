#include "mlran/metrics.hpp"

#include <cstdio>

#include <json.hpp>

#include "mlran/errors.hpp"

namespace mlran {

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t t = 0;
  for (const auto& row : counts) {
    for (auto c : row) t += c;
  }
  return t;
}

ConfusionMatrix confusion(std::span<const std::uint32_t> y_true, std::span<const std::uint32_t> y_pred, std::size_t k,
                          std::vector<std::string> class_names) {
  if (y_true.size() != y_pred.size()) throw LengthMismatch("y_true and y_pred differ in length");
  ConfusionMatrix cm;
  cm.counts.assign(k, std::vector<std::uint64_t>(k, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] >= k || y_pred[i] >= k) throw InvalidArgument("class index out of range");
    ++cm.counts[y_true[i]][y_pred[i]];
  }
  if (class_names.empty()) {
    for (std::size_t c = 0; c < k; ++c) class_names.push_back(std::to_string(c));
  }
  if (class_names.size() != k) throw LengthMismatch("class name count differs from k");
  cm.class_names = std::move(class_names);
  return cm;
}

EvaluationReport metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw EmptyMatrix("confusion matrix is empty");
  const std::size_t k = cm.k();
  const double n = static_cast<double>(total);

  EvaluationReport r;
  std::uint64_t trace = 0;
  double recall_sum = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t support = 0, predicted = 0;
    for (std::size_t j = 0; j < k; ++j) {
      support += cm.counts[c][j];
      predicted += cm.counts[j][c];
    }
    const auto tp = cm.counts[c][c];
    trace += tp;

    ClassMetrics m;
    m.name = c < cm.class_names.size() ? cm.class_names[c] : std::to_string(c);
    m.support = support;
    bool zero_div = false;
    if (predicted > 0) m.precision = static_cast<double>(tp) / static_cast<double>(predicted); else zero_div = true;
    if (support > 0) m.recall = static_cast<double>(tp) / static_cast<double>(support); else zero_div = true;
    if (m.precision + m.recall > 0) m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall); else zero_div = true;
    if (zero_div) ++r.zero_division_warnings;

    recall_sum += m.recall;
    const double w = static_cast<double>(support) / n;
    r.precision_weighted += w * m.precision;
    r.recall_weighted += w * m.recall;
    r.f1_weighted += w * m.f1;
    r.per_class.push_back(std::move(m));
  }
  r.accuracy = static_cast<double>(trace) / n;
  r.balanced_accuracy = k > 0 ? recall_sum / static_cast<double>(k) : 0.0;
  return r;
}

double balanced_accuracy(std::span<const std::uint32_t> y_true, std::span<const std::uint32_t> y_pred, std::size_t k) {
  return metrics(confusion(y_true, y_pred, k)).balanced_accuracy;
}

std::string evaluation_to_json(const EvaluationReport& report, const ConfusionMatrix& cm, bool include_time) {
  nlohmann::json doc;
  doc["accuracy"] = report.accuracy;
  doc["balanced_accuracy"] = report.balanced_accuracy;
  doc["precision_weighted"] = report.precision_weighted;
  doc["recall_weighted"] = report.recall_weighted;
  doc["f1_weighted"] = report.f1_weighted;
  doc["zero_division_warnings"] = report.zero_division_warnings;
  auto& per_class = doc["per_class"] = nlohmann::json::array();
  for (const auto& c : report.per_class) {
    per_class.push_back(
        {{"class", c.name}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  doc["confusion_matrix"] = {{"classes", cm.class_names}, {"counts", cm.counts}};
  if (include_time) doc["wall_time_seconds"] = report.wall_time_seconds;
  return doc.dump(2) + "\n";
}

std::string evaluation_csv_header() {
  return "model,task,accuracy,balanced_accuracy,precision,recall,f1,time_seconds\n";
}

std::string evaluation_csv_row(std::string_view model, std::string_view task, const EvaluationReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f,%.6f,%.3f\n", r.accuracy, r.balanced_accuracy,
                r.precision_weighted, r.recall_weighted, r.f1_weighted, r.wall_time_seconds);
  return std::string(model) + "," + std::string(task) + buf;
}

}  // namespace mlran
