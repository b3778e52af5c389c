#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mlran {

// counts[i][j] = samples of true class i predicted as j.
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::uint64_t>> counts;

  std::size_t k() const noexcept { return counts.size(); }
  std::uint64_t total() const noexcept;
};

// Throws LengthMismatch for unequal lengths, InvalidArgument for an entry >= k.
ConfusionMatrix confusion(std::span<const std::uint32_t> y_true, std::span<const std::uint32_t> y_pred, std::size_t k,
                          std::vector<std::string> class_names = {});

struct ClassMetrics {
  std::string name;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::uint64_t support = 0;
};

struct EvaluationReport {
  double accuracy = 0;
  double balanced_accuracy = 0;  // unweighted mean of per-class recall
  double precision_weighted = 0;
  double recall_weighted = 0;
  double f1_weighted = 0;
  std::vector<ClassMetrics> per_class;
  double wall_time_seconds = 0;
  // classes whose precision, recall or F1 hit a zero denominator
  std::size_t zero_division_warnings = 0;
};

// Per-class rates use 0 for a zero denominator. Weighted aggregates weight
// each class by its support. Throws EmptyMatrix when the total is 0.
EvaluationReport metrics(const ConfusionMatrix& cm);

double balanced_accuracy(std::span<const std::uint32_t> y_true, std::span<const std::uint32_t> y_pred, std::size_t k);

// JSON document with the aggregate and per-class figures plus the matrix.
// wall_time_seconds is written only when `include_time` is set.
std::string evaluation_to_json(const EvaluationReport& report, const ConfusionMatrix& cm, bool include_time);

// CSV in table order: model,task,accuracy,balanced_accuracy,precision,recall,f1,time_seconds
std::string evaluation_csv_header();
std::string evaluation_csv_row(std::string_view model, std::string_view task, const EvaluationReport& report);

}  // namespace mlran
