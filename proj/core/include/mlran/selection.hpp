#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlran/features.hpp"
#include "mlran/logreg.hpp"
#include "mlran/sparse_matrix.hpp"

namespace mlran {

enum class ScoreMethod { MutualInformation, ChiSquare };
std::string_view to_string(ScoreMethod m);
std::optional<ScoreMethod> parse_score_method(std::string_view s);

// Plug-in mutual information in nats from a 2 x k table given as the
// per-class counts of x = 1 and the per-class totals. Zero cells contribute
// nothing; the result is clamped at 0.
double mutual_information_from_counts(std::span<const std::uint64_t> active_per_class,
                                      std::span<const std::uint64_t> class_totals);
// Pearson chi-square over the same 2 x k table, skipping cells with E = 0.
double chi_square_from_counts(std::span<const std::uint64_t> active_per_class,
                              std::span<const std::uint64_t> class_totals);

// Single dense column against labels (classes 0..max label). Throw
// LengthMismatch when sizes differ and InvalidArgument when empty.
double mutual_information(std::span<const std::uint8_t> column, std::span<const std::uint32_t> labels);
double chi_square(std::span<const std::uint8_t> column, std::span<const std::uint32_t> labels);

// Scores every column of X in one pass over the non-zeros.
std::vector<double> score_columns(const SparseBinaryMatrix& X, std::span<const std::uint32_t> labels,
                                  std::size_t n_classes, ScoreMethod method);

enum class SelectionStage { MiFilter, Chi2Filter, Rfe };
std::string_view to_string(SelectionStage s);

struct GroupCount {
  std::size_t before = 0;
  std::size_t after = 0;
};

struct SelectionManifest {
  SelectionStage stage = SelectionStage::MiFilter;
  std::map<std::string, double> params;
  std::vector<ColumnIndex> kept_columns;  // indices into the input matrix, increasing
  std::optional<std::vector<double>> scores;  // one per kept column
  std::map<std::string, GroupCount> per_group_counts;  // keyed by group label
  std::vector<ColumnIndex> elimination_order;  // RFE only, first dropped first
  std::vector<std::string> warnings;
  std::string input_digest;
};

std::string manifest_to_json(const SelectionManifest& m);
SelectionManifest manifest_from_json(std::string_view text);

// sha256 over the MLRSPARSE serialisation of X followed by the labels.
std::string dataset_digest(const SparseBinaryMatrix& X, std::span<const std::uint32_t> labels);

// Group of each column of a matrix whose columns are `columns` of `vocab`.
std::vector<FeatureGroup> column_groups(const FeatureVocabulary& vocab, std::span<const ColumnIndex> columns);
std::vector<FeatureGroup> column_groups(const FeatureVocabulary& vocab);

// Stage 1: scores each column and keeps those with score > threshold,
// walking the groups in vocabulary order with the same threshold.
SelectionManifest filter_by_threshold(const SparseBinaryMatrix& X, std::span<const std::uint32_t> labels,
                                      std::size_t n_classes, std::span<const FeatureGroup> groups,
                                      ScoreMethod method, double threshold);
SelectionManifest filter_by_threshold(const SparseBinaryMatrix& X, std::span<const std::uint32_t> labels,
                                      std::size_t n_classes, const FeatureVocabulary& vocab, ScoreMethod method,
                                      double threshold);

struct RfeParams {
  std::size_t target_count = 1;
  double step_fraction = 0.1;
  LogRegHyper ranker;
};

// Number of columns removed from `surviving` in one round.
std::size_t rfe_batch_size(std::size_t surviving, std::size_t target, double step_fraction);

// Stage 2: repeatedly fits the logistic ranker on the survivors and removes
// the rfe_batch_size lowest-importance columns (binary |w|, multiclass
// Euclidean norm over class weights; ties drop the higher column first)
// until target_count remain. Scores are the importances from a final fit
// on the survivors. Throws TargetTooLarge / InvalidArgument.
SelectionManifest rfe(const SparseBinaryMatrix& X, std::span<const std::uint32_t> labels,
                      std::span<const std::string> classes, const RfeParams& params,
                      std::span<const FeatureGroup> groups = {});

struct SweepEntry {
  double percentage = 0;
  std::size_t count = 0;
  std::optional<double> balanced_accuracy;
  std::optional<std::string> error;
  std::vector<ColumnIndex> survivors;
};

struct SweepResult {
  std::vector<SweepEntry> entries;
  std::optional<std::size_t> best_count;  // highest balanced accuracy, ties to fewer columns
};

inline constexpr double kDefaultSweepPercentages[] = {1, 2, 3, 4, 5, 10, 20, 50, 70, 90};

// floor(p / 100 * n_columns)
std::size_t sweep_count(double percentage, std::size_t n_columns);

// For each percentage: RFE on the training rows, refit the logistic model
// on the survivors, record balanced accuracy on the evaluation rows.
// Per-entry failures are recorded and the sweep continues.
SweepResult rfe_sweep(const SparseBinaryMatrix& X_train, std::span<const std::uint32_t> y_train,
                      const SparseBinaryMatrix& X_eval, std::span<const std::uint32_t> y_eval,
                      std::span<const std::string> classes, std::span<const double> percentages,
                      double step_fraction, const LogRegHyper& hyper);

std::string sweep_to_json(const SweepResult& sweep);

// outer[inner[i]] for each i: maps a nested selection back to the columns
// of the outer matrix.
std::vector<ColumnIndex> compose_columns(std::span<const ColumnIndex> outer, std::span<const ColumnIndex> inner);

}  // namespace mlran
