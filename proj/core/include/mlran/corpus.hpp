#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlran/sparse_matrix.hpp"

namespace mlran {

enum class Label { Goodware, Ransomware };
enum class RansomwareType { Locker, Crypto, Raas, Modern };

std::string_view to_string(Label l);
std::string_view to_string(RansomwareType t);
std::optional<Label> parse_label(std::string_view s);
std::optional<RansomwareType> parse_ransomware_type(std::string_view s);

using Date = std::chrono::year_month_day;

// Strict "YYYY-MM-DD"; nullopt if malformed or not a calendar date.
std::optional<Date> parse_iso_date(std::string_view s);
std::string format_iso_date(Date d);

struct SampleMetadata {
  std::string sample_id;
  std::string sha256;
  Label label = Label::Goodware;
  std::optional<RansomwareType> ransomware_type;
  std::optional<std::string> family;
  std::optional<Date> first_submission;
  std::string source;

  bool operator==(const SampleMetadata&) const = default;
};

inline constexpr std::string_view kMetadataHeader =
    "sample_id,sha256,label,ransomware_type,family,first_submission,source";

// Parses the metadata CSV (plain comma separation, no quoting). Throws
// SchemaMismatch for header or field violations and BadDate for an
// unparseable timestamp; messages start with "row N:" (1-based line).
std::vector<SampleMetadata> parse_metadata(std::istream& in);
std::vector<SampleMetadata> load_metadata(const std::filesystem::path& table_path);
void write_metadata(std::ostream& out, std::span<const SampleMetadata> rows);

// Stratum key for splitting: "goodware", a ransomware type name, or
// "ransomware" for untyped ransomware.
std::string stratum_of(const SampleMetadata& m);

struct StratumSplit {
  std::string stratum;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

struct SplitPlan {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  double ratio = 0.8;
  std::vector<StratumSplit> strata;      // sorted by stratum name
  std::vector<std::string> excluded_ids; // records without a timestamp
  std::vector<std::string> warnings;     // e.g. strata too small to split
};

// Per stratum: sort by (first_submission, sample_id) and send the first
// floor(ratio * n) records to train, the rest to test. Strata with fewer
// than two records stay entirely in train with a warning. Records lacking
// first_submission are excluded. Throws InvalidArgument unless 0 < ratio < 1.
SplitPlan time_aware_split(std::span<const SampleMetadata> meta, double ratio);

// Two sections, each a header line then one escaped id per line:
//   [train]\n<ids...>\n[test]\n<ids...>
void write_split(std::ostream& out, const SplitPlan& plan);
SplitPlan read_split(std::istream& in);

enum class Task { Binary, Type, Family };
std::string_view to_string(Task t);
std::optional<Task> parse_task(std::string_view s);

struct LabeledDataset {
  SparseBinaryMatrix matrix;
  std::vector<std::uint32_t> labels;
  std::vector<SampleMetadata> meta;
  std::vector<std::string> class_names;
};

// Class names for a task: binary [goodware, ransomware]; type adds the four
// ransomware types after goodware; family has goodware then every family in
// `meta`, sorted.
std::vector<std::string> class_names_for(Task task, std::span<const SampleMetadata> meta);

// Joins matrix rows to metadata by sample id. Rows that cannot be labelled
// for the task (untyped ransomware in the type task, family-less ransomware
// in the family task) are dropped. Throws SchemaMismatch when a row id has
// no metadata record.
LabeledDataset make_dataset(const SparseBinaryMatrix& matrix, std::span<const SampleMetadata> meta, Task task,
                            std::span<const std::string> class_names);

}  // namespace mlran
