#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mlran/report.hpp"
#include "mlran/sparse_matrix.hpp"

namespace mlran {

// The nine behavioural feature groups, in vocabulary order.
enum class FeatureGroup : std::uint8_t {
  Api,
  Registry,
  File,
  Directory,
  String,
  Network,
  System,
  Dropped,
  Signature,
};

inline constexpr std::size_t kFeatureGroupCount = 9;

inline constexpr std::array<FeatureGroup, kFeatureGroupCount> kAllFeatureGroups = {
    FeatureGroup::Api,     FeatureGroup::Registry, FeatureGroup::File,
    FeatureGroup::Directory, FeatureGroup::String, FeatureGroup::Network,
    FeatureGroup::System,  FeatureGroup::Dropped,  FeatureGroup::Signature,
};

// Short label used in reports: API, REG, FILE, DIR, STR, NET, SYS, DROP, SIG.
std::string_view group_label(FeatureGroup g);
// Leading token of canonical names: "API:", "REG:", ..., "SIGNATURE:".
std::string_view group_prefix(FeatureGroup g);
// Group owning a canonical name, from its prefix.
std::optional<FeatureGroup> group_of(std::string_view canonical);
std::optional<FeatureGroup> parse_group_label(std::string_view label);

struct FeatureName {
  FeatureGroup group{};
  std::string canonical;

  auto operator<=>(const FeatureName&) const = default;
};

// Sorted (group, canonical), duplicate-free.
using FeatureSet = std::vector<FeatureName>;

struct ExtractOptions {
  // Canonical names longer than this are cut and suffixed with
  // "…#<first 8 hex of sha256(full name)>" so they stay unique.
  std::size_t max_name_bytes = 4096;
};

// Applies the length cap from `opts` to an already prefixed name.
std::string cap_name_length(std::string canonical, std::size_t max_name_bytes);

FeatureSet extract_features(const SandboxReport& report, const ExtractOptions& opts = {});

class FeatureVocabulary {
 public:
  FeatureVocabulary() = default;

  // Builds from canonical names already in vocabulary order. Throws
  // FormatError on an unknown prefix, a duplicate, or out-of-order names.
  static FeatureVocabulary from_names(std::vector<std::string> canonical);

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(ColumnIndex c) const { return names_[c]; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  FeatureGroup group(ColumnIndex c) const;
  std::optional<ColumnIndex> find(std::string_view canonical) const;

  // Column count per group, indexed by FeatureGroup.
  const std::array<std::size_t, kFeatureGroupCount>& group_spans() const noexcept { return spans_; }
  // First column of a group; the group covers [begin, begin + span).
  std::size_t group_begin(FeatureGroup g) const noexcept;

  bool operator==(const FeatureVocabulary& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, ColumnIndex> index_;
  std::array<std::size_t, kFeatureGroupCount> spans_{};
};

// Union of the feature sets, ordered group-major then bytewise. Throws
// EmptyTrainingSet when there are no reports.
FeatureVocabulary build_vocabulary(std::span<const LoadedReport> train, const ExtractOptions& opts = {},
                                   unsigned threads = 1);
FeatureVocabulary build_vocabulary_from_sets(std::span<const FeatureSet> train);

// Active columns of a report; names outside the vocabulary are dropped.
std::vector<ColumnIndex> vectorize(const SandboxReport& report, const FeatureVocabulary& vocab,
                                   const ExtractOptions& opts = {});
std::vector<ColumnIndex> vectorize_set(const FeatureSet& features, const FeatureVocabulary& vocab);

// One row per report, in input order.
SparseBinaryMatrix assemble_matrix(std::span<const LoadedReport> reports, const FeatureVocabulary& vocab,
                                   const ExtractOptions& opts = {}, unsigned threads = 1);

// One escaped canonical name per line, in column order.
void write_vocabulary(std::ostream& out, const FeatureVocabulary& vocab);
std::string to_vocabulary_text(const FeatureVocabulary& vocab);
FeatureVocabulary read_vocabulary(std::istream& in);

}  // namespace mlran
