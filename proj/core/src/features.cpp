#include "mlran/features.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include "mlran/digest.hpp"
#include "mlran/errors.hpp"
#include "mlran/parallel.hpp"

namespace mlran {

namespace {

constexpr std::array<std::string_view, kFeatureGroupCount> kLabels = {
    "API", "REG", "FILE", "DIR", "STR", "NET", "SYS", "DROP", "SIG"};
constexpr std::array<std::string_view, kFeatureGroupCount> kPrefixes = {
    "API:", "REG:", "FILE:", "DIRECTORY:", "STRING:", "NETWORK:", "SYSTEM:", "DROP:", "SIGNATURE:"};

struct SummaryRule {
  std::string_view key;
  FeatureGroup group;
  std::string_view action;
};

constexpr SummaryRule kSummaryRules[] = {
    {"regkey_opened", FeatureGroup::Registry, "OPENED"},
    {"regkey_deleted", FeatureGroup::Registry, "DELETED"},
    {"regkey_read", FeatureGroup::Registry, "READ"},
    {"regkey_written", FeatureGroup::Registry, "WRITTEN"},
    {"file_created", FeatureGroup::File, "CREATED"},
    {"file_deleted", FeatureGroup::File, "DELETED"},
    {"file_written", FeatureGroup::File, "WRITTEN"},
    {"file_opened", FeatureGroup::File, "OPENED"},
    {"directory_created", FeatureGroup::Directory, "CREATED"},
    {"directory_enumerated", FeatureGroup::Directory, "ENUMERATED"},
    {"dll_loaded", FeatureGroup::System, "DLL_LOADED"},
    {"command_line", FeatureGroup::System, "COMMAND_LINE"},
    {"mutex", FeatureGroup::System, "MUTEX"},
    {"guid", FeatureGroup::System, "GUID"},
};

constexpr std::size_t kMinCap = 32;

class SetBuilder {
 public:
  explicit SetBuilder(const ExtractOptions& opts) : opts_(opts) {}

  void add(FeatureGroup g, std::string_view action, std::string_view value) {
    std::string name(group_prefix(g));
    if (!action.empty()) {
      name += action;
      name += ':';
    }
    name += value;
    out_.push_back({g, cap_name_length(std::move(name), opts_.max_name_bytes)});
  }

  FeatureSet finish() && {
    std::sort(out_.begin(), out_.end());
    out_.erase(std::unique(out_.begin(), out_.end()), out_.end());
    return std::move(out_);
  }

 private:
  const ExtractOptions& opts_;
  FeatureSet out_;
};

}  // namespace

std::string_view group_label(FeatureGroup g) { return kLabels[static_cast<std::size_t>(g)]; }
std::string_view group_prefix(FeatureGroup g) { return kPrefixes[static_cast<std::size_t>(g)]; }

std::optional<FeatureGroup> group_of(std::string_view canonical) {
  for (FeatureGroup g : kAllFeatureGroups) {
    if (canonical.starts_with(group_prefix(g))) return g;
  }
  return std::nullopt;
}

std::optional<FeatureGroup> parse_group_label(std::string_view label) {
  for (FeatureGroup g : kAllFeatureGroups) {
    if (group_label(g) == label) return g;
  }
  return std::nullopt;
}

std::string cap_name_length(std::string canonical, std::size_t max_name_bytes) {
  max_name_bytes = std::max(max_name_bytes, kMinCap);
  if (canonical.size() <= max_name_bytes) return canonical;
  const std::string suffix = "\xE2\x80\xA6#" + sha256_hex(canonical).substr(0, 8);
  std::size_t keep = max_name_bytes - suffix.size();
  // do not split a UTF-8 sequence
  while (keep > 0 && (static_cast<unsigned char>(canonical[keep]) & 0xC0) == 0x80) --keep;
  canonical.resize(keep);
  canonical += suffix;
  return canonical;
}

FeatureSet extract_features(const SandboxReport& report, const ExtractOptions& opts) {
  SetBuilder b(opts);
  for (const auto& [pid, calls] : report.api_stats) {
    for (const auto& [api, count] : calls) b.add(FeatureGroup::Api, {}, api);
  }
  for (const auto& rule : kSummaryRules) {
    for (const auto& v : report.summary_values(rule.key)) b.add(rule.group, rule.action, v);
  }
  for (const auto& s : report.strings) b.add(FeatureGroup::String, {}, s);
  for (const auto& v : report.network.connects_ip) b.add(FeatureGroup::Network, "CONNECTS_IP", v);
  for (const auto& v : report.network.connects_host) b.add(FeatureGroup::Network, "CONNECTS_HOST", v);
  for (const auto& v : report.network.resolves_host) b.add(FeatureGroup::Network, "RESOLVES_HOST", v);
  for (const auto& d : report.dropped) {
    if (!d.extension.empty()) b.add(FeatureGroup::Dropped, "EXTENSION", d.extension);
    if (!d.type.empty()) b.add(FeatureGroup::Dropped, "TYPE", d.type);
  }
  for (const auto& s : report.signatures) b.add(FeatureGroup::Signature, {}, s);
  return std::move(b).finish();
}

FeatureVocabulary FeatureVocabulary::from_names(std::vector<std::string> canonical) {
  FeatureVocabulary v;
  v.index_.reserve(canonical.size());
  std::optional<FeatureName> prev;
  for (std::size_t i = 0; i < canonical.size(); ++i) {
    const auto g = group_of(canonical[i]);
    if (!g) throw FormatError("vocabulary: unknown group prefix in '" + canonical[i] + "'");
    FeatureName cur{*g, canonical[i]};
    if (prev && !(*prev < cur)) {
      throw FormatError("vocabulary: name " + std::to_string(i) + " is out of order or duplicated");
    }
    ++v.spans_[static_cast<std::size_t>(*g)];
    v.index_.emplace(canonical[i], static_cast<ColumnIndex>(i));
    prev = std::move(cur);
  }
  v.names_ = std::move(canonical);
  return v;
}

FeatureGroup FeatureVocabulary::group(ColumnIndex c) const {
  std::size_t end = 0;
  for (FeatureGroup g : kAllFeatureGroups) {
    end += spans_[static_cast<std::size_t>(g)];
    if (c < end) return g;
  }
  throw InvalidArgument("column " + std::to_string(c) + " outside vocabulary");
}

std::optional<ColumnIndex> FeatureVocabulary::find(std::string_view canonical) const {
  auto it = index_.find(std::string(canonical));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t FeatureVocabulary::group_begin(FeatureGroup g) const noexcept {
  std::size_t begin = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(g); ++i) begin += spans_[i];
  return begin;
}

FeatureVocabulary build_vocabulary_from_sets(std::span<const FeatureSet> train) {
  if (train.empty()) throw EmptyTrainingSet("cannot build a vocabulary from zero training reports");
  FeatureSet all;
  for (const auto& s : train) all.insert(all.end(), s.begin(), s.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<std::string> names;
  names.reserve(all.size());
  for (auto& f : all) names.push_back(std::move(f.canonical));
  return FeatureVocabulary::from_names(std::move(names));
}

FeatureVocabulary build_vocabulary(std::span<const LoadedReport> train, const ExtractOptions& opts,
                                   unsigned threads) {
  if (train.empty()) throw EmptyTrainingSet("cannot build a vocabulary from zero training reports");
  std::vector<FeatureSet> sets(train.size());
  parallel_for(train.size(), threads, [&](std::size_t i) { sets[i] = extract_features(train[i].report, opts); });
  return build_vocabulary_from_sets(sets);
}

std::vector<ColumnIndex> vectorize_set(const FeatureSet& features, const FeatureVocabulary& vocab) {
  std::vector<ColumnIndex> active;
  active.reserve(features.size());
  for (const auto& f : features) {
    if (auto c = vocab.find(f.canonical)) active.push_back(*c);
  }
  std::sort(active.begin(), active.end());
  return active;
}

std::vector<ColumnIndex> vectorize(const SandboxReport& report, const FeatureVocabulary& vocab,
                                   const ExtractOptions& opts) {
  return vectorize_set(extract_features(report, opts), vocab);
}

SparseBinaryMatrix assemble_matrix(std::span<const LoadedReport> reports, const FeatureVocabulary& vocab,
                                   const ExtractOptions& opts, unsigned threads) {
  std::vector<std::vector<ColumnIndex>> rows(reports.size());
  parallel_for(reports.size(), threads, [&](std::size_t i) { rows[i] = vectorize(reports[i].report, vocab, opts); });
  SparseBinaryMatrix m(vocab.size());
  for (std::size_t i = 0; i < reports.size(); ++i) m.add_row(reports[i].sample_id, rows[i]);
  return m;
}

void write_vocabulary(std::ostream& out, const FeatureVocabulary& vocab) {
  for (const auto& n : vocab.names()) out << escape_field(n) << '\n';
}

std::string to_vocabulary_text(const FeatureVocabulary& vocab) {
  std::ostringstream ss;
  write_vocabulary(ss, vocab);
  return ss.str();
}

FeatureVocabulary read_vocabulary(std::istream& in) {
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) names.push_back(unescape_field(line));
  return FeatureVocabulary::from_names(std::move(names));
}

}  // namespace mlran
