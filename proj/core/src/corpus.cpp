#include "mlran/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "mlran/errors.hpp"

namespace mlran {

namespace {

constexpr std::string_view kLabelNames[] = {"goodware", "ransomware"};
constexpr std::string_view kTypeNames[] = {"locker", "crypto", "raas", "modern"};
constexpr std::string_view kTaskNames[] = {"binary", "type", "family"};

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool is_hex(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
  });
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::string_view to_string(Label l) { return kLabelNames[static_cast<int>(l)]; }
std::string_view to_string(RansomwareType t) { return kTypeNames[static_cast<int>(t)]; }
std::string_view to_string(Task t) { return kTaskNames[static_cast<int>(t)]; }

std::optional<Label> parse_label(std::string_view s) {
  for (int i = 0; i < 2; ++i) {
    if (kLabelNames[i] == s) return static_cast<Label>(i);
  }
  return std::nullopt;
}

std::optional<RansomwareType> parse_ransomware_type(std::string_view s) {
  for (int i = 0; i < 4; ++i) {
    if (kTypeNames[i] == s) return static_cast<RansomwareType>(i);
  }
  return std::nullopt;
}

std::optional<Task> parse_task(std::string_view s) {
  for (int i = 0; i < 3; ++i) {
    if (kTaskNames[i] == s) return static_cast<Task>(i);
  }
  return std::nullopt;
}

std::optional<Date> parse_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto digits = [&](std::size_t from, std::size_t len) -> std::optional<int> {
    int v = 0;
    for (std::size_t i = from; i < from + len; ++i) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  const auto y = digits(0, 4);
  const auto m = digits(5, 2);
  const auto d = digits(8, 2);
  if (!y || !m || !d) return std::nullopt;
  const Date date{std::chrono::year{*y}, std::chrono::month{static_cast<unsigned>(*m)},
                  std::chrono::day{static_cast<unsigned>(*d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::string format_iso_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()));
  return buf;
}

std::vector<SampleMetadata> parse_metadata(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch("row 1: metadata table is empty; expected header");
  strip_cr(line);
  if (line != kMetadataHeader) {
    throw SchemaMismatch("row 1: header must be '" + std::string(kMetadataHeader) + "', got '" + line + "'");
  }

  std::vector<SampleMetadata> rows;
  std::unordered_set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    auto schema = [&](const std::string& what) { return SchemaMismatch("row " + std::to_string(lineno) + ": " + what); };
    if (fields.size() != 7) throw schema("expected 7 fields, got " + std::to_string(fields.size()));

    SampleMetadata m;
    m.sample_id = fields[0];
    if (m.sample_id.empty()) throw schema("empty sample_id");
    if (!seen.insert(m.sample_id).second) throw schema("duplicate sample_id '" + m.sample_id + "'");
    if (!is_hex(fields[1])) throw schema("sha256 must be a hex string");
    m.sha256 = fields[1];
    const auto label = parse_label(fields[2]);
    if (!label) throw schema("unknown label '" + std::string(fields[2]) + "'");
    m.label = *label;
    if (!fields[3].empty()) {
      m.ransomware_type = parse_ransomware_type(fields[3]);
      if (!m.ransomware_type) throw schema("unknown ransomware_type '" + std::string(fields[3]) + "'");
    }
    if (!fields[4].empty()) m.family = std::string(fields[4]);
    if (m.label == Label::Goodware && (m.ransomware_type || m.family)) {
      throw schema("goodware rows must leave ransomware_type and family empty");
    }
    if (!fields[5].empty()) {
      m.first_submission = parse_iso_date(fields[5]);
      if (!m.first_submission) {
        throw BadDate("row " + std::to_string(lineno) + ": unparseable first_submission '" +
                      std::string(fields[5]) + "'");
      }
    }
    m.source = fields[6];
    rows.push_back(std::move(m));
  }
  return rows;
}

std::vector<SampleMetadata> load_metadata(const std::filesystem::path& table_path) {
  std::ifstream in(table_path, std::ios::binary);
  if (!in) throw Error("cannot open metadata table " + table_path.string());
  return parse_metadata(in);
}

void write_metadata(std::ostream& out, std::span<const SampleMetadata> rows) {
  out << kMetadataHeader << '\n';
  for (const auto& m : rows) {
    out << m.sample_id << ',' << m.sha256 << ',' << to_string(m.label) << ','
        << (m.ransomware_type ? to_string(*m.ransomware_type) : std::string_view{}) << ','
        << m.family.value_or("") << ',' << (m.first_submission ? format_iso_date(*m.first_submission) : "")
        << ',' << m.source << '\n';
  }
}

std::string stratum_of(const SampleMetadata& m) {
  if (m.label == Label::Goodware) return "goodware";
  return m.ransomware_type ? std::string(to_string(*m.ransomware_type)) : "ransomware";
}

SplitPlan time_aware_split(std::span<const SampleMetadata> meta, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("split ratio must lie in (0, 1)");

  SplitPlan plan;
  plan.ratio = ratio;
  std::map<std::string, std::vector<const SampleMetadata*>> strata;
  for (const auto& m : meta) {
    if (!m.first_submission) {
      plan.excluded_ids.push_back(m.sample_id);
      continue;
    }
    strata[stratum_of(m)].push_back(&m);
  }

  for (auto& [name, members] : strata) {
    std::sort(members.begin(), members.end(), [](const SampleMetadata* a, const SampleMetadata* b) {
      if (*a->first_submission != *b->first_submission) return *a->first_submission < *b->first_submission;
      return a->sample_id < b->sample_id;
    });
    const std::size_t n = members.size();
    std::size_t n_train = n;
    if (n < 2) {
      plan.warnings.push_back("stratum '" + name + "' has " + std::to_string(n) + " sample(s); kept in train");
    } else {
      // the epsilon absorbs representation error such as 0.29 * 100 = 28.999...
      n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
    }
    for (std::size_t i = 0; i < n; ++i) {
      (i < n_train ? plan.train_ids : plan.test_ids).push_back(members[i]->sample_id);
    }
    plan.strata.push_back({name, n_train, n - n_train});
  }
  return plan;
}

void write_split(std::ostream& out, const SplitPlan& plan) {
  out << "[train]\n";
  for (const auto& id : plan.train_ids) out << escape_field(id) << '\n';
  out << "[test]\n";
  for (const auto& id : plan.test_ids) out << escape_field(id) << '\n';
}

SplitPlan read_split(std::istream& in) {
  SplitPlan plan;
  std::string line;
  std::vector<std::string>* section = nullptr;
  bool saw_test = false;
  while (std::getline(in, line)) {
    if (line == "[train]" && section == nullptr) {
      section = &plan.train_ids;
    } else if (line == "[test]" && section == &plan.train_ids) {
      section = &plan.test_ids;
      saw_test = true;
    } else if (section == nullptr) {
      throw FormatError("split file must start with [train]");
    } else {
      section->push_back(unescape_field(line));
    }
  }
  if (!saw_test) throw FormatError("split file lacks a [test] section");
  return plan;
}

std::vector<std::string> class_names_for(Task task, std::span<const SampleMetadata> meta) {
  switch (task) {
    case Task::Binary:
      return {"goodware", "ransomware"};
    case Task::Type:
      return {"goodware", "locker", "crypto", "raas", "modern"};
    case Task::Family: {
      std::vector<std::string> families;
      for (const auto& m : meta) {
        if (m.family) families.push_back(*m.family);
      }
      std::sort(families.begin(), families.end());
      families.erase(std::unique(families.begin(), families.end()), families.end());
      families.insert(families.begin(), "goodware");
      return families;
    }
  }
  return {};
}

LabeledDataset make_dataset(const SparseBinaryMatrix& matrix, std::span<const SampleMetadata> meta, Task task,
                            std::span<const std::string> class_names) {
  std::unordered_map<std::string_view, const SampleMetadata*> by_id;
  for (const auto& m : meta) by_id.emplace(m.sample_id, &m);
  std::unordered_map<std::string_view, std::uint32_t> class_index;
  for (std::size_t i = 0; i < class_names.size(); ++i) class_index.emplace(class_names[i], static_cast<std::uint32_t>(i));

  LabeledDataset ds;
  ds.class_names.assign(class_names.begin(), class_names.end());
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    auto it = by_id.find(matrix.row_id(r));
    if (it == by_id.end()) throw SchemaMismatch("no metadata for sample '" + matrix.row_id(r) + "'");
    const SampleMetadata& m = *it->second;
    std::optional<std::string_view> cls;
    if (m.label == Label::Goodware) {
      cls = "goodware";
    } else if (task == Task::Binary) {
      cls = "ransomware";
    } else if (task == Task::Type && m.ransomware_type) {
      cls = to_string(*m.ransomware_type);
    } else if (task == Task::Family && m.family) {
      cls = *m.family;
    }
    if (!cls) continue;
    auto ci = class_index.find(*cls);
    if (ci == class_index.end()) throw SchemaMismatch("class '" + std::string(*cls) + "' not in class list");
    keep.push_back(r);
    ds.labels.push_back(ci->second);
    ds.meta.push_back(m);
  }
  ds.matrix = keep.size() == matrix.rows() ? matrix : matrix.select_rows(keep);
  return ds;
}

}  // namespace mlran
