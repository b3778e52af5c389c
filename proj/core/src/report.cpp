#include "mlran/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "mlran/errors.hpp"
#include "mlran/parallel.hpp"

namespace mlran {

using nlohmann::json;

namespace {

const json* member(const json& obj, std::string_view key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

// Appends every string element of an array (or a lone string) to `out`.
// Non-string elements are ignored.
void append_strings(const json* node, std::vector<std::string>& out) {
  if (node == nullptr) return;
  if (node->is_string()) {
    out.push_back(node->get<std::string>());
    return;
  }
  if (!node->is_array()) return;
  for (const auto& v : *node) {
    if (v.is_string()) out.push_back(v.get<std::string>());
  }
}

std::uint64_t call_count(const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) return static_cast<std::uint64_t>(std::max<std::int64_t>(0, v.get<std::int64_t>()));
  if (v.is_number_float()) {
    const double d = v.get<double>();
    return d > 0 && std::isfinite(d) ? static_cast<std::uint64_t>(d) : 0;
  }
  return 0;
}

void parse_api_stats(const json* apistats, SandboxReport& out) {
  if (apistats == nullptr || !apistats->is_object()) return;
  for (const auto& [pid, calls] : apistats->items()) {
    if (!calls.is_object()) continue;
    auto& dst = out.api_stats[pid];
    for (const auto& [api, count] : calls.items()) dst[api] = call_count(count);
  }
}

void parse_summary(const json* summary, SandboxReport& out) {
  if (summary == nullptr || !summary->is_object()) return;
  for (std::string_view key : kSummaryKeys) {
    std::vector<std::string> values;
    append_strings(member(*summary, key), values);
    if (!values.empty()) out.summary.emplace(std::string(key), std::move(values));
  }
}

void parse_network(const json& root, SandboxReport& out) {
  // Cuckoo 1.x reports these under "network"; 2.x moved them into
  // behavior.summary. Both locations are read.
  const json* sources[] = {member(root, "network"), nullptr};
  if (const json* behavior = member(root, "behavior")) sources[1] = member(*behavior, "summary");
  for (const json* src : sources) {
    if (src == nullptr) continue;
    append_strings(member(*src, "connects_ip"), out.network.connects_ip);
    append_strings(member(*src, "connects_host"), out.network.connects_host);
    append_strings(member(*src, "resolves_host"), out.network.resolves_host);
  }
}

void parse_dropped(const json* dropped, SandboxReport& out) {
  if (dropped == nullptr || !dropped->is_array()) return;
  for (const auto& entry : *dropped) {
    if (!entry.is_object()) continue;
    DroppedFile file;
    if (const json* e = member(entry, "extension"); e && e->is_string()) file.extension = e->get<std::string>();
    if (const json* t = member(entry, "type"); t && t->is_string()) file.type = t->get<std::string>();
    if (!file.extension.empty() || !file.type.empty()) out.dropped.push_back(std::move(file));
  }
}

void parse_signatures(const json* signatures, SandboxReport& out) {
  if (signatures == nullptr || !signatures->is_array()) return;
  for (const auto& sig : *signatures) {
    if (sig.is_string()) {
      out.signatures.push_back(sig.get<std::string>());
    } else if (const json* name = member(sig, "name"); name && name->is_string()) {
      out.signatures.push_back(name->get<std::string>());
    }
  }
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const std::vector<std::string>& SandboxReport::summary_values(std::string_view key) const {
  static const std::vector<std::string> kEmpty;
  auto it = summary.find(std::string(key));
  return it == summary.end() ? kEmpty : it->second;
}

SandboxReport parse_report(std::string_view document_text) {
  json root;
  try {
    root = json::parse(document_text.begin(), document_text.end());
  } catch (const json::parse_error& e) {
    throw MalformedDocument(e.what());
  }

  SandboxReport out;
  if (const json* behavior = member(root, "behavior")) {
    parse_api_stats(member(*behavior, "apistats"), out);
    parse_summary(member(*behavior, "summary"), out);
  }
  append_strings(member(root, "strings"), out.strings);
  parse_network(root, out);
  parse_dropped(member(root, "dropped"), out);
  parse_signatures(member(root, "signatures"), out);
  return out;
}

bool is_report_filename(std::string_view filename) {
  constexpr std::string_view kSuffix = ".json";
  if (all_digits(filename)) return true;
  return filename.size() > kSuffix.size() && filename.ends_with(kSuffix);
}

std::string sample_id_from_filename(std::string_view filename) {
  constexpr std::string_view kSuffix = ".json";
  if (filename.ends_with(kSuffix)) filename.remove_suffix(kSuffix.size());
  return std::string(filename);
}

bool sample_id_less(std::string_view a, std::string_view b) {
  const bool da = all_digits(a);
  const bool db = all_digits(b);
  if (da != db) return da;
  if (da) {
    auto strip = [](std::string_view s) {
      const auto nz = s.find_first_not_of('0');
      return nz == std::string_view::npos ? std::string_view{} : s.substr(nz);
    };
    const auto sa = strip(a);
    const auto sb = strip(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    if (sa != sb) return sa < sb;
  }
  return a < b;
}

ReportBatch load_report_dir(const std::filesystem::path& dir, unsigned threads) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw DirectoryNotFound("report directory not found: " + dir.string());
  }

  struct Candidate {
    std::string filename;
    std::string sample_id;
  };
  std::vector<Candidate> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (!is_report_filename(name)) continue;
    std::string id = sample_id_from_filename(name);
    files.push_back({std::move(name), std::move(id)});
  }
  std::sort(files.begin(), files.end(), [](const Candidate& x, const Candidate& y) {
    if (x.sample_id != y.sample_id) return sample_id_less(x.sample_id, y.sample_id);
    return x.filename < y.filename;
  });
  for (std::size_t i = 1; i < files.size(); ++i) {
    if (files[i].sample_id == files[i - 1].sample_id) {
      throw DuplicateSampleId("sample id '" + files[i].sample_id + "' claimed by both '" +
                              files[i - 1].filename + "' and '" + files[i].filename + "'");
    }
  }

  std::vector<std::optional<SandboxReport>> parsed(files.size());
  std::vector<std::string> errors(files.size());
  parallel_for(files.size(), threads, [&](std::size_t i) {
    try {
      parsed[i] = parse_report(read_file(dir / files[i].filename));
    } catch (const MalformedDocument& e) {
      errors[i] = e.what();
    }
  });

  ReportBatch batch;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (parsed[i]) {
      batch.reports.push_back({files[i].sample_id, std::move(*parsed[i])});
    } else {
      batch.skipped.push_back({files[i].filename, std::move(errors[i])});
    }
  }
  std::sort(batch.skipped.begin(), batch.skipped.end(),
            [](const SkippedReport& x, const SkippedReport& y) { return x.filename < y.filename; });
  return batch;
}

std::string format_skip_list(const std::vector<SkippedReport>& skipped) {
  auto clean = [](std::string s) {
    std::replace_if(s.begin(), s.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; }, ' ');
    return s;
  };
  std::string out;
  for (const auto& s : skipped) {
    out += clean(s.filename);
    out += '\t';
    out += clean(s.error);
    out += '\n';
  }
  return out;
}

}  // namespace mlran
