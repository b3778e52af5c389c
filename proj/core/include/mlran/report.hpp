#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mlran {

// Keys of behavior.summary that feed feature extraction.
inline constexpr std::string_view kSummaryKeys[] = {
    "regkey_opened",     "regkey_deleted",       "regkey_read", "regkey_written",
    "file_created",      "file_deleted",         "file_written", "file_opened",
    "directory_created", "directory_enumerated", "dll_loaded",  "command_line",
    "mutex",             "guid",
};

struct DroppedFile {
  std::string extension;
  std::string type;

  bool operator==(const DroppedFile&) const = default;
};

struct NetworkActivity {
  std::vector<std::string> connects_ip;
  std::vector<std::string> connects_host;
  std::vector<std::string> resolves_host;

  bool operator==(const NetworkActivity&) const = default;
};

// Typed view of one behavioural report. Missing sections are empty.
struct SandboxReport {
  // process id -> API name -> call count
  std::map<std::string, std::map<std::string, std::uint64_t>> api_stats;
  // summary key (see kSummaryKeys) -> values; only non-empty keys are stored
  std::map<std::string, std::vector<std::string>> summary;
  std::vector<std::string> strings;
  NetworkActivity network;
  std::vector<DroppedFile> dropped;
  std::vector<std::string> signatures;

  bool operator==(const SandboxReport&) const = default;

  const std::vector<std::string>& summary_values(std::string_view key) const;
};

// Parses one report document. Throws MalformedDocument on a JSON syntax
// error; any well-formed document yields a report, with unrecognised or
// mistyped sections treated as absent.
SandboxReport parse_report(std::string_view document_text);

struct SkippedReport {
  std::string filename;
  std::string error;
};

struct LoadedReport {
  std::string sample_id;
  SandboxReport report;
};

struct ReportBatch {
  std::vector<LoadedReport> reports;  // ascending sample_id order
  std::vector<SkippedReport> skipped; // ascending filename order
};

// True when `filename` names a report: all digits, or ending in ".json".
bool is_report_filename(std::string_view filename);

// "<id>.json" -> "<id>", "<digits>" -> "<digits>".
std::string sample_id_from_filename(std::string_view filename);

// Ordering used for sample ids everywhere: all-digit ids first, compared
// numerically (ties such as "03" / "3" fall back to bytes), then the rest
// lexicographically by bytes.
bool sample_id_less(std::string_view a, std::string_view b);

// Loads every report file in `dir`. Malformed documents are collected in
// the skip list. Throws DirectoryNotFound, or DuplicateSampleId when two
// files map to the same id (e.g. "7" and "7.json").
ReportBatch load_report_dir(const std::filesystem::path& dir, unsigned threads = 1);

// Skip list as "<filename>\t<error>\n" lines. Tabs and newlines inside
// the error text are replaced by spaces.
std::string format_skip_list(const std::vector<SkippedReport>& skipped);

}  // namespace mlran
