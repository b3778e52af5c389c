#include "mlran/sparse_matrix.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "mlran/errors.hpp"

namespace mlran {

void SparseBinaryMatrix::add_row(std::string row_id, std::span<const ColumnIndex> active) {
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (active[i] >= n_cols_) {
      throw InvalidArgument("column " + std::to_string(active[i]) + " out of range for " +
                            std::to_string(n_cols_) + " columns");
    }
    if (i > 0 && active[i] <= active[i - 1]) {
      throw InvalidArgument("row '" + row_id + "' indices not strictly increasing");
    }
  }
  indices_.insert(indices_.end(), active.begin(), active.end());
  offsets_.push_back(indices_.size());
  row_ids_.push_back(std::move(row_id));
}

bool SparseBinaryMatrix::get(std::size_t r, ColumnIndex c) const noexcept {
  const auto active = row(r);
  return std::binary_search(active.begin(), active.end(), c);
}

std::vector<std::size_t> SparseBinaryMatrix::column_counts() const {
  std::vector<std::size_t> counts(n_cols_, 0);
  for (ColumnIndex c : indices_) ++counts[c];
  return counts;
}

SparseBinaryMatrix SparseBinaryMatrix::select_columns(std::span<const ColumnIndex> columns) const {
  constexpr ColumnIndex kDropped = ~ColumnIndex{0};
  std::vector<ColumnIndex> remap(n_cols_, kDropped);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] >= n_cols_ || (i > 0 && columns[i] <= columns[i - 1])) {
      throw InvalidArgument("select_columns: columns must be strictly increasing and in range");
    }
    remap[columns[i]] = static_cast<ColumnIndex>(i);
  }
  SparseBinaryMatrix out(columns.size());
  std::vector<ColumnIndex> buf;
  for (std::size_t r = 0; r < rows(); ++r) {
    buf.clear();
    for (ColumnIndex c : row(r)) {
      if (remap[c] != kDropped) buf.push_back(remap[c]);
    }
    out.add_row(row_ids_[r], buf);
  }
  return out;
}

SparseBinaryMatrix SparseBinaryMatrix::select_rows(std::span<const std::size_t> rows_to_keep) const {
  SparseBinaryMatrix out(n_cols_);
  for (std::size_t r : rows_to_keep) {
    if (r >= rows()) throw InvalidArgument("select_rows: row out of range");
    out.add_row(row_ids_[r], row(r));
  }
  return out;
}

std::string escape_field(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_field(std::string_view escaped) {
  std::string out;
  out.reserve(escaped.size());
  for (std::size_t i = 0; i < escaped.size(); ++i) {
    if (escaped[i] != '\\') {
      out.push_back(escaped[i]);
      continue;
    }
    if (++i == escaped.size()) throw FormatError("dangling escape");
    switch (escaped[i]) {
      case '\\': out.push_back('\\'); break;
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: throw FormatError(std::string("unknown escape \\") + escaped[i]);
    }
  }
  return out;
}

void write_mlrsparse(std::ostream& out, const SparseBinaryMatrix& m) {
  out << "MLRSPARSE v1 rows=" << m.rows() << " cols=" << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << escape_field(m.row_id(r)) << '\t';
    bool first = true;
    for (ColumnIndex c : m.row(r)) {
      if (!first) out << ',';
      out << c;
      first = false;
    }
    out << '\n';
  }
}

std::string to_mlrsparse(const SparseBinaryMatrix& m) {
  std::ostringstream ss;
  write_mlrsparse(ss, m);
  return ss.str();
}

namespace {

std::size_t parse_count(std::string_view text, std::string_view what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw FormatError("MLRSPARSE: bad " + std::string(what) + " '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

SparseBinaryMatrix read_mlrsparse(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("MLRSPARSE: missing header");
  constexpr std::string_view kMagic = "MLRSPARSE v1 rows=";
  std::string_view header = line;
  if (!header.starts_with(kMagic)) throw FormatError("MLRSPARSE: bad header '" + line + "'");
  header.remove_prefix(kMagic.size());
  const auto sep = header.find(" cols=");
  if (sep == std::string_view::npos) throw FormatError("MLRSPARSE: bad header '" + line + "'");
  const std::size_t n_rows = parse_count(header.substr(0, sep), "row count");
  const std::size_t n_cols = parse_count(header.substr(sep + 6), "column count");

  SparseBinaryMatrix m(n_cols);
  std::vector<ColumnIndex> active;
  for (std::size_t r = 0; r < n_rows; ++r) {
    if (!std::getline(in, line)) throw FormatError("MLRSPARSE: truncated at row " + std::to_string(r));
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("MLRSPARSE: row " + std::to_string(r) + " has no tab");
    active.clear();
    std::string_view rest = std::string_view(line).substr(tab + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto token = rest.substr(0, comma);
      const std::size_t idx = parse_count(token, "column index");
      active.push_back(static_cast<ColumnIndex>(idx));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
      if (rest.empty()) throw FormatError("MLRSPARSE: trailing comma at row " + std::to_string(r));
    }
    try {
      m.add_row(unescape_field(std::string_view(line).substr(0, tab)), active);
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("MLRSPARSE: ") + e.what());
    }
  }
  if (std::getline(in, line)) throw FormatError("MLRSPARSE: trailing data after declared rows");
  return m;
}

}  // namespace mlran
