#include "mlran/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mlran/errors.hpp"

namespace mlran {

namespace {

struct Value {
  enum class Kind { String, Number, Bool, Array } kind = Kind::String;
  std::string text;
  double number = 0;
  bool flag = false;
  std::vector<double> array;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::string buf(s);
  std::erase(buf, '_');
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Strips a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && quoted) {
      ++i;
    } else if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

std::optional<Value> parse_value(std::string_view raw) {
  raw = trim(raw);
  Value v;
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    v.kind = Value::Kind::String;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 2 < raw.size()) {
        const char e = raw[++i];
        v.text += e == 'n' ? '\n' : e == 't' ? '\t' : e;
      } else {
        v.text += raw[i];
      }
    }
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.kind = Value::Kind::Bool;
    v.flag = raw == "true";
    return v;
  }
  if (raw.size() >= 2 && raw.front() == '[' && raw.back() == ']') {
    v.kind = Value::Kind::Array;
    std::string_view body = trim(raw.substr(1, raw.size() - 2));
    while (!body.empty()) {
      const auto comma = body.find(',');
      const auto item = parse_number(body.substr(0, comma));
      if (!item) return std::nullopt;
      v.array.push_back(*item);
      if (comma == std::string_view::npos) break;
      body = trim(body.substr(comma + 1));
    }
    return v;
  }
  if (auto n = parse_number(raw)) {
    v.kind = Value::Kind::Number;
    v.number = *n;
    v.text = std::string(raw);
    return v;
  }
  return std::nullopt;
}

std::string expect_string(const std::string& key, const Value& v) {
  if (v.kind != Value::Kind::String) throw InvalidArgument(key + " must be a string");
  return v.text;
}
double expect_number(const std::string& key, const Value& v) {
  if (v.kind != Value::Kind::Number) throw InvalidArgument(key + " must be a number");
  return v.number;
}
std::size_t expect_count(const std::string& key, const Value& v) {
  const double d = expect_number(key, v);
  if (d < 0 || d != std::floor(d)) throw InvalidArgument(key + " must be a non-negative integer");
  return static_cast<std::size_t>(d);
}
bool expect_bool(const std::string& key, const Value& v) {
  if (v.kind != Value::Kind::Bool) throw InvalidArgument(key + " must be true or false");
  return v.flag;
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const Value&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"reports_dir", [](auto& c, auto& k, auto& v) { c.reports_dir = expect_string(k, v); }},
      {"metadata_path", [](auto& c, auto& k, auto& v) { c.metadata_path = expect_string(k, v); }},
      {"output_dir", [](auto& c, auto& k, auto& v) { c.output_dir = expect_string(k, v); }},
      {"run_id", [](auto& c, auto& k, auto& v) { c.run_id = expect_string(k, v); }},
      {"task",
       [](auto& c, auto& k, auto& v) {
         const auto t = parse_task(expect_string(k, v));
         if (!t) throw InvalidArgument("task must be binary, type or family");
         c.task = *t;
       }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = expect_count(k, v); }},
      {"threads", [](auto& c, auto& k, auto& v) { c.threads = static_cast<unsigned>(expect_count(k, v)); }},
      {"max_name_bytes", [](auto& c, auto& k, auto& v) { c.max_name_bytes = expect_count(k, v); }},
      {"split.ratio", [](auto& c, auto& k, auto& v) { c.split.ratio = expect_number(k, v); }},
      {"split.paper_protocol", [](auto& c, auto& k, auto& v) { c.split.paper_protocol = expect_bool(k, v); }},
      {"split.validation_ratio", [](auto& c, auto& k, auto& v) { c.split.validation_ratio = expect_number(k, v); }},
      {"selection.stage1_method", [](auto& c, auto& k, auto& v) { c.selection.stage1_method = expect_string(k, v); }},
      {"selection.stage1_threshold",
       [](auto& c, auto& k, auto& v) { c.selection.stage1_threshold = expect_number(k, v); }},
      {"selection.stage2", [](auto& c, auto& k, auto& v) { c.selection.stage2 = expect_string(k, v); }},
      {"selection.stage2_target", [](auto& c, auto& k, auto& v) { c.selection.stage2_target = expect_count(k, v); }},
      {"selection.sweep_percentages",
       [](auto& c, auto& k, auto& v) {
         if (v.kind != Value::Kind::Array) throw InvalidArgument(k + " must be an array of numbers");
         c.selection.sweep_percentages = v.array;
       }},
      {"selection.rfe_step", [](auto& c, auto& k, auto& v) { c.selection.rfe_step = expect_number(k, v); }},
      {"model.variant",
       [](auto& c, auto& k, auto& v) {
         const auto m = parse_model_variant(expect_string(k, v));
         if (!m) throw InvalidArgument("unknown model.variant");
         c.model.variant = *m;
       }},
      {"model.grid", [](auto& c, auto& k, auto& v) { c.model.grid = expect_bool(k, v); }},
      {"model.C", [](auto& c, auto& k, auto& v) { c.model.C = expect_number(k, v); }},
      {"model.tol", [](auto& c, auto& k, auto& v) { c.model.tol = expect_number(k, v); }},
      {"model.max_iter", [](auto& c, auto& k, auto& v) { c.model.max_iter = expect_count(k, v); }},
      {"model.n_estimators", [](auto& c, auto& k, auto& v) { c.model.n_estimators = expect_count(k, v); }},
      {"model.max_depth", [](auto& c, auto& k, auto& v) { c.model.max_depth = expect_count(k, v); }},
      {"model.min_samples_split", [](auto& c, auto& k, auto& v) { c.model.min_samples_split = expect_count(k, v); }},
      {"explain.top_n", [](auto& c, auto& k, auto& v) { c.explain.top_n = expect_count(k, v); }},
      {"explain.lime_samples", [](auto& c, auto& k, auto& v) { c.explain.lime_samples = expect_count(k, v); }},
      {"explain.lime_top_k", [](auto& c, auto& k, auto& v) { c.explain.lime_top_k = expect_count(k, v); }},
      {"explain.lime_instances", [](auto& c, auto& k, auto& v) { c.explain.lime_instances = expect_count(k, v); }},
      {"explain.lime_ridge", [](auto& c, auto& k, auto& v) { c.explain.lime_ridge = expect_number(k, v); }},
      {"explain.lime_kernel_width",
       [](auto& c, auto& k, auto& v) { c.explain.lime_kernel_width = expect_number(k, v); }},
  };
  return table;
}

void set_key(PipelineConfig& cfg, const std::string& key, const Value& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw InvalidArgument("unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

}  // namespace

PipelineConfig parse_config(std::string_view text) {
  PipelineConfig cfg;
  std::string section;
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(strip_comment(line));
    if (body.empty()) continue;
    try {
      if (body.front() == '[') {
        if (body.back() != ']') throw InvalidArgument("unterminated section header");
        section = std::string(trim(body.substr(1, body.size() - 2)));
        continue;
      }
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) throw InvalidArgument("expected key = value");
      const std::string key = std::string(trim(body.substr(0, eq)));
      const auto value = parse_value(body.substr(eq + 1));
      if (!value) throw InvalidArgument("cannot parse value for '" + key + "'");
      set_key(cfg, section.empty() ? key : section + "." + key, *value);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(PipelineConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw InvalidArgument("override must look like key=value");
  const std::string key(trim(assignment.substr(0, eq)));
  const auto rhs = trim(assignment.substr(eq + 1));
  auto value = parse_value(rhs);
  if (!value) {
    value = Value{};
    value->text = std::string(rhs);
  }
  // a bare word for a string key, e.g. task=family
  if (value->kind != Value::Kind::String) {
    try {
      set_key(cfg, key, *value);
      return;
    } catch (const InvalidArgument&) {
      Value as_text;
      as_text.text = std::string(rhs);
      set_key(cfg, key, as_text);
      return;
    }
  }
  set_key(cfg, key, *value);
}

std::string config_to_toml(const PipelineConfig& c) {
  std::ostringstream o;
  o << "reports_dir = " << quoted(c.reports_dir.generic_string()) << '\n'
    << "metadata_path = " << quoted(c.metadata_path.generic_string()) << '\n'
    << "output_dir = " << quoted(c.output_dir.generic_string()) << '\n'
    << "run_id = " << quoted(c.run_id) << '\n'
    << "task = " << quoted(std::string(to_string(c.task))) << '\n'
    << "seed = " << c.seed << '\n'
    << "threads = " << c.threads << '\n'
    << "max_name_bytes = " << c.max_name_bytes << '\n'
    << "\n[split]\n"
    << "ratio = " << num(c.split.ratio) << '\n'
    << "paper_protocol = " << (c.split.paper_protocol ? "true" : "false") << '\n'
    << "validation_ratio = " << num(c.split.validation_ratio) << '\n'
    << "\n[selection]\n"
    << "stage1_method = " << quoted(c.selection.stage1_method) << '\n'
    << "stage1_threshold = " << num(c.selection.stage1_threshold) << '\n'
    << "stage2 = " << quoted(c.selection.stage2) << '\n'
    << "stage2_target = " << c.selection.stage2_target << '\n'
    << "sweep_percentages = [";
  for (std::size_t i = 0; i < c.selection.sweep_percentages.size(); ++i) {
    o << (i ? ", " : "") << num(c.selection.sweep_percentages[i]);
  }
  o << "]\n"
    << "rfe_step = " << num(c.selection.rfe_step) << '\n'
    << "\n[model]\n"
    << "variant = " << quoted(std::string(to_string(c.model.variant))) << '\n'
    << "grid = " << (c.model.grid ? "true" : "false") << '\n'
    << "C = " << num(c.model.C) << '\n'
    << "tol = " << num(c.model.tol) << '\n'
    << "max_iter = " << c.model.max_iter << '\n'
    << "n_estimators = " << c.model.n_estimators << '\n'
    << "max_depth = " << c.model.max_depth << '\n'
    << "min_samples_split = " << c.model.min_samples_split << '\n'
    << "\n[explain]\n"
    << "top_n = " << c.explain.top_n << '\n'
    << "lime_samples = " << c.explain.lime_samples << '\n'
    << "lime_top_k = " << c.explain.lime_top_k << '\n'
    << "lime_instances = " << c.explain.lime_instances << '\n'
    << "lime_ridge = " << num(c.explain.lime_ridge) << '\n'
    << "lime_kernel_width = " << num(c.explain.lime_kernel_width) << '\n';
  return o.str();
}

void validate(const PipelineConfig& c) {
  auto fail = [](const std::string& what) { throw InvalidArgument("config: " + what); };
  if (!std::filesystem::is_directory(c.reports_dir)) fail("reports_dir '" + c.reports_dir.string() + "' is not a directory");
  if (!std::filesystem::is_regular_file(c.metadata_path)) fail("metadata_path '" + c.metadata_path.string() + "' not found");
  if (!(c.split.ratio > 0 && c.split.ratio < 1)) fail("split.ratio must lie in (0, 1)");
  if (!(c.split.validation_ratio > 0 && c.split.validation_ratio < 1)) fail("split.validation_ratio must lie in (0, 1)");
  if (c.selection.stage1_method != "mi" && c.selection.stage1_method != "chi2" && c.selection.stage1_method != "none") {
    fail("selection.stage1_method must be mi, chi2 or none");
  }
  if (c.selection.stage1_threshold < 0) fail("selection.stage1_threshold must be >= 0");
  if (c.selection.stage2 != "sweep" && c.selection.stage2 != "fixed" && c.selection.stage2 != "none") {
    fail("selection.stage2 must be sweep, fixed or none");
  }
  if (c.selection.stage2 == "fixed" && c.selection.stage2_target == 0) fail("selection.stage2_target must be >= 1");
  if (c.selection.stage2 == "sweep" && c.selection.sweep_percentages.empty()) fail("sweep_percentages is empty");
  for (double p : c.selection.sweep_percentages) {
    if (!(p > 0 && p <= 100)) fail("sweep percentages must lie in (0, 100]");
  }
  if (!(c.selection.rfe_step > 0 && c.selection.rfe_step < 1)) fail("selection.rfe_step must lie in (0, 1)");
  if (!(c.model.C > 0)) fail("model.C must be positive");
  if (!(c.model.tol > 0)) fail("model.tol must be positive");
  if (c.model.n_estimators == 0) fail("model.n_estimators must be positive");
  if (c.explain.lime_samples < 100) fail("explain.lime_samples must be >= 100");
  if (c.threads == 0) fail("threads must be >= 1");
}

}  // namespace mlran
