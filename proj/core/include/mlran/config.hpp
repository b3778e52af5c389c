#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlran/classifier.hpp"
#include "mlran/corpus.hpp"

namespace mlran {

struct SplitConfig {
  double ratio = 0.8;
  bool paper_protocol = false;     // evaluate the RFE sweep on the test split
  double validation_ratio = 0.8;   // inner split of the training period
};

struct SelectionConfig {
  std::string stage1_method = "mi";  // mi | chi2 | none
  double stage1_threshold = 0.01;
  std::string stage2 = "sweep";      // sweep | fixed | none
  std::size_t stage2_target = 0;
  std::vector<double> sweep_percentages{1, 2, 3, 4, 5, 10, 20, 50, 70, 90};
  double rfe_step = 0.1;
};

struct ModelConfig {
  ModelVariant variant = ModelVariant::LogisticRegression;
  bool grid = false;
  double C = 1.0;
  double tol = 1e-6;
  std::size_t max_iter = 10000;
  std::size_t n_estimators = 100;
  std::size_t max_depth = 0;
  std::size_t min_samples_split = 2;
};

struct ExplainConfig {
  std::size_t top_n = 50;
  std::size_t lime_samples = 5000;
  std::size_t lime_top_k = 5;
  std::size_t lime_instances = 3;
  double lime_ridge = 1.0;
  double lime_kernel_width = 0;  // 0 = 0.75 * sqrt(active features)
};

struct PipelineConfig {
  std::filesystem::path reports_dir;
  std::filesystem::path metadata_path;
  std::filesystem::path output_dir = "runs";
  std::string run_id;  // empty: derived from the config digest
  Task task = Task::Binary;
  std::uint64_t seed = 42;
  unsigned threads = 1;
  std::size_t max_name_bytes = 4096;
  SplitConfig split;
  SelectionConfig selection;
  ModelConfig model;
  ExplainConfig explain;
};

// Parses the TOML subset used for run configs: [section] headers,
// `key = value` lines, '#' comments, values that are quoted strings,
// numbers, booleans, or flat numeric arrays. Unknown keys are errors.
// Throws InvalidArgument naming the offending line.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);

// Applies one "section.key=value" override; bare (unquoted) strings are
// accepted on the right-hand side.
void apply_override(PipelineConfig& cfg, std::string_view assignment);

// Canonical rendering with every key in a fixed order. Its sha256 is the
// config digest recorded in run manifests.
std::string config_to_toml(const PipelineConfig& cfg);

// Checks ranges and choices, and that input paths exist.
void validate(const PipelineConfig& cfg);

}  // namespace mlran
