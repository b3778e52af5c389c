#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mlran/config.hpp"
#include "mlran/errors.hpp"
#include "mlran/metrics.hpp"

namespace mlran {

// Process exit codes, one per pipeline stage.
enum class Stage : int {
  Ingest = 10,
  Split = 20,
  Selection = 30,
  Training = 40,
  Evaluation = 50,
  Explanation = 60,
};

std::string_view to_string(Stage s);
inline int exit_code(Stage s) noexcept { return static_cast<int>(s); }

class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& what)
      : Error(std::string(to_string(stage)) + ": " + what), stage_(stage) {}
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

using LogFn = std::function<void(std::string_view)>;

struct PipelineResult {
  std::filesystem::path run_dir;
  EvaluationReport evaluation;
  std::string run_digest;  // sha256 over the non-volatile artifact digests
};

// Config digest (sha256 of the canonical TOML with threads, output_dir and
// run_id cleared, since none of them affect results).
std::string config_digest(const PipelineConfig& cfg);
std::string resolve_run_id(const PipelineConfig& cfg);

// Runs every stage and writes the artifacts under output_dir/<run id>/.
// Throws StageError tagged with the failing stage; whatever was written
// before the failure stays on disk.
PipelineResult run_pipeline(const PipelineConfig& cfg, const LogFn& log = {});

// Checks a finished run for data snooping: recomputes the row-set digests
// from the split files, checks that train and test are disjoint and that
// no stage before evaluation consumed test rows (unless the run declares
// the paper protocol, in which case only the sweep may). Returns one
// message per violation; empty means clean.
std::vector<std::string> audit_run(const std::filesystem::path& run_dir);

}  // namespace mlran
