#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "mlran/config.hpp"
#include "mlran/errors.hpp"
#include "mlran/pipeline.hpp"
#include "mlran/synth.hpp"
#include "oracles.hpp"

using namespace mlran;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PipelineConfig small_config(const std::filesystem::path& root) {
  write_corpus(generate_corpus(make_synth_spec(42, 120, 120, 180, 10)), root / "corpus");
  PipelineConfig c;
  c.reports_dir = root / "corpus" / "reports";
  c.metadata_path = root / "corpus" / "metadata.csv";
  c.output_dir = root / "runs";
  c.selection.sweep_percentages = {10, 50};
  c.explain.lime_samples = 200;
  c.explain.lime_instances = 1;
  c.explain.top_n = 10;
  return c;
}

nlohmann::json manifest_of(const std::filesystem::path& run_dir) {
  return nlohmann::json::parse(slurp(run_dir / "manifest.json"));
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("stage exit codes") {
    CHECK(exit_code(Stage::Ingest) == 10);
    CHECK(exit_code(Stage::Split) == 20);
    CHECK(exit_code(Stage::Selection) == 30);
    CHECK(exit_code(Stage::Training) == 40);
    CHECK(exit_code(Stage::Evaluation) == 50);
    CHECK(exit_code(Stage::Explanation) == 60);
  }

  TEST_CASE("run id follows the config digest and ignores threads") {
    PipelineConfig a, b;
    b.threads = 8;
    b.output_dir = "elsewhere";
    CHECK(config_digest(a) == config_digest(b));
    CHECK(resolve_run_id(a) == "run-" + config_digest(a).substr(0, 12));
    b.seed = 1;
    CHECK(config_digest(a) != config_digest(b));
    a.run_id = "named";
    CHECK(resolve_run_id(a) == "named");
  }

  TEST_CASE("small synthetic run is clean, accurate and reproducible") {
    oracle::TempDir dir("pipeline");
    auto cfg = small_config(dir.path());
    const auto first = run_pipeline(cfg, {});
    CHECK(first.evaluation.accuracy >= 0.9);
    CHECK(audit_run(first.run_dir).empty());
    for (const char* f : {"config.toml", "split.txt", "vocabulary.txt", "train.mlrsparse", "test.mlrsparse",
                          "manifest_stage1.json", "sweep.json", "selected_features.tsv", "model.json",
                          "evaluation.json", "metrics.csv", "shap_global.json", "lime.json", "manifest.json"}) {
      CAPTURE(f);
      CHECK(std::filesystem::exists(first.run_dir / f));
    }
    const auto m = manifest_of(first.run_dir);
    CHECK(m.at("format") == "MLRRUN v1");
    CHECK(m.at("protocol") == "validation_tail");
    CHECK(m.at("lineage").at("sweep") == nlohmann::json{"train_inner", "validation"});

    cfg.output_dir = dir.path() / "runs2";
    cfg.threads = 3;
    const auto second = run_pipeline(cfg, {});
    CHECK(second.run_digest == first.run_digest);
    CHECK(slurp(second.run_dir / "model.json") == slurp(first.run_dir / "model.json"));
  }

  TEST_CASE("audit catches tampering") {
    oracle::TempDir dir("pipeline");
    auto cfg = small_config(dir.path());
    cfg.selection.stage2 = "fixed";
    cfg.selection.stage2_target = 5;
    const auto run = run_pipeline(cfg, {});
    REQUIRE(audit_run(run.run_dir).empty());

    // moving a test id into the training section breaks the row-set digests
    auto split = slurp(run.run_dir / "split.txt");
    const auto test_pos = split.find("[test]\n");
    const auto first_test_end = split.find('\n', test_pos + 7);
    const std::string moved = split.substr(test_pos + 7, first_test_end - test_pos - 7);
    split.insert(split.find('\n') + 1, moved + "\n");
    std::ofstream(run.run_dir / "split.txt", std::ios::binary) << split;
    const auto v = audit_run(run.run_dir);
    CHECK_FALSE(v.empty());
    bool both = false;
    for (const auto& s : v) both |= s.find("both train and test") != std::string::npos;
    CHECK(both);

    std::ofstream(run.run_dir / "model.json", std::ios::app) << " ";
    bool model_flagged = false;
    for (const auto& s : audit_run(run.run_dir)) model_flagged |= s.find("model.json") != std::string::npos;
    CHECK(model_flagged);
  }

  TEST_CASE("paper protocol sweeps on the test rows and says so") {
    oracle::TempDir dir("pipeline");
    auto cfg = small_config(dir.path());
    cfg.split.paper_protocol = true;
    const auto run = run_pipeline(cfg, {});
    const auto m = manifest_of(run.run_dir);
    CHECK(m.at("protocol") == "paper");
    CHECK(m.at("lineage").at("sweep") == nlohmann::json{"train", "test"});
    CHECK(audit_run(run.run_dir).empty());
  }

  TEST_CASE("failures carry their stage") {
    oracle::TempDir dir("pipeline");
    auto cfg = small_config(dir.path());
    std::filesystem::remove_all(cfg.reports_dir);
    std::filesystem::create_directories(cfg.reports_dir);
    try {
      run_pipeline(cfg, {});
      FAIL("expected StageError");
    } catch (const StageError& e) {
      CHECK((e.stage() == Stage::Ingest || e.stage() == Stage::Split));
    }

    auto cfg2 = small_config(dir.path() / "b");
    cfg2.selection.stage1_threshold = 100.0;  // nothing survives
    cfg2.selection.stage2 = "none";
    try {
      run_pipeline(cfg2, {});
      FAIL("expected StageError");
    } catch (const StageError& e) {
      CHECK(e.stage() == Stage::Selection);
    }
  }
}
