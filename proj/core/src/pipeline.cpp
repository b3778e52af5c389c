#include "mlran/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "mlran/classifier.hpp"
#include "mlran/corpus.hpp"
#include "mlran/digest.hpp"
#include "mlran/explain.hpp"
#include "mlran/features.hpp"
#include "mlran/report.hpp"
#include "mlran/rng.hpp"
#include "mlran/selection.hpp"

namespace mlran {

using json = nlohmann::ordered_json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Split: return "split";
    case Stage::Selection: return "selection";
    case Stage::Training: return "training";
    case Stage::Evaluation: return "evaluation";
    case Stage::Explanation: return "explanation";
  }
  return "unknown";
}

namespace {

constexpr std::string_view kRunFormat = "MLRRUN v1";
constexpr std::string_view kVersion = "0.1.0";

// Runs `fn`, turning any library or standard error into a StageError.
template <class F>
auto in_stage(Stage stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string ids_digest(std::span<const std::string> ids) {
  Sha256 h;
  for (const auto& id : ids) {
    h.update(escape_field(id));
    h.update("\n");
  }
  return h.hex_digest();
}

bool labelable(const SampleMetadata& m, Task task) {
  if (m.label == Label::Goodware || task == Task::Binary) return true;
  if (task == Task::Type) return m.ransomware_type.has_value();
  return m.family.has_value();
}

std::string reports_digest(const std::filesystem::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_report_filename(entry.path().filename().string())) {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  Sha256 h;
  for (const auto& n : names) {
    h.update(n + "\t" + sha256_file(dir / n) + "\n");
  }
  return h.hex_digest();
}

struct ArtifactRecord {
  std::string name;
  std::string sha256;
  bool is_volatile = false;
  std::vector<std::string> inputs;
};

class RunWriter {
 public:
  explicit RunWriter(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  const std::filesystem::path& dir() const { return dir_; }

  void write(const std::string& name, const std::string& content, std::vector<std::string> inputs,
             bool is_volatile = false) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir_ / name).string());
    out << content;
    out.close();
    if (!out) throw Error("write failed for " + (dir_ / name).string());
    records_.push_back({name, sha256_hex(content), is_volatile, std::move(inputs)});
  }

  const std::vector<ArtifactRecord>& records() const { return records_; }

 private:
  std::filesystem::path dir_;
  std::vector<ArtifactRecord> records_;
};

struct Labeled {
  SparseBinaryMatrix X;
  std::vector<std::uint32_t> y;
};

Labeled take_rows(const Labeled& d, std::span<const std::size_t> rows) {
  Labeled out{d.X.select_rows(rows), {}};
  out.y.reserve(rows.size());
  for (auto r : rows) out.y.push_back(d.y[r]);
  return out;
}

Labeled take_columns(const Labeled& d, std::span<const ColumnIndex> cols) { return {d.X.select_columns(cols), d.y}; }

// Row positions of `ids` within `X`, in matrix order.
std::vector<std::size_t> rows_of(const SparseBinaryMatrix& X, std::span<const std::string> ids) {
  std::unordered_set<std::string_view> wanted(ids.begin(), ids.end());
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < X.rows(); ++r) {
    if (wanted.count(X.row_id(r))) rows.push_back(r);
  }
  return rows;
}

std::string split_text(const SplitPlan& plan) {
  std::ostringstream out;
  write_split(out, plan);
  return out.str();
}

ModelHyper model_hyper(const PipelineConfig& cfg) {
  ModelHyper h;
  h.logreg = LogRegHyper{cfg.model.C, cfg.model.tol, cfg.model.max_iter, cfg.seed};
  h.n_estimators = cfg.model.n_estimators;
  h.max_depth = cfg.model.max_depth;
  h.min_samples_split = cfg.model.min_samples_split;
  h.seed = cfg.seed;
  h.threads = cfg.threads;
  return h;
}

// Candidates in tie-break order: the first of several equally good
// candidates is kept, so simpler settings come first.
std::vector<ModelHyper> grid_candidates(ModelVariant variant, const ModelHyper& base) {
  std::vector<ModelHyper> out;
  const std::size_t depths[] = {10, 20, 0};
  switch (variant) {
    case ModelVariant::LogisticRegression:
      for (double c : {0.01, 0.1, 1.0, 10.0}) {
        ModelHyper h = base;
        h.logreg.C = c;
        out.push_back(h);
      }
      break;
    case ModelVariant::DecisionTree:
      for (auto d : depths) {
        for (std::size_t s : {2, 5, 10}) {
          ModelHyper h = base;
          h.max_depth = d;
          h.min_samples_split = s;
          out.push_back(h);
        }
      }
      break;
    case ModelVariant::RandomForest:
    case ModelVariant::ExtraTrees:
      for (auto d : depths) {
        for (std::size_t n : {50, 100, 200}) {
          for (std::size_t s : {2, 5}) {
            ModelHyper h = base;
            h.max_depth = d;
            h.n_estimators = n;
            h.min_samples_split = s;
            out.push_back(h);
          }
        }
      }
      break;
  }
  return out;
}

json hyper_to_json(ModelVariant variant, const ModelHyper& h) {
  json j;
  if (variant == ModelVariant::LogisticRegression) {
    j["C"] = h.logreg.C;
    j["tol"] = h.logreg.tol;
    j["max_iter"] = h.logreg.max_iter;
  } else {
    j["max_depth"] = h.max_depth;
    j["min_samples_split"] = h.min_samples_split;
    if (variant != ModelVariant::DecisionTree) j["n_estimators"] = h.n_estimators;
  }
  return j;
}

std::string lines(std::span<const std::string> items) {
  std::string out;
  for (const auto& s : items) out += s + "\n";
  return out;
}

}  // namespace

std::string config_digest(const PipelineConfig& cfg) {
  PipelineConfig canon = cfg;
  canon.threads = 1;
  canon.output_dir.clear();
  canon.run_id.clear();
  return sha256_hex(config_to_toml(canon));
}

std::string resolve_run_id(const PipelineConfig& cfg) {
  if (!cfg.run_id.empty()) return cfg.run_id;
  return "run-" + config_digest(cfg).substr(0, 12);
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const LogFn& log_fn) {
  auto log = [&](const std::string& msg) {
    if (log_fn) log_fn(msg);
  };
  in_stage(Stage::Ingest, [&] { validate(cfg); });

  const std::string run_id = resolve_run_id(cfg);
  RunWriter out(cfg.output_dir / run_id);
  std::map<std::string, double> timings;
  std::vector<std::string> warnings;
  const bool test_sweep = cfg.split.paper_protocol;
  const ExtractOptions xopts{cfg.max_name_bytes};

  {
    PipelineConfig canon = cfg;
    canon.threads = 1;
    canon.output_dir.clear();
    canon.run_id.clear();
    out.write("config.toml", config_to_toml(canon), {});
  }

  // ingest
  auto t0 = std::chrono::steady_clock::now();
  std::vector<SampleMetadata> meta;
  ReportBatch batch;
  std::string metadata_sha, reports_sha;
  in_stage(Stage::Ingest, [&] {
    meta = load_metadata(cfg.metadata_path);
    batch = load_report_dir(cfg.reports_dir, cfg.threads);
    metadata_sha = sha256_file(cfg.metadata_path);
    reports_sha = reports_digest(cfg.reports_dir);
  });
  out.write("skipped.tsv", format_skip_list(batch.skipped), {"reports"});
  log("ingest: " + std::to_string(batch.reports.size()) + " reports loaded, " +
      std::to_string(batch.skipped.size()) + " skipped");
  timings["ingest"] = seconds_since(t0);

  // split
  t0 = std::chrono::steady_clock::now();
  SplitPlan outer, inner;
  in_stage(Stage::Split, [&] {
    std::unordered_set<std::string_view> have;
    for (const auto& r : batch.reports) have.insert(r.sample_id);
    std::vector<SampleMetadata> usable;
    std::size_t no_report = 0, unlabelled = 0;
    for (const auto& m : meta) {
      if (!have.count(m.sample_id)) {
        ++no_report;
      } else if (!labelable(m, cfg.task)) {
        ++unlabelled;
      } else {
        usable.push_back(m);
      }
    }
    if (no_report) warnings.push_back(std::to_string(no_report) + " metadata rows have no loaded report");
    if (unlabelled) {
      warnings.push_back(std::to_string(unlabelled) + " samples cannot be labelled for task " +
                         std::string(to_string(cfg.task)));
    }
    outer = time_aware_split(usable, cfg.split.ratio);
    if (outer.train_ids.empty()) throw EmptyTrainingSet("split produced no training samples");
    if (outer.test_ids.empty()) throw EmptyMatrix("split produced no test samples");
    std::unordered_set<std::string_view> train_set(outer.train_ids.begin(), outer.train_ids.end());
    std::vector<SampleMetadata> train_meta;
    for (const auto& m : usable) {
      if (train_set.count(m.sample_id)) train_meta.push_back(m);
    }
    inner = time_aware_split(train_meta, cfg.split.validation_ratio);
    for (const auto& w : outer.warnings) warnings.push_back("split: " + w);
    for (const auto& w : inner.warnings) warnings.push_back("validation split: " + w);
  });
  out.write("split.txt", split_text(outer), {"metadata"});
  out.write("validation_split.txt", split_text(inner), {"split.txt"});
  log("split: " + std::to_string(outer.train_ids.size()) + " train, " + std::to_string(outer.test_ids.size()) +
      " test, " + std::to_string(inner.test_ids.size()) + " validation");
  timings["split"] = seconds_since(t0);

  // vocabulary and matrices; the vocabulary sees training reports only
  t0 = std::chrono::steady_clock::now();
  FeatureVocabulary vocab;
  Labeled train, test;
  std::vector<std::string> classes;
  in_stage(Stage::Selection, [&] {
    std::unordered_set<std::string_view> train_set(outer.train_ids.begin(), outer.train_ids.end());
    std::unordered_set<std::string_view> test_set(outer.test_ids.begin(), outer.test_ids.end());
    std::vector<LoadedReport> train_reports, test_reports;
    for (auto& r : batch.reports) {
      if (train_set.count(r.sample_id)) {
        train_reports.push_back(std::move(r));
      } else if (test_set.count(r.sample_id)) {
        test_reports.push_back(std::move(r));
      }
    }
    batch.reports.clear();
    vocab = build_vocabulary(train_reports, xopts, cfg.threads);
    const SparseBinaryMatrix X_train = assemble_matrix(train_reports, vocab, xopts, cfg.threads);
    SparseBinaryMatrix X_test = assemble_matrix(test_reports, vocab, xopts, cfg.threads);

    std::unordered_map<std::string_view, const SampleMetadata*> by_id;
    for (const auto& m : meta) by_id.emplace(m.sample_id, &m);
    std::vector<SampleMetadata> train_meta;
    for (const auto& id : outer.train_ids) train_meta.push_back(*by_id.at(id));
    classes = class_names_for(cfg.task, train_meta);

    // families first seen after the training period cannot be scored
    if (cfg.task == Task::Family) {
      std::set<std::string> known(classes.begin(), classes.end());
      std::vector<std::size_t> keep;
      for (std::size_t r = 0; r < X_test.rows(); ++r) {
        const auto* m = by_id.at(X_test.row_id(r));
        if (m->label == Label::Goodware || known.count(*m->family)) keep.push_back(r);
      }
      if (keep.size() != X_test.rows()) {
        warnings.push_back(std::to_string(X_test.rows() - keep.size()) +
                           " test samples belong to families absent from training and were dropped");
        X_test = X_test.select_rows(keep);
      }
    }
    auto train_ds = make_dataset(X_train, meta, cfg.task, classes);
    auto test_ds = make_dataset(X_test, meta, cfg.task, classes);
    train = {std::move(train_ds.matrix), std::move(train_ds.labels)};
    test = {std::move(test_ds.matrix), std::move(test_ds.labels)};
    if (test.X.rows() == 0) throw EmptyMatrix("no labelled test samples");
  });
  out.write("vocabulary.txt", to_vocabulary_text(vocab), {"reports", "split.txt"});
  out.write("train.mlrsparse", to_mlrsparse(train.X), {"reports", "split.txt", "vocabulary.txt"});
  out.write("test.mlrsparse", to_mlrsparse(test.X), {"reports", "split.txt", "vocabulary.txt"});
  out.write("classes.txt", lines(classes), {"metadata", "split.txt"});
  log("vocabulary: " + std::to_string(vocab.size()) + " features from training reports");
  timings["vocabulary"] = seconds_since(t0);

  const std::vector<std::size_t> inner_rows = rows_of(train.X, inner.train_ids);
  const std::vector<std::size_t> val_rows = rows_of(train.X, inner.test_ids);
  const ModelHyper base_hyper = model_hyper(cfg);

  // stage 1
  t0 = std::chrono::steady_clock::now();
  const auto all_groups = column_groups(vocab);
  std::vector<ColumnIndex> stage1_cols;
  in_stage(Stage::Selection, [&] {
    SelectionManifest m;
    if (cfg.selection.stage1_method == "none") {
      stage1_cols.resize(vocab.size());
      for (std::size_t c = 0; c < vocab.size(); ++c) stage1_cols[c] = static_cast<ColumnIndex>(c);
      m.kept_columns = stage1_cols;
      m.params["threshold"] = -1;
      m.input_digest = dataset_digest(train.X, train.y);
    } else {
      const auto method = *parse_score_method(cfg.selection.stage1_method);
      m = filter_by_threshold(train.X, train.y, classes.size(), vocab, method, cfg.selection.stage1_threshold);
      stage1_cols = m.kept_columns;
    }
    if (stage1_cols.empty()) throw EmptyMatrix("stage 1 kept no features");
    out.write("manifest_stage1.json", manifest_to_json(m), {"train.mlrsparse", "classes.txt"});
  });
  log("stage 1: " + std::to_string(vocab.size()) + " -> " + std::to_string(stage1_cols.size()) + " features");
  timings["stage1"] = seconds_since(t0);

  // stage 2
  t0 = std::chrono::steady_clock::now();
  std::vector<ColumnIndex> final_cols = stage1_cols;
  bool swept = false;
  in_stage(Stage::Selection, [&] {
    if (cfg.selection.stage2 == "none") return;
    const Labeled train1 = take_columns(train, stage1_cols);
    std::vector<FeatureGroup> groups1;
    for (auto c : stage1_cols) groups1.push_back(all_groups[c]);
    std::size_t target = cfg.selection.stage2_target;
    if (cfg.selection.stage2 == "sweep") {
      SweepResult sweep;
      if (test_sweep) {
        const Labeled test1 = take_columns(test, stage1_cols);
        sweep = rfe_sweep(train1.X, train1.y, test1.X, test1.y, classes, cfg.selection.sweep_percentages,
                          cfg.selection.rfe_step, base_hyper.logreg);
      } else {
        if (inner_rows.empty() || val_rows.empty()) throw EmptyMatrix("validation tail is empty; cannot run the sweep");
        const Labeled fit = take_rows(train1, inner_rows);
        const Labeled val = take_rows(train1, val_rows);
        sweep = rfe_sweep(fit.X, fit.y, val.X, val.y, classes, cfg.selection.sweep_percentages,
                          cfg.selection.rfe_step, base_hyper.logreg);
      }
      out.write("sweep.json", sweep_to_json(sweep),
                {"manifest_stage1.json", test_sweep ? "test.mlrsparse" : "validation_split.txt"});
      swept = true;
      if (!sweep.best_count) throw Error("every sweep entry failed");
      target = *sweep.best_count;
      log("sweep: best count " + std::to_string(target));
    }
    if (target >= stage1_cols.size()) {
      warnings.push_back("stage 2 target " + std::to_string(target) + " is not below the stage-1 count; RFE skipped");
      return;
    }
    RfeParams params{target, cfg.selection.rfe_step, base_hyper.logreg};
    const SelectionManifest m = rfe(train1.X, train1.y, classes, params, groups1);
    final_cols = compose_columns(stage1_cols, m.kept_columns);
    out.write("manifest_stage2.json", manifest_to_json(m),
              {"manifest_stage1.json", swept ? "sweep.json" : "config.toml"});
  });
  {
    std::vector<std::string> rows;
    for (auto c : final_cols) rows.push_back(std::to_string(c) + "\t" + escape_field(vocab.name(c)));
    std::vector<std::string> inputs{"manifest_stage1.json"};
    if (final_cols != stage1_cols) inputs.push_back("manifest_stage2.json");
    out.write("selected_features.tsv", lines(rows), inputs);
  }
  log("stage 2: " + std::to_string(final_cols.size()) + " features selected");
  timings["stage2"] = seconds_since(t0);

  const Labeled train_sel = take_columns(train, final_cols);
  const Labeled test_sel = take_columns(test, final_cols);
  std::vector<std::string> sel_names;
  std::vector<FeatureGroup> sel_groups;
  for (auto c : final_cols) {
    sel_names.push_back(vocab.name(c));
    sel_groups.push_back(all_groups[c]);
  }

  // optional grid search on the validation tail
  ModelHyper hyper = base_hyper;
  t0 = std::chrono::steady_clock::now();
  if (cfg.model.grid) {
    in_stage(Stage::Training, [&] {
      if (inner_rows.empty() || val_rows.empty()) throw EmptyMatrix("validation tail is empty; cannot run grid search");
      const Labeled fit = take_rows(train_sel, inner_rows);
      const Labeled val = take_rows(train_sel, val_rows);
      json entries = json::array();
      std::optional<double> best;
      for (const auto& cand : grid_candidates(cfg.model.variant, base_hyper)) {
        const Classifier clf = train_classifier(cfg.model.variant, fit.X, fit.y, classes, cand);
        const double bal = balanced_accuracy(val.y, predict(clf, val.X), classes.size());
        entries.push_back({{"hyper", hyper_to_json(cfg.model.variant, cand)}, {"balanced_accuracy", bal}});
        if (!best || bal > *best) {
          best = bal;
          hyper = cand;
        }
      }
      json doc{{"variant", to_string(cfg.model.variant)},
               {"entries", entries},
               {"selected", hyper_to_json(cfg.model.variant, hyper)}};
      out.write("grid.json", doc.dump(2) + "\n", {"selected_features.tsv", "validation_split.txt"});
    });
    timings["grid"] = seconds_since(t0);
  }

  // training
  t0 = std::chrono::steady_clock::now();
  const Classifier model = in_stage(Stage::Training, [&] {
    return train_classifier(cfg.model.variant, train_sel.X, train_sel.y, classes, hyper);
  });
  const double train_seconds = seconds_since(t0);
  timings["training"] = train_seconds;
  out.write("model.json", model_to_json(model),
            {"train.mlrsparse", "selected_features.tsv", cfg.model.grid ? "grid.json" : "config.toml"});
  log("training: " + std::string(to_string(cfg.model.variant)) + " fitted in " + std::to_string(train_seconds) + " s");

  // evaluation
  t0 = std::chrono::steady_clock::now();
  EvaluationReport report;
  std::vector<std::uint32_t> test_pred;
  in_stage(Stage::Evaluation, [&] {
    test_pred = predict(model, test_sel.X);
    const ConfusionMatrix cm = confusion(test_sel.y, test_pred, classes.size(), classes);
    report = metrics(cm);
    report.wall_time_seconds = train_seconds;
    out.write("evaluation.json", evaluation_to_json(report, cm, false), {"model.json", "test.mlrsparse"});
    out.write("metrics.csv",
              evaluation_csv_header() +
                  evaluation_csv_row(to_string(cfg.model.variant), to_string(cfg.task), report),
              {"model.json", "test.mlrsparse"}, true);
  });
  log("evaluation: accuracy " + std::to_string(report.accuracy) + ", balanced accuracy " +
      std::to_string(report.balanced_accuracy));
  timings["evaluation"] = seconds_since(t0);

  // explanation
  t0 = std::chrono::steady_clock::now();
  in_stage(Stage::Explanation, [&] {
    if (const auto* lr = std::get_if<LogRegModel>(&model)) {
      const auto means = column_means(train_sel.X);
      const std::size_t rows = lr->binary() ? 1 : lr->n_classes();
      for (std::size_t row = 0; row < rows; ++row) {
        const auto g = shap_global(*lr, test_sel.X, means, cfg.explain.top_n, row, sel_names, sel_groups);
        const std::string stem = lr->binary() ? "shap_global" : "shap_global_" + classes[row];
        out.write(stem + ".json", global_to_json(g), {"model.json", "train.mlrsparse", "test.mlrsparse"});
        out.write(stem + ".csv", global_to_csv(g), {"model.json", "train.mlrsparse", "test.mlrsparse"});
      }
    }
    std::vector<std::pair<std::string, LimeResult>> explained;
    const std::size_t n = std::min(cfg.explain.lime_instances, test_sel.X.rows());
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t target = classes.size() == 2 ? 1 : test_pred[i];
      ProbaFn fn = [&model, target](const SparseBinaryMatrix& batch) {
        const ProbaMatrix p = predict_proba(model, batch);
        std::vector<double> col(p.rows);
        for (std::size_t r = 0; r < p.rows; ++r) col[r] = p.row(r)[target];
        return col;
      };
      LimeParams params;
      params.n_samples = cfg.explain.lime_samples;
      params.top_k = cfg.explain.lime_top_k;
      params.ridge = cfg.explain.lime_ridge;
      params.seed = derive_seed(cfg.seed, i);
      if (cfg.explain.lime_kernel_width > 0) params.kernel_width = cfg.explain.lime_kernel_width;
      const auto row = test_sel.X.row(i);
      explained.emplace_back(test_sel.X.row_id(i),
                             lime_explain(fn, {row.begin(), row.end()}, test_sel.X.cols(), params, sel_names));
    }
    out.write("lime.json", lime_to_json(explained), {"model.json", "test.mlrsparse"});
  });
  timings["explanation"] = seconds_since(t0);

  {
    json t = json::object();
    for (const auto& [k, v] : timings) t[k] = v;
    out.write("timings.json", t.dump(2) + "\n", {}, true);
  }

  // run manifest
  const auto row_set = [](std::span<const std::string> ids, std::string_view source) {
    return json{{"count", ids.size()}, {"ids_sha256", ids_digest(ids)}, {"source", source}};
  };
  json manifest;
  manifest["format"] = kRunFormat;
  manifest["run_id"] = run_id;
  manifest["config_digest"] = config_digest(cfg);
  manifest["task"] = to_string(cfg.task);
  manifest["model"] = to_string(cfg.model.variant);
  manifest["protocol"] = test_sweep ? "paper" : "validation_tail";
  manifest["versions"] = {{"mlran", kVersion}, {"matrix_format", "MLRSPARSE v1"}, {"model_format", "MLRMODEL v1"}};
  manifest["inputs"] = {{"metadata_sha256", metadata_sha},
                        {"reports_sha256", reports_sha},
                        {"reports_loaded", outer.train_ids.size() + outer.test_ids.size()},
                        {"reports_skipped", batch.skipped.size()}};
  manifest["row_sets"] = {{"train", row_set(train.X.row_ids(), "train.mlrsparse")},
                          {"test", row_set(test.X.row_ids(), "test.mlrsparse")},
                          {"train_inner", row_set(inner.train_ids, "validation_split.txt#train")},
                          {"validation", row_set(inner.test_ids, "validation_split.txt#test")}};
  json lineage;
  lineage["vocabulary"] = {"train"};
  lineage["stage1"] = {"train"};
  if (swept) lineage["sweep"] = test_sweep ? json{"train", "test"} : json{"train_inner", "validation"};
  if (cfg.selection.stage2 != "none") lineage["rfe"] = {"train"};
  if (cfg.model.grid) lineage["grid"] = {"train_inner", "validation"};
  lineage["training"] = {"train"};
  lineage["background"] = {"train"};
  lineage["evaluation"] = {"test"};
  lineage["explanation"] = {"test"};
  manifest["lineage"] = lineage;
  manifest["feature_counts"] = {
      {"vocabulary", vocab.size()}, {"stage1", stage1_cols.size()}, {"selected", final_cols.size()}};
  manifest["warnings"] = warnings;

  json artifacts = json::object();
  Sha256 run_hash;
  run_hash.update(config_digest(cfg) + "\n");
  for (const auto& a : out.records()) {
    artifacts[a.name] = {{"sha256", a.sha256}, {"volatile", a.is_volatile}, {"inputs", a.inputs}};
    if (!a.is_volatile) run_hash.update(a.name + "\t" + a.sha256 + "\n");
  }
  manifest["artifacts"] = artifacts;
  const std::string run_digest = run_hash.hex_digest();
  manifest["run_digest"] = run_digest;
  out.write("manifest.json", manifest.dump(2) + "\n", {});
  log("run " + run_id + " complete: " + out.dir().string());

  return {out.dir(), report, run_digest};
}

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<std::string> audit_run(const std::filesystem::path& run_dir) {
  std::vector<std::string> v;
  json manifest;
  try {
    manifest = json::parse(read_file(run_dir / "manifest.json"));
  } catch (const std::exception& e) {
    return {std::string("manifest unreadable: ") + e.what()};
  }
  try {
    const bool test_sweep = manifest.at("protocol").get<std::string>() == "paper";

    std::ifstream split_in(run_dir / "split.txt");
    const SplitPlan outer = read_split(split_in);
    std::ifstream inner_in(run_dir / "validation_split.txt");
    const SplitPlan inner = read_split(inner_in);
    std::ifstream train_in(run_dir / "train.mlrsparse");
    const SparseBinaryMatrix train = read_mlrsparse(train_in);
    std::ifstream test_in(run_dir / "test.mlrsparse");
    const SparseBinaryMatrix test = read_mlrsparse(test_in);

    // artifacts on disk match their recorded digests
    for (const auto& [name, a] : manifest.at("artifacts").items()) {
      if (sha256_file(run_dir / name) != a.at("sha256").get<std::string>()) {
        v.push_back("artifact " + name + " does not match its recorded digest");
      }
    }

    // row sets named in the manifest are the ones on disk
    const std::map<std::string, std::span<const std::string>> on_disk{
        {"train", train.row_ids()},
        {"test", test.row_ids()},
        {"train_inner", inner.train_ids},
        {"validation", inner.test_ids}};
    const auto& sets = manifest.at("row_sets");
    for (const auto& [name, ids] : on_disk) {
      if (!sets.contains(name)) {
        v.push_back("row set " + name + " missing from manifest");
      } else if (sets.at(name).at("ids_sha256").get<std::string>() != ids_digest(ids)) {
        v.push_back("row set " + name + " digest differs from the split files");
      }
    }

    // the outer split is a partition and the inner split stays inside train
    std::unordered_set<std::string> train_ids(outer.train_ids.begin(), outer.train_ids.end());
    std::unordered_set<std::string> test_ids(outer.test_ids.begin(), outer.test_ids.end());
    for (const auto& id : outer.test_ids) {
      if (train_ids.count(id)) v.push_back("sample " + id + " is in both train and test");
    }
    for (const auto& id : train.row_ids()) {
      if (!train_ids.count(id)) v.push_back("train matrix row " + id + " is not a training sample");
    }
    for (const auto& id : test.row_ids()) {
      if (!test_ids.count(id)) v.push_back("test matrix row " + id + " is not a test sample");
    }
    for (const auto* ids : {&inner.train_ids, &inner.test_ids}) {
      for (const auto& id : *ids) {
        if (!train_ids.count(id)) v.push_back("validation split sample " + id + " is outside train");
      }
    }

    // a vocabulary built from training reports only has every column
    // active in some training row
    const auto counts = train.column_counts();
    const auto unseen = std::count(counts.begin(), counts.end(), std::size_t{0});
    if (unseen > 0) v.push_back(std::to_string(unseen) + " vocabulary columns never occur in training rows");

    // no stage before evaluation consumed test rows
    for (const auto& [stage, used] : manifest.at("lineage").items()) {
      if (stage == "evaluation" || stage == "explanation") continue;
      for (const auto& s : used) {
        const auto name = s.get<std::string>();
        if (!sets.contains(name)) v.push_back("stage " + stage + " uses unknown row set " + name);
        if (name == "test" && !(test_sweep && stage == "sweep")) v.push_back("stage " + stage + " consumed test rows");
      }
    }
  } catch (const std::exception& e) {
    v.push_back(std::string("audit failed: ") + e.what());
  }
  return v;
}

}  // namespace mlran
