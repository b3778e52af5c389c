// mlran: command-line front end for the ransomware detection pipeline.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mlran/classifier.hpp"
#include "mlran/config.hpp"
#include "mlran/corpus.hpp"
#include "mlran/explain.hpp"
#include "mlran/features.hpp"
#include "mlran/metrics.hpp"
#include "mlran/pipeline.hpp"
#include "mlran/report.hpp"
#include "mlran/rng.hpp"
#include "mlran/selection.hpp"
#include "mlran/synth.hpp"

namespace fs = std::filesystem;
using namespace mlran;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

SparseBinaryMatrix load_matrix(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  return read_mlrsparse(in);
}

FeatureVocabulary load_vocabulary(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  return read_vocabulary(in);
}

Task task_from(const std::string& s) {
  auto t = parse_task(s);
  if (!t) throw InvalidArgument("unknown task '" + s + "'");
  return *t;
}

// Column indices from a selected_features.tsv ("<column>\t<name>" lines).
std::vector<ColumnIndex> load_features(const fs::path& p) {
  std::istringstream in(read_text(p));
  std::vector<ColumnIndex> cols;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    cols.push_back(static_cast<ColumnIndex>(std::stoul(line.substr(0, line.find('\t')))));
  }
  return cols;
}

std::string features_tsv(const FeatureVocabulary& vocab, std::span<const ColumnIndex> cols) {
  std::string out;
  for (auto c : cols) out += std::to_string(c) + "\t" + escape_field(vocab.name(c)) + "\n";
  return out;
}

std::vector<SampleMetadata> metadata_of_rows(const SparseBinaryMatrix& X, std::span<const SampleMetadata> meta) {
  std::unordered_map<std::string_view, const SampleMetadata*> by_id;
  for (const auto& m : meta) by_id.emplace(m.sample_id, &m);
  std::vector<SampleMetadata> out;
  for (const auto& id : X.row_ids()) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw SchemaMismatch("no metadata for sample '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

// Runs a subcommand body; errors become the stage's exit code.
int guarded(Stage stage, const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const StageError& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.stage());
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", to_string(stage), e.what());
    return exit_code(stage);
  }
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("mlran");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  std::string log_level = "info";
  if (const char* env = std::getenv("MLRAN_LOG_LEVEL")) log_level = env;

  CLI::App app{"Ransomware detection from sandbox reports"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 1;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

  int status = 0;

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic corpus with planted features");
  fs::path gen_out;
  std::uint64_t gen_seed = 42;
  std::size_t n_good = 500, n_ransom = 500, n_noise = 2000, n_planted = 20;
  double hit = 0.9, leak = 0.05, background = 0.3;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed);
  gen->add_option("--goodware", n_good);
  gen->add_option("--ransomware", n_ransom);
  gen->add_option("--noise", n_noise, "Noise features");
  gen->add_option("--planted", n_planted, "Planted features");
  gen->add_option("--hit", hit, "Planted rate in the favoured class");
  gen->add_option("--leak", leak, "Planted rate in the other class");
  gen->add_option("--background", background, "Noise feature rate");
  gen->callback([&] {
    status = guarded(Stage::Ingest, [&] {
      const auto spec = make_synth_spec(gen_seed, n_good, n_ransom, n_noise, n_planted, hit, leak, background);
      const auto corpus = generate_corpus(spec, threads);
      write_corpus(corpus, gen_out);
      std::string planted;
      for (const auto& p : spec.planted) planted += p.canonical + "\n";
      write_text(gen_out / "planted.txt", planted);
      spdlog::info("wrote {} reports to {}", corpus.reports.size(), gen_out.string());
    });
  });

  // extract
  auto* extract = app.add_subcommand("extract", "Build the vocabulary and sparse matrices");
  fs::path ex_reports, ex_split, ex_out;
  std::size_t ex_max_name = 4096;
  extract->add_option("--reports", ex_reports, "Report directory")->required();
  extract->add_option("--split", ex_split, "Split file; the vocabulary is built from its train section");
  extract->add_option("--out", ex_out, "Output directory")->required();
  extract->add_option("--max-name-bytes", ex_max_name);
  extract->callback([&] {
    status = guarded(Stage::Ingest, [&] {
      auto batch = load_report_dir(ex_reports, threads);
      write_text(ex_out / "skipped.tsv", format_skip_list(batch.skipped));
      const ExtractOptions opts{ex_max_name};
      if (ex_split.empty()) {
        const auto vocab = build_vocabulary(batch.reports, opts, threads);
        write_text(ex_out / "vocabulary.txt", to_vocabulary_text(vocab));
        write_text(ex_out / "matrix.mlrsparse", to_mlrsparse(assemble_matrix(batch.reports, vocab, opts, threads)));
        spdlog::info("{} reports, {} features", batch.reports.size(), vocab.size());
        return;
      }
      std::ifstream in(ex_split);
      if (!in) throw Error("cannot open " + ex_split.string());
      const SplitPlan plan = read_split(in);
      std::unordered_set<std::string_view> tr(plan.train_ids.begin(), plan.train_ids.end());
      std::unordered_set<std::string_view> te(plan.test_ids.begin(), plan.test_ids.end());
      std::vector<LoadedReport> train, test;
      for (auto& r : batch.reports) {
        if (tr.count(r.sample_id)) {
          train.push_back(std::move(r));
        } else if (te.count(r.sample_id)) {
          test.push_back(std::move(r));
        }
      }
      const auto vocab = build_vocabulary(train, opts, threads);
      write_text(ex_out / "vocabulary.txt", to_vocabulary_text(vocab));
      write_text(ex_out / "train.mlrsparse", to_mlrsparse(assemble_matrix(train, vocab, opts, threads)));
      write_text(ex_out / "test.mlrsparse", to_mlrsparse(assemble_matrix(test, vocab, opts, threads)));
      spdlog::info("{} train / {} test reports, {} features", train.size(), test.size(), vocab.size());
    });
  });

  // split
  auto* split = app.add_subcommand("split", "Time-aware stratified train/test split");
  fs::path sp_meta, sp_out;
  double sp_ratio = 0.8;
  split->add_option("--metadata", sp_meta, "Metadata CSV")->required();
  split->add_option("--ratio", sp_ratio, "Training fraction per stratum");
  split->add_option("--out", sp_out, "Split file")->required();
  split->callback([&] {
    status = guarded(Stage::Split, [&] {
      const auto meta = load_metadata(sp_meta);
      const auto plan = time_aware_split(meta, sp_ratio);
      for (const auto& w : plan.warnings) spdlog::warn("{}", w);
      if (!plan.excluded_ids.empty()) spdlog::warn("{} samples without a timestamp excluded", plan.excluded_ids.size());
      std::ostringstream ss;
      write_split(ss, plan);
      write_text(sp_out, ss.str());
      spdlog::info("{} train, {} test", plan.train_ids.size(), plan.test_ids.size());
    });
  });

  // select
  auto* select = app.add_subcommand("select", "Stage-1 filter and optional RFE");
  fs::path se_matrix, se_vocab, se_meta, se_out;
  std::string se_task = "binary", se_method = "mi";
  double se_threshold = 0.01, se_step = 0.1;
  std::size_t se_target = 0;
  select->add_option("--matrix", se_matrix, "Training matrix")->required();
  select->add_option("--vocabulary", se_vocab)->required();
  select->add_option("--metadata", se_meta)->required();
  select->add_option("--task", se_task);
  select->add_option("--method", se_method, "mi, chi2 or none");
  select->add_option("--threshold", se_threshold);
  select->add_option("--target", se_target, "RFE target count (0 skips RFE)");
  select->add_option("--step", se_step, "RFE step fraction");
  select->add_option("--out", se_out, "Output directory")->required();
  select->callback([&] {
    status = guarded(Stage::Selection, [&] {
      const auto task = task_from(se_task);
      const auto X = load_matrix(se_matrix);
      const auto vocab = load_vocabulary(se_vocab);
      if (vocab.size() != X.cols()) throw ColumnMismatch("vocabulary and matrix widths differ");
      const auto meta = load_metadata(se_meta);
      const auto classes = class_names_for(task, metadata_of_rows(X, meta));
      const auto ds = make_dataset(X, meta, task, classes);
      std::vector<ColumnIndex> cols;
      if (se_method == "none") {
        for (std::size_t c = 0; c < vocab.size(); ++c) cols.push_back(static_cast<ColumnIndex>(c));
      } else {
        const auto method = parse_score_method(se_method);
        if (!method) throw InvalidArgument("unknown method '" + se_method + "'");
        const auto m = filter_by_threshold(ds.matrix, ds.labels, classes.size(), vocab, *method, se_threshold);
        write_text(se_out / "manifest_stage1.json", manifest_to_json(m));
        cols = m.kept_columns;
      }
      spdlog::info("stage 1: {} -> {} features", vocab.size(), cols.size());
      if (se_target > 0) {
        const auto groups = column_groups(vocab, cols);
        RfeParams params{se_target, se_step, LogRegHyper{}};
        const auto m = rfe(ds.matrix.select_columns(cols), ds.labels, classes, params, groups);
        write_text(se_out / "manifest_stage2.json", manifest_to_json(m));
        cols = compose_columns(cols, m.kept_columns);
        spdlog::info("stage 2: {} features", cols.size());
      }
      write_text(se_out / "selected_features.tsv", features_tsv(vocab, cols));
    });
  });

  // train
  auto* train = app.add_subcommand("train", "Fit a classifier");
  fs::path tr_matrix, tr_meta, tr_features, tr_out;
  std::string tr_task = "binary", tr_variant = "logistic_regression";
  ModelHyper tr_hyper;
  train->add_option("--matrix", tr_matrix, "Training matrix")->required();
  train->add_option("--metadata", tr_meta)->required();
  train->add_option("--features", tr_features, "selected_features.tsv to restrict columns");
  train->add_option("--task", tr_task);
  train->add_option("--model", tr_variant, "logistic_regression, decision_tree, random_forest, extra_trees");
  train->add_option("--C", tr_hyper.logreg.C);
  train->add_option("--tol", tr_hyper.logreg.tol);
  train->add_option("--max-iter", tr_hyper.logreg.max_iter);
  train->add_option("--n-estimators", tr_hyper.n_estimators);
  train->add_option("--max-depth", tr_hyper.max_depth, "0 for unlimited");
  train->add_option("--min-samples-split", tr_hyper.min_samples_split);
  train->add_option("--seed", tr_hyper.seed);
  train->add_option("--out", tr_out, "Model file")->required();
  train->callback([&] {
    status = guarded(Stage::Training, [&] {
      const auto variant = parse_model_variant(tr_variant);
      if (!variant) throw InvalidArgument("unknown model '" + tr_variant + "'");
      const auto task = task_from(tr_task);
      auto X = load_matrix(tr_matrix);
      if (!tr_features.empty()) X = X.select_columns(load_features(tr_features));
      const auto meta = load_metadata(tr_meta);
      const auto classes = class_names_for(task, metadata_of_rows(X, meta));
      const auto ds = make_dataset(X, meta, task, classes);
      tr_hyper.logreg.seed = tr_hyper.seed;
      tr_hyper.threads = threads;
      const auto model = train_classifier(*variant, ds.matrix, ds.labels, classes, tr_hyper);
      if (const auto* lr = std::get_if<LogRegModel>(&model); lr && !lr->diagnostics.converged) {
        spdlog::warn("solver did not converge: {}", lr->diagnostics.message);
      }
      write_text(tr_out, model_to_json(model));
      spdlog::info("trained {} on {} rows x {} columns", tr_variant, ds.matrix.rows(), ds.matrix.cols());
    });
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Score a model on a labelled matrix");
  fs::path ev_model, ev_matrix, ev_meta, ev_features, ev_out, ev_csv;
  std::string ev_task = "binary";
  eval->add_option("--model", ev_model)->required();
  eval->add_option("--matrix", ev_matrix, "Evaluation matrix")->required();
  eval->add_option("--metadata", ev_meta)->required();
  eval->add_option("--features", ev_features);
  eval->add_option("--task", ev_task);
  eval->add_option("--out", ev_out, "evaluation.json")->required();
  eval->add_option("--csv", ev_csv, "Metrics CSV");
  eval->callback([&] {
    status = guarded(Stage::Evaluation, [&] {
      const auto model = model_from_json(read_text(ev_model));
      auto X = load_matrix(ev_matrix);
      if (!ev_features.empty()) X = X.select_columns(load_features(ev_features));
      const auto meta = load_metadata(ev_meta);
      const auto& classes = class_names(model);
      const auto ds = make_dataset(X, meta, task_from(ev_task), classes);
      const auto cm = confusion(ds.labels, predict(model, ds.matrix), classes.size(), classes);
      const auto report = metrics(cm);
      write_text(ev_out, evaluation_to_json(report, cm, false));
      if (!ev_csv.empty()) {
        write_text(ev_csv, evaluation_csv_header() +
                               evaluation_csv_row(to_string(variant_of(model)), ev_task, report));
      }
      spdlog::info("accuracy {:.4f}, balanced accuracy {:.4f}", report.accuracy, report.balanced_accuracy);
    });
  });

  // explain
  auto* explain = app.add_subcommand("explain", "SHAP (logistic models) and LIME attributions");
  fs::path xp_model, xp_matrix, xp_background, xp_features, xp_vocab, xp_out;
  ExplainConfig xp;
  std::uint64_t xp_seed = 42;
  explain->add_option("--model", xp_model)->required();
  explain->add_option("--matrix", xp_matrix, "Rows to explain")->required();
  explain->add_option("--background", xp_background, "Training matrix for SHAP means");
  explain->add_option("--features", xp_features);
  explain->add_option("--vocabulary", xp_vocab, "Names for the attributions");
  explain->add_option("--top-n", xp.top_n);
  explain->add_option("--lime-instances", xp.lime_instances);
  explain->add_option("--lime-samples", xp.lime_samples);
  explain->add_option("--lime-top-k", xp.lime_top_k);
  explain->add_option("--seed", xp_seed);
  explain->add_option("--out", xp_out, "Output directory")->required();
  explain->callback([&] {
    status = guarded(Stage::Explanation, [&] {
      const auto model = model_from_json(read_text(xp_model));
      auto X = load_matrix(xp_matrix);
      std::vector<ColumnIndex> cols;
      if (!xp_features.empty()) {
        cols = load_features(xp_features);
        X = X.select_columns(cols);
      }
      std::vector<std::string> names;
      std::vector<FeatureGroup> groups;
      if (!xp_vocab.empty()) {
        const auto vocab = load_vocabulary(xp_vocab);
        if (cols.empty()) {
          for (std::size_t c = 0; c < vocab.size(); ++c) cols.push_back(static_cast<ColumnIndex>(c));
        }
        for (auto c : cols) {
          names.push_back(vocab.name(c));
          groups.push_back(vocab.group(c));
        }
      }
      const auto* lr = std::get_if<LogRegModel>(&model);
      if (lr && !xp_background.empty()) {
        auto B = load_matrix(xp_background);
        if (!xp_features.empty()) B = B.select_columns(load_features(xp_features));
        const auto g = shap_global(*lr, X, column_means(B), xp.top_n, 0, names, groups);
        write_text(xp_out / "shap_global.json", global_to_json(g));
        write_text(xp_out / "shap_global.csv", global_to_csv(g));
      } else if (lr) {
        spdlog::warn("no --background given; skipping SHAP");
      }
      const auto pred = predict(model, X);
      std::vector<std::pair<std::string, LimeResult>> explained;
      for (std::size_t i = 0; i < std::min(xp.lime_instances, X.rows()); ++i) {
        const std::uint32_t target = class_names(model).size() == 2 ? 1 : pred[i];
        ProbaFn fn = [&model, target](const SparseBinaryMatrix& batch) {
          const auto p = predict_proba(model, batch);
          std::vector<double> col(p.rows);
          for (std::size_t r = 0; r < p.rows; ++r) col[r] = p.row(r)[target];
          return col;
        };
        LimeParams params;
        params.n_samples = xp.lime_samples;
        params.top_k = xp.lime_top_k;
        params.seed = derive_seed(xp_seed, i);
        const auto row = X.row(i);
        explained.emplace_back(X.row_id(i), lime_explain(fn, {row.begin(), row.end()}, X.cols(), params, names));
      }
      write_text(xp_out / "lime.json", lime_to_json(explained));
    });
  });

  // run
  auto* run = app.add_subcommand("run", "Full pipeline from a config file");
  fs::path run_config;
  std::vector<std::string> run_sets;
  run->add_option("--config", run_config, "TOML config")->required();
  run->add_option("--set", run_sets, "Override, e.g. --set model.C=0.1");
  run->callback([&] {
    status = guarded(Stage::Ingest, [&] {
      auto cfg = load_config(run_config);
      if (const char* env = std::getenv("MLRAN_OUTPUT_DIR")) cfg.output_dir = env;
      for (const auto& s : run_sets) apply_override(cfg, s);
      if (app.count("--threads")) cfg.threads = threads;
      const auto result = run_pipeline(cfg, [](std::string_view msg) { spdlog::info("{}", msg); });
      std::cout << result.run_dir.string() << "\n";
      for (const auto& v : audit_run(result.run_dir)) spdlog::warn("audit: {}", v);
    });
  });

  // audit
  auto* audit = app.add_subcommand("audit", "Check a finished run for test-set leakage");
  fs::path audit_dir;
  audit->add_option("run_dir", audit_dir)->required();
  audit->callback([&] {
    const auto violations = audit_run(audit_dir);
    for (const auto& v : violations) std::cout << v << "\n";
    if (violations.empty()) std::cout << "clean\n";
    status = violations.empty() ? 0 : 1;
  });

  app.parse_complete_callback([&] { spdlog::set_level(spdlog::level::from_str(log_level)); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  return status;
}
