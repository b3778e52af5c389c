#include <benchmark/benchmark.h>

#include "mlran/features.hpp"
#include "mlran/logreg.hpp"
#include "mlran/report.hpp"
#include "mlran/selection.hpp"
#include "mlran/synth.hpp"

using namespace mlran;

namespace {

struct Fixture {
  std::vector<LoadedReport> reports;
  FeatureVocabulary vocab;
  SparseBinaryMatrix X;
  std::vector<std::uint32_t> y;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    const auto corpus = generate_corpus(make_synth_spec(42, 500, 500, 1980, 20));
    for (const auto& r : corpus.reports) out.reports.push_back({r.sample_id, parse_report(r.document)});
    out.vocab = build_vocabulary(out.reports);
    out.X = assemble_matrix(out.reports, out.vocab);
    for (const auto& m : corpus.metadata) out.y.push_back(m.label == Label::Ransomware ? 1 : 0);
    return out;
  }();
  return f;
}

void BM_ParseReports(benchmark::State& state) {
  const auto corpus = generate_corpus(make_synth_spec(7, 100, 100, 1980, 20));
  for (auto _ : state) {
    for (const auto& r : corpus.reports) benchmark::DoNotOptimize(parse_report(r.document));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(corpus.reports.size()));
}
BENCHMARK(BM_ParseReports)->Unit(benchmark::kMillisecond);

void BM_AssembleMatrix(benchmark::State& state) {
  const auto& f = fixture();
  const auto threads = static_cast<unsigned>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(assemble_matrix(f.reports, f.vocab, {}, threads));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.reports.size()));
}
BENCHMARK(BM_AssembleMatrix)->Arg(1)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_ScoreColumns(benchmark::State& state) {
  const auto& f = fixture();
  const auto method = state.range(0) ? ScoreMethod::ChiSquare : ScoreMethod::MutualInformation;
  for (auto _ : state) benchmark::DoNotOptimize(score_columns(f.X, f.y, 2, method));
  state.SetLabel(std::string(to_string(method)));
}
BENCHMARK(BM_ScoreColumns)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_TrainLogReg(benchmark::State& state) {
  const auto& f = fixture();
  const std::vector<std::string> classes{"goodware", "ransomware"};
  LogRegHyper h;
  h.C = static_cast<double>(state.range(0)) / 100.0;
  for (auto _ : state) benchmark::DoNotOptimize(train_logreg(f.X, f.y, classes, h));
}
BENCHMARK(BM_TrainLogReg)->Arg(1)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
