#include <doctest.h>

#include <cmath>
#include <set>

#include "mlran/errors.hpp"
#include "mlran/features.hpp"
#include "mlran/report.hpp"
#include "mlran/synth.hpp"
#include "oracles.hpp"

using namespace mlran;

namespace {

bool has_feature(const SynthReport& r, const std::string& name) {
  for (const auto& f : extract_features(parse_report(r.document))) {
    if (f.canonical == name) return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("generation is a pure function of the spec") {
    const auto spec = make_synth_spec(5, 30, 40, 90, 6);
    const auto a = generate_corpus(spec, 1);
    const auto b = generate_corpus(spec, 4);
    REQUIRE(a.reports.size() == 70);
    for (std::size_t i = 0; i < a.reports.size(); ++i) {
      CHECK(a.reports[i].document == b.reports[i].document);
      CHECK(a.metadata[i] == b.metadata[i]);
    }
    const auto c = generate_corpus(make_synth_spec(6, 30, 40, 90, 6));
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.reports.size(); ++i) same += a.reports[i].document == c.reports[i].document;
    CHECK(same < a.reports.size());
  }

  TEST_CASE("ids and labels follow the class counts") {
    const auto corpus = generate_corpus(make_synth_spec(1, 3, 5, 0, 2));
    REQUIRE(corpus.metadata.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(corpus.metadata[i].sample_id == std::to_string(i + 1));
      CHECK(corpus.metadata[i].label == (i < 3 ? Label::Goodware : Label::Ransomware));
      CHECK(corpus.metadata[i].first_submission.has_value());
      CHECK(corpus.metadata[i].family.has_value() == (i >= 3));
    }
  }

  TEST_CASE("planted features appear at their hit rate") {
    SynthSpec spec;
    spec.seed = 99;
    spec.n_goodware = 200;
    spec.n_ransomware = 200;
    spec.planted = {{"SIGNATURE:ransom_note", Label::Ransomware, 0.9, 0.05}};
    const auto corpus = generate_corpus(spec);
    std::size_t hits = 0, leaks = 0;
    for (std::size_t i = 0; i < corpus.reports.size(); ++i) {
      const bool present = has_feature(corpus.reports[i], "SIGNATURE:ransom_note");
      (corpus.metadata[i].label == Label::Ransomware ? hits : leaks) += present;
    }
    const double sd_hit = std::sqrt(200 * 0.9 * 0.1);
    CHECK(std::abs(static_cast<double>(hits) - 180.0) <= 3 * sd_hit);
    const double sd_leak = std::sqrt(200 * 0.05 * 0.95);
    CHECK(std::abs(static_cast<double>(leaks) - 10.0) <= 3 * sd_leak);
  }

  TEST_CASE("synthetic names survive extraction for every group") {
    SynthSpec spec;
    spec.n_ransomware = 1;
    for (auto g : kAllFeatureGroups) {
      spec.planted.push_back({synthetic_feature_name(g, "tag"), Label::Ransomware, 1.0, 0.0});
    }
    const auto corpus = generate_corpus(spec);
    std::set<std::string> got;
    for (const auto& f : extract_features(parse_report(corpus.reports[0].document))) got.insert(f.canonical);
    for (const auto& p : spec.planted) CHECK(got.count(p.canonical) == 1);
  }

  TEST_CASE("noise spreads round robin") {
    const auto s = spread_over_groups(20);
    std::size_t total = 0;
    for (auto v : s) {
      total += v;
      CHECK((v == 2 || v == 3));
    }
    CHECK(total == 20);
  }

  TEST_CASE("invalid specs are rejected") {
    SynthSpec spec;
    spec.planted = {{"SIGNATURE:x", Label::Ransomware, 0.1, 0.2}};
    CHECK_THROWS_AS(validate(spec), InvalidArgument);
    spec.planted = {{"BOGUS:x", Label::Ransomware, 0.9, 0.1}};
    CHECK_THROWS_AS(validate(spec), InvalidArgument);
    spec.planted = {{"SIGNATURE:x", Label::Ransomware, 0.9, 0.1}, {"SIGNATURE:x", Label::Goodware, 0.9, 0.1}};
    CHECK_THROWS_AS(validate(spec), InvalidArgument);
    spec.planted.clear();
    spec.background_rate = 1.5;
    CHECK_THROWS_AS(validate(spec), InvalidArgument);
  }

  TEST_CASE("written corpus loads back") {
    oracle::TempDir dir("synth");
    const auto corpus = generate_corpus(make_synth_spec(3, 4, 4, 9, 2));
    write_corpus(corpus, dir.path());
    const auto batch = load_report_dir(dir.path() / "reports");
    CHECK(batch.reports.size() == 8);
    CHECK(batch.skipped.empty());
    CHECK(load_metadata(dir.path() / "metadata.csv") == corpus.metadata);
  }
}
