#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "mlran/errors.hpp"
#include "mlran/rng.hpp"
#include "mlran/selection.hpp"
#include "oracles.hpp"

using namespace mlran;

namespace {

std::vector<std::uint8_t> u8(std::initializer_list<int> v) { return {v.begin(), v.end()}; }
std::vector<std::uint32_t> u32(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

struct RandomData {
  SparseBinaryMatrix X;
  std::vector<std::uint32_t> y;
  std::vector<std::vector<int>> dense;  // column-major
};

RandomData random_columns(SplitMix64& rng, std::size_t rows, std::size_t cols, std::size_t k) {
  RandomData d{SparseBinaryMatrix(cols), {}, std::vector<std::vector<int>>(cols)};
  for (std::size_t r = 0; r < rows; ++r) {
    const auto label = static_cast<std::uint32_t>(rng.below(k));
    d.y.push_back(label);
    std::vector<ColumnIndex> active;
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = 0.2 + 0.6 * ((c + label) % 3) / 2.0;
      const bool on = rng.bernoulli(p);
      d.dense[c].push_back(on);
      if (on) active.push_back(static_cast<ColumnIndex>(c));
    }
    d.X.add_row(std::to_string(r), active);
  }
  return d;
}

// Informative columns first, then noise.
RandomData planted_data(std::uint64_t seed, std::size_t rows, std::size_t informative, std::size_t noise) {
  SplitMix64 rng(seed);
  const std::size_t cols = informative + noise;
  RandomData d{SparseBinaryMatrix(cols), {}, {}};
  for (std::size_t r = 0; r < rows; ++r) {
    const auto label = static_cast<std::uint32_t>(r % 2);
    d.y.push_back(label);
    std::vector<ColumnIndex> active;
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = c < informative ? (label == c % 2 ? 0.9 : 0.05) : 0.3;
      if (rng.bernoulli(p)) active.push_back(static_cast<ColumnIndex>(c));
    }
    d.X.add_row(std::to_string(r), active);
  }
  return d;
}

std::vector<std::string> two_classes() { return {"goodware", "ransomware"}; }

}  // namespace

TEST_SUITE("selection") {
  TEST_CASE("mutual information examples") {
    CHECK(std::abs(mutual_information(u8({0, 0, 1, 1}), u32({0, 1, 0, 1}))) <= 1e-12);
    CHECK(mutual_information(u8({0, 0, 1, 1}), u32({0, 0, 1, 1})) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(mutual_information(u8({1, 1, 1, 0}), u32({1, 1, 0, 0})) == doctest::Approx(0.215762).epsilon(1e-6));
    CHECK(mutual_information(u8({1, 1, 1, 0}), u32({1, 1, 0, 0})) ==
          doctest::Approx(oracle::mutual_information({1, 1, 1, 0}, {1, 1, 0, 0})).epsilon(1e-12));
  }

  TEST_CASE("chi-square examples") {
    CHECK(chi_square(u8({0, 0, 1, 1}), u32({0, 1, 0, 1})) == doctest::Approx(0.0));
    CHECK(chi_square(u8({0, 0, 1, 1}), u32({0, 0, 1, 1})) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(chi_square(u8({1, 1, 1, 0}), u32({1, 1, 0, 0})) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(chi_square(u8({1, 1, 1, 1}), u32({1, 1, 0, 0})) == 0.0);
  }

  TEST_CASE("alignment errors") {
    CHECK_THROWS_AS(mutual_information(u8({0, 1}), u32({0})), LengthMismatch);
    CHECK_THROWS_AS(chi_square(u8({0, 1}), u32({0})), LengthMismatch);
    CHECK_THROWS_AS(mutual_information(u8({}), u32({})), InvalidArgument);
  }

  TEST_CASE("sparse scoring matches the dense oracles") {
    SplitMix64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t rows = 1 + rng.below(64);
      const std::size_t cols = 1 + rng.below(8);
      const std::size_t k = 2 + rng.below(2);
      const auto d = random_columns(rng, rows, cols, k);
      const std::vector<int> y(d.y.begin(), d.y.end());
      const auto mi = score_columns(d.X, d.y, k, ScoreMethod::MutualInformation);
      const auto chi = score_columns(d.X, d.y, k, ScoreMethod::ChiSquare);
      for (std::size_t c = 0; c < cols; ++c) {
        const double ref = oracle::mutual_information(d.dense[c], y);
        CHECK(std::abs(mi[c] - ref) <= 1e-12);
        CHECK(std::abs(chi[c] - oracle::chi_square(d.dense[c], y, k)) <= 1e-9 * std::max(1.0, chi[c]));
        CHECK(mi[c] >= 0.0);
        CHECK(mi[c] <= std::min(oracle::entropy(d.dense[c]), oracle::entropy(y)) + 1e-12);
      }
    }
  }

  TEST_CASE("scores are invariant under row permutation") {
    SplitMix64 rng(9);
    const auto d = random_columns(rng, 40, 6, 3);
    std::vector<std::size_t> perm(40);
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<std::uint32_t> y2;
    for (auto p : perm) y2.push_back(d.y[p]);
    const auto X2 = d.X.select_rows(perm);
    for (auto m : {ScoreMethod::MutualInformation, ScoreMethod::ChiSquare}) {
      const auto a = score_columns(d.X, d.y, 3, m);
      const auto b = score_columns(X2, y2, 3, m);
      for (std::size_t c = 0; c < a.size(); ++c) CHECK(a[c] == doctest::Approx(b[c]).epsilon(1e-12));
    }
  }

  TEST_CASE("threshold is strict and group-wise equals global") {
    SplitMix64 rng(5);
    const auto d = random_columns(rng, 60, 9, 2);
    const auto scores = score_columns(d.X, d.y, 2, ScoreMethod::MutualInformation);
    std::vector<FeatureGroup> groups;
    for (std::size_t c = 0; c < 9; ++c) groups.push_back(kAllFeatureGroups[c / 3]);

    const double threshold = scores[4];
    const auto m = filter_by_threshold(d.X, d.y, 2, groups, ScoreMethod::MutualInformation, threshold);
    std::vector<ColumnIndex> expected;
    for (std::size_t c = 0; c < 9; ++c) {
      if (scores[c] > threshold) expected.push_back(static_cast<ColumnIndex>(c));
    }
    CHECK(m.kept_columns == expected);
    CHECK(std::find(m.kept_columns.begin(), m.kept_columns.end(), 4u) == m.kept_columns.end());
    REQUIRE(m.scores.has_value());
    CHECK(m.scores->size() == m.kept_columns.size());
    CHECK(m.stage == SelectionStage::MiFilter);
    std::size_t before = 0, after = 0;
    for (const auto& [g, c] : m.per_group_counts) {
      before += c.before;
      after += c.after;
    }
    CHECK(before == 9);
    CHECK(after == expected.size());
  }

  TEST_CASE("planted column survives the filter and noise does not") {
    const auto d = planted_data(3, 400, 1, 1);
    const std::vector<FeatureGroup> groups{FeatureGroup::Api, FeatureGroup::String};
    const auto m = filter_by_threshold(d.X, d.y, 2, groups, ScoreMethod::MutualInformation, 0.01);
    CHECK(m.kept_columns == std::vector<ColumnIndex>{0});
  }

  TEST_CASE("constant columns score zero") {
    SparseBinaryMatrix X(2);
    const std::vector<ColumnIndex> on{0};
    for (int i = 0; i < 4; ++i) X.add_row(std::to_string(i), on);
    const auto y = u32({0, 1, 0, 1});
    const auto s = score_columns(X, y, 2, ScoreMethod::MutualInformation);
    CHECK(s == std::vector<double>{0.0, 0.0});
    const std::vector<FeatureGroup> groups{FeatureGroup::Api, FeatureGroup::Api};
    CHECK(filter_by_threshold(X, y, 2, groups, ScoreMethod::MutualInformation, 0.0).kept_columns.empty());
  }

  TEST_CASE("rfe batch schedule") {
    std::size_t k = 10, rounds = 0;
    while (k > 5) {
      const auto b = rfe_batch_size(k, 5, 0.1);
      CHECK(b == 1);
      k -= b;
      ++rounds;
    }
    CHECK(rounds == 5);
    CHECK(rfe_batch_size(100, 95, 0.1) == 5);
    CHECK(rfe_batch_size(100, 10, 0.1) == 10);
    CHECK(rfe_batch_size(101, 10, 0.1) == 11);
    CHECK(rfe_batch_size(10, 10, 0.1) == 0);
  }

  TEST_CASE("rfe removes one column per round on ten columns") {
    const auto d = planted_data(8, 200, 4, 6);
    RfeParams p;
    p.target_count = 5;
    const auto m = rfe(d.X, d.y, two_classes(), p);
    CHECK(m.kept_columns.size() == 5);
    CHECK(m.elimination_order.size() == 5);
    CHECK(std::is_sorted(m.kept_columns.begin(), m.kept_columns.end()));
    for (ColumnIndex c = 0; c < 4; ++c) {
      CHECK(std::find(m.kept_columns.begin(), m.kept_columns.end(), c) != m.kept_columns.end());
    }
    std::set<ColumnIndex> all(m.kept_columns.begin(), m.kept_columns.end());
    all.insert(m.elimination_order.begin(), m.elimination_order.end());
    CHECK(all.size() == 10);
  }

  TEST_CASE("rfe at the current count is the identity") {
    const auto d = planted_data(8, 100, 2, 3);
    RfeParams p;
    p.target_count = 5;
    const auto m = rfe(d.X, d.y, two_classes(), p);
    CHECK(m.kept_columns == std::vector<ColumnIndex>{0, 1, 2, 3, 4});
    CHECK(m.elimination_order.empty());
    REQUIRE(m.scores.has_value());
    CHECK(m.scores->size() == 5);
  }

  TEST_CASE("rfe argument errors") {
    const auto d = planted_data(8, 50, 2, 3);
    RfeParams p;
    p.target_count = 6;
    CHECK_THROWS_AS(rfe(d.X, d.y, two_classes(), p), TargetTooLarge);
    p.target_count = 0;
    CHECK_THROWS_AS(rfe(d.X, d.y, two_classes(), p), InvalidArgument);
    p.target_count = 2;
    p.step_fraction = 1.0;
    CHECK_THROWS_AS(rfe(d.X, d.y, two_classes(), p), InvalidArgument);
  }

  TEST_CASE("rfe survivors are nested across targets") {
    const auto d = planted_data(21, 300, 6, 34);
    std::vector<ColumnIndex> previous;
    for (std::size_t target : {30, 20, 12, 6, 3}) {
      RfeParams p;
      p.target_count = target;
      const auto m = rfe(d.X, d.y, two_classes(), p);
      if (!previous.empty()) {
        CHECK(std::includes(previous.begin(), previous.end(), m.kept_columns.begin(), m.kept_columns.end()));
      }
      previous = m.kept_columns;
    }
  }

  TEST_CASE("multiclass rfe ranks by coefficient norm") {
    SplitMix64 rng(4);
    SparseBinaryMatrix X(6);
    std::vector<std::uint32_t> y;
    for (int r = 0; r < 300; ++r) {
      const auto label = static_cast<std::uint32_t>(r % 3);
      y.push_back(label);
      std::vector<ColumnIndex> active;
      for (ColumnIndex c = 0; c < 6; ++c) {
        const double p = c < 3 ? (c == label ? 0.95 : 0.05) : 0.5;
        if (rng.bernoulli(p)) active.push_back(c);
      }
      X.add_row(std::to_string(r), active);
    }
    RfeParams p;
    p.target_count = 3;
    const std::vector<std::string> classes{"a", "b", "c"};
    CHECK(rfe(X, y, classes, p).kept_columns == std::vector<ColumnIndex>{0, 1, 2});
  }

  TEST_CASE("sweep counts") {
    CHECK(sweep_count(2, 24162) == 483);
    CHECK(sweep_count(100, 37) == 37);
    CHECK(sweep_count(1, 50) == 0);
  }

  TEST_CASE("sweep at full width matches the unselected baseline") {
    const auto train = planted_data(1, 200, 4, 16);
    const auto eval = planted_data(2, 100, 4, 16);
    const double pct[] = {100, 1, 20};
    const auto sweep = rfe_sweep(train.X, train.y, eval.X, eval.y, two_classes(), pct, 0.1, {});
    REQUIRE(sweep.entries.size() == 3);
    const auto model = train_logreg(train.X, train.y, two_classes());
    std::vector<std::uint32_t> pred;
    for (std::size_t r = 0; r < eval.X.rows(); ++r) {
      const auto pr = model.proba(eval.X.row(r));
      pred.push_back(pr[1] > pr[0] ? 1 : 0);
    }
    REQUIRE(sweep.entries[0].balanced_accuracy.has_value());
    CHECK(*sweep.entries[0].balanced_accuracy == doctest::Approx(oracle::balanced_accuracy(eval.y, pred)));
    CHECK(sweep.entries[1].error.has_value());
    CHECK(sweep.entries[2].count == 4);
    REQUIRE(sweep.best_count.has_value());
    double best = -1;
    std::size_t best_count = 0;
    for (const auto& e : sweep.entries) {
      if (e.balanced_accuracy && (*e.balanced_accuracy > best || (*e.balanced_accuracy == best && e.count < best_count))) {
        best = *e.balanced_accuracy;
        best_count = e.count;
      }
    }
    CHECK(*sweep.best_count == best_count);
    CHECK(std::set<ColumnIndex>(sweep.entries[2].survivors.begin(), sweep.entries[2].survivors.end()) ==
          std::set<ColumnIndex>{0, 1, 2, 3});
    const auto json = sweep_to_json(sweep);
    CHECK(json.find("\"best_count\"") != std::string::npos);
  }

  TEST_CASE("manifest JSON round trips") {
    SelectionManifest m;
    m.stage = SelectionStage::Rfe;
    m.params = {{"target_count", 40}, {"step", 0.1}};
    m.kept_columns = {1, 5, 9};
    m.scores = std::vector<double>{0.1, 0.25, 1e-17};
    m.per_group_counts = {{"API", {10, 2}}, {"SIG", {3, 1}}};
    m.elimination_order = {7, 3};
    m.warnings = {"ranker did not converge"};
    m.input_digest = std::string(64, 'f');
    const auto back = manifest_from_json(manifest_to_json(m));
    CHECK(back.stage == m.stage);
    CHECK(back.params == m.params);
    CHECK(back.kept_columns == m.kept_columns);
    CHECK(back.scores == m.scores);
    CHECK(back.per_group_counts.at("API").before == 10);
    CHECK(back.per_group_counts.at("SIG").after == 1);
    CHECK(back.elimination_order == m.elimination_order);
    CHECK(back.warnings == m.warnings);
    CHECK(back.input_digest == m.input_digest);
    CHECK_THROWS_AS(manifest_from_json("{}"), FormatError);
  }

  TEST_CASE("compose maps nested selections back") {
    const std::vector<ColumnIndex> outer{2, 5, 7, 11};
    const std::vector<ColumnIndex> inner{0, 3};
    CHECK(compose_columns(outer, inner) == std::vector<ColumnIndex>{2, 11});
  }

  TEST_CASE("dataset digest depends on labels") {
    const auto d = planted_data(1, 10, 1, 1);
    auto y = d.y;
    const auto a = dataset_digest(d.X, y);
    CHECK(a.size() == 64);
    y[0] ^= 1;
    CHECK(dataset_digest(d.X, y) != a);
  }
}
