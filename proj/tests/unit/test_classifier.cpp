#include <doctest.h>

#include "mlran/classifier.hpp"
#include "mlran/errors.hpp"
#include "mlran/rng.hpp"

using namespace mlran;

namespace {

struct Data {
  SparseBinaryMatrix X;
  std::vector<std::uint32_t> y;
  std::vector<std::string> classes;
};

Data make_data(std::size_t k) {
  SplitMix64 rng(17 + k);
  Data d{SparseBinaryMatrix(7), {}, {}};
  for (std::size_t c = 0; c < k; ++c) d.classes.push_back("class" + std::to_string(c));
  for (std::size_t r = 0; r < 90; ++r) {
    const auto label = static_cast<std::uint32_t>(r % k);
    std::vector<ColumnIndex> active;
    for (ColumnIndex c = 0; c < 7; ++c) {
      if (rng.bernoulli(c == label ? 0.85 : 0.25)) active.push_back(c);
    }
    d.X.add_row(std::to_string(r), active);
    d.y.push_back(label);
  }
  return d;
}

}  // namespace

TEST_SUITE("classifier") {
  TEST_CASE("variant names") {
    for (auto v : {ModelVariant::LogisticRegression, ModelVariant::DecisionTree, ModelVariant::RandomForest,
                   ModelVariant::ExtraTrees}) {
      CHECK(parse_model_variant(to_string(v)) == v);
    }
    CHECK_FALSE(parse_model_variant("lightgbm"));
  }

  TEST_CASE("every variant round trips through JSON") {
    for (std::size_t k : {2, 3}) {
      const auto d = make_data(k);
      ModelHyper h;
      h.n_estimators = 5;
      h.max_depth = 4;
      for (auto v : {ModelVariant::LogisticRegression, ModelVariant::DecisionTree, ModelVariant::RandomForest,
                     ModelVariant::ExtraTrees}) {
        CAPTURE(to_string(v));
        const auto model = train_classifier(v, d.X, d.y, d.classes, h);
        CHECK(variant_of(model) == v);
        CHECK(class_names(model) == d.classes);
        CHECK(feature_count(model) == 7);
        const std::string text = model_to_json(model);
        CHECK(text.find("MLRMODEL v1") != std::string::npos);
        const auto back = model_from_json(text);
        CHECK(variant_of(back) == v);
        CHECK(model_to_json(back) == text);
        CHECK(predict(back, d.X) == predict(model, d.X));
        const auto pa = predict_proba(model, d.X), pb = predict_proba(back, d.X);
        CHECK(pa.values == pb.values);
      }
    }
  }

  TEST_CASE("probabilities are valid and agree with predictions") {
    const auto d = make_data(3);
    ModelHyper h;
    h.n_estimators = 9;
    for (auto v : {ModelVariant::LogisticRegression, ModelVariant::DecisionTree, ModelVariant::ExtraTrees}) {
      const auto model = train_classifier(v, d.X, d.y, d.classes, h);
      const auto proba = predict_proba(model, d.X);
      const auto pred = predict(model, d.X);
      REQUIRE(proba.rows == d.X.rows());
      REQUIRE(proba.classes == 3);
      for (std::size_t r = 0; r < proba.rows; ++r) {
        const auto row = proba.row(r);
        double s = 0;
        std::uint32_t arg = 0;
        for (std::size_t c = 0; c < row.size(); ++c) {
          s += row[c];
          if (row[c] > row[arg]) arg = static_cast<std::uint32_t>(c);
        }
        CHECK(std::abs(s - 1) <= 1e-9);
        CHECK(pred[r] == arg);
      }
    }
  }

  TEST_CASE("width mismatches are rejected") {
    const auto d = make_data(2);
    const auto model = train_classifier(ModelVariant::DecisionTree, d.X, d.y, d.classes, {});
    SparseBinaryMatrix wide(8);
    wide.add_row("x", {});
    CHECK_THROWS_AS(predict(model, wide), ColumnMismatch);
    CHECK_THROWS_AS(predict_proba(model, wide), ColumnMismatch);
  }

  TEST_CASE("malformed model documents are rejected") {
    CHECK_THROWS_AS(model_from_json("not json"), FormatError);
    CHECK_THROWS_AS(model_from_json(R"({"version": "MLRMODEL v2"})"), FormatError);
    CHECK_THROWS_AS(model_from_json(R"({"version": "MLRMODEL v1", "variant": "lightgbm"})"), FormatError);
  }
}
