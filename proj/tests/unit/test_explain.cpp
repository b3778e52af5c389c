#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mlran/errors.hpp"
#include "mlran/explain.hpp"
#include "mlran/rng.hpp"
#include "oracles.hpp"

using namespace mlran;

namespace {

LogRegModel linear(std::vector<double> w, double b) {
  LogRegModel m;
  m.classes = {"goodware", "ransomware"};
  m.n_features = w.size();
  m.weights = {std::move(w)};
  m.intercepts = {b};
  return m;
}

ProbaFn positive_proba(const LogRegModel& m) {
  return [&m](const SparseBinaryMatrix& Z) {
    std::vector<double> out;
    for (std::size_t r = 0; r < Z.rows(); ++r) out.push_back(m.proba(Z.row(r))[1]);
    return out;
  };
}

double sum(const std::vector<Attribution>& a) {
  double s = 0;
  for (const auto& x : a) s += x.value;
  return s;
}

}  // namespace

TEST_SUITE("explain") {
  TEST_CASE("two feature worked example") {
    const auto m = linear({2, -1}, 0);
    const std::vector<double> mu{0.5, 0.5};
    const std::vector<ColumnIndex> x{0, 1};
    const auto phi = shap_linear(m, x, mu);
    REQUIRE(phi.size() == 2);
    CHECK(phi[0].value == doctest::Approx(1.0));
    CHECK(phi[1].value == doctest::Approx(-0.5));
    CHECK(sum(phi) == doctest::Approx(m.decision(x) - linear_logit(m, mu)));
    CHECK(sum(phi) == doctest::Approx(0.5));
  }

  TEST_CASE("x equal to the background gives zero attributions") {
    const auto m = linear({0.3, -2, 5}, 1);
    const std::vector<double> mu{1, 0, 1};
    const std::vector<ColumnIndex> x{0, 2};
    for (const auto& a : shap_linear(m, x, mu)) CHECK(a.value == 0.0);
  }

  TEST_CASE("zero weights give zero attributions") {
    const auto m = linear({0, 1.5, 0}, 0);
    const std::vector<double> mu{0.2, 0.4, 0.9};
    const std::vector<ColumnIndex> x{0, 1};
    for (const auto& a : shap_linear(m, x, mu)) {
      if (a.column != 1) CHECK(a.value == 0.0);
    }
  }

  TEST_CASE("completeness on random models") {
    SplitMix64 rng(10);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + rng.below(30);
      std::vector<double> w(n), mu(n);
      for (std::size_t i = 0; i < n; ++i) {
        w[i] = rng.bernoulli(0.2) ? 0.0 : 6 * rng.uniform() - 3;
        mu[i] = rng.uniform();
      }
      const auto m = linear(w, 2 * rng.uniform() - 1);
      std::vector<ColumnIndex> x;
      for (std::size_t i = 0; i < n; ++i) {
        if (rng.bernoulli(0.5)) x.push_back(static_cast<ColumnIndex>(i));
      }
      const auto phi = shap_linear(m, x, mu);
      CHECK(std::abs(sum(phi) - (m.decision(x) - linear_logit(m, mu))) <= 1e-9);
      for (const auto& a : phi) {
        if (w[a.column] == 0.0) CHECK(a.value == 0.0);
      }
    }
  }

  TEST_CASE("width mismatch") {
    const auto m = linear({1, 1}, 0);
    const std::vector<double> mu{0.5};
    CHECK_THROWS_AS(shap_linear(m, {}, mu), ColumnMismatch);
  }

  TEST_CASE("global ranking survives duplicating the evaluation set") {
    const auto m = linear({0.1, -3, 2, 0}, 0.5);
    SparseBinaryMatrix X(4), XX(4);
    SplitMix64 rng(1);
    for (int r = 0; r < 30; ++r) {
      std::vector<ColumnIndex> act;
      for (ColumnIndex c = 0; c < 4; ++c) {
        if (rng.bernoulli(0.5)) act.push_back(c);
      }
      X.add_row(std::to_string(r), act);
      XX.add_row(std::to_string(r), act);
      XX.add_row(std::to_string(r) + "b", act);
    }
    const auto mu = column_means(X);
    const std::vector<FeatureGroup> groups{FeatureGroup::Api, FeatureGroup::Api, FeatureGroup::Signature,
                                           FeatureGroup::Signature};
    const auto a = shap_global(m, X, mu, 3, 0, {}, groups);
    const auto b = shap_global(m, XX, mu, 3, 0, {}, groups);
    REQUIRE(a.ranked.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a.ranked[i].column == b.ranked[i].column);
      CHECK(a.ranked[i].mean_abs == doctest::Approx(b.ranked[i].mean_abs));
    }
    CHECK(a.ranked[0].column == 1);
    std::size_t total = 0;
    for (const auto& [_, c] : a.group_counts) total += c;
    CHECK(total == 3);
  }

  TEST_CASE("single feature model ranks that feature first") {
    const auto m = linear({0.7}, 0);
    SparseBinaryMatrix X(1);
    X.add_row("a", std::vector<ColumnIndex>{0});
    X.add_row("b", {});
    const auto g = shap_global(m, X, column_means(X), 5);
    REQUIRE(g.ranked.size() == 1);
    CHECK(g.ranked[0].column == 0);
  }

  TEST_CASE("lime on an empty instance is degenerate") {
    const auto m = linear({1, 2}, 0);
    const auto r = lime_explain(positive_proba(m), {}, 2);
    CHECK(r.attributions.empty());
    CHECK(r.diagnostic.find("DegenerateNeighborhood") == 0);
    LimeParams p;
    p.n_samples = 99;
    const std::vector<ColumnIndex> x{0};
    CHECK_THROWS_AS(lime_explain(positive_proba(m), x, 2, p), InvalidArgument);
  }

  TEST_CASE("lime is deterministic under a fixed seed") {
    const auto m = linear({1, -2, 0.5, 3, -1}, 0);
    const std::vector<ColumnIndex> x{0, 1, 2, 3, 4};
    LimeParams p;
    p.n_samples = 1000;
    const auto a = lime_explain(positive_proba(m), x, 5, p);
    const auto b = lime_explain(positive_proba(m), x, 5, p);
    REQUIRE(a.attributions.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(a.attributions[i].column == b.attributions[i].column);
      CHECK(a.attributions[i].value == b.attributions[i].value);
    }
    CHECK(a.r2 == b.r2);
    CHECK(a.kernel_width == doctest::Approx(0.75 * std::sqrt(5.0)));
    CHECK(a.instance_probability == doctest::Approx(m.proba(x)[1]));
  }

  TEST_CASE("lime signs follow the generating weights") {
    const std::vector<double> w{1.5, -0.8, 0.6, -2.0, 1.1};
    const auto m = linear(w, -0.5);
    const std::vector<ColumnIndex> x{0, 1, 2, 3, 4};
    LimeParams p;
    p.n_samples = 5000;
    const auto r = lime_explain(positive_proba(m), x, 5, p);
    REQUIRE(r.attributions.size() == 5);
    for (const auto& a : r.attributions) CHECK((a.value > 0) == (w[a.column] > 0));
    for (std::size_t i = 1; i < r.attributions.size(); ++i) {
      CHECK(std::abs(r.attributions[i - 1].value) >= std::abs(r.attributions[i].value));
    }
  }
}
