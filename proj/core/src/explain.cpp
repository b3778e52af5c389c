#include "mlran/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "mlran/errors.hpp"
#include "mlran/rng.hpp"

namespace mlran {

using nlohmann::json;

namespace {

void check_width(const LogRegModel& model, std::size_t n, std::size_t row) {
  if (n != model.n_features) {
    throw ColumnMismatch("expected " + std::to_string(model.n_features) + " columns, got " + std::to_string(n));
  }
  if (row >= model.weights.size()) throw InvalidArgument("weight row out of range");
}

std::string name_of(std::span<const std::string> names, ColumnIndex c) {
  return c < names.size() ? names[c] : std::string{};
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<double> column_means(const SparseBinaryMatrix& X) {
  std::vector<double> means(X.cols(), 0.0);
  if (X.rows() == 0) return means;
  const auto counts = X.column_counts();
  for (std::size_t c = 0; c < means.size(); ++c) means[c] = static_cast<double>(counts[c]) / static_cast<double>(X.rows());
  return means;
}

double linear_logit(const LogRegModel& model, std::span<const double> x, std::size_t row) {
  check_width(model, x.size(), row);
  const auto& w = model.weights[row];
  double z = model.intercepts[row];
  for (std::size_t j = 0; j < x.size(); ++j) z += w[j] * x[j];
  return z;
}

std::vector<Attribution> shap_linear(const LogRegModel& model, std::span<const ColumnIndex> active,
                                     std::span<const double> background_means, std::size_t row,
                                     std::span<const std::string> names) {
  check_width(model, background_means.size(), row);
  const auto& w = model.weights[row];
  std::vector<Attribution> out;
  std::size_t a = 0;
  for (std::size_t j = 0; j < background_means.size(); ++j) {
    bool on = false;
    if (a < active.size() && active[a] == j) {
      on = true;
      ++a;
    }
    if (!on && background_means[j] == 0.0) continue;
    const auto c = static_cast<ColumnIndex>(j);
    out.push_back({c, name_of(names, c), w[j] * ((on ? 1.0 : 0.0) - background_means[j])});
  }
  if (a != active.size()) throw ColumnMismatch("active column outside model width");
  return out;
}

ShapGlobalReport shap_global(const LogRegModel& model, const SparseBinaryMatrix& X_eval,
                             std::span<const double> background_means, std::size_t top_n, std::size_t row,
                             std::span<const std::string> names, std::span<const FeatureGroup> groups) {
  check_width(model, background_means.size(), row);
  if (X_eval.cols() != model.n_features) throw ColumnMismatch("evaluation matrix width differs from model");
  const auto& w = model.weights[row];
  const auto counts = X_eval.column_counts();
  const double n = static_cast<double>(X_eval.rows());

  // mean |w (x - mu)| = |w| * (f (1 - mu) + (1 - f) mu), f = active fraction
  std::vector<GlobalAttribution> all(model.n_features);
  for (std::size_t j = 0; j < all.size(); ++j) {
    const double f = n > 0 ? static_cast<double>(counts[j]) / n : 0.0;
    const double mu = background_means[j];
    const auto c = static_cast<ColumnIndex>(j);
    all[j] = {c, name_of(names, c), j < groups.size() ? std::optional(groups[j]) : std::nullopt,
              n > 0 ? std::abs(w[j]) * (f * (1.0 - mu) + (1.0 - f) * mu) : 0.0};
  }
  const std::size_t keep = std::min(top_n, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    [](const GlobalAttribution& a, const GlobalAttribution& b) {
                      if (a.mean_abs != b.mean_abs) return a.mean_abs > b.mean_abs;
                      return a.column < b.column;
                    });
  all.resize(keep);

  ShapGlobalReport report;
  report.ranked = std::move(all);
  for (const auto& g : report.ranked) {
    ++report.group_counts[g.group ? std::string(group_label(*g.group)) : std::string("UNKNOWN")];
  }
  return report;
}

LimeResult lime_explain(const ProbaFn& predict, std::span<const ColumnIndex> active, std::size_t n_cols,
                        const LimeParams& params, std::span<const std::string> names) {
  if (params.n_samples < 100) throw InvalidArgument("LIME needs at least 100 samples");
  LimeResult result;
  const std::size_t d = active.size();
  result.kernel_width = params.kernel_width.value_or(0.75 * std::sqrt(static_cast<double>(d)));
  if (d == 0) {
    result.diagnostic = "DegenerateNeighborhood: instance has no active features";
    return result;
  }

  SplitMix64 rng(params.seed);
  const std::size_t n = params.n_samples;
  Eigen::MatrixXd Z(n, d + 1);
  SparseBinaryMatrix batch(n_cols);
  std::vector<ColumnIndex> kept;
  std::vector<double> distance(n);
  for (std::size_t s = 0; s < n; ++s) {
    kept.clear();
    Z(static_cast<Eigen::Index>(s), 0) = 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      const bool keep = s == 0 || rng.bernoulli(0.5);
      Z(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j + 1)) = keep ? 1.0 : 0.0;
      if (keep) kept.push_back(active[j]);
    }
    distance[s] = static_cast<double>(d - kept.size());
    batch.add_row(std::to_string(s), kept);
  }
  if (std::all_of(distance.begin(), distance.end(), [&](double v) { return v == distance[0]; })) {
    result.diagnostic = "DegenerateNeighborhood: all perturbations are identical";
    return result;
  }

  const std::vector<double> target = predict(batch);
  if (target.size() != n) throw LengthMismatch("predict function returned the wrong number of rows");
  result.instance_probability = target[0];

  const double width2 = result.kernel_width * result.kernel_width;
  Eigen::VectorXd weight(n), y(n);
  for (std::size_t s = 0; s < n; ++s) {
    weight(static_cast<Eigen::Index>(s)) = std::exp(-distance[s] * distance[s] / width2);
    y(static_cast<Eigen::Index>(s)) = target[s];
  }

  // (Z' W Z + lambda I') beta = Z' W y, intercept unpenalised
  const Eigen::MatrixXd ZtW = Z.transpose() * weight.asDiagonal();
  Eigen::MatrixXd A = ZtW * Z;
  for (Eigen::Index j = 1; j < A.rows(); ++j) A(j, j) += params.ridge;
  const Eigen::VectorXd beta = A.ldlt().solve(ZtW * y);

  const Eigen::VectorXd fitted = Z * beta;
  const double wsum = weight.sum();
  const double ybar = weight.dot(y) / wsum;
  double ss_res = 0, ss_tot = 0;
  for (Eigen::Index s = 0; s < static_cast<Eigen::Index>(n); ++s) {
    ss_res += weight(s) * (y(s) - fitted(s)) * (y(s) - fitted(s));
    ss_tot += weight(s) * (y(s) - ybar) * (y(s) - ybar);
  }
  result.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
  result.intercept = beta(0);

  std::vector<Attribution> all;
  for (std::size_t j = 0; j < d; ++j) {
    all.push_back({active[j], name_of(names, active[j]), beta(static_cast<Eigen::Index>(j + 1))});
  }
  const std::size_t keep = std::min(params.top_k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    [](const Attribution& a, const Attribution& b) {
                      if (std::abs(a.value) != std::abs(b.value)) return std::abs(a.value) > std::abs(b.value);
                      return a.column < b.column;
                    });
  all.resize(keep);
  result.attributions = std::move(all);
  return result;
}

std::string global_to_json(const ShapGlobalReport& report) {
  json doc;
  auto& ranked = doc["ranked"] = json::array();
  for (std::size_t i = 0; i < report.ranked.size(); ++i) {
    const auto& g = report.ranked[i];
    ranked.push_back({{"rank", i + 1},
                      {"column", g.column},
                      {"feature", g.name},
                      {"group", g.group ? std::string(group_label(*g.group)) : std::string("UNKNOWN")},
                      {"mean_abs_shap", g.mean_abs}});
  }
  doc["group_counts"] = report.group_counts;
  return doc.dump(2) + "\n";
}

std::string global_to_csv(const ShapGlobalReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "feature,group,value,rank\n";
  for (std::size_t i = 0; i < report.ranked.size(); ++i) {
    const auto& g = report.ranked[i];
    out << csv_quote(g.name) << ',' << (g.group ? group_label(*g.group) : "UNKNOWN") << ',' << g.mean_abs << ','
        << i + 1 << '\n';
  }
  return out.str();
}

std::string lime_to_json(const std::vector<std::pair<std::string, LimeResult>>& explained) {
  json doc = json::array();
  for (const auto& [sample_id, r] : explained) {
    json attrs = json::array();
    for (std::size_t i = 0; i < r.attributions.size(); ++i) {
      const auto& a = r.attributions[i];
      attrs.push_back({{"rank", i + 1}, {"column", a.column}, {"feature", a.name}, {"value", a.value}});
    }
    doc.push_back({{"sample_id", sample_id},
                   {"instance_probability", r.instance_probability},
                   {"intercept", r.intercept},
                   {"r2", r.r2},
                   {"kernel_width", r.kernel_width},
                   {"diagnostic", r.diagnostic},
                   {"attributions", std::move(attrs)}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace mlran
