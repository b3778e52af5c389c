#include "mlran/logreg.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "mlran/errors.hpp"

namespace mlran {

namespace {

double softplus(double z) noexcept { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

struct Correction {
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

constexpr std::size_t kHistory = 10;
constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 60;

}  // namespace

double sigmoid(double z) noexcept {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double LogRegModel::decision(std::span<const ColumnIndex> active, std::size_t row) const {
  const auto& w = weights[row];
  double z = intercepts[row];
  for (ColumnIndex c : active) z += w[c];
  return z;
}

std::vector<double> LogRegModel::proba(std::span<const ColumnIndex> active) const {
  if (binary()) {
    const double z = decision(active);
    return {sigmoid(-z), sigmoid(z)};
  }
  std::vector<double> p(n_classes());
  for (std::size_t c = 0; c < p.size(); ++c) p[c] = decision(active, c);
  const double zmax = *std::max_element(p.begin(), p.end());
  double total = 0.0;
  for (double& v : p) total += (v = std::exp(v - zmax));
  for (double& v : p) v /= total;
  return p;
}

LogisticObjective::LogisticObjective(const SparseBinaryMatrix& X, std::span<const std::uint32_t> y,
                                     std::size_t n_classes, double C)
    : X_(X), y_(y), k_(n_classes), C_(C) {
  if (y.size() != X.rows()) throw LengthMismatch("labels and matrix rows differ");
  if (n_classes < 2) throw InvalidArgument("logistic regression needs at least two classes");
  if (!(C > 0)) throw InvalidArgument("C must be positive");
  for (auto label : y) {
    if (label >= n_classes) throw InvalidArgument("label out of range");
  }
}

std::size_t LogisticObjective::dimension() const noexcept {
  const std::size_t m = X_.cols();
  return k_ == 2 ? m + 1 : k_ * (m + 1);
}

double LogisticObjective::evaluate(std::span<const double> params, std::span<double> grad) const {
  const std::size_t m = X_.cols();
  const std::size_t n = X_.rows();
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  const double reg = n > 0 ? 1.0 / (C_ * static_cast<double>(n)) : 0.0;
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;

  if (k_ == 2) {
    const double b = params[m];
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = X_.row(i);
      double z = b;
      for (ColumnIndex c : row) z += params[c];
      const double yi = y_[i] == 1 ? 1.0 : 0.0;
      loss += softplus(z) - yi * z;
      const double r = (sigmoid(z) - yi) * inv_n;
      for (ColumnIndex c : row) grad[c] += r;
      grad[m] += r;
    }
    loss *= inv_n;
    double sq = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      sq += params[j] * params[j];
      grad[j] += reg * params[j];
    }
    return loss + 0.5 * reg * sq;
  }

  const std::size_t bias = k_ * m;
  std::vector<double> z(k_);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = X_.row(i);
    for (std::size_t c = 0; c < k_; ++c) z[c] = params[bias + c];
    for (ColumnIndex j : row) {
      const double* w = &params[static_cast<std::size_t>(j) * k_];
      for (std::size_t c = 0; c < k_; ++c) z[c] += w[c];
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::size_t c = 0; c < k_; ++c) total += std::exp(z[c] - zmax);
    loss += zmax + std::log(total) - z[y_[i]];
    for (std::size_t c = 0; c < k_; ++c) {
      z[c] = (std::exp(z[c] - zmax) / total - (c == y_[i] ? 1.0 : 0.0)) * inv_n;
    }
    for (ColumnIndex j : row) {
      double* g = &grad[static_cast<std::size_t>(j) * k_];
      for (std::size_t c = 0; c < k_; ++c) g[c] += z[c];
    }
    for (std::size_t c = 0; c < k_; ++c) grad[bias + c] += z[c];
  }
  loss *= inv_n;
  double sq = 0.0;
  for (std::size_t j = 0; j < bias; ++j) {
    sq += params[j] * params[j];
    grad[j] += reg * params[j];
  }
  return loss + 0.5 * reg * sq;
}

LogRegModel train_logreg(const SparseBinaryMatrix& X, std::span<const std::uint32_t> y,
                         std::span<const std::string> classes, const LogRegHyper& hyper) {
  const std::size_t k = classes.size();
  const LogisticObjective objective(X, y, k, hyper.C);
  const std::size_t dim = objective.dimension();

  std::vector<double> x(dim, 0.0), g(dim), x_new(dim), g_new(dim), d(dim), alpha(kHistory);
  std::deque<Correction> history;
  TrainingDiagnostics diag;
  double f = objective.evaluate(x, g);
  diag.loss_history.push_back(f);

  std::size_t iter = 0;
  for (; iter < hyper.max_iter; ++iter) {
    if (max_abs(g) <= hyper.tol) {
      diag.converged = true;
      break;
    }
    // two-loop recursion
    for (std::size_t i = 0; i < dim; ++i) d[i] = -g[i];
    for (std::size_t h = history.size(); h-- > 0;) {
      alpha[h] = history[h].rho * dot(history[h].s, d);
      for (std::size_t i = 0; i < dim; ++i) d[i] -= alpha[h] * history[h].y[i];
    }
    if (!history.empty()) {
      const auto& last = history.back();
      const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
      for (double& v : d) v *= gamma;
    }
    for (std::size_t h = 0; h < history.size(); ++h) {
      const double beta = history[h].rho * dot(history[h].y, d);
      for (std::size_t i = 0; i < dim; ++i) d[i] += (alpha[h] - beta) * history[h].s[i];
    }
    double slope = dot(g, d);
    if (!(slope < 0)) {
      history.clear();
      for (std::size_t i = 0; i < dim; ++i) d[i] = -g[i];
      slope = dot(g, d);
    }

    double step = history.empty() ? std::min(1.0, 1.0 / std::sqrt(-slope)) : 1.0;
    bool accepted = false;
    double f_new = f;
    for (int h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
      for (std::size_t i = 0; i < dim; ++i) x_new[i] = x[i] + step * d[i];
      f_new = objective.evaluate(x_new, g_new);
      if (f_new <= f + kArmijo * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!history.empty()) {
        history.clear();
        continue;
      }
      diag.message = "line search failed to decrease the objective";
      break;
    }

    Correction c{std::vector<double>(dim), std::vector<double>(dim), 0.0};
    for (std::size_t i = 0; i < dim; ++i) {
      c.s[i] = x_new[i] - x[i];
      c.y[i] = g_new[i] - g[i];
    }
    const double sy = dot(c.s, c.y);
    if (sy > 1e-12 * std::sqrt(dot(c.y, c.y) * dot(c.s, c.s))) {
      c.rho = 1.0 / sy;
      history.push_back(std::move(c));
      if (history.size() > kHistory) history.pop_front();
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    diag.loss_history.push_back(f);
  }
  if (!diag.converged && max_abs(g) <= hyper.tol) diag.converged = true;
  if (!diag.converged && diag.message.empty()) diag.message = "reached max_iter";
  diag.iterations = iter;
  diag.final_loss = f;
  diag.gradient_norm = max_abs(g);

  LogRegModel model;
  model.classes.assign(classes.begin(), classes.end());
  model.n_features = X.cols();
  model.hyper = hyper;
  model.diagnostics = std::move(diag);
  const std::size_t m = X.cols();
  if (k == 2) {
    model.weights.emplace_back(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(m));
    model.intercepts = {x[m]};
  } else {
    model.weights.assign(k, std::vector<double>(m));
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t c = 0; c < k; ++c) model.weights[c][j] = x[j * k + c];
    }
    model.intercepts.assign(x.begin() + static_cast<std::ptrdiff_t>(k * m), x.end());
  }
  return model;
}

}  // namespace mlran
