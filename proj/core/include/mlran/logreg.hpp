#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlran/sparse_matrix.hpp"

namespace mlran {

struct LogRegHyper {
  double C = 1.0;             // inverse regularisation strength
  double tol = 1e-6;          // stop when max |gradient| <= tol
  std::size_t max_iter = 10000;
  std::uint64_t seed = 42;    // recorded; the solver itself is deterministic
};

struct TrainingDiagnostics {
  std::size_t iterations = 0;
  double final_loss = 0.0;
  double gradient_norm = 0.0;  // max-abs
  bool converged = false;
  std::string message;
  std::vector<double> loss_history;  // objective after each accepted step
};

// L2-regularised logistic regression. Two classes use a single weight
// vector (class 1 is positive); more classes use softmax with one weight
// vector per class.
struct LogRegModel {
  std::vector<std::string> classes;
  std::size_t n_features = 0;
  std::vector<std::vector<double>> weights;  // 1 x m (binary) or k x m
  std::vector<double> intercepts;            // 1 (binary) or k
  LogRegHyper hyper;
  TrainingDiagnostics diagnostics;

  bool binary() const noexcept { return classes.size() == 2; }
  std::size_t n_classes() const noexcept { return classes.size(); }

  // Linear score of one weight row: intercept + sum of active weights.
  double decision(std::span<const ColumnIndex> active, std::size_t row = 0) const;
  // Class probabilities for one sparse row; sums to 1.
  std::vector<double> proba(std::span<const ColumnIndex> active) const;
};

// Objective minimised by train_logreg:
//   mean cross-entropy + ||W||^2 / (2 C n)
// with intercepts unpenalised. Parameters are laid out as
//   binary:     [w_0 .. w_{m-1}, b]
//   multiclass: [w_{0,0} .. w_{0,k-1}, w_{1,0} ..., b_0 .. b_{k-1}]  (feature-major)
class LogisticObjective {
 public:
  LogisticObjective(const SparseBinaryMatrix& X, std::span<const std::uint32_t> y, std::size_t n_classes, double C);

  std::size_t dimension() const noexcept;
  // Returns the objective and writes its gradient into `grad`.
  double evaluate(std::span<const double> params, std::span<double> grad) const;

 private:
  const SparseBinaryMatrix& X_;
  std::span<const std::uint32_t> y_;
  std::size_t k_;
  double C_;
};

// Trains by L-BFGS with Armijo backtracking from the zero vector.
// Throws LengthMismatch, InvalidArgument (C <= 0, label out of range, fewer
// than two classes). Non-convergence is reported via diagnostics.converged.
LogRegModel train_logreg(const SparseBinaryMatrix& X, std::span<const std::uint32_t> y,
                         std::span<const std::string> classes, const LogRegHyper& hyper = {});

double sigmoid(double z) noexcept;

}  // namespace mlran
