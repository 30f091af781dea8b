#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/exec.hpp"

namespace fedsim {

using DenseVector = std::vector<double>;

double dot(const DenseVector& a, const DenseVector& b);
double squared_norm(const DenseVector& v);
double norm(const DenseVector& v);
// y += a * x
void axpy(double a, const DenseVector& x, DenseVector& y);
double max_abs_diff(const DenseVector& a, const DenseVector& b);

// Canonical sparse row: indices strictly increasing, values nonzero,
// all indices < dim.
struct SparseVector {
  std::vector<std::uint32_t> idx;
  std::vector<double> val;
  std::uint32_t dim = 0;

  SparseVector() = default;
  // Validating constructor; throws std::invalid_argument on a non-canonical
  // entry list.
  SparseVector(std::uint32_t dim, std::vector<std::uint32_t> indices,
               std::vector<double> values);

  std::size_t nnz() const { return idx.size(); }
  double dot_dense(const DenseVector& w) const;
  // y += a * this
  void add_scaled_to(double a, DenseVector& y) const;
};

enum class LossKind { Quadratic, Logistic };

// phi(t; y) for one example. Quadratic: 0.5*(t-y)^2 with real-valued y.
// Logistic: log(1 + exp(-y*t)) with y in {-1, +1}. Both overflow-safe for
// |t| up to 1e4 and beyond.
double loss_value(LossKind kind, double t, double y);
// d/dt phi(t; y)
double loss_derivative(LossKind kind, double t, double y);
// Convex conjugate phi*(s; y) = sup_t (s*t - phi(t; y)). Defined for
// Quadratic only: s^2/2 + s*y. Logistic throws UnsupportedError.
double loss_conjugate(LossKind kind, double s, double y);

struct Dataset {
  std::vector<SparseVector> x;
  std::vector<double> y;
  std::uint32_t dim = 0;
  LossKind loss = LossKind::Quadratic;
  double lambda = 0.0;
  // Optional cluster label per example (size n or empty).
  std::vector<std::uint32_t> groups;

  std::size_t n() const { return x.size(); }
  // Throws std::invalid_argument if the dataset is inconsistent: empty,
  // mismatched sizes, feature dim mismatch, labels invalid for the loss,
  // or lambda < 0.
  void validate() const;
};

// A dataset restricted to a subset of examples. Local index i in [0, size)
// maps to a global example index. indices == nullptr means the full dataset.
class ProblemView {
 public:
  static ProblemView all(const Dataset& data) { return ProblemView(&data, nullptr); }
  static ProblemView subset(const Dataset& data, const std::vector<std::uint32_t>& indices) {
    return ProblemView(&data, &indices);
  }

  std::size_t size() const { return idx_ ? idx_->size() : data_->n(); }
  std::uint32_t global(std::size_t i) const {
    return idx_ ? (*idx_)[i] : static_cast<std::uint32_t>(i);
  }
  const SparseVector& x(std::size_t i) const { return data_->x[global(i)]; }
  double y(std::size_t i) const { return data_->y[global(i)]; }
  const Dataset& dataset() const { return *data_; }

 private:
  ProblemView(const Dataset* data, const std::vector<std::uint32_t>* idx)
      : data_(data), idx_(idx) {}
  const Dataset* data_;
  const std::vector<std::uint32_t>* idx_;
};

// f(w) over the view: (1/m) sum_i phi(x_i^T w; y_i) + (lambda/2) ||w||^2.
// Every per-example term f_i carries the full regularizer, so the mean of
// point gradients equals the gradient of this function.
double objective(const ProblemView& view, const DenseVector& w);

// phi'(x_i^T w; y_i) for local index i; the sparse part of the point
// gradient is this scalar times x_i, the dense part is lambda * w.
double point_margin_derivative(const ProblemView& view, std::size_t i, const DenseVector& w);

// grad f_i(w) = phi'(x_i^T w) * x_i + lambda * w, materialized dense.
DenseVector point_gradient(const ProblemView& view, std::size_t i, const DenseVector& w);

// grad f(w), the mean of point gradients over the view. Summation runs over
// fixed-size index chunks merged in order, so the result is identical for
// Serial and Parallel policies and for any thread count.
DenseVector full_gradient(const ProblemView& view, const DenseVector& w,
                          ExecPolicy exec = ExecPolicy::Serial);

// Fraction of examples with sign(x_i^T w) != y_i, sign(0) = +1.
// Logistic datasets only.
double classification_error(const Dataset& data, const DenseVector& w);

}  // namespace fedsim
