#include "fedsim/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim {

double dot(const DenseVector& a, const DenseVector& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

double squared_norm(const DenseVector& v) { return dot(v, v); }

double norm(const DenseVector& v) { return std::sqrt(squared_norm(v)); }

void axpy(double a, const DenseVector& x, DenseVector& y) {
  for (std::size_t j = 0; j < x.size(); ++j) y[j] += a * x[j];
}

double max_abs_diff(const DenseVector& a, const DenseVector& b) {
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::fabs(a[j] - b[j]));
  return m;
}

SparseVector::SparseVector(std::uint32_t d, std::vector<std::uint32_t> indices,
                           std::vector<double> values)
    : idx(std::move(indices)), val(std::move(values)), dim(d) {
  if (idx.size() != val.size())
    throw std::invalid_argument("SparseVector: index/value length mismatch");
  for (std::size_t p = 0; p < idx.size(); ++p) {
    if (idx[p] >= dim) throw std::invalid_argument("SparseVector: index out of range");
    if (p > 0 && idx[p] <= idx[p - 1])
      throw std::invalid_argument("SparseVector: indices must be strictly increasing");
    if (val[p] == 0.0) throw std::invalid_argument("SparseVector: stored zero value");
    if (!std::isfinite(val[p])) throw std::invalid_argument("SparseVector: non-finite value");
  }
}

double SparseVector::dot_dense(const DenseVector& w) const {
  double s = 0.0;
  for (std::size_t p = 0; p < idx.size(); ++p) s += val[p] * w[idx[p]];
  return s;
}

void SparseVector::add_scaled_to(double a, DenseVector& y) const {
  for (std::size_t p = 0; p < idx.size(); ++p) y[idx[p]] += a * val[p];
}

static void check_logistic_label(double y) {
  if (y != 1.0 && y != -1.0)
    throw std::invalid_argument("logistic loss requires labels in {-1, +1}, got " +
                                std::to_string(y));
}

double loss_value(LossKind kind, double t, double y) {
  switch (kind) {
    case LossKind::Quadratic: {
      const double r = t - y;
      return 0.5 * r * r;
    }
    case LossKind::Logistic: {
      check_logistic_label(y);
      // log(1 + exp(z)) with z = -y*t, stable for large |z|.
      const double z = -y * t;
      if (z > 0.0) return z + std::log1p(std::exp(-z));
      return std::log1p(std::exp(z));
    }
  }
  throw std::invalid_argument("unknown loss kind");
}

double loss_derivative(LossKind kind, double t, double y) {
  switch (kind) {
    case LossKind::Quadratic:
      return t - y;
    case LossKind::Logistic: {
      check_logistic_label(y);
      // -y * sigmoid(-y*t), evaluated without overflow.
      const double z = y * t;
      if (z >= 0.0) {
        const double e = std::exp(-z);
        return -y * e / (1.0 + e);
      }
      return -y / (1.0 + std::exp(z));
    }
  }
  throw std::invalid_argument("unknown loss kind");
}

double loss_conjugate(LossKind kind, double s, double y) {
  if (kind != LossKind::Quadratic)
    throw UnsupportedError("loss_conjugate: defined for quadratic loss only");
  return 0.5 * s * s + s * y;
}

void Dataset::validate() const {
  if (x.empty()) throw std::invalid_argument("Dataset: no examples");
  if (y.size() != x.size()) throw std::invalid_argument("Dataset: label count mismatch");
  if (!groups.empty() && groups.size() != x.size())
    throw std::invalid_argument("Dataset: group label count mismatch");
  if (lambda < 0.0 || !std::isfinite(lambda))
    throw std::invalid_argument("Dataset: lambda must be finite and >= 0");
  for (const auto& xi : x)
    if (xi.dim != dim) throw std::invalid_argument("Dataset: feature dim mismatch");
  for (double yi : y) {
    if (!std::isfinite(yi)) throw std::invalid_argument("Dataset: non-finite label");
    if (loss == LossKind::Logistic) check_logistic_label(yi);
  }
}

double objective(const ProblemView& view, const DenseVector& w) {
  const std::size_t m = view.size();
  if (m == 0) throw std::invalid_argument("objective: empty view");
  const Dataset& data = view.dataset();
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    s += loss_value(data.loss, view.x(i).dot_dense(w), view.y(i));
  return s / static_cast<double>(m) + 0.5 * data.lambda * squared_norm(w);
}

double point_margin_derivative(const ProblemView& view, std::size_t i, const DenseVector& w) {
  if (i >= view.size()) throw std::invalid_argument("point_margin_derivative: index out of view");
  return loss_derivative(view.dataset().loss, view.x(i).dot_dense(w), view.y(i));
}

DenseVector point_gradient(const ProblemView& view, std::size_t i, const DenseVector& w) {
  const double c = point_margin_derivative(view, i, w);
  DenseVector g(w.size(), 0.0);
  view.x(i).add_scaled_to(c, g);
  axpy(view.dataset().lambda, w, g);
  return g;
}

// Chunk width for the deterministic gradient reduction. Fixed so the
// summation tree does not depend on thread count.
static constexpr std::size_t kGradChunk = 256;

DenseVector full_gradient(const ProblemView& view, const DenseVector& w, ExecPolicy exec) {
  const std::size_t m = view.size();
  if (m == 0) throw std::invalid_argument("full_gradient: empty view");
  const Dataset& data = view.dataset();
  const std::size_t d = w.size();
  const std::size_t nchunks = (m + kGradChunk - 1) / kGradChunk;

  std::vector<DenseVector> partial(nchunks);
  for_each_task(static_cast<int>(nchunks), exec, [&](int c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kGradChunk;
    const std::size_t hi = std::min(lo + kGradChunk, m);
    DenseVector acc(d, 0.0);
    for (std::size_t i = lo; i < hi; ++i) {
      const double ci = loss_derivative(data.loss, view.x(i).dot_dense(w), view.y(i));
      view.x(i).add_scaled_to(ci, acc);
    }
    partial[static_cast<std::size_t>(c)] = std::move(acc);
  });

  DenseVector g(d, 0.0);
  for (std::size_t c = 0; c < nchunks; ++c) axpy(1.0, partial[c], g);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < d; ++j) g[j] = g[j] * inv_m + data.lambda * w[j];
  return g;
}

double classification_error(const Dataset& data, const DenseVector& w) {
  if (data.loss != LossKind::Logistic)
    throw UnsupportedError("classification_error: logistic datasets only");
  if (data.x.empty()) throw std::invalid_argument("classification_error: empty dataset");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double t = data.x[i].dot_dense(w);
    const double pred = (t >= 0.0) ? 1.0 : -1.0;  // sign(0) = +1
    if (pred != data.y[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(data.n());
}

}  // namespace fedsim
