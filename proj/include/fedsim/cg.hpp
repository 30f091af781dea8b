#pragma once

#include <cmath>
#include <string>

#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

// Conjugate gradient for an SPD operator given as a matvec callable
// apply(v, out). Starts from x = 0 and iterates until the true residual
// satisfies ||b - A x|| <= rel_tol * ||b||. Throws NumericError if the
// operator is found indefinite or the budget runs out.
template <typename MatVec>
DenseVector cg_solve(MatVec&& apply, const DenseVector& b, double rel_tol, int max_iter,
                     const char* what) {
  const std::size_t d = b.size();
  DenseVector x(d, 0.0);
  const double bnorm = norm(b);
  if (bnorm == 0.0) return x;
  const double target = rel_tol * bnorm;

  DenseVector r = b;
  DenseVector p = r;
  DenseVector ap(d, 0.0);
  double rs = squared_norm(r);

  for (int it = 0; it < max_iter; ++it) {
    apply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) {
      if (rs <= target * target) break;  // converged before breakdown
      throw NumericError(std::string(what) +
                         ": CG breakdown, operator not positive definite (p'Ap = " +
                         std::to_string(pap) + ")");
    }
    const double alpha = rs / pap;
    axpy(alpha, p, x);
    axpy(-alpha, ap, r);
    const double rs_new = squared_norm(r);
    if (std::sqrt(rs_new) <= target) {
      // Recurrence residual can drift; confirm against the true residual
      // and keep iterating if it disagrees.
      apply(x, ap);
      DenseVector tr = b;
      axpy(-1.0, ap, tr);
      const double true_rs = squared_norm(tr);
      if (std::sqrt(true_rs) <= target) return x;
      r = tr;
      p = r;
      rs = true_rs;
      continue;
    }
    const double beta = rs_new / rs;
    rs = rs_new;
    for (std::size_t j = 0; j < d; ++j) p[j] = r[j] + beta * p[j];
  }

  // Final true-residual check covers exits via the breakdown break.
  apply(x, ap);
  DenseVector tr = b;
  axpy(-1.0, ap, tr);
  if (norm(tr) <= target) return x;
  throw NumericError(std::string(what) + ": CG did not reach relative residual " +
                     std::to_string(rel_tol) + " in " + std::to_string(max_iter) +
                     " iterations");
}

}  // namespace fedsim
