#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/exec.hpp"
#include "fedsim/model.hpp"
#include "fedsim/partition.hpp"

namespace fedsim {

// Dual variables for the ridge problem, blocked by node: alpha[k][j] belongs
// to example part.blocks[k][j]. This module requires quadratic loss,
// lambda > 0 and a balanced partition (n_k = n / K for every k).
struct DualState {
  std::vector<DenseVector> alpha;
  int round = 0;
};

struct DualConfig {
  explicit DualConfig(double sigma_, double cg_rel_tol_ = 1e-10);
  // Aggregation parameter in [1, K]; sigma = K is the safe choice that
  // makes every round a monotone descent on the dual.
  double sigma;
  double cg_rel_tol;
};

// alpha blocked -> flat vector indexed by global example.
DenseVector flatten_alpha(const Partition& part, const std::vector<DenseVector>& alpha);

// Dual of f(w) = (1/2n)||X^T w - y||^2 + (lambda/2)||w||^2 in minimization
// form:
//   D(alpha) = (1/(2 lambda n^2)) ||X alpha||^2 + (1/(2n)) ||alpha||^2
//              - (1/n) y^T alpha
// where X alpha = sum_i alpha_i x_i. Its negative is the usual concave dual,
// so f(w) + D(alpha) >= 0 for every pair, with equality at the optimum.
double dual_objective(const Dataset& data, const Partition& part, const DualState& state);

// Primal point w = (1/(lambda n)) X alpha associated with flat alpha.
DenseVector primal_from_dual(const Dataset& data, const DenseVector& alpha_flat);

// One round of block-separable dual descent. Every node solves its block
// subproblem exactly:
//   ((sigma/(lambda n)) X_k^T X_k + I) h_k = y_k - X_k^T w_t - alpha_k
// with w_t = (1/(lambda n)) X alpha_t, then alpha <- alpha + h. The system
// is SPD for any sigma > 0 and solved matrix-free by CG.
DualState dual_method_round(const Dataset& data, const Partition& part, const DualState& state,
                            const DualConfig& cfg, ExecPolicy exec = ExecPolicy::Serial);

// Primal-only mirror of the dual method. Node gradient corrections g_k sum
// to zero at every round.
struct PrimalMethodState {
  DenseVector w;
  std::vector<DenseVector> g;  // one correction per node
  int round = 0;
};

PrimalMethodState primal_method_init(const Dataset& data, const Partition& part,
                                     const std::vector<DenseVector>& alpha0,
                                     const DualConfig& cfg);

// One round: with eta = K / sigma and mu = lambda (eta - 1), node k solves
//   min_w F_k(w) - (grad F_k(w_t) - (eta grad F_k(w_t) + g_k))^T w
//         + (mu/2) ||w - w_t||^2
// exactly; the server averages w_{t+1} = (1/K) sum_k w_k and updates
// g_k <- g_k + lambda eta (w_k - w_{t+1}).
PrimalMethodState primal_method_round(const Dataset& data, const Partition& part,
                                      const PrimalMethodState& state, const DualConfig& cfg,
                                      ExecPolicy exec = ExecPolicy::Serial);

// Runs both methods from the same alpha0 for the given number of rounds and
// returns max_t || w_primal^t - (1/(lambda n)) X alpha_dual^t ||_2. Zero
// rounds gives exactly 0: both sides start from the same mapped point.
double check_equivalence(const Dataset& data, const Partition& part,
                         const std::vector<DenseVector>& alpha0, double sigma, int rounds,
                         ExecPolicy exec = ExecPolicy::Serial);

// f(w) + D(alpha) with D in minimization form, as above. Nonnegative for
// every (w, alpha) pair by weak duality: for any alpha the concave dual
// -D(alpha) lower-bounds f at its optimum, hence also f(w).
double duality_gap(const Dataset& data, const DenseVector& w, const DenseVector& alpha_flat);

}  // namespace fedsim
