#pragma once

#include <cstdint>
#include <optional>

#include "fedsim/exec.hpp"
#include "fedsim/model.hpp"
#include "fedsim/partition.hpp"

namespace fedsim {

struct RoundState {
  DenseVector w;
  int round = 0;
};

// Mean of point gradients over the whole dataset, chunk-reduced; identical
// result under Serial and Parallel.
inline DenseVector global_gradient(const Dataset& data, const DenseVector& w,
                                   ExecPolicy exec = ExecPolicy::Serial) {
  return full_gradient(ProblemView::all(data), w, exec);
}

// One full-gradient step w - h * grad f(w); counts as one round.
RoundState gd_round(const ProblemView& view, const RoundState& state, double h,
                    ExecPolicy exec = ExecPolicy::Serial);

enum class Sampling { UniformWithReplacement, Permutation };

struct SvrgConfig {
  SvrgConfig(int m_, double h_, Sampling sampling_ = Sampling::UniformWithReplacement);
  int m;
  double h;
  Sampling sampling;
};

// Variance-reduced SGD. Each epoch anchors at the current iterate, computes
// its full gradient, then takes m inner steps
//   w <- w - h * (grad f_i(w) - grad f_i(anchor) + grad f(anchor)).
// One epoch counts as one round. The inner stream for epoch t is
// node_stream(seed, state.round + t, 0).
RoundState svrg_run(const ProblemView& view, const RoundState& state, const SvrgConfig& cfg,
                    int epochs, std::uint64_t seed);

// Minimizes F_k(w) - shift^T w + (mu/2) ||w - w_t||^2 over the node view for
// quadratic loss, where F_k(w) = (1/n_k) sum_i 0.5 (x_i^T w - y_i)^2
// + (lambda/2) ||w||^2. Solved matrix-free by CG on
//   ((1/n_k) X_k X_k^T + (lambda + mu) I) w = (1/n_k) X_k y_k + shift + mu w_t
// to relative residual cg_rel_tol, at most 10 d iterations. The Gram matrix
// is never materialized. Throws NumericError on breakdown or budget
// exhaustion, UnsupportedError for non-quadratic loss.
DenseVector exact_quadratic_subproblem(const ProblemView& view, const DenseVector& w_t,
                                       const DenseVector& shift, double mu,
                                       double cg_rel_tol = 1e-10);

enum class DaneSolver { ExactQuadratic, SvrgInner };

struct DaneConfig {
  explicit DaneConfig(double eta_ = 1.0, double mu_ = 0.0,
                      DaneSolver solver_ = DaneSolver::ExactQuadratic, int inner_m_ = 0,
                      double inner_h_ = 0.0);
  double eta;
  double mu;
  DaneSolver solver;
  // SvrgInner: one stochastic pass of inner_m uniform steps at stepsize
  // inner_h, started at w_t, drawing from node_stream(seed, round, k).
  int inner_m;
  double inner_h;
  double cg_rel_tol = 1e-10;
};

// One mirror-descent style round: every node solves
//   min_w F_k(w) - (grad F_k(w_t) - eta * grad f(w_t))^T w + (mu/2)||w - w_t||^2
// and the server averages the K solutions uniformly (uniform even when the
// partition is unbalanced).
RoundState dane_round(const Dataset& data, const Partition& part, const RoundState& state,
                      const DaneConfig& cfg, std::uint64_t seed,
                      ExecPolicy exec = ExecPolicy::Serial);

// One round of distributed SVRG without any adaptation: every node runs m
// uniform-with-replacement inner steps from w_t using the exact global
// gradient as anchor, then the server applies the mean update
//   w_{t+1} = w_t + (1/K) sum_k (w_k - w_t).
RoundState naive_fsvrg_round(const Dataset& data, const Partition& part, const RoundState& state,
                             int m, double h, std::uint64_t seed,
                             ExecPolicy exec = ExecPolicy::Serial);

struct FsvrgConfig {
  explicit FsvrgConfig(double h_, bool use_scaling_ = true, int local_passes_ = 1);
  // Global stepsize; node k steps at h / n_k.
  double h;
  // Off disables both diagonal scalings (S_k = I, A = I), keeping the local
  // stepsize and the n_k/n aggregation weights.
  bool use_scaling;
  // Number of full local permutation passes per round.
  int local_passes;
};

// One round of the federated variant. Node k runs a full pass over a fresh
// random permutation of its data at stepsize h_k = h / n_k:
//   w_k <- w_k - h_k (S_k [grad f_i(w_k) - grad f_i(w_t)] + grad f(w_t))
// where S_k rescales the entire bracketed difference, including its dense
// lambda (w_k - w_t) part. The server aggregates
//   w_{t+1} = w_t + A sum_k (n_k / n) (w_k - w_t).
RoundState fsvrg_round(const Dataset& data, const Partition& part, const SparsityStats& stats,
                       const RoundState& state, const FsvrgConfig& cfg, std::uint64_t seed,
                       ExecPolicy exec = ExecPolicy::Serial);

// Round cost accounting. Basic: I * T. Distributed: I * (c + T).
// Framework: I * (c + T), with I = log(1/epsilon) / (1 - theta) when epsilon
// is given (unit constant), otherwise the supplied iteration count.
enum class CostVariant { Basic, Distributed, Framework };

struct CostModel {
  double iterations = 0.0;
  double time_per_iter = 0.0;
  double comm_cost = 0.0;
  double theta = 0.0;
  std::optional<double> epsilon;
};

double cost_model_time(const CostModel& model, CostVariant variant);

}  // namespace fedsim
