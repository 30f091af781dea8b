#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "fedsim/algorithms.hpp"
#include "fedsim/duality.hpp"
#include "fedsim/model.hpp"
#include "fedsim/partition.hpp"

namespace fedsim {

enum class LabelModel { RidgePlanted, LogisticPlanted };

// Clustered sparse generator. Every example carries a bias coordinate 0
// valued 1. Each group owns a feature support made of one shared block
// (round(overlap * support_size) coordinates, common to all groups) plus a
// group-exclusive block; with overlap = 0 the supports of two groups
// intersect only in the bias coordinate. Labels come from a planted dense
// weight vector plus Gaussian noise; with noise = 0 and RidgePlanted labels
// the planted vector attains zero unregularized objective.
struct SyntheticSpec {
  std::uint32_t n = 0;  // training examples
  std::uint32_t d = 0;
  std::uint32_t groups = 1;
  std::uint32_t support_size = 8;
  double overlap = 0.0;
  std::uint32_t nnz_per_point = 4;  // nonzeros per example beyond the bias
  // Probability that a nonzero escapes the group support and lands on a
  // uniformly random coordinate instead, spreading feature presence across
  // nodes instead of the all-or-one pattern of pure supports.
  double leak = 0.0;
  LabelModel label_model = LabelModel::LogisticPlanted;
  double noise = 0.0;
  std::uint64_t seed = 0;
  // Group training sizes: 0/0 means balanced, otherwise geometric decay
  // from size_max down to size_min, rescaled to sum to n.
  std::uint32_t size_min = 0;
  std::uint32_t size_max = 0;
  // Per group, an ordered split: the first points become training data,
  // the tail becomes test data sized test_fraction of the group total.
  double test_fraction = 0.25;

  void validate() const;
};

struct SyntheticData {
  Dataset train;
  Dataset test;
  DenseVector planted_w;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Reference optimum, computed independently of the round algorithms.
// Quadratic: CG on the normal equations ((1/n) X X^T + lambda I) w = (1/n) X y
// to relative residual 1e-12. Logistic: accelerated full-batch descent at the
// curvature-safe stepsize 1/L, with function-value restarts, run until
// ||grad f(w)|| <= 1e-10; requires lambda > 0.
struct Oracle {
  DenseVector w_star;
  double f_star = 0.0;
};

Oracle oracle_solve(const Dataset& data);

struct GdConfig {
  double h = 0.0;
};

struct NaiveFsvrgConfig {
  int m = 0;
  double h = 0.0;
};

// sigma = 0 selects the safe default sigma = K.
struct DualAlgoConfig {
  double sigma = 0.0;
};

struct PrimalAlgoConfig {
  double sigma = 0.0;
};

using AlgoConfig = std::variant<GdConfig, SvrgConfig, NaiveFsvrgConfig, FsvrgConfig, DaneConfig,
                                DualAlgoConfig, PrimalAlgoConfig>;

const char* algo_name(const AlgoConfig& algo);

struct TraceRecord {
  int round = 0;
  double objective = 0.0;
  double gap = 0.0;         // objective - f_star, NaN without an oracle value
  double test_error = 0.0;  // NaN unless logistic with a test set
};

struct Trace {
  std::vector<TraceRecord> records;
  bool divergent = false;
};

struct RunConfig {
  AlgoConfig algo;
  int rounds = 0;
  int eval_every = 1;
  std::uint64_t seed = 0;
  ExecPolicy exec = ExecPolicy::Serial;
  // Starting point; zeros by default. Dual and primal methods ignore it and
  // start from alpha = 0, whose mapped primal point is also zero.
  std::optional<DenseVector> w0;
  // Reference optimum for the gap column.
  std::optional<double> f_star;
  // When false a diverging run (non-finite objective, or objective above
  // 1e3 x initial) is marked divergent and stopped instead of throwing.
  bool abort_on_divergence = true;
};

// Runs the configured algorithm round by round, evaluating the training
// objective every round (for divergence detection) and recording a trace
// entry at rounds 0, every eval_every-th round, and the final round.
Trace run_experiment(const Dataset& train, const Dataset* test, const Partition* part,
                     const RunConfig& cfg);

// {2^-10, ..., 2^4} * scale, ascending; 15 values.
std::vector<double> default_stepsize_grid(double scale = 1.0);

struct GridResult {
  double h = 0.0;
  Trace trace;
};

// Runs base once per grid value with the algorithm's stepsize replaced,
// divergent runs tolerated, and returns the run with the best final
// objective; ties break toward the smaller stepsize. Throws NumericError if
// every stepsize diverged and std::invalid_argument if the algorithm has no
// stepsize to search.
GridResult grid_search_stepsize(const Dataset& train, const Dataset* test, const Partition* part,
                                const RunConfig& base, const std::vector<double>& grid);

}  // namespace fedsim
