#include "fedsim/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fedsim/cg.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

SvrgConfig::SvrgConfig(int m_, double h_, Sampling sampling_)
    : m(m_), h(h_), sampling(sampling_) {
  if (m < 1) throw std::invalid_argument("SvrgConfig: m must be >= 1");
  if (!(h > 0.0) || !std::isfinite(h))
    throw std::invalid_argument("SvrgConfig: h must be positive and finite");
}

DaneConfig::DaneConfig(double eta_, double mu_, DaneSolver solver_, int inner_m_, double inner_h_)
    : eta(eta_), mu(mu_), solver(solver_), inner_m(inner_m_), inner_h(inner_h_) {
  if (!(eta > 0.0) || !std::isfinite(eta))
    throw std::invalid_argument("DaneConfig: eta must be positive and finite");
  if (mu < 0.0 || !std::isfinite(mu))
    throw std::invalid_argument("DaneConfig: mu must be >= 0 and finite");
  if (solver == DaneSolver::SvrgInner) {
    if (inner_m < 1) throw std::invalid_argument("DaneConfig: inner_m must be >= 1");
    if (!(inner_h > 0.0) || !std::isfinite(inner_h))
      throw std::invalid_argument("DaneConfig: inner_h must be positive and finite");
  }
}

FsvrgConfig::FsvrgConfig(double h_, bool use_scaling_, int local_passes_)
    : h(h_), use_scaling(use_scaling_), local_passes(local_passes_) {
  if (!(h > 0.0) || !std::isfinite(h))
    throw std::invalid_argument("FsvrgConfig: h must be positive and finite");
  if (local_passes < 1) throw std::invalid_argument("FsvrgConfig: local_passes must be >= 1");
}

RoundState gd_round(const ProblemView& view, const RoundState& state, double h, ExecPolicy exec) {
  if (h < 0.0 || !std::isfinite(h)) throw std::invalid_argument("gd_round: invalid stepsize");
  DenseVector g = full_gradient(view, state.w, exec);
  RoundState next;
  next.w = state.w;
  axpy(-h, g, next.w);
  next.round = state.round + 1;
  return next;
}

namespace {

// One variance-reduced stochastic pass over the examples listed in `block`,
// started at w_t. Every step takes
//   w <- w - h * ((phi'(x_i^T w) - phi'(x_i^T w_t)) x_i
//                 + (lambda + mu) (w - w_t) + anchor)
// which covers plain SVRG (mu = 0, anchor = local full gradient), the
// distributed naive round (mu = 0, anchor = global gradient) and the
// inexact local solver of the mirror round (anchor = eta * global gradient).
DenseVector vr_pass(const Dataset& data, const std::uint32_t* block, std::size_t nk,
                    const DenseVector& w_t, const DenseVector& anchor, double mu, double h,
                    int m, Sampling sampling, Rng& rng) {
  const std::size_t d = w_t.size();
  const double reg = data.lambda + mu;

  std::vector<double> anchor_phi(nk);
  for (std::size_t i = 0; i < nk; ++i)
    anchor_phi[i] =
        loss_derivative(data.loss, data.x[block[i]].dot_dense(w_t), data.y[block[i]]);

  std::vector<std::uint32_t> order;
  if (sampling == Sampling::Permutation) {
    order.resize(nk);
    std::iota(order.begin(), order.end(), 0u);
  }

  DenseVector w = w_t;
  std::size_t cursor = nk;  // forces a shuffle before the first permutation draw
  for (int step = 0; step < m; ++step) {
    std::size_t i;
    if (sampling == Sampling::UniformWithReplacement) {
      i = static_cast<std::size_t>(rng.next_below(nk));
    } else {
      if (cursor == nk) {
        rng.shuffle(order);
        cursor = 0;
      }
      i = order[cursor++];
    }
    const SparseVector& xi = data.x[block[i]];
    const double c =
        loss_derivative(data.loss, xi.dot_dense(w), data.y[block[i]]) - anchor_phi[i];
    for (std::size_t j = 0; j < d; ++j)
      w[j] -= h * (reg * (w[j] - w_t[j]) + anchor[j]);
    for (std::size_t p = 0; p < xi.idx.size(); ++p)
      w[xi.idx[p]] -= h * c * xi.val[p];
  }
  return w;
}

void check_round_inputs(const Dataset& data, const Partition& part, const RoundState& state,
                        const char* what) {
  if (part.n != data.n()) throw std::invalid_argument(std::string(what) + ": partition size mismatch");
  if (state.w.size() != data.dim)
    throw std::invalid_argument(std::string(what) + ": iterate dim mismatch");
}

}  // namespace

RoundState svrg_run(const ProblemView& view, const RoundState& state, const SvrgConfig& cfg,
                    int epochs, std::uint64_t seed) {
  if (epochs < 0) throw std::invalid_argument("svrg_run: negative epoch count");
  const std::size_t m = view.size();
  if (m == 0) throw std::invalid_argument("svrg_run: empty view");

  std::vector<std::uint32_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = view.global(i);

  RoundState cur = state;
  for (int e = 0; e < epochs; ++e) {
    const DenseVector anchor = full_gradient(view, cur.w);
    Rng rng = node_stream(seed, static_cast<std::uint64_t>(cur.round), 0);
    cur.w = vr_pass(view.dataset(), idx.data(), m, cur.w, anchor, 0.0, cfg.h, cfg.m,
                    cfg.sampling, rng);
    cur.round += 1;
  }
  return cur;
}

DenseVector exact_quadratic_subproblem(const ProblemView& view, const DenseVector& w_t,
                                       const DenseVector& shift, double mu, double cg_rel_tol) {
  const Dataset& data = view.dataset();
  if (data.loss != LossKind::Quadratic)
    throw UnsupportedError("exact_quadratic_subproblem: quadratic loss only");
  if (mu < 0.0 || !std::isfinite(mu))
    throw std::invalid_argument("exact_quadratic_subproblem: mu must be >= 0");
  const std::size_t nk = view.size();
  if (nk == 0) throw std::invalid_argument("exact_quadratic_subproblem: empty view");
  const std::size_t d = w_t.size();
  if (shift.size() != d) throw std::invalid_argument("exact_quadratic_subproblem: shift dim");

  const double inv_nk = 1.0 / static_cast<double>(nk);
  const double reg = data.lambda + mu;

  DenseVector b(d, 0.0);
  for (std::size_t i = 0; i < nk; ++i) view.x(i).add_scaled_to(view.y(i) * inv_nk, b);
  for (std::size_t j = 0; j < d; ++j) b[j] += shift[j] + mu * w_t[j];

  auto apply = [&](const DenseVector& v, DenseVector& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < nk; ++i) {
      const double t = view.x(i).dot_dense(v);
      view.x(i).add_scaled_to(t * inv_nk, out);
    }
    for (std::size_t j = 0; j < d; ++j) out[j] += reg * v[j];
  };
  const int max_iter = 10 * static_cast<int>(d);
  return cg_solve(apply, b, cg_rel_tol, std::max(max_iter, 16), "exact_quadratic_subproblem");
}

RoundState dane_round(const Dataset& data, const Partition& part, const RoundState& state,
                      const DaneConfig& cfg, std::uint64_t seed, ExecPolicy exec) {
  check_round_inputs(data, part, state, "dane_round");
  const int k = part.k();
  const std::size_t d = state.w.size();
  const DenseVector g = global_gradient(data, state.w, exec);

  std::vector<DenseVector> local(static_cast<std::size_t>(k));
  for_each_task(k, exec, [&](int node) {
    const auto& block = part.blocks[static_cast<std::size_t>(node)];
    if (cfg.solver == DaneSolver::ExactQuadratic) {
      const ProblemView view = node_view(data, part, node);
      DenseVector shift = full_gradient(view, state.w);
      for (std::size_t j = 0; j < d; ++j) shift[j] -= cfg.eta * g[j];
      local[static_cast<std::size_t>(node)] =
          exact_quadratic_subproblem(view, state.w, shift, cfg.mu, cfg.cg_rel_tol);
    } else {
      DenseVector anchor(d);
      for (std::size_t j = 0; j < d; ++j) anchor[j] = cfg.eta * g[j];
      Rng rng = node_stream(seed, static_cast<std::uint64_t>(state.round),
                            static_cast<std::uint64_t>(node));
      local[static_cast<std::size_t>(node)] =
          vr_pass(data, block.data(), block.size(), state.w, anchor, cfg.mu, cfg.inner_h,
                  cfg.inner_m, Sampling::UniformWithReplacement, rng);
    }
  });

  RoundState next;
  next.w.assign(d, 0.0);
  for (int node = 0; node < k; ++node) axpy(1.0, local[static_cast<std::size_t>(node)], next.w);
  const double inv_k = 1.0 / static_cast<double>(k);
  for (std::size_t j = 0; j < d; ++j) next.w[j] *= inv_k;
  next.round = state.round + 1;
  return next;
}

RoundState naive_fsvrg_round(const Dataset& data, const Partition& part, const RoundState& state,
                             int m, double h, std::uint64_t seed, ExecPolicy exec) {
  check_round_inputs(data, part, state, "naive_fsvrg_round");
  if (m < 1) throw std::invalid_argument("naive_fsvrg_round: m must be >= 1");
  if (!(h > 0.0) || !std::isfinite(h))
    throw std::invalid_argument("naive_fsvrg_round: invalid stepsize");
  const int k = part.k();
  const std::size_t d = state.w.size();
  const DenseVector g = global_gradient(data, state.w, exec);

  std::vector<DenseVector> local(static_cast<std::size_t>(k));
  for_each_task(k, exec, [&](int node) {
    const auto& block = part.blocks[static_cast<std::size_t>(node)];
    Rng rng = node_stream(seed, static_cast<std::uint64_t>(state.round),
                          static_cast<std::uint64_t>(node));
    local[static_cast<std::size_t>(node)] =
        vr_pass(data, block.data(), block.size(), state.w, g, 0.0, h, m,
                Sampling::UniformWithReplacement, rng);
  });

  RoundState next;
  next.w.assign(d, 0.0);
  for (int node = 0; node < k; ++node)
    for (std::size_t j = 0; j < d; ++j)
      next.w[j] += local[static_cast<std::size_t>(node)][j] - state.w[j];
  const double inv_k = 1.0 / static_cast<double>(k);
  for (std::size_t j = 0; j < d; ++j) next.w[j] = state.w[j] + inv_k * next.w[j];
  next.round = state.round + 1;
  return next;
}

RoundState fsvrg_round(const Dataset& data, const Partition& part, const SparsityStats& stats,
                       const RoundState& state, const FsvrgConfig& cfg, std::uint64_t seed,
                       ExecPolicy exec) {
  check_round_inputs(data, part, state, "fsvrg_round");
  if (stats.dim != data.dim || stats.k != part.k())
    throw std::invalid_argument("fsvrg_round: stats do not match dataset/partition");
  const int k = part.k();
  const std::size_t d = state.w.size();
  const double n = static_cast<double>(data.n());
  const double lambda = data.lambda;
  const DenseVector g = global_gradient(data, state.w, exec);

  std::vector<DenseVector> local(static_cast<std::size_t>(k));
  for_each_task(k, exec, [&](int node) {
    const auto& block = part.blocks[static_cast<std::size_t>(node)];
    const std::size_t nk = block.size();
    const double hk = cfg.h / static_cast<double>(nk);
    const std::vector<double>& s = stats.s[static_cast<std::size_t>(node)];

    std::vector<double> anchor_phi(nk);
    for (std::size_t i = 0; i < nk; ++i)
      anchor_phi[i] = loss_derivative(data.loss, data.x[block[i]].dot_dense(state.w),
                                      data.y[block[i]]);

    std::vector<std::uint32_t> order(nk);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng = node_stream(seed, static_cast<std::uint64_t>(state.round),
                          static_cast<std::uint64_t>(node));

    DenseVector w = state.w;
    for (int pass = 0; pass < cfg.local_passes; ++pass) {
      rng.shuffle(order);
      for (std::size_t pos = 0; pos < nk; ++pos) {
        const std::size_t i = order[pos];
        const SparseVector& xi = data.x[block[i]];
        const double c =
            loss_derivative(data.loss, xi.dot_dense(w), data.y[block[i]]) - anchor_phi[i];
        if (cfg.use_scaling) {
          for (std::size_t j = 0; j < d; ++j)
            w[j] -= hk * (s[j] * (lambda * (w[j] - state.w[j])) + g[j]);
          for (std::size_t p = 0; p < xi.idx.size(); ++p)
            w[xi.idx[p]] -= hk * s[xi.idx[p]] * c * xi.val[p];
        } else {
          for (std::size_t j = 0; j < d; ++j)
            w[j] -= hk * (lambda * (w[j] - state.w[j]) + g[j]);
          for (std::size_t p = 0; p < xi.idx.size(); ++p)
            w[xi.idx[p]] -= hk * c * xi.val[p];
        }
      }
    }
    local[static_cast<std::size_t>(node)] = std::move(w);
  });

  DenseVector delta(d, 0.0);
  for (int node = 0; node < k; ++node) {
    const double wk = static_cast<double>(part.size(node)) / n;
    for (std::size_t j = 0; j < d; ++j)
      delta[j] += wk * (local[static_cast<std::size_t>(node)][j] - state.w[j]);
  }
  RoundState next;
  next.w.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double aj = cfg.use_scaling ? stats.a[j] : 1.0;
    next.w[j] = state.w[j] + aj * delta[j];
  }
  next.round = state.round + 1;
  return next;
}

double cost_model_time(const CostModel& model, CostVariant variant) {
  if (model.iterations < 0.0 || !std::isfinite(model.iterations))
    throw std::invalid_argument("cost_model_time: invalid iteration count");
  if (model.time_per_iter < 0.0 || !std::isfinite(model.time_per_iter))
    throw std::invalid_argument("cost_model_time: invalid per-iteration time");
  if (model.comm_cost < 0.0 || !std::isfinite(model.comm_cost))
    throw std::invalid_argument("cost_model_time: invalid communication cost");
  if (model.theta < 0.0 || model.theta >= 1.0)
    throw std::invalid_argument("cost_model_time: theta must lie in [0, 1)");

  switch (variant) {
    case CostVariant::Basic:
      return model.iterations * model.time_per_iter;
    case CostVariant::Distributed:
      return model.iterations * (model.comm_cost + model.time_per_iter);
    case CostVariant::Framework: {
      double iters = model.iterations;
      if (model.epsilon.has_value()) {
        const double eps = *model.epsilon;
        if (!(eps > 0.0) || eps >= 1.0)
          throw std::invalid_argument("cost_model_time: epsilon must lie in (0, 1)");
        iters = std::log(1.0 / eps) / (1.0 - model.theta);
      }
      return iters * (model.comm_cost + model.time_per_iter);
    }
  }
  throw std::invalid_argument("cost_model_time: unknown variant");
}

}  // namespace fedsim
