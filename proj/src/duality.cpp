#include "fedsim/duality.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fedsim/algorithms.hpp"
#include "fedsim/cg.hpp"
#include "fedsim/errors.hpp"

namespace fedsim {

DualConfig::DualConfig(double sigma_, double cg_rel_tol_) : sigma(sigma_), cg_rel_tol(cg_rel_tol_) {
  if (!(sigma >= 1.0) || !std::isfinite(sigma))
    throw std::invalid_argument("DualConfig: sigma must be >= 1 and finite");
  if (!(cg_rel_tol > 0.0)) throw std::invalid_argument("DualConfig: invalid CG tolerance");
}

namespace {

void require_dual_setting(const Dataset& data, const Partition& part, const char* what) {
  if (data.loss != LossKind::Quadratic)
    throw UnsupportedError(std::string(what) + ": quadratic loss required");
  if (!(data.lambda > 0.0))
    throw std::invalid_argument(std::string(what) + ": lambda must be positive");
  if (part.n != data.n()) throw std::invalid_argument(std::string(what) + ": size mismatch");
  const std::size_t nk = part.blocks.front().size();
  for (const auto& block : part.blocks)
    if (block.size() != nk)
      throw std::invalid_argument(std::string(what) +
                                  ": balanced partition required (n_k = n / K)");
}

void require_sigma_at_most_k(double sigma, int k, const char* what) {
  if (sigma > static_cast<double>(k))
    throw std::invalid_argument(std::string(what) + ": sigma must be <= K");
}

void check_alpha_shape(const Partition& part, const std::vector<DenseVector>& alpha,
                       const char* what) {
  if (alpha.size() != part.blocks.size())
    throw std::invalid_argument(std::string(what) + ": alpha block count mismatch");
  for (std::size_t k = 0; k < alpha.size(); ++k)
    if (alpha[k].size() != part.blocks[k].size())
      throw std::invalid_argument(std::string(what) + ": alpha block size mismatch");
}

}  // namespace

DenseVector flatten_alpha(const Partition& part, const std::vector<DenseVector>& alpha) {
  check_alpha_shape(part, alpha, "flatten_alpha");
  DenseVector flat(part.n, 0.0);
  for (std::size_t k = 0; k < alpha.size(); ++k)
    for (std::size_t j = 0; j < alpha[k].size(); ++j) flat[part.blocks[k][j]] = alpha[k][j];
  return flat;
}

double dual_objective(const Dataset& data, const Partition& part, const DualState& state) {
  require_dual_setting(data, part, "dual_objective");
  check_alpha_shape(part, state.alpha, "dual_objective");
  const double n = static_cast<double>(data.n());

  DenseVector xa(data.dim, 0.0);
  double alpha_sq = 0.0;
  double y_alpha = 0.0;
  for (std::size_t k = 0; k < state.alpha.size(); ++k) {
    for (std::size_t j = 0; j < state.alpha[k].size(); ++j) {
      const std::uint32_t i = part.blocks[k][j];
      const double a = state.alpha[k][j];
      data.x[i].add_scaled_to(a, xa);
      alpha_sq += a * a;
      y_alpha += data.y[i] * a;
    }
  }
  return squared_norm(xa) / (2.0 * data.lambda * n * n) + alpha_sq / (2.0 * n) - y_alpha / n;
}

DenseVector primal_from_dual(const Dataset& data, const DenseVector& alpha_flat) {
  if (!(data.lambda > 0.0))
    throw std::invalid_argument("primal_from_dual: lambda must be positive");
  if (alpha_flat.size() != data.n())
    throw std::invalid_argument("primal_from_dual: alpha size mismatch");
  DenseVector w(data.dim, 0.0);
  const double scale = 1.0 / (data.lambda * static_cast<double>(data.n()));
  for (std::size_t i = 0; i < data.n(); ++i) data.x[i].add_scaled_to(alpha_flat[i] * scale, w);
  return w;
}

DualState dual_method_round(const Dataset& data, const Partition& part, const DualState& state,
                            const DualConfig& cfg, ExecPolicy exec) {
  require_dual_setting(data, part, "dual_method_round");
  require_sigma_at_most_k(cfg.sigma, part.k(), "dual_method_round");
  check_alpha_shape(part, state.alpha, "dual_method_round");

  const double n = static_cast<double>(data.n());
  const double coef = cfg.sigma / (data.lambda * n);
  const DenseVector w_t = primal_from_dual(data, flatten_alpha(part, state.alpha));

  DualState next;
  next.alpha.resize(state.alpha.size());
  next.round = state.round + 1;

  for_each_task(part.k(), exec, [&](int node) {
    const auto& block = part.blocks[static_cast<std::size_t>(node)];
    const std::size_t nk = block.size();
    const DenseVector& ak = state.alpha[static_cast<std::size_t>(node)];

    DenseVector c(nk);
    for (std::size_t j = 0; j < nk; ++j) {
      const std::uint32_t i = block[j];
      c[j] = data.y[i] - data.x[i].dot_dense(w_t) - ak[j];
    }

    DenseVector u(data.dim, 0.0);
    auto apply = [&](const DenseVector& v, DenseVector& out) {
      std::fill(u.begin(), u.end(), 0.0);
      for (std::size_t j = 0; j < nk; ++j) data.x[block[j]].add_scaled_to(v[j], u);
      for (std::size_t j = 0; j < nk; ++j) out[j] = coef * data.x[block[j]].dot_dense(u) + v[j];
    };
    const int max_iter = std::max(10 * static_cast<int>(nk), 16);
    DenseVector h = cg_solve(apply, c, cfg.cg_rel_tol, max_iter, "dual_method_round");

    DenseVector& out = next.alpha[static_cast<std::size_t>(node)];
    out.resize(nk);
    for (std::size_t j = 0; j < nk; ++j) out[j] = ak[j] + h[j];
  });
  return next;
}

PrimalMethodState primal_method_init(const Dataset& data, const Partition& part,
                                     const std::vector<DenseVector>& alpha0,
                                     const DualConfig& cfg) {
  require_dual_setting(data, part, "primal_method_init");
  require_sigma_at_most_k(cfg.sigma, part.k(), "primal_method_init");
  check_alpha_shape(part, alpha0, "primal_method_init");

  const double k = static_cast<double>(part.k());
  const double n = static_cast<double>(data.n());
  const double eta = k / cfg.sigma;

  PrimalMethodState st;
  st.w = primal_from_dual(data, flatten_alpha(part, alpha0));
  st.round = 0;
  st.g.resize(part.blocks.size());
  for (int node = 0; node < part.k(); ++node) {
    const auto& block = part.blocks[static_cast<std::size_t>(node)];
    DenseVector xa(data.dim, 0.0);
    for (std::size_t j = 0; j < block.size(); ++j)
      data.x[block[j]].add_scaled_to(alpha0[static_cast<std::size_t>(node)][j], xa);
    DenseVector& gk = st.g[static_cast<std::size_t>(node)];
    gk.resize(data.dim);
    for (std::size_t jj = 0; jj < data.dim; ++jj)
      gk[jj] = eta * ((k / n) * xa[jj] - data.lambda * st.w[jj]);
  }
  return st;
}

PrimalMethodState primal_method_round(const Dataset& data, const Partition& part,
                                      const PrimalMethodState& state, const DualConfig& cfg,
                                      ExecPolicy exec) {
  require_dual_setting(data, part, "primal_method_round");
  require_sigma_at_most_k(cfg.sigma, part.k(), "primal_method_round");
  if (state.g.size() != part.blocks.size())
    throw std::invalid_argument("primal_method_round: correction count mismatch");

  const int k = part.k();
  const std::size_t d = data.dim;
  const double eta = static_cast<double>(k) / cfg.sigma;
  const double mu = data.lambda * (eta - 1.0);

  std::vector<DenseVector> local(static_cast<std::size_t>(k));
  for_each_task(k, exec, [&](int node) {
    const ProblemView view = node_view(data, part, node);
    const DenseVector grad_fk = full_gradient(view, state.w);
    const DenseVector& gk = state.g[static_cast<std::size_t>(node)];
    DenseVector shift(d);
    for (std::size_t j = 0; j < d; ++j) shift[j] = (1.0 - eta) * grad_fk[j] - gk[j];
    local[static_cast<std::size_t>(node)] =
        exact_quadratic_subproblem(view, state.w, shift, mu, cfg.cg_rel_tol);
  });

  PrimalMethodState next;
  next.w.assign(d, 0.0);
  for (int node = 0; node < k; ++node) axpy(1.0, local[static_cast<std::size_t>(node)], next.w);
  const double inv_k = 1.0 / static_cast<double>(k);
  for (std::size_t j = 0; j < d; ++j) next.w[j] *= inv_k;

  next.g.resize(static_cast<std::size_t>(k));
  const double step = data.lambda * eta;
  for (int node = 0; node < k; ++node) {
    DenseVector& gk = next.g[static_cast<std::size_t>(node)];
    gk = state.g[static_cast<std::size_t>(node)];
    for (std::size_t j = 0; j < d; ++j)
      gk[j] += step * (local[static_cast<std::size_t>(node)][j] - next.w[j]);
  }
  next.round = state.round + 1;
  return next;
}

double check_equivalence(const Dataset& data, const Partition& part,
                         const std::vector<DenseVector>& alpha0, double sigma, int rounds,
                         ExecPolicy exec) {
  if (rounds < 0) throw std::invalid_argument("check_equivalence: negative round count");
  const DualConfig cfg(sigma);
  PrimalMethodState primal = primal_method_init(data, part, alpha0, cfg);
  DualState dual;
  dual.alpha = alpha0;
  dual.round = 0;

  auto deviation = [&]() {
    const DenseVector mapped = primal_from_dual(data, flatten_alpha(part, dual.alpha));
    DenseVector diff = primal.w;
    axpy(-1.0, mapped, diff);
    return norm(diff);
  };

  double max_dev = deviation();
  for (int t = 0; t < rounds; ++t) {
    primal = primal_method_round(data, part, primal, cfg, exec);
    dual = dual_method_round(data, part, dual, cfg, exec);
    max_dev = std::max(max_dev, deviation());
  }
  return max_dev;
}

double duality_gap(const Dataset& data, const DenseVector& w, const DenseVector& alpha_flat) {
  if (data.loss != LossKind::Quadratic)
    throw UnsupportedError("duality_gap: quadratic loss required");
  if (!(data.lambda > 0.0)) throw std::invalid_argument("duality_gap: lambda must be positive");
  if (alpha_flat.size() != data.n())
    throw std::invalid_argument("duality_gap: alpha size mismatch");

  const double n = static_cast<double>(data.n());
  DenseVector xa(data.dim, 0.0);
  double alpha_sq = 0.0;
  double y_alpha = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    data.x[i].add_scaled_to(alpha_flat[i], xa);
    alpha_sq += alpha_flat[i] * alpha_flat[i];
    y_alpha += data.y[i] * alpha_flat[i];
  }
  const double dual_min =
      squared_norm(xa) / (2.0 * data.lambda * n * n) + alpha_sq / (2.0 * n) - y_alpha / n;
  return objective(ProblemView::all(data), w) + dual_min;
}

}  // namespace fedsim
