#include "fedsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "fedsim/cg.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void SyntheticSpec::validate() const {
  if (n == 0) throw std::invalid_argument("SyntheticSpec: n must be positive");
  if (groups == 0 || groups > n)
    throw std::invalid_argument("SyntheticSpec: need 1 <= groups <= n");
  if (d < 2) throw std::invalid_argument("SyntheticSpec: d must be at least 2");
  if (support_size == 0 || support_size >= d)
    throw std::invalid_argument("SyntheticSpec: need 1 <= support_size < d");
  if (nnz_per_point == 0 || nnz_per_point > support_size)
    throw std::invalid_argument("SyntheticSpec: need 1 <= nnz_per_point <= support_size");
  if (overlap < 0.0 || overlap > 1.0) throw std::invalid_argument("SyntheticSpec: overlap in [0,1]");
  if (!(leak >= 0.0 && leak <= 1.0)) throw std::invalid_argument("SyntheticSpec: leak in [0,1]");
  if (noise < 0.0 || !std::isfinite(noise))
    throw std::invalid_argument("SyntheticSpec: noise must be finite and >= 0");
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("SyntheticSpec: test_fraction in [0,1)");
  if (size_min > size_max) throw std::invalid_argument("SyntheticSpec: size_min > size_max");
  const std::uint32_t shared = static_cast<std::uint32_t>(std::lround(overlap * support_size));
  const std::uint32_t excl = support_size - shared;
  if (1ull + shared + static_cast<std::uint64_t>(groups) * excl > d)
    throw std::invalid_argument(
        "SyntheticSpec: d too small for the requested group supports (need 1 + shared + "
        "groups * exclusive coordinates)");
}

namespace {

// Training size per group: balanced, or geometric decay size_max..size_min
// rescaled to sum to n by largest remainder, minimum 1.
std::vector<std::size_t> group_sizes(const SyntheticSpec& spec) {
  const std::size_t g = spec.groups;
  std::vector<std::size_t> size(g, 0);
  if (g == 1) {
    size[0] = spec.n;
    return size;
  }
  std::vector<double> raw(g);
  if (spec.size_min == 0 && spec.size_max == 0) {
    std::fill(raw.begin(), raw.end(), 1.0);
  } else {
    const double ratio = static_cast<double>(spec.size_min) / static_cast<double>(spec.size_max);
    const double r = std::pow(ratio, 1.0 / static_cast<double>(g - 1));
    double v = static_cast<double>(spec.size_max);
    for (std::size_t i = 0; i < g; ++i, v *= r) raw[i] = v;
  }
  double total = 0.0;
  for (double v : raw) total += v;
  std::size_t assigned = 0;
  std::vector<std::pair<double, std::size_t>> frac;
  for (std::size_t i = 0; i < g; ++i) {
    const double quota = static_cast<double>(spec.n) * raw[i] / total;
    size[i] = static_cast<std::size_t>(std::floor(quota));
    assigned += size[i];
    frac.emplace_back(quota - std::floor(quota), i);
  }
  std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t r = 0; assigned < spec.n; ++r, ++assigned) ++size[frac[r % g].second];
  for (std::size_t i = 0; i < g; ++i) {
    while (size[i] == 0) {
      auto big = std::max_element(size.begin(), size.end()) - size.begin();
      --size[static_cast<std::size_t>(big)];
      ++size[i];
    }
  }
  return size;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, 0x73796e7468ULL, 0));

  const std::uint32_t shared = static_cast<std::uint32_t>(std::lround(spec.overlap * spec.support_size));
  const std::uint32_t excl = spec.support_size - shared;

  DenseVector planted(spec.d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.nnz_per_point) + 1.0);
  for (auto& wj : planted) wj = scale * rng.next_normal();

  const std::vector<std::size_t> train_size = group_sizes(spec);

  SyntheticData out;
  out.planted_w = planted;
  const LossKind kind =
      spec.label_model == LabelModel::RidgePlanted ? LossKind::Quadratic : LossKind::Logistic;
  for (Dataset* ds : {&out.train, &out.test}) {
    ds->dim = spec.d;
    ds->loss = kind;
    ds->lambda = 0.0;
  }

  std::vector<std::uint32_t> support(spec.support_size);
  std::vector<std::uint32_t> coords;
  for (std::uint32_t g = 0; g < spec.groups; ++g) {
    for (std::uint32_t j = 0; j < shared; ++j) support[j] = 1 + j;
    for (std::uint32_t j = 0; j < excl; ++j) support[shared + j] = 1 + shared + g * excl + j;

    const std::size_t n_train = train_size[g];
    const std::size_t n_test =
        spec.test_fraction > 0.0
            ? static_cast<std::size_t>(std::lround(static_cast<double>(n_train) *
                                                   spec.test_fraction / (1.0 - spec.test_fraction)))
            : 0;
    for (std::size_t p = 0; p < n_train + n_test; ++p) {
      coords.clear();
      // Each nonzero slot escapes the group support with probability leak;
      // leak = 0 draws nothing extra from the stream.
      std::uint32_t leak_slots = 0;
      if (spec.leak > 0.0) {
        for (std::uint32_t t = 0; t < spec.nnz_per_point; ++t)
          if (rng.next_double() < spec.leak) ++leak_slots;
      }
      // Partial Fisher-Yates draw of distinct support coords.
      for (std::uint32_t t = 0; t < spec.nnz_per_point - leak_slots; ++t) {
        const std::size_t pick =
            t + static_cast<std::size_t>(rng.next_below(spec.support_size - t));
        std::swap(support[t], support[pick]);
        coords.push_back(support[t]);
      }
      // Leaked slots draw any non-bias coordinate, rejecting duplicates;
      // coords stays strictly below d - 1 entries, so this terminates.
      for (std::uint32_t t = 0; t < leak_slots; ++t) {
        for (;;) {
          const auto c = 1 + static_cast<std::uint32_t>(rng.next_below(spec.d - 1));
          if (std::find(coords.begin(), coords.end(), c) == coords.end()) {
            coords.push_back(c);
            break;
          }
        }
      }
      std::sort(coords.begin(), coords.end());

      SparseVector xi;
      xi.dim = spec.d;
      xi.idx.push_back(0);
      xi.val.push_back(1.0);  // bias
      for (std::uint32_t c : coords) {
        xi.idx.push_back(c);
        xi.val.push_back(rng.next_double() < 0.15 ? 2.0 : 1.0);
      }

      double margin = 0.0;
      for (std::size_t q = 0; q < xi.idx.size(); ++q) margin += xi.val[q] * planted[xi.idx[q]];
      const double noisy = margin + spec.noise * rng.next_normal();
      const double label = spec.label_model == LabelModel::RidgePlanted
                               ? noisy
                               : (noisy >= 0.0 ? 1.0 : -1.0);

      Dataset& dst = (p < n_train) ? out.train : out.test;
      dst.x.push_back(std::move(xi));
      dst.y.push_back(label);
      dst.groups.push_back(g);
    }
  }
  out.train.validate();
  if (!out.test.x.empty()) out.test.validate();
  return out;
}

namespace {

double objective_and_gradient(const Dataset& data, const DenseVector& w, DenseVector& g) {
  const std::size_t n = data.n();
  const std::size_t d = w.size();
  g.assign(d, 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = data.x[i].dot_dense(w);
    s += loss_value(data.loss, t, data.y[i]);
    data.x[i].add_scaled_to(loss_derivative(data.loss, t, data.y[i]), g);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) g[j] = g[j] * inv_n + data.lambda * w[j];
  return s * inv_n + 0.5 * data.lambda * squared_norm(w);
}

// Largest eigenvalue of (1/n) X X^T by power iteration, deterministic start.
double gram_spectral_norm(const Dataset& data) {
  const std::size_t d = data.dim;
  Rng rng(mix_seed(0x706f776572ULL, d, data.n()));
  DenseVector v(d);
  for (auto& vj : v) vj = rng.next_normal();
  const double nv = norm(v);
  for (auto& vj : v) vj /= nv;

  const double inv_n = 1.0 / static_cast<double>(data.n());
  DenseVector u(d);
  double value = 0.0;
  for (int it = 0; it < 200; ++it) {
    std::fill(u.begin(), u.end(), 0.0);
    for (std::size_t i = 0; i < data.n(); ++i) {
      const double t = data.x[i].dot_dense(v);
      data.x[i].add_scaled_to(t * inv_n, u);
    }
    const double nu = norm(u);
    if (nu == 0.0) return 0.0;
    const double next = nu;  // ||Av|| with ||v|| = 1 converges to lambda_max
    for (std::size_t j = 0; j < d; ++j) v[j] = u[j] / nu;
    if (it > 10 && std::fabs(next - value) <= 1e-9 * next) {
      value = next;
      break;
    }
    value = next;
  }
  return value;
}

Oracle oracle_logistic(const Dataset& data) {
  if (!(data.lambda > 0.0))
    throw std::invalid_argument("oracle_solve: logistic oracle requires lambda > 0");
  const double mu = data.lambda;
  // phi'' <= 1/4 for the logistic loss; 1.05 covers power-iteration slack.
  const double lip = 1.05 * gram_spectral_norm(data) / 4.0 + data.lambda;
  const double h = 1.0 / lip;
  const double kappa = lip / mu;
  const double sq = std::sqrt(kappa);
  const double beta = (sq - 1.0) / (sq + 1.0);

  const std::size_t d = data.dim;
  DenseVector w(d, 0.0);
  DenseVector w_prev = w;
  DenseVector z = w;
  DenseVector g(d);
  double f_prev = std::numeric_limits<double>::infinity();

  const int max_iter = 500000;
  for (int it = 0; it < max_iter; ++it) {
    const double fz = objective_and_gradient(data, z, g);
    if (norm(g) <= 1e-10) return Oracle{z, fz};
    if (fz > f_prev) {
      // momentum restart; fall back to the last gradient step
      z = w;
      f_prev = std::numeric_limits<double>::infinity();
      continue;
    }
    f_prev = fz;
    w_prev = w;
    w = z;
    axpy(-h, g, w);
    for (std::size_t j = 0; j < d; ++j) z[j] = w[j] + beta * (w[j] - w_prev[j]);
  }
  throw NumericError("oracle_solve: gradient norm above 1e-10 after " +
                     std::to_string(max_iter) + " iterations");
}

}  // namespace

Oracle oracle_solve(const Dataset& data) {
  data.validate();
  if (data.loss == LossKind::Logistic) return oracle_logistic(data);

  const std::size_t d = data.dim;
  const double inv_n = 1.0 / static_cast<double>(data.n());
  DenseVector b(d, 0.0);
  for (std::size_t i = 0; i < data.n(); ++i) data.x[i].add_scaled_to(data.y[i] * inv_n, b);
  auto apply = [&](const DenseVector& v, DenseVector& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < data.n(); ++i) {
      const double t = data.x[i].dot_dense(v);
      data.x[i].add_scaled_to(t * inv_n, out);
    }
    for (std::size_t j = 0; j < d; ++j) out[j] += data.lambda * v[j];
  };
  DenseVector w = cg_solve(apply, b, 1e-12, std::max(20 * static_cast<int>(d), 64),
                           "oracle_solve");
  return Oracle{w, objective(ProblemView::all(data), w)};
}

const char* algo_name(const AlgoConfig& algo) {
  struct Visitor {
    const char* operator()(const GdConfig&) const { return "gd"; }
    const char* operator()(const SvrgConfig&) const { return "svrg"; }
    const char* operator()(const NaiveFsvrgConfig&) const { return "fsvrg-naive"; }
    const char* operator()(const FsvrgConfig&) const { return "fsvrg"; }
    const char* operator()(const DaneConfig&) const { return "dane"; }
    const char* operator()(const DualAlgoConfig&) const { return "dual"; }
    const char* operator()(const PrimalAlgoConfig&) const { return "primal"; }
  };
  return std::visit(Visitor{}, algo);
}

namespace {

bool needs_partition(const AlgoConfig& algo) {
  return !std::holds_alternative<GdConfig>(algo) && !std::holds_alternative<SvrgConfig>(algo);
}

struct Stepper {
  const Dataset& train;
  const Partition* part;
  const RunConfig& cfg;
  const SparsityStats* stats = nullptr;

  RoundState state;
  DualState dual;
  PrimalMethodState primal;
  double sigma = 0.0;

  void init() {
    state.w.assign(train.dim, 0.0);
    if (cfg.w0) {
      if (cfg.w0->size() != train.dim)
        throw std::invalid_argument("run_experiment: w0 dim mismatch");
      state.w = *cfg.w0;
    }
    state.round = 0;
    if (const auto* dual_cfg = std::get_if<DualAlgoConfig>(&cfg.algo)) {
      sigma = dual_cfg->sigma > 0.0 ? dual_cfg->sigma : static_cast<double>(part->k());
      dual.alpha.resize(part->blocks.size());
      for (std::size_t k = 0; k < part->blocks.size(); ++k)
        dual.alpha[k].assign(part->blocks[k].size(), 0.0);
      state.w = primal_from_dual(train, flatten_alpha(*part, dual.alpha));
    } else if (const auto* primal_cfg = std::get_if<PrimalAlgoConfig>(&cfg.algo)) {
      sigma = primal_cfg->sigma > 0.0 ? primal_cfg->sigma : static_cast<double>(part->k());
      std::vector<DenseVector> alpha0(part->blocks.size());
      for (std::size_t k = 0; k < part->blocks.size(); ++k)
        alpha0[k].assign(part->blocks[k].size(), 0.0);
      primal = primal_method_init(train, *part, alpha0, DualConfig(sigma));
      state.w = primal.w;
    }
  }

  void step() {
    if (const auto* gd = std::get_if<GdConfig>(&cfg.algo)) {
      if (!(gd->h > 0.0)) throw std::invalid_argument("run_experiment: gd stepsize not set");
      state = gd_round(ProblemView::all(train), state, gd->h, cfg.exec);
    } else if (const auto* svrg = std::get_if<SvrgConfig>(&cfg.algo)) {
      state = svrg_run(ProblemView::all(train), state, *svrg, 1, cfg.seed);
    } else if (const auto* naive = std::get_if<NaiveFsvrgConfig>(&cfg.algo)) {
      state = naive_fsvrg_round(train, *part, state, naive->m, naive->h, cfg.seed, cfg.exec);
    } else if (const auto* fsvrg = std::get_if<FsvrgConfig>(&cfg.algo)) {
      state = fsvrg_round(train, *part, *stats, state, *fsvrg, cfg.seed, cfg.exec);
    } else if (const auto* dane = std::get_if<DaneConfig>(&cfg.algo)) {
      state = dane_round(train, *part, state, *dane, cfg.seed, cfg.exec);
    } else if (std::holds_alternative<DualAlgoConfig>(cfg.algo)) {
      dual = dual_method_round(train, *part, dual, DualConfig(sigma), cfg.exec);
      state.w = primal_from_dual(train, flatten_alpha(*part, dual.alpha));
      state.round = dual.round;
    } else {
      primal = primal_method_round(train, *part, primal, DualConfig(sigma), cfg.exec);
      state.w = primal.w;
      state.round = primal.round;
    }
  }
};

}  // namespace

Trace run_experiment(const Dataset& train, const Dataset* test, const Partition* part,
                     const RunConfig& cfg) {
  train.validate();
  if (cfg.rounds < 0) throw std::invalid_argument("run_experiment: negative round count");
  if (cfg.eval_every < 1) throw std::invalid_argument("run_experiment: eval_every must be >= 1");
  if (needs_partition(cfg.algo)) {
    if (!part) throw std::invalid_argument("run_experiment: algorithm requires a partition");
    part->validate();
    if (part->n != train.n())
      throw std::invalid_argument("run_experiment: partition does not match dataset");
  }

  SparsityStats stats;
  Stepper stepper{train, part, cfg};
  if (std::holds_alternative<FsvrgConfig>(cfg.algo)) {
    stats = compute_stats(train, *part, cfg.exec);
    stepper.stats = &stats;
  }
  stepper.init();

  const bool track_test = test != nullptr && train.loss == LossKind::Logistic;
  if (track_test) test->validate();
  const double f_star = cfg.f_star.value_or(kNaN);

  Trace trace;
  auto record = [&](int round, double f) {
    TraceRecord rec;
    rec.round = round;
    rec.objective = f;
    rec.gap = f - f_star;
    rec.test_error = track_test ? classification_error(*test, stepper.state.w) : kNaN;
    trace.records.push_back(rec);
  };

  const double f0 = objective(ProblemView::all(train), stepper.state.w);
  record(0, f0);
  if (!std::isfinite(f0)) {
    if (cfg.abort_on_divergence)
      throw NumericError("run_experiment: non-finite objective at the starting point");
    trace.divergent = true;
    return trace;
  }
  const double blowup = 1e3 * f0 + 1e-12;

  for (int round = 1; round <= cfg.rounds; ++round) {
    stepper.step();
    const double f = objective(ProblemView::all(train), stepper.state.w);
    const bool diverged = !std::isfinite(f) || f > blowup;
    if (diverged || round % cfg.eval_every == 0 || round == cfg.rounds) record(round, f);
    if (diverged) {
      if (cfg.abort_on_divergence)
        throw NumericError("run_experiment: " + std::string(algo_name(cfg.algo)) +
                           " diverged at round " + std::to_string(round) + " (objective " +
                           std::to_string(f) + ", started at " + std::to_string(f0) + ")");
      trace.divergent = true;
      break;
    }
  }
  return trace;
}

std::vector<double> default_stepsize_grid(double scale) {
  std::vector<double> grid;
  for (int p = -10; p <= 4; ++p) grid.push_back(std::ldexp(scale, p));
  return grid;
}

namespace {

AlgoConfig with_stepsize(const AlgoConfig& algo, double h) {
  if (const auto* gd = std::get_if<GdConfig>(&algo)) {
    GdConfig c = *gd;
    c.h = h;
    return c;
  }
  if (const auto* svrg = std::get_if<SvrgConfig>(&algo))
    return SvrgConfig(svrg->m, h, svrg->sampling);
  if (const auto* naive = std::get_if<NaiveFsvrgConfig>(&algo)) {
    NaiveFsvrgConfig c = *naive;
    c.h = h;
    return c;
  }
  if (const auto* fsvrg = std::get_if<FsvrgConfig>(&algo))
    return FsvrgConfig(h, fsvrg->use_scaling, fsvrg->local_passes);
  if (const auto* dane = std::get_if<DaneConfig>(&algo)) {
    if (dane->solver != DaneSolver::SvrgInner)
      throw std::invalid_argument("grid_search_stepsize: exact local solver has no stepsize");
    DaneConfig c(dane->eta, dane->mu, DaneSolver::SvrgInner, dane->inner_m, h);
    c.cg_rel_tol = dane->cg_rel_tol;
    return c;
  }
  throw std::invalid_argument("grid_search_stepsize: algorithm has no stepsize to search");
}

}  // namespace

GridResult grid_search_stepsize(const Dataset& train, const Dataset* test, const Partition* part,
                                const RunConfig& base, const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("grid_search_stepsize: empty grid");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());

  GridResult best;
  double best_final = std::numeric_limits<double>::infinity();
  bool found = false;
  for (double h : sorted) {
    if (!(h > 0.0)) throw std::invalid_argument("grid_search_stepsize: stepsizes must be positive");
    RunConfig cfg = base;
    cfg.algo = with_stepsize(base.algo, h);
    cfg.abort_on_divergence = false;
    Trace trace = run_experiment(train, test, part, cfg);
    if (trace.divergent || trace.records.empty()) continue;
    const double final_obj = trace.records.back().objective;
    if (!std::isfinite(final_obj)) continue;
    if (final_obj < best_final) {
      best_final = final_obj;
      best.h = h;
      best.trace = std::move(trace);
      found = true;
    }
  }
  if (!found) throw NumericError("grid_search_stepsize: every stepsize in the grid diverged");
  return best;
}

}  // namespace fedsim
