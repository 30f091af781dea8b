#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "fedsim/errors.hpp"
#include "fedsim/harness.hpp"
#include "fedsim/rng.hpp"
#include "test_util.hpp"

using namespace fedsim;

namespace {

SyntheticSpec base_spec() {
  SyntheticSpec spec;
  spec.n = 120;
  spec.d = 40;
  spec.groups = 3;
  spec.support_size = 8;
  spec.overlap = 0.0;
  spec.nnz_per_point = 4;
  spec.label_model = LabelModel::RidgePlanted;
  spec.noise = 0.0;
  spec.seed = 21;
  return spec;
}

bool same_dataset(const Dataset& a, const Dataset& b) {
  if (a.n() != b.n() || a.dim != b.dim || a.y != b.y || a.groups != b.groups) return false;
  for (std::size_t i = 0; i < a.n(); ++i)
    if (a.x[i].idx != b.x[i].idx || a.x[i].val != b.x[i].val) return false;
  return true;
}

std::vector<std::set<std::uint32_t>> group_supports(const Dataset& ds, std::uint32_t groups) {
  std::vector<std::set<std::uint32_t>> sup(groups);
  for (std::size_t i = 0; i < ds.n(); ++i)
    for (auto j : ds.x[i].idx)
      if (j != 0) sup[ds.groups[i]].insert(j);
  return sup;
}

std::vector<int> recorded_rounds(const Trace& trace) {
  std::vector<int> rounds;
  for (const auto& rec : trace.records) rounds.push_back(rec.round);
  return rounds;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic and respects the spec") {
  const SyntheticSpec spec = base_spec();
  const SyntheticData a = generate_synthetic(spec);
  const SyntheticData b = generate_synthetic(spec);
  CHECK(same_dataset(a.train, b.train));
  CHECK(same_dataset(a.test, b.test));
  CHECK(a.planted_w == b.planted_w);

  CHECK(a.train.n() == 120);
  // test_fraction 0.25 of each group total: 40 training points pair with
  // round(40 / 3) = 13 test points per group.
  CHECK(a.test.n() == 39);
  CHECK(a.train.dim == 40);
  CHECK(a.train.groups.size() == a.train.n());
  CHECK(a.test.groups.size() == a.test.n());
  std::vector<std::size_t> per_group(3, 0);
  for (auto g : a.train.groups) per_group[g]++;
  CHECK(per_group == std::vector<std::size_t>{40, 40, 40});
  for (const auto& xi : a.train.x) {
    CHECK(xi.idx.size() == 5);  // bias + nnz_per_point
    CHECK(xi.idx[0] == 0);
    CHECK(xi.val[0] == 1.0);
  }

  SyntheticSpec changed = spec;
  changed.seed = 22;
  CHECK(!same_dataset(generate_synthetic(changed).train, a.train));
}

TEST_CASE("noiseless planted ridge labels fit the planted vector exactly") {
  const SyntheticData data = generate_synthetic(base_spec());
  Dataset unreg = data.train;
  unreg.lambda = 0.0;
  CHECK(objective(ProblemView::all(unreg), data.planted_w) == 0.0);
}

TEST_CASE("group supports share only the configured block") {
  SyntheticSpec spec = base_spec();
  const SyntheticData disjoint = generate_synthetic(spec);
  auto sup = group_supports(disjoint.train, 3);
  for (std::uint32_t g = 0; g < 3; ++g)
    for (std::uint32_t h = g + 1; h < 3; ++h) {
      std::vector<std::uint32_t> common;
      std::set_intersection(sup[g].begin(), sup[g].end(), sup[h].begin(), sup[h].end(),
                            std::back_inserter(common));
      CHECK(common.empty());
    }

  spec.overlap = 0.5;  // shared block of round(0.5 * 8) = 4 coordinates
  spec.nnz_per_point = 8;
  const SyntheticData shared = generate_synthetic(spec);
  sup = group_supports(shared.train, 3);
  std::vector<std::uint32_t> common01;
  std::set_intersection(sup[0].begin(), sup[0].end(), sup[1].begin(), sup[1].end(),
                        std::back_inserter(common01));
  CHECK(common01.size() == 4);
  std::vector<std::uint32_t> common02;
  std::set_intersection(sup[0].begin(), sup[0].end(), sup[2].begin(), sup[2].end(),
                        std::back_inserter(common02));
  CHECK(common02 == common01);
}

TEST_CASE("leaked nonzeros spread coordinates across nodes") {
  SyntheticSpec spec = base_spec();
  spec.n = 300;
  spec.leak = 0.3;
  const SyntheticData data = generate_synthetic(spec);
  const Partition part = partition_clustered(data.train, 3, 5);
  const SparsityStats stats = compute_stats(data.train, part);
  // With pure supports omega is 1 on exclusive coordinates and K on the
  // bias; leakage must produce coordinates present on some but not all nodes.
  std::size_t partial = 0;
  std::uint64_t outside_mass = 0;
  // Designed supports cover coordinates 1 .. groups * support_size; the tail
  // of the feature range is reachable only through leakage.
  const std::uint32_t support_end = 1 + 3 * spec.support_size;
  for (std::uint32_t j = 1; j < spec.d; ++j) {
    if (stats.omega[j] > 1 && stats.omega[j] < 3) ++partial;
    if (j >= support_end) outside_mass += stats.global_count[j];
  }
  CHECK(partial > 0);
  CHECK(outside_mass > 0);

  SyntheticSpec off = base_spec();
  off.n = 300;
  const SyntheticData pure = generate_synthetic(off);
  const SparsityStats pure_stats =
      compute_stats(pure.train, partition_clustered(pure.train, 3, 5));
  for (std::uint32_t j = 1; j < off.d; ++j)
    if (pure_stats.omega[j] > 0) CHECK((pure_stats.omega[j] == 1 || pure_stats.omega[j] == 3));
}

TEST_CASE("logistic labels are signs and unbalanced sizes decay geometrically") {
  SyntheticSpec spec = base_spec();
  spec.label_model = LabelModel::LogisticPlanted;
  spec.groups = 4;
  spec.n = 100;
  spec.size_min = 10;
  spec.size_max = 40;
  const SyntheticData data = generate_synthetic(spec);
  CHECK(data.train.loss == LossKind::Logistic);
  for (double y : data.train.y) CHECK(std::fabs(y) == 1.0);
  std::vector<std::size_t> per_group(4, 0);
  for (auto g : data.train.groups) per_group[g]++;
  std::size_t total = 0;
  for (std::size_t g = 0; g < 4; ++g) {
    CHECK(per_group[g] >= 1);
    if (g + 1 < 4) CHECK(per_group[g] >= per_group[g + 1]);
    total += per_group[g];
  }
  CHECK(total == 100);
  CHECK(per_group[0] > 2 * per_group[3]);
}

TEST_CASE("spec validation rejects impossible layouts") {
  SyntheticSpec spec = base_spec();
  spec.d = 10;  // needs 1 + 3 * 8 = 25 coordinates
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = base_spec();
  spec.overlap = 1.5;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = base_spec();
  spec.test_fraction = 1.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = base_spec();
  spec.nnz_per_point = 20;  // above support_size
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = base_spec();
  spec.groups = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = base_spec();
  spec.leak = -0.1;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = base_spec();
  spec.leak = 1.5;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("quadratic oracle matches a dense reference solve") {
  Rng rng(3);
  const Dataset ds = testutil::random_instance(rng, 30, 6, LossKind::Quadratic, 0.1);
  const Oracle oracle = oracle_solve(ds);
  const DenseVector ref = testutil::dense_ridge_solve(ds);
  CHECK(max_abs_diff(oracle.w_star, ref) <= 1e-9);
  CHECK(oracle.f_star == doctest::Approx(objective(ProblemView::all(ds), ref)).epsilon(1e-12));
  CHECK(norm(full_gradient(ProblemView::all(ds), oracle.w_star)) <= 1e-9);
}

TEST_CASE("logistic oracle drives the gradient to zero") {
  SyntheticSpec spec = base_spec();
  spec.label_model = LabelModel::LogisticPlanted;
  spec.n = 80;
  SyntheticData data = generate_synthetic(spec);
  data.train.lambda = 0.05;
  const Oracle oracle = oracle_solve(data.train);
  CHECK(norm(full_gradient(ProblemView::all(data.train), oracle.w_star)) <= 1e-10);
  CHECK(oracle.f_star <= objective(ProblemView::all(data.train), data.planted_w));
  CHECK(oracle.f_star <= objective(ProblemView::all(data.train), DenseVector(spec.d, 0.0)));
  Dataset unreg = data.train;
  unreg.lambda = 0.0;
  CHECK_THROWS_AS(oracle_solve(unreg), std::invalid_argument);
}

TEST_CASE("algorithm names") {
  CHECK(std::string(algo_name(GdConfig{0.1})) == "gd");
  CHECK(std::string(algo_name(SvrgConfig(4, 0.1))) == "svrg");
  CHECK(std::string(algo_name(NaiveFsvrgConfig{4, 0.1})) == "fsvrg-naive");
  CHECK(std::string(algo_name(FsvrgConfig(0.1))) == "fsvrg");
  CHECK(std::string(algo_name(DaneConfig(1.0, 0.0))) == "dane");
  CHECK(std::string(algo_name(DualAlgoConfig{})) == "dual");
  CHECK(std::string(algo_name(PrimalAlgoConfig{})) == "primal");
}

TEST_CASE("experiment traces record the evaluation cadence") {
  Rng rng(7);
  const Dataset ds = testutil::random_instance(rng, 30, 5, LossKind::Quadratic, 0.2);
  const Oracle oracle = oracle_solve(ds);
  RunConfig cfg;
  cfg.algo = GdConfig{0.05};
  cfg.rounds = 10;
  cfg.eval_every = 3;
  cfg.f_star = oracle.f_star;
  const Trace trace = run_experiment(ds, nullptr, nullptr, cfg);
  CHECK(recorded_rounds(trace) == std::vector<int>{0, 3, 6, 9, 10});
  CHECK(!trace.divergent);
  for (const auto& rec : trace.records) {
    CHECK(rec.gap == doctest::Approx(rec.objective - oracle.f_star).epsilon(1e-15));
    CHECK(rec.gap >= -1e-12);
    CHECK(std::isnan(rec.test_error));
  }
  for (std::size_t i = 1; i < trace.records.size(); ++i)
    CHECK(trace.records[i].objective <= trace.records[i - 1].objective + 1e-14);

  RunConfig zero = cfg;
  zero.rounds = 0;
  const Trace stub = run_experiment(ds, nullptr, nullptr, zero);
  CHECK(recorded_rounds(stub) == std::vector<int>{0});
  // Without an oracle value the gap column is NaN.
  RunConfig blind = cfg;
  blind.f_star.reset();
  CHECK(std::isnan(run_experiment(ds, nullptr, nullptr, blind).records[0].gap));
}

TEST_CASE("experiment honors the starting point and partition requirements") {
  Rng rng(11);
  const Dataset ds = testutil::random_instance(rng, 24, 5, LossKind::Quadratic, 0.2);
  RunConfig cfg;
  cfg.algo = GdConfig{0.02};
  cfg.rounds = 1;
  cfg.w0 = testutil::random_vector(rng, 5);
  const Trace trace = run_experiment(ds, nullptr, nullptr, cfg);
  CHECK(trace.records[0].objective ==
        doctest::Approx(objective(ProblemView::all(ds), *cfg.w0)).epsilon(1e-15));
  cfg.w0 = DenseVector(3, 0.0);
  CHECK_THROWS_AS(run_experiment(ds, nullptr, nullptr, cfg), std::invalid_argument);
  RunConfig fed;
  fed.algo = NaiveFsvrgConfig{8, 0.05};
  fed.rounds = 2;
  CHECK_THROWS_AS(run_experiment(ds, nullptr, nullptr, fed), std::invalid_argument);
}

TEST_CASE("experiment runs every federated algorithm end to end") {
  SyntheticSpec spec = base_spec();
  spec.label_model = LabelModel::LogisticPlanted;
  spec.n = 90;
  SyntheticData data = generate_synthetic(spec);
  data.train.lambda = 0.05;
  data.test.lambda = 0.05;
  const Partition part = partition_clustered(data.train, 3, 1);
  const Oracle oracle = oracle_solve(data.train);
  const SparsityStats stats = compute_stats(data.train, part);
  (void)stats;
  for (AlgoConfig algo : std::initializer_list<AlgoConfig>{
           GdConfig{0.5}, SvrgConfig(90, 0.05), NaiveFsvrgConfig{30, 0.05}, FsvrgConfig(1.0),
           DaneConfig(1.0, 0.0, DaneSolver::SvrgInner, 30, 0.05)}) {
    RunConfig cfg;
    cfg.algo = algo;
    cfg.rounds = 4;
    cfg.f_star = oracle.f_star;
    const Trace trace = run_experiment(data.train, &data.test, &part, cfg);
    CHECK(trace.records.size() == 5);
    CHECK(!trace.divergent);
    for (const auto& rec : trace.records) {
      CHECK(std::isfinite(rec.objective));
      CHECK(rec.test_error >= 0.0);
      CHECK(rec.test_error <= 1.0);
    }
    CHECK(trace.records.back().objective < trace.records.front().objective);
  }
}

TEST_CASE("dual and primal experiments close the gap on balanced ridge") {
  Rng rng(13);
  const Dataset ds = testutil::random_instance(rng, 32, 6, LossKind::Quadratic, 0.2);
  Partition part;
  part.n = 32;
  part.blocks.resize(4);
  for (std::uint32_t i = 0; i < 32; ++i) part.blocks[i % 4].push_back(i);
  const Oracle oracle = oracle_solve(ds);
  for (AlgoConfig algo :
       std::initializer_list<AlgoConfig>{DualAlgoConfig{}, PrimalAlgoConfig{}}) {
    RunConfig cfg;
    cfg.algo = algo;
    cfg.rounds = 40;
    cfg.f_star = oracle.f_star;
    const Trace trace = run_experiment(ds, nullptr, &part, cfg);
    // Both start at the primal image of alpha = 0, which is w = 0.
    CHECK(trace.records[0].objective ==
          doctest::Approx(objective(ProblemView::all(ds), DenseVector(6, 0.0))).epsilon(1e-15));
    CHECK(trace.records.back().gap <= 1e-5 * trace.records.front().gap);
  }
}

TEST_CASE("divergence is detected, reported or thrown") {
  Rng rng(17);
  const Dataset ds = testutil::random_instance(rng, 20, 4, LossKind::Quadratic, 0.1);
  RunConfig cfg;
  cfg.algo = GdConfig{1e6};
  cfg.rounds = 50;
  cfg.eval_every = 50;  // divergence must be recorded even off-cadence
  cfg.abort_on_divergence = false;
  const Trace trace = run_experiment(ds, nullptr, nullptr, cfg);
  CHECK(trace.divergent);
  CHECK(trace.records.back().round < 50);
  cfg.abort_on_divergence = true;
  CHECK_THROWS_AS(run_experiment(ds, nullptr, nullptr, cfg), NumericError);
}

TEST_CASE("experiments are reproducible and policy independent") {
  Rng rng(19);
  const Dataset ds = testutil::random_instance(rng, 48, 6, LossKind::Quadratic, 0.1);
  Partition part;
  part.n = 48;
  part.blocks.resize(4);
  for (std::uint32_t i = 0; i < 48; ++i) part.blocks[i % 4].push_back(i);
  const SparsityStats stats = compute_stats(ds, part);
  (void)stats;
  RunConfig cfg;
  cfg.algo = FsvrgConfig(0.8);
  cfg.rounds = 5;
  cfg.seed = 33;
  const Trace serial = run_experiment(ds, nullptr, &part, cfg);
  cfg.exec = ExecPolicy::Parallel;
  const Trace parallel = run_experiment(ds, nullptr, &part, cfg);
  REQUIRE(serial.records.size() == parallel.records.size());
  for (std::size_t i = 0; i < serial.records.size(); ++i)
    CHECK(serial.records[i].objective == parallel.records[i].objective);
}

TEST_CASE("stepsize grid search picks the best convergent run") {
  Rng rng(23);
  const Dataset ds = testutil::random_instance(rng, 30, 5, LossKind::Quadratic, 0.2);
  RunConfig base;
  base.algo = GdConfig{0.0};
  base.rounds = 20;
  const GridResult result =
      grid_search_stepsize(ds, nullptr, nullptr, base, {1e-4, 0.05, 1e7});
  CHECK(result.h == 0.05);
  CHECK(!result.trace.divergent);
  CHECK(result.trace.records.back().objective <
        run_experiment(ds, nullptr, nullptr,
                       [&] {
                         RunConfig c = base;
                         c.algo = GdConfig{1e-4};
                         return c;
                       }())
            .records.back()
            .objective);

  // Zero rounds: every stepsize evaluates to f(w0); ties break low.
  RunConfig stub = base;
  stub.rounds = 0;
  CHECK(grid_search_stepsize(ds, nullptr, nullptr, stub, {0.3, 0.1, 0.2}).h == 0.1);

  CHECK_THROWS_AS(grid_search_stepsize(ds, nullptr, nullptr, base, {1e7, 1e9}), NumericError);
  CHECK_THROWS_AS(grid_search_stepsize(ds, nullptr, nullptr, base, {}), std::invalid_argument);
  CHECK_THROWS_AS(grid_search_stepsize(ds, nullptr, nullptr, base, {-0.1, 0.1}),
                  std::invalid_argument);
  RunConfig dual = base;
  dual.algo = DualAlgoConfig{};
  Partition part;
  part.n = 30;
  part.blocks.resize(3);
  for (std::uint32_t i = 0; i < 30; ++i) part.blocks[i % 3].push_back(i);
  CHECK_THROWS_AS(grid_search_stepsize(ds, nullptr, &part, dual, {0.1}), std::invalid_argument);
}

TEST_CASE("default stepsize grid spans powers of two") {
  const std::vector<double> grid = default_stepsize_grid();
  REQUIRE(grid.size() == 15);
  CHECK(grid.front() == doctest::Approx(0.0009765625).epsilon(1e-15));
  CHECK(grid.back() == 16.0);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] == 2.0 * grid[i - 1]);
  const std::vector<double> scaled = default_stepsize_grid(3.0);
  CHECK(scaled[5] == doctest::Approx(3.0 * grid[5]).epsilon(1e-15));
}
