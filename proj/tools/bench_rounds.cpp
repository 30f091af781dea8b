// Benchmark of the OpenMP round kernels against the serial reference.
// Every kernel must produce bitwise-identical iterates under both policies;
// the point of the parallel path is speed, never different arithmetic.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <stdexcept>
#include <string>
#include <variant>

#include "CLI11.hpp"
#include "fedsim/exec.hpp"
#include "fedsim/harness.hpp"

using namespace fedsim;

namespace {

struct BenchCase {
  std::string name;
  AlgoConfig algo;
};

RoundState step(const Dataset& train, const Partition& part, const SparsityStats& stats,
                const AlgoConfig& algo, const RoundState& state, ExecPolicy exec) {
  if (const auto* fed = std::get_if<FsvrgConfig>(&algo))
    return fsvrg_round(train, part, stats, state, *fed, 7, exec);
  if (const auto* naive = std::get_if<NaiveFsvrgConfig>(&algo))
    return naive_fsvrg_round(train, part, state, naive->m, naive->h, 7, exec);
  if (const auto* dane = std::get_if<DaneConfig>(&algo))
    return dane_round(train, part, state, *dane, 7, exec);
  throw std::logic_error("bench: unhandled algorithm");
}

double run_rounds(const Dataset& train, const Partition& part, const SparsityStats& stats,
                  const AlgoConfig& algo, int rounds, ExecPolicy exec, DenseVector& final_w) {
  RoundState state{DenseVector(train.dim, 0.0), 0};
  const auto start = std::chrono::steady_clock::now();
  for (int t = 0; t < rounds; ++t) state = step(train, part, stats, algo, state, exec);
  const auto stop = std::chrono::steady_clock::now();
  final_w = std::move(state.w);
  return std::chrono::duration<double>(stop - start).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs parallel round kernel benchmark"};
  std::uint32_t n = 20000, d = 1000, groups = 40;
  int rounds = 5;
  app.add_option("-n", n, "training examples");
  app.add_option("-d", d, "feature dimension");
  app.add_option("--groups", groups, "groups / nodes");
  app.add_option("--rounds", rounds, "rounds per measurement");
  CLI11_PARSE(app, argc, argv);

  SyntheticSpec spec;
  spec.n = n;
  spec.d = d;
  spec.groups = groups;
  spec.support_size = std::max(4u, (d - 1) / groups);
  spec.nnz_per_point = std::min(16u, spec.support_size);
  spec.label_model = LabelModel::LogisticPlanted;
  spec.seed = 1;
  spec.test_fraction = 0.0;
  SyntheticData data = generate_synthetic(spec);
  data.train.lambda = 1.0 / static_cast<double>(data.train.n());
  const Partition part = partition_clustered(data.train, static_cast<int>(groups), 1);
  const SparsityStats stats = compute_stats(data.train, part, ExecPolicy::Parallel);
  const int m = static_cast<int>(2 * data.train.n() / groups);

  std::cout << "n = " << data.train.n() << ", d = " << data.train.dim << ", K = " << groups
            << ", rounds = " << rounds << ", threads = " << max_threads() << "\n\n";
  std::cout << "kernel            serial[s]  parallel[s]  speedup  identical\n";

  const BenchCase cases[] = {
      {"fsvrg", FsvrgConfig(static_cast<double>(data.train.n()) / groups)},
      {"fsvrg-naive", NaiveFsvrgConfig{m, 0.25}},
      {"dane-svrg", DaneConfig(1.0, 0.0, DaneSolver::SvrgInner, m, 0.25)},
  };
  bool all_identical = true;
  for (const BenchCase& bench : cases) {
    DenseVector serial_w, parallel_w;
    const double ts =
        run_rounds(data.train, part, stats, bench.algo, rounds, ExecPolicy::Serial, serial_w);
    const double tp =
        run_rounds(data.train, part, stats, bench.algo, rounds, ExecPolicy::Parallel, parallel_w);
    const bool identical = serial_w == parallel_w;
    all_identical = all_identical && identical;
    std::printf("%-16s %10.3f %12.3f %8.2f  %s\n", bench.name.c_str(), ts, tp, ts / tp,
                identical ? "yes" : "NO");
  }
  if (!all_identical) {
    std::cerr << "\nmismatch between serial and parallel iterates\n";
    return 1;
  }
  return 0;
}
