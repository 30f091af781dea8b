// fedopt: dataset ingestion, synthetic generation, partitioning, experiment
// execution and trace export.
//
// Exit codes: 0 success, 1 usage or input error, 2 numerical error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/harness.hpp"
#include "fedsim/io.hpp"

using namespace fedsim;

namespace {

struct DataFlags {
  std::string data_path;
  std::string spec_path;
  std::string groups_path;
  std::string test_path;
  std::uint32_t dim = 0;
  double lambda = -1.0;  // negative = default 1/n
};

struct PartitionFlags {
  std::string partition_path;
  std::string kind = "auto";  // clustered when groups exist, else powerlaw
  int k = 0;
  double exponent = 0.0;
  std::uint64_t seed = 0;
};

struct AlgoFlags {
  std::string local_solver = "exact";
  double h = 0.0;  // 0 = grid-searched where the algorithm has a stepsize
  int m = 0;       // 0 = auto (2n for svrg, 2n/K for node-local passes)
  double eta = 1.0;
  double mu = 0.0;
  double sigma = 0.0;  // 0 = sigma(K)
  bool no_scaling = false;
  int local_passes = 1;
};

void add_data_flags(CLI::App* cmd, DataFlags& f, bool with_test) {
  cmd->add_option("--data", f.data_path, "svmlight training data file");
  cmd->add_option("--spec", f.spec_path, "synthetic instance spec (key=value file)");
  cmd->add_option("--groups", f.groups_path, "group label file for --data (one per line)");
  cmd->add_option("--dim", f.dim, "declared feature dimension for --data");
  cmd->add_option("--lambda", f.lambda, "L2 regularization; default 1/n");
  if (with_test) cmd->add_option("--test", f.test_path, "svmlight test data file");
}

void add_partition_flags(CLI::App* cmd, PartitionFlags& f) {
  cmd->add_option("--partition", f.partition_path, "partition file (one node per line)");
  cmd->add_option("--partition-kind", f.kind, "clustered | reshuffled | powerlaw")
      ->check(CLI::IsMember({"auto", "clustered", "reshuffled", "powerlaw"}));
  cmd->add_option("-k,--nodes", f.k, "number of nodes");
  cmd->add_option("--exponent", f.exponent, "power-law size exponent (powerlaw only)");
}

void add_algo_flags(CLI::App* cmd, AlgoFlags& f) {
  cmd->add_option("--stepsize", f.h, "stepsize; 0 grid-searches {2^-10..2^4} x scale");
  cmd->add_option("-m,--inner-steps", f.m, "inner steps per epoch/round; 0 = auto");
  cmd->add_option("--eta", f.eta, "dane: gradient correction weight");
  cmd->add_option("--mu", f.mu, "dane: proximal weight");
  cmd->add_option("--sigma", f.sigma, "dual/primal: aggregation parameter, 0 = K");
  cmd->add_option("--local-solver", f.local_solver, "dane local solver: exact | svrg")
      ->check(CLI::IsMember({"exact", "svrg"}));
  cmd->add_flag("--no-scaling", f.no_scaling, "fsvrg: disable S_k and A scalings");
  cmd->add_option("--local-passes", f.local_passes, "fsvrg: local data passes per round");
}

struct DataBundle {
  Dataset train;
  std::optional<Dataset> test;
};

DataBundle load_data(const DataFlags& f) {
  if (f.data_path.empty() == f.spec_path.empty())
    throw std::invalid_argument("pass exactly one of --data or --spec");
  DataBundle bundle;
  if (!f.spec_path.empty()) {
    SyntheticData generated = generate_synthetic(read_synthetic_spec_file(f.spec_path));
    bundle.train = std::move(generated.train);
    bundle.test = std::move(generated.test);
  } else {
    bundle.train = parse_svmlight_file(f.data_path, f.dim);
    if (!f.groups_path.empty()) {
      std::ifstream in(f.groups_path);
      if (!in) throw std::invalid_argument("cannot open groups file: " + f.groups_path);
      bundle.train.groups = read_groups(in);
    }
    if (!f.test_path.empty())
      bundle.test = parse_svmlight_file(f.test_path, bundle.train.dim);
  }
  const double lambda =
      f.lambda >= 0.0 ? f.lambda : 1.0 / static_cast<double>(bundle.train.n());
  bundle.train.lambda = lambda;
  if (bundle.test) {
    bundle.test->lambda = lambda;
    bundle.test->loss = bundle.train.loss;
  }
  bundle.train.validate();
  return bundle;
}

Partition make_partition(const Dataset& train, const PartitionFlags& f) {
  if (!f.partition_path.empty()) {
    std::ifstream in(f.partition_path);
    if (!in) throw std::invalid_argument("cannot open partition file: " + f.partition_path);
    return read_partition(in, static_cast<std::uint32_t>(train.n()));
  }
  if (f.k <= 0)
    throw std::invalid_argument("this configuration needs --partition or a node count (-k)");
  std::string kind = f.kind;
  if (kind == "auto") kind = train.groups.empty() ? "powerlaw" : "clustered";
  if (kind == "clustered") return partition_clustered(train, f.k, f.seed);
  if (kind == "powerlaw") return partition_power_law(train, f.k, f.exponent, f.seed);
  // Reshuffled keeps the clustered size profile but randomizes membership.
  const Partition base = partition_clustered(train, f.k, f.seed);
  return partition_reshuffled(train, base, f.seed);
}

bool algo_needs_partition(const std::string& name) {
  return name != "gd" && name != "svrg";
}

bool algo_has_stepsize(const std::string& name, const AlgoFlags& f) {
  if (name == "gd" || name == "svrg" || name == "fsvrg" || name == "fsvrg-naive") return true;
  return name == "dane" && f.local_solver == "svrg";
}

AlgoConfig make_algo(const std::string& name, const AlgoFlags& f, const Dataset& train, int k) {
  const auto n = static_cast<double>(train.n());
  const int node_m = f.m > 0 ? f.m : std::max(1, static_cast<int>(2.0 * n / std::max(1, k)));
  // Stepsize placeholders are overwritten by the grid search when --h is 0.
  const double h = f.h > 0.0 ? f.h : 1.0;
  if (name == "gd") return GdConfig{f.h};
  if (name == "svrg")
    return SvrgConfig(f.m > 0 ? f.m : static_cast<int>(2.0 * n), h);
  if (name == "fsvrg") return FsvrgConfig(h, !f.no_scaling, f.local_passes);
  if (name == "fsvrg-naive") return NaiveFsvrgConfig{node_m, h};
  if (name == "dane") {
    if (f.local_solver == "exact") return DaneConfig(f.eta, f.mu);
    return DaneConfig(f.eta, f.mu, DaneSolver::SvrgInner, node_m, h);
  }
  if (name == "dual") return DualAlgoConfig{f.sigma};
  if (name == "primal") return PrimalAlgoConfig{f.sigma};
  throw std::invalid_argument("unknown algorithm: " + name);
}

// The grid unit: fsvrg stepsizes are divided by n_k inside the round, so its
// natural scale is the mean node size; everything else searches around 1.
double grid_scale(const std::string& name, const Dataset& train, int k) {
  if (name != "fsvrg") return 1.0;
  return static_cast<double>(train.n()) / std::max(1, k);
}

void require_quadratic_for_dual(const std::string& name, const Dataset& train) {
  if ((name == "dual" || name == "primal") && train.loss != LossKind::Quadratic)
    throw UnsupportedError("dual methods require quadratic loss");
}

// Flat key=value config support: --config files are expanded into --key=value
// tokens inserted directly after the subcommand name. A key the command line
// already sets is skipped, so explicit flags always win over the file.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size();) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      ++i;
    }
  }
  if (config_path.empty()) return args;
  if (args.empty()) throw std::invalid_argument("--config requires a subcommand");
  std::ifstream in(config_path);
  if (!in) throw std::invalid_argument("cannot open config file: " + config_path);
  std::vector<std::string> expanded;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string body = line.substr(first, last - first + 1);
    const auto eq = body.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ParseError("config: expected key=value", line_no);
    std::string key = body.substr(0, eq);
    std::string value = body.substr(eq + 1);
    const auto key_end = key.find_last_not_of(" \t");
    key = key.substr(0, key_end == std::string::npos ? 0 : key_end + 1);
    const auto val_start = value.find_first_not_of(" \t");
    value = val_start == std::string::npos ? "" : value.substr(val_start);
    if (key.empty() || value.empty()) throw ParseError("config: expected key=value", line_no);
    if (key.size() == 1) {
      // Short-option spelling; a later command-line token still wins (TakeLast).
      expanded.push_back("-" + key);
      expanded.push_back(value);
      continue;
    }
    const std::string flag = "--" + key;
    const bool overridden = std::any_of(args.begin(), args.end(), [&](const std::string& tok) {
      return tok == flag || tok.rfind(flag + "=", 0) == 0;
    });
    if (!overridden) expanded.push_back(flag + "=" + value);
  }
  args.insert(args.begin() + 1, expanded.begin(), expanded.end());
  return args;
}

struct OutputStream {
  explicit OutputStream(const std::string& path) {
    if (path.empty() || path == "-") return;
    file.open(path);
    if (!file) throw std::invalid_argument("cannot open output file: " + path);
  }
  std::ostream& get() { return file.is_open() ? file : std::cout; }
  void finish(const std::string& path) {
    if (!file.is_open()) return;
    file.flush();
    if (!file) throw std::runtime_error("failed writing output file: " + path);
  }
  std::ofstream file;
};

// ---------------------------------------------------------------- generate

int cmd_generate(const std::string& spec_path, const std::string& out_dir) {
  const SyntheticSpec spec = read_synthetic_spec_file(spec_path);
  const SyntheticData data = generate_synthetic(spec);
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto write_file = [&](const std::string& name, auto&& writer) {
    const fs::path path = fs::path(out_dir) / name;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    writer(out);
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + path.string());
  };
  write_file("train.svm", [&](std::ostream& out) { write_svmlight(data.train, out); });
  write_file("test.svm", [&](std::ostream& out) { write_svmlight(data.test, out); });
  write_file("groups.txt", [&](std::ostream& out) { write_groups(data.train.groups, out); });
  write_file("test_groups.txt", [&](std::ostream& out) { write_groups(data.test.groups, out); });
  std::cerr << "generate: " << data.train.n() << " train / " << data.test.n() << " test, d = "
            << data.train.dim << ", groups = " << spec.groups << " -> " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------- partition

int cmd_partition(const DataFlags& data_flags, const PartitionFlags& part_flags,
                  const std::string& out_path) {
  const DataBundle bundle = load_data(data_flags);
  const Partition part = make_partition(bundle.train, part_flags);
  OutputStream out(out_path);
  write_partition(part, out.get());
  out.finish(out_path);
  return 0;
}

// ---------------------------------------------------------------- stats

int cmd_stats(const DataFlags& data_flags, const PartitionFlags& part_flags,
              const std::string& out_path) {
  const DataBundle bundle = load_data(data_flags);
  const Partition part = make_partition(bundle.train, part_flags);
  const SparsityStats stats = compute_stats(bundle.train, part, ExecPolicy::Parallel);

  std::vector<std::size_t> sizes;
  for (int k = 0; k < part.k(); ++k) sizes.push_back(part.size(k));
  std::sort(sizes.begin(), sizes.end());
  std::uint32_t present = 0;
  double omega_sum = 0.0, a_sum = 0.0;
  std::map<std::uint32_t, std::uint32_t> histogram;
  for (std::uint32_t j = 0; j < stats.dim; ++j) {
    ++histogram[stats.omega[j]];
    if (stats.global_count[j] == 0) continue;
    ++present;
    omega_sum += stats.omega[j];
    a_sum += stats.a[j];
  }
  std::cout << "examples " << bundle.train.n() << "\n"
            << "features " << bundle.train.dim << "\n"
            << "nodes " << part.k() << "\n"
            << "node size min " << sizes.front() << " median " << sizes[sizes.size() / 2]
            << " max " << sizes.back() << "\n"
            << "present coordinates " << present << "\n";
  if (present > 0)
    std::cout << "mean omega " << fmt17(omega_sum / present) << "\n"
              << "mean aggregation scale " << fmt17(a_sum / present) << "\n";
  std::cout << "omega histogram (omega: coordinates)\n";
  for (const auto& [omega, count] : histogram)
    std::cout << "  " << omega << ": " << count << "\n";
  if (!out_path.empty()) {
    OutputStream out(out_path);
    out.get() << "omega,coordinates\n";
    for (const auto& [omega, count] : histogram)
      out.get() << omega << ',' << count << '\n';
    out.finish(out_path);
  }
  return 0;
}

// ---------------------------------------------------------------- train

struct RunFlags {
  int rounds = 50;
  int eval_every = 1;
  std::uint64_t seed = 0;
  bool serial = false;
  bool no_oracle = false;
};

struct PreparedRun {
  RunConfig cfg;
  bool grid = false;
  double scale = 1.0;
};

PreparedRun prepare_run(const std::string& algo, const AlgoFlags& algo_flags,
                        const RunFlags& run_flags, const Dataset& train, int k) {
  require_quadratic_for_dual(algo, train);
  PreparedRun prepared;
  prepared.cfg.algo = make_algo(algo, algo_flags, train, k);
  prepared.cfg.rounds = run_flags.rounds;
  prepared.cfg.eval_every = run_flags.eval_every;
  prepared.cfg.seed = run_flags.seed;
  prepared.cfg.exec = run_flags.serial ? ExecPolicy::Serial : ExecPolicy::Parallel;
  prepared.grid = algo_flags.h == 0.0 && algo_has_stepsize(algo, algo_flags);
  prepared.scale = grid_scale(algo, train, k);
  return prepared;
}

Trace execute(const PreparedRun& prepared, const Dataset& train, const Dataset* test,
              const Partition* part, double* h_used) {
  if (prepared.grid) {
    const GridResult result = grid_search_stepsize(train, test, part, prepared.cfg,
                                                   default_stepsize_grid(prepared.scale));
    if (h_used) *h_used = result.h;
    return result.trace;
  }
  RunConfig cfg = prepared.cfg;
  cfg.abort_on_divergence = false;
  if (h_used) *h_used = std::nan("");
  return run_experiment(train, test, part, cfg);
}

int cmd_train(const DataFlags& data_flags, const PartitionFlags& part_flags,
              const AlgoFlags& algo_flags, const RunFlags& run_flags, const std::string& algo,
              const std::string& out_path, const std::string& format) {
  const DataBundle bundle = load_data(data_flags);
  Partition part;
  const bool partitioned = algo_needs_partition(algo);
  if (partitioned) part = make_partition(bundle.train, part_flags);

  PreparedRun prepared = prepare_run(algo, algo_flags, run_flags, bundle.train,
                                     partitioned ? part.k() : 1);
  if (!run_flags.no_oracle) prepared.cfg.f_star = oracle_solve(bundle.train).f_star;

  double h_used = std::nan("");
  const Trace trace = execute(prepared, bundle.train, bundle.test ? &*bundle.test : nullptr,
                              partitioned ? &part : nullptr, &h_used);

  OutputStream out(out_path);
  write_trace(trace, format == "jsonl" ? TraceFormat::Jsonl : TraceFormat::Csv, out.get());
  out.finish(out_path);

  if (!std::isnan(h_used)) std::cerr << "train: grid-searched stepsize " << fmt17(h_used) << "\n";
  std::cerr << "train: " << algo << " final objective "
            << fmt17(trace.records.back().objective) << " at round "
            << trace.records.back().round << "\n";
  if (trace.divergent) {
    std::cerr << "train: run diverged\n";
    return 2;
  }
  return 0;
}

// ---------------------------------------------------------------- compare

int cmd_compare(const DataFlags& data_flags, const PartitionFlags& part_flags,
                const AlgoFlags& algo_flags, const RunFlags& run_flags,
                const std::vector<std::string>& algos, const std::string& out_path) {
  if (algos.empty()) throw std::invalid_argument("compare: empty algorithm list");
  const DataBundle bundle = load_data(data_flags);
  const bool partitioned =
      std::any_of(algos.begin(), algos.end(),
                  [](const std::string& a) { return algo_needs_partition(a); });
  Partition part;
  if (partitioned) part = make_partition(bundle.train, part_flags);

  std::optional<double> f_star;
  if (!run_flags.no_oracle) f_star = oracle_solve(bundle.train).f_star;

  std::vector<std::pair<std::string, Trace>> runs;
  for (const std::string& algo : algos) {
    PreparedRun prepared = prepare_run(algo, algo_flags, run_flags, bundle.train,
                                       partitioned ? part.k() : 1);
    prepared.cfg.f_star = f_star;
    double h_used = std::nan("");
    const Partition* part_ptr = algo_needs_partition(algo) ? &part : nullptr;
    const Trace trace = execute(prepared, bundle.train,
                                bundle.test ? &*bundle.test : nullptr, part_ptr, &h_used);
    std::cerr << "compare: " << algo;
    if (!std::isnan(h_used)) std::cerr << " (h = " << fmt17(h_used) << ")";
    std::cerr << " final objective " << fmt17(trace.records.back().objective);
    // A diverging algorithm is a reported outcome of the comparison, not a
    // failure of the tool.
    if (trace.divergent) std::cerr << " [divergent]";
    std::cerr << "\n";
    runs.emplace_back(algo, trace);
  }

  OutputStream out(out_path);
  write_compare_csv(runs, out.get());
  out.finish(out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated optimization experiment driver"};
  app.require_subcommand(1);
  // Config tokens are spliced in ahead of command-line tokens, so taking the
  // last occurrence makes explicit flags override config values.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  const std::vector<std::string> algo_names = {"gd",   "svrg", "fsvrg", "fsvrg-naive",
                                               "dane", "dual", "primal"};
  // Registered per subcommand for help output; the actual tokens are consumed
  // by expand_config before CLI11 parses.
  std::string config_file;
  const auto add_config_flag = [&config_file](CLI::App* sub) {
    sub->add_option("--config", config_file,
                    "flat key=value config file; command-line flags override it");
  };

  // generate
  auto* generate = app.add_subcommand("generate", "render a synthetic spec into data files");
  std::string gen_spec, gen_out;
  generate->add_option("--spec", gen_spec, "synthetic instance spec file")->required();
  generate->add_option("--out", gen_out, "output directory")->required();
  add_config_flag(generate);

  // partition
  auto* partition = app.add_subcommand("partition", "write a node partition file");
  DataFlags part_data;
  PartitionFlags part_part;
  std::string part_out = "-";
  add_data_flags(partition, part_data, false);
  add_partition_flags(partition, part_part);
  partition->add_option("--seed", part_part.seed, "partition seed");
  partition->add_option("--out", part_out, "output file, - for stdout");
  add_config_flag(partition);

  // stats
  auto* stats = app.add_subcommand("stats", "sparsity pattern summary of a partitioned dataset");
  DataFlags stats_data;
  PartitionFlags stats_part;
  std::string stats_out;
  add_data_flags(stats, stats_data, false);
  add_partition_flags(stats, stats_part);
  stats->add_option("--seed", stats_part.seed, "partition seed");
  stats->add_option("--out", stats_out, "omega histogram CSV output file");
  add_config_flag(stats);

  // train
  auto* train = app.add_subcommand("train", "run one algorithm and write its trace");
  DataFlags train_data;
  PartitionFlags train_part;
  AlgoFlags train_algo;
  RunFlags train_run;
  std::string train_name, train_out = "-", train_format = "csv";
  add_data_flags(train, train_data, true);
  add_partition_flags(train, train_part);
  add_algo_flags(train, train_algo);
  train->add_option("--algo", train_name, "algorithm")
      ->required()
      ->check(CLI::IsMember(algo_names));
  train->add_option("--rounds", train_run.rounds, "communication rounds")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--eval-every", train_run.eval_every, "trace recording cadence");
  train->add_option("--seed", train_run.seed, "algorithm and partition seed");
  train->add_flag("--serial", train_run.serial, "disable parallel node execution");
  train->add_flag("--no-oracle", train_run.no_oracle, "skip the reference solve (gap = nan)");
  train->add_option("--out", train_out, "trace output file, - for stdout");
  train->add_option("--format", train_format, "trace format")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  add_config_flag(train);

  // compare
  auto* compare = app.add_subcommand("compare", "run several algorithms on one instance");
  DataFlags cmp_data;
  PartitionFlags cmp_part;
  AlgoFlags cmp_algo;
  RunFlags cmp_run;
  std::vector<std::string> cmp_names = {"gd", "fsvrg", "fsvrg-naive", "dane"};
  std::string cmp_out = "-";
  add_data_flags(compare, cmp_data, true);
  add_partition_flags(compare, cmp_part);
  add_algo_flags(compare, cmp_algo);
  compare->add_option("--algos", cmp_names, "algorithms to run")
      ->delimiter(',')
      ->check(CLI::IsMember(algo_names));
  compare->add_option("--rounds", cmp_run.rounds, "communication rounds")
      ->check(CLI::NonNegativeNumber);
  compare->add_option("--eval-every", cmp_run.eval_every, "trace recording cadence");
  compare->add_option("--seed", cmp_run.seed, "algorithm and partition seed");
  compare->add_flag("--serial", cmp_run.serial, "disable parallel node execution");
  compare->add_flag("--no-oracle", cmp_run.no_oracle, "skip the reference solve (gap = nan)");
  compare->add_option("--out", cmp_out, "compare CSV output file, - for stdout");
  add_config_flag(compare);

  std::vector<std::string> args;
  try {
    args = expand_config({argv + 1, argv + argc});
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::reverse(args.begin(), args.end());

  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen_spec, gen_out);
    if (partition->parsed()) return cmd_partition(part_data, part_part, part_out);
    if (stats->parsed()) return cmd_stats(stats_data, stats_part, stats_out);
    if (train->parsed()) {
      train_part.seed = train_run.seed;
      return cmd_train(train_data, train_part, train_algo, train_run, train_name, train_out,
                       train_format);
    }
    if (compare->parsed()) {
      cmp_part.seed = cmp_run.seed;
      return cmd_compare(cmp_data, cmp_part, cmp_algo, cmp_run, cmp_names, cmp_out);
    }
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UnsupportedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
