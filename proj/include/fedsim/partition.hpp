#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/exec.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

// Disjoint cover of example indices [0, n) by K non-empty node blocks.
struct Partition {
  std::vector<std::vector<std::uint32_t>> blocks;
  std::uint32_t n = 0;

  int k() const { return static_cast<int>(blocks.size()); }
  std::size_t size(int node) const { return blocks[static_cast<std::size_t>(node)].size(); }
  // Throws std::invalid_argument unless blocks are non-empty, disjoint and
  // cover [0, n) exactly.
  void validate() const;
};

ProblemView node_view(const Dataset& data, const Partition& part, int node);

// Each node holds exactly one cluster; requires K == number of distinct
// group labels. The seed permutes the group-to-node assignment.
Partition partition_clustered(const Dataset& data, int k, std::uint64_t seed);

// Random permutation of all indices cut into the base partition's block
// sizes; destroys cluster structure, keeps the size profile.
Partition partition_reshuffled(const Dataset& data, const Partition& base, std::uint64_t seed);

// Block sizes proportional to (node+1)^(-exponent), scaled to sum to n by
// largest remainder, every block >= 1; membership is a seeded permutation.
// exponent = 0 gives balanced sizes (difference at most 1).
Partition partition_power_law(const Dataset& data, int k, double exponent, std::uint64_t seed);

enum class PartitionKind { Clustered, Reshuffled, PowerLaw };

struct PartitionSpec {
  PartitionKind kind = PartitionKind::PowerLaw;
  int k = 1;
  double exponent = 0.0;  // PowerLaw only
  std::uint64_t seed = 0;
};

// Reshuffled requires base != nullptr.
Partition build_partition(const Dataset& data, const PartitionSpec& spec,
                          const Partition* base = nullptr);

// Per-coordinate sparsity pattern of a partitioned dataset.
//   global_count[j]      number of examples with x_j != 0
//   node_count[k][j]     same, restricted to node k
//   phi_global[j]        global_count[j] / n
//   phi_node[k][j]       node_count[k][j] / n_k
//   s[k][j]              phi_global[j] / phi_node[k][j], 0 where phi_node = 0
//   omega[j]             number of nodes with node_count[k][j] != 0
//   a[j]                 K / omega[j], 0 where omega[j] = 0
// With K = 1 every s and a entry over a present coordinate is exactly 1.
struct SparsityStats {
  std::uint32_t dim = 0;
  int k = 0;
  std::vector<std::uint64_t> global_count;
  std::vector<std::vector<std::uint64_t>> node_count;
  std::vector<double> phi_global;
  std::vector<std::vector<double>> phi_node;
  std::vector<std::vector<double>> s;
  std::vector<std::uint32_t> omega;
  std::vector<double> a;
};

SparsityStats compute_stats(const Dataset& data, const Partition& part,
                            ExecPolicy exec = ExecPolicy::Serial);

}  // namespace fedsim
