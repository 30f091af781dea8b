#include "fedsim/partition.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fedsim/rng.hpp"

namespace fedsim {

void Partition::validate() const {
  if (blocks.empty()) throw std::invalid_argument("Partition: no blocks");
  if (n == 0) throw std::invalid_argument("Partition: n = 0");
  std::vector<char> seen(n, 0);
  std::size_t total = 0;
  for (const auto& block : blocks) {
    if (block.empty()) throw std::invalid_argument("Partition: empty block");
    for (std::uint32_t i : block) {
      if (i >= n) throw std::invalid_argument("Partition: index out of range");
      if (seen[i]) throw std::invalid_argument("Partition: index assigned twice");
      seen[i] = 1;
    }
    total += block.size();
  }
  if (total != n) throw std::invalid_argument("Partition: blocks do not cover all examples");
}

ProblemView node_view(const Dataset& data, const Partition& part, int node) {
  if (node < 0 || node >= part.k()) throw std::invalid_argument("node_view: node out of range");
  return ProblemView::subset(data, part.blocks[static_cast<std::size_t>(node)]);
}

Partition partition_clustered(const Dataset& data, int k, std::uint64_t seed) {
  if (data.groups.empty())
    throw std::invalid_argument("partition_clustered: dataset has no group labels");
  std::map<std::uint32_t, std::vector<std::uint32_t>> by_group;
  for (std::uint32_t i = 0; i < data.n(); ++i)
    by_group[data.groups[i]].push_back(i);
  const int g = static_cast<int>(by_group.size());
  if (k > g)
    throw std::invalid_argument("partition_clustered: more nodes (" + std::to_string(k) +
                                ") than groups (" + std::to_string(g) + ")");
  if (k < g)
    throw std::invalid_argument("partition_clustered: " + std::to_string(g) +
                                " groups need exactly " + std::to_string(g) + " nodes, got " +
                                std::to_string(k));

  std::vector<std::uint32_t> order(static_cast<std::size_t>(g));
  std::iota(order.begin(), order.end(), 0u);
  Rng rng(mix_seed(seed, 0x706172746974ULL, 0));
  rng.shuffle(order);

  std::vector<std::vector<std::uint32_t>> groups_sorted;
  groups_sorted.reserve(static_cast<std::size_t>(g));
  for (auto& kv : by_group) groups_sorted.push_back(std::move(kv.second));

  Partition part;
  part.n = static_cast<std::uint32_t>(data.n());
  part.blocks.resize(static_cast<std::size_t>(k));
  for (int node = 0; node < k; ++node)
    part.blocks[static_cast<std::size_t>(node)] = std::move(groups_sorted[order[static_cast<std::size_t>(node)]]);
  part.validate();
  return part;
}

Partition partition_reshuffled(const Dataset& data, const Partition& base, std::uint64_t seed) {
  base.validate();
  if (base.n != data.n()) throw std::invalid_argument("partition_reshuffled: size mismatch");
  std::vector<std::uint32_t> perm(base.n);
  std::iota(perm.begin(), perm.end(), 0u);
  Rng rng(mix_seed(seed, 0x7265736875ULL, 0));
  rng.shuffle(perm);

  Partition part;
  part.n = base.n;
  part.blocks.resize(base.blocks.size());
  std::size_t offset = 0;
  for (std::size_t k = 0; k < base.blocks.size(); ++k) {
    const std::size_t sz = base.blocks[k].size();
    part.blocks[k].assign(perm.begin() + static_cast<std::ptrdiff_t>(offset),
                          perm.begin() + static_cast<std::ptrdiff_t>(offset + sz));
    std::sort(part.blocks[k].begin(), part.blocks[k].end());
    offset += sz;
  }
  part.validate();
  return part;
}

Partition partition_power_law(const Dataset& data, int k, double exponent, std::uint64_t seed) {
  const std::size_t n = data.n();
  if (k <= 0) throw std::invalid_argument("partition_power_law: k must be positive");
  if (static_cast<std::size_t>(k) > n)
    throw std::invalid_argument("partition_power_law: more nodes than examples");
  if (exponent < 0.0 || !std::isfinite(exponent))
    throw std::invalid_argument("partition_power_law: exponent must be finite and >= 0");

  // Largest-remainder apportionment of n over shares (node+1)^(-exponent).
  std::vector<double> share(static_cast<std::size_t>(k));
  double total = 0.0;
  for (int node = 0; node < k; ++node) {
    share[static_cast<std::size_t>(node)] = std::pow(static_cast<double>(node + 1), -exponent);
    total += share[static_cast<std::size_t>(node)];
  }
  std::vector<std::size_t> size(static_cast<std::size_t>(k));
  std::vector<std::pair<double, int>> frac;
  std::size_t assigned = 0;
  for (int node = 0; node < k; ++node) {
    const double quota = static_cast<double>(n) * share[static_cast<std::size_t>(node)] / total;
    size[static_cast<std::size_t>(node)] = static_cast<std::size_t>(std::floor(quota));
    assigned += size[static_cast<std::size_t>(node)];
    frac.emplace_back(quota - std::floor(quota), node);
  }
  std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned)
    ++size[static_cast<std::size_t>(frac[r % frac.size()].second)];
  // Guarantee min block size 1 by moving examples from the largest block.
  for (std::size_t node = 0; node < size.size(); ++node) {
    while (size[node] == 0) {
      auto big = std::max_element(size.begin(), size.end()) - size.begin();
      --size[static_cast<std::size_t>(big)];
      ++size[node];
    }
  }

  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  Rng rng(mix_seed(seed, 0x706f776572ULL, 0));
  rng.shuffle(perm);

  Partition part;
  part.n = static_cast<std::uint32_t>(n);
  part.blocks.resize(static_cast<std::size_t>(k));
  std::size_t offset = 0;
  for (int node = 0; node < k; ++node) {
    auto& block = part.blocks[static_cast<std::size_t>(node)];
    block.assign(perm.begin() + static_cast<std::ptrdiff_t>(offset),
                 perm.begin() + static_cast<std::ptrdiff_t>(offset + size[static_cast<std::size_t>(node)]));
    std::sort(block.begin(), block.end());
    offset += size[static_cast<std::size_t>(node)];
  }
  part.validate();
  return part;
}

Partition build_partition(const Dataset& data, const PartitionSpec& spec, const Partition* base) {
  switch (spec.kind) {
    case PartitionKind::Clustered:
      return partition_clustered(data, spec.k, spec.seed);
    case PartitionKind::Reshuffled:
      if (!base) throw std::invalid_argument("build_partition: reshuffled needs a base partition");
      return partition_reshuffled(data, *base, spec.seed);
    case PartitionKind::PowerLaw:
      return partition_power_law(data, spec.k, spec.exponent, spec.seed);
  }
  throw std::invalid_argument("build_partition: unknown kind");
}

SparsityStats compute_stats(const Dataset& data, const Partition& part, ExecPolicy exec) {
  part.validate();
  if (part.n != data.n()) throw std::invalid_argument("compute_stats: size mismatch");
  const std::uint32_t d = data.dim;
  const int k = part.k();

  SparsityStats st;
  st.dim = d;
  st.k = k;
  st.node_count.assign(static_cast<std::size_t>(k), {});
  st.phi_node.assign(static_cast<std::size_t>(k), {});
  st.s.assign(static_cast<std::size_t>(k), {});

  // Counting is exact; each task fills its own node row.
  for_each_task(k, exec, [&](int node) {
    auto& cnt = st.node_count[static_cast<std::size_t>(node)];
    cnt.assign(d, 0);
    for (std::uint32_t i : part.blocks[static_cast<std::size_t>(node)])
      for (std::uint32_t j : data.x[i].idx) ++cnt[j];
  });

  st.global_count.assign(d, 0);
  for (int node = 0; node < k; ++node)
    for (std::uint32_t j = 0; j < d; ++j)
      st.global_count[j] += st.node_count[static_cast<std::size_t>(node)][j];

  const double n = static_cast<double>(data.n());
  st.phi_global.resize(d);
  for (std::uint32_t j = 0; j < d; ++j)
    st.phi_global[j] = static_cast<double>(st.global_count[j]) / n;

  st.omega.assign(d, 0);
  for (int node = 0; node < k; ++node) {
    const double nk = static_cast<double>(part.size(node));
    auto& phi = st.phi_node[static_cast<std::size_t>(node)];
    auto& s = st.s[static_cast<std::size_t>(node)];
    phi.resize(d);
    s.resize(d);
    const auto& cnt = st.node_count[static_cast<std::size_t>(node)];
    for (std::uint32_t j = 0; j < d; ++j) {
      phi[j] = static_cast<double>(cnt[j]) / nk;
      s[j] = (cnt[j] != 0) ? st.phi_global[j] / phi[j] : 0.0;
      if (cnt[j] != 0) ++st.omega[j];
    }
  }

  st.a.resize(d);
  for (std::uint32_t j = 0; j < d; ++j)
    st.a[j] = (st.omega[j] != 0) ? static_cast<double>(k) / static_cast<double>(st.omega[j]) : 0.0;
  return st;
}

}  // namespace fedsim
