#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "fedsim/partition.hpp"
#include "fedsim/rng.hpp"
#include "test_util.hpp"

using namespace fedsim;
using testutil::make_sparse;

namespace {

Dataset grouped_dataset(const std::vector<std::uint32_t>& groups) {
  Dataset ds;
  ds.dim = 2;
  ds.loss = LossKind::Quadratic;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    ds.x.push_back(make_sparse(2, {{static_cast<std::uint32_t>(i % 2), 1.0}}));
    ds.y.push_back(1.0);
  }
  ds.groups = groups;
  return ds;
}

void check_cover(const Partition& part, std::uint32_t n) {
  std::set<std::uint32_t> seen;
  std::size_t total = 0;
  for (const auto& block : part.blocks) {
    CHECK(!block.empty());
    total += block.size();
    seen.insert(block.begin(), block.end());
  }
  CHECK(total == n);
  CHECK(seen.size() == n);
  CHECK((n == 0 || *seen.rbegin() == n - 1));
}

}  // namespace

TEST_CASE("partition validation") {
  Partition p;
  p.n = 4;
  p.blocks = {{0, 1}, {2, 3}};
  CHECK_NOTHROW(p.validate());
  p.blocks = {{0, 1}, {1, 3}};  // overlap, 2 missing
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.blocks = {{0, 1}, {2}};  // 3 missing
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.blocks = {{0, 1, 2, 3}, {}};  // empty block
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.blocks = {{0, 1, 2, 4}};  // out of range
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("clustered partition maps one group per node") {
  std::vector<std::uint32_t> groups(100);
  for (std::size_t i = 0; i < 100; ++i) groups[i] = i < 30 ? 0u : 1u;
  const Dataset ds = grouped_dataset(groups);
  const Partition part = partition_clustered(ds, 2, 5);
  check_cover(part, 100);
  std::multiset<std::size_t> sizes = {part.size(0), part.size(1)};
  CHECK(sizes == std::multiset<std::size_t>{30, 70});
  for (const auto& block : part.blocks) {
    std::set<std::uint32_t> labels;
    for (auto i : block) labels.insert(ds.groups[i]);
    CHECK(labels.size() == 1);
  }
  // Same seed reproduces, and the node count must equal the group count.
  const Partition again = partition_clustered(ds, 2, 5);
  CHECK(again.blocks == part.blocks);
  CHECK_THROWS_AS(partition_clustered(ds, 3, 5), std::invalid_argument);
  CHECK_THROWS_AS(partition_clustered(ds, 1, 5), std::invalid_argument);
  Dataset unlabeled = ds;
  unlabeled.groups.clear();
  CHECK_THROWS_AS(partition_clustered(unlabeled, 2, 5), std::invalid_argument);
}

TEST_CASE("reshuffled partition keeps the size profile, breaks the clusters") {
  std::vector<std::uint32_t> groups(60);
  for (std::size_t i = 0; i < 60; ++i) groups[i] = i < 20 ? 0u : (i < 45 ? 1u : 2u);
  const Dataset ds = grouped_dataset(groups);
  const Partition base = partition_clustered(ds, 3, 1);
  const Partition shuf = partition_reshuffled(ds, base, 9);
  check_cover(shuf, 60);
  for (int k = 0; k < 3; ++k) CHECK(shuf.size(k) == base.size(k));
  CHECK(shuf.blocks != base.blocks);
  CHECK(partition_reshuffled(ds, base, 9).blocks == shuf.blocks);
  CHECK(partition_reshuffled(ds, base, 10).blocks != shuf.blocks);
  // Some node must now mix groups: 3 clusters cannot survive a random cut
  // into sizes (20, 25, 15) with this seed.
  bool mixed = false;
  for (const auto& block : shuf.blocks) {
    std::set<std::uint32_t> labels;
    for (auto i : block) labels.insert(ds.groups[i]);
    mixed = mixed || labels.size() > 1;
  }
  CHECK(mixed);
}

TEST_CASE("power law sizes follow the largest-remainder split") {
  Dataset ds = grouped_dataset(std::vector<std::uint32_t>(100, 0));
  const Partition part = partition_power_law(ds, 4, 1.0, 3);
  check_cover(part, 100);
  // Shares 1/(1+1/2+1/3+1/4) * (1, 1/2, 1/3, 1/4) of 100 = (48, 24, 16, 12).
  CHECK(part.size(0) == 48);
  CHECK(part.size(1) == 24);
  CHECK(part.size(2) == 16);
  CHECK(part.size(3) == 12);
}

TEST_CASE("power law exponent zero balances, high exponent keeps every node non-empty") {
  Dataset ds = grouped_dataset(std::vector<std::uint32_t>(10, 0));
  const Partition flat = partition_power_law(ds, 3, 0.0, 1);
  check_cover(flat, 10);
  std::vector<std::size_t> sizes = {flat.size(0), flat.size(1), flat.size(2)};
  CHECK(*std::max_element(sizes.begin(), sizes.end()) -
            *std::min_element(sizes.begin(), sizes.end()) <=
        1);
  const Partition steep = partition_power_law(ds, 3, 5.0, 1);
  check_cover(steep, 10);
  CHECK(steep.size(0) == 8);
  CHECK(steep.size(1) == 1);
  CHECK(steep.size(2) == 1);
  CHECK_THROWS_AS(partition_power_law(ds, 11, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(partition_power_law(ds, 0, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(partition_power_law(ds, 3, -0.5, 1), std::invalid_argument);
  CHECK(partition_power_law(ds, 3, 1.0, 2).blocks == partition_power_law(ds, 3, 1.0, 2).blocks);
}

TEST_CASE("build_partition dispatches and validates the base") {
  std::vector<std::uint32_t> groups(40);
  for (std::size_t i = 0; i < 40; ++i) groups[i] = i < 10 ? 0u : 1u;
  const Dataset ds = grouped_dataset(groups);
  PartitionSpec spec;
  spec.kind = PartitionKind::Clustered;
  spec.k = 2;
  spec.seed = 4;
  const Partition clustered = build_partition(ds, spec);
  CHECK(clustered.blocks == partition_clustered(ds, 2, 4).blocks);
  spec.kind = PartitionKind::Reshuffled;
  CHECK_THROWS_AS(build_partition(ds, spec), std::invalid_argument);
  const Partition shuf = build_partition(ds, spec, &clustered);
  CHECK(shuf.blocks == partition_reshuffled(ds, clustered, 4).blocks);
  spec.kind = PartitionKind::PowerLaw;
  spec.exponent = 1.5;
  check_cover(build_partition(ds, spec), 40);
}

TEST_CASE("sparsity stats on a three-point example") {
  // x1 has coords {0, 2}, x2 and x3 have {1, 2}; node 0 = {x1}, node 1 = {x2, x3}.
  Dataset ds;
  ds.dim = 3;
  ds.loss = LossKind::Quadratic;
  ds.x.push_back(make_sparse(3, {{0, 1.0}, {2, 1.0}}));
  ds.x.push_back(make_sparse(3, {{1, 2.0}, {2, 1.0}}));
  ds.x.push_back(make_sparse(3, {{1, -1.0}, {2, 3.0}}));
  ds.y = {1.0, 1.0, 1.0};
  Partition part;
  part.n = 3;
  part.blocks = {{0}, {1, 2}};
  const SparsityStats st = compute_stats(ds, part);
  CHECK(st.global_count == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(st.node_count[0] == std::vector<std::uint64_t>{1, 0, 1});
  CHECK(st.node_count[1] == std::vector<std::uint64_t>{0, 2, 2});
  CHECK(st.phi_global[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(st.phi_global[2] == 1.0);
  CHECK(st.s[0][0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(st.s[0][1] == 0.0);
  CHECK(st.s[0][2] == 1.0);
  CHECK(st.s[1][0] == 0.0);
  CHECK(st.s[1][1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(st.s[1][2] == 1.0);
  CHECK(st.omega == std::vector<std::uint32_t>{1, 1, 2});
  CHECK(st.a[0] == 2.0);
  CHECK(st.a[1] == 2.0);
  CHECK(st.a[2] == 1.0);
}

TEST_CASE("sparsity stats invariants on random partitions") {
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const std::uint32_t n = 40;
    const Dataset ds = testutil::random_instance(rng, n, 9, LossKind::Quadratic, 0.0);
    const Partition part = testutil::random_partition(rng, n, 5);
    const SparsityStats st = compute_stats(ds, part);
    for (std::uint32_t j = 0; j < 9; ++j) {
      std::uint64_t sum = 0;
      for (int k = 0; k < 5; ++k) sum += st.node_count[static_cast<std::size_t>(k)][j];
      CHECK(sum == st.global_count[j]);
      CHECK(st.omega[j] <= 5);
      if (st.omega[j] == 0) {
        CHECK(st.a[j] == 0.0);
      } else {
        CHECK(st.a[j] == doctest::Approx(5.0 / st.omega[j]).epsilon(1e-15));
      }
      for (int k = 0; k < 5; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        CHECK(st.s[ku][j] >= 0.0);
        CHECK((st.s[ku][j] == 0.0) == (st.node_count[ku][j] == 0));
      }
    }
  }
}

TEST_CASE("single node makes every present-coordinate scaling exactly one") {
  Rng rng(31);
  const Dataset ds = testutil::random_instance(rng, 25, 6, LossKind::Quadratic, 0.0);
  Partition part;
  part.n = 25;
  part.blocks.resize(1);
  for (std::uint32_t i = 0; i < 25; ++i) part.blocks[0].push_back(i);
  const SparsityStats st = compute_stats(ds, part);
  for (std::uint32_t j = 0; j < 6; ++j) {
    if (st.global_count[j] == 0) continue;
    CHECK(st.s[0][j] == 1.0);
    CHECK(st.a[j] == 1.0);
  }
}

TEST_CASE("balanced random split keeps node frequencies near global ones") {
  Rng rng(37);
  const std::uint32_t n = 10000;
  const Dataset ds = testutil::random_instance(rng, n, 12, LossKind::Quadratic, 0.0);
  const Partition part = testutil::random_partition(rng, n, 5);
  const SparsityStats st = compute_stats(ds, part);
  for (std::uint32_t j = 0; j < 12; ++j) {
    if (st.phi_global[j] < 0.2) continue;
    for (int k = 0; k < 5; ++k)
      CHECK(std::fabs(st.s[static_cast<std::size_t>(k)][j] - 1.0) <= 0.5);
  }
}

TEST_CASE("stats are identical under serial and parallel execution") {
  Rng rng(41);
  const Dataset ds = testutil::random_instance(rng, 200, 10, LossKind::Quadratic, 0.0);
  const Partition part = testutil::random_partition(rng, 200, 7);
  const SparsityStats a = compute_stats(ds, part, ExecPolicy::Serial);
  const SparsityStats b = compute_stats(ds, part, ExecPolicy::Parallel);
  CHECK(a.global_count == b.global_count);
  CHECK(a.node_count == b.node_count);
  CHECK(a.phi_global == b.phi_global);
  CHECK(a.phi_node == b.phi_node);
  CHECK(a.s == b.s);
  CHECK(a.omega == b.omega);
  CHECK(a.a == b.a);
}

TEST_CASE("node view exposes the block's examples") {
  std::vector<std::uint32_t> groups(6, 0);
  for (std::size_t i = 3; i < 6; ++i) groups[i] = 1;
  const Dataset ds = grouped_dataset(groups);
  Partition part;
  part.n = 6;
  part.blocks = {{0, 2, 4}, {1, 3, 5}};
  const auto view = node_view(ds, part, 1);
  CHECK(view.size() == 3);
  CHECK(view.global(0) == 1);
  CHECK(view.global(2) == 5);
  CHECK(view.y(1) == ds.y[3]);
}
