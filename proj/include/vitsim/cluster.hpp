// Copyright 2026 The vitsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VITSIM_CLUSTER_HPP_
#define VITSIM_CLUSTER_HPP_

#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "vitsim/common.hpp"

namespace vitsim {

using Rank = Count;

struct ClusterSpec {
  Count num_nodes = 1;
  Count gpus_per_node = 8;
  double hbm_bytes_per_gpu = 64.0 * kGiB;
  // Unidirectional usable bandwidth of one GPU-GPU link inside a node.
  double intra_node_bw = 50.0e9;
  // Injection bandwidth of one node, shared by all of its GPUs.
  double inter_node_bw = 100.0e9;
  double intra_node_latency = 2.0e-6;
  double inter_node_latency = 10.0e-6;
  double peak_flops_per_gpu = 0.0;
  double compute_efficiency = 0.45;

  Count world_size() const { return num_nodes * gpus_per_node; }
  double effective_flops() const { return peak_flops_per_gpu * compute_efficiency; }
  Count node_of(Rank rank) const { return rank / gpus_per_node; }

  // Per-rank share of the node's injection bandwidth when every GPU on the
  // node drives inter-node traffic at once.
  double inter_node_bw_per_rank() const {
    return inter_node_bw / static_cast<double>(gpus_per_node);
  }

  void validate() const {
    if (num_nodes < 1) throw InvalidConfig("ClusterSpec.num_nodes must be >= 1");
    if (gpus_per_node < 1) throw InvalidConfig("ClusterSpec.gpus_per_node must be >= 1");
    if (!(hbm_bytes_per_gpu > 0)) throw InvalidConfig("ClusterSpec.hbm_bytes_per_gpu must be > 0");
    if (!(intra_node_bw > 0)) throw InvalidConfig("ClusterSpec.intra_node_bw must be > 0");
    if (!(inter_node_bw > 0)) throw InvalidConfig("ClusterSpec.inter_node_bw must be > 0");
    if (!(intra_node_latency >= 0)) {
      throw InvalidConfig("ClusterSpec.intra_node_latency must be >= 0");
    }
    if (!(inter_node_latency >= 0)) {
      throw InvalidConfig("ClusterSpec.inter_node_latency must be >= 0");
    }
    if (!(peak_flops_per_gpu > 0)) {
      throw InvalidConfig("ClusterSpec.peak_flops_per_gpu must be > 0");
    }
    if (!(compute_efficiency > 0 && compute_efficiency <= 1)) {
      throw InvalidConfig("ClusterSpec.compute_efficiency must lie in (0, 1]");
    }
  }

  bool operator==(const ClusterSpec &) const = default;
};

// Frontier: 8 GCDs per node with 64 GB HBM each, 50 GB/s Infinity Fabric
// between GPUs and 100 GB/s Slingshot-11 per node. Peak is the dense
// BF16/FP16 matrix rate of one MI250X GCD.
inline ClusterSpec frontier_preset(Count num_nodes = 1) {
  ClusterSpec spec;
  spec.num_nodes = num_nodes;
  spec.peak_flops_per_gpu = 191.5e12;
  return spec;
}

inline ClusterSpec cluster_preset(std::string_view name, Count num_nodes = 1) {
  if (name == "frontier") return frontier_preset(num_nodes);
  throw InvalidConfig("cluster: unknown preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

enum class LinkClass { kSameGpu, kIntraNode, kInterNode };

inline std::string_view to_string(LinkClass c) {
  switch (c) {
    case LinkClass::kSameGpu:
      return "same-gpu";
    case LinkClass::kIntraNode:
      return "intra-node";
    case LinkClass::kInterNode:
      return "inter-node";
  }
  return "?";
}

struct LinkInfo {
  LinkClass link = LinkClass::kSameGpu;
  double bandwidth = 0.0;
  double latency = 0.0;
};

inline LinkInfo link_class(Rank a, Rank b, const ClusterSpec &spec) {
  const Count world = spec.world_size();
  if (a < 0 || a >= world || b < 0 || b >= world) {
    throw InvalidArgument("rank out of range [0, " + std::to_string(world) + ")");
  }
  if (a == b) return {LinkClass::kSameGpu, std::numeric_limits<double>::infinity(), 0.0};
  if (spec.node_of(a) == spec.node_of(b)) {
    return {LinkClass::kIntraNode, spec.intra_node_bw, spec.intra_node_latency};
  }
  return {LinkClass::kInterNode, spec.inter_node_bw, spec.inter_node_latency};
}

// ---------------------------------------------------------------------------

using RankGroup = std::vector<Rank>;

struct ProcessGroups {
  Count group_size = 1;
  std::vector<RankGroup> shard_groups;
  std::vector<RankGroup> replica_groups;

  const RankGroup &shard_group_of(Rank rank) const {
    return shard_groups.at(static_cast<std::size_t>(rank / group_size));
  }
  const RankGroup &replica_group_of(Rank rank) const {
    return replica_groups.at(static_cast<std::size_t>(rank % group_size));
  }

  bool operator==(const ProcessGroups &) const = default;
};

// Shard groups are contiguous rank ranges; replica group k holds the k-th
// member of every shard group.
inline ProcessGroups build_groups(const ClusterSpec &spec, Count shard_group_size) {
  spec.validate();
  const Count world = spec.world_size();
  const Count g = shard_group_size;
  if (g < 1 || world % g != 0) {
    throw InvalidTopology("strategy.group_size: shard group size " + std::to_string(g) +
                          " does not divide the rank count " + std::to_string(world));
  }
  if (g <= spec.gpus_per_node && spec.gpus_per_node % g != 0) {
    throw InvalidTopology("strategy.group_size: shard group size " + std::to_string(g) +
                          " does not divide gpus_per_node " + std::to_string(spec.gpus_per_node));
  }
  ProcessGroups out;
  out.group_size = g;
  const Count num_groups = world / g;
  out.shard_groups.resize(static_cast<std::size_t>(num_groups));
  out.replica_groups.resize(static_cast<std::size_t>(g));
  for (Rank r = 0; r < world; ++r) {
    out.shard_groups[static_cast<std::size_t>(r / g)].push_back(r);
    out.replica_groups[static_cast<std::size_t>(r % g)].push_back(r);
  }
  return out;
}

}  // namespace vitsim

#endif  // VITSIM_CLUSTER_HPP_
