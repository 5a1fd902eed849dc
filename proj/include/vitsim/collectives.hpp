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

// Alpha-beta cost model for ring collectives.
//
// A ring over N ranks moving a full payload of S bytes runs N-1 steps for
// all-gather or reduce-scatter and 2(N-1) for all-reduce. Every step pays
// the slowest link's latency and moves S/N bytes over the bottleneck link:
//
//   all-gather, reduce-scatter:  (N-1) a + (N-1)/N * S/B
//   all-reduce:                 2(N-1) a + 2(N-1)/N * S/B
//
// Links that leave a node are charged the per-rank share of the node's
// injection bandwidth, since every GPU on the node is communicating at once
// in a data-parallel step. The hierarchical ring splits a node-spanning
// collective into intra-node and inter-node phases that run back to back.

#ifndef VITSIM_COLLECTIVES_HPP_
#define VITSIM_COLLECTIVES_HPP_

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "vitsim/cluster.hpp"
#include "vitsim/common.hpp"

namespace vitsim {

enum class CollectiveKind { kAllGather, kReduceScatter, kAllReduce };
enum class Algorithm { kRing, kHierarchicalRing };

inline std::string_view to_string(CollectiveKind k) {
  switch (k) {
    case CollectiveKind::kAllGather:
      return "all-gather";
    case CollectiveKind::kReduceScatter:
      return "reduce-scatter";
    case CollectiveKind::kAllReduce:
      return "all-reduce";
  }
  return "?";
}

inline std::string_view to_string(Algorithm a) {
  return a == Algorithm::kRing ? "ring" : "hierarchical-ring";
}

struct CollectiveCall {
  CollectiveKind kind = CollectiveKind::kAllReduce;
  // Full (unsharded) payload in bytes.
  double bytes = 0.0;
  RankGroup group;
  Algorithm algorithm = Algorithm::kRing;

  bool operator==(const CollectiveCall &) const = default;
};

namespace detail {

inline void check_call(const CollectiveCall &call) {
  if (call.group.empty()) throw InvalidArgument("collective group must be non-empty");
  if (!(call.bytes >= 0.0)) throw InvalidArgument("collective bytes must be >= 0");
  std::set<Rank> seen;
  for (Rank r : call.group) {
    if (!seen.insert(r).second) {
      throw InvalidArgument("collective group contains duplicate rank " + std::to_string(r));
    }
  }
}

struct RingLinks {
  double bandwidth;
  double latency;
};

// Bottleneck bandwidth and slowest latency over the ring's links, taken in
// group order and closed back to the first rank.
inline RingLinks ring_links(const RankGroup &group, const ClusterSpec &spec) {
  RingLinks out{std::numeric_limits<double>::infinity(), 0.0};
  const std::size_t n = group.size();
  for (std::size_t i = 0; i < n; ++i) {
    const LinkInfo link = link_class(group[i], group[(i + 1) % n], spec);
    const double bw = link.link == LinkClass::kInterNode ? spec.inter_node_bw_per_rank()
                                                         : link.bandwidth;
    out.bandwidth = std::min(out.bandwidth, bw);
    out.latency = std::max(out.latency, link.latency);
  }
  return out;
}

inline double ring_steps(CollectiveKind kind, double n) {
  return kind == CollectiveKind::kAllReduce ? 2.0 * (n - 1.0) : n - 1.0;
}

}  // namespace detail

// Closed-form ring time for group size n, payload s, bandwidth b, latency a.
inline double ring_time(CollectiveKind kind, Count n, double bytes, double bandwidth,
                        double latency) {
  if (n <= 1) return 0.0;
  const double nn = static_cast<double>(n);
  const double steps = detail::ring_steps(kind, nn);
  return steps * latency + steps / nn * bytes / bandwidth;
}

// Bytes each rank sends over the whole ring.
inline double ring_bytes_per_rank(CollectiveKind kind, Count n, double bytes) {
  if (n <= 1) return 0.0;
  const double nn = static_cast<double>(n);
  return detail::ring_steps(kind, nn) / nn * bytes;
}

inline bool spans_nodes(const RankGroup &group, const ClusterSpec &spec) {
  for (Rank r : group) {
    if (spec.node_of(r) != spec.node_of(group.front())) return true;
  }
  return false;
}

namespace detail {

// Members of `group` bucketed by node, preserving group order; empty when
// the per-node count is not uniform.
inline std::vector<RankGroup> members_by_node(const RankGroup &group, const ClusterSpec &spec) {
  std::map<Count, RankGroup> by_node;
  std::vector<Count> node_order;
  for (Rank r : group) {
    const Count node = spec.node_of(r);
    if (!by_node.contains(node)) node_order.push_back(node);
    by_node[node].push_back(r);
  }
  std::vector<RankGroup> out;
  for (Count node : node_order) out.push_back(by_node[node]);
  for (const auto &members : out) {
    if (members.size() != out.front().size()) return {};
  }
  return out;
}

}  // namespace detail

// Intra-node and inter-node phases, from the point of view of the group's
// first rank. Phase payloads are full payloads of the phase collective.
inline std::vector<CollectiveCall> decompose_hierarchical(const CollectiveCall &call,
                                                          const ClusterSpec &spec) {
  detail::check_call(call);
  if (!spans_nodes(call.group, spec)) {
    throw InvalidDecomposition("hierarchical decomposition needs a group spanning >= 2 nodes");
  }
  const auto nodes = detail::members_by_node(call.group, spec);
  if (nodes.empty()) {
    throw InvalidDecomposition("hierarchical decomposition needs the same rank count per node");
  }
  const RankGroup intra = nodes.front();
  RankGroup inter;
  for (const auto &members : nodes) inter.push_back(members.front());
  const double k = static_cast<double>(intra.size());
  const double s = call.bytes;

  using K = CollectiveKind;
  auto phase = [](K kind, double bytes, const RankGroup &g) {
    return CollectiveCall{kind, bytes, g, Algorithm::kRing};
  };
  switch (call.kind) {
    case K::kAllReduce:
      return {phase(K::kReduceScatter, s, intra), phase(K::kAllReduce, s / k, inter),
              phase(K::kAllGather, s, intra)};
    case K::kReduceScatter:
      return {phase(K::kReduceScatter, s, intra), phase(K::kReduceScatter, s / k, inter)};
    case K::kAllGather:
      return {phase(K::kAllGather, s / k, inter), phase(K::kAllGather, s, intra)};
  }
  return {};
}

// Hierarchical when the group crosses nodes with several ranks on each;
// a plain ring otherwise.
inline Algorithm select_algorithm(const RankGroup &group, const ClusterSpec &spec) {
  if (group.size() < 2 || !spans_nodes(group, spec)) return Algorithm::kRing;
  const auto nodes = detail::members_by_node(group, spec);
  if (nodes.empty() || nodes.front().size() < 2) return Algorithm::kRing;
  return Algorithm::kHierarchicalRing;
}

inline double collective_time(const CollectiveCall &call, const ClusterSpec &spec) {
  detail::check_call(call);
  const Count n = static_cast<Count>(call.group.size());
  if (n == 1) return 0.0;
  if (call.algorithm == Algorithm::kHierarchicalRing && spans_nodes(call.group, spec) &&
      !detail::members_by_node(call.group, spec).empty()) {
    double total = 0.0;
    for (const auto &p : decompose_hierarchical(call, spec)) total += collective_time(p, spec);
    return total;
  }
  const auto links = detail::ring_links(call.group, spec);
  return ring_time(call.kind, n, call.bytes, links.bandwidth, links.latency);
}

// The widest link class the collective spans; engine streams are keyed on it.
inline LinkClass call_link_class(const CollectiveCall &call, const ClusterSpec &spec) {
  if (call.group.size() < 2) return LinkClass::kSameGpu;
  return spans_nodes(call.group, spec) ? LinkClass::kInterNode : LinkClass::kIntraNode;
}

}  // namespace vitsim

#endif  // VITSIM_COLLECTIVES_HPP_
