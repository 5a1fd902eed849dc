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

// Sharding plans, per-rank memory and the task graph of one training step.

#ifndef VITSIM_SHARDING_HPP_
#define VITSIM_SHARDING_HPP_

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vitsim/archmodel.hpp"
#include "vitsim/cluster.hpp"
#include "vitsim/collectives.hpp"
#include "vitsim/common.hpp"

namespace vitsim {

inline constexpr double kDefaultBucketBytes = 25.0 * 1024 * 1024;

struct Strategy {
  enum class Kind { kNoShard, kFullShard, kGradOpShard, kHybrid, kReplicatedBucketed };

  Kind kind = Kind::kNoShard;
  // Shard-group size; meaningful for kHybrid only.
  Count group_size = 1;
  // Gradient bucket size; meaningful for kReplicatedBucketed only.
  double bucket_bytes = kDefaultBucketBytes;

  static Strategy no_shard() { return {Kind::kNoShard}; }
  static Strategy full_shard() { return {Kind::kFullShard}; }
  static Strategy grad_op_shard() { return {Kind::kGradOpShard}; }
  static Strategy hybrid(Count g) { return {Kind::kHybrid, g}; }
  static Strategy replicated_bucketed(double bucket = kDefaultBucketBytes) {
    return {Kind::kReplicatedBucketed, 1, bucket};
  }

  bool operator==(const Strategy &) const = default;
};

inline std::string to_string(const Strategy &s) {
  switch (s.kind) {
    case Strategy::Kind::kNoShard:
      return "no-shard";
    case Strategy::Kind::kFullShard:
      return "full";
    case Strategy::Kind::kGradOpShard:
      return "grad-op";
    case Strategy::Kind::kHybrid:
      return "hybrid" + std::to_string(s.group_size);
    case Strategy::Kind::kReplicatedBucketed:
      return "ddp";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view name) {
  if (name == "no-shard" || name == "noshard") return Strategy::no_shard();
  if (name == "full" || name == "full-shard") return Strategy::full_shard();
  if (name == "grad-op" || name == "shard-grad-op") return Strategy::grad_op_shard();
  if (name == "ddp" || name == "replicated") return Strategy::replicated_bucketed();
  if (name.starts_with("hybrid")) {
    const auto digits = name.substr(6);
    if (!digits.empty() &&
        std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(c); })) {
      const Count g = std::stoll(std::string(digits));
      if (g >= 1) return Strategy::hybrid(g);
    }
  }
  throw InvalidConfig("strategy: unknown strategy '" + std::string(name) + "'");
}

struct PrefetchPolicy {
  enum class Mode { kNoPrefetch, kBackwardPost, kBackwardPre };

  Mode mode = Mode::kBackwardPre;
  bool limit_all_gathers = true;
  Count max_inflight = 2;

  // Upper bound on gathered-but-not-released units.
  Count inflight_cap() const {
    return limit_all_gathers ? max_inflight : std::numeric_limits<Count>::max();
  }

  void validate() const {
    if (limit_all_gathers && max_inflight < 1) {
      throw InvalidConfig("prefetch.max_inflight must be >= 1 when limit_all_gathers is set");
    }
  }

  bool operator==(const PrefetchPolicy &) const = default;
};

inline std::string_view to_string(PrefetchPolicy::Mode m) {
  switch (m) {
    case PrefetchPolicy::Mode::kNoPrefetch:
      return "none";
    case PrefetchPolicy::Mode::kBackwardPost:
      return "backward-post";
    case PrefetchPolicy::Mode::kBackwardPre:
      return "backward-pre";
  }
  return "?";
}

inline PrefetchPolicy::Mode parse_prefetch_mode(std::string_view name) {
  if (name == "none" || name == "no-prefetch") return PrefetchPolicy::Mode::kNoPrefetch;
  if (name == "backward-post") return PrefetchPolicy::Mode::kBackwardPost;
  if (name == "backward-pre") return PrefetchPolicy::Mode::kBackwardPre;
  throw InvalidConfig("prefetch: unknown policy '" + std::string(name) + "'");
}

// Bytes per element for parameters, gradients and optimizer state. Both
// presets total 16 bytes per parameter.
struct Precision {
  int param_bytes = 4;
  int grad_bytes = 4;
  int optimizer_bytes = 8;

  static Precision fp32() { return {4, 4, 8}; }
  static Precision mixed() { return {2, 2, 12}; }

  int state_bytes() const { return param_bytes + grad_bytes + optimizer_bytes; }

  bool operator==(const Precision &) const = default;
};

// ---------------------------------------------------------------------------
// Plan

struct PlanUnit {
  ModelUnit unit;
  // Elements held per rank, padded up to a multiple of the group size.
  Count shard_elements = 0;

  bool operator==(const PlanUnit &) const = default;
};

struct ShardingPlan {
  // Canonical strategy: Hybrid(1) is stored as NoShard.
  Strategy strategy;
  ClusterSpec cluster;
  ProcessGroups groups;
  std::vector<PlanUnit> units;
  Precision precision;

  Count shard_group_size() const { return groups.group_size; }
  Count world_size() const { return cluster.world_size(); }
  Count replica_group_size() const { return world_size() / shard_group_size(); }

  bool shards_params() const {
    return shard_group_size() > 1 && strategy.kind != Strategy::Kind::kGradOpShard;
  }
  bool shards_grads() const { return shard_group_size() > 1; }
  // Parameters are freed after forward and re-gathered for backward.
  bool reshard_after_forward() const { return shards_params(); }

  bool operator==(const ShardingPlan &) const = default;
};

inline ShardingPlan make_plan(const std::vector<ModelUnit> &units, Strategy strategy,
                              const ClusterSpec &cluster, Precision precision = Precision::fp32()) {
  cluster.validate();
  if (units.empty()) throw InvalidArgument("model must have at least one unit");
  if (strategy.kind == Strategy::Kind::kHybrid && strategy.group_size == 1) {
    strategy = Strategy::no_shard();
  }
  if (strategy.kind != Strategy::Kind::kReplicatedBucketed) {
    strategy.bucket_bytes = kDefaultBucketBytes;
  } else if (!(strategy.bucket_bytes > 0)) {
    throw InvalidConfig("strategy.bucket_bytes must be > 0");
  }
  if (strategy.kind != Strategy::Kind::kHybrid) strategy.group_size = 1;

  Count g = 1;
  switch (strategy.kind) {
    case Strategy::Kind::kFullShard:
    case Strategy::Kind::kGradOpShard:
      g = cluster.world_size();
      break;
    case Strategy::Kind::kHybrid:
      g = strategy.group_size;
      break;
    default:
      break;
  }

  ShardingPlan plan;
  plan.strategy = strategy;
  plan.cluster = cluster;
  plan.groups = build_groups(cluster, g);
  plan.precision = precision;
  for (const auto &u : units) plan.units.push_back({u, detail::ceil_div(u.params, g)});
  return plan;
}

// ---------------------------------------------------------------------------
// Memory

inline constexpr double kNearCapacityFraction = 0.8;

struct MemoryBreakdown {
  double params_bytes = 0.0;
  double grads_bytes = 0.0;
  double optimizer_bytes = 0.0;
  // One unit's full parameters, materialized while it computes.
  double gathered_bytes = 0.0;
  double activations_bytes = 0.0;
  double total_bytes = 0.0;
  double capacity_bytes = 0.0;

  double state_bytes() const { return params_bytes + grads_bytes + optimizer_bytes; }
  bool feasible() const { return total_bytes <= capacity_bytes; }
  bool near_capacity() const { return total_bytes >= kNearCapacityFraction * capacity_bytes; }
};

inline MemoryBreakdown memory_footprint(const ShardingPlan &plan,
                                        const ActivationEstimate &activations) {
  Count full = 0;
  Count sharded = 0;
  Count largest_unit = 0;
  for (const auto &u : plan.units) {
    full += u.unit.params;
    sharded += u.shard_elements;
    largest_unit = std::max(largest_unit, u.unit.params);
  }
  const auto &p = plan.precision;
  const double param_elems = static_cast<double>(plan.shards_params() ? sharded : full);
  const double grad_elems = static_cast<double>(plan.shards_grads() ? sharded : full);

  MemoryBreakdown m;
  m.params_bytes = param_elems * p.param_bytes;
  m.grads_bytes = grad_elems * p.grad_bytes;
  m.optimizer_bytes = grad_elems * p.optimizer_bytes;
  m.gathered_bytes =
      plan.shards_params() ? static_cast<double>(largest_unit) * p.param_bytes : 0.0;
  m.activations_bytes = activations.bytes_per_rank;
  m.total_bytes =
      m.params_bytes + m.grads_bytes + m.optimizer_bytes + m.gathered_bytes + m.activations_bytes;
  m.capacity_bytes = plan.cluster.hbm_bytes_per_gpu;
  return m;
}

// ---------------------------------------------------------------------------
// Step schedule

using TaskId = std::int64_t;

enum class TaskKind { kCompute, kCollective, kFree };
enum class Phase { kForward, kBackward };
enum class CommRole { kNone, kParamGather, kGradReduceScatter, kGradAllReduce };

inline std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kCompute:
      return "compute";
    case TaskKind::kCollective:
      return "collective";
    case TaskKind::kFree:
      return "free";
  }
  return "?";
}

inline std::string_view to_string(Phase p) {
  return p == Phase::kForward ? "forward" : "backward";
}

struct Task {
  TaskId id = 0;
  TaskKind kind = TaskKind::kCompute;
  Phase phase = Phase::kForward;
  Count unit = 0;
  double flops = 0.0;
  CommRole role = CommRole::kNone;
  std::optional<CollectiveCall> call;
  std::vector<TaskId> deps;

  double bytes() const { return call ? call->bytes : 0.0; }
  bool is_all_gather() const {
    return call && call->kind == CollectiveKind::kAllGather;
  }

  bool operator==(const Task &) const = default;
};

struct StepSchedule {
  std::vector<Task> tasks;
  Strategy strategy;
  PrefetchPolicy prefetch;
  Count local_batch = 1;
  Count world_size = 1;
  std::vector<ModelUnit> units;
  std::optional<MemoryBreakdown> memory;

  Count global_batch() const { return local_batch * world_size; }
};

namespace detail {

class ScheduleBuilder {
 public:
  ScheduleBuilder(const ShardingPlan &plan, const PrefetchPolicy &prefetch)
      : plan_(plan), cap_(prefetch.inflight_cap()) {}

  TaskId compute(Phase phase, Count unit, double flops, std::vector<TaskId> deps) {
    Task t;
    t.kind = TaskKind::kCompute;
    t.phase = phase;
    t.unit = unit;
    t.flops = flops;
    t.deps = std::move(deps);
    return push(std::move(t));
  }

  TaskId free(Phase phase, Count unit, TaskId after) {
    Task t;
    t.kind = TaskKind::kFree;
    t.phase = phase;
    t.unit = unit;
    t.deps = {after};
    return push(std::move(t));
  }

  TaskId collective(Phase phase, Count unit, CommRole role, CollectiveKind kind, double bytes,
                    const RankGroup &group, std::vector<TaskId> deps) {
    Task t;
    t.kind = TaskKind::kCollective;
    t.phase = phase;
    t.unit = unit;
    t.role = role;
    t.call = CollectiveCall{kind, bytes, group, select_algorithm(group, plan_.cluster)};
    t.deps = std::move(deps);
    return push(std::move(t));
  }

  // Issues a parameter all-gather subject to the in-flight limit: the j-th
  // gather waits for the release of gather j - cap.
  TaskId gather(Phase phase, Count unit, double bytes, const RankGroup &group,
                std::vector<TaskId> deps) {
    const auto j = static_cast<Count>(gathers_.size());
    if (cap_ <= j) {
      const TaskId release = releases_.at(static_cast<std::size_t>(j - cap_));
      deps.push_back(release);
    }
    const TaskId id =
        collective(phase, unit, CommRole::kParamGather, CollectiveKind::kAllGather, bytes, group,
                   std::move(deps));
    gathers_.push_back(id);
    releases_.push_back(-1);
    gather_index_[id] = gathers_.size() - 1;
    return id;
  }

  // True when the next gather's limiter dependency already exists.
  bool gather_ready() const {
    const auto j = static_cast<Count>(gathers_.size());
    return j < cap_ || releases_.at(static_cast<std::size_t>(j - cap_)) >= 0;
  }

  // Marks the task after which the gathered parameters may be dropped.
  void set_release(TaskId gather_id, TaskId release) {
    releases_.at(gather_index_.at(gather_id)) = release;
  }

  std::vector<Task> take() { return std::move(tasks_); }

 private:
  TaskId push(Task t) {
    t.id = static_cast<TaskId>(tasks_.size());
    for (TaskId d : t.deps) {
      if (d < 0 || d >= t.id) throw CyclicSchedule("dependency on a task not yet issued");
    }
    std::sort(t.deps.begin(), t.deps.end());
    t.deps.erase(std::unique(t.deps.begin(), t.deps.end()), t.deps.end());
    tasks_.push_back(std::move(t));
    return tasks_.back().id;
  }

  const ShardingPlan &plan_;
  Count cap_;
  std::vector<Task> tasks_;
  std::vector<TaskId> gathers_;
  std::vector<TaskId> releases_;
  std::map<TaskId, std::size_t> gather_index_;
};

}  // namespace detail

// Builds the task graph for rank 0; every rank runs the same program on its
// own groups. Forward runs units in order, backward in reverse.
inline StepSchedule step_schedule(const ShardingPlan &plan, const PrefetchPolicy &prefetch,
                                  const FlopProfile &profile) {
  prefetch.validate();
  const Count num_units = static_cast<Count>(plan.units.size());
  const bool sharded = plan.shard_group_size() > 1;
  const bool reshard = plan.reshard_after_forward();
  const bool ddp = plan.strategy.kind == Strategy::Kind::kReplicatedBucketed;
  const RankGroup &shard_group = plan.groups.shard_group_of(0);
  const RankGroup &replica_group = plan.groups.replica_group_of(0);
  const bool replicated = replica_group.size() > 1;
  const auto &prec = plan.precision;
  const double g = static_cast<double>(plan.shard_group_size());
  using Mode = PrefetchPolicy::Mode;

  auto param_bytes = [&](Count u) {
    return static_cast<double>(plan.units[static_cast<std::size_t>(u)].unit.params) *
           prec.param_bytes;
  };
  auto grad_bytes = [&](Count u) {
    return static_cast<double>(plan.units[static_cast<std::size_t>(u)].unit.params) *
           prec.grad_bytes;
  };
  auto fwd_flops = [&](Count u) {
    return unit_forward_flops(plan.units[static_cast<std::size_t>(u)].unit, profile);
  };

  detail::ScheduleBuilder b(plan, prefetch);

  // Forward.
  std::vector<TaskId> fwd(static_cast<std::size_t>(num_units));
  for (Count u = 0; u < num_units; ++u) {
    std::vector<TaskId> deps;
    if (u > 0) deps.push_back(fwd[static_cast<std::size_t>(u - 1)]);
    TaskId ag = -1;
    if (sharded) {
      ag = b.gather(Phase::kForward, u, param_bytes(u), shard_group, {});
      deps.push_back(ag);
    }
    fwd[static_cast<std::size_t>(u)] = b.compute(Phase::kForward, u, fwd_flops(u), deps);
    if (reshard) {
      b.set_release(ag, b.free(Phase::kForward, u, fwd[static_cast<std::size_t>(u)]));
    } else if (sharded) {
      b.set_release(ag, fwd[static_cast<std::size_t>(u)]);
    }
  }

  // Backward.
  const TaskId forward_done = fwd.back();
  std::vector<TaskId> bwd_gather(static_cast<std::size_t>(num_units), -1);
  auto issue_backward_gather = [&](Count u, std::vector<TaskId> deps) {
    bwd_gather[static_cast<std::size_t>(u)] =
        b.gather(Phase::kBackward, u, param_bytes(u), shard_group, std::move(deps));
  };
  if (reshard) issue_backward_gather(num_units - 1, {forward_done});

  double bucket_fill = 0.0;
  TaskId prev_bwd = forward_done;
  for (Count u = num_units - 1; u >= 0; --u) {
    const bool has_next = u > 0;
    // A prefetch the limiter cannot admit yet is issued once this unit's
    // parameters are released.
    bool deferred = false;
    const TaskId before = prev_bwd;
    if (reshard && has_next && prefetch.mode == Mode::kBackwardPre) {
      if (b.gather_ready()) {
        issue_backward_gather(u - 1, {prev_bwd});
      } else {
        deferred = true;
      }
    }
    std::vector<TaskId> deps = {prev_bwd};
    if (reshard) deps.push_back(bwd_gather[static_cast<std::size_t>(u)]);
    const TaskId compute =
        b.compute(Phase::kBackward, u, profile.backward_multiplier * fwd_flops(u), deps);
    prev_bwd = compute;
    if (reshard) {
      b.set_release(bwd_gather[static_cast<std::size_t>(u)],
                    b.free(Phase::kBackward, u, compute));
    }
    if (deferred) issue_backward_gather(u - 1, {before});
    if (reshard && has_next && prefetch.mode == Mode::kBackwardPost) {
      issue_backward_gather(u - 1, {compute});
    }

    TaskId reduce_scatter = -1;
    if (sharded) {
      reduce_scatter = b.collective(Phase::kBackward, u, CommRole::kGradReduceScatter,
                                    CollectiveKind::kReduceScatter, grad_bytes(u), shard_group,
                                    {compute});
      if (replicated) {
        b.collective(Phase::kBackward, u, CommRole::kGradAllReduce, CollectiveKind::kAllReduce,
                     grad_bytes(u) / g, replica_group, {reduce_scatter});
      }
    } else if (ddp && replicated) {
      bucket_fill += grad_bytes(u);
      while (bucket_fill >= plan.strategy.bucket_bytes) {
        b.collective(Phase::kBackward, u, CommRole::kGradAllReduce, CollectiveKind::kAllReduce,
                     plan.strategy.bucket_bytes, replica_group, {compute});
        bucket_fill -= plan.strategy.bucket_bytes;
      }
      if (u == 0 && bucket_fill > 0) {
        b.collective(Phase::kBackward, u, CommRole::kGradAllReduce, CollectiveKind::kAllReduce,
                     bucket_fill, replica_group, {compute});
      }
    } else if (replicated) {
      b.collective(Phase::kBackward, u, CommRole::kGradAllReduce, CollectiveKind::kAllReduce,
                   grad_bytes(u), replica_group, {compute});
    }

    if (reshard && has_next && prefetch.mode == Mode::kNoPrefetch) {
      issue_backward_gather(u - 1, {reduce_scatter});
    }
  }

  StepSchedule out;
  out.tasks = b.take();
  out.strategy = plan.strategy;
  out.prefetch = prefetch;
  out.local_batch = profile.batch;
  out.world_size = plan.world_size();
  for (const auto &u : plan.units) out.units.push_back(u.unit);
  return out;
}

// Structural comparison that ignores task ids: same task sequence, same
// dependency shape.
inline bool isomorphic(const StepSchedule &a, const StepSchedule &b) {
  if (a.tasks.size() != b.tasks.size()) return false;
  for (std::size_t i = 0; i < a.tasks.size(); ++i) {
    const Task &x = a.tasks[i];
    const Task &y = b.tasks[i];
    if (x.kind != y.kind || x.phase != y.phase || x.unit != y.unit || x.flops != y.flops ||
        x.role != y.role || x.call != y.call || x.deps != y.deps) {
      return false;
    }
  }
  return true;
}

}  // namespace vitsim

#endif  // VITSIM_SHARDING_HPP_
