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

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "vitsim/sharding.hpp"

namespace vitsim {
namespace {

std::vector<ModelUnit> units_of(const char *name) { return model_units(model_preset(name)); }

ActivationEstimate default_activations(const char *name, Count batch = 32) {
  return activation_bytes(model_preset(name), batch, 2, ActivationModel::kCheckpointed);
}

// Transitive predecessor sets over the task DAG.
class Reach {
 public:
  explicit Reach(const StepSchedule &s) : s_(s) {}

  bool depends(TaskId later, TaskId earlier) {
    return ancestors(later).contains(earlier);
  }

  const std::set<TaskId> &ancestors(TaskId id) {
    auto it = memo_.find(id);
    if (it != memo_.end()) return it->second;
    std::set<TaskId> out;
    for (TaskId d : s_.tasks.at(static_cast<std::size_t>(id)).deps) {
      out.insert(d);
      const auto &up = ancestors(d);
      out.insert(up.begin(), up.end());
    }
    return memo_[id] = std::move(out);
  }

 private:
  const StepSchedule &s_;
  std::map<TaskId, std::set<TaskId>> memo_;
};

std::vector<const Task *> find(const StepSchedule &s, Phase phase, Count unit, TaskKind kind,
                               std::optional<CollectiveKind> ck = std::nullopt) {
  std::vector<const Task *> out;
  for (const auto &t : s.tasks) {
    if (t.phase != phase || t.unit != unit || t.kind != kind) continue;
    if (ck && (!t.call || t.call->kind != *ck)) continue;
    out.push_back(&t);
  }
  return out;
}

StepSchedule schedule_for(const char *model, Strategy strategy, Count nodes,
                          PrefetchPolicy prefetch = {}, Count batch = 4) {
  const auto plan = make_plan(units_of(model), strategy, frontier_preset(nodes));
  return step_schedule(plan, prefetch, flops(model_preset(model), batch));
}

TEST(Strategy, NamesRoundTrip) {
  for (const auto &s : {Strategy::no_shard(), Strategy::full_shard(), Strategy::grad_op_shard(),
                        Strategy::hybrid(8), Strategy::replicated_bucketed()}) {
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  }
  EXPECT_THROW(parse_strategy("hybrid"), InvalidConfig);
  EXPECT_THROW(parse_strategy("hybrid0"), InvalidConfig);
  EXPECT_THROW(parse_strategy("zero3"), InvalidConfig);
}

TEST(Prefetch, LimitNeedsPositiveCap) {
  PrefetchPolicy p;
  p.max_inflight = 0;
  EXPECT_THROW(p.validate(), InvalidConfig);
  p.limit_all_gathers = false;
  EXPECT_NO_THROW(p.validate());
}

TEST(Plan, HybridOneIsNoShard) {
  const auto spec = frontier_preset(2);
  const auto units = units_of("vit-3b");
  EXPECT_EQ(make_plan(units, Strategy::hybrid(1), spec), make_plan(units, Strategy::no_shard(), spec));
}

TEST(Plan, ShardSizes) {
  const auto units = units_of("vit-3b");
  const auto full = make_plan(units, Strategy::full_shard(), frontier_preset(64));
  EXPECT_EQ(full.shard_group_size(), 512);
  Count per_rank = 0, total = 0;
  for (const auto &u : full.units) {
    per_rank += u.shard_elements;
    total += u.unit.params;
    EXPECT_GE(u.shard_elements * 512, u.unit.params);
    EXPECT_LT(u.shard_elements * 512 - u.unit.params, 512);
  }
  EXPECT_NEAR(static_cast<double>(per_rank), 3.067e9 / 512, 0.01 * 3.067e9 / 512);
  const auto none = make_plan(units, Strategy::no_shard(), frontier_preset(64));
  for (const auto &u : none.units) EXPECT_EQ(u.shard_elements, u.unit.params);
  EXPECT_EQ(none.shard_group_size(), 1);
  EXPECT_EQ(none.replica_group_size(), 512);
  (void)total;
}

TEST(Plan, InfeasibleGroupPropagates) {
  EXPECT_THROW(make_plan(units_of("vit-base"), Strategy::hybrid(16), frontier_preset(1)),
               InvalidTopology);
}

TEST(Memory, ThreeBillionNoShard) {
  const auto plan = make_plan(units_of("vit-3b"), Strategy::no_shard(), frontier_preset(1));
  const auto m = memory_footprint(plan, default_activations("vit-3b"));
  const double oracle_states = 16.0 * 3.067e9;
  EXPECT_NEAR(m.state_bytes() / oracle_states, 1.0, 0.01);
  EXPECT_GE(m.total_bytes / 1e9, 55.0);
  EXPECT_LE(m.total_bytes / 1e9, 68.0);
  EXPECT_TRUE(m.near_capacity());
  EXPECT_TRUE(m.feasible());
  EXPECT_DOUBLE_EQ(m.total_bytes, m.params_bytes + m.grads_bytes + m.optimizer_bytes +
                                      m.gathered_bytes + m.activations_bytes);
}

TEST(Memory, HybridTwoHalvesStates) {
  const auto units = units_of("vit-3b");
  const auto act = default_activations("vit-3b");
  const auto spec = frontier_preset(1);
  const auto none = memory_footprint(make_plan(units, Strategy::no_shard(), spec), act);
  const auto h2 = memory_footprint(make_plan(units, Strategy::hybrid(2), spec), act);
  EXPECT_DOUBLE_EQ(h2.state_bytes() * 2, none.state_bytes());
  EXPECT_DOUBLE_EQ(h2.activations_bytes, none.activations_bytes);
}

TEST(Memory, FullShardScalesInverselyWithRanks) {
  const auto units = units_of("vit-3b");
  const auto act = default_activations("vit-3b");
  const double none =
      memory_footprint(make_plan(units, Strategy::no_shard(), frontier_preset(1)), act)
          .state_bytes();
  for (Count n = 8; n <= 512; n *= 2) {
    ASSERT_EQ(n % 8, 0);
    const auto m =
        memory_footprint(make_plan(units, Strategy::full_shard(), frontier_preset(n / 8)), act);
    const double padding = static_cast<double>(units.size()) * n * 16;
    EXPECT_NEAR(m.state_bytes(), none / n, padding / n + 1) << n;
    EXPECT_GT(m.gathered_bytes, 0.0);
  }
}

TEST(Memory, GradOpKeepsParamsFull) {
  const auto units = units_of("vit-1b");
  const auto act = default_activations("vit-1b");
  const auto spec = frontier_preset(2);
  const auto none = memory_footprint(make_plan(units, Strategy::no_shard(), spec), act);
  const auto gop = memory_footprint(make_plan(units, Strategy::grad_op_shard(), spec), act);
  EXPECT_DOUBLE_EQ(gop.params_bytes, none.params_bytes);
  EXPECT_LT(gop.grads_bytes, none.grads_bytes / 15);
  EXPECT_LT(gop.optimizer_bytes, none.optimizer_bytes / 15);
  EXPECT_EQ(gop.gathered_bytes, 0.0);
}

TEST(Memory, MonotoneInShardGroupSize) {
  const auto units = units_of("vit-huge");
  const auto act = default_activations("vit-huge");
  const auto spec = frontier_preset(4);
  double prev = std::numeric_limits<double>::infinity();
  for (Count g : {1, 2, 4, 8, 16, 32}) {
    const auto m = memory_footprint(make_plan(units, Strategy::hybrid(g), spec), act);
    EXPECT_LE(m.state_bytes(), prev);
    EXPECT_DOUBLE_EQ(m.activations_bytes, act.bytes_per_rank);
    prev = m.state_bytes();
  }
}

TEST(Schedule, NoShardHasOnlyAllReduce) {
  const auto s = schedule_for("vit-base", Strategy::no_shard(), 2);
  double ar = 0.0;
  for (const auto &t : s.tasks) {
    if (!t.call) continue;
    EXPECT_EQ(t.call->kind, CollectiveKind::kAllReduce);
    ar += t.call->bytes;
  }
  EXPECT_DOUBLE_EQ(ar, 4.0 * param_count(model_preset("vit-base")).grand_total);
}

TEST(Schedule, NoPrefetchGathersAfterReduceScatter) {
  ViTConfig tiny{8, 1, 16, 2, 2, 4};
  const ModelConfig model = tiny;
  const auto units = model_units(model);
  ASSERT_EQ(units.size(), 2u);
  PrefetchPolicy p;
  p.mode = PrefetchPolicy::Mode::kNoPrefetch;
  const auto plan = make_plan(units, Strategy::full_shard(), frontier_preset(1));
  const auto s = step_schedule(plan, p, flops(model, 1));
  const auto ag0 = find(s, Phase::kBackward, 0, TaskKind::kCollective, CollectiveKind::kAllGather);
  const auto rs1 =
      find(s, Phase::kBackward, 1, TaskKind::kCollective, CollectiveKind::kReduceScatter);
  ASSERT_EQ(ag0.size(), 1u);
  ASSERT_EQ(rs1.size(), 1u);
  EXPECT_TRUE(Reach(s).depends(ag0[0]->id, rs1[0]->id));
}

TEST(Schedule, HybridEightOnTwoNodes) {
  const auto s = schedule_for("vit-base", Strategy::hybrid(8), 2);
  const auto spec = frontier_preset(2);
  bool saw_rs = false, saw_ar = false;
  for (const auto &t : s.tasks) {
    if (!t.call) continue;
    if (t.call->kind == CollectiveKind::kReduceScatter) {
      saw_rs = true;
      EXPECT_EQ(t.call->group.size(), 8u);
      EXPECT_EQ(call_link_class(*t.call, spec), LinkClass::kIntraNode);
    }
    if (t.call->kind == CollectiveKind::kAllReduce) {
      saw_ar = true;
      EXPECT_EQ(t.call->group, (RankGroup{0, 8}));
      EXPECT_EQ(call_link_class(*t.call, spec), LinkClass::kInterNode);
    }
  }
  EXPECT_TRUE(saw_rs && saw_ar);
}

TEST(Schedule, DdpBucketsGradients) {
  const auto s = schedule_for("vit-huge", Strategy::replicated_bucketed(), 2);
  double total = 0.0;
  std::size_t calls = 0;
  for (const auto &t : s.tasks) {
    if (!t.call) continue;
    EXPECT_EQ(t.call->kind, CollectiveKind::kAllReduce);
    EXPECT_LE(t.call->bytes, kDefaultBucketBytes);
    total += t.call->bytes;
    ++calls;
  }
  const double grads = 4.0 * param_count(model_preset("vit-huge")).grand_total;
  EXPECT_NEAR(total, grads, 1e-6 * grads);
  EXPECT_EQ(calls, static_cast<std::size_t>(std::ceil(grads / kDefaultBucketBytes)));
}

// Randomized structural properties.

struct Case {
  ModelConfig model;
  Strategy strategy;
  Count nodes;
  PrefetchPolicy prefetch;
};

Case random_case(std::mt19937_64 &rng) {
  auto pick = [&](Count lo, Count hi) { return std::uniform_int_distribution<Count>(lo, hi)(rng); };
  const Count heads = pick(1, 4);
  ViTConfig v{heads * pick(1, 8), pick(1, 7), pick(1, 64), heads, pick(1, 4), 0};
  v.image_size = v.patch_size * pick(1, 6);
  Case c;
  c.model = v;
  c.nodes = pick(1, 4);
  switch (pick(0, 4)) {
    case 0:
      c.strategy = Strategy::no_shard();
      break;
    case 1:
      c.strategy = Strategy::full_shard();
      break;
    case 2:
      c.strategy = Strategy::grad_op_shard();
      break;
    case 3:
      c.strategy = Strategy::hybrid(Count{1} << pick(0, 4));
      break;
    default:
      c.strategy = Strategy::replicated_bucketed(static_cast<double>(pick(1, 4000)));
  }
  c.prefetch.mode = static_cast<PrefetchPolicy::Mode>(pick(0, 2));
  c.prefetch.limit_all_gathers = pick(0, 1) == 1;
  c.prefetch.max_inflight = pick(1, 3);
  return c;
}

TEST(ScheduleProperties, RandomizedSmallModels) {
  std::mt19937_64 rng(2024);
  int checked = 0;
  while (checked < 1500) {
    const Case c = random_case(rng);
    const auto units = model_units(c.model);
    ASSERT_LE(units.size(), 8u);
    const auto spec = frontier_preset(c.nodes);
    ShardingPlan plan;
    try {
      plan = make_plan(units, c.strategy, spec);
    } catch (const InvalidTopology &) {
      continue;
    }
    ++checked;
    const auto s = step_schedule(plan, c.prefetch, flops(c.model, 2));
    Reach reach(s);
    const double g = static_cast<double>(plan.shard_group_size());
    const Count n = static_cast<Count>(units.size());

    // Dependencies only point backwards, so the graph is acyclic.
    for (const auto &t : s.tasks) {
      for (TaskId d : t.deps) EXPECT_LT(d, t.id);
    }

    double grad_total = 0.0, reduced = 0.0;
    for (Count u = 0; u < n; ++u) {
      const double pbytes = 4.0 * static_cast<double>(units[static_cast<std::size_t>(u)].params);
      grad_total += pbytes;

      double gathered = 0.0;
      for (Phase ph : {Phase::kForward, Phase::kBackward}) {
        for (const Task *ag : find(s, ph, u, TaskKind::kCollective, CollectiveKind::kAllGather)) {
          gathered += ag->bytes();
        }
      }
      EXPECT_LE(gathered, 2.0 * pbytes);
      if (plan.shard_group_size() == 1) EXPECT_EQ(gathered, 0.0);

      const auto bwd = find(s, Phase::kBackward, u, TaskKind::kCompute);
      ASSERT_EQ(bwd.size(), 1u);
      if (plan.reshard_after_forward()) {
        const auto ag =
            find(s, Phase::kBackward, u, TaskKind::kCollective, CollectiveKind::kAllGather);
        ASSERT_EQ(ag.size(), 1u);
        EXPECT_TRUE(reach.depends(bwd[0]->id, ag[0]->id));
      }

      const auto rs =
          find(s, Phase::kBackward, u, TaskKind::kCollective, CollectiveKind::kReduceScatter);
      const auto ar =
          find(s, Phase::kBackward, u, TaskKind::kCollective, CollectiveKind::kAllReduce);
      for (const Task *t : rs) EXPECT_TRUE(reach.depends(t->id, bwd[0]->id));
      for (const Task *t : ar) EXPECT_TRUE(reach.depends(t->id, bwd[0]->id));
      if (!rs.empty()) {
        ASSERT_EQ(rs.size(), 1u);
        reduced += rs[0]->bytes();
        // The cross-replica all-reduce covers exactly this rank's shard.
        double ar_bytes = 0.0;
        for (const Task *t : ar) ar_bytes += t->bytes();
        if (plan.replica_group_size() > 1) {
          EXPECT_NEAR(ar_bytes * g, rs[0]->bytes(), 1e-9 * pbytes);
        } else {
          EXPECT_EQ(ar_bytes, 0.0);
        }
      } else {
        for (const Task *t : ar) reduced += t->bytes();
      }
    }
    if (plan.world_size() > 1) {
      EXPECT_NEAR(reduced, grad_total, 1e-9 * grad_total);
    }

    // Prefetch issue points by static inspection.
    if (plan.reshard_after_forward()) {
      for (Count u = n - 1; u >= 1; --u) {
        const TaskId compute_u = find(s, Phase::kBackward, u, TaskKind::kCompute)[0]->id;
        const TaskId next_ag =
            find(s, Phase::kBackward, u - 1, TaskKind::kCollective, CollectiveKind::kAllGather)[0]
                ->id;
        const bool ordered = reach.depends(next_ag, compute_u);
        if (c.prefetch.mode == PrefetchPolicy::Mode::kBackwardPre && !c.prefetch.limit_all_gathers) {
          EXPECT_FALSE(ordered);
        }
        if (c.prefetch.mode != PrefetchPolicy::Mode::kBackwardPre) EXPECT_TRUE(ordered);
      }
    }

    // In-flight cap: gather j waits for the release of gather j - cap.
    if (c.prefetch.limit_all_gathers) {
      std::vector<TaskId> gathers;
      for (const auto &t : s.tasks) {
        if (t.is_all_gather()) gathers.push_back(t.id);
      }
      const std::size_t cap = static_cast<std::size_t>(c.prefetch.max_inflight);
      for (std::size_t j = cap; j < gathers.size(); ++j) {
        EXPECT_TRUE(reach.depends(gathers[j], gathers[j - cap]));
      }
    }
  }
}

TEST(ScheduleProperties, HybridOneIsomorphicToNoShard) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 200; ++i) {
    Case c = random_case(rng);
    const auto units = model_units(c.model);
    const auto spec = frontier_preset(c.nodes);
    const auto profile = flops(c.model, 3);
    const auto a = step_schedule(make_plan(units, Strategy::hybrid(1), spec), c.prefetch, profile);
    const auto b = step_schedule(make_plan(units, Strategy::no_shard(), spec), c.prefetch, profile);
    EXPECT_TRUE(isomorphic(a, b));
  }
}

}  // namespace
}  // namespace vitsim
