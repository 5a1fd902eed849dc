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

#include "vitsim/engine.hpp"

namespace vitsim {
namespace {

ClusterSpec unit_cluster() {
  // 1 TFLOP/s effective: 1e9 FLOPs take 1 ms.
  auto c = frontier_preset(1);
  c.peak_flops_per_gpu = 1e12;
  c.compute_efficiency = 1.0;
  c.intra_node_latency = 0.0;
  return c;
}

Task compute_task(TaskId id, double ms, std::vector<TaskId> deps, Phase ph = Phase::kForward) {
  Task t;
  t.id = id;
  t.kind = TaskKind::kCompute;
  t.phase = ph;
  t.flops = ms * 1e9;
  t.deps = std::move(deps);
  return t;
}

// All-gather over two intra-node ranks lasting `ms`: S/2 / 50e9 seconds.
Task gather_task(TaskId id, double ms, std::vector<TaskId> deps) {
  Task t;
  t.id = id;
  t.kind = TaskKind::kCollective;
  t.phase = Phase::kBackward;
  t.role = CommRole::kParamGather;
  t.call = CollectiveCall{CollectiveKind::kAllGather, ms * 1e-3 * 50e9 * 2, {0, 1}};
  t.deps = std::move(deps);
  return t;
}

StepSchedule manual(std::vector<Task> tasks) {
  StepSchedule s;
  s.tasks = std::move(tasks);
  s.local_batch = 1;
  s.world_size = 8;
  return s;
}

TEST(Simulate, SerialCompute) {
  const auto s = manual({compute_task(0, 10, {}), compute_task(1, 4, {0})});
  const auto r = simulate_step(s, unit_cluster());
  EXPECT_NEAR(r.metrics.step_seconds, 0.014, 1e-12);
  EXPECT_NEAR(r.metrics.compute_seconds, 0.014, 1e-12);
  EXPECT_EQ(r.metrics.comm_fraction, 0.0);
}

TEST(Simulate, PrefetchedGatherHidesUnderCompute) {
  // BackwardPre: the gather is issued alongside the compute.
  const auto pre = manual({compute_task(0, 10, {}, Phase::kBackward), gather_task(1, 4, {})});
  const auto a = simulate_step(pre, unit_cluster());
  EXPECT_NEAR(a.metrics.step_seconds, 0.010, 1e-12);
  EXPECT_NEAR(a.metrics.comm_seconds_exposed, 0.0, 1e-12);
  // NoPrefetch: the gather waits for the compute.
  const auto none = manual({compute_task(0, 10, {}, Phase::kBackward), gather_task(1, 4, {0})});
  const auto b = simulate_step(none, unit_cluster());
  EXPECT_NEAR(b.metrics.step_seconds, 0.014, 1e-12);
  EXPECT_NEAR(b.metrics.comm_seconds_exposed, 0.004, 1e-12);
}

TEST(Simulate, IoBoundStep) {
  const auto s = manual({compute_task(0, 10, {}), compute_task(1, 4, {0})});
  IoModel io{true, 50.0};  // 1 image at 50 images/s = 20 ms
  const auto r = simulate_step(s, unit_cluster(), io);
  EXPECT_NEAR(r.metrics.io_seconds, 0.020, 1e-12);
  EXPECT_NEAR(r.metrics.step_seconds, 0.020, 1e-12);
  EXPECT_NEAR(r.metrics.makespan_seconds, 0.014, 1e-12);
  // Faster IO leaves the step unchanged.
  io.images_per_second_per_rank = 1000.0;
  EXPECT_NEAR(simulate_step(s, unit_cluster(), io).metrics.step_seconds, 0.014, 1e-12);
  EXPECT_THROW(simulate_step(s, unit_cluster(), IoModel{true, 0.0}), InvalidConfig);
}

TEST(Simulate, CyclesAndDanglingDepsRejected) {
  auto s = manual({compute_task(0, 1, {1}), compute_task(1, 1, {0})});
  EXPECT_THROW(simulate_step(s, unit_cluster()), CyclicSchedule);
  s = manual({compute_task(0, 1, {7})});
  EXPECT_THROW(simulate_step(s, unit_cluster()), InvalidArgument);
}

TEST(Simulate, InfeasibleMemoryIsFlaggedNotFatal) {
  Scenario sc;
  sc.model = model_preset("vit-15b");
  sc.strategy = Strategy::no_shard();
  const auto m = run_scenario(sc, frontier_preset());
  ASSERT_TRUE(m.peak_memory.has_value());
  EXPECT_FALSE(m.peak_memory->feasible());
  EXPECT_GT(m.images_per_second, 0.0);
}

TEST(CommFraction, ZeroByteCollectives) {
  auto s = manual({compute_task(0, 10, {}), gather_task(1, 0, {0})});
  EXPECT_EQ(comm_fraction(s, unit_cluster()), 0.0);
}

TEST(CommFraction, NonDecreasingInNodesForNoShard) {
  const auto spec = frontier_preset();
  double prev = 0.0;
  for (Count n : {1, 2, 4, 8, 16, 32, 64}) {
    Scenario sc;
    sc.model = model_preset("mae-3b");
    sc.strategy = Strategy::no_shard();
    sc.nodes = n;
    const auto b = build_scenario(sc, spec);
    const double f = comm_fraction(b.schedule, b.cluster);
    EXPECT_GE(f, prev - 1e-12) << n;
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    prev = f;
  }
}

// Closed form for fully serial schedules.
double serial_sum(const StepSchedule &s, const ClusterSpec &c) {
  double total = 0.0;
  for (const auto &t : s.tasks) total += task_duration(t, c);
  return total;
}

TEST(Oracle, NoOverlapSchedulesMatchClosedForm) {
  std::mt19937_64 rng(5);
  auto pick = [&](Count lo, Count hi) { return std::uniform_int_distribution<Count>(lo, hi)(rng); };
  PrefetchPolicy serial;
  serial.mode = PrefetchPolicy::Mode::kNoPrefetch;
  serial.limit_all_gathers = true;
  serial.max_inflight = 1;
  for (int i = 0; i < 150; ++i) {
    const Count heads = pick(1, 8);
    ViTConfig v{heads * pick(8, 64), pick(1, 12), pick(16, 512), heads, pick(2, 16), 0};
    v.image_size = v.patch_size * pick(2, 16);
    auto spec = frontier_preset(pick(1, 4));
    spec.compute_efficiency = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
    spec.inter_node_latency = std::uniform_real_distribution<double>(0, 1e-4)(rng);
    const auto plan = make_plan(model_units(v), Strategy::full_shard(), spec);
    const auto s = step_schedule(plan, serial, flops(v, pick(1, 64)));
    const double want = serial_sum(s, spec);
    const double got = simulate_step(s, spec).metrics.step_seconds;
    EXPECT_NEAR(got, want, 1e-9 * want) << i;
  }
}

void check_trace(const StepSchedule &s, const SimulationResult &r) {
  std::map<TaskId, const Event *> by_task;
  std::map<std::string, std::vector<const Event *>> by_resource;
  for (const auto &e : r.trace.events) {
    by_task[e.task] = &e;
    EXPECT_LE(e.start, e.end);
    if (e.resource != "none") by_resource[e.resource].push_back(&e);
  }
  ASSERT_EQ(by_task.size(), s.tasks.size());
  for (const auto &t : s.tasks) {
    for (TaskId d : t.deps) EXPECT_GE(by_task.at(t.id)->start, by_task.at(d)->end);
  }
  for (auto &[res, events] : by_resource) {
    std::sort(events.begin(), events.end(),
              [](const Event *a, const Event *b) { return a->start < b->start; });
    for (std::size_t i = 1; i < events.size(); ++i) {
      EXPECT_GE(events[i]->start, events[i - 1]->end) << res;
    }
  }
}

TEST(Trace, InvariantsAndBounds) {
  const auto spec = frontier_preset();
  const char *models[] = {"vit-base", "mae-base", "vit-huge"};
  const Strategy strategies[] = {Strategy::no_shard(), Strategy::full_shard(),
                                 Strategy::grad_op_shard(), Strategy::hybrid(2),
                                 Strategy::hybrid(8), Strategy::replicated_bucketed()};
  for (const char *m : models) {
    for (const auto &st : strategies) {
      for (auto mode : {PrefetchPolicy::Mode::kNoPrefetch, PrefetchPolicy::Mode::kBackwardPost,
                        PrefetchPolicy::Mode::kBackwardPre}) {
        Scenario sc;
        sc.model = model_preset(m);
        sc.strategy = st;
        sc.prefetch.mode = mode;
        sc.nodes = 2;
        sc.local_batch = 8;
        const auto b = build_scenario(sc, spec);
        const auto r = simulate_step(b.schedule, b.cluster);
        check_trace(b.schedule, r);
        double compute = 0.0, longest_comm = 0.0;
        for (const auto &t : b.schedule.tasks) {
          const double d = task_duration(t, b.cluster);
          if (t.kind == TaskKind::kCompute) compute += d;
          if (t.kind == TaskKind::kCollective) longest_comm = std::max(longest_comm, d);
        }
        EXPECT_GE(r.metrics.step_seconds, compute * (1 - 1e-12));
        EXPECT_GE(r.metrics.step_seconds, longest_comm);
        EXPECT_GE(r.metrics.step_seconds, r.metrics.comm_seconds_exposed);
        EXPECT_GE(r.metrics.comm_fraction, 0.0);
        EXPECT_LE(r.metrics.comm_fraction, 1.0);
        // Determinism.
        EXPECT_EQ(simulate_step(b.schedule, b.cluster).trace, r.trace);
      }
    }
  }
}

TEST(Trace, SingleInflightGathersNeverOverlap) {
  const auto spec = frontier_preset();
  for (const char *m : {"vit-base", "mae-huge"}) {
    for (auto st : {Strategy::full_shard(), Strategy::hybrid(4), Strategy::hybrid(16)}) {
      for (auto mode : {PrefetchPolicy::Mode::kNoPrefetch, PrefetchPolicy::Mode::kBackwardPost,
                        PrefetchPolicy::Mode::kBackwardPre}) {
        Scenario sc;
        sc.model = model_preset(m);
        sc.strategy = st;
        sc.prefetch = {mode, true, 1};
        sc.nodes = 4;
        const auto b = build_scenario(sc, spec);
        const auto r = simulate_step(b.schedule, b.cluster);
        std::vector<std::pair<double, double>> ags;
        for (const auto &e : r.trace.events) {
          if (b.schedule.tasks[static_cast<std::size_t>(e.task)].is_all_gather()) {
            ags.emplace_back(e.start, e.end);
          }
        }
        std::sort(ags.begin(), ags.end());
        for (std::size_t i = 1; i < ags.size(); ++i) EXPECT_GE(ags[i].first, ags[i - 1].second);
      }
    }
  }
}

TEST(Simulate, ZeroCommStepIsStrategyInvariant) {
  const auto spec = frontier_preset();
  for (const char *m : {"vit-base", "mae-1b"}) {
    std::optional<double> ref;
    for (auto st : {Strategy::no_shard(), Strategy::full_shard(), Strategy::hybrid(2),
                    Strategy::hybrid(8), Strategy::hybrid(16)}) {
      Scenario sc;
      sc.model = model_preset(m);
      sc.strategy = st;
      sc.nodes = 2;
      const auto b = build_scenario(sc, spec);
      const double t = simulate_step(b.schedule, b.cluster, {}, {true}).metrics.step_seconds;
      if (!ref) ref = t;
      EXPECT_NEAR(t, *ref, 1e-12 * *ref) << m << " " << to_string(st);
    }
  }
}

TEST(Sweep, RowsIdealAndInfeasible) {
  SweepRequest req;
  req.models = {{"vit-base", model_preset("vit-base")}, {"mae-huge", model_preset("mae-huge")}};
  req.strategies = {Strategy::full_shard(), Strategy::hybrid(16), Strategy::no_shard()};
  req.node_counts = {1, 2, 4, 8};
  const auto t = sweep(req, frontier_preset());
  ASSERT_EQ(t.rows.size(), 2u * 3 * 4);
  for (const auto &r : t.rows) {
    if (r.strategy == "hybrid16" && r.nodes == 1) {
      EXPECT_FALSE(r.feasible);
      continue;
    }
    EXPECT_LE(r.ips, r.ideal_ips) << r.model << " " << r.strategy << " " << r.nodes;
  }
  EXPECT_EQ(t.rows[0].model, "vit-base");
  EXPECT_EQ(t.rows[0].strategy, "full");
  EXPECT_EQ(t.rows[0].nodes, 1);
  EXPECT_EQ(t.rows[0].ips, t.rows[0].ideal_ips);
  req.threads = 1;
  EXPECT_EQ(sweep(req, frontier_preset()), t);
  EXPECT_THROW(sweep(SweepRequest{}, frontier_preset()), InvalidArgument);
}

Scenario scenario(const char *model, Strategy s, Count nodes) {
  Scenario sc;
  sc.model_name = model;
  sc.model = model_preset(model);
  sc.strategy = s;
  sc.nodes = nodes;
  return sc;
}

TEST(Calibration, RoundTrip) {
  const auto base = frontier_preset();
  const double true_e = 0.62, true_l = 3.0;
  const auto truth = apply_calibration(base, true_e, true_l);
  std::vector<Observation> obs;
  for (auto sc : {scenario("vit-base", Strategy::full_shard(), 1),
                  scenario("vit-base", Strategy::full_shard(), 16),
                  scenario("vit-base", Strategy::full_shard(), 64),
                  scenario("vit-base", Strategy::no_shard(), 32)}) {
    obs.push_back({sc, run_scenario(sc, truth).images_per_second});
  }
  const auto p = calibrate(obs, base);
  EXPECT_NEAR(p.compute_efficiency / true_e, 1.0, 0.05);
  EXPECT_NEAR(p.latency_scale / true_l, 1.0, 0.05);
  EXPECT_LT(p.residual, 1e-6);
  EXPECT_TRUE(p.warnings.empty());
}

TEST(Calibration, IllPosedWarnings) {
  const auto base = frontier_preset();
  const auto sc = scenario("vit-base", Strategy::no_shard(), 1);
  auto p = calibrate({{sc, 800.0}}, base);
  ASSERT_EQ(p.warnings.size(), 1u);
  EXPECT_NE(p.warnings[0].find("fewer than two"), std::string::npos);
  p = calibrate({{sc, 800.0}, {sc, 810.0}}, base);
  ASSERT_EQ(p.warnings.size(), 1u);
  EXPECT_NE(p.warnings[0].find("same scenario"), std::string::npos);
  EXPECT_GT(p.residual, 0.0);
  EXPECT_GT(p.compute_efficiency, 0.0);
  EXPECT_LE(p.compute_efficiency, 1.0);
  EXPECT_THROW(calibrate({}, base), InvalidArgument);
  EXPECT_THROW(calibrate({{sc, 0.0}}, base), InvalidArgument);
}

}  // namespace
}  // namespace vitsim
