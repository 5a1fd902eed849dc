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

// Discrete-event simulation of one training step.
//
// Tasks are list-scheduled in topological order (lowest id first among
// ready tasks). Each resource is a FIFO stream: one compute stream for the
// rank and one communication stream per (link class, group). A task starts
// once its dependencies have finished and its stream is idle. Free tasks
// take no time and occupy no stream.

#ifndef VITSIM_ENGINE_HPP_
#define VITSIM_ENGINE_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "vitsim/archmodel.hpp"
#include "vitsim/cluster.hpp"
#include "vitsim/collectives.hpp"
#include "vitsim/common.hpp"
#include "vitsim/sharding.hpp"

namespace vitsim {

struct IoModel {
  bool enabled = false;
  double images_per_second_per_rank = 0.0;

  void validate() const {
    if (enabled && !(images_per_second_per_rank > 0)) {
      throw InvalidConfig("io.images_per_second_per_rank must be > 0 when IO is enabled");
    }
  }
};

struct Event {
  TaskId task = 0;
  double start = 0.0;
  double end = 0.0;
  std::string resource;

  bool operator==(const Event &) const = default;
};

struct EventTrace {
  std::vector<Event> events;

  bool operator==(const EventTrace &) const = default;
};

struct StepMetrics {
  double step_seconds = 0.0;
  double makespan_seconds = 0.0;
  double images_per_second = 0.0;
  double compute_seconds = 0.0;
  double comm_seconds = 0.0;
  double comm_seconds_exposed = 0.0;
  double comm_fraction = 0.0;
  double io_seconds = 0.0;
  std::optional<MemoryBreakdown> peak_memory;
};

struct SimulationResult {
  EventTrace trace;
  StepMetrics metrics;
};

struct SimulationOptions {
  // Forces every collective to zero duration ("no communication" runs).
  bool zero_comm = false;
};

namespace detail {

inline std::string stream_key(const Task &task, const ClusterSpec &cluster) {
  if (task.kind == TaskKind::kCompute) return "compute";
  if (task.kind == TaskKind::kFree) return "";
  std::string key(to_string(call_link_class(*task.call, cluster)));
  key += ":";
  for (std::size_t i = 0; i < task.call->group.size(); ++i) {
    if (i) key += ",";
    key += std::to_string(task.call->group[i]);
  }
  return key;
}

// Kahn's algorithm, smallest ready id first.
inline std::vector<std::size_t> topological_order(const std::vector<Task> &tasks) {
  std::map<TaskId, std::size_t> index;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!index.emplace(tasks[i].id, i).second) {
      throw InvalidArgument("duplicate task id " + std::to_string(tasks[i].id));
    }
  }
  std::vector<std::size_t> pending(tasks.size(), 0);
  std::vector<std::vector<std::size_t>> users(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (TaskId d : tasks[i].deps) {
      auto it = index.find(d);
      if (it == index.end()) {
        throw InvalidArgument("task " + std::to_string(tasks[i].id) +
                              " depends on unknown task " + std::to_string(d));
      }
      ++pending[i];
      users[it->second].push_back(i);
    }
  }
  using Item = std::pair<TaskId, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> ready;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (pending[i] == 0) ready.emplace(tasks[i].id, i);
  }
  std::vector<std::size_t> order;
  order.reserve(tasks.size());
  while (!ready.empty()) {
    const std::size_t i = ready.top().second;
    ready.pop();
    order.push_back(i);
    for (std::size_t u : users[i]) {
      if (--pending[u] == 0) ready.emplace(tasks[u].id, u);
    }
  }
  if (order.size() != tasks.size()) throw CyclicSchedule("schedule contains a dependency cycle");
  return order;
}

using Interval = std::pair<double, double>;

inline std::vector<Interval> merge_intervals(std::vector<Interval> v) {
  std::sort(v.begin(), v.end());
  std::vector<Interval> out;
  for (const auto &iv : v) {
    if (iv.second <= iv.first) continue;
    if (!out.empty() && iv.first <= out.back().second) {
      out.back().second = std::max(out.back().second, iv.second);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

inline double measure(const std::vector<Interval> &merged) {
  double total = 0.0;
  for (const auto &iv : merged) total += iv.second - iv.first;
  return total;
}

// Length of `a` not covered by `b`; both merged and sorted.
inline double uncovered(const std::vector<Interval> &a, const std::vector<Interval> &b) {
  double total = measure(a);
  std::size_t j = 0;
  for (const auto &iv : a) {
    while (j < b.size() && b[j].second <= iv.first) ++j;
    for (std::size_t k = j; k < b.size() && b[k].first < iv.second; ++k) {
      total -= std::min(iv.second, b[k].second) - std::max(iv.first, b[k].first);
    }
  }
  return std::max(0.0, total);
}

}  // namespace detail

inline double task_duration(const Task &task, const ClusterSpec &cluster,
                            const SimulationOptions &options = {}) {
  switch (task.kind) {
    case TaskKind::kCompute:
      return task.flops / cluster.effective_flops();
    case TaskKind::kCollective:
      return options.zero_comm ? 0.0 : collective_time(*task.call, cluster);
    case TaskKind::kFree:
      return 0.0;
  }
  return 0.0;
}

inline SimulationResult simulate_step(const StepSchedule &schedule, const ClusterSpec &cluster,
                                      const IoModel &io = {},
                                      const SimulationOptions &options = {}) {
  cluster.validate();
  io.validate();
  const auto &tasks = schedule.tasks;
  const auto order = detail::topological_order(tasks);

  std::map<TaskId, double> finish;
  std::map<std::string, double> stream_free;
  std::vector<detail::Interval> compute_busy;
  std::vector<detail::Interval> comm_busy;

  SimulationResult result;
  result.trace.events.reserve(tasks.size());
  StepMetrics &m = result.metrics;
  double makespan = 0.0;

  for (std::size_t i : order) {
    const Task &t = tasks[i];
    double ready = 0.0;
    for (TaskId d : t.deps) ready = std::max(ready, finish.at(d));
    const std::string key = detail::stream_key(t, cluster);
    double start = ready;
    if (!key.empty()) start = std::max(start, stream_free[key]);
    const double end = start + task_duration(t, cluster, options);
    if (!key.empty()) stream_free[key] = end;
    finish[t.id] = end;
    makespan = std::max(makespan, end);
    result.trace.events.push_back({t.id, start, end, key.empty() ? "none" : key});
    if (t.kind == TaskKind::kCompute) {
      compute_busy.emplace_back(start, end);
      m.compute_seconds += end - start;
    } else if (t.kind == TaskKind::kCollective) {
      comm_busy.emplace_back(start, end);
      m.comm_seconds += end - start;
    }
  }

  m.makespan_seconds = makespan;
  m.io_seconds = io.enabled
                     ? static_cast<double>(schedule.local_batch) / io.images_per_second_per_rank
                     : 0.0;
  m.step_seconds = std::max(makespan, m.io_seconds);
  m.images_per_second =
      m.step_seconds > 0 ? static_cast<double>(schedule.global_batch()) / m.step_seconds : 0.0;
  const auto compute_merged = detail::merge_intervals(std::move(compute_busy));
  const auto comm_merged = detail::merge_intervals(std::move(comm_busy));
  m.comm_seconds_exposed = detail::uncovered(comm_merged, compute_merged);
  m.comm_fraction = m.step_seconds > 0 ? m.comm_seconds_exposed / m.step_seconds : 0.0;
  m.peak_memory = schedule.memory;
  return result;
}

// Share of the synthetic step attributable to communication: the relative
// slowdown against the same schedule with free collectives.
inline double comm_fraction(const StepSchedule &schedule, const ClusterSpec &cluster) {
  const double with = simulate_step(schedule, cluster).metrics.step_seconds;
  const double without = simulate_step(schedule, cluster, {}, {true}).metrics.step_seconds;
  if (with <= 0) return 0.0;
  return std::clamp((with - without) / with, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Scenarios

struct Scenario {
  std::string model_name;
  ModelConfig model;
  Strategy strategy;
  PrefetchPolicy prefetch;
  Count nodes = 1;
  Count local_batch = 32;
  Precision precision = Precision::fp32();
  ActivationModel activation_model = ActivationModel::kCheckpointed;
  // Activations are kept in the autocast compute dtype.
  int activation_precision_bytes = 2;

  bool operator==(const Scenario &) const = default;
};

struct ScenarioBuild {
  ClusterSpec cluster;
  ShardingPlan plan;
  FlopProfile profile;
  MemoryBreakdown memory;
  StepSchedule schedule;
};

// `base` supplies the machine; its node count is replaced by the scenario's.
inline ScenarioBuild build_scenario(const Scenario &s, const ClusterSpec &base) {
  ScenarioBuild out;
  out.cluster = base;
  out.cluster.num_nodes = s.nodes;
  out.cluster.validate();
  const auto units = model_units(s.model);
  out.plan = make_plan(units, s.strategy, out.cluster, s.precision);
  out.profile = flops(s.model, s.local_batch);
  const auto act =
      activation_bytes(s.model, s.local_batch, s.activation_precision_bytes, s.activation_model);
  out.memory = memory_footprint(out.plan, act);
  out.schedule = step_schedule(out.plan, s.prefetch, out.profile);
  out.schedule.memory = out.memory;
  return out;
}

inline StepMetrics run_scenario(const Scenario &s, const ClusterSpec &base, const IoModel &io = {}) {
  const auto built = build_scenario(s, base);
  return simulate_step(built.schedule, built.cluster, io).metrics;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  std::string model;
  std::string strategy;
  Count nodes = 0;
  // Report columns, rounded to their printed precision.
  double ips = 0.0;
  double ideal_ips = 0.0;
  double comm_fraction = 0.0;
  double peak_gb = 0.0;
  bool feasible = false;

  bool operator==(const SweepRow &) const = default;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  // Full-precision metrics per row; empty for topologically infeasible rows.
  std::vector<std::optional<StepMetrics>> metrics;

  bool operator==(const SweepTable &other) const { return rows == other.rows; }
};

inline double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

struct NamedModel {
  std::string name;
  ModelConfig config;
};

struct SweepRequest {
  std::vector<NamedModel> models;
  std::vector<Strategy> strategies;
  std::vector<Count> node_counts;
  PrefetchPolicy prefetch;
  Count local_batch = 32;
  IoModel io;
  // 0 picks the hardware concurrency.
  unsigned threads = 0;
};

inline SweepTable sweep(const SweepRequest &req, const ClusterSpec &cluster) {
  if (req.models.empty()) throw InvalidArgument("sweep needs at least one model");
  if (req.strategies.empty()) throw InvalidArgument("sweep needs at least one strategy");
  if (req.node_counts.empty()) throw InvalidArgument("sweep needs at least one node count");

  struct Cell {
    std::size_t model, strategy;
    Count nodes;
  };
  std::vector<Cell> cells;
  for (std::size_t m = 0; m < req.models.size(); ++m) {
    for (std::size_t s = 0; s < req.strategies.size(); ++s) {
      for (Count n : req.node_counts) cells.push_back({m, s, n});
    }
  }

  std::vector<std::optional<StepMetrics>> metrics(cells.size());
  std::vector<std::string> errors(cells.size());
  auto run_cell = [&](std::size_t i) {
    const Cell &c = cells[i];
    Scenario s;
    s.model_name = req.models[c.model].name;
    s.model = req.models[c.model].config;
    s.strategy = req.strategies[c.strategy];
    s.prefetch = req.prefetch;
    s.nodes = c.nodes;
    s.local_batch = req.local_batch;
    try {
      metrics[i] = run_scenario(s, cluster, req.io);
    } catch (const InvalidTopology &e) {
      errors[i] = e.what();
    }
  };

  unsigned threads = req.threads ? req.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(cells.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(i);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto &t : pool) t.join();
  }

  SweepTable table;
  table.metrics = metrics;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell &c = cells[i];
    SweepRow row;
    row.model = req.models[c.model].name;
    row.strategy = to_string(req.strategies[c.strategy]);
    row.nodes = c.nodes;
    if (metrics[i]) {
      const auto &mm = *metrics[i];
      row.ips = round_to(mm.images_per_second, 1);
      row.comm_fraction = round_to(mm.comm_fraction, 4);
      row.peak_gb = mm.peak_memory ? round_to(mm.peak_memory->total_bytes / kGiB, 2) : 0.0;
      row.feasible = !mm.peak_memory || mm.peak_memory->feasible();
      // Ideal scaling extrapolates the per-node throughput of the smallest
      // node count at which this (model, strategy) pair could be built.
      std::optional<std::size_t> ref;
      for (std::size_t j = 0; j < cells.size(); ++j) {
        const Cell &r = cells[j];
        if (r.model != c.model || r.strategy != c.strategy || !metrics[j]) continue;
        if (!ref || r.nodes < cells[*ref].nodes) ref = j;
      }
      const double per_node =
          metrics[*ref]->images_per_second / static_cast<double>(cells[*ref].nodes);
      row.ideal_ips = round_to(per_node * static_cast<double>(c.nodes), 1);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Calibration

struct Observation {
  Scenario scenario;
  double measured_ips = 0.0;
};

struct CalibratedParams {
  double compute_efficiency = 0.0;
  double latency_scale = 1.0;
  // Sum of squared relative throughput errors at the optimum.
  double residual = 0.0;
  std::vector<std::string> warnings;
};

struct CalibrationOptions {
  double min_efficiency = 0.02;
  double max_efficiency = 1.0;
  double min_latency_scale = 0.1;
  double max_latency_scale = 10.0;
  int grid_points = 24;
  double tolerance = 1e-7;
};

inline ClusterSpec apply_calibration(ClusterSpec spec, double compute_efficiency,
                                     double latency_scale) {
  spec.compute_efficiency = compute_efficiency;
  spec.intra_node_latency *= latency_scale;
  spec.inter_node_latency *= latency_scale;
  return spec;
}

inline ClusterSpec apply_calibration(const ClusterSpec &spec, const CalibratedParams &p) {
  return apply_calibration(spec, p.compute_efficiency, p.latency_scale);
}

inline double calibration_residual(const std::vector<Observation> &obs, const ClusterSpec &base,
                                   double efficiency, double latency_scale) {
  const ClusterSpec spec = apply_calibration(base, efficiency, latency_scale);
  double sum = 0.0;
  for (const auto &o : obs) {
    const double ips = run_scenario(o.scenario, spec).images_per_second;
    const double rel = (ips - o.measured_ips) / o.measured_ips;
    sum += rel * rel;
  }
  return sum;
}

// Grid search over (efficiency, log latency scale) followed by a
// step-halving pattern search around the best grid point.
inline CalibratedParams calibrate(const std::vector<Observation> &obs, const ClusterSpec &base,
                                  const CalibrationOptions &opt = {}) {
  if (obs.empty()) throw InvalidArgument("calibration needs at least one observation");
  for (const auto &o : obs) {
    if (!(o.measured_ips > 0)) throw InvalidArgument("observation measured_ips must be > 0");
  }
  CalibratedParams out;
  if (obs.size() < 2) {
    out.warnings.push_back("ill-posed: fewer than two observations for two free parameters");
  } else if (std::all_of(obs.begin(), obs.end(),
                         [&](const Observation &o) { return o.scenario == obs.front().scenario; })) {
    out.warnings.push_back("ill-posed: all observations describe the same scenario");
  }

  const double lo_e = opt.min_efficiency, hi_e = opt.max_efficiency;
  const double lo_l = std::log(opt.min_latency_scale), hi_l = std::log(opt.max_latency_scale);
  auto cost = [&](double e, double log_l) {
    return calibration_residual(obs, base, e, std::exp(log_l));
  };

  const int n = std::max(2, opt.grid_points);
  double best_e = lo_e, best_l = lo_l;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double e = lo_e + (hi_e - lo_e) * i / (n - 1);
    for (int j = 0; j < n; ++j) {
      const double l = lo_l + (hi_l - lo_l) * j / (n - 1);
      const double c = cost(e, l);
      if (c < best) {
        best = c;
        best_e = e;
        best_l = l;
      }
    }
  }

  double step_e = (hi_e - lo_e) / (n - 1);
  double step_l = (hi_l - lo_l) / (n - 1);
  while (step_e > opt.tolerance || step_l > opt.tolerance) {
    bool moved = false;
    const double candidates[4][2] = {
        {best_e + step_e, best_l}, {best_e - step_e, best_l},
        {best_e, best_l + step_l}, {best_e, best_l - step_l}};
    for (const auto &cand : candidates) {
      const double e = std::clamp(cand[0], lo_e, hi_e);
      const double l = std::clamp(cand[1], lo_l, hi_l);
      const double c = cost(e, l);
      if (c < best) {
        best = c;
        best_e = e;
        best_l = l;
        moved = true;
      }
    }
    if (!moved) {
      step_e *= 0.5;
      step_l *= 0.5;
    }
  }

  out.compute_efficiency = best_e;
  out.latency_scale = std::exp(best_l);
  out.residual = best;
  return out;
}

}  // namespace vitsim

#endif  // VITSIM_ENGINE_HPP_
