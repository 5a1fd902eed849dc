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

// Report emission: CSV, JSON and pretty tables, plus JSON dumps of
// schedules and traces. Byte quantities print in GiB with 2 decimals and
// rates in images/second with 1 decimal.

#ifndef VITSIM_REPORT_HPP_
#define VITSIM_REPORT_HPP_

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vitsim/engine.hpp"

namespace vitsim {

enum class OutputFormat { kCsv, kJson, kTable };

inline OutputFormat parse_format(std::string_view name) {
  if (name == "csv") return OutputFormat::kCsv;
  if (name == "json") return OutputFormat::kJson;
  if (name == "table" || name == "pretty-table" || name == "pretty") return OutputFormat::kTable;
  throw InvalidConfig("format: unknown output format '" + std::string(name) + "'");
}

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

inline std::string gib(double bytes) { return fixed(bytes / kGiB, 2); }

// A rectangular report. Cells are pre-formatted; `numeric` marks columns
// that JSON output should emit as numbers.
struct ReportTable {
  std::vector<std::string> columns;
  std::vector<bool> numeric;
  std::vector<std::vector<std::string>> rows;

  void add_column(std::string name, bool is_numeric) {
    columns.push_back(std::move(name));
    numeric.push_back(is_numeric);
  }
};

inline std::string to_csv(const ReportTable &t) {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string> &cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  };
  line(t.columns);
  for (const auto &r : t.rows) line(r);
  return out.str();
}

inline nlohmann::ordered_json to_json(const ReportTable &t) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto &r : t.rows) {
    nlohmann::ordered_json obj;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      const std::string &cell = r.at(i);
      if (!t.numeric[i]) {
        obj[t.columns[i]] = cell;
      } else if (cell == "true" || cell == "false") {
        obj[t.columns[i]] = cell == "true";
      } else if (cell.find_first_of(".eE") == std::string::npos) {
        obj[t.columns[i]] = std::stoll(cell);
      } else {
        obj[t.columns[i]] = std::stod(cell);
      }
    }
    arr.push_back(std::move(obj));
  }
  return arr;
}

inline std::string to_pretty(const ReportTable &t) {
  std::vector<std::size_t> width(t.columns.size());
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    width[i] = t.columns[i].size();
    for (const auto &r : t.rows) width[i] = std::max(width[i], r.at(i).size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string> &cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << "  ";
      const std::size_t pad = width[i] - cells[i].size();
      if (t.numeric[i]) {
        out << std::string(pad, ' ') << cells[i];
      } else {
        out << cells[i] << std::string(pad, ' ');
      }
    }
    out << "\n";
  };
  line(t.columns);
  std::vector<std::string> rule;
  for (std::size_t w : width) rule.emplace_back(w, '-');
  line(rule);
  for (const auto &r : t.rows) line(r);
  return out.str();
}

inline std::string render(const ReportTable &t, OutputFormat format) {
  switch (format) {
    case OutputFormat::kCsv:
      return to_csv(t);
    case OutputFormat::kJson:
      return to_json(t).dump(2) + "\n";
    case OutputFormat::kTable:
      return to_pretty(t);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Parameter and memory reports

inline ReportTable params_report(const std::vector<NamedModel> &models) {
  ReportTable t;
  for (const char *c : {"model"}) t.add_column(c, false);
  for (const char *c : {"per_block", "blocks_total", "patch_embed", "pos_embed", "cls_token",
                        "final_norm", "head", "decoder_total", "grand_total", "params_m",
                        "reference_m", "deviation_pct"}) {
    t.add_column(c, true);
  }
  for (const auto &m : models) {
    const auto p = param_count(m.config);
    double reference = 0.0;
    for (const auto &preset : arch_presets()) {
      if (std::holds_alternative<ViTConfig>(m.config) && preset.name == m.name) {
        reference = preset.reference_params_m;
      }
    }
    const double millions = static_cast<double>(p.grand_total) / 1e6;
    t.rows.push_back({m.name, std::to_string(p.per_block), std::to_string(p.blocks_total),
                      std::to_string(p.patch_embed), std::to_string(p.pos_embed),
                      std::to_string(p.cls_token), std::to_string(p.final_norm),
                      std::to_string(p.head), std::to_string(p.decoder_total()),
                      std::to_string(p.grand_total), fixed(millions, 1), fixed(reference, 1),
                      reference > 0 ? fixed(100.0 * (millions / reference - 1.0), 2) : "0.00"});
  }
  return t;
}

struct MemoryRow {
  std::string model;
  std::string strategy;
  Count nodes = 1;
  std::optional<MemoryBreakdown> memory;
};

inline ReportTable memory_report(const std::vector<MemoryRow> &rows) {
  ReportTable t;
  t.add_column("model", false);
  t.add_column("strategy", false);
  for (const char *c : {"nodes", "params_gib", "grads_gib", "optimizer_gib", "states_gib",
                        "gathered_gib", "activations_gib", "total_gib", "capacity_gib",
                        "near_capacity", "feasible"}) {
    t.add_column(c, true);
  }
  for (const auto &r : rows) {
    if (!r.memory) {
      t.rows.push_back({r.model, r.strategy, std::to_string(r.nodes), "0.00", "0.00", "0.00",
                        "0.00", "0.00", "0.00", "0.00", "0.00", "false", "false"});
      continue;
    }
    const auto &m = *r.memory;
    t.rows.push_back({r.model, r.strategy, std::to_string(r.nodes), gib(m.params_bytes),
                      gib(m.grads_bytes), gib(m.optimizer_bytes), gib(m.state_bytes()),
                      gib(m.gathered_bytes), gib(m.activations_bytes), gib(m.total_bytes),
                      gib(m.capacity_bytes), m.near_capacity() ? "true" : "false",
                      m.feasible() ? "true" : "false"});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Sweep tables

inline const std::vector<std::string> &sweep_columns() {
  static const std::vector<std::string> cols = {
      "model", "strategy", "nodes", "ips", "ideal_ips", "comm_fraction", "peak_gb", "feasible"};
  return cols;
}

inline ReportTable sweep_report(const SweepTable &table) {
  ReportTable t;
  for (const auto &c : sweep_columns()) t.add_column(c, c != "model" && c != "strategy");
  for (const auto &r : table.rows) {
    t.rows.push_back({r.model, r.strategy, std::to_string(r.nodes), fixed(r.ips, 1),
                      fixed(r.ideal_ips, 1), fixed(r.comm_fraction, 4), fixed(r.peak_gb, 2),
                      r.feasible ? "true" : "false"});
  }
  return t;
}

inline std::string sweep_to_csv(const SweepTable &table) { return to_csv(sweep_report(table)); }

inline SweepTable sweep_from_csv(const std::string &csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("sweep csv: missing header");
  std::vector<std::string> header;
  {
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) header.push_back(cell);
  }
  if (header != sweep_columns()) throw InvalidArgument("sweep csv: unexpected header");
  SweepTable table;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw InvalidArgument("sweep csv: ragged row");
    SweepRow r;
    r.model = cells[0];
    r.strategy = cells[1];
    r.nodes = std::stoll(cells[2]);
    r.ips = std::stod(cells[3]);
    r.ideal_ips = std::stod(cells[4]);
    r.comm_fraction = std::stod(cells[5]);
    r.peak_gb = std::stod(cells[6]);
    if (cells[7] != "true" && cells[7] != "false") {
      throw InvalidArgument("sweep csv: feasible must be true or false");
    }
    r.feasible = cells[7] == "true";
    table.rows.push_back(std::move(r));
    table.metrics.emplace_back();
  }
  return table;
}

// ---------------------------------------------------------------------------
// Schedules, traces, metrics

inline nlohmann::ordered_json to_json(const Task &t) {
  nlohmann::ordered_json j;
  j["id"] = t.id;
  j["kind"] = t.call ? std::string(to_string(t.call->kind)) : std::string(to_string(t.kind));
  j["phase"] = std::string(to_string(t.phase));
  j["unit"] = t.unit;
  j["bytes"] = t.bytes();
  j["flops"] = t.flops;
  if (t.call) {
    j["group"] = t.call->group;
    j["algorithm"] = std::string(to_string(t.call->algorithm));
  }
  j["deps"] = t.deps;
  return j;
}

inline nlohmann::ordered_json to_json(const StepSchedule &s) {
  nlohmann::ordered_json j;
  j["strategy"] = to_string(s.strategy);
  j["prefetch"] = {{"policy", std::string(to_string(s.prefetch.mode))},
                   {"limit_all_gathers", s.prefetch.limit_all_gathers},
                   {"max_inflight", s.prefetch.max_inflight}};
  j["local_batch"] = s.local_batch;
  j["world_size"] = s.world_size;
  auto tasks = nlohmann::ordered_json::array();
  for (const auto &t : s.tasks) tasks.push_back(to_json(t));
  j["tasks"] = std::move(tasks);
  return j;
}

// Reads back a task-graph dump. Unit names are not part of the dump.
inline StepSchedule schedule_from_json(const nlohmann::json &j) {
  StepSchedule s;
  s.strategy = parse_strategy(j.at("strategy").get<std::string>());
  const auto &p = j.at("prefetch");
  s.prefetch.mode = parse_prefetch_mode(p.at("policy").get<std::string>());
  s.prefetch.limit_all_gathers = p.at("limit_all_gathers").get<bool>();
  s.prefetch.max_inflight = p.at("max_inflight").get<Count>();
  s.local_batch = j.at("local_batch").get<Count>();
  s.world_size = j.at("world_size").get<Count>();
  for (const auto &jt : j.at("tasks")) {
    Task t;
    t.id = jt.at("id").get<TaskId>();
    const auto kind = jt.at("kind").get<std::string>();
    t.phase = jt.at("phase").get<std::string>() == "forward" ? Phase::kForward : Phase::kBackward;
    t.unit = jt.at("unit").get<Count>();
    t.flops = jt.at("flops").get<double>();
    t.deps = jt.at("deps").get<std::vector<TaskId>>();
    if (kind == "compute") {
      t.kind = TaskKind::kCompute;
    } else if (kind == "free") {
      t.kind = TaskKind::kFree;
    } else {
      t.kind = TaskKind::kCollective;
      CollectiveCall call;
      if (kind == "all-gather") {
        call.kind = CollectiveKind::kAllGather;
        t.role = CommRole::kParamGather;
      } else if (kind == "reduce-scatter") {
        call.kind = CollectiveKind::kReduceScatter;
        t.role = CommRole::kGradReduceScatter;
      } else if (kind == "all-reduce") {
        call.kind = CollectiveKind::kAllReduce;
        t.role = CommRole::kGradAllReduce;
      } else {
        throw InvalidArgument("schedule: unknown task kind '" + kind + "'");
      }
      call.bytes = jt.at("bytes").get<double>();
      call.group = jt.at("group").get<RankGroup>();
      call.algorithm = jt.at("algorithm").get<std::string>() == "ring"
                           ? Algorithm::kRing
                           : Algorithm::kHierarchicalRing;
      t.call = std::move(call);
    }
    s.tasks.push_back(std::move(t));
  }
  return s;
}

inline nlohmann::ordered_json to_json(const EventTrace &trace) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto &e : trace.events) {
    arr.push_back({{"task", e.task}, {"start", e.start}, {"end", e.end}, {"resource", e.resource}});
  }
  return arr;
}

inline ReportTable metrics_report(const std::string &model, const std::string &strategy,
                                  Count nodes, const StepMetrics &m) {
  ReportTable t;
  t.add_column("model", false);
  t.add_column("strategy", false);
  for (const char *c : {"nodes", "step_seconds", "ips", "compute_seconds", "comm_seconds",
                        "comm_exposed_seconds", "comm_fraction", "io_seconds", "peak_gib",
                        "feasible"}) {
    t.add_column(c, true);
  }
  const bool feasible = !m.peak_memory || m.peak_memory->feasible();
  t.rows.push_back({model, strategy, std::to_string(nodes), fixed(m.step_seconds, 4),
                    fixed(m.images_per_second, 1), fixed(m.compute_seconds, 4),
                    fixed(m.comm_seconds, 4), fixed(m.comm_seconds_exposed, 4),
                    fixed(m.comm_fraction, 4), fixed(m.io_seconds, 4),
                    m.peak_memory ? gib(m.peak_memory->total_bytes) : "0.00",
                    feasible ? "true" : "false"});
  return t;
}

}  // namespace vitsim

#endif  // VITSIM_REPORT_HPP_
