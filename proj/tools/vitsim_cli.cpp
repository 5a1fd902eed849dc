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

// vitsim: parameter, memory and step-time reports for sharded ViT training.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vitsim/config.hpp"

namespace {

using namespace vitsim;

std::vector<std::string> split(const std::string &s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Flags {
  std::string config;
  std::string model;
  std::string cluster;
  std::string strategy;
  std::string strategies;
  std::string nodes;
  std::string prefetch;
  std::string limit_all_gathers;
  Count max_inflight = -1;
  Count local_batch = -1;
  double io_rate = -1.0;
  std::string precision;
  std::string calibration;
  std::string format;
  std::string output;
  // subcommand-specific
  std::string trace;
  std::string observations;
  double max_latency_scale = -1.0;
};

void add_common(CLI::App *cmd, Flags &f) {
  cmd->add_option("--config", f.config, "JSON RunConfig file");
  cmd->add_option("--model", f.model, "model preset(s), comma separated (vit-base .. vit-15b, mae-*)");
  cmd->add_option("--cluster", f.cluster, "cluster preset");
  cmd->add_option("--strategy", f.strategy, "no-shard | full | grad-op | hybrid<g> | ddp");
  cmd->add_option("--strategies", f.strategies, "comma-separated strategies");
  cmd->add_option("--nodes", f.nodes, "node count(s), comma separated");
  cmd->add_option("--prefetch", f.prefetch, "none | backward-post | backward-pre");
  cmd->add_option("--limit-all-gathers", f.limit_all_gathers, "true | false");
  cmd->add_option("--max-inflight", f.max_inflight, "gathered units allowed in flight");
  cmd->add_option("--local-batch", f.local_batch, "images per rank per step");
  cmd->add_option("--io-rate", f.io_rate, "input pipeline rate, images/s per rank");
  cmd->add_option("--precision", f.precision, "fp32 | mixed");
  cmd->add_option("--calibration", f.calibration, "calibrated parameters (calibrate output)");
  cmd->add_option("--format", f.format, "csv | json | table");
  cmd->add_option("--output", f.output, "output file (default stdout)");
}

RunConfig resolve(const Flags &f, std::vector<NamedModel> *models) {
  RunConfig c;
  if (!f.config.empty()) c = load_run_config(f.config);
  if (!f.model.empty()) {
    const auto names = split(f.model);
    if (names.empty()) throw InvalidConfig("model: empty model list");
    c.model = {names.front(), model_preset(names.front())};
    if (models) {
      for (const auto &n : names) models->push_back({n, model_preset(n)});
    }
  } else if (models) {
    models->push_back(c.model);
  }
  if (!f.cluster.empty()) {
    c.cluster_name = f.cluster;
    c.cluster = cluster_preset(f.cluster);
  }
  if (!f.strategy.empty() && !f.strategies.empty()) {
    throw InvalidConfig("strategy: give either --strategy or --strategies, not both");
  }
  if (!f.strategy.empty()) c.strategies = {parse_strategy(f.strategy)};
  if (!f.strategies.empty()) {
    c.strategies.clear();
    for (const auto &s : split(f.strategies)) c.strategies.push_back(parse_strategy(s));
    if (c.strategies.empty()) throw InvalidConfig("strategies: empty list");
  }
  if (!f.nodes.empty()) {
    c.nodes.clear();
    for (const auto &n : split(f.nodes)) {
      Count v = 0;
      try {
        std::size_t used = 0;
        v = std::stoll(n, &used);
        if (used != n.size()) throw std::invalid_argument(n);
      } catch (const std::exception &) {
        throw InvalidConfig("nodes: '" + n + "' is not an integer");
      }
      if (v < 1) throw InvalidConfig("nodes: every node count must be >= 1");
      c.nodes.push_back(v);
    }
    if (c.nodes.empty()) throw InvalidConfig("nodes: empty list");
  }
  if (!f.prefetch.empty()) c.prefetch.mode = parse_prefetch_mode(f.prefetch);
  if (!f.limit_all_gathers.empty()) {
    if (f.limit_all_gathers != "true" && f.limit_all_gathers != "false") {
      throw InvalidConfig("limit_all_gathers: expected true or false");
    }
    c.prefetch.limit_all_gathers = f.limit_all_gathers == "true";
  }
  if (f.max_inflight != -1) c.prefetch.max_inflight = f.max_inflight;
  c.prefetch.validate();
  if (f.local_batch != -1) {
    if (f.local_batch < 1) throw InvalidConfig("local_batch: must be >= 1");
    c.local_batch = f.local_batch;
  }
  if (f.io_rate != -1.0) {
    if (!(f.io_rate > 0)) throw InvalidConfig("io_rate: must be > 0");
    c.io.enabled = true;
    c.io.images_per_second_per_rank = f.io_rate;
  }
  if (!f.precision.empty()) c.precision = detail::precision_from_name(f.precision);
  if (!f.calibration.empty()) {
    c.calibration = calibration_from_json(detail::read_json_file(f.calibration, "calibration"));
  }
  if (c.calibration) c.cluster = apply_calibration(c.cluster, *c.calibration);
  if (!f.format.empty()) c.format = parse_format(f.format);
  if (!f.output.empty()) c.output = f.output;
  return c;
}

Scenario scenario_of(const RunConfig &c, const NamedModel &m, const Strategy &s, Count nodes) {
  Scenario out;
  out.model_name = m.name;
  out.model = m.config;
  out.strategy = s;
  out.prefetch = c.prefetch;
  out.nodes = nodes;
  out.local_batch = c.local_batch;
  out.precision = c.precision;
  return out;
}

// Relative output paths land under $VITSIM_OUTPUT_DIR when it is set.
void emit(const std::string &text, const std::string &output) {
  if (output.empty() || output == "-") {
    std::cout << text;
    return;
  }
  std::filesystem::path path(output);
  if (path.is_relative()) {
    if (const char *dir = std::getenv("VITSIM_OUTPUT_DIR"); dir && *dir) {
      path = std::filesystem::path(dir) / path;
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidConfig("output: cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InvalidConfig("output: write to '" + path.string() + "' failed");
}

int run_params(const Flags &f) {
  std::vector<NamedModel> models;
  RunConfig c;
  if (f.model.empty() && f.config.empty()) {
    c = resolve(f, nullptr);
    for (const auto &p : arch_presets()) {
      models.push_back({std::string(p.name), p.config});
    }
  } else {
    c = resolve(f, &models);
  }
  if (f.format.empty() && f.config.empty()) c.format = OutputFormat::kTable;
  emit(render(params_report(models), c.format), c.output);
  return 0;
}

int run_memory(const Flags &f) {
  std::vector<NamedModel> models;
  RunConfig c = resolve(f, &models);
  if (f.format.empty() && f.config.empty()) c.format = OutputFormat::kTable;
  std::vector<MemoryRow> rows;
  for (const auto &m : models) {
    for (const auto &s : c.strategies) {
      for (Count n : c.nodes) {
        const auto sc = scenario_of(c, m, s, n);
        MemoryRow row{m.name, to_string(s), n, std::nullopt};
        row.memory = build_scenario(sc, c.cluster).memory;
        rows.push_back(std::move(row));
      }
    }
  }
  emit(render(memory_report(rows), c.format), c.output);
  return 0;
}

const Strategy &single_strategy(const RunConfig &c) {
  if (c.strategies.size() != 1) throw InvalidConfig("strategy: this command takes one strategy");
  return c.strategies.front();
}

Count single_nodes(const RunConfig &c) {
  if (c.nodes.size() != 1) throw InvalidConfig("nodes: this command takes one node count");
  return c.nodes.front();
}

int run_schedule(const Flags &f) {
  RunConfig c = resolve(f, nullptr);
  const auto built =
      build_scenario(scenario_of(c, c.model, single_strategy(c), single_nodes(c)), c.cluster);
  auto j = to_json(built.schedule);
  j["model"] = c.model.name;
  j["nodes"] = single_nodes(c);
  emit(j.dump(2) + "\n", c.output);
  return 0;
}

int run_simulate(const Flags &f) {
  RunConfig c = resolve(f, nullptr);
  const Strategy &s = single_strategy(c);
  const Count nodes = single_nodes(c);
  const auto built = build_scenario(scenario_of(c, c.model, s, nodes), c.cluster);
  const auto result = simulate_step(built.schedule, built.cluster, c.io);
  if (!f.trace.empty()) emit(to_json(result.trace).dump(1) + "\n", f.trace);
  if (f.format.empty() && f.config.empty()) c.format = OutputFormat::kTable;
  emit(render(metrics_report(c.model.name, to_string(s), nodes, result.metrics), c.format),
       c.output);
  if (result.metrics.peak_memory && !result.metrics.peak_memory->feasible()) {
    std::cerr << "warning: per-rank memory exceeds HBM capacity\n";
  }
  return 0;
}

int run_sweep(const Flags &f) {
  SweepRequest req;
  RunConfig c = resolve(f, &req.models);
  req.strategies = c.strategies;
  req.node_counts = c.nodes;
  req.prefetch = c.prefetch;
  req.local_batch = c.local_batch;
  req.io = c.io;
  emit(render(sweep_report(sweep(req, c.cluster)), c.format), c.output);
  return 0;
}

int run_calibrate(const Flags &f) {
  if (f.observations.empty()) throw InvalidConfig("observations: --observations is required");
  RunConfig c = resolve(f, nullptr);
  auto obs = load_observations(f.observations);
  for (auto &o : obs) o.scenario.precision = c.precision;
  CalibrationOptions opt;
  if (f.max_latency_scale != -1.0) {
    if (!(f.max_latency_scale > opt.min_latency_scale)) {
      throw InvalidConfig("max_latency_scale: must exceed " + std::to_string(opt.min_latency_scale));
    }
    opt.max_latency_scale = f.max_latency_scale;
  }
  const auto p = calibrate(obs, c.cluster, opt);
  for (const auto &w : p.warnings) std::cerr << "warning: " << w << "\n";
  emit(to_json(p).dump(2) + "\n", c.output);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"vitsim: sharded data-parallel ViT training simulator"};
  app.require_subcommand(1);
  Flags f;

  auto *params = app.add_subcommand("params", "parameter breakdown per model");
  auto *memory = app.add_subcommand("memory", "per-rank memory per strategy");
  auto *schedule = app.add_subcommand("schedule", "task-graph dump (JSON)");
  auto *simulate = app.add_subcommand("simulate", "single-scenario step metrics");
  auto *sweep_cmd = app.add_subcommand("sweep", "weak-scaling table");
  auto *calibrate_cmd = app.add_subcommand("calibrate", "fit efficiency and latency scale");
  for (auto *cmd : {params, memory, schedule, simulate, sweep_cmd, calibrate_cmd}) {
    add_common(cmd, f);
  }
  simulate->add_option("--trace", f.trace, "write the event trace as JSON");
  calibrate_cmd->add_option("--observations", f.observations, "observations JSON file");
  calibrate_cmd->add_option("--max-latency-scale", f.max_latency_scale,
                            "upper bound of the latency-scale search");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  }

  try {
    if (params->parsed()) return run_params(f);
    if (memory->parsed()) return run_memory(f);
    if (schedule->parsed()) return run_schedule(f);
    if (simulate->parsed()) return run_simulate(f);
    if (sweep_cmd->parsed()) return run_sweep(f);
    if (calibrate_cmd->parsed()) return run_calibrate(f);
  } catch (const vitsim::Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
