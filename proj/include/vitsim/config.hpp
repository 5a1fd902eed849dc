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

// JSON run configuration and observation files. Every error names the
// offending field.

#ifndef VITSIM_CONFIG_HPP_
#define VITSIM_CONFIG_HPP_

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vitsim/engine.hpp"
#include "vitsim/report.hpp"

namespace vitsim {

struct RunConfig {
  NamedModel model{"vit-base", model_preset("vit-base")};
  std::string cluster_name = "frontier";
  ClusterSpec cluster = frontier_preset();
  std::vector<Strategy> strategies{Strategy::no_shard()};
  PrefetchPolicy prefetch;
  Count local_batch = 32;
  std::vector<Count> nodes{1};
  IoModel io;
  Precision precision = Precision::fp32();
  std::optional<CalibratedParams> calibration;
  OutputFormat format = OutputFormat::kCsv;
  std::string output;
};

namespace detail {

using json = nlohmann::json;

[[noreturn]] inline void field_error(const std::string &field, const std::string &what) {
  throw InvalidConfig(field + ": " + what);
}

template <typename T>
T get_field(const json &j, const std::string &key, const std::string &path) {
  const std::string field = path.empty() ? key : path + "." + key;
  try {
    return j.at(key).get<T>();
  } catch (const json::out_of_range &) {
    field_error(field, "missing");
  } catch (const json::type_error &) {
    field_error(field, "wrong type");
  }
}

template <typename T>
void read_opt(const json &j, const std::string &key, const std::string &path, T &out) {
  if (j.contains(key)) out = get_field<T>(j, key, path);
}

inline void reject_unknown(const json &j, const std::set<std::string> &known,
                           const std::string &path) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) {
      field_error(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
    }
  }
}

inline ViTConfig vit_from_json(const json &j, const std::string &path) {
  if (!j.is_object()) field_error(path, "expected an object");
  reject_unknown(j,
                 {"width", "depth", "mlp", "heads", "patch_size", "image_size", "in_channels",
                  "include_cls_token", "num_classes"},
                 path);
  ViTConfig c;
  c.width = get_field<Count>(j, "width", path);
  c.depth = get_field<Count>(j, "depth", path);
  c.mlp = j.contains("mlp") ? get_field<Count>(j, "mlp", path) : 4 * c.width;
  c.heads = get_field<Count>(j, "heads", path);
  c.patch_size = get_field<Count>(j, "patch_size", path);
  c.image_size = get_field<Count>(j, "image_size", path);
  read_opt(j, "in_channels", path, c.in_channels);
  read_opt(j, "include_cls_token", path, c.include_cls_token);
  read_opt(j, "num_classes", path, c.num_classes);
  c.validate();
  return c;
}

inline NamedModel model_from_json(const json &j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    return {name, model_preset(name)};
  }
  if (!j.is_object()) field_error("model", "expected a preset name or an object");
  if (j.contains("encoder")) {
    reject_unknown(j, {"name", "encoder", "decoder_width", "decoder_depth", "decoder_heads",
                       "mask_ratio"},
                   "model");
    MAEConfig m;
    const auto &enc = j.at("encoder");
    m.encoder = enc.is_string() ? find_arch_preset(enc.get<std::string>()).value_or(ViTConfig{})
                                : vit_from_json(enc, "model.encoder");
    if (enc.is_string() && m.encoder == ViTConfig{}) {
      field_error("model.encoder", "unknown preset '" + enc.get<std::string>() + "'");
    }
    read_opt(j, "decoder_width", "model", m.decoder_width);
    read_opt(j, "decoder_depth", "model", m.decoder_depth);
    read_opt(j, "decoder_heads", "model", m.decoder_heads);
    read_opt(j, "mask_ratio", "model", m.mask_ratio);
    m.validate();
    std::string name = "mae-custom";
    read_opt(j, "name", "model", name);
    return {name, m};
  }
  json vit = j;
  std::string name = "vit-custom";
  if (vit.contains("name")) {
    name = get_field<std::string>(vit, "name", "model");
    vit.erase("name");
  }
  return {name, vit_from_json(vit, "model")};
}

inline ClusterSpec cluster_from_json(const json &j, std::string &name) {
  if (j.is_string()) {
    name = j.get<std::string>();
    return cluster_preset(name);
  }
  if (!j.is_object()) field_error("cluster", "expected a preset name or an object");
  reject_unknown(j,
                 {"name", "gpus_per_node", "hbm_bytes_per_gpu", "intra_node_bw", "inter_node_bw",
                  "intra_node_latency", "inter_node_latency", "peak_flops_per_gpu",
                  "compute_efficiency"},
                 "cluster");
  ClusterSpec c;
  name = "custom";
  read_opt(j, "name", "cluster", name);
  read_opt(j, "gpus_per_node", "cluster", c.gpus_per_node);
  read_opt(j, "hbm_bytes_per_gpu", "cluster", c.hbm_bytes_per_gpu);
  read_opt(j, "intra_node_bw", "cluster", c.intra_node_bw);
  read_opt(j, "inter_node_bw", "cluster", c.inter_node_bw);
  read_opt(j, "intra_node_latency", "cluster", c.intra_node_latency);
  read_opt(j, "inter_node_latency", "cluster", c.inter_node_latency);
  c.peak_flops_per_gpu = get_field<double>(j, "peak_flops_per_gpu", "cluster");
  read_opt(j, "compute_efficiency", "cluster", c.compute_efficiency);
  c.validate();
  return c;
}

inline Precision precision_from_name(const std::string &name) {
  if (name == "fp32") return Precision::fp32();
  if (name == "mixed") return Precision::mixed();
  field_error("precision", "unknown precision '" + name + "'");
}

inline std::vector<Count> parse_nodes(const json &j) {
  std::vector<Count> out;
  if (j.is_number_integer()) {
    out.push_back(j.get<Count>());
  } else if (j.is_array()) {
    for (const auto &v : j) {
      if (!v.is_number_integer()) field_error("nodes", "expected integers");
      out.push_back(v.get<Count>());
    }
  } else {
    field_error("nodes", "expected an integer or an array of integers");
  }
  if (out.empty()) field_error("nodes", "must not be empty");
  for (Count n : out) {
    if (n < 1) field_error("nodes", "every node count must be >= 1");
  }
  return out;
}

inline json read_json_file(const std::string &path, const std::string &what) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig(what + ": cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error &e) {
    throw InvalidConfig(what + ": malformed JSON in '" + path + "': " + e.what());
  }
}

}  // namespace detail

inline CalibratedParams calibration_from_json(const nlohmann::json &j) {
  if (!j.is_object()) detail::field_error("calibration", "expected an object");
  CalibratedParams p;
  p.compute_efficiency = detail::get_field<double>(j, "compute_efficiency", "calibration");
  p.latency_scale = detail::get_field<double>(j, "latency_scale", "calibration");
  detail::read_opt(j, "residual", "calibration", p.residual);
  detail::read_opt(j, "warnings", "calibration", p.warnings);
  if (!(p.compute_efficiency > 0 && p.compute_efficiency <= 1)) {
    detail::field_error("calibration.compute_efficiency", "must lie in (0, 1]");
  }
  if (!(p.latency_scale > 0)) detail::field_error("calibration.latency_scale", "must be > 0");
  return p;
}

inline nlohmann::ordered_json to_json(const CalibratedParams &p) {
  nlohmann::ordered_json j;
  j["compute_efficiency"] = p.compute_efficiency;
  j["latency_scale"] = p.latency_scale;
  j["residual"] = p.residual;
  j["warnings"] = p.warnings;
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json &j) {
  using detail::field_error;
  if (!j.is_object()) throw InvalidConfig("config: expected a JSON object");
  detail::reject_unknown(j,
                         {"model", "cluster", "strategy", "strategies", "prefetch", "local_batch",
                          "nodes", "io_rate", "precision", "calibration", "format", "output"},
                         "");
  RunConfig c;
  if (!j.contains("model")) field_error("model", "missing");
  c.model = detail::model_from_json(j.at("model"));
  if (!j.contains("cluster")) field_error("cluster", "missing");
  c.cluster = detail::cluster_from_json(j.at("cluster"), c.cluster_name);

  if (j.contains("strategy") && j.contains("strategies")) {
    field_error("strategy", "give either strategy or strategies, not both");
  }
  if (j.contains("strategy")) {
    c.strategies = {parse_strategy(detail::get_field<std::string>(j, "strategy", ""))};
  } else if (j.contains("strategies")) {
    c.strategies.clear();
    for (const auto &s : detail::get_field<std::vector<std::string>>(j, "strategies", "")) {
      c.strategies.push_back(parse_strategy(s));
    }
    if (c.strategies.empty()) field_error("strategies", "must not be empty");
  }

  if (j.contains("prefetch")) {
    const auto &p = j.at("prefetch");
    if (!p.is_object()) field_error("prefetch", "expected an object");
    detail::reject_unknown(p, {"policy", "limit_all_gathers", "max_inflight"}, "prefetch");
    if (p.contains("policy")) {
      c.prefetch.mode =
          parse_prefetch_mode(detail::get_field<std::string>(p, "policy", "prefetch"));
    }
    detail::read_opt(p, "limit_all_gathers", "prefetch", c.prefetch.limit_all_gathers);
    detail::read_opt(p, "max_inflight", "prefetch", c.prefetch.max_inflight);
    c.prefetch.validate();
  }

  detail::read_opt(j, "local_batch", "", c.local_batch);
  if (c.local_batch < 1) field_error("local_batch", "must be >= 1");
  if (j.contains("nodes")) c.nodes = detail::parse_nodes(j.at("nodes"));
  if (j.contains("io_rate") && !j.at("io_rate").is_null()) {
    c.io.enabled = true;
    c.io.images_per_second_per_rank = detail::get_field<double>(j, "io_rate", "");
    if (!(c.io.images_per_second_per_rank > 0)) field_error("io_rate", "must be > 0");
  }
  if (j.contains("precision")) {
    c.precision = detail::precision_from_name(detail::get_field<std::string>(j, "precision", ""));
  }
  if (j.contains("calibration")) c.calibration = calibration_from_json(j.at("calibration"));
  if (j.contains("format")) c.format = parse_format(detail::get_field<std::string>(j, "format", ""));
  detail::read_opt(j, "output", "", c.output);
  return c;
}

inline RunConfig load_run_config(const std::string &path) {
  return run_config_from_json(detail::read_json_file(path, "config"));
}

// Observation files hold a list of measured throughputs:
//   [{"model": "vit-5b", "strategy": "hybrid2", "nodes": 32, "ips": 1509}, ...]
// Optional per-entry fields: local_batch, prefetch (policy name).
inline std::vector<Observation> observations_from_json(const nlohmann::json &j) {
  using detail::field_error;
  if (!j.is_array()) field_error("observations", "expected an array");
  std::vector<Observation> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto &o = j[i];
    const std::string path = "observations[" + std::to_string(i) + "]";
    if (!o.is_object()) field_error(path, "expected an object");
    detail::reject_unknown(o, {"model", "strategy", "nodes", "ips", "local_batch", "prefetch"},
                           path);
    Observation obs;
    if (!o.contains("model")) field_error(path + ".model", "missing");
    const auto model = detail::model_from_json(o.at("model"));
    obs.scenario.model_name = model.name;
    obs.scenario.model = model.config;
    obs.scenario.strategy = parse_strategy(detail::get_field<std::string>(o, "strategy", path));
    obs.scenario.nodes = detail::get_field<Count>(o, "nodes", path);
    if (obs.scenario.nodes < 1) field_error(path + ".nodes", "must be >= 1");
    detail::read_opt(o, "local_batch", path, obs.scenario.local_batch);
    if (obs.scenario.local_batch < 1) field_error(path + ".local_batch", "must be >= 1");
    if (o.contains("prefetch")) {
      obs.scenario.prefetch.mode =
          parse_prefetch_mode(detail::get_field<std::string>(o, "prefetch", path));
    }
    obs.measured_ips = detail::get_field<double>(o, "ips", path);
    if (!(obs.measured_ips > 0)) field_error(path + ".ips", "must be > 0");
    out.push_back(std::move(obs));
  }
  return out;
}

inline std::vector<Observation> load_observations(const std::string &path) {
  return observations_from_json(detail::read_json_file(path, "observations"));
}

}  // namespace vitsim

#endif  // VITSIM_CONFIG_HPP_
