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

// Parameter, FLOP, token and activation accounting for ViT encoders and
// masked-autoencoder (MAE) encoder/decoder workloads. Everything here is a
// pure function of an immutable config.

#ifndef VITSIM_ARCHMODEL_HPP_
#define VITSIM_ARCHMODEL_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vitsim/common.hpp"

namespace vitsim {

struct ViTConfig {
  Count width = 0;
  Count depth = 0;
  Count mlp = 0;
  Count heads = 0;
  Count patch_size = 0;
  Count image_size = 0;
  Count in_channels = 3;
  bool include_cls_token = true;
  // Pretraining backbones carry no classifier; 0 means "no head".
  Count num_classes = 0;

  void validate() const {
    auto positive = [](Count v, const char *field) {
      if (v < 1) {
        throw InvalidConfig(std::string("ViTConfig.") + field + " must be >= 1");
      }
    };
    positive(width, "width");
    positive(depth, "depth");
    positive(mlp, "mlp");
    positive(heads, "heads");
    positive(patch_size, "patch_size");
    positive(image_size, "image_size");
    positive(in_channels, "in_channels");
    if (width % heads != 0) {
      throw InvalidConfig("ViTConfig.heads must divide ViTConfig.width");
    }
    if (patch_size > image_size) {
      throw InvalidConfig("ViTConfig.patch_size must not exceed ViTConfig.image_size");
    }
    if (num_classes < 0) {
      throw InvalidConfig("ViTConfig.num_classes must be >= 0");
    }
  }

  bool operator==(const ViTConfig &) const = default;
};

struct MAEConfig {
  ViTConfig encoder;
  Count decoder_width = 512;
  Count decoder_depth = 8;
  Count decoder_heads = 16;
  double mask_ratio = 0.75;

  // The decoder keeps the usual 4x feed-forward expansion.
  Count decoder_mlp() const { return 4 * decoder_width; }

  void validate() const {
    encoder.validate();
    if (decoder_width < 1) throw InvalidConfig("MAEConfig.decoder_width must be >= 1");
    if (decoder_depth < 1) throw InvalidConfig("MAEConfig.decoder_depth must be >= 1");
    if (decoder_heads < 1 || decoder_width % decoder_heads != 0) {
      throw InvalidConfig("MAEConfig.decoder_heads must be >= 1 and divide decoder_width");
    }
    if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) {
      throw InvalidConfig("MAEConfig.mask_ratio must lie in [0, 1)");
    }
  }

  bool operator==(const MAEConfig &) const = default;
};

using ModelConfig = std::variant<ViTConfig, MAEConfig>;

inline const ViTConfig &encoder_of(const ModelConfig &model) {
  if (const auto *mae = std::get_if<MAEConfig>(&model)) return mae->encoder;
  return std::get<ViTConfig>(model);
}

inline void validate(const ModelConfig &model) {
  std::visit([](const auto &cfg) { cfg.validate(); }, model);
}

// ---------------------------------------------------------------------------
// Tokens

struct TokenCount {
  Count patch_tokens = 0;
  Count sequence_length = 0;
  // Set when image_size is not a multiple of patch_size; the trailing pixels
  // are dropped, as a strided patch embedding does.
  bool truncated = false;
};

inline TokenCount token_count(Count image_size, Count patch_size, bool include_cls) {
  if (patch_size < 1) throw InvalidConfig("patch_size must be >= 1");
  if (image_size < patch_size) {
    throw InvalidConfig("image_size must be >= patch_size");
  }
  const Count side = image_size / patch_size;
  TokenCount out;
  out.patch_tokens = detail::checked_mul(side, side, "patch_tokens");
  out.sequence_length = out.patch_tokens + (include_cls ? 1 : 0);
  out.truncated = image_size % patch_size != 0;
  return out;
}

inline TokenCount token_count(const ViTConfig &cfg) {
  return token_count(cfg.image_size, cfg.patch_size, cfg.include_cls_token);
}

// ---------------------------------------------------------------------------
// Parameters

// One pre-norm transformer block: fused qkv, output projection, two-layer
// MLP and two LayerNorms (weight + bias each).
inline Count block_params(Count width, Count mlp) {
  using detail::checked_add;
  using detail::checked_mul;
  const Count w2 = checked_mul(width, width, "block width^2");
  const Count qkv = checked_add(checked_mul(3, w2, "qkv"), 3 * width, "qkv");
  const Count proj = checked_add(w2, width, "proj");
  const Count fc1 = checked_add(checked_mul(width, mlp, "fc1"), mlp, "fc1");
  const Count fc2 = checked_add(checked_mul(mlp, width, "fc2"), width, "fc2");
  const Count norms = 2 * (2 * width);
  Count total = checked_add(qkv, proj, "block");
  total = checked_add(total, fc1, "block");
  total = checked_add(total, fc2, "block");
  return checked_add(total, norms, "block");
}

struct ParamBreakdown {
  Count per_block = 0;
  Count blocks_total = 0;
  Count patch_embed = 0;
  Count pos_embed = 0;
  Count cls_token = 0;
  Count final_norm = 0;
  Count head = 0;

  // Populated only for MAE workloads.
  Count decoder_per_block = 0;
  Count decoder_blocks_total = 0;
  Count decoder_embed = 0;
  Count decoder_pos_embed = 0;
  Count mask_token = 0;
  Count decoder_norm = 0;
  Count decoder_pred = 0;

  Count grand_total = 0;

  Count encoder_total() const {
    return blocks_total + patch_embed + pos_embed + cls_token + final_norm + head;
  }
  Count decoder_total() const {
    return decoder_blocks_total + decoder_embed + decoder_pos_embed + mask_token +
           decoder_norm + decoder_pred;
  }

  bool operator==(const ParamBreakdown &) const = default;
};

inline ParamBreakdown param_count(const ViTConfig &cfg) {
  using detail::checked_add;
  using detail::checked_mul;
  cfg.validate();
  const auto tokens = token_count(cfg);
  const Count w = cfg.width;
  const Count patch_area = checked_mul(cfg.patch_size, cfg.patch_size, "patch area");

  ParamBreakdown p;
  p.per_block = block_params(w, cfg.mlp);
  p.blocks_total = checked_mul(p.per_block, cfg.depth, "blocks_total");
  p.patch_embed = checked_add(
      checked_mul(checked_mul(patch_area, cfg.in_channels, "patch_embed"), w, "patch_embed"),
      w, "patch_embed");
  p.pos_embed = checked_mul(tokens.sequence_length, w, "pos_embed");
  p.cls_token = cfg.include_cls_token ? w : 0;
  p.final_norm = 2 * w;
  p.head = cfg.num_classes > 0
               ? checked_add(checked_mul(w, cfg.num_classes, "head"), cfg.num_classes, "head")
               : 0;

  Count total = 0;
  for (Count part : {p.blocks_total, p.patch_embed, p.pos_embed, p.cls_token, p.final_norm,
                     p.head}) {
    total = checked_add(total, part, "grand_total");
  }
  p.grand_total = total;
  return p;
}

inline ParamBreakdown mae_param_count(const MAEConfig &cfg) {
  using detail::checked_add;
  using detail::checked_mul;
  cfg.validate();
  ParamBreakdown p = param_count(cfg.encoder);
  const auto tokens = token_count(cfg.encoder);
  const Count wd = cfg.decoder_width;
  const Count pixels = checked_mul(
      checked_mul(cfg.encoder.patch_size, cfg.encoder.patch_size, "decoder_pred"),
      cfg.encoder.in_channels, "decoder_pred");

  p.decoder_per_block = block_params(wd, cfg.decoder_mlp());
  p.decoder_blocks_total = checked_mul(p.decoder_per_block, cfg.decoder_depth, "decoder blocks");
  p.decoder_embed = checked_add(checked_mul(cfg.encoder.width, wd, "decoder_embed"), wd,
                                "decoder_embed");
  p.decoder_pos_embed = checked_mul(tokens.sequence_length, wd, "decoder_pos_embed");
  p.mask_token = wd;
  p.decoder_norm = 2 * wd;
  p.decoder_pred = checked_add(checked_mul(wd, pixels, "decoder_pred"), pixels, "decoder_pred");

  p.grand_total = checked_add(p.encoder_total(), p.decoder_total(), "grand_total");
  return p;
}

inline ParamBreakdown param_count(const ModelConfig &model) {
  if (const auto *mae = std::get_if<MAEConfig>(&model)) return mae_param_count(*mae);
  return param_count(std::get<ViTConfig>(model));
}

// ---------------------------------------------------------------------------
// FLOPs

inline constexpr double kDefaultBackwardMultiplier = 2.0;

// Forward FLOPs of one block over `tokens` tokens for a single sample:
// dense matmuls (qkv, proj, fc1, fc2) plus attention scores and values.
inline double block_forward_flops(double tokens, double width, double mlp) {
  return 2.0 * tokens * (4.0 * width * width + 2.0 * width * mlp) +
         4.0 * tokens * tokens * width;
}

struct FlopProfile {
  Count batch = 0;
  Count tokens_encoder = 0;
  Count tokens_decoder = 0;
  Count encoder_depth = 0;
  Count decoder_depth = 0;

  // All FLOP figures below are forward-pass totals for `batch` samples.
  double per_block_forward = 0.0;
  double decoder_per_block_forward = 0.0;
  // Patch embedding and (optional) classifier head.
  double embed_forward = 0.0;
  // Encoder-to-decoder projection and pixel-reconstruction head.
  double decoder_root_forward = 0.0;

  double encoder_total = 0.0;
  double decoder_total = 0.0;
  double backward_multiplier = kDefaultBackwardMultiplier;

  double forward_total() const { return encoder_total + decoder_total; }
  double backward_total() const { return backward_multiplier * forward_total(); }
  double step_total() const { return forward_total() + backward_total(); }

  // Decoder cost per decoded token relative to encoder cost per encoded token.
  double decoder_per_token_ratio() const {
    if (tokens_decoder == 0 || encoder_total == 0.0) return 0.0;
    return (decoder_total / static_cast<double>(tokens_decoder)) /
           (encoder_total / static_cast<double>(tokens_encoder));
  }
};

namespace detail {

inline double embed_flops(const ViTConfig &cfg, Count patch_tokens) {
  const double pixels = static_cast<double>(cfg.patch_size * cfg.patch_size * cfg.in_channels);
  double out = 2.0 * static_cast<double>(patch_tokens) * pixels * static_cast<double>(cfg.width);
  if (cfg.num_classes > 0) {
    out += 2.0 * static_cast<double>(cfg.width) * static_cast<double>(cfg.num_classes);
  }
  return out;
}

}  // namespace detail

inline FlopProfile flops(const ViTConfig &cfg, Count batch,
                         std::optional<double> mask_ratio = std::nullopt,
                         double backward_multiplier = kDefaultBackwardMultiplier) {
  cfg.validate();
  if (batch < 1) throw InvalidArgument("batch must be >= 1");
  if (mask_ratio) {
    throw InvalidArgument("mask_ratio applies only to MAE workloads, not a plain ViTConfig");
  }
  const auto tokens = token_count(cfg);
  const double b = static_cast<double>(batch);

  FlopProfile f;
  f.batch = batch;
  f.tokens_encoder = tokens.sequence_length;
  f.encoder_depth = cfg.depth;
  f.backward_multiplier = backward_multiplier;
  f.per_block_forward =
      b * block_forward_flops(static_cast<double>(tokens.sequence_length),
                              static_cast<double>(cfg.width), static_cast<double>(cfg.mlp));
  f.embed_forward = b * detail::embed_flops(cfg, tokens.patch_tokens);
  f.encoder_total = f.per_block_forward * static_cast<double>(cfg.depth) + f.embed_forward;
  return f;
}

// Tokens the MAE encoder sees after masking (visible patches plus cls).
inline Count mae_encoder_tokens(const MAEConfig &cfg) {
  const auto tokens = token_count(cfg.encoder);
  const Count visible = static_cast<Count>(
      std::llround((1.0 - cfg.mask_ratio) * static_cast<double>(tokens.patch_tokens)));
  return visible + (cfg.encoder.include_cls_token ? 1 : 0);
}

inline FlopProfile flops(const MAEConfig &cfg, Count batch,
                         double backward_multiplier = kDefaultBackwardMultiplier) {
  cfg.validate();
  if (batch < 1) throw InvalidArgument("batch must be >= 1");
  const auto tokens = token_count(cfg.encoder);
  const double b = static_cast<double>(batch);
  const auto &enc = cfg.encoder;

  FlopProfile f;
  f.batch = batch;
  f.tokens_encoder = mae_encoder_tokens(cfg);
  f.tokens_decoder = tokens.sequence_length;
  f.encoder_depth = enc.depth;
  f.decoder_depth = cfg.decoder_depth;
  f.backward_multiplier = backward_multiplier;

  f.per_block_forward =
      b * block_forward_flops(static_cast<double>(f.tokens_encoder),
                              static_cast<double>(enc.width), static_cast<double>(enc.mlp));
  // Patches are embedded before masking, so the embedding sees all of them.
  f.embed_forward = b * detail::embed_flops(enc, tokens.patch_tokens);
  f.encoder_total = f.per_block_forward * static_cast<double>(enc.depth) + f.embed_forward;

  const double wd = static_cast<double>(cfg.decoder_width);
  const double pixels = static_cast<double>(enc.patch_size * enc.patch_size * enc.in_channels);
  f.decoder_per_block_forward =
      b * block_forward_flops(static_cast<double>(f.tokens_decoder), wd,
                              static_cast<double>(cfg.decoder_mlp()));
  f.decoder_root_forward =
      b * (2.0 * static_cast<double>(f.tokens_encoder) * static_cast<double>(enc.width) * wd +
           2.0 * static_cast<double>(tokens.patch_tokens) * wd * pixels);
  f.decoder_total = f.decoder_per_block_forward * static_cast<double>(cfg.decoder_depth) +
                    f.decoder_root_forward;
  return f;
}

inline FlopProfile flops(const ModelConfig &model, Count batch,
                         double backward_multiplier = kDefaultBackwardMultiplier) {
  if (const auto *mae = std::get_if<MAEConfig>(&model)) {
    return flops(*mae, batch, backward_multiplier);
  }
  return flops(std::get<ViTConfig>(model), batch, std::nullopt, backward_multiplier);
}

// ---------------------------------------------------------------------------
// Activations

enum class ActivationModel { kFullCache, kCheckpointed };

inline constexpr double kDefaultActivationFactor = 8.0;

struct ActivationEstimate {
  double bytes_per_rank = 0.0;
  ActivationModel model = ActivationModel::kCheckpointed;
  double factor = kDefaultActivationFactor;
};

namespace detail {

struct StackShape {
  double depth, tokens, width, heads;
};

// Per-sample bytes retained inside one block: `factor` width-sized tensors
// per token plus one attention map per head.
inline double block_working_set(const StackShape &s, double factor, double bytes) {
  return (factor * s.tokens * s.width + s.heads * s.tokens * s.tokens) * bytes;
}

inline double boundary_bytes(const StackShape &s, double bytes) {
  return s.depth * s.tokens * s.width * bytes;
}

inline ActivationEstimate estimate(const std::vector<StackShape> &stacks, Count batch,
                                   int precision_bytes, ActivationModel model, double factor) {
  if (batch < 1) throw InvalidArgument("batch must be >= 1");
  if (precision_bytes != 4 && precision_bytes != 2) {
    throw InvalidArgument("activation precision must be 4 or 2 bytes");
  }
  if (!(factor > 0.0)) throw InvalidArgument("activation factor must be > 0");
  const double bytes = precision_bytes;
  double per_sample = 0.0;
  if (model == ActivationModel::kFullCache) {
    for (const auto &s : stacks) per_sample += s.depth * block_working_set(s, factor, bytes);
  } else {
    double largest_block = 0.0;
    for (const auto &s : stacks) {
      per_sample += boundary_bytes(s, bytes);
      largest_block = std::max(largest_block, block_working_set(s, factor, bytes));
    }
    per_sample += largest_block;
  }
  return {per_sample * static_cast<double>(batch), model, factor};
}

}  // namespace detail

inline ActivationEstimate activation_bytes(const ViTConfig &cfg, Count batch, int precision_bytes,
                                           ActivationModel model,
                                           double factor = kDefaultActivationFactor) {
  cfg.validate();
  const auto tokens = token_count(cfg);
  return detail::estimate({{static_cast<double>(cfg.depth),
                            static_cast<double>(tokens.sequence_length),
                            static_cast<double>(cfg.width), static_cast<double>(cfg.heads)}},
                          batch, precision_bytes, model, factor);
}

inline ActivationEstimate activation_bytes(const MAEConfig &cfg, Count batch, int precision_bytes,
                                           ActivationModel model,
                                           double factor = kDefaultActivationFactor) {
  cfg.validate();
  const auto &enc = cfg.encoder;
  const auto tokens = token_count(enc);
  return detail::estimate(
      {{static_cast<double>(enc.depth), static_cast<double>(mae_encoder_tokens(cfg)),
        static_cast<double>(enc.width), static_cast<double>(enc.heads)},
       {static_cast<double>(cfg.decoder_depth), static_cast<double>(tokens.sequence_length),
        static_cast<double>(cfg.decoder_width), static_cast<double>(cfg.decoder_heads)}},
      batch, precision_bytes, model, factor);
}

inline ActivationEstimate activation_bytes(const ModelConfig &model, Count batch,
                                           int precision_bytes, ActivationModel kind,
                                           double factor = kDefaultActivationFactor) {
  return std::visit(
      [&](const auto &cfg) { return activation_bytes(cfg, batch, precision_bytes, kind, factor); },
      model);
}

// ---------------------------------------------------------------------------
// Shardable units

enum class UnitKind { kRoot, kEncoderBlock, kDecoderBlock };

struct ModelUnit {
  std::string name;
  UnitKind kind = UnitKind::kRoot;
  Count params = 0;

  bool operator==(const ModelUnit &) const = default;
};

// Units in forward order: the root unit (embeddings, norms, heads) first,
// then encoder blocks, then decoder blocks.
inline std::vector<ModelUnit> model_units(const ModelConfig &model) {
  const ParamBreakdown p = param_count(model);
  std::vector<ModelUnit> units;
  const Count root = p.grand_total - p.blocks_total - p.decoder_blocks_total;
  units.push_back({"root", UnitKind::kRoot, root});
  const auto &enc = encoder_of(model);
  for (Count i = 0; i < enc.depth; ++i) {
    units.push_back({"encoder." + std::to_string(i), UnitKind::kEncoderBlock, p.per_block});
  }
  if (const auto *mae = std::get_if<MAEConfig>(&model)) {
    for (Count i = 0; i < mae->decoder_depth; ++i) {
      units.push_back(
          {"decoder." + std::to_string(i), UnitKind::kDecoderBlock, p.decoder_per_block});
    }
  }
  return units;
}

// Forward FLOPs attributed to one unit.
inline double unit_forward_flops(const ModelUnit &unit, const FlopProfile &profile) {
  switch (unit.kind) {
    case UnitKind::kRoot:
      return profile.embed_forward + profile.decoder_root_forward;
    case UnitKind::kEncoderBlock:
      return profile.per_block_forward;
    case UnitKind::kDecoderBlock:
      return profile.decoder_per_block_forward;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Presets

struct ArchPreset {
  std::string_view name;
  ViTConfig config;
  // Published parameter count in millions, when the row comes from the
  // reference architecture table.
  double reference_params_m;
};

inline const std::array<ArchPreset, 7> &arch_presets() {
  static const std::array<ArchPreset, 7> presets = {{
      {"vit-base", {768, 12, 3072, 12, 16, 512}, 87.0},
      {"vit-huge", {1280, 32, 5120, 16, 14, 512}, 635.0},
      {"vit-1b", {1536, 32, 6144, 16, 14, 512}, 914.0},
      {"vit-3b", {2816, 32, 11264, 32, 14, 512}, 3067.0},
      {"vit-5b", {1792, 56, 15360, 16, 14, 512}, 5349.0},
      {"vit-15b", {5040, 48, 20160, 48, 14, 512}, 14720.0},
      // Not part of the reference table; the usual ViT-L/16 at 224 pixels.
      {"vit-large", {1024, 24, 4096, 16, 16, 224}, 0.0},
  }};
  return presets;
}

inline std::optional<ViTConfig> find_arch_preset(std::string_view name) {
  for (const auto &p : arch_presets()) {
    if (p.name == name) return p.config;
  }
  return std::nullopt;
}

// Resolves "vit-<x>" to a plain encoder and "mae-<x>" to an MAE workload
// with the default decoder over the same encoder.
inline ModelConfig model_preset(std::string_view name) {
  if (name.starts_with("mae-")) {
    const std::string vit = "vit-" + std::string(name.substr(4));
    if (auto enc = find_arch_preset(vit)) return MAEConfig{*enc};
  } else if (auto cfg = find_arch_preset(name)) {
    return *cfg;
  }
  throw InvalidConfig("model: unknown preset '" + std::string(name) + "'");
}

}  // namespace vitsim

#endif  // VITSIM_ARCHMODEL_HPP_
