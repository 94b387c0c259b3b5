// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "asd/tensor.hpp"

namespace asd {

struct EncoderConfig {
  int n_blocks = 3;
  std::array<int, 2> branch_kernels{3, 5};
  std::vector<int> channels{32, 64, 128};
  int embed_dim = 128;
  int input_hw = 112;
  int in_channels = 1;
  // Per-block spatial stride of the visual S_Conv stage.
  std::vector<int> spatial_strides{2, 2, 2};
  // Per-block temporal stride of the audio 3-tap stage; the product is the
  // audio-to-video rate ratio (4 with the defaults).
  std::vector<int> audio_strides{2, 2, 1};
  int mfcc_dim = 13;
};

struct FusionConfig {
  enum class Kind { transformer, uni_gru };
  Kind kind = Kind::transformer;
  int depth = 1;
  int heads = 8;
  int d_ff = 1024;
  int gru_hidden = 128;
  // Optional relative-position bias on attention logits, clipped to
  // [-rel_pos_range, rel_pos_range]. Off by default: the causal convolutions
  // already encode local order and absolute positions would break the
  // streaming window's shift invariance.
  bool rel_pos_bias = false;
  int rel_pos_range = 64;
};

struct FrontendConfig {
  int sample_rate = 16000;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int mel_bands = 40;
  double preemphasis = 0.97;
  double fps = 25.0;
  double face_mean = 0.45;
  double face_std = 0.225;
};

struct ModelConfig {
  EncoderConfig encoder;
  FusionConfig fusion;
  FrontendConfig frontend;
  // Default streaming context (past/future frames) used when the caller does
  // not override it.
  int ctx_past = 32;
  int ctx_future = 8;

  int d_model() const { return 2 * encoder.embed_dim; }
  int audio_rate_ratio() const;

  void validate() const;  // throws DataError
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

enum class InitKind { weight, bias, scale };

struct TensorSpec {
  std::string name;
  std::vector<int> shape;
  InitKind kind = InitKind::weight;
  int fan_in = 1;
};

// Canonical ordered list of every tensor a model with this config must carry.
// The order is also the init_random draw order.
std::vector<TensorSpec> required_tensors(const ModelConfig& cfg);

struct ParameterSet {
  ModelConfig config;
  std::unordered_map<std::string, Tensor> tensors;

  const Tensor& at(const std::string& name) const;  // throws DataError
  std::size_t total_bytes() const;
};

// Deterministic initialization: weights ~ uniform(-1/sqrt(fan_in),
// +1/sqrt(fan_in)) drawn from Xorshift64Star(seed) in required_tensors
// order, row-major within each tensor; biases zero; affine scales one.
ParameterSet init_random(const ModelConfig& cfg, std::uint64_t seed);

// "ASDW" container: magic, u32 version, u32 config length + UTF-8 config
// JSON, then records of (u16 name length, name, u8 rank, u32 dims[, f32 data)
// until EOF. Everything little-endian.
void save_weights(const ParameterSet& params, const std::string& path);
ParameterSet load_weights(const std::string& path);  // validates completeness

// Same binary layout without the model-completeness validation; used for
// debug dumps such as `asd mfcc`.
void save_tensor_container(
    const std::string& path, const std::string& config_json,
    const std::vector<std::pair<std::string, Tensor>>& tensors);
std::pair<std::string, std::vector<std::pair<std::string, Tensor>>>
load_tensor_container(const std::string& path);

}  // namespace asd
