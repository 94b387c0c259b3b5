// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "asd/fusion.hpp"
#include "asd/model_io.hpp"

namespace asd {

struct StageTimes {
  std::int64_t frontend_us = 0;
  std::int64_t encoder_us = 0;
  std::int64_t attention_us = 0;
  std::int64_t total_us = 0;
};

struct Emission {
  std::int64_t frame_index = 0;
  float logit = 0.0f;
  float probability = 0.0f;             // sigmoid(logit)
  float visual_aux_probability = 0.0f;  // sigmoid of the visual-only head
  StageTimes wall;
};

struct MemoryFootprint {
  std::size_t conv_tail_bytes = 0;
  std::size_t embed_ring_bytes = 0;
  std::size_t aux_ring_bytes = 0;
  std::size_t param_bytes = 0;

  std::size_t total() const {
    return conv_tail_bytes + embed_ring_bytes + aux_ring_bytes + param_bytes;
  }
};

// Frame-by-frame inference session. Accepts one (video frame, 4 MFCC frames)
// pair per push; emits the logit for frame T once frame T + T2*depth has
// arrived. State is bounded: per-conv tail rings of the last K-1 activations
// plus a fused-embedding ring of depth*(T1+T2)+1 rows. Attention K/V are
// recomputed from the stored embeddings on every emission; no per-layer KV
// cache is kept.
//
// Single-owner mutable state: one pusher at a time. Distinct sessions are
// independent. The ParameterSet must outlive the session.
class StreamSession {
 public:
  StreamSession(const ParameterSet& params, const ContextConfig& ctx);
  ~StreamSession();
  StreamSession(StreamSession&&) noexcept;
  StreamSession& operator=(StreamSession&&) noexcept;

  // face: [1 x H x W] (or [H x W]); mfcc: [R x mfcc_dim] with R the audio
  // rate ratio (4 by default). Returns 0 or 1 emissions.
  std::vector<Emission> push(const Tensor& face, const Tensor& mfcc,
                             std::int64_t frontend_us = 0);

  // Emits the remaining depth*T2 frames with shrinking future context and
  // closes the session. Throws StateError on double flush.
  std::vector<Emission> flush();

  MemoryFootprint memory_footprint() const;
  std::int64_t frames_seen() const;
  std::int64_t next_emit() const;
  int window_capacity() const;
  bool is_open() const;

  // With depth L the frame-T logit depends on [T - L*T1, T + L*T2]; this is
  // the honestly multiplied context the session operates under.
  ContextConfig effective_context() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Requires bounded ctx (streaming needs finite windows). GRU-fusion models
// stream with zero latency and a single-row embedding ring; the ctx bounds
// are ignored for them.
StreamSession open_session(const ParameterSet& params,
                           const ContextConfig& ctx);

}  // namespace asd
