// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>

#include "asd/frontend.hpp"
#include "asd/fusion.hpp"
#include "asd/model_io.hpp"

namespace asd::oracle {

// Slow, obviously-correct full-sequence reference implementations. They share
// parameter loading and configs with the production path but none of its
// numeric kernels: everything here is literal double-precision loops.

// Literal double loop over (T, t): per-row softmax over the surviving keys
// with 1/sqrt(d_head) scaling. Returns [n x d_head] for the given head.
Tensor bruteforce_attention(const Tensor& x, const ContextMask& mask,
                            const FusionLayerView& layer, int head,
                            int n_heads);

// Full-sequence forward pass (causal encoders -> banded fusion ->
// classifier), the training-graph-shaped computation evaluated forward-only.
Tensor offline_forward(const frontend::MfccSequence& x_a,
                       const frontend::FaceFrameSequence& x_v,
                       const ContextConfig& ctx, const ParameterSet& params);

struct StreamComparison {
  double max_abs_diff = 0.0;
  std::int64_t argmax_frame = -1;
  double tolerance = 0.0;
  bool pass = false;
};

StreamComparison compare_streams(std::span<const float> a,
                                 std::span<const float> b, double tol);

}  // namespace asd::oracle
