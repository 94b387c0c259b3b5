// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>

#include "asd/tensor.hpp"

namespace asd {

// Numeric kernels. All functions are pure, deterministic, and validate that
// every produced value is finite (NumericError otherwise).

// Temporal convolution (cross-correlation, no kernel flip) along the first
// axis. x is [T x C_in] or [T x C_in x S] where S is an extra per-channel
// spatial extent convolved position-wise. weights is [K x C_in x C_out],
// bias [C_out]. Padding is zero-fill; with right_pad == 0 the op is causal:
// output t depends only on x[0..t*stride].
Tensor temporal_conv(const Tensor& x, const Tensor& weights,
                     const Tensor& bias, int left_pad, int right_pad,
                     int stride = 1);

// Per-frame 2-D convolution. x is [T x C_in x H x W] or a single frame
// [C_in x H x W]; weights [C_out x C_in x Kh x Kw], symmetric zero padding
// `pad`, stride >= 1. No mixing across the T axis.
Tensor spatial_conv(const Tensor& x, const Tensor& weights, const Tensor& bias,
                    int pad, int stride = 1);

// Affine map over the last axis: x [... x D_in], weights [D_in x D_out].
Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);

// Softmax over the entries with mask != 0; masked entries are exactly 0 in
// the output (their logits are treated as the most negative finite value,
// whose exp underflows to zero). Throws ShapeError if every entry is masked.
Tensor masked_softmax(const Tensor& logits, const Tensor& mask);

// Row variant used by the attention kernels: mask bytes, out may alias
// nothing. Returns without allocation.
void masked_softmax_row(const float* logits, const std::uint8_t* mask, int n,
                        float* out);

struct GruWeights {
  const Tensor* wz;
  const Tensor* wr;
  const Tensor* wh;
  const Tensor* uz;
  const Tensor* ur;
  const Tensor* uh;
  const Tensor* bz;
  const Tensor* br;
  const Tensor* bh;
};

// One GRU step: update gate z, reset gate r, tanh candidate;
// h' = (1 - z) * cand + z * h.
Tensor gru_step(const Tensor& x, const Tensor& h, const GruWeights& p);

Tensor relu(const Tensor& x);
void relu_inplace(std::span<float> v);
Tensor sigmoid(const Tensor& x);
float sigmoid_scalar(float v);

// Mean over the trailing H x W axes: [T x C x H x W] -> [T x C] or
// [C x H x W] -> [C].
Tensor global_avg_pool(const Tensor& x);

// Per-channel affine over axis 1 of [T x C x ...] (or axis 0 of a single
// frame [C x ...]): y = x * scale[c] + shift[c]. In-place.
void channel_affine_inplace(Tensor& x, const Tensor& scale,
                            const Tensor& shift, bool batched);

// LayerNorm over the last axis of [N x D] with learned affine.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

// Throws NumericError if any value is not finite.
void check_finite(const Tensor& t, const char* op);

namespace detail {

// One output frame of a temporal conv over a window of k input frames:
// out[co*spatial + s] = bias[co] + sum_k sum_ci w[k][ci][co] *
// frames[k][ci*spatial + s]. Null frame pointers contribute zero (padding).
// Shared by the offline kernel and the streaming tail rings so both sides
// accumulate in the same order.
void tconv_frame(const float* const* frames, int k, const float* w, int c_in,
                 int c_out, int spatial, const float* bias, float* out);

}  // namespace detail

}  // namespace asd
