// SPDX-License-Identifier: Apache-2.0
#include "asd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "asd/errors.hpp"

namespace asd {

namespace {

void require(bool cond, const char* op, const std::string& msg) {
  if (!cond) throw ShapeError(std::string(op) + ": " + msg);
}

}  // namespace

void check_finite(const Tensor& t, const char* op) {
  for (float v : t.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite result");
    }
  }
}

namespace detail {

void tconv_frame(const float* const* frames, int k, const float* w, int c_in,
                 int c_out, int spatial, const float* bias, float* out) {
  constexpr int kTile = 128;   // spatial tile held in L1
  constexpr int kCoBlock = 8;  // output channels accumulated together
  float acc[kCoBlock][kTile];

  for (int s0 = 0; s0 < spatial; s0 += kTile) {
    const int len = std::min(kTile, spatial - s0);
    for (int co0 = 0; co0 < c_out; co0 += kCoBlock) {
      const int cb_n = std::min(kCoBlock, c_out - co0);
      for (int cb = 0; cb < cb_n; ++cb) {
        const float b = bias[co0 + cb];
        for (int i = 0; i < len; ++i) acc[cb][i] = b;
      }
      for (int kk = 0; kk < k; ++kk) {
        const float* frame = frames[kk];
        if (frame == nullptr) continue;  // zero padding
        const float* wk = w + static_cast<std::size_t>(kk) * c_in * c_out;
        for (int ci = 0; ci < c_in; ++ci) {
          const float* p = frame + static_cast<std::size_t>(ci) * spatial + s0;
          const float* wrow = wk + static_cast<std::size_t>(ci) * c_out + co0;
          for (int cb = 0; cb < cb_n; ++cb) {
            const float wv = wrow[cb];
            float* a = acc[cb];
            for (int i = 0; i < len; ++i) a[i] += wv * p[i];
          }
        }
      }
      for (int cb = 0; cb < cb_n; ++cb) {
        std::memcpy(out + static_cast<std::size_t>(co0 + cb) * spatial + s0,
                    acc[cb], static_cast<std::size_t>(len) * sizeof(float));
      }
    }
  }
}

}  // namespace detail

Tensor temporal_conv(const Tensor& x, const Tensor& weights,
                     const Tensor& bias, int left_pad, int right_pad,
                     int stride) {
  require(x.rank() == 2 || x.rank() == 3, "temporal_conv",
          "input must be [T x C_in] or [T x C_in x S], got " +
              shape_str(x.shape));
  require(weights.rank() == 3, "temporal_conv",
          "weights must be [K x C_in x C_out], got " + shape_str(weights.shape));
  const int t_in = x.dim(0);
  const int c_in = x.dim(1);
  const int spatial = x.rank() == 3 ? x.dim(2) : 1;
  const int k = weights.dim(0);
  const int c_out = weights.dim(2);
  require(weights.dim(1) == c_in, "temporal_conv",
          "weights C_in " + std::to_string(weights.dim(1)) +
              " != input C_in " + std::to_string(c_in));
  require(bias.rank() == 1 && bias.dim(0) == c_out, "temporal_conv",
          "bias must be [C_out]");
  require(left_pad >= 0 && right_pad >= 0 && stride >= 1, "temporal_conv",
          "bad padding/stride");
  const int padded = t_in + left_pad + right_pad;
  require(padded >= k, "temporal_conv", "input too short for kernel");
  const int t_out = (padded - k) / stride + 1;

  std::vector<int> out_shape =
      x.rank() == 3 ? std::vector<int>{t_out, c_out, spatial}
                    : std::vector<int>{t_out, c_out};
  Tensor out(out_shape);

  const float* xp = x.ptr();
  float* op = out.ptr();
  const std::size_t in_frame = static_cast<std::size_t>(c_in) * spatial;
  const std::size_t out_frame = static_cast<std::size_t>(c_out) * spatial;

  std::vector<const float*> window(static_cast<std::size_t>(k));
  for (int to = 0; to < t_out; ++to) {
    const int base = to * stride - left_pad;
    for (int kk = 0; kk < k; ++kk) {
      const int ti = base + kk;
      window[static_cast<std::size_t>(kk)] =
          (ti < 0 || ti >= t_in) ? nullptr : xp + ti * in_frame;
    }
    detail::tconv_frame(window.data(), k, weights.ptr(), c_in, c_out, spatial,
                        bias.ptr(), op + to * out_frame);
  }
  check_finite(out, "temporal_conv");
  return out;
}

namespace {

// One frame of 2-D conv: in [C_in x H x W] -> out [C_out x H' x W'].
// The accumulator row lives on the stack so the (ci, ky, kx) reduction never
// touches the output plane until it is complete.
void conv2d_frame(const float* in, int c_in, int h, int w, const float* wgt,
                  int c_out, int kh, int kw, const float* bias, int pad,
                  int stride, float* out, int oh, int ow) {
  constexpr int kMaxRow = 512;
  std::vector<float> heap_acc;
  float stack_acc[kMaxRow];
  float* acc = ow <= kMaxRow ? stack_acc : (heap_acc.resize(ow), heap_acc.data());

  for (int co = 0; co < c_out; ++co) {
    float* oplane = out + static_cast<std::size_t>(co) * oh * ow;
    const float* wc = wgt + static_cast<std::size_t>(co) * c_in * kh * kw;
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) acc[xx] = bias[co];
      for (int ci = 0; ci < c_in; ++ci) {
        const float* iplane = in + static_cast<std::size_t>(ci) * h * w;
        const float* wbase = wc + static_cast<std::size_t>(ci) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = y * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const float* irow = iplane + static_cast<std::size_t>(iy) * w;
          for (int kx = 0; kx < kw; ++kx) {
            const float wv = wbase[ky * kw + kx];
            // x range with ix = x*stride + kx - pad inside [0, w)
            int x0 = 0;
            if (kx - pad < 0) x0 = (pad - kx + stride - 1) / stride;
            int x1 = ow - 1;
            if (x1 * stride + kx - pad >= w) x1 = (w - 1 - kx + pad) / stride;
            const float* ibase = irow + (kx - pad);
            if (stride == 1) {
              for (int xx = x0; xx <= x1; ++xx) acc[xx] += wv * ibase[xx];
            } else if (stride == 2) {
              for (int xx = x0; xx <= x1; ++xx) acc[xx] += wv * ibase[2 * xx];
            } else {
              for (int xx = x0; xx <= x1; ++xx) {
                acc[xx] += wv * ibase[xx * stride];
              }
            }
          }
        }
      }
      std::memcpy(oplane + static_cast<std::size_t>(y) * ow, acc,
                  static_cast<std::size_t>(ow) * sizeof(float));
    }
  }
}

}  // namespace

Tensor spatial_conv(const Tensor& x, const Tensor& weights, const Tensor& bias,
                    int pad, int stride) {
  require(x.rank() == 3 || x.rank() == 4, "spatial_conv",
          "input must be [C x H x W] or [T x C x H x W], got " +
              shape_str(x.shape));
  require(weights.rank() == 4, "spatial_conv",
          "weights must be [C_out x C_in x Kh x Kw]");
  const bool batched = x.rank() == 4;
  const int t = batched ? x.dim(0) : 1;
  const int c_in = batched ? x.dim(1) : x.dim(0);
  const int h = batched ? x.dim(2) : x.dim(1);
  const int w = batched ? x.dim(3) : x.dim(2);
  const int c_out = weights.dim(0);
  const int kh = weights.dim(2);
  const int kw = weights.dim(3);
  require(weights.dim(1) == c_in, "spatial_conv", "C_in mismatch");
  require(bias.rank() == 1 && bias.dim(0) == c_out, "spatial_conv",
          "bias must be [C_out]");
  require(pad >= 0 && stride >= 1, "spatial_conv", "bad padding/stride");
  require(h + 2 * pad >= kh && w + 2 * pad >= kw, "spatial_conv",
          "input smaller than kernel");
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;

  Tensor out(batched ? std::vector<int>{t, c_out, oh, ow}
                     : std::vector<int>{c_out, oh, ow});
  const std::size_t in_frame = static_cast<std::size_t>(c_in) * h * w;
  const std::size_t out_frame = static_cast<std::size_t>(c_out) * oh * ow;
  for (int ti = 0; ti < t; ++ti) {
    conv2d_frame(x.ptr() + ti * in_frame, c_in, h, w, weights.ptr(), c_out, kh,
                 kw, bias.ptr(), pad, stride, out.ptr() + ti * out_frame, oh,
                 ow);
  }
  check_finite(out, "spatial_conv");
  return out;
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  require(weights.rank() == 2, "dense", "weights must be [D_in x D_out]");
  require(x.rank() >= 1, "dense", "input must have at least one axis");
  const int d_in = weights.dim(0);
  const int d_out = weights.dim(1);
  require(x.dim(x.rank() - 1) == d_in, "dense",
          "input last axis " + std::to_string(x.dim(x.rank() - 1)) +
              " != D_in " + std::to_string(d_in));
  require(bias.rank() == 1 && bias.dim(0) == d_out, "dense",
          "bias must be [D_out]");
  const std::size_t rows = x.numel() / d_in;

  std::vector<int> out_shape(x.shape.begin(), x.shape.end() - 1);
  out_shape.push_back(d_out);
  Tensor out(out_shape);

  const float* xp = x.ptr();
  const float* wp = weights.ptr();
  float* op = out.ptr();
  constexpr int kTile = 128;
  float acc[kTile];
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xrow = xp + r * d_in;
    float* orow = op + r * d_out;
    for (int j0 = 0; j0 < d_out; j0 += kTile) {
      const int len = std::min(kTile, d_out - j0);
      std::memcpy(acc, bias.ptr() + j0, sizeof(float) * len);
      for (int i = 0; i < d_in; ++i) {
        const float xv = xrow[i];
        const float* wrow = wp + static_cast<std::size_t>(i) * d_out + j0;
        for (int j = 0; j < len; ++j) acc[j] += xv * wrow[j];
      }
      std::memcpy(orow + j0, acc, sizeof(float) * len);
    }
  }
  check_finite(out, "dense");
  return out;
}

void masked_softmax_row(const float* logits, const std::uint8_t* mask, int n,
                        float* out) {
  float mx = -std::numeric_limits<float>::infinity();
  int survivors = 0;
  for (int i = 0; i < n; ++i) {
    if (mask[i]) {
      ++survivors;
      mx = std::max(mx, logits[i]);
    }
  }
  if (survivors == 0) {
    throw ShapeError("masked_softmax: all entries masked");
  }
  // Masked entries behave as the most negative finite logit: after the max
  // subtraction their exp underflows to exactly zero.
  float sum = 0.0f;
  for (int i = 0; i < n; ++i) {
    const float e = mask[i] ? std::exp(logits[i] - mx) : 0.0f;
    out[i] = e;
    sum += e;
  }
  const float inv = 1.0f / sum;
  for (int i = 0; i < n; ++i) out[i] *= inv;
}

Tensor masked_softmax(const Tensor& logits, const Tensor& mask) {
  require(logits.rank() == 1 && mask.rank() == 1 &&
              logits.dim(0) == mask.dim(0),
          "masked_softmax", "logits and mask must be equal-length vectors");
  const int n = logits.dim(0);
  std::vector<std::uint8_t> mb(n);
  for (int i = 0; i < n; ++i) mb[i] = mask.data[i] != 0.0f;
  Tensor out({n});
  masked_softmax_row(logits.ptr(), mb.data(), n, out.ptr());
  check_finite(out, "masked_softmax");
  return out;
}

namespace {

// acc[j] = bias[j] + sum_i v[i] * w[i][j]
void affine_into(const float* v, int d_in, const Tensor& w, const Tensor& b,
                 float* acc) {
  std::memcpy(acc, b.ptr(), sizeof(float) * w.dim(1));
  const int d_out = w.dim(1);
  const float* wp = w.ptr();
  for (int i = 0; i < d_in; ++i) {
    const float xv = v[i];
    const float* wrow = wp + static_cast<std::size_t>(i) * d_out;
    for (int j = 0; j < d_out; ++j) acc[j] += xv * wrow[j];
  }
}

}  // namespace

Tensor gru_step(const Tensor& x, const Tensor& h, const GruWeights& p) {
  require(x.rank() == 1 && h.rank() == 1, "gru_step",
          "x and h must be vectors");
  const int d_in = x.dim(0);
  const int d_h = h.dim(0);
  require(p.wz->dim(0) == d_in && p.wz->dim(1) == d_h, "gru_step",
          "wz shape mismatch");
  require(p.uz->dim(0) == d_h && p.uz->dim(1) == d_h, "gru_step",
          "uz shape mismatch");

  std::vector<float> z(d_h), r(d_h), tmp(d_h), cand(d_h), rh(d_h);

  affine_into(x.ptr(), d_in, *p.wz, *p.bz, z.data());
  affine_into(h.ptr(), d_h, *p.uz, Tensor({d_h}), tmp.data());
  for (int j = 0; j < d_h; ++j) z[j] = sigmoid_scalar(z[j] + tmp[j]);

  affine_into(x.ptr(), d_in, *p.wr, *p.br, r.data());
  affine_into(h.ptr(), d_h, *p.ur, Tensor({d_h}), tmp.data());
  for (int j = 0; j < d_h; ++j) r[j] = sigmoid_scalar(r[j] + tmp[j]);

  for (int j = 0; j < d_h; ++j) rh[j] = r[j] * h.data[j];
  affine_into(x.ptr(), d_in, *p.wh, *p.bh, cand.data());
  affine_into(rh.data(), d_h, *p.uh, Tensor({d_h}), tmp.data());
  for (int j = 0; j < d_h; ++j) cand[j] = std::tanh(cand[j] + tmp[j]);

  Tensor out({d_h});
  for (int j = 0; j < d_h; ++j) {
    out.data[j] = (1.0f - z[j]) * cand[j] + z[j] * h.data[j];
  }
  check_finite(out, "gru_step");
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  relu_inplace(out.data);
  return out;
}

void relu_inplace(std::span<float> v) {
  for (float& f : v) f = f > 0.0f ? f : 0.0f;
}

float sigmoid_scalar(float v) { return 1.0f / (1.0f + std::exp(-v)); }

Tensor sigmoid(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.data) v = sigmoid_scalar(v);
  check_finite(out, "sigmoid");
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.rank() == 3 || x.rank() == 4, "global_avg_pool",
          "input must be [C x H x W] or [T x C x H x W]");
  const bool batched = x.rank() == 4;
  const int t = batched ? x.dim(0) : 1;
  const int c = batched ? x.dim(1) : x.dim(0);
  const int hw = batched ? x.dim(2) * x.dim(3) : x.dim(1) * x.dim(2);
  require(hw > 0, "global_avg_pool", "empty spatial extent");

  Tensor out(batched ? std::vector<int>{t, c} : std::vector<int>{c});
  const float inv = 1.0f / static_cast<float>(hw);
  const float* xp = x.ptr();
  for (int i = 0; i < t * c; ++i) {
    const float* plane = xp + static_cast<std::size_t>(i) * hw;
    float acc = 0.0f;
    for (int s = 0; s < hw; ++s) acc += plane[s];
    out.data[i] = acc * inv;
  }
  check_finite(out, "global_avg_pool");
  return out;
}

void channel_affine_inplace(Tensor& x, const Tensor& scale,
                            const Tensor& shift, bool batched) {
  const int axis = batched ? 1 : 0;
  require(x.rank() > axis, "channel_affine", "rank too small");
  const int t = batched ? x.dim(0) : 1;
  const int c = x.dim(axis);
  require(scale.dim(0) == c && shift.dim(0) == c, "channel_affine",
          "scale/shift must be [C]");
  std::size_t spatial = 1;
  for (int i = axis + 1; i < x.rank(); ++i) spatial *= x.dim(i);

  float* p = x.ptr();
  for (int ti = 0; ti < t; ++ti) {
    for (int ci = 0; ci < c; ++ci) {
      const float sc = scale.data[ci];
      const float sh = shift.data[ci];
      float* row = p + (static_cast<std::size_t>(ti) * c + ci) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) row[s] = row[s] * sc + sh;
    }
  }
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps) {
  require(x.rank() == 2, "layer_norm", "input must be [N x D]");
  const int n = x.dim(0);
  const int d = x.dim(1);
  require(gamma.dim(0) == d && beta.dim(0) == d, "layer_norm",
          "gamma/beta must be [D]");
  Tensor out({n, d});
  for (int r = 0; r < n; ++r) {
    const float* xrow = x.ptr() + static_cast<std::size_t>(r) * d;
    float* orow = out.ptr() + static_cast<std::size_t>(r) * d;
    float mean = 0.0f;
    for (int j = 0; j < d; ++j) mean += xrow[j];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (int j = 0; j < d; ++j) {
      const float c = xrow[j] - mean;
      var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j) {
      orow[j] = (xrow[j] - mean) * inv * gamma.data[j] + beta.data[j];
    }
  }
  check_finite(out, "layer_norm");
  return out;
}

}  // namespace asd
