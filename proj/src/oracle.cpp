// SPDX-License-Identifier: Apache-2.0
#include "asd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "asd/errors.hpp"

// Every routine below is a literal, double-precision re-statement of the
// model definition. It deliberately shares no numeric kernels with the
// production path: only parameter loading and the shape configuration.

namespace asd::oracle {

namespace {

using Vec = std::vector<double>;

Vec to_double(const Tensor& t) {
  Vec v(t.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = t.data[i];
  return v;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// y[t][co][s] over padded input; x is [T x C_in x S].
Vec conv_temporal(const Vec& x, int t_in, int c_in, int spatial,
                  const Tensor& w, const Tensor& b, int left, int stride,
                  int t_out) {
  const int k = w.dim(0);
  const int c_out = w.dim(2);
  Vec y(static_cast<std::size_t>(t_out) * c_out * spatial, 0.0);
  for (int to = 0; to < t_out; ++to) {
    for (int co = 0; co < c_out; ++co) {
      for (int s = 0; s < spatial; ++s) {
        double acc = b.data[co];
        for (int kk = 0; kk < k; ++kk) {
          const int ti = to * stride - left + kk;
          if (ti < 0 || ti >= t_in) continue;
          for (int ci = 0; ci < c_in; ++ci) {
            acc += static_cast<double>(
                       w.data[(static_cast<std::size_t>(kk) * c_in + ci) *
                                  c_out +
                              co]) *
                   x[(static_cast<std::size_t>(ti) * c_in + ci) * spatial + s];
          }
        }
        y[(static_cast<std::size_t>(to) * c_out + co) * spatial + s] = acc;
      }
    }
  }
  return y;
}

Vec conv_spatial_frame(const Vec& x, std::size_t off, int c_in, int h, int w,
                       const Tensor& wgt, const Tensor& b, int pad,
                       int stride, int oh, int ow) {
  const int c_out = wgt.dim(0);
  const int kh = wgt.dim(2);
  const int kw = wgt.dim(3);
  Vec y(static_cast<std::size_t>(c_out) * oh * ow, 0.0);
  for (int co = 0; co < c_out; ++co) {
    for (int yy = 0; yy < oh; ++yy) {
      for (int xx = 0; xx < ow; ++xx) {
        double acc = b.data[co];
        for (int ci = 0; ci < c_in; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = yy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = xx * stride + kx - pad;
              if (ix < 0 || ix >= w) continue;
              acc += static_cast<double>(
                         wgt.data[((static_cast<std::size_t>(co) * c_in + ci) *
                                       kh +
                                   ky) *
                                      kw +
                                  kx]) *
                     x[off + (static_cast<std::size_t>(ci) * h + iy) * w + ix];
            }
          }
        }
        y[(static_cast<std::size_t>(co) * oh + yy) * ow + xx] = acc;
      }
    }
  }
  return y;
}

void affine_relu(Vec& x, int frames, int c, int spatial, const Tensor& scale,
                 const Tensor& shift, bool apply_relu) {
  for (int f = 0; f < frames; ++f) {
    for (int ci = 0; ci < c; ++ci) {
      for (int s = 0; s < spatial; ++s) {
        double& v = x[(static_cast<std::size_t>(f) * c + ci) * spatial + s];
        v = v * scale.data[ci] + shift.data[ci];
        if (apply_relu && v < 0.0) v = 0.0;
      }
    }
  }
}

Vec dense_rows(const Vec& x, int rows, int d_in, const Tensor& w,
               const Tensor& b) {
  const int d_out = w.dim(1);
  Vec y(static_cast<std::size_t>(rows) * d_out, 0.0);
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < d_out; ++j) {
      double acc = b.data[j];
      for (int i = 0; i < d_in; ++i) {
        acc += x[static_cast<std::size_t>(r) * d_in + i] *
               static_cast<double>(w.data[static_cast<std::size_t>(i) * d_out + j]);
      }
      y[static_cast<std::size_t>(r) * d_out + j] = acc;
    }
  }
  return y;
}

struct StageRef {
  const Tensor *w, *b, *scale, *shift;
};

StageRef stage_ref(const ParameterSet& p, const std::string& prefix) {
  return {&p.at(prefix + ".weight"), &p.at(prefix + ".bias"),
          &p.at(prefix + ".scale"), &p.at(prefix + ".shift")};
}

// Visual encoder, one frame sequence -> [T x embed_dim].
Vec visual_encoder(const Vec& frames, int t, const ParameterSet& p) {
  const auto& e = p.config.encoder;
  Vec x = frames;
  int c_in = e.in_channels;
  int h = e.input_hw;
  int w = e.input_hw;
  for (int blk = 0; blk < e.n_blocks; ++blk) {
    const int c = e.channels[static_cast<std::size_t>(blk)];
    const int stride = e.spatial_strides[static_cast<std::size_t>(blk)];
    const int oh = (h + 2 - 3) / stride + 1;
    const int ow = (w + 2 - 3) / stride + 1;
    Vec block_out;
    for (int br = 0; br < 2; ++br) {
      const std::string prefix = "visual.block" + std::to_string(blk) +
                                 ".branch" + std::to_string(br);
      const StageRef sc = stage_ref(p, prefix + ".s_conv");
      const StageRef tc = stage_ref(p, prefix + ".t_conv");
      Vec s(static_cast<std::size_t>(t) * c * oh * ow);
      for (int f = 0; f < t; ++f) {
        Vec frame = conv_spatial_frame(
            x, static_cast<std::size_t>(f) * c_in * h * w, c_in, h, w, *sc.w,
            *sc.b, 1, stride, oh, ow);
        std::copy(frame.begin(), frame.end(),
                  s.begin() + static_cast<std::size_t>(f) * c * oh * ow);
      }
      affine_relu(s, t, c, oh * ow, *sc.scale, *sc.shift, false);
      const int kt = tc.w->dim(0);
      Vec y = conv_temporal(s, t, c, oh * ow, *tc.w, *tc.b, kt - 1, 1, t);
      affine_relu(y, t, c, oh * ow, *tc.scale, *tc.shift, true);
      if (br == 0) {
        block_out = std::move(y);
      } else {
        for (std::size_t i = 0; i < block_out.size(); ++i)
          block_out[i] += y[i];
      }
    }
    x = std::move(block_out);
    c_in = c;
    h = oh;
    w = ow;
  }
  // global average pool + projection
  Vec pooled(static_cast<std::size_t>(t) * c_in, 0.0);
  for (int f = 0; f < t; ++f) {
    for (int ci = 0; ci < c_in; ++ci) {
      double acc = 0.0;
      for (int s = 0; s < h * w; ++s) {
        acc += x[(static_cast<std::size_t>(f) * c_in + ci) * h * w + s];
      }
      pooled[static_cast<std::size_t>(f) * c_in + ci] = acc / (h * w);
    }
  }
  return dense_rows(pooled, t, c_in, p.at("visual.proj.weight"),
                    p.at("visual.proj.bias"));
}

Vec audio_encoder(const Vec& mfcc, int t_a, const ParameterSet& p) {
  const auto& e = p.config.encoder;
  Vec x = mfcc;
  int c_in = e.mfcc_dim;
  int t = t_a;
  for (int blk = 0; blk < e.n_blocks; ++blk) {
    const int c = e.channels[static_cast<std::size_t>(blk)];
    const int stride = e.audio_strides[static_cast<std::size_t>(blk)];
    const int t_out = (t - 1) / stride + 1;
    Vec block_out;
    for (int br = 0; br < 2; ++br) {
      const std::string prefix = "audio.block" + std::to_string(blk) +
                                 ".branch" + std::to_string(br);
      const StageRef sc = stage_ref(p, prefix + ".s_conv");
      const StageRef tc = stage_ref(p, prefix + ".t_conv");
      const int ks = sc.w->dim(0);
      Vec s = conv_temporal(x, t, c_in, 1, *sc.w, *sc.b, ks - 1, stride, t_out);
      affine_relu(s, t_out, c, 1, *sc.scale, *sc.shift, false);
      const int kt = tc.w->dim(0);
      Vec y = conv_temporal(s, t_out, c, 1, *tc.w, *tc.b, kt - 1, 1, t_out);
      affine_relu(y, t_out, c, 1, *tc.scale, *tc.shift, true);
      if (br == 0) {
        block_out = std::move(y);
      } else {
        for (std::size_t i = 0; i < block_out.size(); ++i)
          block_out[i] += y[i];
      }
    }
    x = std::move(block_out);
    c_in = c;
    t = t_out;
  }
  return dense_rows(x, t, c_in, p.at("audio.proj.weight"),
                    p.at("audio.proj.bias"));
}

Vec layer_norm_rows(const Vec& x, int rows, int d, const Tensor& gamma,
                    const Tensor& beta) {
  Vec y(x.size());
  for (int r = 0; r < rows; ++r) {
    const double* row = x.data() + static_cast<std::size_t>(r) * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (int j = 0; j < d; ++j) {
      y[static_cast<std::size_t>(r) * d + j] =
          (row[j] - mean) * inv * gamma.data[j] + beta.data[j];
    }
  }
  return y;
}

// Banded attention row weights for query T over keys [lo, hi].
void softmax_band(const Vec& scores, int lo, int hi, Vec& weights) {
  double mx = scores[static_cast<std::size_t>(lo)];
  for (int t = lo + 1; t <= hi; ++t) mx = std::max(mx, scores[static_cast<std::size_t>(t)]);
  double sum = 0.0;
  for (int t = lo; t <= hi; ++t) {
    weights[static_cast<std::size_t>(t)] = std::exp(scores[static_cast<std::size_t>(t)] - mx);
    sum += weights[static_cast<std::size_t>(t)];
  }
  for (int t = lo; t <= hi; ++t) weights[static_cast<std::size_t>(t)] /= sum;
}

Vec transformer_stack(Vec x, int n, const ParameterSet& p,
                      const ContextConfig& ctx) {
  const auto& f = p.config.fusion;
  const int dm = p.config.d_model();
  const int heads = f.heads;
  const int dh = dm / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (int l = 0; l < f.depth; ++l) {
    const std::string prefix = "fusion.layer" + std::to_string(l);
    const Vec n1 = layer_norm_rows(x, n, dm, p.at(prefix + ".norm1.weight"),
                                   p.at(prefix + ".norm1.bias"));
    const Vec q = dense_rows(n1, n, dm, p.at(prefix + ".q.weight"),
                             p.at(prefix + ".q.bias"));
    const Vec k = dense_rows(n1, n, dm, p.at(prefix + ".k.weight"),
                             p.at(prefix + ".k.bias"));
    const Vec v = dense_rows(n1, n, dm, p.at(prefix + ".v.weight"),
                             p.at(prefix + ".v.bias"));
    const Tensor* rel =
        f.rel_pos_bias ? &p.at(prefix + ".rel_bias") : nullptr;

    Vec concat(static_cast<std::size_t>(n) * dm, 0.0);
    Vec scores(static_cast<std::size_t>(n));
    Vec weights(static_cast<std::size_t>(n));
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      for (int T = 0; T < n; ++T) {
        const int lo = ctx.past ? std::max(0, T - *ctx.past) : 0;
        const int hi = ctx.future ? std::min(n - 1, T + *ctx.future) : n - 1;
        for (int t = lo; t <= hi; ++t) {
          double dot = 0.0;
          for (int j = 0; j < dh; ++j) {
            dot += q[static_cast<std::size_t>(T) * dm + off + j] *
                   k[static_cast<std::size_t>(t) * dm + off + j];
          }
          dot *= scale;
          if (rel) {
            const int r = std::clamp(t - T, -f.rel_pos_range, f.rel_pos_range);
            dot += rel->data[static_cast<std::size_t>(r + f.rel_pos_range)];
          }
          scores[static_cast<std::size_t>(t)] = dot;
        }
        softmax_band(scores, lo, hi, weights);
        for (int t = lo; t <= hi; ++t) {
          const double wv = weights[static_cast<std::size_t>(t)];
          for (int j = 0; j < dh; ++j) {
            concat[static_cast<std::size_t>(T) * dm + off + j] +=
                wv * v[static_cast<std::size_t>(t) * dm + off + j];
          }
        }
      }
    }
    const Vec attn = dense_rows(concat, n, dm, p.at(prefix + ".o.weight"),
                                p.at(prefix + ".o.bias"));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += attn[i];

    const Vec n2 = layer_norm_rows(x, n, dm, p.at(prefix + ".norm2.weight"),
                                   p.at(prefix + ".norm2.bias"));
    Vec ff = dense_rows(n2, n, dm, p.at(prefix + ".ff1.weight"),
                        p.at(prefix + ".ff1.bias"));
    for (double& v2 : ff) v2 = v2 > 0.0 ? v2 : 0.0;
    const Vec ff2 = dense_rows(ff, n, f.d_ff, p.at(prefix + ".ff2.weight"),
                               p.at(prefix + ".ff2.bias"));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += ff2[i];
  }
  return x;
}

}  // namespace

Tensor bruteforce_attention(const Tensor& x, const ContextMask& mask,
                            const FusionLayerView& layer, int head,
                            int n_heads) {
  if (x.rank() != 2 || mask.n != x.dim(0)) {
    throw ShapeError("bruteforce_attention: bad shapes");
  }
  const int n = x.dim(0);
  const int dm = x.dim(1);
  const int dh = dm / n_heads;
  const int off = head * dh;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Vec xd = to_double(x);
  const Vec q = dense_rows(xd, n, dm, *layer.q_w, *layer.q_b);
  const Vec k = dense_rows(xd, n, dm, *layer.k_w, *layer.k_b);
  const Vec v = dense_rows(xd, n, dm, *layer.v_w, *layer.v_b);

  Tensor out({n, dh});
  for (int T = 0; T < n; ++T) {
    // literal two-pass softmax over the surviving keys
    double mx = -std::numeric_limits<double>::infinity();
    int survivors = 0;
    std::vector<double> score(static_cast<std::size_t>(n), 0.0);
    for (int t = 0; t < n; ++t) {
      if (!mask.at(T, t)) continue;
      double dot = 0.0;
      for (int j = 0; j < dh; ++j) {
        dot += q[static_cast<std::size_t>(T) * dm + off + j] *
               k[static_cast<std::size_t>(t) * dm + off + j];
      }
      dot *= scale;
      score[static_cast<std::size_t>(t)] = dot;
      mx = std::max(mx, dot);
      ++survivors;
    }
    if (survivors == 0) {
      throw ShapeError("bruteforce_attention: all-masked row");
    }
    double sum = 0.0;
    for (int t = 0; t < n; ++t) {
      if (mask.at(T, t)) sum += std::exp(score[static_cast<std::size_t>(t)] - mx);
    }
    for (int j = 0; j < dh; ++j) {
      double acc = 0.0;
      for (int t = 0; t < n; ++t) {
        if (!mask.at(T, t)) continue;
        const double w = std::exp(score[static_cast<std::size_t>(t)] - mx) / sum;
        acc += w * v[static_cast<std::size_t>(t) * dm + off + j];
      }
      out.at2(T, j) = static_cast<float>(acc);
    }
  }
  return out;
}

Tensor offline_forward(const frontend::MfccSequence& x_a,
                       const frontend::FaceFrameSequence& x_v,
                       const ContextConfig& ctx, const ParameterSet& params) {
  const auto& cfg = params.config;
  const int ratio = cfg.audio_rate_ratio();
  const int t_a = x_a.frames.dim(0);
  const int t_v = x_v.frames.dim(0);
  if (t_a != ratio * t_v) {
    throw DataError("offline_forward: streams are not aligned (" +
                    std::to_string(t_a) + " audio rows for " +
                    std::to_string(t_v) + " video frames)");
  }

  const Vec e_v = visual_encoder(to_double(x_v.frames), t_v, params);
  const Vec e_a = audio_encoder(to_double(x_a.frames), t_a, params);

  const int dm = cfg.d_model();
  const int de = cfg.encoder.embed_dim;
  Vec fused(static_cast<std::size_t>(t_v) * dm);
  for (int i = 0; i < t_v; ++i) {
    for (int j = 0; j < de; ++j) {
      fused[static_cast<std::size_t>(i) * dm + j] =
          e_a[static_cast<std::size_t>(i) * de + j];
      fused[static_cast<std::size_t>(i) * dm + de + j] =
          e_v[static_cast<std::size_t>(i) * de + j];
    }
  }

  Vec logits_d;
  if (cfg.fusion.kind == FusionConfig::Kind::transformer) {
    const Vec y = transformer_stack(std::move(fused), t_v, params, ctx);
    logits_d = dense_rows(y, t_v, dm, params.at("fusion.classifier.weight"),
                          params.at("fusion.classifier.bias"));
  } else {
    // uni-directional GRU, scalar loop
    const int dh = cfg.fusion.gru_hidden;
    const Vec wz = to_double(params.at("fusion.gru.wz"));
    const Vec wr = to_double(params.at("fusion.gru.wr"));
    const Vec wh = to_double(params.at("fusion.gru.wh"));
    const Vec uz = to_double(params.at("fusion.gru.uz"));
    const Vec ur = to_double(params.at("fusion.gru.ur"));
    const Vec uh = to_double(params.at("fusion.gru.uh"));
    const Vec bz = to_double(params.at("fusion.gru.bz"));
    const Vec br = to_double(params.at("fusion.gru.br"));
    const Vec bh = to_double(params.at("fusion.gru.bh"));
    Vec h(static_cast<std::size_t>(dh), 0.0);
    logits_d.resize(static_cast<std::size_t>(t_v));
    for (int i = 0; i < t_v; ++i) {
      const double* xi = fused.data() + static_cast<std::size_t>(i) * dm;
      Vec z(dh), r(dh), cand(dh);
      for (int j = 0; j < dh; ++j) {
        double az = bz[static_cast<std::size_t>(j)];
        double ar = br[static_cast<std::size_t>(j)];
        for (int m = 0; m < dm; ++m) {
          az += xi[m] * wz[static_cast<std::size_t>(m) * dh + j];
          ar += xi[m] * wr[static_cast<std::size_t>(m) * dh + j];
        }
        for (int m = 0; m < dh; ++m) {
          az += h[static_cast<std::size_t>(m)] * uz[static_cast<std::size_t>(m) * dh + j];
          ar += h[static_cast<std::size_t>(m)] * ur[static_cast<std::size_t>(m) * dh + j];
        }
        z[static_cast<std::size_t>(j)] = sigmoid(az);
        r[static_cast<std::size_t>(j)] = sigmoid(ar);
      }
      for (int j = 0; j < dh; ++j) {
        double ah = bh[static_cast<std::size_t>(j)];
        for (int m = 0; m < dm; ++m) {
          ah += xi[m] * wh[static_cast<std::size_t>(m) * dh + j];
        }
        for (int m = 0; m < dh; ++m) {
          ah += r[static_cast<std::size_t>(m)] * h[static_cast<std::size_t>(m)] *
                uh[static_cast<std::size_t>(m) * dh + j];
        }
        cand[static_cast<std::size_t>(j)] = std::tanh(ah);
      }
      for (int j = 0; j < dh; ++j) {
        h[static_cast<std::size_t>(j)] =
            (1.0 - z[static_cast<std::size_t>(j)]) * cand[static_cast<std::size_t>(j)] +
            z[static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(j)];
      }
      const Tensor& cw = params.at("fusion.classifier.weight");
      double acc = params.at("fusion.classifier.bias").data[0];
      for (int m = 0; m < dh; ++m) {
        acc += h[static_cast<std::size_t>(m)] * cw.data[static_cast<std::size_t>(m)];
      }
      logits_d[static_cast<std::size_t>(i)] = acc;
    }
  }

  Tensor logits({t_v});
  for (int i = 0; i < t_v; ++i) {
    logits.data[static_cast<std::size_t>(i)] =
        static_cast<float>(logits_d[static_cast<std::size_t>(i)]);
  }
  return logits;
}

StreamComparison compare_streams(std::span<const float> a,
                                 std::span<const float> b, double tol) {
  if (a.size() != b.size()) {
    throw DataError("compare_streams: length mismatch (" +
                    std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  }
  StreamComparison cmp;
  cmp.tolerance = tol;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - b[i]);
    if (d > cmp.max_abs_diff) {
      cmp.max_abs_diff = d;
      cmp.argmax_frame = static_cast<std::int64_t>(i);
    }
  }
  cmp.pass = cmp.max_abs_diff <= tol;
  return cmp;
}

}  // namespace asd::oracle
