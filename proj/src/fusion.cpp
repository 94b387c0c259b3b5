// SPDX-License-Identifier: Apache-2.0
#include "asd/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "asd/errors.hpp"

namespace asd {

ContextConfig::ContextConfig(std::optional<int> p, std::optional<int> f)
    : past(p), future(f) {
  if ((past && *past < 0) || (future && *future < 0)) {
    throw ShapeError("ContextConfig: bounds must be >= 0");
  }
}

ContextMask build_context_mask(int n, const ContextConfig& ctx) {
  if (n <= 0) throw ShapeError("build_context_mask: n must be >= 1");
  ContextMask mask;
  mask.n = n;
  mask.bits.assign(static_cast<std::size_t>(n) * n, 0);
  for (int T = 0; T < n; ++T) {
    const int lo = ctx.past ? std::max(0, T - *ctx.past) : 0;
    const int hi = ctx.future ? std::min(n - 1, T + *ctx.future) : n - 1;
    std::uint8_t* row = mask.bits.data() + static_cast<std::size_t>(T) * n;
    for (int t = lo; t <= hi; ++t) row[t] = 1;
  }
  return mask;
}

namespace {

FusionLayerView bind_layer(const ParameterSet& p, int l, bool rel) {
  const std::string prefix = "fusion.layer" + std::to_string(l);
  FusionLayerView v{};
  v.q_w = &p.at(prefix + ".q.weight");
  v.q_b = &p.at(prefix + ".q.bias");
  v.k_w = &p.at(prefix + ".k.weight");
  v.k_b = &p.at(prefix + ".k.bias");
  v.v_w = &p.at(prefix + ".v.weight");
  v.v_b = &p.at(prefix + ".v.bias");
  v.o_w = &p.at(prefix + ".o.weight");
  v.o_b = &p.at(prefix + ".o.bias");
  v.ff1_w = &p.at(prefix + ".ff1.weight");
  v.ff1_b = &p.at(prefix + ".ff1.bias");
  v.ff2_w = &p.at(prefix + ".ff2.weight");
  v.ff2_b = &p.at(prefix + ".ff2.bias");
  v.norm1_w = &p.at(prefix + ".norm1.weight");
  v.norm1_b = &p.at(prefix + ".norm1.bias");
  v.norm2_w = &p.at(prefix + ".norm2.weight");
  v.norm2_b = &p.at(prefix + ".norm2.bias");
  if (rel) v.rel_bias = &p.at(prefix + ".rel_bias");
  return v;
}

// Banded attention for every head at once. q/k/v are the full [n x d_model]
// projections; out accumulates the concatenated head outputs.
void banded_attention_all_heads(const Tensor& q, const Tensor& k,
                                const Tensor& v, const ContextMask& mask,
                                int n_heads, const Tensor* rel_bias,
                                int rel_range, Tensor& out) {
  const int n = q.dim(0);
  const int dm = q.dim(1);
  const int dh = dm / n_heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  std::vector<float> scores(static_cast<std::size_t>(n));
  std::vector<float> weights(static_cast<std::size_t>(n));
  for (int h = 0; h < n_heads; ++h) {
    const int off = h * dh;
    for (int T = 0; T < n; ++T) {
      const std::uint8_t* mrow = mask.row(T);
      const float* qrow = q.ptr() + static_cast<std::size_t>(T) * dm + off;
      for (int t = 0; t < n; ++t) {
        if (!mrow[t]) continue;
        const float* krow = k.ptr() + static_cast<std::size_t>(t) * dm + off;
        float dot = 0.0f;
        for (int j = 0; j < dh; ++j) dot += qrow[j] * krow[j];
        dot *= scale;
        if (rel_bias) {
          const int rel = std::clamp(t - T, -rel_range, rel_range);
          dot += rel_bias->data[static_cast<std::size_t>(rel + rel_range)];
        }
        scores[static_cast<std::size_t>(t)] = dot;
      }
      masked_softmax_row(scores.data(), mrow, n, weights.data());
      float* orow = out.ptr() + static_cast<std::size_t>(T) * dm + off;
      std::fill(orow, orow + dh, 0.0f);
      for (int t = 0; t < n; ++t) {
        const float w = weights[static_cast<std::size_t>(t)];
        if (w == 0.0f) continue;
        const float* vrow = v.ptr() + static_cast<std::size_t>(t) * dm + off;
        for (int j = 0; j < dh; ++j) orow[j] += w * vrow[j];
      }
    }
  }
}

}  // namespace

FusionView bind_fusion(const ParameterSet& params) {
  const FusionConfig& cfg = params.config.fusion;
  FusionView view;
  view.kind = cfg.kind;
  view.heads = cfg.heads;
  view.d_model = params.config.d_model();
  view.cls_w = &params.at("fusion.classifier.weight");
  view.cls_b = &params.at("fusion.classifier.bias");
  if (cfg.kind == FusionConfig::Kind::transformer) {
    view.rel_pos_range = cfg.rel_pos_bias ? cfg.rel_pos_range : 0;
    for (int l = 0; l < cfg.depth; ++l) {
      view.layers.push_back(bind_layer(params, l, cfg.rel_pos_bias));
    }
  } else {
    view.gru = {&params.at("fusion.gru.wz"), &params.at("fusion.gru.wr"),
                &params.at("fusion.gru.wh"), &params.at("fusion.gru.uz"),
                &params.at("fusion.gru.ur"), &params.at("fusion.gru.uh"),
                &params.at("fusion.gru.bz"), &params.at("fusion.gru.br"),
                &params.at("fusion.gru.bh")};
  }
  return view;
}

Tensor constrained_attention(const Tensor& x, const ContextMask& mask,
                             const FusionLayerView& layer, int head,
                             int n_heads) {
  if (x.rank() != 2) {
    throw ShapeError("constrained_attention: x must be [n x d_model]");
  }
  const int n = x.dim(0);
  const int dm = x.dim(1);
  if (mask.n != n) {
    throw ShapeError("constrained_attention: mask size " +
                     std::to_string(mask.n) + " != sequence length " +
                     std::to_string(n));
  }
  if (dm % n_heads != 0 || head < 0 || head >= n_heads) {
    throw ShapeError("constrained_attention: bad head configuration");
  }
  const Tensor q = dense(x, *layer.q_w, *layer.q_b);
  const Tensor k = dense(x, *layer.k_w, *layer.k_b);
  const Tensor v = dense(x, *layer.v_w, *layer.v_b);

  Tensor all({n, dm});
  banded_attention_all_heads(q, k, v, mask, n_heads, nullptr, 0, all);

  const int dh = dm / n_heads;
  Tensor out({n, dh});
  for (int T = 0; T < n; ++T) {
    std::memcpy(out.ptr() + static_cast<std::size_t>(T) * dh,
                all.ptr() + static_cast<std::size_t>(T) * dm + head * dh,
                sizeof(float) * static_cast<std::size_t>(dh));
  }
  check_finite(out, "constrained_attention");
  return out;
}

Tensor transformer_layer_forward(const Tensor& x, const ContextMask& mask,
                                 const FusionLayerView& layer, int n_heads,
                                 int rel_pos_range) {
  if (x.rank() != 2) {
    throw ShapeError("transformer_layer_forward: x must be [n x d_model]");
  }
  const int n = x.dim(0);
  const int dm = x.dim(1);

  const Tensor n1 = layer_norm(x, *layer.norm1_w, *layer.norm1_b);
  const Tensor q = dense(n1, *layer.q_w, *layer.q_b);
  const Tensor k = dense(n1, *layer.k_w, *layer.k_b);
  const Tensor v = dense(n1, *layer.v_w, *layer.v_b);

  Tensor heads({n, dm});
  banded_attention_all_heads(q, k, v, mask, n_heads, layer.rel_bias,
                             rel_pos_range, heads);
  const Tensor attn = dense(heads, *layer.o_w, *layer.o_b);

  Tensor res = x;
  for (std::size_t i = 0; i < res.data.size(); ++i) res.data[i] += attn.data[i];

  const Tensor n2 = layer_norm(res, *layer.norm2_w, *layer.norm2_b);
  Tensor ff = dense(n2, *layer.ff1_w, *layer.ff1_b);
  relu_inplace(ff.data);
  const Tensor ff2 = dense(ff, *layer.ff2_w, *layer.ff2_b);
  for (std::size_t i = 0; i < res.data.size(); ++i) res.data[i] += ff2.data[i];

  check_finite(res, "transformer_layer_forward");
  return res;
}

Tensor fusion_layers_forward(Tensor x, const ContextMask& mask,
                             const FusionView& fusion) {
  for (const FusionLayerView& layer : fusion.layers) {
    x = transformer_layer_forward(x, mask, layer, fusion.heads,
                                  fusion.rel_pos_range);
  }
  return x;
}

Tensor concat_embeddings(const EmbeddingSequence& e_a,
                         const EmbeddingSequence& e_v) {
  if (e_a.values.dim(0) != e_v.values.dim(0)) {
    throw ShapeError("fusion: audio length " +
                     std::to_string(e_a.values.dim(0)) + " != visual length " +
                     std::to_string(e_v.values.dim(0)));
  }
  const int t = e_a.values.dim(0);
  const int da = e_a.values.dim(1);
  const int dv = e_v.values.dim(1);
  Tensor out({t, da + dv});
  for (int i = 0; i < t; ++i) {
    std::memcpy(out.ptr() + static_cast<std::size_t>(i) * (da + dv),
                e_a.values.ptr() + static_cast<std::size_t>(i) * da,
                sizeof(float) * static_cast<std::size_t>(da));
    std::memcpy(out.ptr() + static_cast<std::size_t>(i) * (da + dv) + da,
                e_v.values.ptr() + static_cast<std::size_t>(i) * dv,
                sizeof(float) * static_cast<std::size_t>(dv));
  }
  return out;
}

Tensor fusion_forward(const EmbeddingSequence& e_a,
                      const EmbeddingSequence& e_v, const ContextConfig& ctx,
                      const ParameterSet& params) {
  const FusionView view = bind_fusion(params);
  if (view.kind != FusionConfig::Kind::transformer) {
    throw ShapeError("fusion_forward: model fusion kind is not transformer");
  }
  Tensor x = concat_embeddings(e_a, e_v);
  const ContextMask mask = build_context_mask(x.dim(0), ctx);
  x = fusion_layers_forward(std::move(x), mask, view);
  Tensor logits = dense(x, *view.cls_w, *view.cls_b);
  logits.shape = {logits.dim(0)};
  return logits;
}

Tensor gru_fusion_forward(const EmbeddingSequence& e_a,
                          const EmbeddingSequence& e_v,
                          const ParameterSet& params) {
  const FusionView view = bind_fusion(params);
  if (view.kind != FusionConfig::Kind::uni_gru) {
    throw ShapeError("gru_fusion_forward: model fusion kind is not gru");
  }
  const Tensor x = concat_embeddings(e_a, e_v);
  const int t = x.dim(0);
  const int dm = x.dim(1);
  const int dh = view.gru.uz->dim(0);

  Tensor h({dh});
  Tensor logits({t});
  for (int i = 0; i < t; ++i) {
    Tensor xi({dm});
    std::memcpy(xi.ptr(), x.ptr() + static_cast<std::size_t>(i) * dm,
                sizeof(float) * static_cast<std::size_t>(dm));
    h = gru_step(xi, h, view.gru);
    const Tensor logit = dense(h, *view.cls_w, *view.cls_b);
    logits.data[static_cast<std::size_t>(i)] = logit.data[0];
  }
  check_finite(logits, "gru_fusion_forward");
  return logits;
}

}  // namespace asd
