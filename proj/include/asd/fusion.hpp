// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "asd/encoders.hpp"
#include "asd/kernels.hpp"
#include "asd/model_io.hpp"

namespace asd {

// Attention context bounds: past T1 / future T2 frames, nullopt = unbounded.
struct ContextConfig {
  std::optional<int> past;
  std::optional<int> future;

  ContextConfig() = default;
  ContextConfig(std::optional<int> p, std::optional<int> f);  // validates >= 0
  static ContextConfig bounded(int p, int f) { return {p, f}; }

  bool is_bounded() const { return past.has_value() && future.has_value(); }
};

// Banded binary attention mask: bits[T*n + t] == 1 iff
// max(0, T - T1) <= t <= min(n - 1, T + T2). The diagonal is always set.
struct ContextMask {
  int n = 0;
  std::vector<std::uint8_t> bits;

  bool at(int T, int t) const {
    return bits[static_cast<std::size_t>(T) * n + t] != 0;
  }
  const std::uint8_t* row(int T) const {
    return bits.data() + static_cast<std::size_t>(T) * n;
  }
};

ContextMask build_context_mask(int n, const ContextConfig& ctx);

struct FusionLayerView {
  const Tensor *q_w, *q_b, *k_w, *k_b, *v_w, *v_b, *o_w, *o_b;
  const Tensor *ff1_w, *ff1_b, *ff2_w, *ff2_b;
  const Tensor *norm1_w, *norm1_b, *norm2_w, *norm2_b;
  const Tensor* rel_bias = nullptr;  // [2*rel_pos_range + 1] or null
};

struct FusionView {
  FusionConfig::Kind kind = FusionConfig::Kind::transformer;
  std::vector<FusionLayerView> layers;
  const Tensor* cls_w = nullptr;
  const Tensor* cls_b = nullptr;
  int heads = 8;
  int d_model = 256;
  int rel_pos_range = 0;
  GruWeights gru{};
};

FusionView bind_fusion(const ParameterSet& params);

// Single-head banded attention: projects Q/K/V from x, scores scaled by
// 1/sqrt(d_head), softmax restricted to the mask row, weighted sum of V.
// Returns [n x d_head] for the given head.
Tensor constrained_attention(const Tensor& x, const ContextMask& mask,
                             const FusionLayerView& layer, int head,
                             int n_heads);

// Pre-norm residual transformer layer:
// x + MHA(norm1(x)), then + FFN(norm2(.)). No positional encoding.
Tensor transformer_layer_forward(const Tensor& x, const ContextMask& mask,
                                 const FusionLayerView& layer, int n_heads,
                                 int rel_pos_range = 0);

// All transformer layers, no classifier. Shared by the offline forward and
// the streaming window recompute.
Tensor fusion_layers_forward(Tensor x, const ContextMask& mask,
                             const FusionView& fusion);

// Per-frame concatenation f_av = [e_a | e_v].
Tensor concat_embeddings(const EmbeddingSequence& e_a,
                         const EmbeddingSequence& e_v);

// Full fusion path: concat -> L transformer layers under the banded mask ->
// classifier dense. Returns per-frame logits [T_v].
Tensor fusion_forward(const EmbeddingSequence& e_a,
                      const EmbeddingSequence& e_v, const ContextConfig& ctx,
                      const ParameterSet& params);

// Uni-directional GRU fusion baseline: logit[t] depends only on frames 0..t.
Tensor gru_fusion_forward(const EmbeddingSequence& e_a,
                          const EmbeddingSequence& e_v,
                          const ParameterSet& params);

}  // namespace asd
