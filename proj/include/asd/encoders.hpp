// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "asd/kernels.hpp"
#include "asd/model_io.hpp"
#include "asd/tensor.hpp"

namespace asd {

enum class EmbeddingOrigin { audio, visual, fused };

struct EmbeddingSequence {
  Tensor values;  // [T_v x D]
  EmbeddingOrigin origin = EmbeddingOrigin::fused;
};

// causal: left-only temporal padding (streamable, zero future context);
// symmetric: equal padding on both sides. The symmetric mode exists for the
// receptive-field comparison tests, not as a production path.
enum class PaddingMode { causal, symmetric };

// One conv stage: weights + bias + per-channel affine (the inference-time
// stand-in for a folded batch norm).
struct ConvStage {
  const Tensor* w = nullptr;
  const Tensor* b = nullptr;
  const Tensor* scale = nullptr;
  const Tensor* shift = nullptr;
};

struct EncoderBranch {
  ConvStage stage;   // visual: S_Conv 3x3; audio: temporal 3-tap
  ConvStage t_conv;  // temporal conv, kernel 3 or 5
  int t_kernel = 3;
};

struct EncoderBlock {
  std::array<EncoderBranch, 2> branches;
  int stage_stride = 1;  // spatial stride (visual) or temporal stride (audio)
};

struct EncoderView {
  std::vector<EncoderBlock> blocks;
  const Tensor* proj_w = nullptr;
  const Tensor* proj_b = nullptr;
  const Tensor* aux_w = nullptr;  // visual only
  const Tensor* aux_b = nullptr;
};

EncoderView bind_visual(const ParameterSet& params);
EncoderView bind_audio(const ParameterSet& params);

// Visual encoder: per block, two parallel branches
// {S_Conv -> affine -> T_Conv -> affine -> relu} summed; then global spatial
// average pool and a dense projection to embed_dim. In causal mode output
// row t depends only on frames [t - n_blocks*(k_max-1), t].
EmbeddingSequence visual_forward(const Tensor& frames,
                                 const ParameterSet& params,
                                 PaddingMode mode = PaddingMode::causal);

// Audio encoder: the spatial stage is a temporal 3-tap conv over the 100 Hz
// MFCC axis (cepstral bins as the feature axis); blocks with stride 2
// downsample to one row per video frame.
EmbeddingSequence audio_forward(const Tensor& mfcc, const ParameterSet& params,
                                PaddingMode mode = PaddingMode::causal);

// Auxiliary visual-only head: dense embed_dim -> 1, raw logits.
Tensor visual_aux_score(const EmbeddingSequence& e_v,
                        const ParameterSet& params);

struct ReceptiveField {
  int past = 0;
  int future = 0;
};

// Empirically measures the temporal receptive field of `forward` by
// perturbing one input frame at a time (first axis of `probe` is time) and
// watching the center output row. Offsets whose perturbation moves the
// center row by more than `tol` count as inside the field.
ReceptiveField measure_receptive_field(
    const std::function<Tensor(const Tensor&)>& forward, const Tensor& probe,
    double tol = 1e-7);

}  // namespace asd
