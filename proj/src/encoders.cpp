// SPDX-License-Identifier: Apache-2.0
#include "asd/encoders.hpp"

#include <cmath>
#include <string>

#include "asd/errors.hpp"

namespace asd {

namespace {

ConvStage bind_stage(const ParameterSet& p, const std::string& prefix) {
  return {&p.at(prefix + ".weight"), &p.at(prefix + ".bias"),
          &p.at(prefix + ".scale"), &p.at(prefix + ".shift")};
}

EncoderView bind_encoder(const ParameterSet& p, bool visual) {
  const char* path = visual ? "visual" : "audio";
  const auto& e = p.config.encoder;
  EncoderView view;
  view.blocks.resize(static_cast<std::size_t>(e.n_blocks));
  for (int i = 0; i < e.n_blocks; ++i) {
    EncoderBlock& block = view.blocks[static_cast<std::size_t>(i)];
    block.stage_stride = visual ? e.spatial_strides[static_cast<std::size_t>(i)]
                                : e.audio_strides[static_cast<std::size_t>(i)];
    for (int k = 0; k < 2; ++k) {
      const std::string prefix = std::string(path) + ".block" +
                                 std::to_string(i) + ".branch" +
                                 std::to_string(k);
      EncoderBranch& br = block.branches[static_cast<std::size_t>(k)];
      br.stage = bind_stage(p, prefix + ".s_conv");
      br.t_conv = bind_stage(p, prefix + ".t_conv");
      br.t_kernel = e.branch_kernels[static_cast<std::size_t>(k)];
    }
  }
  view.proj_w = &p.at(std::string(path) + ".proj.weight");
  view.proj_b = &p.at(std::string(path) + ".proj.bias");
  if (visual) {
    view.aux_w = &p.at("visual.aux.weight");
    view.aux_b = &p.at("visual.aux.bias");
  }
  return view;
}

void temporal_pads(int kernel, PaddingMode mode, int* left, int* right) {
  if (mode == PaddingMode::causal) {
    *left = kernel - 1;
    *right = 0;
  } else {
    *left = (kernel - 1) / 2;
    *right = (kernel - 1) / 2;
  }
}

// x: [T x C x S] (S = flattened spatial extent, 1 for audio).
Tensor branch_temporal(const Tensor& x, const EncoderBranch& br,
                       PaddingMode mode) {
  int left = 0, right = 0;
  temporal_pads(br.t_kernel, mode, &left, &right);
  Tensor y = temporal_conv(x, *br.t_conv.w, *br.t_conv.b, left, right, 1);
  channel_affine_inplace(y, *br.t_conv.scale, *br.t_conv.shift, true);
  relu_inplace(y.data);
  return y;
}

void add_into(Tensor& acc, const Tensor& other) {
  for (std::size_t i = 0; i < acc.data.size(); ++i) {
    acc.data[i] += other.data[i];
  }
}

}  // namespace

EncoderView bind_visual(const ParameterSet& params) {
  return bind_encoder(params, true);
}

EncoderView bind_audio(const ParameterSet& params) {
  return bind_encoder(params, false);
}

EmbeddingSequence visual_forward(const Tensor& frames,
                                 const ParameterSet& params,
                                 PaddingMode mode) {
  if (frames.rank() != 4) {
    throw ShapeError("visual_forward: input must be [T x C x H x W], got " +
                     shape_str(frames.shape));
  }
  const EncoderView view = bind_visual(params);
  Tensor x = frames;
  for (const EncoderBlock& block : view.blocks) {
    Tensor block_out;
    for (int k = 0; k < 2; ++k) {
      const EncoderBranch& br = block.branches[static_cast<std::size_t>(k)];
      Tensor s = spatial_conv(x, *br.stage.w, *br.stage.b, 1,
                              block.stage_stride);
      channel_affine_inplace(s, *br.stage.scale, *br.stage.shift, true);
      // Flatten H x W for the temporal stage; same memory layout.
      const std::vector<int> spatial_shape = s.shape;
      s.shape = {spatial_shape[0], spatial_shape[1],
                 spatial_shape[2] * spatial_shape[3]};
      Tensor y = branch_temporal(s, br, mode);
      y.shape = {spatial_shape[0], y.dim(1), spatial_shape[2],
                 spatial_shape[3]};
      if (k == 0) {
        block_out = std::move(y);
      } else {
        add_into(block_out, y);
      }
    }
    x = std::move(block_out);
  }
  Tensor pooled = global_avg_pool(x);
  EmbeddingSequence seq;
  seq.values = dense(pooled, *view.proj_w, *view.proj_b);
  seq.origin = EmbeddingOrigin::visual;
  return seq;
}

EmbeddingSequence audio_forward(const Tensor& mfcc, const ParameterSet& params,
                                PaddingMode mode) {
  if (mfcc.rank() != 2) {
    throw ShapeError("audio_forward: input must be [T_a x mfcc_dim], got " +
                     shape_str(mfcc.shape));
  }
  const int ratio = params.config.audio_rate_ratio();
  if (mfcc.dim(0) % ratio != 0) {
    throw ShapeError("audio_forward: T_a " + std::to_string(mfcc.dim(0)) +
                     " not divisible by the rate ratio " +
                     std::to_string(ratio));
  }
  const EncoderView view = bind_audio(params);
  Tensor x = mfcc;
  for (const EncoderBlock& block : view.blocks) {
    Tensor block_out;
    for (int k = 0; k < 2; ++k) {
      const EncoderBranch& br = block.branches[static_cast<std::size_t>(k)];
      int left = 0, right = 0;
      temporal_pads(br.stage.w->dim(0), mode, &left, &right);
      Tensor s = temporal_conv(x, *br.stage.w, *br.stage.b, left, right,
                               block.stage_stride);
      channel_affine_inplace(s, *br.stage.scale, *br.stage.shift, true);
      Tensor y = branch_temporal(s, br, mode);
      if (k == 0) {
        block_out = std::move(y);
      } else {
        add_into(block_out, y);
      }
    }
    x = std::move(block_out);
  }
  EmbeddingSequence seq;
  seq.values = dense(x, *view.proj_w, *view.proj_b);
  seq.origin = EmbeddingOrigin::audio;
  return seq;
}

Tensor visual_aux_score(const EmbeddingSequence& e_v,
                        const ParameterSet& params) {
  if (e_v.origin != EmbeddingOrigin::visual) {
    throw ShapeError("visual_aux_score: embeddings must come from the visual "
                     "encoder");
  }
  const EncoderView view = bind_visual(params);
  Tensor scores = dense(e_v.values, *view.aux_w, *view.aux_b);
  scores.shape = {scores.dim(0)};  // [T x 1] -> [T]
  return scores;
}

ReceptiveField measure_receptive_field(
    const std::function<Tensor(const Tensor&)>& forward, const Tensor& probe,
    double tol) {
  if (probe.rank() < 1 || probe.dim(0) < 3) {
    throw ShapeError("measure_receptive_field: probe too short");
  }
  const int t = probe.dim(0);
  const std::size_t frame_elems = probe.numel() / static_cast<std::size_t>(t);

  const Tensor base_out = forward(probe);
  const int t_out = base_out.dim(0);
  const int center_out = t_out / 2;
  // Map the output center row back to the input rate (1:1 for the encoders
  // tested here; guards against internal downsampling).
  const int rate = t / t_out;
  const int center_in = center_out * rate;
  const std::size_t out_row = base_out.numel() / static_cast<std::size_t>(t_out);
  const float* base_row = base_out.ptr() + center_out * out_row;

  int past = 0, future = 0;
  for (int f = 0; f < t; ++f) {
    Tensor perturbed = probe;
    float* frame = perturbed.ptr() + static_cast<std::size_t>(f) * frame_elems;
    for (std::size_t i = 0; i < frame_elems; ++i) frame[i] += 0.75f;
    const Tensor out = forward(perturbed);
    const float* row = out.ptr() + center_out * out_row;
    double diff = 0.0;
    for (std::size_t i = 0; i < out_row; ++i) {
      diff = std::max(diff, std::abs(static_cast<double>(row[i]) - base_row[i]));
    }
    if (diff > tol) {
      if (f <= center_in) past = std::max(past, center_in - f);
      if (f > center_in) future = std::max(future, f - center_in);
    }
  }
  return {past, future};
}

}  // namespace asd
