// SPDX-License-Identifier: Apache-2.0
#include "asd/streaming.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <cstring>

#include "asd/encoders.hpp"
#include "asd/errors.hpp"

namespace asd {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t us_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() -
                                                               t0)
      .count();
}

// Incremental causal temporal convolution over a stream of frames. Holds the
// last (K-1) input frames, zero-initialized to match the training-time left
// padding. With stride s an output is produced on inputs 0, s, 2s, ...,
// reproducing the offline left_pad = K-1 semantics frame for frame.
struct StreamConv {
  const ConvStage* stage = nullptr;
  int kernel = 1;
  int c_in = 0;
  int c_out = 0;
  int spatial = 1;
  int stride = 1;
  std::vector<float> tail;  // (kernel-1) frames, circular, oldest at head
  std::vector<const float*> window;
  int head = 0;
  std::int64_t count = 0;

  void init(const ConvStage& st, int spatial_, int stride_) {
    stage = &st;
    kernel = st.w->dim(0);
    c_in = st.w->dim(1);
    c_out = st.w->dim(2);
    spatial = spatial_;
    stride = stride_;
    tail.assign(static_cast<std::size_t>(kernel - 1) * c_in * spatial, 0.0f);
    window.assign(static_cast<std::size_t>(kernel), nullptr);
    head = 0;
    count = 0;
  }

  std::size_t frame_elems() const {
    return static_cast<std::size_t>(c_in) * spatial;
  }
  std::size_t tail_bytes() const { return tail.size() * sizeof(float); }

  const float* window_frame(int k, const float* current) const {
    if (k == kernel - 1) return current;
    const int slot = (head + k) % (kernel - 1);
    return tail.data() + static_cast<std::size_t>(slot) * frame_elems();
  }

  // Returns true when an output frame was produced into `out`
  // (c_out * spatial values, conv + per-channel affine applied).
  bool push(const float* frame, std::vector<float>& out) {
    const bool emit = (count % stride) == 0;
    if (emit) {
      out.resize(static_cast<std::size_t>(c_out) * spatial);
      for (int k = 0; k < kernel; ++k) window[k] = window_frame(k, frame);
      detail::tconv_frame(window.data(), kernel, stage->w->ptr(), c_in, c_out,
                          spatial, stage->b->ptr(), out.data());
      for (int co = 0; co < c_out; ++co) {
        const float sc = stage->scale->data[co];
        const float sh = stage->shift->data[co];
        float* dst = out.data() + static_cast<std::size_t>(co) * spatial;
        for (int s = 0; s < spatial; ++s) dst[s] = dst[s] * sc + sh;
      }
    }
    if (kernel > 1) {
      std::memcpy(tail.data() + static_cast<std::size_t>(head) * frame_elems(),
                  frame, frame_elems() * sizeof(float));
      head = (head + 1) % (kernel - 1);
    }
    ++count;
    return emit;
  }
};

// One visual block branch: stateless S_Conv per frame, then the streamed
// temporal conv.
struct VisualBranchStream {
  const EncoderBranch* branch = nullptr;
  int stride = 1;
  StreamConv t_conv;
  std::vector<float> scratch;

  void init(const EncoderBranch& br, int stride_, int out_hw) {
    branch = &br;
    stride = stride_;
    t_conv.init(br.t_conv, out_hw, 1);
  }

  // in: [C_in x H x W], out: [C x H' x W'] (+affine +relu)
  Tensor push(const Tensor& frame) {
    Tensor s = spatial_conv(frame, *branch->stage.w, *branch->stage.b, 1,
                            stride);
    channel_affine_inplace(s, *branch->stage.scale, *branch->stage.shift,
                           false);
    t_conv.push(s.ptr(), scratch);
    Tensor out(s.shape, scratch);
    relu_inplace(out.data);
    return out;
  }
};

struct AudioBranchStream {
  StreamConv stage;
  StreamConv t_conv;
  std::vector<float> mid;

  void init(const EncoderBranch& br, int stride_) {
    stage.init(br.stage, 1, stride_);
    t_conv.init(br.t_conv, 1, 1);
  }

  bool push(const float* frame, std::vector<float>& out) {
    if (!stage.push(frame, mid)) return false;
    t_conv.push(mid.data(), out);
    relu_inplace(out);
    return true;
  }
};

struct AudioBlockStream {
  std::array<AudioBranchStream, 2> branches;
  std::vector<float> other;

  bool push(const float* frame, std::vector<float>& out) {
    const bool a = branches[0].push(frame, out);
    const bool b = branches[1].push(frame, other);
    assert(a == b);
    if (!a || !b) return false;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += other[i];
    return true;
  }
};

}  // namespace

struct StreamSession::Impl {
  const ParameterSet* params = nullptr;
  ContextConfig ctx;
  int depth = 1;
  int t1 = 0;
  int t2 = 0;
  bool gru_mode = false;

  EncoderView visual;
  EncoderView audio;
  FusionView fusion;

  std::vector<std::array<VisualBranchStream, 2>> vblocks;
  std::vector<AudioBlockStream> ablocks;

  int cap = 1;
  int d_model = 0;
  std::vector<float> embed_ring;  // cap x d_model, slot = frame % cap
  std::vector<float> aux_ring;    // cap
  Tensor gru_h;

  std::int64_t frames_seen = 0;
  std::int64_t next_emit = 0;
  bool flushed = false;

  Emission emit(std::int64_t frame, StageTimes times) {
    const auto t0 = Clock::now();
    float logit = 0.0f;
    if (gru_mode) {
      const Tensor out = dense(gru_h, *fusion.cls_w, *fusion.cls_b);
      logit = out.data[0];
    } else {
      const std::int64_t right = frames_seen - 1;
      const std::int64_t lo =
          std::max<std::int64_t>(0, frame - static_cast<std::int64_t>(depth) * t1);
      const int wlen = static_cast<int>(right - lo + 1);
      Tensor window({wlen, d_model});
      for (int i = 0; i < wlen; ++i) {
        const std::int64_t g = lo + i;
        std::memcpy(window.ptr() + static_cast<std::size_t>(i) * d_model,
                    embed_ring.data() +
                        static_cast<std::size_t>(g % cap) * d_model,
                    sizeof(float) * static_cast<std::size_t>(d_model));
      }
      // The window mask clamps exactly where the offline full-sequence mask
      // does for every row the emitted frame depends on.
      const ContextMask mask = build_context_mask(wlen, ctx);
      const Tensor y = fusion_layers_forward(std::move(window), mask, fusion);
      const int e_loc = static_cast<int>(frame - lo);
      Tensor row({d_model});
      std::memcpy(row.ptr(), y.ptr() + static_cast<std::size_t>(e_loc) * d_model,
                  sizeof(float) * static_cast<std::size_t>(d_model));
      const Tensor out = dense(row, *fusion.cls_w, *fusion.cls_b);
      logit = out.data[0];
    }
    times.attention_us += us_since(t0);
    times.total_us = times.frontend_us + times.encoder_us + times.attention_us;

    Emission e;
    e.frame_index = frame;
    e.logit = logit;
    e.probability = sigmoid_scalar(logit);
    e.visual_aux_probability =
        sigmoid_scalar(aux_ring[static_cast<std::size_t>(frame % cap)]);
    e.wall = times;
    return e;
  }
};

StreamSession::StreamSession(const ParameterSet& params,
                             const ContextConfig& ctx)
    : impl_(std::make_unique<Impl>()) {
  if (!ctx.is_bounded()) {
    throw StateError(
        "open_session: streaming requires bounded past and future context");
  }
  params.config.validate();
  Impl& im = *impl_;
  im.params = &params;
  im.ctx = ctx;
  im.t1 = *ctx.past;
  im.t2 = *ctx.future;
  im.depth = params.config.fusion.depth;
  im.gru_mode = params.config.fusion.kind == FusionConfig::Kind::uni_gru;
  im.visual = bind_visual(params);
  im.audio = bind_audio(params);
  im.fusion = bind_fusion(params);
  im.d_model = params.config.d_model();

  const auto& e = params.config.encoder;
  int hw = e.input_hw;
  im.vblocks.resize(static_cast<std::size_t>(e.n_blocks));
  im.ablocks.resize(static_cast<std::size_t>(e.n_blocks));
  for (int i = 0; i < e.n_blocks; ++i) {
    const EncoderBlock& vb = im.visual.blocks[static_cast<std::size_t>(i)];
    const int stride = vb.stage_stride;
    hw = (hw + 2 - 3) / stride + 1;  // S_Conv is 3x3 with pad 1
    for (int k = 0; k < 2; ++k) {
      im.vblocks[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].init(
          vb.branches[static_cast<std::size_t>(k)], stride, hw * hw);
    }
    const EncoderBlock& ab = im.audio.blocks[static_cast<std::size_t>(i)];
    for (int k = 0; k < 2; ++k) {
      im.ablocks[static_cast<std::size_t>(i)]
          .branches[static_cast<std::size_t>(k)]
          .init(ab.branches[static_cast<std::size_t>(k)], ab.stage_stride);
    }
  }

  if (im.gru_mode) {
    im.cap = 1;
    im.t1 = 0;
    im.t2 = 0;
    im.gru_h = Tensor({params.config.fusion.gru_hidden});
  } else {
    im.cap = im.depth * (im.t1 + im.t2) + 1;
  }
  im.embed_ring.assign(static_cast<std::size_t>(im.cap) * im.d_model, 0.0f);
  im.aux_ring.assign(static_cast<std::size_t>(im.cap), 0.0f);
}

StreamSession::~StreamSession() = default;
StreamSession::StreamSession(StreamSession&&) noexcept = default;
StreamSession& StreamSession::operator=(StreamSession&&) noexcept = default;

std::vector<Emission> StreamSession::push(const Tensor& face,
                                          const Tensor& mfcc,
                                          std::int64_t frontend_us) {
  Impl& im = *impl_;
  if (im.flushed) throw StateError("push: session is closed");
  const auto& cfg = im.params->config;
  const int ratio = cfg.audio_rate_ratio();

  Tensor frame = face;
  if (frame.rank() == 2) frame.shape = {1, frame.dim(0), frame.dim(1)};
  if (frame.rank() != 3 || frame.dim(0) != cfg.encoder.in_channels ||
      frame.dim(1) != cfg.encoder.input_hw ||
      frame.dim(2) != cfg.encoder.input_hw) {
    throw ShapeError("push: face frame must be [" +
                     std::to_string(cfg.encoder.in_channels) + " x " +
                     std::to_string(cfg.encoder.input_hw) + " x " +
                     std::to_string(cfg.encoder.input_hw) + "], got " +
                     shape_str(face.shape));
  }
  if (mfcc.rank() != 2 || mfcc.dim(0) != ratio ||
      mfcc.dim(1) != cfg.encoder.mfcc_dim) {
    throw ShapeError("push: expected " + std::to_string(ratio) + " x " +
                     std::to_string(cfg.encoder.mfcc_dim) +
                     " MFCC frames per video frame, got " +
                     shape_str(mfcc.shape));
  }

  StageTimes times;
  times.frontend_us = frontend_us;
  const auto enc0 = Clock::now();

  // Visual path: one frame through every block, then pool + projection.
  for (std::size_t i = 0; i < im.vblocks.size(); ++i) {
    Tensor a = im.vblocks[i][0].push(frame);
    const Tensor b = im.vblocks[i][1].push(frame);
    for (std::size_t j = 0; j < a.data.size(); ++j) a.data[j] += b.data[j];
    frame = std::move(a);
  }
  const Tensor pooled = global_avg_pool(frame);
  const Tensor e_v = dense(pooled, *im.visual.proj_w, *im.visual.proj_b);
  const Tensor aux = dense(e_v, *im.visual.aux_w, *im.visual.aux_b);

  // Audio path: the rate-ratio MFCC frames collapse to one embedding row.
  int audio_rows = 0;
  std::vector<float> buf_in, buf_out;
  for (int r = 0; r < ratio; ++r) {
    buf_in.assign(
        mfcc.ptr() + static_cast<std::size_t>(r) * cfg.encoder.mfcc_dim,
        mfcc.ptr() + static_cast<std::size_t>(r + 1) * cfg.encoder.mfcc_dim);
    bool alive = true;
    for (std::size_t i = 0; i < im.ablocks.size() && alive; ++i) {
      alive = im.ablocks[i].push(buf_in.data(), buf_out);
      if (alive) std::swap(buf_in, buf_out);
    }
    if (alive) {
      ++audio_rows;
      const Tensor feat({static_cast<int>(buf_in.size())},
                        std::vector<float>(buf_in));
      const Tensor e_a = dense(feat, *im.audio.proj_w, *im.audio.proj_b);
      float* slot = im.embed_ring.data() +
                    static_cast<std::size_t>(im.frames_seen % im.cap) *
                        im.d_model;
      std::memcpy(slot, e_a.ptr(),
                  sizeof(float) * static_cast<std::size_t>(e_a.numel()));
      std::memcpy(slot + e_a.numel(), e_v.ptr(),
                  sizeof(float) * static_cast<std::size_t>(e_v.numel()));
    }
  }
  if (audio_rows != 1) {
    throw StateError("push: audio stride chain must emit exactly one row per "
                     "video frame");
  }
  im.aux_ring[static_cast<std::size_t>(im.frames_seen % im.cap)] = aux.data[0];
  im.frames_seen += 1;
  times.encoder_us = us_since(enc0);

  if (im.gru_mode) {
    Tensor row({im.d_model});
    std::memcpy(row.ptr(),
                im.embed_ring.data() +
                    static_cast<std::size_t>((im.frames_seen - 1) % im.cap) *
                        im.d_model,
                sizeof(float) * static_cast<std::size_t>(im.d_model));
    im.gru_h = gru_step(row, im.gru_h, im.fusion.gru);
  }

  std::vector<Emission> out;
  const std::int64_t horizon = static_cast<std::int64_t>(im.depth) * im.t2;
  while (im.next_emit + horizon <= im.frames_seen - 1) {
    out.push_back(im.emit(im.next_emit, times));
    im.next_emit += 1;
  }
  return out;
}

std::vector<Emission> StreamSession::flush() {
  Impl& im = *impl_;
  if (im.flushed) throw StateError("flush: session already flushed");
  im.flushed = true;
  std::vector<Emission> out;
  while (im.next_emit < im.frames_seen) {
    out.push_back(im.emit(im.next_emit, StageTimes{}));
    im.next_emit += 1;
  }
  return out;
}

MemoryFootprint StreamSession::memory_footprint() const {
  const Impl& im = *impl_;
  MemoryFootprint fp;
  for (const auto& block : im.vblocks) {
    for (const auto& branch : block) {
      fp.conv_tail_bytes += branch.t_conv.tail_bytes();
    }
  }
  for (const auto& block : im.ablocks) {
    for (const auto& branch : block.branches) {
      fp.conv_tail_bytes += branch.stage.tail_bytes();
      fp.conv_tail_bytes += branch.t_conv.tail_bytes();
    }
  }
  fp.embed_ring_bytes = static_cast<std::size_t>(im.cap) * im.d_model *
                        sizeof(float);
  fp.aux_ring_bytes = static_cast<std::size_t>(im.cap) * sizeof(float) +
                      im.gru_h.numel() * sizeof(float);
  fp.param_bytes = im.params->total_bytes();
  return fp;
}

std::int64_t StreamSession::frames_seen() const { return impl_->frames_seen; }
std::int64_t StreamSession::next_emit() const { return impl_->next_emit; }
int StreamSession::window_capacity() const { return impl_->cap; }
bool StreamSession::is_open() const { return !impl_->flushed; }

ContextConfig StreamSession::effective_context() const {
  return ContextConfig::bounded(impl_->depth * impl_->t1,
                                impl_->depth * impl_->t2);
}

StreamSession open_session(const ParameterSet& params,
                           const ContextConfig& ctx) {
  return StreamSession(params, ctx);
}

}  // namespace asd
