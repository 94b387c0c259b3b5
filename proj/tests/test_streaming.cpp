// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <doctest.h>

#include "asd/errors.hpp"
#include "asd/frontend.hpp"
#include "asd/oracle.hpp"
#include "asd/streaming.hpp"
#include "test_support.hpp"

using namespace asd;

namespace {

struct SyntheticStream {
  frontend::MfccSequence mfcc;
  frontend::FaceFrameSequence faces;
};

SyntheticStream make_stream(const ModelConfig& cfg, int frames,
                            std::uint64_t seed) {
  Xorshift64Star rng(seed);
  SyntheticStream s;
  const int ratio = cfg.audio_rate_ratio();
  s.mfcc.frames = test::random_tensor({frames * ratio, cfg.encoder.mfcc_dim},
                                      rng);
  s.faces.frames = test::random_tensor(
      {frames, cfg.encoder.in_channels, cfg.encoder.input_hw,
       cfg.encoder.input_hw},
      rng, -2.0f, 2.0f);
  return s;
}

Tensor face_at(const SyntheticStream& s, int t) {
  const auto& f = s.faces.frames;
  Tensor out({f.dim(1), f.dim(2), f.dim(3)});
  const std::size_t n = out.numel();
  std::copy(f.data.begin() + t * n, f.data.begin() + (t + 1) * n,
            out.data.begin());
  return out;
}

Tensor mfcc_at(const SyntheticStream& s, int t, int ratio) {
  const auto& m = s.mfcc.frames;
  Tensor out({ratio, m.dim(1)});
  const std::size_t n = out.numel();
  std::copy(m.data.begin() + t * n, m.data.begin() + (t + 1) * n,
            out.data.begin());
  return out;
}

// Run a full stream; emissions keyed by frame index.
std::vector<Emission> run_stream(const ParameterSet& params,
                                 const SyntheticStream& s,
                                 const ContextConfig& ctx,
                                 std::vector<std::int64_t>* emit_at_push =
                                     nullptr) {
  StreamSession session = open_session(params, ctx);
  const int frames = s.faces.frames.dim(0);
  const int ratio = params.config.audio_rate_ratio();
  std::vector<Emission> all;
  for (int t = 0; t < frames; ++t) {
    auto out = session.push(face_at(s, t), mfcc_at(s, t, ratio));
    for (auto& e : out) {
      if (emit_at_push) emit_at_push->push_back(t);
      all.push_back(e);
    }
  }
  auto tail = session.flush();
  all.insert(all.end(), tail.begin(), tail.end());
  return all;
}

}  // namespace

TEST_CASE("open_session: ring capacity and context validation") {
  const ParameterSet params = init_random(test::small_config(), 1);
  CHECK(open_session(params, ContextConfig::bounded(32, 8)).window_capacity() ==
        41);
  CHECK(open_session(params, ContextConfig::bounded(1, 1)).window_capacity() ==
        3);
  CHECK_THROWS_AS(open_session(params, ContextConfig(std::nullopt, 0)),
                  StateError);
  CHECK_THROWS_AS(open_session(params, ContextConfig(3, std::nullopt)),
                  StateError);
}

TEST_CASE("open_session: depth scales the ring capacity and context") {
  ModelConfig cfg = test::small_config();
  cfg.fusion.depth = 2;
  const ParameterSet params = init_random(cfg, 1);
  const StreamSession session = open_session(params, ContextConfig::bounded(3, 2));
  CHECK(session.window_capacity() == 11);
  CHECK(*session.effective_context().past == 6);
  CHECK(*session.effective_context().future == 4);
}

TEST_CASE("push: emission latency is exactly T2 frames") {
  const ParameterSet params = init_random(test::small_config(), 2);
  const SyntheticStream s = make_stream(params.config, 12, 3);
  const ContextConfig ctx = ContextConfig::bounded(2, 3);

  StreamSession session = open_session(params, ctx);
  for (int t = 0; t < 12; ++t) {
    const auto out = session.push(face_at(s, t), mfcc_at(s, t, 4));
    if (t < 3) {
      CHECK(out.empty());  // first T2 pushes emit nothing
    } else {
      REQUIRE(out.size() == 1);
      CHECK(out[0].frame_index == t - 3);  // frame T emitted on push T+T2
      CHECK(out[0].probability ==
            doctest::Approx(1.0f / (1.0f + std::exp(-out[0].logit))));
      CHECK(out[0].visual_aux_probability >= 0.0f);
      CHECK(out[0].visual_aux_probability <= 1.0f);
    }
    CHECK(session.next_emit() == std::max(0, t + 1 - 3));
  }
}

TEST_CASE("flush: emits exactly the pending tail, then closes") {
  const ParameterSet params = init_random(test::small_config(), 4);
  const SyntheticStream s = make_stream(params.config, 10, 5);

  {
    StreamSession session = open_session(params, ContextConfig::bounded(3, 3));
    for (int t = 0; t < 10; ++t) {
      session.push(face_at(s, t), mfcc_at(s, t, 4));
    }
    const auto tail = session.flush();
    REQUIRE(tail.size() == 3);
    CHECK(tail[0].frame_index == 7);
    CHECK(tail[1].frame_index == 8);
    CHECK(tail[2].frame_index == 9);
    CHECK_THROWS_AS(session.flush(), StateError);
    CHECK_THROWS_AS(session.push(face_at(s, 0), mfcc_at(s, 0, 4)), StateError);
  }
  {
    // future = 0: everything already emitted, flush is empty
    StreamSession session = open_session(params, ContextConfig::bounded(3, 0));
    for (int t = 0; t < 10; ++t) {
      session.push(face_at(s, t), mfcc_at(s, t, 4));
    }
    CHECK(session.flush().empty());
  }
}

TEST_CASE("push: input validation") {
  const ParameterSet params = init_random(test::small_config(), 6);
  const SyntheticStream s = make_stream(params.config, 2, 7);
  StreamSession session = open_session(params, ContextConfig::bounded(1, 1));
  Xorshift64Star rng(8);
  CHECK_THROWS_AS(
      session.push(face_at(s, 0), test::random_tensor({3, 13}, rng)),
      ShapeError);
  CHECK_THROWS_AS(
      session.push(test::random_tensor({1, 8, 8}, rng), mfcc_at(s, 0, 4)),
      ShapeError);
}

TEST_CASE("streaming equals the offline oracle") {
  const ModelConfig cfg = test::small_config();
  for (std::uint64_t seed : {0ull, 1ull}) {
    const ParameterSet params = init_random(cfg, seed);
    for (int frames : {30, 85}) {
      const SyntheticStream s = make_stream(cfg, frames, seed * 100 + frames);
      for (auto [t1, t2] : {std::pair{3, 3}, {2, 0}, {0, 2}}) {
        const ContextConfig ctx = ContextConfig::bounded(t1, t2);
        const auto emissions = run_stream(params, s, ctx);
        REQUIRE(static_cast<int>(emissions.size()) == frames);
        std::vector<float> streamed(static_cast<std::size_t>(frames));
        for (const auto& e : emissions) {
          streamed[static_cast<std::size_t>(e.frame_index)] = e.logit;
        }
        const Tensor offline =
            oracle::offline_forward(s.mfcc, s.faces, ctx, params);
        const auto cmp = oracle::compare_streams(streamed, offline.data, 1e-5);
        INFO("seed=", seed, " frames=", frames, " ctx=(", t1, ",", t2,
             ") diff=", cmp.max_abs_diff, " at ", cmp.argmax_frame);
        CHECK(cmp.pass);
      }
    }
  }
}

TEST_CASE("streaming equals the oracle at depth 2") {
  ModelConfig cfg = test::small_config();
  cfg.fusion.depth = 2;
  const ParameterSet params = init_random(cfg, 11);
  const SyntheticStream s = make_stream(cfg, 40, 12);
  const ContextConfig ctx = ContextConfig::bounded(3, 2);
  const auto emissions = run_stream(params, s, ctx);
  REQUIRE(emissions.size() == 40);
  // depth-2 latency: frame 0 emitted after 1 + depth*T2 pushes
  CHECK(emissions[0].frame_index == 0);
  std::vector<float> streamed(40);
  for (const auto& e : emissions) {
    streamed[static_cast<std::size_t>(e.frame_index)] = e.logit;
  }
  const Tensor offline = oracle::offline_forward(s.mfcc, s.faces, ctx, params);
  const auto cmp = oracle::compare_streams(streamed, offline.data, 1e-5);
  INFO("depth2 diff=", cmp.max_abs_diff);
  CHECK(cmp.pass);
}

TEST_CASE("streaming equals the oracle with relative-position bias enabled") {
  ModelConfig cfg = test::small_config();
  cfg.fusion.rel_pos_bias = true;
  cfg.fusion.rel_pos_range = 16;
  ParameterSet params = init_random(cfg, 33);
  Tensor& bias = params.tensors["fusion.layer0.rel_bias"];
  for (int i = 0; i < bias.dim(0); ++i) {
    bias.data[static_cast<std::size_t>(i)] = 0.03f * (i - 16);
  }
  const SyntheticStream s = make_stream(cfg, 45, 34);
  const ContextConfig ctx = ContextConfig::bounded(4, 3);
  const auto emissions = run_stream(params, s, ctx);
  std::vector<float> streamed(45);
  for (const auto& e : emissions) {
    streamed[static_cast<std::size_t>(e.frame_index)] = e.logit;
  }
  const Tensor offline = oracle::offline_forward(s.mfcc, s.faces, ctx, params);
  const auto cmp = oracle::compare_streams(streamed, offline.data, 1e-5);
  INFO("relbias diff=", cmp.max_abs_diff);
  CHECK(cmp.pass);
}

TEST_CASE("gru sessions stream with zero latency and match the oracle") {
  ModelConfig cfg = test::small_config();
  cfg.fusion.kind = FusionConfig::Kind::uni_gru;
  const ParameterSet params = init_random(cfg, 13);
  const SyntheticStream s = make_stream(cfg, 25, 14);

  StreamSession session = open_session(params, ContextConfig::bounded(0, 0));
  std::vector<float> streamed;
  for (int t = 0; t < 25; ++t) {
    const auto out = session.push(face_at(s, t), mfcc_at(s, t, 4));
    REQUIRE(out.size() == 1);
    CHECK(out[0].frame_index == t);
    streamed.push_back(out[0].logit);
  }
  CHECK(session.flush().empty());

  const Tensor offline = oracle::offline_forward(
      s.mfcc, s.faces, ContextConfig::bounded(0, 0), params);
  CHECK(oracle::compare_streams(streamed, offline.data, 1e-5).pass);
}

TEST_CASE("memory_footprint: embed ring accounting and constancy") {
  const ParameterSet def = init_random(ModelConfig{}, 0);
  {
    StreamSession session = open_session(def, ContextConfig::bounded(32, 8));
    const MemoryFootprint fp = session.memory_footprint();
    CHECK(fp.embed_ring_bytes == 41u * 256u * 4u);  // 41,984 bytes
    CHECK(fp.total() == fp.conv_tail_bytes + fp.embed_ring_bytes +
                            fp.aux_ring_bytes + fp.param_bytes);
    CHECK(fp.param_bytes == def.total_bytes());
  }
  {
    StreamSession session = open_session(def, ContextConfig::bounded(1, 1));
    CHECK(session.memory_footprint().embed_ring_bytes == 3u * 256u * 4u);
  }

  // footprint must not move as the stream runs
  const ModelConfig cfg = test::small_config();
  const ParameterSet params = init_random(cfg, 15);
  const SyntheticStream s = make_stream(cfg, 30, 16);
  StreamSession session = open_session(params, ContextConfig::bounded(4, 2));
  const std::size_t t0 = session.memory_footprint().total();
  for (int t = 0; t < 30; ++t) {
    session.push(face_at(s, t), mfcc_at(s, t, 4));
    CHECK(session.memory_footprint().total() == t0);
  }
}

TEST_CASE("determinism: identical streams give bit-identical emissions") {
  const ModelConfig cfg = test::small_config();
  const ParameterSet params = init_random(cfg, 17);
  const SyntheticStream s = make_stream(cfg, 20, 18);
  const ContextConfig ctx = ContextConfig::bounded(3, 2);
  const auto a = run_stream(params, s, ctx);
  const auto b = run_stream(params, s, ctx);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].frame_index == b[i].frame_index);
    CHECK(std::memcmp(&a[i].logit, &b[i].logit, sizeof(float)) == 0);
    CHECK(std::memcmp(&a[i].visual_aux_probability,
                      &b[i].visual_aux_probability, sizeof(float)) == 0);
  }
}

TEST_CASE("aux head scores ride along with emissions") {
  const ModelConfig cfg = test::small_config();
  const ParameterSet params = init_random(cfg, 19);
  const SyntheticStream s = make_stream(cfg, 8, 20);
  const auto emissions = run_stream(params, s, ContextConfig::bounded(2, 1));

  // recompute the aux probabilities offline
  const EmbeddingSequence e_v = visual_forward(s.faces.frames, params);
  const Tensor aux = visual_aux_score(e_v, params);
  for (const auto& e : emissions) {
    const float expect =
        1.0f / (1.0f + std::exp(-aux.data[static_cast<std::size_t>(
                   e.frame_index)]));
    CHECK(e.visual_aux_probability == doctest::Approx(expect).epsilon(1e-5));
  }
}
