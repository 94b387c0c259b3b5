// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <doctest.h>

#include "asd/errors.hpp"
#include "asd/fusion.hpp"
#include "asd/model_io.hpp"
#include "asd/oracle.hpp"
#include "test_support.hpp"

using namespace asd;

namespace {

EmbeddingSequence random_embeddings(int t, int d, std::uint64_t seed,
                                    EmbeddingOrigin origin) {
  Xorshift64Star rng(seed);
  return {test::random_tensor({t, d}, rng), origin};
}

ContextConfig unbounded() { return ContextConfig(std::nullopt, std::nullopt); }

}  // namespace

TEST_CASE("build_context_mask: examples") {
  {
    // unbounded past, zero future -> lower triangular
    const ContextMask m = build_context_mask(4, ContextConfig(std::nullopt, 0));
    for (int T = 0; T < 4; ++T) {
      for (int t = 0; t < 4; ++t) {
        CHECK(m.at(T, t) == (t <= T));
      }
    }
  }
  {
    const ContextMask m = build_context_mask(3, ContextConfig::bounded(1, 1));
    for (int T = 0; T < 3; ++T) {
      for (int t = 0; t < 3; ++t) {
        CHECK(m.at(T, t) == (std::abs(T - t) <= 1));
      }
    }
  }
  {
    const ContextMask m = build_context_mask(5, ContextConfig::bounded(0, 0));
    for (int T = 0; T < 5; ++T) {
      for (int t = 0; t < 5; ++t) {
        CHECK(m.at(T, t) == (T == t));
      }
    }
  }
  CHECK_THROWS_AS(build_context_mask(0, ContextConfig::bounded(1, 1)),
                  ShapeError);
}

TEST_CASE("build_context_mask: row ranges are exactly the clamped band") {
  Xorshift64Star rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + static_cast<int>(rng.next() % 40);
    const bool unb_past = (rng.next() & 3) == 0;
    const bool unb_future = (rng.next() & 3) == 0;
    const int t1 = static_cast<int>(rng.next() % 12);
    const int t2 = static_cast<int>(rng.next() % 12);
    const ContextConfig ctx(
        unb_past ? std::nullopt : std::optional<int>(t1),
        unb_future ? std::nullopt : std::optional<int>(t2));
    const ContextMask m = build_context_mask(n, ctx);
    for (int T = 0; T < n; ++T) {
      const int lo = unb_past ? 0 : std::max(0, T - t1);
      const int hi = unb_future ? n - 1 : std::min(n - 1, T + t2);
      for (int t = 0; t < n; ++t) {
        CHECK(m.at(T, t) == (t >= lo && t <= hi));
      }
      CHECK(m.at(T, T));  // diagonal always set
    }
  }
}

TEST_CASE("constrained_attention: single surviving key returns its V row") {
  const ModelConfig cfg = test::small_config();
  const ParameterSet params = init_random(cfg, 5);
  const FusionView fusion = bind_fusion(params);
  const int n = 6, dm = cfg.d_model();
  Xorshift64Star rng(7);
  const Tensor x = test::random_tensor({n, dm}, rng);

  const ContextMask identity = build_context_mask(n, ContextConfig::bounded(0, 0));
  const Tensor v = dense(x, *fusion.layers[0].v_w, *fusion.layers[0].v_b);
  const int dh = dm / fusion.heads;
  for (int h = 0; h < fusion.heads; ++h) {
    const Tensor y = constrained_attention(x, identity, fusion.layers[0], h,
                                           fusion.heads);
    REQUIRE(y.shape == std::vector<int>{n, dh});
    for (int T = 0; T < n; ++T) {
      for (int j = 0; j < dh; ++j) {
        CHECK(y.at2(T, j) == v.at2(T, h * dh + j));  // exact
      }
    }
  }
}

TEST_CASE("constrained_attention: identical keys average the banded V rows") {
  ModelConfig cfg = test::small_config();
  ParameterSet params = init_random(cfg, 6);
  // zero the K projection so all keys coincide and weights become uniform
  params.tensors["fusion.layer0.k.weight"] = Tensor({32, 32});
  params.tensors["fusion.layer0.k.bias"] = Tensor({32});
  const FusionView fusion = bind_fusion(params);

  const int n = 9;
  Xorshift64Star rng(8);
  const Tensor x = test::random_tensor({n, 32}, rng);
  const ContextMask band = build_context_mask(n, ContextConfig::bounded(2, 1));
  const Tensor v = dense(x, *fusion.layers[0].v_w, *fusion.layers[0].v_b);

  const Tensor y = constrained_attention(x, band, fusion.layers[0], 0,
                                         fusion.heads);
  const int dh = 32 / fusion.heads;
  for (int T = 0; T < n; ++T) {
    const int lo = std::max(0, T - 2);
    const int hi = std::min(n - 1, T + 1);
    for (int j = 0; j < dh; ++j) {
      double mean = 0.0;
      for (int t = lo; t <= hi; ++t) mean += v.at2(t, j);
      mean /= (hi - lo + 1);
      CHECK(std::abs(y.at2(T, j) - mean) < 1e-6);
    }
  }
}

TEST_CASE("constrained_attention: matches the brute-force oracle") {
  const ModelConfig cfg = test::small_config();
  const ParameterSet params = init_random(cfg, 9);
  const FusionView fusion = bind_fusion(params);
  Xorshift64Star rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.next() % 16);
    const int t1 = static_cast<int>(rng.next() % 5);
    const int t2 = static_cast<int>(rng.next() % 5);
    const Tensor x = test::random_tensor({n, cfg.d_model()}, rng);
    const ContextMask mask = build_context_mask(n, ContextConfig::bounded(t1, t2));
    for (int h = 0; h < fusion.heads; h += 3) {
      const Tensor fast =
          constrained_attention(x, mask, fusion.layers[0], h, fusion.heads);
      const Tensor slow = oracle::bruteforce_attention(x, mask,
                                                       fusion.layers[0], h,
                                                       fusion.heads);
      CHECK(test::max_abs_diff(fast, slow) < 1e-6);
    }
  }
}

TEST_CASE("bruteforce_attention: n=1 and identity-mask degenerate cases") {
  const ModelConfig cfg = test::small_config();
  const ParameterSet params = init_random(cfg, 12);
  const FusionView fusion = bind_fusion(params);
  Xorshift64Star rng(13);

  const Tensor x1 = test::random_tensor({1, cfg.d_model()}, rng);
  const ContextMask m1 = build_context_mask(1, unbounded());
  const Tensor y1 = oracle::bruteforce_attention(x1, m1, fusion.layers[0], 0,
                                                 fusion.heads);
  const Tensor v1 = dense(x1, *fusion.layers[0].v_w, *fusion.layers[0].v_b);
  for (int j = 0; j < y1.dim(1); ++j) {
    CHECK(y1.at2(0, j) == doctest::Approx(v1.at2(0, j)).epsilon(1e-6));
  }
}

TEST_CASE("transformer_layer_forward: zero input and zero biases stay zero") {
  const ParameterSet params = init_random(test::small_config(), 14);
  const FusionView fusion = bind_fusion(params);
  const int n = 5, dm = 32;
  const ContextMask mask = build_context_mask(n, ContextConfig::bounded(2, 2));
  const Tensor y = transformer_layer_forward(Tensor({n, dm}), mask,
                                             fusion.layers[0], fusion.heads);
  for (float v : y.data) CHECK(v == 0.0f);
}

TEST_CASE("transformer_layer_forward: no positional encoding, identical rows "
          "give identical outputs") {
  const ParameterSet params = init_random(test::small_config(), 15);
  const FusionView fusion = bind_fusion(params);
  Xorshift64Star rng(16);
  Tensor row = test::random_tensor({1, 32}, rng);

  Tensor x({5, 32});
  for (int i = 0; i < 5; ++i) {
    std::memcpy(x.ptr() + static_cast<std::size_t>(i) * 32, row.ptr(),
                32 * sizeof(float));
  }
  const ContextMask id5 = build_context_mask(5, ContextConfig::bounded(0, 0));
  const Tensor y5 = transformer_layer_forward(x, id5, fusion.layers[0],
                                              fusion.heads);
  const ContextMask id1 = build_context_mask(1, ContextConfig::bounded(0, 0));
  const Tensor y1 = transformer_layer_forward(row, id1, fusion.layers[0],
                                              fusion.heads);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 32; ++j) {
      CHECK(y5.at2(i, j) == y1.at2(0, j));
    }
  }
}

TEST_CASE("fusion_forward: shape, band saturation, band causality") {
  const ModelConfig cfg = test::small_config();
  const ParameterSet params = init_random(cfg, 17);
  const int t = 20;
  const EmbeddingSequence e_a =
      random_embeddings(t, 16, 18, EmbeddingOrigin::audio);
  const EmbeddingSequence e_v =
      random_embeddings(t, 16, 19, EmbeddingOrigin::visual);

  const Tensor logits = fusion_forward(e_a, e_v, unbounded(), params);
  CHECK(logits.shape == std::vector<int>{t});

  // a band at least as wide as the sequence equals the unbounded mask
  const Tensor saturated =
      fusion_forward(e_a, e_v, ContextConfig::bounded(t, t), params);
  CHECK(test::max_abs_diff(logits, saturated) == 0.0);

  // L=1: logit[T] is invariant to perturbations outside [T-T1, T+T2]
  const ContextConfig ctx = ContextConfig::bounded(3, 2);
  const Tensor base = fusion_forward(e_a, e_v, ctx, params);
  EmbeddingSequence pert_v = e_v;
  const int hit = 13;
  for (int j = 0; j < 16; ++j) pert_v.values.at2(hit, j) += 2.0f;
  const Tensor moved = fusion_forward(e_a, pert_v, ctx, params);
  for (int T = 0; T < t; ++T) {
    const bool inside = hit >= T - 3 && hit <= T + 2;
    if (inside) continue;
    CHECK(moved.data[static_cast<std::size_t>(T)] ==
          base.data[static_cast<std::size_t>(T)]);
  }
  CHECK(moved.data[hit] != base.data[hit]);

  EmbeddingSequence shorter =
      random_embeddings(t - 1, 16, 20, EmbeddingOrigin::visual);
  CHECK_THROWS_AS(fusion_forward(e_a, shorter, ctx, params), ShapeError);
}

TEST_CASE("fusion_forward: depth-2 band dependence widens to L*T") {
  ModelConfig cfg = test::small_config();
  cfg.fusion.depth = 2;
  const ParameterSet params = init_random(cfg, 21);
  const int t = 24;
  const EmbeddingSequence e_a =
      random_embeddings(t, 16, 22, EmbeddingOrigin::audio);
  const EmbeddingSequence e_v =
      random_embeddings(t, 16, 23, EmbeddingOrigin::visual);
  const ContextConfig ctx = ContextConfig::bounded(2, 1);

  const Tensor base = fusion_forward(e_a, e_v, ctx, params);
  EmbeddingSequence pert = e_v;
  const int hit = 12;
  for (int j = 0; j < 16; ++j) pert.values.at2(hit, j) += 2.0f;
  const Tensor moved = fusion_forward(e_a, pert, ctx, params);
  for (int T = 0; T < t; ++T) {
    const bool inside = hit >= T - 2 * 2 && hit <= T + 2 * 1;
    if (!inside) {
      CHECK(moved.data[static_cast<std::size_t>(T)] ==
            base.data[static_cast<std::size_t>(T)]);
    }
  }
  CHECK(moved.data[hit] != base.data[hit]);
}

TEST_CASE("gru_fusion_forward: base case, causality, scalar-loop oracle") {
  ModelConfig cfg = test::small_config();
  cfg.fusion.kind = FusionConfig::Kind::uni_gru;
  const ParameterSet params = init_random(cfg, 25);

  {
    // T=1 equals one gru_step followed by the classifier
    const EmbeddingSequence a =
        random_embeddings(1, 16, 26, EmbeddingOrigin::audio);
    const EmbeddingSequence v =
        random_embeddings(1, 16, 27, EmbeddingOrigin::visual);
    const Tensor logits = gru_fusion_forward(a, v, params);
    const FusionView fusion = bind_fusion(params);
    const Tensor x = concat_embeddings(a, v);
    Tensor x0({32});
    std::copy(x.data.begin(), x.data.end(), x0.data.begin());
    const Tensor h = gru_step(x0, Tensor({16}), fusion.gru);
    const Tensor ref = dense(h, *fusion.cls_w, *fusion.cls_b);
    CHECK(logits.data[0] == ref.data[0]);
  }

  const int t = 50;
  const EmbeddingSequence a =
      random_embeddings(t, 16, 28, EmbeddingOrigin::audio);
  const EmbeddingSequence v =
      random_embeddings(t, 16, 29, EmbeddingOrigin::visual);
  const Tensor logits = gru_fusion_forward(a, v, params);
  CHECK(logits.shape == std::vector<int>{t});

  // recurrence causality: future perturbations leave the prefix unchanged
  EmbeddingSequence pert = v;
  for (int j = 0; j < 16; ++j) pert.values.at2(30, j) += 1.0f;
  const Tensor moved = gru_fusion_forward(a, pert, params);
  CHECK(std::memcmp(moved.ptr(), logits.ptr(), sizeof(float) * 30) == 0);

  // explicit-loop double reimplementation over the unrolled sequence
  {
    const Tensor x = concat_embeddings(a, v);
    const int dm = 32, dh = 16;
    auto w = [&](const char* n) { return &params.at(n); };
    const Tensor *wz = w("fusion.gru.wz"), *wr = w("fusion.gru.wr"),
                 *wh = w("fusion.gru.wh"), *uz = w("fusion.gru.uz"),
                 *ur = w("fusion.gru.ur"), *uh = w("fusion.gru.uh"),
                 *bz = w("fusion.gru.bz"), *br = w("fusion.gru.br"),
                 *bh = w("fusion.gru.bh");
    std::vector<double> h(dh, 0.0);
    for (int i = 0; i < t; ++i) {
      std::vector<double> z(dh), r(dh), cand(dh);
      for (int j = 0; j < dh; ++j) {
        double az = bz->data[j], ar = br->data[j];
        for (int m = 0; m < dm; ++m) {
          az += static_cast<double>(x.at2(i, m)) * wz->at2(m, j);
          ar += static_cast<double>(x.at2(i, m)) * wr->at2(m, j);
        }
        for (int m = 0; m < dh; ++m) {
          az += h[m] * uz->at2(m, j);
          ar += h[m] * ur->at2(m, j);
        }
        z[j] = 1.0 / (1.0 + std::exp(-az));
        r[j] = 1.0 / (1.0 + std::exp(-ar));
      }
      for (int j = 0; j < dh; ++j) {
        double ah = bh->data[j];
        for (int m = 0; m < dm; ++m) {
          ah += static_cast<double>(x.at2(i, m)) * wh->at2(m, j);
        }
        for (int m = 0; m < dh; ++m) ah += r[m] * h[m] * uh->at2(m, j);
        cand[j] = std::tanh(ah);
      }
      for (int j = 0; j < dh; ++j) h[j] = (1.0 - z[j]) * cand[j] + z[j] * h[j];
      double logit = params.at("fusion.classifier.bias").data[0];
      for (int m = 0; m < dh; ++m) {
        logit += h[m] * params.at("fusion.classifier.weight").data[m];
      }
      CHECK(std::abs(logits.data[static_cast<std::size_t>(i)] - logit) < 1e-6);
    }
  }
}

TEST_CASE("relative position bias: off by default, band respected when on") {
  ModelConfig cfg = test::small_config();
  cfg.fusion.rel_pos_bias = true;
  cfg.fusion.rel_pos_range = 8;
  ParameterSet params = init_random(cfg, 30);
  // give the bias some structure
  Tensor& bias = params.tensors["fusion.layer0.rel_bias"];
  for (int i = 0; i < bias.dim(0); ++i) {
    bias.data[static_cast<std::size_t>(i)] =  0.05f * (i - 8);
  }

  const int t = 16;
  const EmbeddingSequence e_a =
      random_embeddings(t, 16, 31, EmbeddingOrigin::audio);
  const EmbeddingSequence e_v =
      random_embeddings(t, 16, 32, EmbeddingOrigin::visual);
  const ContextConfig ctx = ContextConfig::bounded(3, 2);
  const Tensor with_bias = fusion_forward(e_a, e_v, ctx, params);

  ModelConfig plain_cfg = test::small_config();
  ParameterSet plain = init_random(plain_cfg, 30);
  const Tensor without = fusion_forward(e_a, e_v, ctx, plain);
  CHECK(test::max_abs_diff(with_bias, without) > 0.0);

  // band dependence still holds with the bias enabled
  EmbeddingSequence pert = e_v;
  for (int j = 0; j < 16; ++j) pert.values.at2(10, j) += 2.0f;
  const Tensor moved = fusion_forward(e_a, pert, ctx, params);
  for (int T = 0; T < t; ++T) {
    if (10 < T - 3 || 10 > T + 2) {
      CHECK(moved.data[static_cast<std::size_t>(T)] ==
            with_bias.data[static_cast<std::size_t>(T)]);
    }
  }
}
