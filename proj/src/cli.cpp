// SPDX-License-Identifier: Apache-2.0
#include "asd/cli.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "asd/cost_model.hpp"
#include "asd/errors.hpp"
#include "asd/frontend.hpp"
#include "asd/io.hpp"
#include "asd/metrics.hpp"
#include "asd/model_io.hpp"
#include "asd/oracle.hpp"
#include "asd/rng.hpp"
#include "asd/streaming.hpp"

namespace asd::cli {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t us_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() -
                                                               t0)
      .count();
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// "N" or "inf" -> single bound; "A:B" -> inclusive range.
struct RangeArg {
  std::optional<int> lo;  // nullopt = unbounded ("inf")
  std::optional<int> hi;
  bool is_range = false;
};

RangeArg parse_range(const std::string& text, const char* flag) {
  RangeArg r;
  const auto colon = text.find(':');
  auto parse_one = [&](const std::string& s) -> std::optional<int> {
    if (s == "inf" || s == "unbounded") return std::nullopt;
    try {
      const int v = std::stoi(s);
      if (v < 0) throw DataError(std::string(flag) + " must be >= 0");
      return v;
    } catch (const std::invalid_argument&) {
      throw DataError(std::string(flag) + ": cannot parse '" + s + "'");
    } catch (const std::out_of_range&) {
      throw DataError(std::string(flag) + ": value out of range");
    }
  };
  if (colon == std::string::npos) {
    r.lo = parse_one(text);
    r.hi = r.lo;
  } else {
    r.is_range = true;
    r.lo = parse_one(text.substr(0, colon));
    r.hi = parse_one(text.substr(colon + 1));
    if (!r.lo || !r.hi) {
      throw DataError(std::string(flag) + ": ranges must be bounded");
    }
  }
  return r;
}

void write_scores_csv(const std::string& path,
                      const std::vector<Emission>& emissions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "frame_index,score\n";
  char buf[64];
  for (const Emission& e : emissions) {
    std::snprintf(buf, sizeof(buf), "%lld,%.9g",
                  static_cast<long long>(e.frame_index),
                  static_cast<double>(e.probability));
    out << buf << "\n";
  }
}

void write_timings_csv(const std::string& path,
                       const std::vector<Emission>& emissions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "frame_index,frontend_us,encoder_us,attention_us,total_us\n";
  for (const Emission& e : emissions) {
    out << e.frame_index << "," << e.wall.frontend_us << ","
        << e.wall.encoder_us << "," << e.wall.attention_us << ","
        << e.wall.total_us << "\n";
  }
}

Tensor mfcc_slice(const Tensor& frames, std::size_t row, int count) {
  const int dim = frames.dim(1);
  Tensor out({count, dim});
  std::copy(frames.data.begin() + row * dim,
            frames.data.begin() + (row + count) * dim, out.data.begin());
  return out;
}

ContextConfig resolve_ctx(const ParameterSet& params,
                          const std::optional<int>& past,
                          const std::optional<int>& future) {
  return ContextConfig::bounded(past.value_or(params.config.ctx_past),
                                future.value_or(params.config.ctx_future));
}

// ---- init ------------------------------------------------------------

int cmd_init(const std::string& config_path, std::uint64_t seed,
             const std::string& out_path) {
  ModelConfig cfg;
  if (!config_path.empty()) {
    cfg = ModelConfig::from_json(read_text_file(config_path));
  }
  cfg.validate();
  const ParameterSet params = init_random(cfg, seed);
  save_weights(params, out_path);
  std::size_t count = params.tensors.size();
  std::cout << "wrote " << out_path << " (" << count << " tensors, "
            << params.total_bytes() << " bytes of weights)\n";
  return 0;
}

// ---- infer (streaming) -------------------------------------------------

struct FrameInput {
  std::int64_t index = 0;
  Tensor face;
  Tensor mfcc;
  std::int64_t frontend_us = 0;
};

class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t cap) : cap_(cap) {}

  void push(FrameInput item) {
    std::unique_lock lk(mu_);
    cv_space_.wait(lk, [&] { return q_.size() < cap_; });
    q_.push_back(std::move(item));
    cv_data_.notify_one();
  }

  bool pop(FrameInput& item) {
    std::unique_lock lk(mu_);
    cv_data_.wait(lk, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return false;
    item = std::move(q_.front());
    q_.pop_front();
    cv_space_.notify_one();
    return true;
  }

  void close() {
    std::lock_guard lk(mu_);
    closed_ = true;
    cv_data_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_data_, cv_space_;
  std::deque<FrameInput> q_;
  std::size_t cap_;
  bool closed_ = false;
};

int cmd_infer(const std::string& model_path, const std::string& audio_path,
              const std::string& faces_path, std::optional<int> past,
              std::optional<int> future, const std::string& out_path,
              const std::string& timings_path, bool pipeline, bool offline) {
  const ParameterSet params = load_weights(model_path);
  const ContextConfig ctx = resolve_ctx(params, past, future);
  const auto& enc = params.config.encoder;
  const auto& fe = params.config.frontend;

  const auto fr0 = Clock::now();
  const io::WavData wav = io::read_wav(audio_path);
  if (wav.sample_rate != fe.sample_rate) {
    throw DataError(audio_path + ": expected " +
                    std::to_string(fe.sample_rate) + " Hz, got " +
                    std::to_string(wav.sample_rate));
  }
  const frontend::MfccSequence mfcc =
      frontend::compute_mfcc(wav.samples, frontend::MfccConfig::from(fe));
  const std::int64_t mfcc_us = us_since(fr0);

  const std::vector<frontend::U8Image> raw = io::read_facestream(faces_path);
  const int ratio = params.config.audio_rate_ratio();
  const std::size_t n = frontend::align_counts(
      static_cast<std::size_t>(mfcc.frames.dim(0)), raw.size(), ratio);
  const std::int64_t mfcc_us_per_frame =
      mfcc_us / static_cast<std::int64_t>(n);

  std::vector<Emission> emissions;
  emissions.reserve(n);

  if (offline) {
    // Oracle path: batch frontend, full-sequence reference forward.
    frontend::FaceFrameSequence faces = frontend::preprocess_faces(
        std::span(raw.data(), n), enc.input_hw, enc.input_hw, fe.fps,
        fe.face_mean, fe.face_std);
    frontend::MfccSequence audio = mfcc;
    {
      Tensor trimmed({static_cast<int>(n) * ratio, audio.frames.dim(1)});
      std::copy(audio.frames.data.begin(),
                audio.frames.data.begin() + trimmed.numel(),
                trimmed.data.begin());
      audio.frames = std::move(trimmed);
    }
    const auto enc0 = Clock::now();
    const Tensor logits = oracle::offline_forward(audio, faces, ctx, params);
    const std::int64_t fwd_us = us_since(enc0);
    for (std::size_t i = 0; i < n; ++i) {
      Emission e;
      e.frame_index = static_cast<std::int64_t>(i);
      e.logit = logits.data[i];
      e.probability = 1.0f / (1.0f + std::exp(-e.logit));
      e.wall.frontend_us = mfcc_us_per_frame;
      e.wall.encoder_us = fwd_us / static_cast<std::int64_t>(n);  // amortized
      e.wall.total_us = e.wall.frontend_us + e.wall.encoder_us;
      emissions.push_back(e);
    }
  } else {
    StreamSession session = open_session(params, ctx);
    auto preprocess = [&](std::size_t t) {
      FrameInput item;
      const auto t0 = Clock::now();
      item.index = static_cast<std::int64_t>(t);
      item.face = frontend::preprocess_face_frame(
          raw[t], enc.input_hw, enc.input_hw, fe.face_mean, fe.face_std);
      item.mfcc = mfcc_slice(mfcc.frames, t * ratio, ratio);
      item.frontend_us = us_since(t0) + mfcc_us_per_frame;
      return item;
    };
    if (pipeline) {
      // Frontend worker feeds the model worker through a bounded queue;
      // emission order and values are identical to the single-threaded path.
      BoundedQueue queue(8);
      std::thread producer([&] {
        for (std::size_t t = 0; t < n; ++t) queue.push(preprocess(t));
        queue.close();
      });
      FrameInput item;
      while (queue.pop(item)) {
        auto out = session.push(item.face, item.mfcc, item.frontend_us);
        emissions.insert(emissions.end(), out.begin(), out.end());
      }
      producer.join();
    } else {
      for (std::size_t t = 0; t < n; ++t) {
        const FrameInput item = preprocess(t);
        auto out = session.push(item.face, item.mfcc, item.frontend_us);
        emissions.insert(emissions.end(), out.begin(), out.end());
      }
    }
    auto tail = session.flush();
    emissions.insert(emissions.end(), tail.begin(), tail.end());
  }

  write_scores_csv(out_path, emissions);
  if (!timings_path.empty()) write_timings_csv(timings_path, emissions);
  std::cout << "emitted " << emissions.size() << " frames to " << out_path
            << "\n";
  return 0;
}

// ---- verify ------------------------------------------------------------

int cmd_verify(const std::string& model_path, int frames, std::uint64_t seed,
               std::optional<int> past, std::optional<int> future,
               double tol) {
  ParameterSet params;
  if (!model_path.empty()) {
    params = load_weights(model_path);
  } else {
    params = init_random(ModelConfig{}, seed);
  }
  const ContextConfig ctx = resolve_ctx(params, past, future);
  const auto& enc = params.config.encoder;
  const int ratio = params.config.audio_rate_ratio();

  // Synthetic aligned streams from the documented PRNG.
  Xorshift64Star rng(seed ^ 0xA5A5A5A5A5A5A5A5ull);
  frontend::MfccSequence mfcc;
  mfcc.frames = Tensor({frames * ratio, enc.mfcc_dim});
  for (float& v : mfcc.frames.data) v = rng.uniform(-1.0f, 1.0f);

  std::vector<frontend::U8Image> raw(static_cast<std::size_t>(frames));
  for (auto& img : raw) {
    img.h = enc.input_hw;
    img.w = enc.input_hw;
    img.pixels.resize(static_cast<std::size_t>(enc.input_hw) * enc.input_hw);
    for (auto& px : img.pixels) px = rng.byte();
  }
  const frontend::FaceFrameSequence faces = frontend::preprocess_faces(
      raw, enc.input_hw, enc.input_hw, params.config.frontend.fps,
      params.config.frontend.face_mean, params.config.frontend.face_std);

  // Streaming pass.
  StreamSession session = open_session(params, ctx);
  std::vector<float> streamed(static_cast<std::size_t>(frames));
  const std::size_t face_elems = faces.frames.numel() / frames;
  for (int t = 0; t < frames; ++t) {
    Tensor face({1, enc.input_hw, enc.input_hw});
    std::copy(faces.frames.data.begin() + t * face_elems,
              faces.frames.data.begin() + (t + 1) * face_elems,
              face.data.begin());
    const Tensor m = mfcc_slice(mfcc.frames, static_cast<std::size_t>(t) * ratio,
                                ratio);
    for (const Emission& e : session.push(face, m)) {
      streamed[static_cast<std::size_t>(e.frame_index)] = e.logit;
    }
  }
  for (const Emission& e : session.flush()) {
    streamed[static_cast<std::size_t>(e.frame_index)] = e.logit;
  }

  // Reference pass.
  const Tensor offline = oracle::offline_forward(mfcc, faces, ctx, params);

  const oracle::StreamComparison cmp =
      oracle::compare_streams(streamed, offline.data, tol);
  std::printf("verify: frames=%d past=%s future=%s max_abs_diff=%.3g", frames,
              ctx.past ? std::to_string(*ctx.past).c_str() : "inf",
              ctx.future ? std::to_string(*ctx.future).c_str() : "inf",
              cmp.max_abs_diff);
  if (cmp.argmax_frame >= 0) {
    std::printf(" at frame=%lld", static_cast<long long>(cmp.argmax_frame));
  }
  std::printf(" tol=%.3g: %s\n", tol, cmp.pass ? "PASS" : "FAIL");
  return cmp.pass ? 0 : 3;
}

// ---- cost --------------------------------------------------------------

int cmd_cost(const std::string& past_arg, const std::string& future_arg,
             double fps, std::uint64_t bytes_per_frame,
             const std::string& kind_arg, int encoder_future,
             const std::string& out_path) {
  cost::CostConfig cfg;
  cfg.fps = fps;
  cfg.bytes_per_frame = bytes_per_frame;
  cfg.encoder_future = encoder_future;
  if (kind_arg == "transformer") {
    cfg.kind = cost::FusionKind::transformer;
  } else if (kind_arg == "uni-gru") {
    cfg.kind = cost::FusionKind::uni_gru;
  } else if (kind_arg == "bi-gru") {
    cfg.kind = cost::FusionKind::bi_gru;
  } else {
    throw DataError("cost: unknown --kind '" + kind_arg + "'");
  }

  const RangeArg past = parse_range(past_arg, "--past");
  const RangeArg future = parse_range(future_arg, "--future");

  if (past.is_range || future.is_range) {
    if (!past.lo || !past.hi || !future.lo || !future.hi) {
      throw DataError("cost: sweep ranges must be bounded");
    }
    const auto rows =
        cost::sweep_grid(*past.lo, *past.hi, *future.lo, *future.hi, cfg);
    const std::string csv = cost::grid_csv(rows);
    if (out_path.empty()) {
      std::cout << csv;
    } else {
      std::ofstream out(out_path, std::ios::trunc);
      if (!out) throw DataError("cannot open " + out_path + " for writing");
      out << csv;
      std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
    }
    return 0;
  }

  cfg.fusion_ctx = ContextConfig(past.lo, future.lo);
  std::cout << "latency_ms=" << cost::format_latency(cost::latency_ms(cfg))
            << " memory=" << cost::format_memory(cost::memory_bytes(cfg))
            << "\n";
  return 0;
}

// ---- eval --------------------------------------------------------------

int cmd_eval(const std::string& scores_path, const std::string& labels_path,
             const std::string& group_col) {
  const auto scores = metrics::read_scores_csv(scores_path);
  const auto labels = metrics::read_labels_csv(labels_path, group_col);
  const auto rows = metrics::join_frames(scores, labels);
  if (group_col.empty()) {
    std::vector<double> s;
    std::vector<std::uint8_t> l;
    for (const auto& r : rows) {
      s.push_back(r.score);
      l.push_back(r.label);
    }
    std::printf("ap=%.6f frames=%zu\n", metrics::average_precision(s, l),
                rows.size());
  } else {
    const auto res = metrics::map_over_groups(rows);
    std::printf("map=%.6f groups=%d skipped=%d\n", res.map, res.groups_scored,
                res.groups_skipped);
  }
  return 0;
}

// ---- mfcc --------------------------------------------------------------

int cmd_mfcc(const std::string& audio_path, const std::string& out_path) {
  const io::WavData wav = io::read_wav(audio_path);
  frontend::MfccConfig cfg;
  if (wav.sample_rate != cfg.sample_rate) {
    throw DataError(audio_path + ": expected " +
                    std::to_string(cfg.sample_rate) + " Hz, got " +
                    std::to_string(wav.sample_rate));
  }
  const frontend::MfccSequence seq = frontend::compute_mfcc(wav.samples, cfg);
  const std::string meta = "{\"container\":\"mfcc\",\"hop_seconds\":0.01,"
                           "\"window_seconds\":0.025,\"sample_rate\":16000}";
  save_tensor_container(out_path, meta, {{"mfcc", seq.frames}});
  std::cout << "wrote " << seq.frames.dim(0) << " x " << seq.frames.dim(1)
            << " MFCC frames to " << out_path << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"asd - streaming audio-visual active speaker detection engine"};
  app.require_subcommand(1);

  int exit_code = 0;

  // init
  auto* init = app.add_subcommand("init", "Initialize a random model file");
  std::string init_config, init_out;
  std::uint64_t init_seed = 0;
  init->add_option("--config", init_config, "Model config JSON path");
  init->add_option("--seed", init_seed, "PRNG seed")->default_val(0);
  init->add_option("--out", init_out, "Output .asdw path")->required();
  init->callback([&] { exit_code = cmd_init(init_config, init_seed, init_out); });

  // infer / infer-offline
  std::string inf_model, inf_audio, inf_faces, inf_out, inf_timings;
  std::optional<int> inf_past, inf_future;
  bool inf_pipeline = false;
  auto add_infer_flags = [&](CLI::App* sub) {
    sub->add_option("--model", inf_model, "Model .asdw path")->required();
    sub->add_option("--audio", inf_audio, "WAV input (PCM16 mono 16 kHz)")
        ->required();
    sub->add_option("--faces", inf_faces, ".facestream input")->required();
    sub->add_option("--past", inf_past, "Past context T1 (frames)");
    sub->add_option("--future", inf_future, "Future context T2 (frames)");
    sub->add_option("--out", inf_out, "Scores CSV output")->required();
    sub->add_option("--timings", inf_timings, "Per-frame timings CSV output");
  };
  auto* infer = app.add_subcommand("infer", "Streaming inference");
  add_infer_flags(infer);
  infer->add_flag("--pipeline", inf_pipeline,
                  "Run frontend and model on separate workers");
  infer->callback([&] {
    exit_code = cmd_infer(inf_model, inf_audio, inf_faces, inf_past,
                          inf_future, inf_out, inf_timings, inf_pipeline,
                          false);
  });
  auto* infer_off =
      app.add_subcommand("infer-offline", "Full-sequence reference inference");
  add_infer_flags(infer_off);
  infer_off->callback([&] {
    exit_code = cmd_infer(inf_model, inf_audio, inf_faces, inf_past,
                          inf_future, inf_out, inf_timings, false, true);
  });

  // verify
  auto* verify = app.add_subcommand(
      "verify", "Check streaming output against the offline reference");
  std::string ver_model;
  int ver_frames = 200;
  std::uint64_t ver_seed = 0;
  std::optional<int> ver_past, ver_future;
  double ver_tol = 1e-5;
  verify->add_option("--model", ver_model,
                     "Model .asdw path (default: random model from --seed)");
  verify->add_option("--frames", ver_frames, "Stream length")->default_val(200);
  verify->add_option("--seed", ver_seed, "Seed for the synthetic stream")
      ->default_val(0);
  verify->add_option("--past", ver_past, "Past context T1");
  verify->add_option("--future", ver_future, "Future context T2");
  verify->add_option("--tol", ver_tol, "Comparison tolerance")
      ->default_val(1e-5);
  verify->callback([&] {
    exit_code =
        cmd_verify(ver_model, ver_frames, ver_seed, ver_past, ver_future,
                   ver_tol);
  });

  // cost
  auto* cost_cmd =
      app.add_subcommand("cost", "Latency/memory cost model and sweeps");
  std::string cost_past = "32", cost_future = "8", cost_kind = "transformer";
  std::string cost_out;
  double cost_fps = 25.0;
  std::uint64_t cost_bpf = 524288;
  int cost_enc_future = 0;
  cost_cmd->add_option("--past", cost_past, "Past frames: N, A:B, or inf");
  cost_cmd->add_option("--future", cost_future,
                       "Future frames: N, A:B, or inf");
  cost_cmd->add_option("--fps", cost_fps, "Video frame rate")->default_val(25.0);
  cost_cmd->add_option("--bytes-per-frame", cost_bpf,
                       "Stored bytes per retained frame")
      ->default_val(524288);
  cost_cmd->add_option("--kind", cost_kind,
                       "Fusion kind: transformer, uni-gru, bi-gru");
  cost_cmd->add_option("--encoder-future", cost_enc_future,
                       "Encoder future context (frames)")
      ->default_val(0);
  cost_cmd->add_option("--out", cost_out, "Grid CSV output (sweep mode)");
  cost_cmd->callback([&] {
    exit_code = cmd_cost(cost_past, cost_future, cost_fps, cost_bpf, cost_kind,
                         cost_enc_future, cost_out);
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Average precision over scores");
  std::string eval_scores, eval_labels, eval_group;
  eval_cmd->add_option("--scores", eval_scores, "Scores CSV")->required();
  eval_cmd->add_option("--labels", eval_labels, "Labels CSV")->required();
  eval_cmd->add_option("--group-col", eval_group,
                       "Group column name in the labels CSV");
  eval_cmd->callback(
      [&] { exit_code = cmd_eval(eval_scores, eval_labels, eval_group); });

  // mfcc
  auto* mfcc_cmd = app.add_subcommand("mfcc", "Dump MFCC features for a WAV");
  std::string mfcc_audio, mfcc_out;
  mfcc_cmd->add_option("--audio", mfcc_audio, "WAV input")->required();
  mfcc_cmd->add_option("--out", mfcc_out, "Output tensor container")
      ->required();
  mfcc_cmd->callback([&] { exit_code = cmd_mfcc(mfcc_audio, mfcc_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}

}  // namespace asd::cli
