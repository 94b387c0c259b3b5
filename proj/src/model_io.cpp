// SPDX-License-Identifier: Apache-2.0
#include "asd/model_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "asd/errors.hpp"
#include "asd/rng.hpp"

namespace asd {

using nlohmann::json;

int ModelConfig::audio_rate_ratio() const {
  int r = 1;
  for (int s : encoder.audio_strides) r *= s;
  return r;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw DataError("config: " + m); };
  const auto& e = encoder;
  if (e.n_blocks < 1) fail("n_blocks must be >= 1");
  if (static_cast<int>(e.channels.size()) != e.n_blocks)
    fail("channels must list one width per block");
  if (static_cast<int>(e.spatial_strides.size()) != e.n_blocks)
    fail("spatial_strides must list one stride per block");
  if (static_cast<int>(e.audio_strides.size()) != e.n_blocks)
    fail("audio_strides must list one stride per block");
  for (int c : e.channels)
    if (c < 1) fail("channel widths must be positive");
  for (int s : e.spatial_strides)
    if (s < 1) fail("spatial strides must be positive");
  for (int s : e.audio_strides)
    if (s < 1) fail("audio strides must be positive");
  for (int k : e.branch_kernels)
    if (k < 1 || k % 2 == 0) fail("branch kernels must be odd and positive");
  if (e.embed_dim < 1) fail("embed_dim must be positive");
  if (e.input_hw < 4) fail("input_hw too small");
  if (e.in_channels < 1) fail("in_channels must be positive");
  if (e.mfcc_dim < 1) fail("mfcc_dim must be positive");

  const auto& f = fusion;
  if (f.depth < 1) fail("fusion depth must be >= 1");
  if (f.heads < 1) fail("fusion heads must be >= 1");
  if (d_model() % f.heads != 0) fail("d_model must be divisible by heads");
  if (f.d_ff < 1) fail("d_ff must be positive");
  if (f.gru_hidden < 1) fail("gru_hidden must be positive");
  if (f.rel_pos_range < 0) fail("rel_pos_range must be >= 0");

  if (frontend.sample_rate < 1) fail("sample_rate must be positive");
  if (frontend.fps <= 0) fail("fps must be positive");
  if (ctx_past < 0 || ctx_future < 0) fail("context defaults must be >= 0");
}

std::string ModelConfig::to_json() const {
  json j;
  j["encoder"] = {{"n_blocks", encoder.n_blocks},
                  {"branch_kernels", encoder.branch_kernels},
                  {"channels", encoder.channels},
                  {"embed_dim", encoder.embed_dim},
                  {"input_hw", encoder.input_hw},
                  {"in_channels", encoder.in_channels},
                  {"spatial_strides", encoder.spatial_strides},
                  {"audio_strides", encoder.audio_strides},
                  {"mfcc_dim", encoder.mfcc_dim}};
  j["fusion"] = {
      {"kind",
       fusion.kind == FusionConfig::Kind::transformer ? "transformer" : "gru"},
      {"depth", fusion.depth},
      {"heads", fusion.heads},
      {"d_ff", fusion.d_ff},
      {"gru_hidden", fusion.gru_hidden},
      {"rel_pos_bias", fusion.rel_pos_bias},
      {"rel_pos_range", fusion.rel_pos_range}};
  j["frontend"] = {{"sample_rate", frontend.sample_rate},
                   {"window_ms", frontend.window_ms},
                   {"hop_ms", frontend.hop_ms},
                   {"mel_bands", frontend.mel_bands},
                   {"preemphasis", frontend.preemphasis},
                   {"fps", frontend.fps},
                   {"face_mean", frontend.face_mean},
                   {"face_std", frontend.face_std}};
  j["context"] = {{"past", ctx_past}, {"future", ctx_future}};
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("config: invalid JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      if (e.contains("n_blocks")) cfg.encoder.n_blocks = e["n_blocks"];
      if (e.contains("branch_kernels"))
        cfg.encoder.branch_kernels = e["branch_kernels"];
      if (e.contains("channels"))
        cfg.encoder.channels = e["channels"].get<std::vector<int>>();
      if (e.contains("embed_dim")) cfg.encoder.embed_dim = e["embed_dim"];
      if (e.contains("input_hw")) cfg.encoder.input_hw = e["input_hw"];
      if (e.contains("in_channels"))
        cfg.encoder.in_channels = e["in_channels"];
      if (e.contains("spatial_strides"))
        cfg.encoder.spatial_strides =
            e["spatial_strides"].get<std::vector<int>>();
      if (e.contains("audio_strides"))
        cfg.encoder.audio_strides = e["audio_strides"].get<std::vector<int>>();
      if (e.contains("mfcc_dim")) cfg.encoder.mfcc_dim = e["mfcc_dim"];
    }
    if (j.contains("fusion")) {
      const auto& f = j["fusion"];
      if (f.contains("kind")) {
        const std::string kind = f["kind"];
        if (kind == "transformer") {
          cfg.fusion.kind = FusionConfig::Kind::transformer;
        } else if (kind == "gru" || kind == "uni-gru") {
          cfg.fusion.kind = FusionConfig::Kind::uni_gru;
        } else {
          throw DataError("config: unknown fusion kind '" + kind + "'");
        }
      }
      if (f.contains("depth")) cfg.fusion.depth = f["depth"];
      if (f.contains("heads")) cfg.fusion.heads = f["heads"];
      if (f.contains("d_ff")) cfg.fusion.d_ff = f["d_ff"];
      if (f.contains("gru_hidden")) cfg.fusion.gru_hidden = f["gru_hidden"];
      if (f.contains("rel_pos_bias"))
        cfg.fusion.rel_pos_bias = f["rel_pos_bias"];
      if (f.contains("rel_pos_range"))
        cfg.fusion.rel_pos_range = f["rel_pos_range"];
    }
    if (j.contains("frontend")) {
      const auto& f = j["frontend"];
      if (f.contains("sample_rate"))
        cfg.frontend.sample_rate = f["sample_rate"];
      if (f.contains("window_ms")) cfg.frontend.window_ms = f["window_ms"];
      if (f.contains("hop_ms")) cfg.frontend.hop_ms = f["hop_ms"];
      if (f.contains("mel_bands")) cfg.frontend.mel_bands = f["mel_bands"];
      if (f.contains("preemphasis"))
        cfg.frontend.preemphasis = f["preemphasis"];
      if (f.contains("fps")) cfg.frontend.fps = f["fps"];
      if (f.contains("face_mean")) cfg.frontend.face_mean = f["face_mean"];
      if (f.contains("face_std")) cfg.frontend.face_std = f["face_std"];
    }
    if (j.contains("context")) {
      const auto& c = j["context"];
      if (c.contains("past")) cfg.ctx_past = c["past"];
      if (c.contains("future")) cfg.ctx_future = c["future"];
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("config: bad field: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

int conv_fan_in(const std::vector<int>& shape, bool spatial) {
  // temporal [K x C_in x C_out]: K*C_in; spatial [C_out x C_in x Kh x Kw]:
  // C_in*Kh*Kw
  return spatial ? shape[1] * shape[2] * shape[3] : shape[0] * shape[1];
}

void add_stage(std::vector<TensorSpec>& out, const std::string& prefix,
               std::vector<int> w_shape, int c_out, bool spatial) {
  out.push_back({prefix + ".weight", w_shape, InitKind::weight,
                 conv_fan_in(w_shape, spatial)});
  out.push_back({prefix + ".bias", {c_out}, InitKind::bias, 1});
  out.push_back({prefix + ".scale", {c_out}, InitKind::scale, 1});
  out.push_back({prefix + ".shift", {c_out}, InitKind::bias, 1});
}

void add_dense(std::vector<TensorSpec>& out, const std::string& prefix,
               int d_in, int d_out) {
  out.push_back({prefix + ".weight", {d_in, d_out}, InitKind::weight, d_in});
  out.push_back({prefix + ".bias", {d_out}, InitKind::bias, 1});
}

}  // namespace

std::vector<TensorSpec> required_tensors(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<TensorSpec> specs;
  const auto& e = cfg.encoder;

  for (const char* path : {"visual", "audio"}) {
    const bool visual = std::strcmp(path, "visual") == 0;
    int c_in = visual ? e.in_channels : e.mfcc_dim;
    for (int i = 0; i < e.n_blocks; ++i) {
      const int c = e.channels[static_cast<std::size_t>(i)];
      for (int k = 0; k < 2; ++k) {
        const std::string prefix = std::string(path) + ".block" +
                                   std::to_string(i) + ".branch" +
                                   std::to_string(k);
        if (visual) {
          add_stage(specs, prefix + ".s_conv", {c, c_in, 3, 3}, c, true);
        } else {
          add_stage(specs, prefix + ".s_conv", {3, c_in, c}, c, false);
        }
        add_stage(specs, prefix + ".t_conv",
                  {e.branch_kernels[static_cast<std::size_t>(k)], c, c}, c,
                  false);
      }
      c_in = c;
    }
    add_dense(specs, std::string(path) + ".proj", e.channels.back(),
              e.embed_dim);
    if (visual) add_dense(specs, "visual.aux", e.embed_dim, 1);
  }

  const auto& f = cfg.fusion;
  const int dm = cfg.d_model();
  if (f.kind == FusionConfig::Kind::transformer) {
    for (int l = 0; l < f.depth; ++l) {
      const std::string prefix = "fusion.layer" + std::to_string(l);
      add_dense(specs, prefix + ".q", dm, dm);
      add_dense(specs, prefix + ".k", dm, dm);
      add_dense(specs, prefix + ".v", dm, dm);
      add_dense(specs, prefix + ".o", dm, dm);
      add_dense(specs, prefix + ".ff1", dm, f.d_ff);
      add_dense(specs, prefix + ".ff2", f.d_ff, dm);
      specs.push_back({prefix + ".norm1.weight", {dm}, InitKind::scale, 1});
      specs.push_back({prefix + ".norm1.bias", {dm}, InitKind::bias, 1});
      specs.push_back({prefix + ".norm2.weight", {dm}, InitKind::scale, 1});
      specs.push_back({prefix + ".norm2.bias", {dm}, InitKind::bias, 1});
      if (f.rel_pos_bias) {
        specs.push_back({prefix + ".rel_bias",
                         {2 * f.rel_pos_range + 1},
                         InitKind::bias,
                         1});
      }
    }
    add_dense(specs, "fusion.classifier", dm, 1);
  } else {
    const int dh = f.gru_hidden;
    for (const char* g : {"wz", "wr", "wh"}) {
      specs.push_back(
          {std::string("fusion.gru.") + g, {dm, dh}, InitKind::weight, dm});
    }
    for (const char* g : {"uz", "ur", "uh"}) {
      specs.push_back(
          {std::string("fusion.gru.") + g, {dh, dh}, InitKind::weight, dh});
    }
    for (const char* g : {"bz", "br", "bh"}) {
      specs.push_back({std::string("fusion.gru.") + g, {dh}, InitKind::bias, 1});
    }
    add_dense(specs, "fusion.classifier", dh, 1);
  }
  return specs;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw DataError("missing tensor " + name);
  return it->second;
}

std::size_t ParameterSet::total_bytes() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.numel() * sizeof(float);
  return n;
}

ParameterSet init_random(const ModelConfig& cfg, std::uint64_t seed) {
  ParameterSet params;
  params.config = cfg;
  Xorshift64Star rng(seed);
  for (const TensorSpec& spec : required_tensors(cfg)) {
    Tensor t(spec.shape);
    switch (spec.kind) {
      case InitKind::weight: {
        const float bound = 1.0f / std::sqrt(static_cast<float>(spec.fan_in));
        for (float& v : t.data) v = rng.uniform(-bound, bound);
        break;
      }
      case InitKind::bias:
        break;  // zero
      case InitKind::scale:
        for (float& v : t.data) v = 1.0f;
        break;
    }
    params.tensors.emplace(spec.name, std::move(t));
  }
  return params;
}

namespace {

constexpr char kMagic[4] = {'A', 'S', 'D', 'W'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(buf, v);
}

struct Reader {
  std::string data;
  std::size_t pos = 0;

  bool eof() const { return pos >= data.size(); }
  void need(std::size_t n, const char* what) {
    if (pos + n > data.size())
      throw DataError(std::string("weights file truncated reading ") + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(data[pos++]);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint8_t>(data[pos]) |
                      (static_cast<std::uint16_t>(
                           static_cast<std::uint8_t>(data[pos + 1]))
                       << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[pos + i]))
           << (8 * i);
    }
    pos += 4;
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

void write_container(const std::string& path, const std::string& config_json,
                     const std::vector<std::pair<std::string, Tensor>>& items) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kFormatVersion);
  put_u32(buf, static_cast<std::uint32_t>(config_json.size()));
  buf.append(config_json);
  for (const auto& [name, t] : items) {
    if (name.size() > 0xffff) throw DataError("tensor name too long: " + name);
    put_u16(buf, static_cast<std::uint16_t>(name.size()));
    buf.append(name);
    buf.push_back(static_cast<char>(t.rank()));
    for (int d : t.shape) put_u32(buf, static_cast<std::uint32_t>(d));
    buf.reserve(buf.size() + t.numel() * 4);
    for (float v : t.data) put_f32(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("short write to " + path);
}

std::pair<std::string, std::vector<std::pair<std::string, Tensor>>>
read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  Reader r;
  r.data.assign(std::istreambuf_iterator<char>(in),
                std::istreambuf_iterator<char>());

  if (r.bytes(4, "magic") != std::string(kMagic, 4))
    throw DataError("bad magic in " + path);
  const std::uint32_t version = r.u32("version");
  if (version != kFormatVersion)
    throw DataError("unsupported weights format version " +
                    std::to_string(version));
  const std::uint32_t cfg_len = r.u32("config length");
  std::string config_json = r.bytes(cfg_len, "config text");

  std::vector<std::pair<std::string, Tensor>> items;
  while (!r.eof()) {
    const std::uint16_t name_len = r.u16("name length");
    std::string name = r.bytes(name_len, "tensor name");
    const int rank = r.u8("rank");
    std::vector<int> shape(static_cast<std::size_t>(rank));
    for (int i = 0; i < rank; ++i) {
      shape[static_cast<std::size_t>(i)] = static_cast<int>(r.u32("dims"));
    }
    const std::size_t n = Tensor::numel_of(shape);
    Tensor t(shape);
    r.need(n * 4, "tensor data");
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = r.u32("tensor data");
      std::memcpy(&t.data[i], &bits, 4);
    }
    items.emplace_back(std::move(name), std::move(t));
  }
  return {std::move(config_json), std::move(items)};
}

}  // namespace

void save_tensor_container(
    const std::string& path, const std::string& config_json,
    const std::vector<std::pair<std::string, Tensor>>& tensors) {
  write_container(path, config_json, tensors);
}

std::pair<std::string, std::vector<std::pair<std::string, Tensor>>>
load_tensor_container(const std::string& path) {
  return read_container(path);
}

void save_weights(const ParameterSet& params, const std::string& path) {
  std::vector<std::pair<std::string, Tensor>> items;
  for (const TensorSpec& spec : required_tensors(params.config)) {
    items.emplace_back(spec.name, params.at(spec.name));
  }
  write_container(path, params.config.to_json(), items);
}

ParameterSet load_weights(const std::string& path) {
  auto [config_json, items] = read_container(path);
  ParameterSet params;
  params.config = ModelConfig::from_json(config_json);

  for (auto& [name, t] : items) {
    if (params.tensors.count(name))
      throw DataError("duplicate tensor " + name + " in " + path);
    params.tensors.emplace(name, std::move(t));
  }

  std::set<std::string> expected;
  for (const TensorSpec& spec : required_tensors(params.config)) {
    expected.insert(spec.name);
    auto it = params.tensors.find(spec.name);
    if (it == params.tensors.end())
      throw DataError("missing tensor " + spec.name);
    if (it->second.shape != spec.shape) {
      throw DataError("tensor " + spec.name + " has shape " +
                      shape_str(it->second.shape) + ", config requires " +
                      shape_str(spec.shape));
    }
  }
  for (const auto& [name, t] : params.tensors) {
    if (!expected.count(name))
      throw DataError("unexpected tensor " + name + " in " + path);
  }
  return params;
}

}  // namespace asd
