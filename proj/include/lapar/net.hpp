#pragma once

// The coefficient predictor: a lightweight residual network mapping a
// single-channel LR image to an HR-resolution stack of L combination
// coefficients.
//
// Architecture: weight-normalized 3x3 head conv (1 -> C); M local fusion
// blocks, each four weight-normalized 3x3 convs with leaky-relu(0.1), dense
// concatenation of the four intermediate features, a 1x1 fusion conv back to
// C, and a local residual add; tail conv to L*s^2 channels, pixel shuffle
// (omitted at s = 1), then two 3x3 convs at HR emitting the coefficients.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lapar/assembly.hpp"
#include "lapar/serialize.hpp"
#include "lapar/tensor.hpp"

namespace lapar {

struct ModelConfig {
  int channels = 32;  // C
  int blocks = 4;     // M
  int L = 72;
  int k = 5;
  int scale = 2;      // 1 for denoise/deblock
  Task task = Task::Sr;

  bool operator==(const ModelConfig&) const = default;
};

inline ModelConfig model_preset(const std::string& name) {
  ModelConfig c;
  if (name == "lapar-a") {
    c.channels = 32;
    c.blocks = 4;
  } else if (name == "lapar-b") {
    c.channels = 24;
    c.blocks = 3;
  } else if (name == "lapar-c") {
    c.channels = 16;
    c.blocks = 2;
  } else {
    throw std::invalid_argument("unknown model preset '" + name + "'");
  }
  return c;
}

inline void validate_config(const ModelConfig& c) {
  if (c.channels < 1 || c.blocks < 0 || c.L < 1 || c.k < 1 || c.k % 2 == 0)
    throw std::invalid_argument("invalid model config");
  if (c.scale < 1 || c.scale > 4) throw std::invalid_argument("scale must be in {1,2,3,4}");
  if (c.task != Task::Sr && c.scale != 1)
    throw std::invalid_argument("non-SR tasks require scale 1");
}

inline std::string task_name(Task t) {
  switch (t) {
    case Task::Sr: return "sr";
    case Task::Denoise: return "denoise";
    case Task::Deblock: return "deblock";
  }
  return "sr";
}

inline Task task_from_name(const std::string& s) {
  if (s == "sr") return Task::Sr;
  if (s == "denoise") return Task::Denoise;
  if (s == "deblock") return Task::Deblock;
  throw std::invalid_argument("unknown task '" + s + "'");
}

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"channels", c.channels}, {"blocks", c.blocks}, {"L", c.L},
          {"k", c.k},               {"scale", c.scale},   {"task", task_name(c.task)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("preset")) c = model_preset(j.at("preset").get<std::string>());
  if (j.contains("channels")) c.channels = j.at("channels").get<int>();
  if (j.contains("blocks")) c.blocks = j.at("blocks").get<int>();
  if (j.contains("L")) c.L = j.at("L").get<int>();
  if (j.contains("k")) c.k = j.at("k").get<int>();
  if (j.contains("scale")) c.scale = j.at("scale").get<int>();
  if (j.contains("task")) c.task = task_from_name(j.at("task").get<std::string>());
  validate_config(c);
  return c;
}

// ---- layer layout ----------------------------------------------------------

struct LayerShape {
  std::string name;  // layer path; parameter tensors are name.direction/.gain/.bias
  int cout = 0, cin = 0, kh = 0, kw = 0;
};

inline std::vector<LayerShape> layer_shapes(const ModelConfig& c) {
  validate_config(c);
  std::vector<LayerShape> ls;
  ls.push_back({"head", c.channels, 1, 3, 3});
  for (int m = 0; m < c.blocks; ++m) {
    for (int j = 0; j < 4; ++j)
      ls.push_back({"lfb" + std::to_string(m) + ".conv" + std::to_string(j), c.channels,
                    c.channels, 3, 3});
    ls.push_back({"lfb" + std::to_string(m) + ".fuse", c.channels, 4 * c.channels, 1, 1});
  }
  ls.push_back({"tail0", c.L * c.scale * c.scale, c.channels, 3, 3});
  ls.push_back({"tail1", c.L, c.L, 3, 3});
  ls.push_back({"tail2", c.L, c.L, 3, 3});
  return ls;
}

template <typename T>
struct ModelState {
  ModelConfig config;
  std::vector<std::pair<std::string, Tensor<T>>> params;  // stable order

  Tensor<T> param(const std::string& name) const {
    for (const auto& [n, t] : params)
      if (n == name) return t;
    throw std::invalid_argument("unknown parameter '" + name + "'");
  }
  void zero_grad() {
    for (auto& [n, t] : params) t->zero_grad();
  }
};

// He fan-in initialization; weight-norm gains start at the direction norms so
// the initial layer behaves as a plain conv.
template <typename T>
ModelState<T> build_model(const ModelConfig& cfg, uint64_t seed) {
  validate_config(cfg);
  ModelState<T> m;
  m.config = cfg;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& l : layer_shapes(cfg)) {
    size_t fan_in = static_cast<size_t>(l.cin) * l.kh * l.kw;
    double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<T> dir(static_cast<size_t>(l.cout) * fan_in);
    for (T& v : dir) v = static_cast<T>(normal(rng) * std_dev);
    std::vector<T> gain(l.cout);
    for (int c = 0; c < l.cout; ++c) {
      double s = 0.0;
      for (size_t i = 0; i < fan_in; ++i) {
        double v = dir[c * fan_in + i];
        s += v * v;
      }
      gain[c] = static_cast<T>(std::sqrt(s));
    }
    m.params.emplace_back(l.name + ".direction",
                          make_tensor<T>({l.cout, l.cin, l.kh, l.kw}, std::move(dir), true));
    m.params.emplace_back(l.name + ".gain", make_tensor<T>({l.cout}, std::move(gain), true));
    m.params.emplace_back(l.name + ".bias",
                          make_tensor<T>({l.cout}, std::vector<T>(l.cout, T(0)), true));
  }
  return m;
}

// Forward pass producing the coefficient tensor [N, L, s*H, s*W].
template <typename T>
Tensor<T> forward(const ModelState<T>& m, const Tensor<T>& input) {
  const auto& c = m.config;
  if (input->shape.size() != 4 || input->shape[1] != 1)
    throw std::invalid_argument("forward: expected [N,1,H,W] input");
  if (input->shape[2] < c.k || input->shape[3] < c.k)
    throw std::invalid_argument("forward: input spatial dims must be >= k = " +
                                std::to_string(c.k));
  auto wn = [&](const std::string& name, const Tensor<T>& x, int pad) {
    return weight_norm_conv2d(x, m.param(name + ".direction"), m.param(name + ".gain"),
                              m.param(name + ".bias"), 1, pad);
  };
  const T slope = static_cast<T>(0.1);
  Tensor<T> feat = wn("head", input, 1);
  for (int blk = 0; blk < c.blocks; ++blk) {
    std::string p = "lfb" + std::to_string(blk);
    Tensor<T> f0 = leaky_relu(wn(p + ".conv0", feat, 1), slope);
    Tensor<T> f1 = leaky_relu(wn(p + ".conv1", f0, 1), slope);
    Tensor<T> f2 = leaky_relu(wn(p + ".conv2", f1, 1), slope);
    Tensor<T> f3 = leaky_relu(wn(p + ".conv3", f2, 1), slope);
    Tensor<T> fused = wn(p + ".fuse", concat_channels<T>({f0, f1, f2, f3}), 0);
    feat = add(feat, fused);
  }
  Tensor<T> t = wn("tail0", feat, 1);
  if (c.scale > 1) t = pixel_shuffle(t, c.scale);
  t = leaky_relu(wn("tail1", t, 1), slope);
  return wn("tail2", t, 1);
}

// Single-image convenience: gray image in, CoefficientMap out.
template <typename T>
CoefficientMap predict_coefficients(const ModelState<T>& m, const Image& lr) {
  if (lr.channels != 1)
    throw std::invalid_argument("predict_coefficients: expected single-channel input");
  std::vector<T> data(lr.pixels.begin(), lr.pixels.end());
  auto in = make_tensor<T>({1, 1, lr.height, lr.width}, std::move(data));
  auto out = forward(m, in);
  CoefficientMap phi(out->shape[2], out->shape[3], out->shape[1]);
  for (size_t i = 0; i < out->value.size(); ++i) phi.coeffs[i] = static_cast<double>(out->value[i]);
  return phi;
}

// ---- cost accounting -------------------------------------------------------

inline long long count_params(const ModelConfig& cfg) {
  long long total = 0;
  for (const auto& l : layer_shapes(cfg))
    total += static_cast<long long>(l.cout) * l.cin * l.kh * l.kw + 2LL * l.cout;
  return total;
}

// Multiply-adds to produce an out_h x out_w coefficient map, including the
// L-basis filtering stage.
inline long long count_multiadds(const ModelConfig& cfg, int out_h, int out_w) {
  validate_config(cfg);
  long long lr_h = out_h / cfg.scale, lr_w = out_w / cfg.scale;
  long long total = 0;
  for (const auto& l : layer_shapes(cfg)) {
    bool at_hr = l.name == "tail1" || l.name == "tail2";
    long long h = at_hr ? out_h : lr_h, w = at_hr ? out_w : lr_w;
    total += static_cast<long long>(l.cout) * l.cin * l.kh * l.kw * h * w;
  }
  total += static_cast<long long>(cfg.L) * cfg.k * cfg.k * out_h * out_w;
  return total;
}

// ---- checkpoints -----------------------------------------------------------
//
// Format: magic "LPAR", u16 version, length-prefixed config JSON, u32 tensor
// count, per tensor (length-prefixed name, u32 rank, u32 dims, f32 payload),
// trailing CRC32 of everything prior.

constexpr uint16_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const ModelState<T>& m, const std::string& path,
                     const std::vector<std::pair<std::string, std::vector<float>>>& extras = {},
                     const nlohmann::json& meta = nlohmann::json::object()) {
  BinaryWriter w;
  w.bytes("LPAR", 4);
  w.u16(kCheckpointVersion);
  nlohmann::json cfg = model_config_to_json(m.config);
  cfg["meta"] = meta;
  w.str(cfg.dump());
  uint32_t count = static_cast<uint32_t>(m.params.size() + extras.size());
  w.u32(count);
  auto write_tensor = [&w](const std::string& name, const std::vector<int>& shape,
                           auto&& values) {
    w.str(name);
    w.u32(static_cast<uint32_t>(shape.size()));
    for (int d : shape) w.u32(static_cast<uint32_t>(d));
    for (auto v : values) w.f32(static_cast<float>(v));
  };
  for (const auto& [name, t] : m.params) write_tensor(name, t->shape, t->value);
  for (const auto& [name, vals] : extras) {
    if (name.rfind("extra.", 0) != 0)
      throw std::invalid_argument("extra tensor names must start with 'extra.': " + name);
    write_tensor(name, {static_cast<int>(vals.size())}, vals);
  }
  w.finish(path);
}

template <typename T>
struct LoadedCheckpoint {
  ModelState<T> model;
  std::vector<std::pair<std::string, std::vector<float>>> extras;
  nlohmann::json meta;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  BinaryReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "LPAR") throw std::runtime_error("not a checkpoint file: " + path);
  uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " in " + path);
  auto cfg_json = nlohmann::json::parse(r.str());
  LoadedCheckpoint<T> out;
  out.model.config = model_config_from_json(cfg_json);
  out.meta = cfg_json.value("meta", nlohmann::json::object());
  uint32_t count = r.u32();
  std::vector<std::pair<std::string, Tensor<T>>> params;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    uint32_t rank = r.u32();
    std::vector<int> shape(rank);
    size_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(r.u32());
      n *= shape[d];
    }
    std::vector<float> vals(n);
    for (float& v : vals) v = r.f32();
    if (name.rfind("extra.", 0) == 0) {
      out.extras.emplace_back(name, std::move(vals));
    } else {
      std::vector<T> tv(vals.begin(), vals.end());
      params.emplace_back(name, make_tensor<T>(shape, std::move(tv), true));
    }
  }
  // Shapes must match what the stored config implies.
  auto expect = build_model<T>(out.model.config, 0);
  if (params.size() != expect.params.size())
    throw std::runtime_error("checkpoint parameter count mismatch in " + path);
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != expect.params[i].first ||
        params[i].second->shape != expect.params[i].second->shape)
      throw std::runtime_error("checkpoint parameter '" + params[i].first +
                               "' does not match config-derived shape in " + path);
  }
  out.model.params = std::move(params);
  return out;
}

}  // namespace lapar
