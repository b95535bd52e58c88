#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <random>

#include "lapar/net.hpp"
#include "test_util.hpp"

using namespace lapar;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.channels = 4;
  c.blocks = 1;
  c.L = 6;
  c.k = 3;
  c.scale = 2;
  c.task = Task::Sr;
  return c;
}

}  // namespace

TEST_CASE("model presets define the expected widths and depths") {
  auto a = model_preset("lapar-a");
  CHECK(a.channels == 32);
  CHECK(a.blocks == 4);
  auto b = model_preset("lapar-b");
  CHECK(b.channels == 24);
  CHECK(b.blocks == 3);
  auto c = model_preset("lapar-c");
  CHECK(c.channels == 16);
  CHECK(c.blocks == 2);
  CHECK_THROWS_AS(model_preset("lapar-z"), std::invalid_argument);
}

TEST_CASE("config validation rejects bad scale/task combinations") {
  ModelConfig c = tiny_config();
  c.scale = 5;
  CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
  c = tiny_config();
  c.task = Task::Denoise;
  c.scale = 2;
  CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
  c.scale = 1;
  CHECK_NOTHROW(validate_config(c));
}

TEST_CASE("layer_shapes lists head, block convs, fuse, and tails in order") {
  auto ls = layer_shapes(tiny_config());
  REQUIRE(ls.size() == 1 + 5 + 3);
  CHECK(ls[0].name == "head");
  CHECK(ls[0].cin == 1);
  CHECK(ls[1].name == "lfb0.conv0");
  CHECK(ls[5].name == "lfb0.fuse");
  CHECK(ls[5].cin == 16);
  CHECK(ls[5].kh == 1);
  CHECK(ls[6].name == "tail0");
  CHECK(ls[6].cout == 6 * 4);  // L * s^2
  CHECK(ls[8].name == "tail2");
  CHECK(ls[8].cout == 6);
}

TEST_CASE("count_params matches a hand-computed total for the tiny config") {
  // head 36+8, four 3x3 convs 4*(144+8), fuse 64+8, tail0 864+48,
  // tail1/tail2 324+12 each
  CHECK(count_params(tiny_config()) == 2308);
}

TEST_CASE("count_params is strictly ordered across the presets at every scale") {
  for (int s : {2, 3, 4}) {
    auto mk = [s](const char* p) {
      auto c = model_preset(p);
      c.scale = s;
      return count_params(c);
    };
    long long a = mk("lapar-a"), b = mk("lapar-b"), c = mk("lapar-c");
    CHECK(a > b);
    CHECK(b > c);
  }
}

TEST_CASE("count_multiadds matches a hand-computed total for the tiny config") {
  // 8x8 output at scale 2: LR stages at 4x4, tail1/tail2 at 8x8, plus the
  // L k^2 filtering term at 8x8
  long long expect = 576 + 4 * 2304 + 1024 + 13824 + 2 * 20736 + 3456;
  CHECK(count_multiadds(tiny_config(), 8, 8) == expect);
}

TEST_CASE("build_model is seed-deterministic and seed-sensitive") {
  auto cfg = tiny_config();
  auto m1 = build_model<float>(cfg, 42);
  auto m2 = build_model<float>(cfg, 42);
  auto m3 = build_model<float>(cfg, 43);
  REQUIRE(m1.params.size() == m2.params.size());
  long long total = 0;
  bool differs = false;
  for (size_t i = 0; i < m1.params.size(); ++i) {
    CHECK(m1.params[i].first == m2.params[i].first);
    CHECK(m1.params[i].second->value == m2.params[i].second->value);
    if (m1.params[i].second->value != m3.params[i].second->value) differs = true;
    total += static_cast<long long>(m1.params[i].second->numel());
  }
  CHECK(differs);
  CHECK(total == count_params(cfg));
}

TEST_CASE("initial gains equal direction norms, so weight norm starts neutral") {
  auto m = build_model<double>(tiny_config(), 7);
  auto dir = m.param("head.direction");
  auto gain = m.param("head.gain");
  size_t per = dir->numel() / dir->shape[0];
  for (int c = 0; c < dir->shape[0]; ++c) {
    double s = 0.0;
    for (size_t i = 0; i < per; ++i) s += dir->value[per * c + i] * dir->value[per * c + i];
    CHECK(gain->value[c] == doctest::Approx(std::sqrt(s)).epsilon(1e-12));
  }
}

TEST_CASE("forward emits [N, L, sH, sW] and is deterministic") {
  auto cfg = tiny_config();
  auto m = build_model<float>(cfg, 1);
  std::mt19937_64 rng(2);
  auto v = testutil::random_vec(2 * 1 * 6 * 5, rng, 0.0, 1.0);
  std::vector<float> vf(v.begin(), v.end());
  auto in = make_tensor<float>({2, 1, 6, 5}, vf);
  auto out1 = forward(m, in);
  auto out2 = forward(m, make_tensor<float>({2, 1, 6, 5}, vf));
  CHECK(out1->shape == std::vector<int>{2, 6, 12, 10});
  CHECK(out1->value == out2->value);
  CHECK_THROWS_AS(forward(m, make_tensor<float>({1, 2, 6, 5}, std::vector<float>(60, 0.f))),
                  std::invalid_argument);
}

TEST_CASE("scale-1 forward keeps the input resolution") {
  auto cfg = tiny_config();
  cfg.scale = 1;
  cfg.task = Task::Denoise;
  auto m = build_model<float>(cfg, 1);
  auto in = make_tensor<float>({1, 1, 7, 9}, std::vector<float>(63, 0.3f));
  CHECK(forward(m, in)->shape == std::vector<int>{1, 6, 7, 9});
}

TEST_CASE("predict_coefficients wraps forward for a single gray image") {
  auto m = build_model<float>(tiny_config(), 3);
  std::mt19937_64 rng(4);
  Image lr = testutil::random_image(8, 8, rng);
  auto phi = predict_coefficients(m, lr);
  CHECK(phi.height == 16);
  CHECK(phi.width == 16);
  CHECK(phi.L == 6);
}

TEST_CASE("checkpoint round trip is bit exact and reproduces the forward pass") {
  auto cfg = tiny_config();
  auto m = build_model<float>(cfg, 5);
  std::string path = "test_ckpt_roundtrip.lpar";
  nlohmann::json meta;
  meta["note"] = "roundtrip";
  save_checkpoint(m, path, {{"extra.blob", {1.f, 2.f, 3.f}}}, meta);
  auto back = load_checkpoint<float>(path);
  CHECK(back.model.config == cfg);
  CHECK(back.meta.at("note") == "roundtrip");
  REQUIRE(back.extras.size() == 1);
  CHECK(back.extras[0].first == "extra.blob");
  CHECK(back.extras[0].second == std::vector<float>{1.f, 2.f, 3.f});
  REQUIRE(back.model.params.size() == m.params.size());
  for (size_t i = 0; i < m.params.size(); ++i)
    CHECK(back.model.params[i].second->value == m.params[i].second->value);

  std::mt19937_64 rng(6);
  Image lr = testutil::random_image(6, 6, rng);
  CHECK(predict_coefficients(m, lr).coeffs == predict_coefficients(back.model, lr).coeffs);
  std::remove(path.c_str());
}

TEST_CASE("extras must carry the reserved name prefix") {
  auto m = build_model<float>(tiny_config(), 0);
  CHECK_THROWS_AS(save_checkpoint(m, "never_written.lpar", {{"adam.m.head", {0.f}}}),
                  std::invalid_argument);
}

TEST_CASE("checkpoint loader rejects corruption and foreign files") {
  auto m = build_model<float>(tiny_config(), 0);
  std::string path = "test_ckpt_corrupt.lpar";
  save_checkpoint(m, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    char z = 0x77;
    f.write(&z, 1);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint<float>(path), doctest::Contains("CRC"),
                       std::runtime_error);
  std::remove(path.c_str());

  BinaryWriter w;
  w.bytes("XXXX", 4);
  w.finish("test_ckpt_foreign.bin");
  CHECK_THROWS_AS(load_checkpoint<float>("test_ckpt_foreign.bin"), std::runtime_error);
  std::remove("test_ckpt_foreign.bin");
}

TEST_CASE("model config JSON round trip preserves every field") {
  auto cfg = tiny_config();
  cfg.task = Task::Deblock;
  cfg.scale = 1;
  auto back = model_config_from_json(model_config_to_json(cfg));
  CHECK(back == cfg);
  auto preset = model_config_from_json({{"preset", "lapar-c"}, {"scale", 3}});
  CHECK(preset.channels == 16);
  CHECK(preset.scale == 3);
}
