#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <set>

#include "lapar/dictionary.hpp"
#include "lapar/linalg.hpp"
#include "test_util.hpp"

using namespace lapar;

TEST_CASE("isotropic sigma=1 gaussian matches hand-computed taps") {
  // independent recomputation: exp(-(x^2+y^2)/2) over the 5x5 grid, normalized
  double raw[5][5], total = 0.0;
  for (int y = -2; y <= 2; ++y)
    for (int x = -2; x <= 2; ++x) {
      raw[y + 2][x + 2] = std::exp(-0.5 * (x * x + y * y));
      total += raw[y + 2][x + 2];
    }
  auto f = gaussian_kernel({1.0, 0.0, 1.0, 1.0}, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x)
      CHECK(f.at(y, x) == doctest::Approx(raw[y][x] / total).epsilon(1e-12));
  CHECK(f.at(2, 2) == doctest::Approx(0.16210282).epsilon(1e-6));
  CHECK(f.at(2, 3) == doctest::Approx(0.09832033).epsilon(1e-6));
}

TEST_CASE("gaussian kernels sum to 1 and are nonnegative") {
  for (double gamma : {0.6, 1.0, 1.5})
    for (double ratio : {0.2, 1.0})
      for (double theta : {0.0, 0.7, 2.1}) {
        auto f = gaussian_kernel({gamma, theta, 1.0, ratio}, 5);
        CHECK(f.sum() == doctest::Approx(1.0).epsilon(1e-12));
        for (double t : f.taps) CHECK(t >= 0.0);
      }
}

TEST_CASE("gaussian theta and theta+pi give the same kernel") {
  auto a = gaussian_kernel({1.0, 0.4, 1.0, 0.2}, 5);
  auto b = gaussian_kernel({1.0, 0.4 + std::numbers::pi, 1.0, 0.2}, 5);
  for (size_t i = 0; i < a.taps.size(); ++i)
    CHECK(std::abs(a.taps[i] - b.taps[i]) <= 1e-12);
}

TEST_CASE("gaussian rotated 90 degrees is the transpose") {
  auto a = gaussian_kernel({1.0, 0.0, 1.0, 0.2}, 5);
  auto b = gaussian_kernel({1.0, std::numbers::pi / 2.0, 1.0, 0.2}, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) CHECK(a.at(y, x) == doctest::Approx(b.at(x, y)).epsilon(1e-10));
}

TEST_CASE("gaussian rejects non-positive-definite parameters") {
  CHECK_THROWS_AS(gaussian_kernel({0.0, 0.0, 1.0, 1.0}, 5), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel({1.0, 0.0, -1.0, 1.0}, 5), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel({1.0, 0.0, 1.0, 1.0}, 4), std::invalid_argument);
}

TEST_CASE("dog kernel is delta plus gaussian difference, sums to 1") {
  GaussianSpec a{1.0, 0.0, 1.0, 0.2}, b{1.0, 0.0, 1.0, 1.0};
  auto f = dog_kernel(a, b, 5);
  auto g1 = gaussian_kernel(a, 5), g2 = gaussian_kernel(b, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      double expect = g1.at(y, x) - g2.at(y, x) + (y == 2 && x == 2 ? 1.0 : 0.0);
      CHECK(f.at(y, x) == doctest::Approx(expect).epsilon(1e-12));
    }
  CHECK(f.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(dog_kernel(a, a, 5), std::invalid_argument);
}

TEST_CASE("presets build with the declared filter counts") {
  for (auto [name, count] : {std::pair<const char*, int>{"72", 72}, {"24", 24}, {"14", 14}}) {
    auto d = build_dictionary(preset_config(name));
    CHECK(d.L == count);
    CHECK(d.k == 5);
    CHECK(static_cast<int>(d.bases.size()) == count);
    for (const auto& f : d.bases) CHECK(f.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(preset_config("nope"), std::invalid_argument);
}

TEST_CASE("default preset rows are pairwise distinct") {
  auto d = build_dictionary(preset_config("72"));
  for (int i = 0; i < d.L; ++i)
    for (int j = i + 1; j < d.L; ++j) {
      double diff = 0.0;
      for (size_t t = 0; t < d.bases[i].taps.size(); ++t)
        diff = std::max(diff, std::abs(d.bases[i].taps[t] - d.bases[j].taps[t]));
      CHECK(diff > 1e-9);
    }
}

TEST_CASE("default dictionary spans exactly the centro-symmetric subspace") {
  // every basis satisfies taps(y,x) = taps(-y,-x), so the 72 rows live in the
  // 13-dimensional symmetric subspace of 5x5 kernels and fill all of it
  auto d = build_dictionary(preset_config("72"));
  for (const auto& f : d.bases)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x)
        CHECK(std::abs(f.at(y, x) - f.at(4 - y, 4 - x)) <= 1e-12);
  auto sv = singular_values(d.as_matrix(), d.L, d.k * d.k);
  REQUIRE(sv.size() == 25);
  CHECK(sv[12] > 1e-6 * sv[0]);   // rank at least 13
  CHECK(sv[13] < 1e-6 * sv[0]);   // and no more
}

TEST_CASE("build_dictionary rejects an L that disagrees with the grid") {
  auto cfg = preset_config("72");
  cfg.L = 71;
  CHECK_THROWS_AS(build_dictionary(cfg), std::invalid_argument);
}

TEST_CASE("dictionary config JSON round trip") {
  auto cfg = preset_config("24");
  auto j = dictionary_config_to_json(cfg);
  auto back = dictionary_config_from_json(j);
  CHECK(back.L == cfg.L);
  CHECK(back.k == cfg.k);
  CHECK(back.gammas == cfg.gammas);
  CHECK(back.ratios == cfg.ratios);
  CHECK(back.theta_step_degrees == cfg.theta_step_degrees);
  REQUIRE(back.dog_pairs.size() == cfg.dog_pairs.size());
  auto d1 = build_dictionary(cfg), d2 = build_dictionary(back);
  for (int l = 0; l < d1.L; ++l) CHECK(d1.bases[l].taps == d2.bases[l].taps);
}

TEST_CASE("random dictionary is seeded, row-normalized, and seed-sensitive") {
  auto a = random_dictionary(7, 14, 5);
  auto b = random_dictionary(7, 14, 5);
  auto c = random_dictionary(8, 14, 5);
  CHECK(a.L == 14);
  for (int l = 0; l < 14; ++l) {
    CHECK(a.bases[l].taps == b.bases[l].taps);
    CHECK(a.bases[l].sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  bool differs = false;
  for (int l = 0; l < 14 && !differs; ++l) differs = a.bases[l].taps != c.bases[l].taps;
  CHECK(differs);
}

TEST_CASE("dictionary file round trip is bit exact") {
  auto d = build_dictionary(preset_config("14"));
  std::string path = "test_dict_roundtrip.ldic";
  save_dictionary(d, path);
  auto back = load_dictionary(path);
  CHECK(back.L == d.L);
  CHECK(back.k == d.k);
  CHECK(back.tag == d.tag);
  REQUIRE(back.specs.size() == d.specs.size());
  for (int l = 0; l < d.L; ++l) CHECK(back.bases[l].taps == d.bases[l].taps);
  std::remove(path.c_str());
}

TEST_CASE("corrupting a dictionary file trips the checksum") {
  auto d = random_dictionary(3, 4, 3);
  std::string path = "test_dict_corrupt.ldic";
  save_dictionary(d, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(20);
    char z = 0x5a;
    f.write(&z, 1);
  }
  CHECK_THROWS_WITH_AS(load_dictionary(path), doctest::Contains("CRC"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("filter_to_image normalizes range; constant maps to mid gray") {
  auto f = gaussian_kernel({1.0, 0.0, 1.0, 1.0}, 5);
  auto img = filter_to_image(f);
  double lo = 1.0, hi = 0.0;
  for (double v : img.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo == doctest::Approx(0.0));
  CHECK(hi == doctest::Approx(1.0));

  FilterKernel flat;
  flat.size = 3;
  flat.taps.assign(9, 0.25);
  auto fimg = filter_to_image(flat);
  for (double v : fimg.pixels) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("delta kernel is the identity filter") {
  auto f = delta_kernel(5);
  CHECK(f.sum() == doctest::Approx(1.0));
  CHECK(f.at(2, 2) == doctest::Approx(1.0));
  CHECK(f.at(0, 0) == doctest::Approx(0.0));
}
