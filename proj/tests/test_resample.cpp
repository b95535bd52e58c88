#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "lapar/resample.hpp"
#include "lapar/metrics.hpp"
#include "test_util.hpp"

using namespace lapar;

TEST_CASE("keys cubic kernel interpolates: 1 at 0, 0 at other integers") {
  CHECK(keys_cubic(0.0) == doctest::Approx(1.0));
  CHECK(keys_cubic(1.0) == doctest::Approx(0.0));
  CHECK(keys_cubic(-1.0) == doctest::Approx(0.0));
  CHECK(keys_cubic(2.0) == doctest::Approx(0.0));
  CHECK(keys_cubic(2.5) == 0.0);
}

TEST_CASE("keys cubic weights form a partition of unity") {
  for (double frac : {0.0, 0.1, 0.37, 0.5, 0.93}) {
    double s = 0.0;
    for (int i = -1; i <= 2; ++i) s += keys_cubic(frac - i);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("bicubic at scale 1 is the identity") {
  std::mt19937_64 rng(1);
  Image img = testutil::random_image(9, 7, rng);
  Image out = bicubic_resize(img, 1.0);
  REQUIRE(out.height == 9);
  REQUIRE(out.width == 7);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(out.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-12));
}

TEST_CASE("bicubic preserves constants and stays in range") {
  Image img(8, 8, 1, ColorSpace::Gray, 0.37);
  Image up = bicubic_resize(img, 2.0);
  CHECK(up.height == 16);
  for (double v : up.pixels) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
  CHECK_THROWS_AS(bicubic_resize(img, 0.0), std::invalid_argument);
}

TEST_CASE("bicubic reproduces a linear ramp away from the borders") {
  Image img(12, 12, 1, ColorSpace::Gray);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) img.at(0, y, x) = x / 24.0 + y / 48.0;
  Image up = bicubic_resize(img, 2.0);
  for (int y = 6; y < 18; ++y)
    for (int x = 6; x < 18; ++x) {
      // half-pixel mapping: output (x,y) samples source at ((x+0.5)/2 - 0.5)
      double sx = (x + 0.5) / 2.0 - 0.5, sy = (y + 0.5) / 2.0 - 0.5;
      CHECK(up.at(0, y, x) == doctest::Approx(sx / 24.0 + sy / 48.0).epsilon(1e-10));
    }
}

TEST_CASE("reflect101 mirrors without repeating the border sample") {
  CHECK(reflect101(-1, 5) == 1);
  CHECK(reflect101(-2, 5) == 2);
  CHECK(reflect101(5, 5) == 3);
  CHECK(reflect101(6, 5) == 2);
  CHECK(reflect101(0, 1) == 0);
  CHECK(reflect101(3, 5) == 3);
}

TEST_CASE("filtering with the delta kernel is the identity") {
  std::mt19937_64 rng(2);
  Image img = testutil::random_image(10, 11, rng);
  Image out = filter_image_reflect(img, delta_kernel(5));
  for (size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(out.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-12));
}

TEST_CASE("default SR blur uses sigma = 0.8 * s / 2") {
  auto g2 = default_sr_blur(2);
  CHECK(g2.sigma1 == doctest::Approx(0.8));
  CHECK(g2.sigma2 == doctest::Approx(0.8));
  auto g4 = default_sr_blur(4);
  CHECK(g4.sigma1 == doctest::Approx(1.6));
}

TEST_CASE("SR degradation decimates to H/s and rejects indivisible dims") {
  std::mt19937_64 rng(3);
  Image img = testutil::random_image(16, 16, rng);
  DegradationSpec spec;
  spec.task = Task::Sr;
  spec.scale = 2;
  Image lr = degrade(img, spec, 0);  // no blur: plain decimation
  CHECK(lr.height == 8);
  CHECK(lr.width == 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) CHECK(lr.at(0, y, x) == doctest::Approx(img.at(0, 2 * y, 2 * x)));

  Image odd = testutil::random_image(15, 16, rng);
  CHECK_THROWS_WITH_AS(degrade(odd, spec, 0), doctest::Contains("crop"), std::invalid_argument);
}

TEST_CASE("blurred SR degradation differs from plain decimation") {
  std::mt19937_64 rng(4);
  Image img = testutil::random_image(16, 16, rng);
  DegradationSpec plain{Task::Sr, 2, std::nullopt, 0.0, std::nullopt};
  DegradationSpec blurred{Task::Sr, 2, default_sr_blur(2), 0.0, std::nullopt};
  Image a = degrade(img, plain, 0), b = degrade(img, blurred, 0);
  double diff = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i) diff = std::max(diff, std::abs(a.pixels[i] - b.pixels[i]));
  CHECK(diff > 1e-4);
}

TEST_CASE("noise degradation is seed-deterministic; sigma 0 is the identity") {
  std::mt19937_64 rng(5);
  Image img = testutil::random_image(12, 12, rng);
  DegradationSpec spec;
  spec.task = Task::Denoise;
  spec.noise_sigma = 25.0 / 255.0;
  Image a = degrade(img, spec, 99), b = degrade(img, spec, 99), c = degrade(img, spec, 100);
  CHECK(a.pixels == b.pixels);
  CHECK(a.pixels != c.pixels);
  CHECK(a.pixels != img.pixels);
  spec.noise_sigma = 0.0;
  CHECK(degrade(img, spec, 99).pixels == img.pixels);
}

TEST_CASE("block quantization is near-lossless at quality 100 and lossy at 20") {
  std::mt19937_64 rng(6);
  Image img = testutil::random_image(24, 24, rng);
  Image q100 = simulate_blocking(img, 100);
  Image q20 = simulate_blocking(img, 20);
  double p100 = psnr(q100, img), p20 = psnr(q20, img);
  CHECK(p100 > 40.0);
  CHECK(p20 < p100 - 5.0);
  CHECK_THROWS_AS(simulate_blocking(img, 0), std::invalid_argument);
  CHECK_THROWS_AS(simulate_blocking(img, 101), std::invalid_argument);
}

TEST_CASE("block quantization preserves constants exactly enough") {
  // flat blocks carry only the DC coefficient, which quantizes to itself when
  // the level sits on a quantization step; near-flat inputs stay near-flat
  Image img(16, 16, 1, ColorSpace::Gray, 0.5);
  Image out = simulate_blocking(img, 30);
  for (double v : out.pixels) CHECK(v == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("patch extraction: interior rows hold the raw neighborhood") {
  std::mt19937_64 rng(7);
  Image img = testutil::random_image(9, 9, rng);
  PatchMatrix pm = extract_patches(img, 5);
  CHECK(pm.rows == 81);
  CHECK(pm.cols == 25);
  const double* row = pm.row(4 * 9 + 4);  // center pixel
  for (int a = -2; a <= 2; ++a)
    for (int b = -2; b <= 2; ++b)
      CHECK(row[(a + 2) * 5 + (b + 2)] == doctest::Approx(img.at(0, 4 + a, 4 + b)));
}

TEST_CASE("patch extraction mirrors the border with reflect-101") {
  std::mt19937_64 rng(8);
  Image img = testutil::random_image(6, 6, rng);
  PatchMatrix pm = extract_patches(img, 3);
  const double* row = pm.row(0);  // top-left pixel
  CHECK(row[0] == doctest::Approx(img.at(0, 1, 1)));  // (-1,-1) -> (1,1)
  CHECK(row[1] == doctest::Approx(img.at(0, 1, 0)));
  CHECK(row[4] == doctest::Approx(img.at(0, 0, 0)));  // center

  Image rgb(4, 4, 3);
  CHECK_THROWS_AS(extract_patches(rgb, 3), std::invalid_argument);
}
