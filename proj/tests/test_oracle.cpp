#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "lapar/oracle.hpp"
#include "lapar/train.hpp"
#include "test_util.hpp"

using namespace lapar;

TEST_CASE("dictionary_responses equals a direct dot product") {
  std::mt19937_64 rng(1);
  auto dict = build_dictionary(preset_config("14"));
  Image img = testutil::random_image(6, 6, rng);
  PatchMatrix B = extract_patches(img, dict.k);
  auto resp = dictionary_responses(B, dict);
  auto dmat = dict.as_matrix();
  for (int l = 0; l < dict.L; ++l)
    for (int i = 0; i < B.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < B.cols; ++j) s += dmat[static_cast<size_t>(l) * B.cols + j] * B.row(i)[j];
      CHECK(resp[static_cast<size_t>(l) * B.rows + i] == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("fit_global recovers an exactly representable target") {
  std::mt19937_64 rng(2);
  auto dict = build_dictionary(preset_config("14"));
  Image base = make_synthetic_textures(1, 24, 11)[0];
  PatchMatrix B = extract_patches(base, dict.k);
  auto resp = dictionary_responses(B, dict);
  // target = known shared combination of basis responses
  std::vector<double> truth = testutil::random_vec(14, rng, -0.3, 0.3);
  Image y(24, 24, 1, ColorSpace::Gray);
  for (int i = 0; i < B.rows; ++i) {
    double v = 0.0;
    for (int l = 0; l < 14; ++l) v += truth[l] * resp[static_cast<size_t>(l) * B.rows + i];
    y.pixels[i] = v;
  }
  auto fit = fit_global(B, dict, y);
  // the Gram matrix is rank-deficient (symmetric bases overlap), so the
  // recovered coefficients need not equal truth, but predictions must match
  CHECK(fit.residual_mse <= 1e-8);
}

TEST_CASE("global residual never exceeds the best single filter") {
  auto dict = build_dictionary(preset_config("14"));
  for (const auto& img : make_synthetic_textures(4, 24, 5)) {
    PatchMatrix B = extract_patches(img, dict.k);
    auto fit = fit_global(B, dict, img);
    double single = best_single_filter_mse(B, dict, img);
    CHECK(fit.residual_mse <= single + 1e-8);
  }
}

TEST_CASE("windowed fit refines the global fit on textured images") {
  RidgeProblem prob;
  auto dict = build_dictionary(preset_config("14"));
  for (const auto& img : make_synthetic_textures(3, 24, 6)) {
    PatchMatrix B = extract_patches(img, dict.k);
    auto global = fit_global(B, dict, img);
    auto windowed = fit_windowed(prob, B, dict, img);
    CHECK(windowed.image_mse <= global.residual_mse + 1e-8);
    CHECK(windowed.window_mse >= 0.0);
  }
}

TEST_CASE("windowed fit reconstructs a clean image nearly perfectly") {
  // the dictionary contains near-delta rows, so fitting an image against its
  // own patches should reach tiny residuals
  RidgeProblem prob;
  auto dict = build_dictionary(preset_config("14"));
  Image img = make_synthetic_textures(1, 20, 9)[0];
  PatchMatrix B = extract_patches(img, dict.k);
  auto fit = fit_windowed(prob, B, dict, img);
  CHECK(fit.image_mse < 1e-4);
}

TEST_CASE("fit_windowed validates its window argument") {
  auto dict = build_dictionary(preset_config("14"));
  Image img = make_synthetic_textures(1, 12, 1)[0];
  PatchMatrix B = extract_patches(img, dict.k);
  RidgeProblem bad;
  bad.window = 4;
  CHECK_THROWS_AS(fit_windowed(bad, B, dict, img), std::invalid_argument);
  RidgeProblem underdetermined;
  underdetermined.window = 3;  // 9 < L = 14
  underdetermined.ridge_lambda = 0.0;
  CHECK_THROWS_AS(fit_windowed(underdetermined, B, dict, img), std::invalid_argument);
}

TEST_CASE("fit_global flags rank-deficient dictionaries via jitter") {
  // duplicate rows make the Gram matrix singular
  Dictionary dict;
  dict.k = 3;
  dict.L = 3;
  dict.tag = "dup";
  auto g = gaussian_kernel({1.0, 0.0, 1.0, 1.0}, 3);
  dict.bases = {g, g, delta_kernel(3)};
  Image img = make_synthetic_textures(1, 12, 3)[0];
  PatchMatrix B = extract_patches(img, 3);
  auto fit = fit_global(B, dict, img);
  CHECK(fit.jitter_flagged);
  CHECK(std::isfinite(fit.residual_mse));
}

TEST_CASE("ablation ranks by oracle PSNR; wider span wins the oracle bound") {
  // 72 random filters span the full 25-dim patch space, while the G+DoG bases
  // are centro-symmetric and span only 13 dims. A least-squares oracle can
  // only benefit from the larger span, so random-72 must rank first.
  RidgeProblem prob;
  std::vector<NamedDictionary> dicts;
  dicts.push_back({"gdog-72", build_dictionary(preset_config("72"))});
  dicts.push_back({"random-72", random_dictionary(0, 72, 5)});
  dicts.push_back({"random-14", random_dictionary(0, 14, 5)});
  auto hrs = make_synthetic_textures(3, 32, 17);
  std::vector<std::pair<Image, Image>> pairs;
  DegradationSpec spec{Task::Sr, 2, default_sr_blur(2), 0.0, std::nullopt};
  for (const auto& hr : hrs) pairs.emplace_back(degrade(hr, spec, 0), hr);
  auto rows = ablation_report(dicts, pairs, prob);
  REQUIRE(rows.size() == 3);
  // sorted descending by PSNR
  CHECK(rows[0].psnr_db >= rows[1].psnr_db);
  CHECK(rows[1].psnr_db >= rows[2].psnr_db);
  CHECK(rows[0].name == "random-72");
  auto table = ablation_table(rows);
  CHECK(table.find("dictionary-name") != std::string::npos);
  CHECK(table.find("gdog-72") != std::string::npos);
}

TEST_CASE("ablation_report rejects empty inputs") {
  CHECK_THROWS_AS(ablation_report({}, {}, RidgeProblem{}), std::invalid_argument);
}
