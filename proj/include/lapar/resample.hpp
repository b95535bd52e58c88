#pragma once

// Bicubic resampling (Keys a = -0.5, half-pixel centers, edge replicate),
// the synthetic degradation pipeline (blur + decimate / Gaussian noise /
// DCT block quantization), and per-pixel patch extraction with reflect-101
// boundary handling.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "lapar/dictionary.hpp"
#include "lapar/image.hpp"

namespace lapar {

// ---- bicubic ---------------------------------------------------------------

// Keys cubic kernel with a = -0.5.
inline double keys_cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
  if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
  return 0.0;
}

inline Image bicubic_resize(const Image& img, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("bicubic_resize: scale must be positive");
  int ho = static_cast<int>(std::round(img.height * scale));
  int wo = static_cast<int>(std::round(img.width * scale));
  if (ho < 1 || wo < 1) throw std::invalid_argument("bicubic_resize: result dimension < 1");
  Image out(ho, wo, img.channels, img.colorspace);

  auto clampi = [](int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };

  // Separable: rows first into a temp buffer, then columns.
  std::vector<double> tmp(static_cast<size_t>(img.channels) * img.height * wo);
  for (int c = 0; c < img.channels; ++c) {
    const double* src = img.plane(c);
    double* t = tmp.data() + static_cast<size_t>(c) * img.height * wo;
    for (int ox = 0; ox < wo; ++ox) {
      double sx = (ox + 0.5) / scale - 0.5;
      int x0 = static_cast<int>(std::floor(sx));
      double wgt[4];
      for (int i = 0; i < 4; ++i) wgt[i] = keys_cubic(sx - (x0 - 1 + i));
      for (int y = 0; y < img.height; ++y) {
        double acc = 0.0;
        for (int i = 0; i < 4; ++i)
          acc += wgt[i] * src[static_cast<size_t>(y) * img.width + clampi(x0 - 1 + i, img.width)];
        t[static_cast<size_t>(y) * wo + ox] = acc;
      }
    }
    double* dst = out.plane(c);
    for (int oy = 0; oy < ho; ++oy) {
      double sy = (oy + 0.5) / scale - 0.5;
      int y0 = static_cast<int>(std::floor(sy));
      double wgt[4];
      for (int i = 0; i < 4; ++i) wgt[i] = keys_cubic(sy - (y0 - 1 + i));
      for (int ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (int i = 0; i < 4; ++i)
          acc += wgt[i] * t[static_cast<size_t>(clampi(y0 - 1 + i, img.height)) * wo + ox];
        dst[static_cast<size_t>(oy) * wo + ox] = acc;
      }
    }
  }
  out.clamp01();
  return out;
}

// ---- filtering helpers -----------------------------------------------------

inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

// Single-plane correlation with a k x k kernel under reflect-101 padding.
inline void filter_plane_reflect(const double* src, double* dst, int h, int w,
                                 const FilterKernel& f) {
  int r = f.size / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int a = -r; a <= r; ++a) {
        int yy = reflect101(y + a, h);
        for (int b = -r; b <= r; ++b)
          acc += f.at(a + r, b + r) * src[static_cast<size_t>(yy) * w + reflect101(x + b, w)];
      }
      dst[static_cast<size_t>(y) * w + x] = acc;
    }
}

inline Image filter_image_reflect(const Image& img, const FilterKernel& f) {
  Image out(img.height, img.width, img.channels, img.colorspace);
  for (int c = 0; c < img.channels; ++c)
    filter_plane_reflect(img.plane(c), out.plane(c), img.height, img.width, f);
  return out;
}

// ---- degradation -----------------------------------------------------------

enum class Task { Sr, Denoise, Deblock };

struct DegradationSpec {
  Task task = Task::Sr;
  int scale = 2;                            // SR
  std::optional<GaussianSpec> blur;         // SR; absent means plain decimation
  double noise_sigma = 0.0;                 // denoise, in [0, 55]/255 units
  std::optional<int> blocking_quality;      // deblock, [20, 50] typical
};

// Default SR blur used for synthetic LR generation: isotropic sigma = 0.8*(s/2).
inline GaussianSpec default_sr_blur(int scale) {
  double sigma = 0.8 * (scale / 2.0);
  return GaussianSpec{1.0, 0.0, sigma, sigma};
}

inline Image simulate_blocking(const Image& img, int quality, uint64_t /*seed*/ = 0);

inline Image degrade(const Image& hr, const DegradationSpec& spec, uint64_t seed) {
  switch (spec.task) {
    case Task::Sr: {
      int s = spec.scale;
      if (s < 1) throw std::invalid_argument("degrade: scale must be >= 1");
      if (hr.height % s != 0 || hr.width % s != 0)
        throw std::invalid_argument(
            "degrade: dimensions " + std::to_string(hr.height) + "x" + std::to_string(hr.width) +
            " not divisible by scale " + std::to_string(s) + "; crop to " +
            std::to_string(hr.height - hr.height % s) + "x" + std::to_string(hr.width - hr.width % s));
      Image blurred = spec.blur ? filter_image_reflect(hr, gaussian_kernel(*spec.blur, 5)) : hr;
      Image lr(hr.height / s, hr.width / s, hr.channels, hr.colorspace);
      for (int c = 0; c < hr.channels; ++c)
        for (int y = 0; y < lr.height; ++y)
          for (int x = 0; x < lr.width; ++x) lr.at(c, y, x) = blurred.at(c, y * s, x * s);
      lr.clamp01();
      return lr;
    }
    case Task::Denoise: {
      if (spec.noise_sigma < 0.0) throw std::invalid_argument("degrade: negative noise sigma");
      Image out = hr;
      if (spec.noise_sigma > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, spec.noise_sigma);
        for (double& v : out.pixels) v += n(rng);
        out.clamp01();
      }
      return out;
    }
    case Task::Deblock: {
      if (!spec.blocking_quality) throw std::invalid_argument("degrade: blocking quality not set");
      return simulate_blocking(hr, *spec.blocking_quality, seed);
    }
  }
  throw std::logic_error("degrade: unknown task");
}

// ---- DCT block quantization (JPEG-style blocking artifacts) ----------------

namespace detail {

// Standard JPEG luminance quantization table (Annex K).
inline const int kJpegLuminanceQ[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

inline void quality_scaled_table(int quality, double q[64]) {
  int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  for (int i = 0; i < 64; ++i) {
    int v = (kJpegLuminanceQ[i] * scale + 50) / 100;
    q[i] = std::max(1, std::min(255, v));
  }
}

// Orthonormal 8-point DCT-II basis.
inline const double* dct8_basis() {
  static double c[64];
  static bool init = [] {
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x)
        c[u * 8 + x] = std::sqrt(u == 0 ? 1.0 / 8.0 : 2.0 / 8.0) *
                       std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    return true;
  }();
  (void)init;
  return c;
}

}  // namespace detail

// Per-8x8-block DCT, quantization by the quality-scaled luminance table,
// inverse DCT. Operates per plane; edges are handled by replicate padding to
// a multiple of 8 and cropping back.
inline Image simulate_blocking(const Image& img, int quality, uint64_t) {
  if (quality < 1 || quality > 100)
    throw std::invalid_argument("simulate_blocking: quality must be in [1,100]");
  double qt[64];
  detail::quality_scaled_table(quality, qt);
  const double* c = detail::dct8_basis();
  int hp = (img.height + 7) / 8 * 8, wp = (img.width + 7) / 8 * 8;
  Image out(img.height, img.width, img.channels, img.colorspace);
  std::vector<double> plane(static_cast<size_t>(hp) * wp);
  for (int ch = 0; ch < img.channels; ++ch) {
    const double* src = img.plane(ch);
    for (int y = 0; y < hp; ++y)
      for (int x = 0; x < wp; ++x) {
        int yy = std::min(y, img.height - 1), xx = std::min(x, img.width - 1);
        plane[static_cast<size_t>(y) * wp + x] = src[static_cast<size_t>(yy) * img.width + xx] * 255.0 - 128.0;
      }
    double blk[64], tmp[64];
    for (int by = 0; by < hp; by += 8)
      for (int bx = 0; bx < wp; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) blk[y * 8 + x] = plane[static_cast<size_t>(by + y) * wp + bx + x];
        // forward DCT: rows then columns
        for (int y = 0; y < 8; ++y)
          for (int u = 0; u < 8; ++u) {
            double s = 0.0;
            for (int x = 0; x < 8; ++x) s += c[u * 8 + x] * blk[y * 8 + x];
            tmp[y * 8 + u] = s;
          }
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int y = 0; y < 8; ++y) s += c[v * 8 + y] * tmp[y * 8 + u];
            blk[v * 8 + u] = std::round(s / qt[v * 8 + u]) * qt[v * 8 + u];
          }
        // inverse DCT: columns then rows
        for (int u = 0; u < 8; ++u)
          for (int y = 0; y < 8; ++y) {
            double s = 0.0;
            for (int v = 0; v < 8; ++v) s += c[v * 8 + y] * blk[v * 8 + u];
            tmp[y * 8 + u] = s;
          }
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int u = 0; u < 8; ++u) s += c[u * 8 + x] * tmp[y * 8 + u];
            plane[static_cast<size_t>(by + y) * wp + bx + x] = s;
          }
      }
    double* dst = out.plane(ch);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        dst[static_cast<size_t>(y) * img.width + x] = (plane[static_cast<size_t>(y) * wp + x] + 128.0) / 255.0;
  }
  out.clamp01();
  return out;
}

// ---- patch extraction ------------------------------------------------------

struct PatchMatrix {
  int rows = 0;       // one per pixel of the source image
  int cols = 0;       // k^2
  int height = 0, width = 0, k = 0;
  std::string padding = "reflect101";
  std::vector<double> data;  // row-major

  const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }
};

// Row i holds the row-major flattened k x k neighborhood of pixel i
// (reflect-101 boundary). Single-channel images only; callers go per channel.
inline PatchMatrix extract_patches(const Image& img, int k) {
  detail::check_odd(k);
  if (img.channels != 1)
    throw std::invalid_argument("extract_patches: expected single-channel image, got " +
                                std::to_string(img.channels) + " channels");
  PatchMatrix pm;
  pm.height = img.height;
  pm.width = img.width;
  pm.k = k;
  pm.rows = img.height * img.width;
  pm.cols = k * k;
  pm.data.resize(static_cast<size_t>(pm.rows) * pm.cols);
  const double* src = img.plane(0);
  int r = k / 2;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double* row = pm.data.data() + (static_cast<size_t>(y) * img.width + x) * pm.cols;
      for (int a = -r; a <= r; ++a) {
        int yy = reflect101(y + a, img.height);
        for (int b = -r; b <= r; ++b)
          row[(a + r) * k + (b + r)] = src[static_cast<size_t>(yy) * img.width + reflect101(x + b, img.width)];
      }
    }
  return pm;
}

}  // namespace lapar
