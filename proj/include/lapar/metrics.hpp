#pragma once

// Image quality metrics: PSNR (peak 1.0, 100 dB cap for identical inputs)
// and single-scale SSIM with the standard 11x11 sigma=1.5 Gaussian window,
// plus BT.601 RGB <-> YCbCr conversion (full-swing RGB in, studio-swing Y).

#include <cmath>
#include <stdexcept>
#include <vector>

#include "lapar/image.hpp"

namespace lapar {

constexpr double kPsnrCapDb = 100.0;

inline Image rgb_to_ycbcr(const Image& img) {
  if (img.channels != 3)
    throw std::invalid_argument("rgb_to_ycbcr: expected 3-channel RGB image");
  Image out(img.height, img.width, 3, ColorSpace::YCbCr);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double r = img.at(0, y, x), g = img.at(1, y, x), b = img.at(2, y, x);
      out.at(0, y, x) = (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
      out.at(1, y, x) = (128.0 - 37.797 * r - 74.203 * g + 112.0 * b) / 255.0;
      out.at(2, y, x) = (128.0 + 112.0 * r - 93.786 * g - 18.214 * b) / 255.0;
    }
  return out;
}

inline Image ycbcr_to_rgb(const Image& img) {
  if (img.channels != 3)
    throw std::invalid_argument("ycbcr_to_rgb: expected 3-channel YCbCr image");
  Image out(img.height, img.width, 3, ColorSpace::RGB);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double yy = img.at(0, y, x) * 255.0 - 16.0;
      double cb = img.at(1, y, x) * 255.0 - 128.0;
      double cr = img.at(2, y, x) * 255.0 - 128.0;
      out.at(0, y, x) = (0.00456621 * yy + 0.00625893 * cr);
      out.at(1, y, x) = (0.00456621 * yy - 0.00153632 * cb - 0.00318811 * cr);
      out.at(2, y, x) = (0.00456621 * yy + 0.00791071 * cb);
    }
  return out;
}

// Luma plane: the Y channel for RGB inputs, the single plane otherwise.
inline Image luma(const Image& img) {
  if (img.channels == 1) return img;
  if (img.colorspace == ColorSpace::YCbCr) return img.channel(0);
  return rgb_to_ycbcr(img).channel(0);
}

inline void check_same_dims(const Image& a, const Image& b, const char* who) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

inline double psnr(const Image& a, const Image& b, int border = 0) {
  check_same_dims(a, b, "psnr");
  if (border < 0 || 2 * border >= a.height || 2 * border >= a.width)
    throw std::invalid_argument("psnr: border too large for image");
  double mse = 0.0;
  size_t n = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y = border; y < a.height - border; ++y)
      for (int x = border; x < a.width - border; ++x) {
        double d = a.at(c, y, x) - b.at(c, y, x);
        mse += d * d;
        ++n;
      }
  mse /= static_cast<double>(n);
  if (mse <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline std::vector<double> ssim_window() {
  const int n = 11;
  const double sigma = 1.5;
  std::vector<double> w(n * n);
  double total = 0.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double dy = y - 5, dx = x - 5;
      w[y * n + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      total += w[y * n + x];
    }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace detail

inline double ssim(const Image& a, const Image& b, int border = 0) {
  check_same_dims(a, b, "ssim");
  if (a.channels != 1) throw std::invalid_argument("ssim: expected single-channel inputs");
  const int win = 11;
  int h = a.height - 2 * border, w = a.width - 2 * border;
  if (h < win || w < win) throw std::invalid_argument("ssim: image smaller than 11x11 window");
  static const std::vector<double> wnd = detail::ssim_window();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // dynamic range 1.0
  double acc = 0.0;
  size_t count = 0;
  for (int y = 0; y + win <= h; ++y)
    for (int x = 0; x + win <= w; ++x) {
      double mu_a = 0, mu_b = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          double wv = wnd[i * win + j];
          double va = a.at(0, border + y + i, border + x + j);
          double vb = b.at(0, border + y + i, border + x + j);
          mu_a += wv * va;
          mu_b += wv * vb;
          saa += wv * va * va;
          sbb += wv * vb * vb;
          sab += wv * va * vb;
        }
      double var_a = saa - mu_a * mu_a;
      double var_b = sbb - mu_b * mu_b;
      double cov = sab - mu_a * mu_b;
      acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
             ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  return acc / static_cast<double>(count);
}

struct MetricReport {
  double psnr_db = 0.0;
  double ssim_val = 0.0;
  int border_crop = 0;
};

// Y-channel PSNR/SSIM at the given border crop.
inline MetricReport evaluate_pair(const Image& pred, const Image& ref, int border) {
  Image py = luma(pred), ry = luma(ref);
  MetricReport r;
  r.psnr_db = psnr(py, ry, border);
  r.ssim_val = ssim(py, ry, border);
  r.border_crop = border;
  return r;
}

}  // namespace lapar
