#pragma once

// Per-pixel filter assembly and prediction over a fixed dictionary.
//
// Two interchangeable execution paths compute yhat_i = Phi_i (D B_i^T):
//  - predict_pixelwise: the literal per-pixel formula (reference path);
//  - predict_basisconv: L whole-image basis convolutions followed by a
//    per-pixel dot product with Phi (production path).
// Both are templated on the accumulation scalar so single- and double-
// precision behavior can be compared directly.

#include <chrono>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lapar/dictionary.hpp"
#include "lapar/image.hpp"
#include "lapar/resample.hpp"

namespace lapar {

struct CoefficientMap {
  int height = 0, width = 0, L = 0;
  std::vector<double> coeffs;  // planar [L][height][width]

  CoefficientMap() = default;
  CoefficientMap(int h, int w, int l)
      : height(h), width(w), L(l), coeffs(static_cast<size_t>(l) * h * w, 0.0) {}

  double& at(int l, int y, int x) {
    return coeffs[(static_cast<size_t>(l) * height + y) * width + x];
  }
  double at(int l, int y, int x) const {
    return coeffs[(static_cast<size_t>(l) * height + y) * width + x];
  }
};

// Phi_i D reshaped to k x k; the tap sum equals sum(phi) since every basis
// sums to 1.
inline FilterKernel assemble_filter(const std::vector<double>& phi, const Dictionary& dict) {
  if (static_cast<int>(phi.size()) != dict.L)
    throw std::invalid_argument("assemble_filter: coefficient length " +
                                std::to_string(phi.size()) + " does not match dictionary L=" +
                                std::to_string(dict.L));
  FilterKernel out;
  out.size = dict.k;
  out.taps.assign(static_cast<size_t>(dict.k) * dict.k, 0.0);
  for (int l = 0; l < dict.L; ++l) {
    double c = phi[l];
    if (c == 0.0) continue;
    const auto& b = dict.bases[l].taps;
    for (size_t i = 0; i < out.taps.size(); ++i) out.taps[i] += c * b[i];
  }
  return out;
}

template <typename T = double>
Image predict_pixelwise(const PatchMatrix& B, const CoefficientMap& phi, const Dictionary& dict) {
  if (B.rows != phi.height * phi.width)
    throw std::invalid_argument("predict_pixelwise: patch rows " + std::to_string(B.rows) +
                                " vs coefficient pixels " + std::to_string(phi.height * phi.width));
  if (B.cols != dict.k * dict.k || phi.L != dict.L)
    throw std::invalid_argument("predict_pixelwise: k/L mismatch with dictionary");
  Image out(phi.height, phi.width, 1, ColorSpace::Gray);
  int kk = B.cols;
  auto dm = dict.as_matrix();
  std::vector<T> dmat(dm.begin(), dm.end());
  for (int y = 0; y < phi.height; ++y)
    for (int x = 0; x < phi.width; ++x) {
      int i = y * phi.width + x;
      const double* brow = B.row(i);
      T pred = T(0);
      for (int l = 0; l < dict.L; ++l) {
        // response of basis l at pixel i: D_l . B_i
        T resp = T(0);
        const T* drow = dmat.data() + static_cast<size_t>(l) * kk;
        for (int j = 0; j < kk; ++j) resp += drow[j] * static_cast<T>(brow[j]);
        pred += static_cast<T>(phi.at(l, y, x)) * resp;
      }
      out.at(0, y, x) = static_cast<double>(pred);
    }
  return out;
}

// Basis responses of an image under reflect-101 padding, planar [L][H][W].
template <typename T = double>
std::vector<T> basis_responses(const Image& img, const Dictionary& dict) {
  if (img.channels != 1)
    throw std::invalid_argument("basis_responses: expected single-channel image");
  int h = img.height, w = img.width, r = dict.k / 2;
  std::vector<T> src(img.pixels.begin(), img.pixels.end());
  std::vector<T> out(static_cast<size_t>(dict.L) * h * w);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int l = 0; l < dict.L; ++l) {
    std::vector<T> taps(dict.bases[l].taps.begin(), dict.bases[l].taps.end());
    T* dst = out.data() + static_cast<size_t>(l) * h * w;
    for (int y = 0; y < h; ++y) {
      bool edge_y = y < r || y >= h - r;
      for (int x = 0; x < w; ++x) {
        T acc = T(0);
        if (!edge_y && x >= r && x < w - r) {
          const T* base = src.data() + static_cast<size_t>(y - r) * w + (x - r);
          const T* t = taps.data();
          for (int a = 0; a < dict.k; ++a, base += w)
            for (int b = 0; b < dict.k; ++b) acc += t[a * dict.k + b] * base[b];
        } else {
          for (int a = -r; a <= r; ++a) {
            int yy = reflect101(y + a, h);
            for (int b = -r; b <= r; ++b)
              acc += taps[(a + r) * dict.k + (b + r)] * src[static_cast<size_t>(yy) * w + reflect101(x + b, w)];
          }
        }
        dst[static_cast<size_t>(y) * w + x] = acc;
      }
    }
  }
  return out;
}

template <typename T = double>
Image predict_basisconv(const Image& upsampled, const CoefficientMap& phi,
                        const Dictionary& dict) {
  if (upsampled.height != phi.height || upsampled.width != phi.width)
    throw std::invalid_argument("predict_basisconv: image/coefficient dimension mismatch");
  if (phi.L != dict.L)
    throw std::invalid_argument("predict_basisconv: coefficient L does not match dictionary");
  auto resp = basis_responses<T>(upsampled, dict);
  int h = phi.height, w = phi.width;
  size_t plane = static_cast<size_t>(h) * w;
  Image out(h, w, 1, ColorSpace::Gray);
  std::vector<T> acc(plane, T(0));
  for (int l = 0; l < dict.L; ++l) {
    const T* rp = resp.data() + static_cast<size_t>(l) * plane;
    const double* pp = phi.coeffs.data() + static_cast<size_t>(l) * plane;
    for (size_t i = 0; i < plane; ++i) acc[i] += static_cast<T>(pp[i]) * rp[i];
  }
  for (size_t i = 0; i < plane; ++i) out.pixels[i] = static_cast<double>(acc[i]);
  return out;
}

enum class PredictPath { Pixelwise, Basisconv };

struct EnhanceTiming {
  double seconds = 0.0;
  PredictPath path = PredictPath::Basisconv;
};

// Applies the per-pixel assembled filters to every channel of img. The same
// coefficients are shared across channels. Output is not clamped; clamping
// happens at save time.
template <typename T = double>
Image enhance(const Image& img, const CoefficientMap& phi, const Dictionary& dict,
              PredictPath path = PredictPath::Basisconv, EnhanceTiming* timing = nullptr) {
  if (img.height != phi.height || img.width != phi.width)
    throw std::invalid_argument("enhance: image/coefficient dimension mismatch");
  auto t0 = std::chrono::steady_clock::now();
  Image out(img.height, img.width, img.channels, img.colorspace);
  for (int c = 0; c < img.channels; ++c) {
    Image chan = img.channels == 1 ? img : img.channel(c);
    Image pred;
    if (path == PredictPath::Pixelwise) {
      PatchMatrix B = extract_patches(chan, dict.k);
      pred = predict_pixelwise<T>(B, phi, dict);
    } else {
      pred = predict_basisconv<T>(chan, phi, dict);
    }
    std::copy_n(pred.plane(0), pred.plane_size(), out.plane(c));
  }
  if (timing) {
    timing->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    timing->path = path;
  }
  return out;
}

}  // namespace lapar
