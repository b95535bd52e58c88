#pragma once

// Closed-form coefficient solutions used for validation and ablation bounds.
//
// The per-pixel objective has one equation and L unknowns, so the oracle
// shares coefficients over a w x w window with a ridge term to make each
// local system well-posed. fit_global is the fully-shared special case used
// as a sanity bound. Normal equations with a small diagonal jitter; systems
// are tiny (L <= 72).

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lapar/assembly.hpp"
#include "lapar/dictionary.hpp"
#include "lapar/linalg.hpp"
#include "lapar/metrics.hpp"
#include "lapar/resample.hpp"

namespace lapar {

constexpr double kOracleJitter = 1e-10;

struct RidgeProblem {
  int window = 7;             // odd local sharing extent
  double ridge_lambda = 1e-4;
};

struct GlobalFit {
  std::vector<double> phi;    // length L
  double residual_mse = 0.0;  // mean squared prediction error over all pixels
  bool jitter_flagged = false;
};

// Per-pixel responses D B_i^T, planar [L][rows].
inline std::vector<double> dictionary_responses(const PatchMatrix& B, const Dictionary& dict) {
  if (B.cols != dict.k * dict.k)
    throw std::invalid_argument("dictionary_responses: patch size does not match dictionary k");
  auto dmat = dict.as_matrix();
  std::vector<double> resp(static_cast<size_t>(dict.L) * B.rows);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int l = 0; l < dict.L; ++l) {
    const double* drow = dmat.data() + static_cast<size_t>(l) * B.cols;
    double* out = resp.data() + static_cast<size_t>(l) * B.rows;
    for (int i = 0; i < B.rows; ++i) {
      const double* brow = B.row(i);
      double s = 0.0;
      for (int j = 0; j < B.cols; ++j) s += drow[j] * brow[j];
      out[i] = s;
    }
  }
  return resp;
}

inline double prediction_mse(const std::vector<double>& resp, int rows, int L,
                             const std::vector<double>& phi_per_pixel /* [L][rows] or L */,
                             const Image& y, bool shared) {
  const double* target = y.plane(0);
  double acc = 0.0;
  for (int i = 0; i < rows; ++i) {
    double pred = 0.0;
    for (int l = 0; l < L; ++l) {
      double c = shared ? phi_per_pixel[l] : phi_per_pixel[static_cast<size_t>(l) * rows + i];
      pred += c * resp[static_cast<size_t>(l) * rows + i];
    }
    double d = pred - target[i];
    acc += d * d;
  }
  return acc / rows;
}

// Least-squares shared coefficient vector over the whole image.
inline GlobalFit fit_global(const PatchMatrix& B, const Dictionary& dict, const Image& y) {
  if (y.channels != 1 || y.height * y.width != B.rows)
    throw std::invalid_argument("fit_global: target does not match patch matrix");
  if (B.rows < dict.L)
    throw std::invalid_argument("fit_global: fewer pixels than dictionary bases");
  int L = dict.L;
  auto resp = dictionary_responses(B, dict);
  std::vector<double> gram(static_cast<size_t>(L) * L, 0.0), rhs(L, 0.0);
  const double* target = y.plane(0);
  for (int l = 0; l < L; ++l) {
    const double* rl = resp.data() + static_cast<size_t>(l) * B.rows;
    for (int m = l; m < L; ++m) {
      const double* rm = resp.data() + static_cast<size_t>(m) * B.rows;
      double s = 0.0;
      for (int i = 0; i < B.rows; ++i) s += rl[i] * rm[i];
      gram[static_cast<size_t>(l) * L + m] = gram[static_cast<size_t>(m) * L + l] = s;
    }
    double s = 0.0;
    for (int i = 0; i < B.rows; ++i) s += rl[i] * target[i];
    rhs[l] = s;
  }
  GlobalFit fit;
  // Jitter keeps rank-deficient Gram matrices solvable; flag when it mattered.
  auto eig = sym_eigenvalues(gram, L);
  fit.jitter_flagged = eig.front() < 1e-8 * std::max(1.0, eig.back());
  for (int l = 0; l < L; ++l) gram[static_cast<size_t>(l) * L + l] += kOracleJitter * B.rows;
  fit.phi = solve_spd(std::move(gram), std::move(rhs), L);
  fit.residual_mse = prediction_mse(resp, B.rows, L, fit.phi, y, true);
  return fit;
}

struct WindowedFit {
  CoefficientMap phi;
  double image_mse = 0.0;      // applying phi_i at pixel i only
  double window_mse = 0.0;     // mean over pixels of the per-window fit MSE
};

// Per-pixel ridge regression over the w x w window centered at each pixel
// (reflect-101 at borders).
inline WindowedFit fit_windowed(const RidgeProblem& prob, const PatchMatrix& B,
                                const Dictionary& dict, const Image& y) {
  if (y.channels != 1 || y.height * y.width != B.rows)
    throw std::invalid_argument("fit_windowed: target does not match patch matrix");
  int w = prob.window;
  if (w < 1 || w % 2 == 0) throw std::invalid_argument("fit_windowed: window must be odd");
  if (w * w < dict.L && prob.ridge_lambda <= 0.0)
    throw std::invalid_argument("fit_windowed: window^2 < L requires ridge_lambda > 0");
  int L = dict.L, h = y.height, wd = y.width, r = w / 2;
  auto resp = dictionary_responses(B, dict);
  const double* target = y.plane(0);
  WindowedFit out;
  out.phi = CoefficientMap(h, wd, L);
  std::vector<double> window_mse(static_cast<size_t>(h) * wd, 0.0);
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < wd; ++xx) {
      std::vector<double> gram(static_cast<size_t>(L) * L, 0.0), rhs(L, 0.0), ri(L);
      int count = 0;
      for (int a = -r; a <= r; ++a)
        for (int b = -r; b <= r; ++b) {
          int idx = reflect101(yy + a, h) * wd + reflect101(xx + b, wd);
          for (int l = 0; l < L; ++l) ri[l] = resp[static_cast<size_t>(l) * B.rows + idx];
          double t = target[idx];
          for (int l = 0; l < L; ++l) {
            for (int m = l; m < L; ++m) gram[static_cast<size_t>(l) * L + m] += ri[l] * ri[m];
            rhs[l] += ri[l] * t;
          }
          ++count;
        }
      for (int l = 0; l < L; ++l)
        for (int m = 0; m < l; ++m)
          gram[static_cast<size_t>(l) * L + m] = gram[static_cast<size_t>(m) * L + l];
      double reg = prob.ridge_lambda * count + kOracleJitter * count;
      for (int l = 0; l < L; ++l) gram[static_cast<size_t>(l) * L + l] += reg;
      auto phi = solve_spd(std::move(gram), std::move(rhs), L);
      for (int l = 0; l < L; ++l) out.phi.at(l, yy, xx) = phi[l];
      double acc = 0.0;
      for (int a = -r; a <= r; ++a)
        for (int b = -r; b <= r; ++b) {
          int idx = reflect101(yy + a, h) * wd + reflect101(xx + b, wd);
          double pred = 0.0;
          for (int l = 0; l < L; ++l) pred += phi[l] * resp[static_cast<size_t>(l) * B.rows + idx];
          double d = pred - target[idx];
          acc += d * d;
        }
      window_mse[static_cast<size_t>(yy) * wd + xx] = acc / count;
    }
  double img_acc = 0.0, win_acc = 0.0;
  for (int i = 0; i < B.rows; ++i) {
    double pred = 0.0;
    for (int l = 0; l < L; ++l)
      pred += out.phi.coeffs[static_cast<size_t>(l) * B.rows + i] * resp[static_cast<size_t>(l) * B.rows + i];
    double d = pred - target[i];
    img_acc += d * d;
    win_acc += window_mse[i];
  }
  out.image_mse = img_acc / B.rows;
  out.window_mse = win_acc / B.rows;
  return out;
}

// Image MSE of the best single one-hot coefficient vector (coefficient 1 on
// one basis, 0 elsewhere).
inline double best_single_filter_mse(const PatchMatrix& B, const Dictionary& dict,
                                     const Image& y) {
  auto resp = dictionary_responses(B, dict);
  const double* target = y.plane(0);
  double best = std::numeric_limits<double>::infinity();
  for (int l = 0; l < dict.L; ++l) {
    const double* rl = resp.data() + static_cast<size_t>(l) * B.rows;
    double acc = 0.0;
    for (int i = 0; i < B.rows; ++i) {
      double d = rl[i] - target[i];
      acc += d * d;
    }
    best = std::min(best, acc / B.rows);
  }
  return best;
}

// ---- ablation report -------------------------------------------------------

struct AblationRow {
  std::string name;
  int L = 0;
  double psnr_db = 0.0;
  double mean_residual = 0.0;
};

struct NamedDictionary {
  std::string name;
  Dictionary dict;
};

// Oracle PSNR (windowed fit) per dictionary over (lr, hr) image pairs; the lr
// member is bicubic-upsampled to hr size before fitting. Rows sorted by PSNR
// descending.
inline std::vector<AblationRow> ablation_report(const std::vector<NamedDictionary>& dicts,
                                                const std::vector<std::pair<Image, Image>>& pairs,
                                                const RidgeProblem& prob) {
  if (dicts.empty() || pairs.empty())
    throw std::invalid_argument("ablation_report: empty dictionaries or image set");
  std::vector<AblationRow> rows;
  for (const auto& nd : dicts) {
    double psnr_acc = 0.0, res_acc = 0.0;
    for (const auto& [lr, hr] : pairs) {
      Image hr_y = luma(hr);
      Image up = lr.height == hr.height && lr.width == hr.width
                     ? luma(lr)
                     : bicubic_resize(luma(lr), static_cast<double>(hr.height) / lr.height);
      PatchMatrix B = extract_patches(up, nd.dict.k);
      auto fit = fit_windowed(prob, B, nd.dict, hr_y);
      Image pred = predict_basisconv(up, fit.phi, nd.dict);
      pred.clamp01();
      psnr_acc += psnr(pred, hr_y, 0);
      res_acc += fit.image_mse;
    }
    rows.push_back({nd.name, nd.dict.L, psnr_acc / pairs.size(), res_acc / pairs.size()});
  }
  std::sort(rows.begin(), rows.end(),
            [](const AblationRow& a, const AblationRow& b) { return a.psnr_db > b.psnr_db; });
  return rows;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "dictionary-name\tL\tPSNR-dB\tmean-residual\n";
  for (const auto& r : rows)
    os << r.name << "\t" << r.L << "\t" << r.psnr_db << "\t" << r.mean_residual << "\n";
  return os.str();
}

}  // namespace lapar
