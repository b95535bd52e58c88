#pragma once

// Fixed filter dictionary of Gaussian and difference-of-Gaussians bases.
//
// Each Gaussian is parameterized by (gamma, theta, sigma1, sigma2): the
// covariance is Sigma = gamma^2 * U_theta * diag(sigma1^2, sigma2^2) *
// U_theta^T. Kernels are sampled at integer offsets on a k x k grid and
// normalized to sum 1. A DoG basis is stored as delta + (G1 - G2) with both
// Gaussians grid-normalized first, so every dictionary row sums to 1.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lapar/image.hpp"
#include "lapar/serialize.hpp"

namespace lapar {

struct GaussianSpec {
  double gamma = 1.0;
  double theta = 0.0;  // radians in [0, pi)
  double sigma1 = 1.0;
  double sigma2 = 1.0;

  bool operator==(const GaussianSpec&) const = default;
};

struct BasisSpec {
  enum class Kind { Gaussian, Dog };
  Kind kind = Kind::Gaussian;
  GaussianSpec a;
  GaussianSpec b;  // second DoG component, ignored for Gaussian kind
};

struct FilterKernel {
  int size = 0;                // odd
  std::vector<double> taps;    // size*size, row-major

  double& at(int y, int x) { return taps[static_cast<size_t>(y) * size + x]; }
  double at(int y, int x) const { return taps[static_cast<size_t>(y) * size + x]; }
  double sum() const {
    double s = 0.0;
    for (double t : taps) s += t;
    return s;
  }
};

struct Dictionary {
  int L = 0;
  int k = 0;
  std::vector<FilterKernel> bases;
  std::vector<BasisSpec> specs;  // empty when tagged random
  std::string tag;               // "grid", "random", or a preset name

  // Row-major L x k^2 flattening of bases.
  std::vector<double> as_matrix() const {
    std::vector<double> m;
    m.reserve(static_cast<size_t>(L) * k * k);
    for (const auto& f : bases) m.insert(m.end(), f.taps.begin(), f.taps.end());
    return m;
  }
};

namespace detail {

// Inverse and determinant of the 2x2 covariance built from a spec.
inline void covariance_inverse(const GaussianSpec& g, double inv[4], double& det) {
  if (!(g.gamma > 0.0 && g.sigma1 > 0.0 && g.sigma2 > 0.0))
    throw std::invalid_argument("gaussian_kernel: covariance not positive definite (gamma=" +
                                std::to_string(g.gamma) + ", sigma1=" + std::to_string(g.sigma1) +
                                ", sigma2=" + std::to_string(g.sigma2) + ")");
  double c = std::cos(g.theta), s = std::sin(g.theta);
  double l1 = g.gamma * g.gamma * g.sigma1 * g.sigma1;
  double l2 = g.gamma * g.gamma * g.sigma2 * g.sigma2;
  // Sigma = U diag(l1,l2) U^T
  double sxx = c * c * l1 + s * s * l2;
  double sxy = c * s * (l1 - l2);
  double syy = s * s * l1 + c * c * l2;
  det = sxx * syy - sxy * sxy;
  if (!(det > 0.0)) throw std::invalid_argument("gaussian_kernel: degenerate covariance");
  inv[0] = syy / det;
  inv[1] = -sxy / det;
  inv[2] = -sxy / det;
  inv[3] = sxx / det;
}

inline void check_odd(int k) {
  if (k < 1 || k % 2 == 0)
    throw std::invalid_argument("kernel size must be odd and positive, got " + std::to_string(k));
}

}  // namespace detail

// Elliptical Gaussian sampled on the k x k integer offset grid, sum-normalized.
inline FilterKernel gaussian_kernel(const GaussianSpec& spec, int k) {
  detail::check_odd(k);
  double inv[4], det;
  detail::covariance_inverse(spec, inv, det);
  int r = k / 2;
  FilterKernel out;
  out.size = k;
  out.taps.resize(static_cast<size_t>(k) * k);
  double norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(det));
  double total = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      double q = inv[0] * x * x + 2.0 * inv[1] * x * y + inv[3] * y * y;
      double v = norm * std::exp(-0.5 * q);
      out.at(y + r, x + r) = v;
      total += v;
    }
  for (double& t : out.taps) t /= total;
  return out;
}

// delta + (G1 - G2): the raw DoG sums to 0, so the center impulse makes the
// stored basis sum exactly 1 while keeping the band-pass response.
inline FilterKernel dog_kernel(const GaussianSpec& a, const GaussianSpec& b, int k) {
  detail::check_odd(k);
  if (a == b) throw std::invalid_argument("dog_kernel: identical components give the zero filter");
  FilterKernel g1 = gaussian_kernel(a, k);
  FilterKernel g2 = gaussian_kernel(b, k);
  FilterKernel out;
  out.size = k;
  out.taps.resize(static_cast<size_t>(k) * k);
  for (size_t i = 0; i < out.taps.size(); ++i) out.taps[i] = g1.taps[i] - g2.taps[i];
  out.at(k / 2, k / 2) += 1.0;
  return out;
}

// ---- configuration ---------------------------------------------------------

struct DogPairConfig {
  double gamma_a = 1.0, ratio_a = 1.0;
  double gamma_b = 1.0, ratio_b = 1.0;
  double theta_step_degrees = 0.0;  // 0 means a single filter at theta = 0
};

struct DictionaryConfig {
  int k = 5;
  int L = 72;
  std::vector<double> gammas;
  std::vector<double> ratios;  // r = sigma2 / sigma1, sigma1 baseline is 1
  double theta_step_degrees = 15.0;
  std::vector<DogPairConfig> dog_pairs;
  std::string preset = "72";
};

inline DictionaryConfig preset_config(const std::string& name) {
  DictionaryConfig c;
  c.preset = name;
  if (name == "72") {
    c.L = 72;
    c.gammas = {0.6, 1.0, 1.5};
    c.ratios = {0.2, 1.0};
    c.theta_step_degrees = 15.0;
    c.dog_pairs = {
        {1.0, 0.2, 1.0, 1.0, 15.0},
        {1.5, 0.2, 1.5, 1.0, 15.0},
        {0.6, 0.2, 0.6, 1.0, 30.0},
        {0.6, 1.0, 1.0, 1.0, 0.0},
        {1.0, 1.0, 1.5, 1.0, 0.0},
        {0.6, 1.0, 1.5, 1.0, 0.0},
    };
  } else if (name == "24") {
    c.L = 24;
    c.gammas = {1.0};
    c.ratios = {0.2, 1.0};
    c.theta_step_degrees = 15.0;
    c.dog_pairs = {
        {1.0, 0.2, 1.0, 1.0, 18.0},
        {0.6, 1.0, 1.0, 1.0, 0.0},
    };
  } else if (name == "14") {
    c.L = 14;
    c.gammas = {1.0};
    c.ratios = {0.2, 1.0};
    c.theta_step_degrees = 30.0;
    c.dog_pairs = {
        {1.0, 0.2, 1.0, 1.0, 30.0},
        {0.6, 1.0, 1.0, 1.0, 0.0},
    };
  } else {
    throw std::invalid_argument("unknown dictionary preset '" + name + "'");
  }
  return c;
}

inline DictionaryConfig dictionary_config_from_json(const nlohmann::json& j) {
  if (j.contains("preset") && j.size() == 1) return preset_config(j.at("preset").get<std::string>());
  DictionaryConfig c;
  if (j.contains("preset")) c = preset_config(j.at("preset").get<std::string>());
  if (j.contains("k")) c.k = j.at("k").get<int>();
  if (j.contains("L")) c.L = j.at("L").get<int>();
  if (j.contains("gammas")) c.gammas = j.at("gammas").get<std::vector<double>>();
  if (j.contains("ratios")) c.ratios = j.at("ratios").get<std::vector<double>>();
  if (j.contains("theta_step_degrees")) c.theta_step_degrees = j.at("theta_step_degrees").get<double>();
  if (j.contains("dog_pairs")) {
    c.dog_pairs.clear();
    for (const auto& p : j.at("dog_pairs")) {
      DogPairConfig d;
      d.gamma_a = p.at("a").at("gamma").get<double>();
      d.ratio_a = p.at("a").at("ratio").get<double>();
      d.gamma_b = p.at("b").at("gamma").get<double>();
      d.ratio_b = p.at("b").at("ratio").get<double>();
      if (p.contains("theta_step_degrees")) d.theta_step_degrees = p.at("theta_step_degrees").get<double>();
      c.dog_pairs.push_back(d);
    }
  }
  return c;
}

inline nlohmann::json dictionary_config_to_json(const DictionaryConfig& c) {
  nlohmann::json j;
  j["preset"] = c.preset;
  j["k"] = c.k;
  j["L"] = c.L;
  j["gammas"] = c.gammas;
  j["ratios"] = c.ratios;
  j["theta_step_degrees"] = c.theta_step_degrees;
  j["dog_pairs"] = nlohmann::json::array();
  for (const auto& p : c.dog_pairs) {
    nlohmann::json e;
    e["a"] = {{"gamma", p.gamma_a}, {"ratio", p.ratio_a}};
    e["b"] = {{"gamma", p.gamma_b}, {"ratio", p.ratio_b}};
    e["theta_step_degrees"] = p.theta_step_degrees;
    j["dog_pairs"].push_back(e);
  }
  return j;
}

// ---- builders --------------------------------------------------------------

// Deterministic enumeration: Gaussians first (gamma-major, then ratio, then
// theta; isotropic entries appear once), then DoG pairs in listed order.
inline Dictionary build_dictionary(const DictionaryConfig& cfg) {
  detail::check_odd(cfg.k);
  Dictionary d;
  d.k = cfg.k;
  d.tag = cfg.preset.empty() ? "grid" : cfg.preset;
  constexpr double deg = std::numbers::pi / 180.0;
  for (double gamma : cfg.gammas)
    for (double ratio : cfg.ratios) {
      bool iso = ratio == 1.0;
      int steps = iso ? 1 : static_cast<int>(std::round(180.0 / cfg.theta_step_degrees));
      for (int t = 0; t < steps; ++t) {
        GaussianSpec g{gamma, t * cfg.theta_step_degrees * deg, 1.0, ratio};
        d.bases.push_back(gaussian_kernel(g, cfg.k));
        d.specs.push_back({BasisSpec::Kind::Gaussian, g, {}});
      }
    }
  for (const auto& p : cfg.dog_pairs) {
    int steps = p.theta_step_degrees > 0.0
                    ? static_cast<int>(std::round(180.0 / p.theta_step_degrees))
                    : 1;
    for (int t = 0; t < steps; ++t) {
      double theta = p.theta_step_degrees > 0.0 ? t * p.theta_step_degrees * deg : 0.0;
      GaussianSpec a{p.gamma_a, theta, 1.0, p.ratio_a};
      GaussianSpec b{p.gamma_b, theta, 1.0, p.ratio_b};
      d.bases.push_back(dog_kernel(a, b, cfg.k));
      d.specs.push_back({BasisSpec::Kind::Dog, a, b});
    }
  }
  d.L = static_cast<int>(d.bases.size());
  if (d.L != cfg.L)
    throw std::invalid_argument("dictionary grid produced " + std::to_string(d.L) +
                                " filters but config declares L=" + std::to_string(cfg.L));
  return d;
}

// Seeded uniform(-1,1) taps, each filter shifted then scaled to sum 1.
inline Dictionary random_dictionary(uint64_t seed, int L, int k) {
  detail::check_odd(k);
  if (L < 1) throw std::invalid_argument("random_dictionary: L must be >= 1");
  std::mt19937_64 rng(seed);
  Dictionary d;
  d.L = L;
  d.k = k;
  d.tag = "random";
  int kk = k * k;
  for (int i = 0; i < L; ++i) {
    FilterKernel f;
    f.size = k;
    f.taps.resize(kk);
    for (double& t : f.taps) {
      // uniform in (-1, 1) from the raw 64-bit stream; bit-stable across platforms
      t = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
    }
    double s = f.sum();
    if (std::abs(s) < 1e-3) {
      // shift so the sum is safely away from zero before scaling
      double shift = (1.0 - s) / kk;
      for (double& t : f.taps) t += shift;
      s = 1.0;
    }
    for (double& t : f.taps) t /= s;
    d.bases.push_back(std::move(f));
  }
  return d;
}

// Dictionary whose row j is listed in cfg order; delta basis helper for tests.
inline FilterKernel delta_kernel(int k) {
  detail::check_odd(k);
  FilterKernel f;
  f.size = k;
  f.taps.assign(static_cast<size_t>(k) * k, 0.0);
  f.at(k / 2, k / 2) = 1.0;
  return f;
}

// ---- serialization ---------------------------------------------------------

inline void save_dictionary(const Dictionary& d, const std::string& path) {
  BinaryWriter w;
  w.bytes("LDIC", 4);
  w.u16(1);
  w.u32(static_cast<uint32_t>(d.L));
  w.u32(static_cast<uint32_t>(d.k));
  for (const auto& f : d.bases)
    for (double t : f.taps) w.f64(t);
  nlohmann::json meta;
  meta["tag"] = d.tag;
  meta["specs"] = nlohmann::json::array();
  for (const auto& s : d.specs) {
    nlohmann::json e;
    e["kind"] = s.kind == BasisSpec::Kind::Gaussian ? "gaussian" : "dog";
    e["a"] = {{"gamma", s.a.gamma}, {"theta", s.a.theta}, {"sigma1", s.a.sigma1}, {"sigma2", s.a.sigma2}};
    if (s.kind == BasisSpec::Kind::Dog)
      e["b"] = {{"gamma", s.b.gamma}, {"theta", s.b.theta}, {"sigma1", s.b.sigma1}, {"sigma2", s.b.sigma2}};
    meta["specs"].push_back(e);
  }
  w.str(meta.dump());
  w.finish(path);
}

inline Dictionary load_dictionary(const std::string& path) {
  BinaryReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "LDIC") throw std::runtime_error("not a dictionary file: " + path);
  uint16_t version = r.u16();
  if (version != 1) throw std::runtime_error("unsupported dictionary version in " + path);
  Dictionary d;
  d.L = static_cast<int>(r.u32());
  d.k = static_cast<int>(r.u32());
  for (int i = 0; i < d.L; ++i) {
    FilterKernel f;
    f.size = d.k;
    f.taps.resize(static_cast<size_t>(d.k) * d.k);
    for (double& t : f.taps) t = r.f64();
    d.bases.push_back(std::move(f));
  }
  auto meta = nlohmann::json::parse(r.str());
  d.tag = meta.value("tag", "grid");
  for (const auto& e : meta["specs"]) {
    BasisSpec s;
    s.kind = e.at("kind") == "dog" ? BasisSpec::Kind::Dog : BasisSpec::Kind::Gaussian;
    auto g = [](const nlohmann::json& x) {
      return GaussianSpec{x.at("gamma"), x.at("theta"), x.at("sigma1"), x.at("sigma2")};
    };
    s.a = g(e.at("a"));
    if (s.kind == BasisSpec::Kind::Dog) s.b = g(e.at("b"));
    d.specs.push_back(s);
  }
  return d;
}

// ---- visualization ---------------------------------------------------------

// Min-max normalization to [0,1]; a constant filter maps to 0.5.
inline Image filter_to_image(const FilterKernel& f) {
  Image img(f.size, f.size, 1, ColorSpace::Gray);
  double lo = f.taps[0], hi = f.taps[0];
  for (double t : f.taps) {
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  for (int y = 0; y < f.size; ++y)
    for (int x = 0; x < f.size; ++x)
      img.at(0, y, x) = hi > lo ? (f.at(y, x) - lo) / (hi - lo) : 0.5;
  return img;
}

// Writes one PNG per basis plus a contact-sheet montage. Each tap is rendered
// as a zoom x zoom block; montage cells are separated by 2px gutters.
inline void export_filters(const Dictionary& d, const std::string& dir, int zoom = 16,
                           int columns = 12) {
  for (int i = 0; i < d.L; ++i) {
    Image small = filter_to_image(d.bases[i]);
    Image big(small.height * zoom, small.width * zoom, 1);
    for (int y = 0; y < big.height; ++y)
      for (int x = 0; x < big.width; ++x) big.at(0, y, x) = small.at(0, y / zoom, x / zoom);
    char name[32];
    std::snprintf(name, sizeof(name), "/filter_%03d.png", i);
    save_png(big, dir + name);
  }
  int cell = d.k * zoom, gap = 2;
  int rows = (d.L + columns - 1) / columns;
  Image montage(rows * cell + (rows + 1) * gap, columns * cell + (columns + 1) * gap, 1, ColorSpace::Gray, 1.0);
  for (int i = 0; i < d.L; ++i) {
    Image small = filter_to_image(d.bases[i]);
    int r0 = (i / columns) * (cell + gap) + gap;
    int c0 = (i % columns) * (cell + gap) + gap;
    for (int y = 0; y < cell; ++y)
      for (int x = 0; x < cell; ++x)
        montage.at(0, r0 + y, c0 + x) = small.at(0, y / zoom, x / zoom);
  }
  save_png(montage, dir + "/montage.png");
}

}  // namespace lapar
