#pragma once

// Dense tensors with reverse-mode automatic differentiation.
//
// Conventions: shapes are [N, C, H, W] for image-like data, row-major
// storage. conv2d implements cross-correlation (deep-learning convention,
// no kernel flip) with zero padding. Gradients accumulate across backward
// calls until zero_grad() is invoked.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lapar {

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline size_t numel_of(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("non-positive dimension in shape " + shape_str(shape));
    n *= static_cast<size_t>(d);
  }
  return n;
}

template <typename T>
struct TensorNode;

template <typename T>
using Tensor = std::shared_ptr<TensorNode<T>>;

template <typename T>
struct TensorNode {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<Tensor<T>> parents;
  std::function<void(TensorNode<T>&)> backprop;  // adds into parents' grads

  size_t numel() const { return value.size(); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
  }
};

template <typename T>
Tensor<T> make_tensor(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
  if (data.size() != numel_of(shape))
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  auto t = std::make_shared<TensorNode<T>>();
  t->shape = std::move(shape);
  t->value = std::move(data);
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> zeros(std::vector<int> shape, bool requires_grad = false) {
  size_t n = numel_of(shape);
  return make_tensor<T>(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

namespace detail {

template <typename T>
Tensor<T> make_result(std::vector<int> shape, std::vector<T> data, const char* op,
                      std::vector<Tensor<T>> parents,
                      std::function<void(TensorNode<T>&)> backprop) {
  auto t = make_tensor<T>(std::move(shape), std::move(data));
  t->op = op;
  bool any = false;
  for (auto& p : parents)
    if (p && (p->requires_grad || p->backprop)) any = true;
  if (any) {
    t->requires_grad = true;
    t->parents = std::move(parents);
    t->backprop = std::move(backprop);
  }
  return t;
}

}  // namespace detail

// ---- elementwise ops -------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a->shape != b->shape)
    throw std::invalid_argument("add: shape mismatch " + shape_str(a->shape) + " vs " +
                                shape_str(b->shape));
  std::vector<T> out(a->numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return detail::make_result<T>(a->shape, std::move(out), "add", {a, b},
      [a, b](TensorNode<T>& self) {
        if (a->requires_grad || a->backprop) {
          a->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
        }
        if (b->requires_grad || b->backprop) {
          b->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i];
        }
      });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a->shape != b->shape)
    throw std::invalid_argument("sub: shape mismatch " + shape_str(a->shape) + " vs " +
                                shape_str(b->shape));
  std::vector<T> out(a->numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return detail::make_result<T>(a->shape, std::move(out), "sub", {a, b},
      [a, b](TensorNode<T>& self) {
        if (a->requires_grad || a->backprop) {
          a->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
        }
        if (b->requires_grad || b->backprop) {
          b->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] -= self.grad[i];
        }
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a->shape != b->shape)
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a->shape) + " vs " +
                                shape_str(b->shape));
  std::vector<T> out(a->numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return detail::make_result<T>(a->shape, std::move(out), "mul", {a, b},
      [a, b](TensorNode<T>& self) {
        if (a->requires_grad || a->backprop) {
          a->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * b->value[i];
        }
        if (b->requires_grad || b->backprop) {
          b->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i] * a->value[i];
        }
      });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  if (!(slope > T(0) && slope < T(1)))
    throw std::invalid_argument("leaky_relu: slope must lie in (0,1)");
  std::vector<T> out(x->numel());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = x->value[i] >= T(0) ? x->value[i] : slope * x->value[i];
  return detail::make_result<T>(x->shape, std::move(out), "leaky_relu", {x},
      [x, slope](TensorNode<T>& self) {
        x->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          x->grad[i] += self.grad[i] * (x->value[i] >= T(0) ? T(1) : slope);
      });
}

// ---- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T s = std::accumulate(x->value.begin(), x->value.end(), T(0));
  T n = static_cast<T>(x->numel());
  return detail::make_result<T>({1}, {s / n}, "mean", {x},
      [x, n](TensorNode<T>& self) {
        x->ensure_grad();
        T g = self.grad[0] / n;
        for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = std::accumulate(x->value.begin(), x->value.end(), T(0));
  return detail::make_result<T>({1}, {s}, "sum", {x},
      [x](TensorNode<T>& self) {
        x->ensure_grad();
        for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += self.grad[0];
      });
}

// ---- shape ops -------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: empty input list");
  for (auto& p : parts)
    if (p->shape.size() != 4)
      throw std::invalid_argument("concat_channels: expected rank-4 tensors");
  const auto& s0 = parts[0]->shape;
  int ctotal = 0;
  for (auto& p : parts) {
    if (p->shape[0] != s0[0] || p->shape[2] != s0[2] || p->shape[3] != s0[3])
      throw std::invalid_argument("concat_channels: non-channel dims differ: " +
                                  shape_str(p->shape) + " vs " + shape_str(s0));
    ctotal += p->shape[1];
  }
  int n = s0[0], h = s0[2], w = s0[3];
  size_t plane = static_cast<size_t>(h) * w;
  std::vector<T> out(static_cast<size_t>(n) * ctotal * plane);
  for (int ni = 0; ni < n; ++ni) {
    size_t off = static_cast<size_t>(ni) * ctotal * plane;
    for (auto& p : parts) {
      size_t len = static_cast<size_t>(p->shape[1]) * plane;
      std::copy_n(p->value.data() + static_cast<size_t>(ni) * len, len, out.data() + off);
      off += len;
    }
  }
  std::vector<Tensor<T>> parents = parts;
  return detail::make_result<T>({n, ctotal, h, w}, std::move(out), "concat_channels",
      parents,
      [parents, n, plane, ctotal](TensorNode<T>& self) {
        for (int ni = 0; ni < n; ++ni) {
          size_t off = static_cast<size_t>(ni) * ctotal * plane;
          for (auto& p : parents) {
            size_t len = static_cast<size_t>(p->shape[1]) * plane;
            if (p->requires_grad || p->backprop) {
              p->ensure_grad();
              for (size_t i = 0; i < len; ++i)
                p->grad[static_cast<size_t>(ni) * len + i] += self.grad[off + i];
            }
            off += len;
          }
        }
      });
}

// Sums over the channel axis, producing a single-channel tensor.
template <typename T>
Tensor<T> sum_channels(const Tensor<T>& x) {
  if (x->shape.size() != 4) throw std::invalid_argument("sum_channels: expected rank-4 tensor");
  int n = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
  size_t plane = static_cast<size_t>(h) * w;
  std::vector<T> out(static_cast<size_t>(n) * plane, T(0));
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const T* src = x->value.data() + (static_cast<size_t>(ni) * c + ci) * plane;
      T* dst = out.data() + static_cast<size_t>(ni) * plane;
      for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  return detail::make_result<T>({n, 1, h, w}, std::move(out), "sum_channels", {x},
      [x, n, c, plane](TensorNode<T>& self) {
        x->ensure_grad();
        for (int ni = 0; ni < n; ++ni)
          for (int ci = 0; ci < c; ++ci) {
            T* dst = x->grad.data() + (static_cast<size_t>(ni) * c + ci) * plane;
            const T* src = self.grad.data() + static_cast<size_t>(ni) * plane;
            for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
          }
      });
}

// Depth-to-space: [N, C*s^2, H, W] -> [N, C, H*s, W*s].
// out[n,c,h*s+a,w*s+b] = in[n, c*s^2 + a*s + b, h, w].
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int s) {
  if (x->shape.size() != 4) throw std::invalid_argument("pixel_shuffle: expected rank-4 tensor");
  if (s < 1) throw std::invalid_argument("pixel_shuffle: scale must be >= 1");
  int n = x->shape[0], cin = x->shape[1], h = x->shape[2], w = x->shape[3];
  if (cin % (s * s) != 0)
    throw std::invalid_argument("pixel_shuffle: channel count " + std::to_string(cin) +
                                " not divisible by s^2 = " + std::to_string(s * s));
  int c = cin / (s * s);
  int ho = h * s, wo = w * s;
  std::vector<T> out(static_cast<size_t>(n) * c * ho * wo);
  auto in_idx = [&](int ni, int ci, int hi, int wi) {
    return ((static_cast<size_t>(ni) * cin + ci) * h + hi) * w + wi;
  };
  auto out_idx = [&](int ni, int ci, int hi, int wi) {
    return ((static_cast<size_t>(ni) * c + ci) * ho + hi) * wo + wi;
  };
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      for (int a = 0; a < s; ++a)
        for (int b = 0; b < s; ++b)
          for (int hi = 0; hi < h; ++hi)
            for (int wi = 0; wi < w; ++wi)
              out[out_idx(ni, ci, hi * s + a, wi * s + b)] =
                  x->value[in_idx(ni, ci * s * s + a * s + b, hi, wi)];
  return detail::make_result<T>({n, c, ho, wo}, std::move(out), "pixel_shuffle", {x},
      [x, n, c, cin, h, w, s](TensorNode<T>& self) {
        x->ensure_grad();
        int ho = h * s, wo = w * s;
        for (int ni = 0; ni < n; ++ni)
          for (int ci = 0; ci < c; ++ci)
            for (int a = 0; a < s; ++a)
              for (int b = 0; b < s; ++b)
                for (int hi = 0; hi < h; ++hi)
                  for (int wi = 0; wi < w; ++wi)
                    x->grad[((static_cast<size_t>(ni) * cin + ci * s * s + a * s + b) * h + hi) * w +
                            wi] +=
                        self.grad[((static_cast<size_t>(ni) * c + ci) * ho + hi * s + a) * wo +
                                  wi * s + b];
      });
}

// ---- convolution -----------------------------------------------------------

namespace detail {

// out += cross-correlation(in, weight); raw arrays, stride/zero-padding.
template <typename T>
void conv2d_forward_raw(const T* in, const T* weight, const T* bias, T* out, int n, int cin,
                        int h, int w, int cout, int kh, int kw, int stride, int pad, int ho,
                        int wo) {
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
  for (int ni = 0; ni < n; ++ni)
    for (int co = 0; co < cout; ++co) {
      T* optr = out + (static_cast<size_t>(ni) * cout + co) * ho * wo;
      if (bias) {
        T b = bias[co];
        for (int i = 0; i < ho * wo; ++i) optr[i] = b;
      } else {
        std::fill_n(optr, static_cast<size_t>(ho) * wo, T(0));
      }
      for (int ci = 0; ci < cin; ++ci) {
        const T* iptr = in + (static_cast<size_t>(ni) * cin + ci) * h * w;
        const T* wptr = weight + (static_cast<size_t>(co) * cin + ci) * kh * kw;
        for (int a = 0; a < kh; ++a)
          for (int b = 0; b < kw; ++b) {
            T wv = wptr[a * kw + b];
            if (wv == T(0)) continue;
            for (int oh = 0; oh < ho; ++oh) {
              int ih = oh * stride - pad + a;
              if (ih < 0 || ih >= h) continue;
              const T* irow = iptr + static_cast<size_t>(ih) * w;
              T* orow = optr + static_cast<size_t>(oh) * wo;
              if (stride == 1) {
                int lo = std::max(0, pad - b);
                int hi = std::min(wo, w + pad - b);
                const T* ir = irow + lo - pad + b;
                for (int ow = lo; ow < hi; ++ow) orow[ow] += wv * ir[ow - lo];
              } else {
                for (int ow = 0; ow < wo; ++ow) {
                  int iw = ow * stride - pad + b;
                  if (iw >= 0 && iw < w) orow[ow] += wv * irow[iw];
                }
              }
            }
          }
      }
    }
}

template <typename T>
void conv2d_backward_raw(const T* in, const T* weight, const T* dout, T* din, T* dweight,
                         T* dbias, int n, int cin, int h, int w, int cout, int kh, int kw,
                         int stride, int pad, int ho, int wo) {
  if (dbias) {
    for (int co = 0; co < cout; ++co) {
      T acc = T(0);
      for (int ni = 0; ni < n; ++ni) {
        const T* dptr = dout + (static_cast<size_t>(ni) * cout + co) * ho * wo;
        for (int i = 0; i < ho * wo; ++i) acc += dptr[i];
      }
      dbias[co] += acc;
    }
  }
  if (dweight) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int co = 0; co < cout; ++co)
      for (int ci = 0; ci < cin; ++ci)
        for (int a = 0; a < kh; ++a)
          for (int b = 0; b < kw; ++b) {
            T acc = T(0);
            for (int ni = 0; ni < n; ++ni) {
              const T* iptr = in + (static_cast<size_t>(ni) * cin + ci) * h * w;
              const T* dptr = dout + (static_cast<size_t>(ni) * cout + co) * ho * wo;
              for (int oh = 0; oh < ho; ++oh) {
                int ih = oh * stride - pad + a;
                if (ih < 0 || ih >= h) continue;
                const T* irow = iptr + static_cast<size_t>(ih) * w;
                const T* drow = dptr + static_cast<size_t>(oh) * wo;
                for (int ow = 0; ow < wo; ++ow) {
                  int iw = ow * stride - pad + b;
                  if (iw >= 0 && iw < w) acc += drow[ow] * irow[iw];
                }
              }
            }
            dweight[((static_cast<size_t>(co) * cin + ci) * kh + a) * kw + b] += acc;
          }
  }
  if (din) {
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < cin; ++ci) {
        T* dptr = din + (static_cast<size_t>(ni) * cin + ci) * h * w;
        for (int co = 0; co < cout; ++co) {
          const T* wptr = weight + (static_cast<size_t>(co) * cin + ci) * kh * kw;
          const T* gptr = dout + (static_cast<size_t>(ni) * cout + co) * ho * wo;
          for (int a = 0; a < kh; ++a)
            for (int b = 0; b < kw; ++b) {
              T wv = wptr[a * kw + b];
              if (wv == T(0)) continue;
              for (int oh = 0; oh < ho; ++oh) {
                int ih = oh * stride - pad + a;
                if (ih < 0 || ih >= h) continue;
                T* drow = dptr + static_cast<size_t>(ih) * w;
                const T* grow = gptr + static_cast<size_t>(oh) * wo;
                for (int ow = 0; ow < wo; ++ow) {
                  int iw = ow * stride - pad + b;
                  if (iw >= 0 && iw < w) drow[iw] += wv * grow[ow];
                }
              }
            }
        }
      }
  }
}

inline void check_conv_args(const std::vector<int>& is, const std::vector<int>& ws, int stride,
                            int pad) {
  if (is.size() != 4 || ws.size() != 4)
    throw std::invalid_argument("conv2d: expected rank-4 input and weight");
  if (ws[2] % 2 == 0 || ws[3] % 2 == 0)
    throw std::invalid_argument("conv2d: kernel dims must be odd, got " + shape_str(ws));
  if (pad < 0 || stride < 1) throw std::invalid_argument("conv2d: invalid stride/padding");
  if (is[1] != ws[1])
    throw std::invalid_argument("conv2d: input channels " + shape_str(is) +
                                " disagree with weight " + shape_str(ws));
  if ((is[2] + 2 * pad - ws[2]) / stride + 1 < 1 || (is[3] + 2 * pad - ws[3]) / stride + 1 < 1)
    throw std::invalid_argument("conv2d: output would be empty for input " + shape_str(is));
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int padding = 0) {
  detail::check_conv_args(input->shape, weight->shape, stride, padding);
  int n = input->shape[0], cin = input->shape[1], h = input->shape[2], w = input->shape[3];
  int cout = weight->shape[0], kh = weight->shape[2], kw = weight->shape[3];
  if (bias && (bias->shape != std::vector<int>{cout}))
    throw std::invalid_argument("conv2d: bias shape " + shape_str(bias->shape) +
                                " does not match Cout " + std::to_string(cout));
  int ho = (h + 2 * padding - kh) / stride + 1;
  int wo = (w + 2 * padding - kw) / stride + 1;
  std::vector<T> out(static_cast<size_t>(n) * cout * ho * wo);
  detail::conv2d_forward_raw(input->value.data(), weight->value.data(),
                             bias ? bias->value.data() : nullptr, out.data(), n, cin, h, w, cout,
                             kh, kw, stride, padding, ho, wo);
  std::vector<Tensor<T>> parents = {input, weight};
  if (bias) parents.push_back(bias);
  return detail::make_result<T>({n, cout, ho, wo}, std::move(out), "conv2d", parents,
      [input, weight, bias, n, cin, h, w, cout, kh, kw, stride, padding, ho,
       wo](TensorNode<T>& self) {
        T* din = nullptr;
        T* dw = nullptr;
        T* db = nullptr;
        if (input->requires_grad || input->backprop) {
          input->ensure_grad();
          din = input->grad.data();
        }
        if (weight->requires_grad || weight->backprop) {
          weight->ensure_grad();
          dw = weight->grad.data();
        }
        if (bias && (bias->requires_grad || bias->backprop)) {
          bias->ensure_grad();
          db = bias->grad.data();
        }
        detail::conv2d_backward_raw(input->value.data(), weight->value.data(), self.grad.data(),
                                    din, dw, db, n, cin, h, w, cout, kh, kw, stride, padding, ho,
                                    wo);
      });
}

// Weight-normalized convolution: effective weight per output channel c is
// gain[c] * direction[c] / ||direction[c]||_2.
template <typename T>
Tensor<T> weight_norm_conv2d(const Tensor<T>& input, const Tensor<T>& direction,
                             const Tensor<T>& gain, const Tensor<T>& bias, int stride = 1,
                             int padding = 0) {
  detail::check_conv_args(input->shape, direction->shape, stride, padding);
  int cout = direction->shape[0];
  if (gain->shape != std::vector<int>{cout})
    throw std::invalid_argument("weight_norm_conv2d: gain shape " + shape_str(gain->shape) +
                                " does not match Cout " + std::to_string(cout));
  size_t per = direction->numel() / cout;
  std::vector<T> norms(cout);
  std::vector<T> eff(direction->numel());
  for (int c = 0; c < cout; ++c) {
    T s = T(0);
    const T* v = direction->value.data() + per * c;
    for (size_t i = 0; i < per; ++i) s += v[i] * v[i];
    norms[c] = std::sqrt(s);
    if (!(norms[c] > T(0)))
      throw std::invalid_argument("weight_norm_conv2d: zero-norm direction at channel " +
                                  std::to_string(c));
    T scale = gain->value[c] / norms[c];
    for (size_t i = 0; i < per; ++i) eff[per * c + i] = scale * v[i];
  }
  int n = input->shape[0], cin = input->shape[1], h = input->shape[2], w = input->shape[3];
  int kh = direction->shape[2], kw = direction->shape[3];
  int ho = (h + 2 * padding - kh) / stride + 1;
  int wo = (w + 2 * padding - kw) / stride + 1;
  std::vector<T> out(static_cast<size_t>(n) * cout * ho * wo);
  detail::conv2d_forward_raw(input->value.data(), eff.data(),
                             bias ? bias->value.data() : nullptr, out.data(), n, cin, h, w, cout,
                             kh, kw, stride, padding, ho, wo);
  std::vector<Tensor<T>> parents = {input, direction, gain};
  if (bias) parents.push_back(bias);
  auto eff_shared = std::make_shared<std::vector<T>>(std::move(eff));
  auto norms_shared = std::make_shared<std::vector<T>>(std::move(norms));
  return detail::make_result<T>({n, cout, ho, wo}, std::move(out), "weight_norm_conv2d", parents,
      [input, direction, gain, bias, eff_shared, norms_shared, per, n, cin, h, w, cout, kh, kw,
       stride, padding, ho, wo](TensorNode<T>& self) {
        T* din = nullptr;
        if (input->requires_grad || input->backprop) {
          input->ensure_grad();
          din = input->grad.data();
        }
        bool need_w = (direction->requires_grad || direction->backprop) ||
                      (gain->requires_grad || gain->backprop);
        std::vector<T> dweff;
        if (need_w) dweff.assign(eff_shared->size(), T(0));
        T* db = nullptr;
        if (bias && (bias->requires_grad || bias->backprop)) {
          bias->ensure_grad();
          db = bias->grad.data();
        }
        detail::conv2d_backward_raw(input->value.data(), eff_shared->data(), self.grad.data(),
                                    din, need_w ? dweff.data() : nullptr, db, n, cin, h, w, cout,
                                    kh, kw, stride, padding, ho, wo);
        if (!need_w) return;
        // w = g * v / ||v||:
        //   dg = <dW, v>/||v||,  dv = (g/||v||) (dW - (<dW, v>/||v||^2) v)
        for (int c = 0; c < cout; ++c) {
          const T* v = direction->value.data() + per * c;
          const T* dw = dweff.data() + per * c;
          T nv = (*norms_shared)[c];
          T dot = T(0);
          for (size_t i = 0; i < per; ++i) dot += dw[i] * v[i];
          if (gain->requires_grad || gain->backprop) {
            gain->ensure_grad();
            gain->grad[c] += dot / nv;
          }
          if (direction->requires_grad || direction->backprop) {
            direction->ensure_grad();
            T g = gain->value[c];
            T* dv = direction->grad.data() + per * c;
            for (size_t i = 0; i < per; ++i)
              dv[i] += (g / nv) * (dw[i] - (dot / (nv * nv)) * v[i]);
          }
        }
      });
}

// ---- loss ------------------------------------------------------------------

// Mean over elements of sqrt((pred - target)^2 + eps^2).
template <typename T>
Tensor<T> charbonnier_loss(const Tensor<T>& pred, const Tensor<T>& target, T eps) {
  if (pred->shape != target->shape)
    throw std::invalid_argument("charbonnier_loss: shape mismatch " + shape_str(pred->shape) +
                                " vs " + shape_str(target->shape));
  if (!(eps > T(0))) throw std::invalid_argument("charbonnier_loss: eps must be positive");
  T acc = T(0);
  size_t n = pred->numel();
  for (size_t i = 0; i < n; ++i) {
    T r = pred->value[i] - target->value[i];
    acc += std::sqrt(r * r + eps * eps);
  }
  return detail::make_result<T>({1}, {acc / static_cast<T>(n)}, "charbonnier", {pred, target},
      [pred, target, eps, n](TensorNode<T>& self) {
        T g0 = self.grad[0] / static_cast<T>(n);
        auto push = [&](const Tensor<T>& t, T sign) {
          if (!(t->requires_grad || t->backprop)) return;
          t->ensure_grad();
          for (size_t i = 0; i < n; ++i) {
            T r = pred->value[i] - target->value[i];
            t->grad[i] += sign * g0 * r / std::sqrt(r * r + eps * eps);
          }
        };
        push(pred, T(1));
        push(target, T(-1));
      });
}

// ---- backward --------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss->numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss->shape));
  // Reverse topological order over the tape DAG; each node visited once.
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> seen;
  std::vector<std::pair<TensorNode<T>*, size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode<T>* p = node->parents[idx++].get();
      if (p && !seen.count(p) && (p->requires_grad || p->backprop)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior grads are scratch per pass; leaf grads accumulate across calls.
  for (auto* node : order)
    if (node->backprop) {
      node->ensure_grad();
      node->zero_grad();
    }
  loss->ensure_grad();
  loss->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* node = *it;
    if (node->backprop) {
      node->ensure_grad();
      node->backprop(*node);
    }
  }
}

}  // namespace lapar
