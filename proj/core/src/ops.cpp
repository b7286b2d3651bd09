#include "msfmamba/ops.hpp"

#include <algorithm>
#include <cmath>

namespace msf {

namespace {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " differ");
  }
}

template <typename T>
const Tensor<T>& in(const Node<T>& self, std::size_t i) {
  return self.parents[i]->value;
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return make_op<T>(std::move(out), {a, b},
                    [](const Node<T>&, const Tensor<T>& g) { return std::vector<Tensor<T>>{g, g}; }, "add");
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return make_op<T>(std::move(out), {a, b},
                    [](const Node<T>&, const Tensor<T>& g) {
                      Tensor<T> neg = g;
                      for (auto& v : neg.data()) v = -v;
                      return std::vector<Tensor<T>>{g, std::move(neg)};
                    },
                    "sub");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return make_op<T>(std::move(out), {a, b},
                    [](const Node<T>& self, const Tensor<T>& g) {
                      const auto& av = in(self, 0);
                      const auto& bv = in(self, 1);
                      Tensor<T> ga(g.shape()), gb(g.shape());
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        ga[i] = g[i] * bv[i];
                        gb[i] = g[i] * av[i];
                      }
                      return std::vector<Tensor<T>>{std::move(ga), std::move(gb)};
                    },
                    "mul");
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= factor;
  return make_op<T>(std::move(out), {a},
                    [factor](const Node<T>&, const Tensor<T>& g) {
                      Tensor<T> ga = g;
                      for (auto& v : ga.data()) v *= factor;
                      return std::vector<Tensor<T>>{std::move(ga)};
                    },
                    "scale");
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (T v : a.value().data()) s += v;
  return make_op<T>(Tensor<T>::scalar(s), {a},
                    [](const Node<T>& self, const Tensor<T>& g) {
                      return std::vector<Tensor<T>>{Tensor<T>(in(self, 0).shape(), g[0])};
                    },
                    "sum");
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape& xs = x.shape();
  if (weight.value().rank() != 2 || xs.back() != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_to_string(xs) + " vs weight " + shape_to_string(weight.shape()));
  }
  const std::size_t cin = weight.dim(0);
  const std::size_t cout = weight.dim(1);
  if (bias.defined() && (bias.value().rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("linear: bias " + shape_to_string(bias.shape()) + " vs output width " +
                         std::to_string(cout));
  }
  const std::size_t rows = x.value().size() / cin;
  Shape os = xs;
  os.back() = cout;
  Tensor<T> out(os);
  const T* xv = x.value().data().data();
  const T* wv = weight.value().data().data();
  T* ov = out.data().data();
  for (std::size_t m = 0; m < rows; ++m) {
    T* orow = ov + m * cout;
    if (bias.defined()) {
      const T* bv = bias.value().data().data();
      for (std::size_t j = 0; j < cout; ++j) orow[j] = bv[j];
    }
    for (std::size_t i = 0; i < cin; ++i) {
      const T xi = xv[m * cin + i];
      const T* wrow = wv + i * cout;
      for (std::size_t j = 0; j < cout; ++j) orow[j] += xi * wrow[j];
    }
  }
  std::vector<Var<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return make_op<T>(
      std::move(out), std::move(parents),
      [rows, cin, cout, has_bias](const Node<T>& self, const Tensor<T>& g) {
        const auto& xt = in(self, 0);
        const auto& wt = in(self, 1);
        const T* gv = g.data().data();
        std::vector<Tensor<T>> res;
        Tensor<T> gx, gw, gb;
        if (self.parents[0]->requires_grad) {
          gx = Tensor<T>(xt.shape());
          T* gxv = gx.data().data();
          const T* wv = wt.data().data();
          for (std::size_t m = 0; m < rows; ++m) {
            const T* grow = gv + m * cout;
            for (std::size_t i = 0; i < cin; ++i) {
              const T* wrow = wv + i * cout;
              T acc = 0;
              for (std::size_t j = 0; j < cout; ++j) acc += grow[j] * wrow[j];
              gxv[m * cin + i] = acc;
            }
          }
        }
        if (self.parents[1]->requires_grad) {
          gw = Tensor<T>(wt.shape());
          T* gwv = gw.data().data();
          const T* xv = xt.data().data();
          for (std::size_t m = 0; m < rows; ++m) {
            const T* grow = gv + m * cout;
            for (std::size_t i = 0; i < cin; ++i) {
              const T xi = xv[m * cin + i];
              T* gwrow = gwv + i * cout;
              for (std::size_t j = 0; j < cout; ++j) gwrow[j] += xi * grow[j];
            }
          }
        }
        res.push_back(std::move(gx));
        res.push_back(std::move(gw));
        if (has_bias) {
          gb = Tensor<T>(Shape{cout});
          for (std::size_t m = 0; m < rows; ++m) {
            for (std::size_t j = 0; j < cout; ++j) gb[j] += gv[m * cout + j];
          }
          res.push_back(std::move(gb));
        }
        return res;
      },
      "linear");
}

template <typename T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& kernel, int stride, const Var<T>& bias) {
  if (stride != 1 && stride != 2) throw ConfigError("depthwise_conv2d: stride must be 1 or 2");
  if (x.value().rank() != 3) throw DimensionError("depthwise_conv2d: input must be [H,W,C]");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (kernel.shape() != Shape{3, 3, C}) {
    throw DimensionError("depthwise_conv2d: kernel " + shape_to_string(kernel.shape()) + " for " +
                         std::to_string(C) + " channels");
  }
  if (bias.defined() && bias.shape() != Shape{C}) throw DimensionError("depthwise_conv2d: bias shape");
  const std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t Ho = (H + s - 1) / s, Wo = (W + s - 1) / s;
  Tensor<T> out(Shape{Ho, Wo, C});
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  for (std::size_t oy = 0; oy < Ho; ++oy) {
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      T* orow = &out.at(oy, ox, 0);
      if (bias.defined()) {
        for (std::size_t c = 0; c < C; ++c) orow[c] = bias.value()[c];
      }
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const long iy = static_cast<long>(oy * s + ky) - 1;
        if (iy < 0 || iy >= static_cast<long>(H)) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const long ix = static_cast<long>(ox * s + kx) - 1;
          if (ix < 0 || ix >= static_cast<long>(W)) continue;
          const T* xrow = &xv.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), 0);
          const T* krow = &kv.at(ky, kx, 0);
          for (std::size_t c = 0; c < C; ++c) orow[c] += xrow[c] * krow[c];
        }
      }
    }
  }
  std::vector<Var<T>> parents{x, kernel};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return make_op<T>(
      std::move(out), std::move(parents),
      [H, W, C, Ho, Wo, s, has_bias](const Node<T>& self, const Tensor<T>& g) {
        const auto& xv = in(self, 0);
        const auto& kv = in(self, 1);
        Tensor<T> gx(xv.shape()), gk(kv.shape());
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const T* grow = &g.at(oy, ox, 0);
            for (std::size_t ky = 0; ky < 3; ++ky) {
              const long iy = static_cast<long>(oy * s + ky) - 1;
              if (iy < 0 || iy >= static_cast<long>(H)) continue;
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const long ix = static_cast<long>(ox * s + kx) - 1;
                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                const auto uy = static_cast<std::size_t>(iy), ux = static_cast<std::size_t>(ix);
                const T* xrow = &xv.at(uy, ux, 0);
                const T* krow = &kv.at(ky, kx, 0);
                T* gxrow = &gx.at(uy, ux, 0);
                T* gkrow = &gk.at(ky, kx, 0);
                for (std::size_t c = 0; c < C; ++c) {
                  gxrow[c] += grow[c] * krow[c];
                  gkrow[c] += grow[c] * xrow[c];
                }
              }
            }
          }
        }
        std::vector<Tensor<T>> res{std::move(gx), std::move(gk)};
        if (has_bias) {
          Tensor<T> gb(Shape{C});
          for (std::size_t p = 0; p < Ho * Wo; ++p) {
            for (std::size_t c = 0; c < C; ++c) gb[c] += g[p * C + c];
          }
          res.push_back(std::move(gb));
        }
        return res;
      },
      "depthwise_conv2d");
}

template <typename T>
Var<T> silu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v * sigmoid_value(v);
  return make_op<T>(std::move(out), {x},
                    [](const Node<T>& self, const Tensor<T>& g) {
                      const auto& xv = in(self, 0);
                      Tensor<T> gx(xv.shape());
                      for (std::size_t i = 0; i < xv.size(); ++i) {
                        const T sg = sigmoid_value(xv[i]);
                        gx[i] = g[i] * sg * (T(1) + xv[i] * (T(1) - sg));
                      }
                      return std::vector<Tensor<T>>{std::move(gx)};
                    },
                    "silu");
}

template <typename T>
Var<T> softplus(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = softplus_value(v);
  return make_op<T>(std::move(out), {x},
                    [](const Node<T>& self, const Tensor<T>& g) {
                      const auto& xv = in(self, 0);
                      Tensor<T> gx(xv.shape());
                      for (std::size_t i = 0; i < xv.size(); ++i) gx[i] = g[i] * sigmoid_value(xv[i]);
                      return std::vector<Tensor<T>>{std::move(gx)};
                    },
                    "softplus");
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  if (eps <= 0) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t C = x.shape().back();
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
    throw DimensionError("layer_norm: gamma/beta must be [" + std::to_string(C) + "]");
  }
  const std::size_t rows = x.value().size() / C;
  Tensor<T> out(x.shape());
  // Per-row normalized values and inverse std, kept for the vjp.
  Tensor<T> xhat(x.shape());
  std::vector<T> inv_std(rows);
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = &xv[r * C];
    T mu = 0;
    for (std::size_t c = 0; c < C; ++c) mu += row[c];
    mu /= static_cast<T>(C);
    T var = 0;
    for (std::size_t c = 0; c < C; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<T>(C);
    const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    inv_std[r] = is;
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (row[c] - mu) * is;
      xhat[r * C + c] = h;
      out[r * C + c] = gv[c] * h + bv[c];
    }
  }
  return make_op<T>(
      std::move(out), {x, gamma, beta},
      [rows, C, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Node<T>& self, const Tensor<T>& g) {
        const auto& gv = in(self, 1);
        Tensor<T> gx(xhat.shape()), gg(Shape{C}), gb(Shape{C});
        for (std::size_t r = 0; r < rows; ++r) {
          T s1 = 0, s2 = 0;
          for (std::size_t c = 0; c < C; ++c) {
            const T dh = g[r * C + c] * gv[c];
            s1 += dh;
            s2 += dh * xhat[r * C + c];
            gg[c] += g[r * C + c] * xhat[r * C + c];
            gb[c] += g[r * C + c];
          }
          const T invc = T(1) / static_cast<T>(C);
          for (std::size_t c = 0; c < C; ++c) {
            const T dh = g[r * C + c] * gv[c];
            gx[r * C + c] = inv_std[r] * (dh - invc * s1 - xhat[r * C + c] * invc * s2);
          }
        }
        return std::vector<Tensor<T>>{std::move(gx), std::move(gg), std::move(gb)};
      },
      "layer_norm");
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> interp_taps(std::size_t in, std::size_t out, InterpMode mode) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    if (mode == InterpMode::Nearest) {
      const auto i = std::min(in - 1, static_cast<std::size_t>(std::floor(static_cast<double>(d) * ratio)));
      taps[d] = {i, i, 0.0};
      continue;
    }
    double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double w1 = i1 == i0 ? 0.0 : src - static_cast<double>(i0);
    taps[d] = {i0, i1, w1};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> interpolate_up2(const Var<T>& x, std::size_t height, std::size_t width, InterpMode mode) {
  if (x.value().rank() != 3) throw DimensionError("interpolate_up2: input must be [h,w,C]");
  const std::size_t h = x.dim(0), w = x.dim(1), C = x.dim(2);
  if (height < h || width < w) {
    throw DimensionError("interpolate_up2: target " + std::to_string(height) + "x" + std::to_string(width) +
                         " smaller than source " + std::to_string(h) + "x" + std::to_string(w));
  }
  if (height == h && width == w) return x;
  const auto ty = interp_taps(h, height, mode);
  const auto tx = interp_taps(w, width, mode);
  Tensor<T> out(Shape{height, width, C});
  const auto& xv = x.value();
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t xx = 0; xx < width; ++xx) {
      const T wy1 = static_cast<T>(ty[y].w1), wy0 = T(1) - wy1;
      const T wx1 = static_cast<T>(tx[xx].w1), wx0 = T(1) - wx1;
      const T* a = &xv.at(ty[y].i0, tx[xx].i0, 0);
      const T* b = &xv.at(ty[y].i0, tx[xx].i1, 0);
      const T* c = &xv.at(ty[y].i1, tx[xx].i0, 0);
      const T* d = &xv.at(ty[y].i1, tx[xx].i1, 0);
      T* o = &out.at(y, xx, 0);
      for (std::size_t ch = 0; ch < C; ++ch) {
        o[ch] = wy0 * (wx0 * a[ch] + wx1 * b[ch]) + wy1 * (wx0 * c[ch] + wx1 * d[ch]);
      }
    }
  }
  return make_op<T>(std::move(out), {x},
                    [ty, tx, h, w, C](const Node<T>&, const Tensor<T>& g) {
                      Tensor<T> gx(Shape{h, w, C});
                      for (std::size_t y = 0; y < ty.size(); ++y) {
                        for (std::size_t xx = 0; xx < tx.size(); ++xx) {
                          const T wy1 = static_cast<T>(ty[y].w1), wy0 = T(1) - wy1;
                          const T wx1 = static_cast<T>(tx[xx].w1), wx0 = T(1) - wx1;
                          const T* go = &g.at(y, xx, 0);
                          T* a = &gx.at(ty[y].i0, tx[xx].i0, 0);
                          T* b = &gx.at(ty[y].i0, tx[xx].i1, 0);
                          T* c = &gx.at(ty[y].i1, tx[xx].i0, 0);
                          T* d = &gx.at(ty[y].i1, tx[xx].i1, 0);
                          for (std::size_t ch = 0; ch < C; ++ch) {
                            a[ch] += wy0 * wx0 * go[ch];
                            b[ch] += wy0 * wx1 * go[ch];
                            c[ch] += wy1 * wx0 * go[ch];
                            d[ch] += wy1 * wx1 * go[ch];
                          }
                        }
                      }
                      return std::vector<Tensor<T>>{std::move(gx)};
                    },
                    "interpolate_up2");
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_op<T>(std::move(out), {x},
                    [](const Node<T>& self, const Tensor<T>& g) {
                      return std::vector<Tensor<T>>{g.reshaped(in(self, 0).shape())};
                    },
                    "reshape");
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<std::size_t>& index) {
  if (x.value().rank() != 2) throw DimensionError("gather_rows: input must be rank 2");
  const std::size_t R = x.dim(0), C = x.dim(1);
  Tensor<T> out(Shape{index.size(), C});
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= R) throw DimensionError("gather_rows: index out of range");
    std::copy_n(&x.value()[index[k] * C], C, &out[k * C]);
  }
  return make_op<T>(std::move(out), {x},
                    [index, R, C](const Node<T>&, const Tensor<T>& g) {
                      Tensor<T> gx(Shape{R, C});
                      for (std::size_t k = 0; k < index.size(); ++k) {
                        T* dst = &gx[index[k] * C];
                        const T* src = &g[k * C];
                        for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
                      }
                      return std::vector<Tensor<T>>{std::move(gx)};
                    },
                    "gather_rows");
}

namespace {
template <typename T>
Tensor<T> transpose_tensor(const Tensor<T>& x) {
  const std::size_t R = x.dim(0), C = x.dim(1);
  Tensor<T> out(Shape{C, R});
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < C; ++c) out[c * R + r] = x[r * C + c];
  }
  return out;
}
}  // namespace

template <typename T>
Var<T> transpose2d(const Var<T>& x) {
  if (x.value().rank() != 2) throw DimensionError("transpose2d: input must be rank 2");
  return make_op<T>(transpose_tensor(x.value()), {x},
                    [](const Node<T>&, const Tensor<T>& g) { return std::vector<Tensor<T>>{transpose_tensor(g)}; },
                    "transpose2d");
}

template <typename T>
Var<T> mean_rows(const Var<T>& x) {
  const std::size_t C = x.shape().back();
  const std::size_t rows = x.value().size() / C;
  Tensor<T> out(Shape{C});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < C; ++c) out[c] += x.value()[r * C + c];
  }
  const T inv = T(1) / static_cast<T>(rows);
  for (auto& v : out.data()) v *= inv;
  return make_op<T>(std::move(out), {x},
                    [rows, C, inv](const Node<T>& self, const Tensor<T>& g) {
                      Tensor<T> gx(in(self, 0).shape());
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < C; ++c) gx[r * C + c] = g[c] * inv;
                      }
                      return std::vector<Tensor<T>>{std::move(gx)};
                    },
                    "mean_rows");
}

template <typename T>
Var<T> concat(const Var<T>& a, const Var<T>& b) {
  if (a.value().rank() != 1 || b.value().rank() != 1) throw DimensionError("concat: inputs must be rank 1");
  const std::size_t na = a.dim(0), nb = b.dim(0);
  Tensor<T> out(Shape{na + nb});
  std::copy_n(a.value().data().data(), na, out.data().data());
  std::copy_n(b.value().data().data(), nb, out.data().data() + na);
  return make_op<T>(std::move(out), {a, b},
                    [na, nb](const Node<T>&, const Tensor<T>& g) {
                      Tensor<T> ga(Shape{na}), gb(Shape{nb});
                      std::copy_n(g.data().data(), na, ga.data().data());
                      std::copy_n(g.data().data() + na, nb, gb.data().data());
                      return std::vector<Tensor<T>>{std::move(ga), std::move(gb)};
                    },
                    "concat");
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::size_t label) {
  if (logits.value().rank() != 1) throw DimensionError("cross_entropy: logits must be rank 1");
  const std::size_t K = logits.dim(0);
  if (label >= K) throw DimensionError("cross_entropy: label out of range");
  const auto& lv = logits.value();
  T mx = lv[0];
  for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, lv[k]);
  T z = 0;
  for (std::size_t k = 0; k < K; ++k) z += std::exp(lv[k] - mx);
  const T lse = mx + std::log(z);
  return make_op<T>(Tensor<T>::scalar(lse - lv[label]), {logits},
                    [K, label, lse](const Node<T>& self, const Tensor<T>& g) {
                      const auto& lv = in(self, 0);
                      Tensor<T> gl(Shape{K});
                      for (std::size_t k = 0; k < K; ++k) {
                        gl[k] = g[0] * (std::exp(lv[k] - lse) - (k == label ? T(1) : T(0)));
                      }
                      return std::vector<Tensor<T>>{std::move(gl)};
                    },
                    "cross_entropy");
}

template <typename T>
Var<T> exp_outer(const Var<T>& delta, const Var<T>& a) {
  if (delta.value().rank() != 2 || a.value().rank() != 2 || delta.dim(1) != a.dim(0)) {
    throw DimensionError("exp_outer: delta " + shape_to_string(delta.shape()) + " vs A " +
                         shape_to_string(a.shape()));
  }
  const std::size_t P = delta.dim(0), C = delta.dim(1), N = a.dim(1);
  Tensor<T> out(Shape{P, C, N});
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t c = 0; c < C; ++c) {
      const T d = delta.value()[p * C + c];
      for (std::size_t n = 0; n < N; ++n) out[(p * C + c) * N + n] = std::exp(d * a.value()[c * N + n]);
    }
  }
  return make_op<T>(std::move(out), {delta, a},
                    [P, C, N](const Node<T>& self, const Tensor<T>& g) {
                      const auto& dv = in(self, 0);
                      const auto& av = in(self, 1);
                      const auto& ov = self.value;
                      Tensor<T> gd(dv.shape()), ga(av.shape());
                      for (std::size_t p = 0; p < P; ++p) {
                        for (std::size_t c = 0; c < C; ++c) {
                          const T d = dv[p * C + c];
                          T acc = 0;
                          for (std::size_t n = 0; n < N; ++n) {
                            const std::size_t k = (p * C + c) * N + n;
                            const T go = g[k] * ov[k];
                            acc += go * av[c * N + n];
                            ga[c * N + n] += go * d;
                          }
                          gd[p * C + c] = acc;
                        }
                      }
                      return std::vector<Tensor<T>>{std::move(gd), std::move(ga)};
                    },
                    "exp_outer");
}

template <typename T>
Var<T> scale_outer(const Var<T>& delta, const Var<T>& b) {
  if (delta.value().rank() != 2 || b.value().rank() != 2 || delta.dim(0) != b.dim(0)) {
    throw DimensionError("scale_outer: delta " + shape_to_string(delta.shape()) + " vs B " +
                         shape_to_string(b.shape()));
  }
  const std::size_t P = delta.dim(0), C = delta.dim(1), N = b.dim(1);
  Tensor<T> out(Shape{P, C, N});
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t c = 0; c < C; ++c) {
      const T d = delta.value()[p * C + c];
      for (std::size_t n = 0; n < N; ++n) out[(p * C + c) * N + n] = d * b.value()[p * N + n];
    }
  }
  return make_op<T>(std::move(out), {delta, b},
                    [P, C, N](const Node<T>& self, const Tensor<T>& g) {
                      const auto& dv = in(self, 0);
                      const auto& bv = in(self, 1);
                      Tensor<T> gd(dv.shape()), gb(bv.shape());
                      for (std::size_t p = 0; p < P; ++p) {
                        for (std::size_t c = 0; c < C; ++c) {
                          const T d = dv[p * C + c];
                          T acc = 0;
                          for (std::size_t n = 0; n < N; ++n) {
                            const T gk = g[(p * C + c) * N + n];
                            acc += gk * bv[p * N + n];
                            gb[p * N + n] += gk * d;
                          }
                          gd[p * C + c] = acc;
                        }
                      }
                      return std::vector<Tensor<T>>{std::move(gd), std::move(gb)};
                    },
                    "scale_outer");
}

#define MSF_INSTANTIATE_OPS(T)                                                                    \
  template Var<T> add(const Var<T>&, const Var<T>&);                                              \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                              \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                              \
  template Var<T> scale(const Var<T>&, T);                                                        \
  template Var<T> sum(const Var<T>&);                                                             \
  template Var<T> mean(const Var<T>&);                                                            \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                            \
  template Var<T> depthwise_conv2d(const Var<T>&, const Var<T>&, int, const Var<T>&);             \
  template Var<T> silu(const Var<T>&);                                                            \
  template Var<T> softplus(const Var<T>&);                                                        \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);                \
  template Var<T> interpolate_up2(const Var<T>&, std::size_t, std::size_t, InterpMode);           \
  template Var<T> reshape(const Var<T>&, Shape);                                                  \
  template Var<T> gather_rows(const Var<T>&, const std::vector<std::size_t>&);                    \
  template Var<T> transpose2d(const Var<T>&);                                                     \
  template Var<T> mean_rows(const Var<T>&);                                                       \
  template Var<T> concat(const Var<T>&, const Var<T>&);                                           \
  template Var<T> cross_entropy(const Var<T>&, std::size_t);                                      \
  template Var<T> exp_outer(const Var<T>&, const Var<T>&);                                        \
  template Var<T> scale_outer(const Var<T>&, const Var<T>&);

MSF_INSTANTIATE_OPS(float)
MSF_INSTANTIATE_OPS(double)

}  // namespace msf
