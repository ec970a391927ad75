#include "anodev2/layers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace anodev2 {

namespace {

int64_t div_floor(int64_t a, int64_t b) {
  int64_t q = a / b, r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}
int64_t div_ceil(int64_t a, int64_t b) { return -div_floor(-a, b); }

void check_conv_shapes(const Tensor4& x, const Tensor4& w, int64_t stride,
                       int64_t pad) {
  check(stride >= 1, "conv2d: stride must be positive");
  check(pad >= 0, "conv2d: padding must be non-negative");
  check(w.h == w.w, "conv2d: kernel must be square, got " + w.shape_str());
  if (x.c != w.c) {
    std::ostringstream os;
    os << "conv2d: input channel dim " << x.c << " does not match kernel "
       << "in-channel dim " << w.c;
    fail(os.str());
  }
  if (w.h > x.h + 2 * pad || w.w > x.w + 2 * pad) {
    std::ostringstream os;
    os << "conv2d: kernel size " << w.h << " exceeds padded input "
       << (x.h + 2 * pad) << "x" << (x.w + 2 * pad);
    fail(os.str());
  }
}

}  // namespace

// Accumulation into each output element follows (ci, ky, kx) order; the
// (oy, ox) loops are innermost only to vectorize, which keeps per-element
// rounding identical to the naive reference loop nest.
Tensor4 conv2d(const Tensor4& x, const Tensor4& w,
               const std::vector<real_t>* bias, int64_t stride, int64_t pad) {
  check_conv_shapes(x, w, stride, pad);
  const int64_t k = w.h, s = stride, p = pad;
  const int64_t ho = (x.h + 2 * p - k) / s + 1;
  const int64_t wo = (x.w + 2 * p - k) / s + 1;
  if (bias)
    check(static_cast<int64_t>(bias->size()) == w.n,
          "conv2d: bias length does not match out-channel dim");
  Tensor4 y(x.n, w.n, ho, wo);

#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t i = 0; i < x.n; ++i) {
    for (int64_t co = 0; co < w.n; ++co) {
      real_t* yp = &y.v[static_cast<size_t>(y.idx(i, co, 0, 0))];
      const real_t b = bias ? (*bias)[static_cast<size_t>(co)] : real_t(0);
      for (int64_t e = 0; e < ho * wo; ++e) yp[e] = b;
      for (int64_t ci = 0; ci < x.c; ++ci) {
        const real_t* xp = &x.v[static_cast<size_t>(x.idx(i, ci, 0, 0))];
        for (int64_t ky = 0; ky < k; ++ky) {
          const int64_t oy_lo = std::max<int64_t>(0, div_ceil(p - ky, s));
          const int64_t oy_hi =
              std::min(ho - 1, div_floor(x.h - 1 + p - ky, s));
          for (int64_t kx = 0; kx < k; ++kx) {
            const real_t wv = w.at(co, ci, ky, kx);
            const int64_t ox_lo = std::max<int64_t>(0, div_ceil(p - kx, s));
            const int64_t ox_hi =
                std::min(wo - 1, div_floor(x.w - 1 + p - kx, s));
            for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
              const int64_t iy = oy * s - p + ky;
              real_t* yrow = yp + oy * wo;
              const real_t* xrow = xp + iy * x.w - p + kx;
              for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                yrow[ox] += wv * xrow[ox * s];
            }
          }
        }
      }
    }
  }
  return y;
}

ConvGrads conv2d_backward(const Tensor4& x, const Tensor4& w, bool has_bias,
                          int64_t stride, int64_t pad, const Tensor4& gy) {
  check_conv_shapes(x, w, stride, pad);
  const int64_t k = w.h, s = stride, p = pad;
  const int64_t ho = (x.h + 2 * p - k) / s + 1;
  const int64_t wo = (x.w + 2 * p - k) / s + 1;
  check(gy.n == x.n && gy.c == w.n && gy.h == ho && gy.w == wo,
        "conv2d_backward: grad shape " + gy.shape_str() + " does not match");

  ConvGrads g;
  g.gx = zeros_like(x);
  g.gw = zeros_like(w);
  if (has_bias) g.gb.assign(static_cast<size_t>(w.n), real_t(0));

  // gx: contributions per element arrive in (co, ky, kx) order.
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t i = 0; i < x.n; ++i) {
    for (int64_t ci = 0; ci < x.c; ++ci) {
      real_t* gxp = &g.gx.v[static_cast<size_t>(x.idx(i, ci, 0, 0))];
      for (int64_t co = 0; co < w.n; ++co) {
        const real_t* gyp = &gy.v[static_cast<size_t>(gy.idx(i, co, 0, 0))];
        for (int64_t ky = 0; ky < k; ++ky) {
          const int64_t oy_lo = std::max<int64_t>(0, div_ceil(p - ky, s));
          const int64_t oy_hi =
              std::min(ho - 1, div_floor(x.h - 1 + p - ky, s));
          for (int64_t kx = 0; kx < k; ++kx) {
            const real_t wv = w.at(co, ci, ky, kx);
            const int64_t ox_lo = std::max<int64_t>(0, div_ceil(p - kx, s));
            const int64_t ox_hi =
                std::min(wo - 1, div_floor(x.w - 1 + p - kx, s));
            for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
              const int64_t iy = oy * s - p + ky;
              const real_t* gyrow = gyp + oy * wo;
              real_t* gxrow = gxp + iy * x.w - p + kx;
              for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                gxrow[ox * s] += wv * gyrow[ox];
            }
          }
        }
      }
    }
  }

  // gw: reduction per kernel element in (i, oy, ox) order.
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t co = 0; co < w.n; ++co) {
    for (int64_t ci = 0; ci < x.c; ++ci) {
      for (int64_t ky = 0; ky < k; ++ky) {
        const int64_t oy_lo = std::max<int64_t>(0, div_ceil(p - ky, s));
        const int64_t oy_hi = std::min(ho - 1, div_floor(x.h - 1 + p - ky, s));
        for (int64_t kx = 0; kx < k; ++kx) {
          const int64_t ox_lo = std::max<int64_t>(0, div_ceil(p - kx, s));
          const int64_t ox_hi =
              std::min(wo - 1, div_floor(x.w - 1 + p - kx, s));
          real_t acc = 0;
          for (int64_t i = 0; i < x.n; ++i) {
            const real_t* gyp =
                &gy.v[static_cast<size_t>(gy.idx(i, co, 0, 0))];
            const real_t* xp = &x.v[static_cast<size_t>(x.idx(i, ci, 0, 0))];
            for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
              const int64_t iy = oy * s - p + ky;
              const real_t* gyrow = gyp + oy * wo;
              const real_t* xrow = xp + iy * x.w - p + kx;
              for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                acc += gyrow[ox] * xrow[ox * s];
            }
          }
          g.gw.at(co, ci, ky, kx) = acc;
        }
      }
    }
  }

  if (has_bias) {
#pragma omp parallel for schedule(static)
    for (int64_t co = 0; co < w.n; ++co) {
      real_t acc = 0;
      for (int64_t i = 0; i < x.n; ++i) {
        const real_t* gyp = &gy.v[static_cast<size_t>(gy.idx(i, co, 0, 0))];
        for (int64_t e = 0; e < ho * wo; ++e) acc += gyp[e];
      }
      g.gb[static_cast<size_t>(co)] = acc;
    }
  }
  return g;
}

Tensor4 batchnorm2d_train(const Tensor4& x, BnParams& p, BnCache& cache,
                          bool update_running) {
  check(x.n > 0, "batchnorm2d: zero-size batch");
  check(x.c == p.channels(), "batchnorm2d: channel count " +
                                 std::to_string(x.c) + " does not match " +
                                 std::to_string(p.channels()) + " params");
  const int64_t cnt = x.n * x.h * x.w;
  cache.mean.assign(static_cast<size_t>(x.c), 0);
  cache.invstd.assign(static_cast<size_t>(x.c), 0);
  Tensor4 y = zeros_like(x);

#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < x.c; ++j) {
    real_t sum = 0;
    for (int64_t i = 0; i < x.n; ++i) {
      const real_t* xp = &x.v[static_cast<size_t>(x.idx(i, j, 0, 0))];
      for (int64_t e = 0; e < x.h * x.w; ++e) sum += xp[e];
    }
    const real_t mean = sum / static_cast<real_t>(cnt);
    real_t ssq = 0;
    for (int64_t i = 0; i < x.n; ++i) {
      const real_t* xp = &x.v[static_cast<size_t>(x.idx(i, j, 0, 0))];
      for (int64_t e = 0; e < x.h * x.w; ++e) {
        const real_t d = xp[e] - mean;
        ssq += d * d;
      }
    }
    const real_t var = ssq / static_cast<real_t>(cnt);
    const real_t invstd = real_t(1) / std::sqrt(var + p.eps);
    cache.mean[static_cast<size_t>(j)] = mean;
    cache.invstd[static_cast<size_t>(j)] = invstd;
    const real_t gj = p.gamma[static_cast<size_t>(j)];
    const real_t bj = p.beta[static_cast<size_t>(j)];
    for (int64_t i = 0; i < x.n; ++i) {
      const real_t* xp = &x.v[static_cast<size_t>(x.idx(i, j, 0, 0))];
      real_t* yp = &y.v[static_cast<size_t>(y.idx(i, j, 0, 0))];
      for (int64_t e = 0; e < x.h * x.w; ++e)
        yp[e] = gj * (xp[e] - mean) * invstd + bj;
    }
    if (update_running) {
      const real_t ub =
          cnt > 1 ? var * static_cast<real_t>(cnt) / static_cast<real_t>(cnt - 1)
                  : var;
      p.running_mean[static_cast<size_t>(j)] =
          (real_t(1) - p.momentum) * p.running_mean[static_cast<size_t>(j)] +
          p.momentum * mean;
      p.running_var[static_cast<size_t>(j)] =
          (real_t(1) - p.momentum) * p.running_var[static_cast<size_t>(j)] +
          p.momentum * ub;
    }
  }
  return y;
}

Tensor4 batchnorm2d_eval(const Tensor4& x, const BnParams& p) {
  check(x.n > 0, "batchnorm2d: zero-size batch");
  check(x.c == p.channels(), "batchnorm2d: channel mismatch");
  Tensor4 y = zeros_like(x);
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < x.c; ++j) {
    const real_t invstd =
        real_t(1) / std::sqrt(p.running_var[static_cast<size_t>(j)] + p.eps);
    const real_t mean = p.running_mean[static_cast<size_t>(j)];
    const real_t gj = p.gamma[static_cast<size_t>(j)];
    const real_t bj = p.beta[static_cast<size_t>(j)];
    for (int64_t i = 0; i < x.n; ++i) {
      const real_t* xp = &x.v[static_cast<size_t>(x.idx(i, j, 0, 0))];
      real_t* yp = &y.v[static_cast<size_t>(y.idx(i, j, 0, 0))];
      for (int64_t e = 0; e < x.h * x.w; ++e)
        yp[e] = gj * (xp[e] - mean) * invstd + bj;
    }
  }
  return y;
}

BnGrads batchnorm2d_backward(const Tensor4& x, const BnParams& p,
                             const BnCache& cache, const Tensor4& gy) {
  check(x.same_shape(gy), "batchnorm2d_backward: grad shape mismatch");
  const int64_t cnt = x.n * x.h * x.w;
  BnGrads g;
  g.gx = zeros_like(x);
  g.ggamma.assign(static_cast<size_t>(x.c), 0);
  g.gbeta.assign(static_cast<size_t>(x.c), 0);

#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < x.c; ++j) {
    const real_t mean = cache.mean[static_cast<size_t>(j)];
    const real_t invstd = cache.invstd[static_cast<size_t>(j)];
    real_t sum_gy = 0, sum_gy_xhat = 0;
    for (int64_t i = 0; i < x.n; ++i) {
      const real_t* xp = &x.v[static_cast<size_t>(x.idx(i, j, 0, 0))];
      const real_t* gp = &gy.v[static_cast<size_t>(gy.idx(i, j, 0, 0))];
      for (int64_t e = 0; e < x.h * x.w; ++e) {
        sum_gy += gp[e];
        sum_gy_xhat += gp[e] * (xp[e] - mean) * invstd;
      }
    }
    g.gbeta[static_cast<size_t>(j)] = sum_gy;
    g.ggamma[static_cast<size_t>(j)] = sum_gy_xhat;
    const real_t gj = p.gamma[static_cast<size_t>(j)];
    const real_t scale = gj * invstd / static_cast<real_t>(cnt);
    for (int64_t i = 0; i < x.n; ++i) {
      const real_t* xp = &x.v[static_cast<size_t>(x.idx(i, j, 0, 0))];
      const real_t* gp = &gy.v[static_cast<size_t>(gy.idx(i, j, 0, 0))];
      real_t* op = &g.gx.v[static_cast<size_t>(g.gx.idx(i, j, 0, 0))];
      for (int64_t e = 0; e < x.h * x.w; ++e) {
        const real_t xhat = (xp[e] - mean) * invstd;
        op[e] = scale * (static_cast<real_t>(cnt) * gp[e] - sum_gy -
                         xhat * sum_gy_xhat);
      }
    }
  }
  return g;
}

Tensor4 activation(const Tensor4& x, Act kind) {
  Tensor4 y = zeros_like(x);
  switch (kind) {
    case Act::relu:
      for (size_t e = 0; e < x.v.size(); ++e)
        y.v[e] = x.v[e] > real_t(0) ? x.v[e] : real_t(0);
      break;
    case Act::tanh_:
      for (size_t e = 0; e < x.v.size(); ++e) y.v[e] = std::tanh(x.v[e]);
      break;
    case Act::identity:
      y.v = x.v;
      break;
  }
  return y;
}

Tensor4 activation_backward(const Tensor4& y, Act kind, const Tensor4& gy) {
  check(y.same_shape(gy), "activation_backward: shape mismatch");
  Tensor4 gx = zeros_like(y);
  switch (kind) {
    case Act::relu:
      // relu' at 0 is 0; y > 0 iff x > 0.
      for (size_t e = 0; e < y.v.size(); ++e)
        gx.v[e] = y.v[e] > real_t(0) ? gy.v[e] : real_t(0);
      break;
    case Act::tanh_:
      for (size_t e = 0; e < y.v.size(); ++e)
        gx.v[e] = (real_t(1) - y.v[e] * y.v[e]) * gy.v[e];
      break;
    case Act::identity:
      gx.v = gy.v;
      break;
  }
  return gx;
}

Tensor4 maxpool2d(const Tensor4& x, int64_t k, int64_t stride) {
  check(k >= 1 && stride >= 1, "maxpool2d: k and stride must be positive");
  check(k <= x.h && k <= x.w, "maxpool2d: pool window " + std::to_string(k) +
                                  " exceeds input " + x.shape_str());
  const int64_t ho = (x.h - k) / stride + 1;
  const int64_t wo = (x.w - k) / stride + 1;
  Tensor4 y(x.n, x.c, ho, wo);
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t i = 0; i < x.n; ++i) {
    for (int64_t j = 0; j < x.c; ++j) {
      for (int64_t oy = 0; oy < ho; ++oy) {
        for (int64_t ox = 0; ox < wo; ++ox) {
          real_t best = x.at(i, j, oy * stride, ox * stride);
          for (int64_t ky = 0; ky < k; ++ky)
            for (int64_t kx = 0; kx < k; ++kx) {
              const real_t v = x.at(i, j, oy * stride + ky, ox * stride + kx);
              if (v > best) best = v;
            }
          y.at(i, j, oy, ox) = best;
        }
      }
    }
  }
  return y;
}

Tensor4 maxpool2d_backward(const Tensor4& x, int64_t k, int64_t stride,
                           const Tensor4& gy) {
  const int64_t ho = (x.h - k) / stride + 1;
  const int64_t wo = (x.w - k) / stride + 1;
  check(gy.n == x.n && gy.c == x.c && gy.h == ho && gy.w == wo,
        "maxpool2d_backward: grad shape mismatch");
  Tensor4 gx = zeros_like(x);
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t i = 0; i < x.n; ++i) {
    for (int64_t j = 0; j < x.c; ++j) {
      for (int64_t oy = 0; oy < ho; ++oy) {
        for (int64_t ox = 0; ox < wo; ++ox) {
          int64_t by = oy * stride, bx = ox * stride;
          real_t best = x.at(i, j, by, bx);
          for (int64_t ky = 0; ky < k; ++ky)
            for (int64_t kx = 0; kx < k; ++kx) {
              const real_t v = x.at(i, j, oy * stride + ky, ox * stride + kx);
              if (v > best) {  // strict: first index wins ties
                best = v;
                by = oy * stride + ky;
                bx = ox * stride + kx;
              }
            }
          gx.at(i, j, by, bx) += gy.at(i, j, oy, ox);
        }
      }
    }
  }
  return gx;
}

Tensor4 linear(const Tensor4& x, const std::vector<real_t>& w,
               const std::vector<real_t>& b, int64_t out) {
  const int64_t in = x.c * x.h * x.w;
  check(static_cast<int64_t>(w.size()) == out * in,
        "linear: weight size " + std::to_string(w.size()) +
            " does not match out*in = " + std::to_string(out * in));
  check(static_cast<int64_t>(b.size()) == out, "linear: bias size mismatch");
  Tensor4 y(x.n, out, 1, 1);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < x.n; ++i) {
    const real_t* xp = &x.v[static_cast<size_t>(i * in)];
    for (int64_t o = 0; o < out; ++o) {
      real_t acc = b[static_cast<size_t>(o)];
      const real_t* wp = &w[static_cast<size_t>(o * in)];
      for (int64_t f = 0; f < in; ++f) acc += wp[f] * xp[f];
      y.at(i, o, 0, 0) = acc;
    }
  }
  return y;
}

LinearGrads linear_backward(const Tensor4& x, const std::vector<real_t>& w,
                            int64_t out, const Tensor4& gy) {
  const int64_t in = x.c * x.h * x.w;
  check(gy.n == x.n && gy.c == out && gy.h == 1 && gy.w == 1,
        "linear_backward: grad shape mismatch");
  LinearGrads g;
  g.gx = zeros_like(x);
  g.gw.assign(static_cast<size_t>(out * in), 0);
  g.gb.assign(static_cast<size_t>(out), 0);

#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < x.n; ++i) {
    real_t* gxp = &g.gx.v[static_cast<size_t>(i * in)];
    for (int64_t o = 0; o < out; ++o) {
      const real_t gv = gy.at(i, o, 0, 0);
      const real_t* wp = &w[static_cast<size_t>(o * in)];
      for (int64_t f = 0; f < in; ++f) gxp[f] += gv * wp[f];
    }
  }
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < out; ++o) {
    real_t* gwp = &g.gw[static_cast<size_t>(o * in)];
    real_t accb = 0;
    for (int64_t i = 0; i < x.n; ++i) {
      const real_t gv = gy.at(i, o, 0, 0);
      const real_t* xp = &x.v[static_cast<size_t>(i * in)];
      for (int64_t f = 0; f < in; ++f) gwp[f] += gv * xp[f];
      accb += gv;
    }
    g.gb[static_cast<size_t>(o)] = accb;
  }
  return g;
}

LossAndGrad softmax_cross_entropy(const Tensor4& logits,
                                  const std::vector<int>& labels) {
  const int64_t n = logits.n, nc = logits.c;
  check(logits.h == 1 && logits.w == 1, "softmax_cross_entropy: logits must "
                                        "be (n, classes, 1, 1)");
  check(static_cast<int64_t>(labels.size()) == n,
        "softmax_cross_entropy: label count mismatch");
  for (int64_t i = 0; i < n; ++i)
    if (labels[static_cast<size_t>(i)] < 0 ||
        labels[static_cast<size_t>(i)] >= nc)
      fail("softmax_cross_entropy: label out of range at record " +
           std::to_string(i));

  LossAndGrad r;
  r.grad = Tensor4(n, nc, 1, 1);
  real_t total = 0;
  for (int64_t i = 0; i < n; ++i) {
    const real_t* lp = &logits.v[static_cast<size_t>(i * nc)];
    real_t m = lp[0];
    for (int64_t cI = 1; cI < nc; ++cI) m = std::max(m, lp[cI]);
    real_t z = 0;
    for (int64_t cI = 0; cI < nc; ++cI) z += std::exp(lp[cI] - m);
    const int y = labels[static_cast<size_t>(i)];
    total += -(lp[y] - m - std::log(z));
    real_t* gp = &r.grad.v[static_cast<size_t>(i * nc)];
    for (int64_t cI = 0; cI < nc; ++cI) {
      const real_t pc = std::exp(lp[cI] - m) / z;
      gp[cI] = (pc - (cI == y ? real_t(1) : real_t(0))) / static_cast<real_t>(n);
    }
  }
  r.loss = total / static_cast<real_t>(n);
  return r;
}

}  // namespace anodev2
