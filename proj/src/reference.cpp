#include "anodev2/reference.hpp"

#include <cmath>

// Naive per-element loops, no pragmas. Each output element accumulates its
// contributions in the same (ci, ky, kx) / (co, ky, kx) / (i, oy, ox) order
// as the restructured kernels, so results are bitwise comparable.
namespace anodev2::reference {

Tensor4 conv2d(const Tensor4& x, const Tensor4& w,
               const std::vector<real_t>* bias, int64_t stride, int64_t pad) {
  const int64_t k = w.h, s = stride, p = pad;
  const int64_t ho = (x.h + 2 * p - k) / s + 1;
  const int64_t wo = (x.w + 2 * p - k) / s + 1;
  Tensor4 y(x.n, w.n, ho, wo);
  for (int64_t i = 0; i < x.n; ++i)
    for (int64_t co = 0; co < w.n; ++co)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          real_t acc = bias ? (*bias)[static_cast<size_t>(co)] : real_t(0);
          for (int64_t ci = 0; ci < x.c; ++ci)
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t iy = oy * s - p + ky;
                const int64_t ix = ox * s - p + kx;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                acc += w.at(co, ci, ky, kx) * x.at(i, ci, iy, ix);
              }
          y.at(i, co, oy, ox) = acc;
        }
  return y;
}

ConvGrads conv2d_backward(const Tensor4& x, const Tensor4& w, bool has_bias,
                          int64_t stride, int64_t pad, const Tensor4& gy) {
  const int64_t k = w.h, s = stride, p = pad;
  const int64_t ho = gy.h, wo = gy.w;
  ConvGrads g;
  g.gx = zeros_like(x);
  g.gw = zeros_like(w);
  if (has_bias) g.gb.assign(static_cast<size_t>(w.n), real_t(0));

  for (int64_t i = 0; i < x.n; ++i)
    for (int64_t ci = 0; ci < x.c; ++ci)
      for (int64_t co = 0; co < w.n; ++co)
        for (int64_t ky = 0; ky < k; ++ky)
          for (int64_t kx = 0; kx < k; ++kx)
            for (int64_t oy = 0; oy < ho; ++oy)
              for (int64_t ox = 0; ox < wo; ++ox) {
                const int64_t iy = oy * s - p + ky;
                const int64_t ix = ox * s - p + kx;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                g.gx.at(i, ci, iy, ix) +=
                    w.at(co, ci, ky, kx) * gy.at(i, co, oy, ox);
              }

  for (int64_t co = 0; co < w.n; ++co)
    for (int64_t ci = 0; ci < x.c; ++ci)
      for (int64_t ky = 0; ky < k; ++ky)
        for (int64_t kx = 0; kx < k; ++kx) {
          real_t acc = 0;
          for (int64_t i = 0; i < x.n; ++i)
            for (int64_t oy = 0; oy < ho; ++oy)
              for (int64_t ox = 0; ox < wo; ++ox) {
                const int64_t iy = oy * s - p + ky;
                const int64_t ix = ox * s - p + kx;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                acc += gy.at(i, co, oy, ox) * x.at(i, ci, iy, ix);
              }
          g.gw.at(co, ci, ky, kx) = acc;
        }

  if (has_bias)
    for (int64_t co = 0; co < w.n; ++co) {
      real_t acc = 0;
      for (int64_t i = 0; i < x.n; ++i)
        for (int64_t oy = 0; oy < ho; ++oy)
          for (int64_t ox = 0; ox < wo; ++ox) acc += gy.at(i, co, oy, ox);
      g.gb[static_cast<size_t>(co)] = acc;
    }
  return g;
}

Tensor4 batchnorm2d_train(const Tensor4& x, BnParams& p, BnCache& cache,
                          bool update_running) {
  const int64_t cnt = x.n * x.h * x.w;
  cache.mean.assign(static_cast<size_t>(x.c), 0);
  cache.invstd.assign(static_cast<size_t>(x.c), 0);
  Tensor4 y = zeros_like(x);
  for (int64_t j = 0; j < x.c; ++j) {
    real_t sum = 0;
    for (int64_t i = 0; i < x.n; ++i)
      for (int64_t yy = 0; yy < x.h; ++yy)
        for (int64_t xx = 0; xx < x.w; ++xx) sum += x.at(i, j, yy, xx);
    const real_t mean = sum / static_cast<real_t>(cnt);
    real_t ssq = 0;
    for (int64_t i = 0; i < x.n; ++i)
      for (int64_t yy = 0; yy < x.h; ++yy)
        for (int64_t xx = 0; xx < x.w; ++xx) {
          const real_t d = x.at(i, j, yy, xx) - mean;
          ssq += d * d;
        }
    const real_t var = ssq / static_cast<real_t>(cnt);
    const real_t invstd = real_t(1) / std::sqrt(var + p.eps);
    cache.mean[static_cast<size_t>(j)] = mean;
    cache.invstd[static_cast<size_t>(j)] = invstd;
    for (int64_t i = 0; i < x.n; ++i)
      for (int64_t yy = 0; yy < x.h; ++yy)
        for (int64_t xx = 0; xx < x.w; ++xx)
          y.at(i, j, yy, xx) = p.gamma[static_cast<size_t>(j)] *
                                   (x.at(i, j, yy, xx) - mean) * invstd +
                               p.beta[static_cast<size_t>(j)];
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

BnGrads batchnorm2d_backward(const Tensor4& x, const BnParams& p,
                             const BnCache& cache, const Tensor4& gy) {
  const int64_t cnt = x.n * x.h * x.w;
  BnGrads g;
  g.gx = zeros_like(x);
  g.ggamma.assign(static_cast<size_t>(x.c), 0);
  g.gbeta.assign(static_cast<size_t>(x.c), 0);
  for (int64_t j = 0; j < x.c; ++j) {
    const real_t mean = cache.mean[static_cast<size_t>(j)];
    const real_t invstd = cache.invstd[static_cast<size_t>(j)];
    real_t sum_gy = 0, sum_gy_xhat = 0;
    for (int64_t i = 0; i < x.n; ++i)
      for (int64_t yy = 0; yy < x.h; ++yy)
        for (int64_t xx = 0; xx < x.w; ++xx) {
          sum_gy += gy.at(i, j, yy, xx);
          sum_gy_xhat +=
              gy.at(i, j, yy, xx) * (x.at(i, j, yy, xx) - mean) * invstd;
        }
    g.gbeta[static_cast<size_t>(j)] = sum_gy;
    g.ggamma[static_cast<size_t>(j)] = sum_gy_xhat;
    const real_t scale =
        p.gamma[static_cast<size_t>(j)] * invstd / static_cast<real_t>(cnt);
    for (int64_t i = 0; i < x.n; ++i)
      for (int64_t yy = 0; yy < x.h; ++yy)
        for (int64_t xx = 0; xx < x.w; ++xx) {
          const real_t xhat = (x.at(i, j, yy, xx) - mean) * invstd;
          g.gx.at(i, j, yy, xx) =
              scale * (static_cast<real_t>(cnt) * gy.at(i, j, yy, xx) -
                       sum_gy - xhat * sum_gy_xhat);
        }
  }
  return g;
}

Tensor4 maxpool2d(const Tensor4& x, int64_t k, int64_t stride) {
  const int64_t ho = (x.h - k) / stride + 1;
  const int64_t wo = (x.w - k) / stride + 1;
  Tensor4 y(x.n, x.c, ho, wo);
  for (int64_t i = 0; i < x.n; ++i)
    for (int64_t j = 0; j < x.c; ++j)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          real_t best = x.at(i, j, oy * stride, ox * stride);
          for (int64_t ky = 0; ky < k; ++ky)
            for (int64_t kx = 0; kx < k; ++kx) {
              const real_t v = x.at(i, j, oy * stride + ky, ox * stride + kx);
              if (v > best) best = v;
            }
          y.at(i, j, oy, ox) = best;
        }
  return y;
}

Tensor4 linear(const Tensor4& x, const std::vector<real_t>& w,
               const std::vector<real_t>& b, int64_t out) {
  const int64_t in = x.c * x.h * x.w;
  Tensor4 y(x.n, out, 1, 1);
  for (int64_t i = 0; i < x.n; ++i)
    for (int64_t o = 0; o < out; ++o) {
      real_t acc = b[static_cast<size_t>(o)];
      for (int64_t f = 0; f < in; ++f)
        acc += w[static_cast<size_t>(o * in + f)] *
               x.v[static_cast<size_t>(i * in + f)];
      y.at(i, o, 0, 0) = acc;
    }
  return y;
}

}  // namespace anodev2::reference
