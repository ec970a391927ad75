#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace anodev2 {

#ifdef ANODEV2_REAL32
using real_t = float;
#else
using real_t = double;
#endif

[[noreturn]] void fail(const std::string& msg);

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// Dense NCHW tensor. Also used for conv kernels as (out_ch, in_ch, k, k).
struct Tensor4 {
  int64_t n = 0, c = 0, h = 0, w = 0;
  std::vector<real_t> v;

  Tensor4() = default;
  Tensor4(int64_t n_, int64_t c_, int64_t h_, int64_t w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<size_t>(n_ * c_ * h_ * w_), real_t(0)) {
    check(n_ >= 0 && c_ >= 0 && h_ >= 0 && w_ >= 0, "Tensor4: negative dim");
  }

  int64_t size() const { return n * c * h * w; }

  int64_t idx(int64_t i, int64_t j, int64_t y, int64_t x) const {
    return ((i * c + j) * h + y) * w + x;
  }
  real_t& at(int64_t i, int64_t j, int64_t y, int64_t x) {
    return v[static_cast<size_t>(idx(i, j, y, x))];
  }
  real_t at(int64_t i, int64_t j, int64_t y, int64_t x) const {
    return v[static_cast<size_t>(idx(i, j, y, x))];
  }

  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const;

  void fill(real_t value) { std::fill(v.begin(), v.end(), value); }
  void zero() { fill(real_t(0)); }
};

Tensor4 zeros_like(const Tensor4& t);
bool all_finite(const Tensor4& t);
bool bitwise_equal(const Tensor4& a, const Tensor4& b);

// dst += src, shapes must match.
void add_into(Tensor4& dst, const Tensor4& src);

// Largest absolute difference between two same-shaped tensors.
real_t max_abs_diff(const Tensor4& a, const Tensor4& b);

}  // namespace anodev2
