#include "anodev2/tensor.hpp"

#include <cstring>
#include <sstream>

namespace anodev2 {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string Tensor4::shape_str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

Tensor4 zeros_like(const Tensor4& t) { return Tensor4(t.n, t.c, t.h, t.w); }

bool all_finite(const Tensor4& t) {
  for (real_t x : t.v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool bitwise_equal(const Tensor4& a, const Tensor4& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.v.data(), b.v.data(), a.v.size() * sizeof(real_t)) == 0;
}

void add_into(Tensor4& dst, const Tensor4& src) {
  check(dst.same_shape(src), "add_into: shape mismatch " + dst.shape_str() +
                                 " vs " + src.shape_str());
  for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

real_t max_abs_diff(const Tensor4& a, const Tensor4& b) {
  check(a.same_shape(b), "max_abs_diff: shape mismatch " + a.shape_str() +
                             " vs " + b.shape_str());
  real_t m = 0;
  for (size_t i = 0; i < a.v.size(); ++i)
    m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

}  // namespace anodev2
