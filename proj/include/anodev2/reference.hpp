#pragma once

#include "anodev2/layers.hpp"

// Serial reference kernels. Same element-level accumulation order as the
// OpenMP versions in layers.cpp, so outputs must match them bitwise.
namespace anodev2::reference {

Tensor4 conv2d(const Tensor4& x, const Tensor4& w,
               const std::vector<real_t>* bias, int64_t stride, int64_t pad);
ConvGrads conv2d_backward(const Tensor4& x, const Tensor4& w, bool has_bias,
                          int64_t stride, int64_t pad, const Tensor4& gy);
Tensor4 batchnorm2d_train(const Tensor4& x, BnParams& p, BnCache& cache,
                          bool update_running);
BnGrads batchnorm2d_backward(const Tensor4& x, const BnParams& p,
                             const BnCache& cache, const Tensor4& gy);
Tensor4 maxpool2d(const Tensor4& x, int64_t k, int64_t stride);
Tensor4 linear(const Tensor4& x, const std::vector<real_t>& w,
               const std::vector<real_t>& b, int64_t out);

}  // namespace anodev2::reference
