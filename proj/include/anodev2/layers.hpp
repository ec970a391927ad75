#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "anodev2/tensor.hpp"

namespace anodev2 {

enum class Act { relu, tanh_, identity };

struct ConvGrads {
  Tensor4 gx;
  Tensor4 gw;
  std::vector<real_t> gb;  // empty when the conv has no bias
};

struct BnParams {
  std::vector<real_t> gamma, beta;
  std::vector<real_t> running_mean, running_var;
  real_t eps = real_t(1e-5);
  real_t momentum = real_t(0.1);

  explicit BnParams(int64_t c = 0)
      : gamma(c, real_t(1)), beta(c, real_t(0)),
        running_mean(c, real_t(0)), running_var(c, real_t(1)) {}
  int64_t channels() const { return static_cast<int64_t>(gamma.size()); }
};

struct BnCache {
  std::vector<real_t> mean, invstd;
};

struct BnGrads {
  Tensor4 gx;
  std::vector<real_t> ggamma, gbeta;
};

struct LossAndGrad {
  real_t loss = 0;
  Tensor4 grad;  // (n, classes, 1, 1)
};

// x: (n, ci, h, w); w: (co, ci, k, k); bias: co entries or nullptr.
Tensor4 conv2d(const Tensor4& x, const Tensor4& w,
               const std::vector<real_t>* bias, int64_t stride, int64_t pad);
ConvGrads conv2d_backward(const Tensor4& x, const Tensor4& w, bool has_bias,
                          int64_t stride, int64_t pad, const Tensor4& gy);

// Train mode normalizes by batch statistics; running stats are updated only
// when update_running is set (checkpoint recomputation must not touch them).
Tensor4 batchnorm2d_train(const Tensor4& x, BnParams& p, BnCache& cache,
                          bool update_running);
Tensor4 batchnorm2d_eval(const Tensor4& x, const BnParams& p);
BnGrads batchnorm2d_backward(const Tensor4& x, const BnParams& p,
                             const BnCache& cache, const Tensor4& gy);

Tensor4 activation(const Tensor4& x, Act kind);
// gy chained through the activation; y is the forward *output*.
Tensor4 activation_backward(const Tensor4& y, Act kind, const Tensor4& gy);

Tensor4 maxpool2d(const Tensor4& x, int64_t k, int64_t stride);
Tensor4 maxpool2d_backward(const Tensor4& x, int64_t k, int64_t stride,
                           const Tensor4& gy);

// x: (n, in, 1, 1); w: out*in row-major; b: out entries.
Tensor4 linear(const Tensor4& x, const std::vector<real_t>& w,
               const std::vector<real_t>& b, int64_t out);
struct LinearGrads {
  Tensor4 gx;
  std::vector<real_t> gw, gb;
};
LinearGrads linear_backward(const Tensor4& x, const std::vector<real_t>& w,
                            int64_t out, const Tensor4& gy);

// logits: (n, classes, 1, 1); returns mean loss and d(loss)/d(logits).
LossAndGrad softmax_cross_entropy(const Tensor4& logits,
                                  const std::vector<int>& labels);

}  // namespace anodev2
