#include "doctest.h"

#include <omp.h>

#include <cstring>
#include <tuple>

#include "anodev2/layers.hpp"
#include "anodev2/reference.hpp"
#include "anodev2/rng.hpp"
#include "test_util.hpp"

using namespace anodev2;
using testutil::fill_normal;

namespace {

bool vec_equal(const std::vector<real_t>& a, const std::vector<real_t>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(real_t)) != 0) return false;
  return true;
}

}  // namespace

TEST_SUITE("parallel") {

TEST_CASE("conv2d matches the serial reference bitwise") {
  Rng rng(100);
  const std::tuple<int64_t, int64_t, bool> cases[] = {
      {1, 1, true}, {1, 2, false}, {2, 1, true}, {1, 0, false}};
  for (auto [stride, pad, bias] : cases) {
    Tensor4 x(3, 5, 9, 8);
    fill_normal(x, rng);
    Tensor4 w(4, 5, 3, 3);
    fill_normal(w, rng);
    std::vector<real_t> b(4);
    fill_normal(b, rng);
    const std::vector<real_t>* bp = bias ? &b : nullptr;

    Tensor4 ref = reference::conv2d(x, w, bp, stride, pad);
    for (int threads : {1, 2, 4}) {
      omp_set_num_threads(threads);
      Tensor4 got = conv2d(x, w, bp, stride, pad);
      CHECK(bitwise_equal(ref, got));
    }

    Tensor4 gy = zeros_like(ref);
    fill_normal(gy, rng);
    ConvGrads gr = reference::conv2d_backward(x, w, bias, stride, pad, gy);
    for (int threads : {1, 3}) {
      omp_set_num_threads(threads);
      ConvGrads gg = conv2d_backward(x, w, bias, stride, pad, gy);
      CHECK(bitwise_equal(gr.gx, gg.gx));
      CHECK(bitwise_equal(gr.gw, gg.gw));
      CHECK(vec_equal(gr.gb, gg.gb));
    }
  }
  omp_set_num_threads(omp_get_num_procs());
}

TEST_CASE("batchnorm2d matches the serial reference bitwise") {
  Rng rng(101);
  Tensor4 x(4, 3, 7, 5);
  fill_normal(x, rng);
  BnParams p1(3), p2(3);
  fill_normal(p1.gamma, rng);
  fill_normal(p1.beta, rng);
  p2.gamma = p1.gamma;
  p2.beta = p1.beta;

  BnCache c1, c2;
  Tensor4 yr = reference::batchnorm2d_train(x, p1, c1, true);
  omp_set_num_threads(2);
  Tensor4 yo = batchnorm2d_train(x, p2, c2, true);
  CHECK(bitwise_equal(yr, yo));
  CHECK(vec_equal(p1.running_mean, p2.running_mean));
  CHECK(vec_equal(p1.running_var, p2.running_var));

  Tensor4 gy = zeros_like(x);
  fill_normal(gy, rng);
  BnGrads gr = reference::batchnorm2d_backward(x, p1, c1, gy);
  BnGrads go = batchnorm2d_backward(x, p2, c2, gy);
  CHECK(bitwise_equal(gr.gx, go.gx));
  CHECK(vec_equal(gr.ggamma, go.ggamma));
  CHECK(vec_equal(gr.gbeta, go.gbeta));
  omp_set_num_threads(omp_get_num_procs());
}

TEST_CASE("maxpool2d and linear match the serial reference bitwise") {
  Rng rng(102);
  Tensor4 x(3, 4, 8, 8);
  fill_normal(x, rng);
  omp_set_num_threads(2);
  CHECK(bitwise_equal(reference::maxpool2d(x, 2, 2), maxpool2d(x, 2, 2)));
  CHECK(bitwise_equal(reference::maxpool2d(x, 8, 8), maxpool2d(x, 8, 8)));

  Tensor4 f(5, 24, 1, 1);
  fill_normal(f, rng);
  std::vector<real_t> w(10 * 24), b(10);
  fill_normal(w, rng);
  fill_normal(b, rng);
  CHECK(bitwise_equal(reference::linear(f, w, b, 10), linear(f, w, b, 10)));
  omp_set_num_threads(omp_get_num_procs());
}

TEST_CASE("results do not depend on the thread count") {
  Rng rng(103);
  Tensor4 x(2, 16, 16, 16);
  fill_normal(x, rng);
  Tensor4 w(16, 16, 3, 3);
  fill_normal(w, rng, 0.1);

  omp_set_num_threads(1);
  Tensor4 y1 = conv2d(x, w, nullptr, 1, 1);
  omp_set_num_threads(4);
  Tensor4 y4 = conv2d(x, w, nullptr, 1, 1);
  CHECK(bitwise_equal(y1, y4));
  omp_set_num_threads(omp_get_num_procs());
}

}  // TEST_SUITE
