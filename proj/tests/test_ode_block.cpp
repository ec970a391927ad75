#include "doctest.h"

#include <cmath>
#include <vector>

#include "anodev2/layers.hpp"
#include "anodev2/ode_block.hpp"
#include "anodev2/rng.hpp"
#include "test_util.hpp"

using namespace anodev2;
using namespace testutil;

namespace {

Tensor4 random_input(int64_t n, int64_t c, int64_t h, int64_t w, Rng& rng,
                     double scale = 1.0) {
  Tensor4 t(n, c, h, w);
  fill_normal(t, rng, scale);
  return t;
}

// Hand-rolled residual step for cross-checking: z + coef*f, then relu.
Tensor4 manual_resnet_step(OdeBlock& blk, const Tensor4& z, int64_t step,
                           bool halve) {
  Tensor4 a = conv2d(z, blk.conv_a.w, nullptr, 1, 1);
  BnCache ca;
  Tensor4 abn =
      batchnorm2d_train(a, blk.bn_a[static_cast<size_t>(step)].p, ca, false);
  Tensor4 ar = activation(abn, Act::relu);
  Tensor4 b = conv2d(ar, blk.conv_b.w, nullptr, 1, 1);
  BnCache cb;
  Tensor4 f =
      batchnorm2d_train(b, blk.bn_b[static_cast<size_t>(step)].p, cb, false);
  Tensor4 out = zeros_like(z);
  for (size_t e = 0; e < z.v.size(); ++e)
    out.v[e] = halve ? z.v[e] + real_t(0.5) * f.v[e] : z.v[e] + f.v[e];
  return activation(out, Act::relu);
}

}  // namespace

TEST_SUITE("ode") {

TEST_CASE("schedule factories satisfy the configuration invariants") {
  OdeBlockSchedule c1 = config1_schedule(5);
  CHECK(c1.n_z == 5);
  CHECK(c1.n_theta == 5);
  REQUIRE(c1.applied.size() == 5);
  for (int64_t j = 0; j < 5; ++j) CHECK(c1.applied[static_cast<size_t>(j)] == j);
  CHECK_NOTHROW(validate_schedule(c1));

  OdeBlockSchedule c2 = config2_schedule(10);
  CHECK(c2.n_z == 2);
  CHECK(c2.n_theta == 10);
  REQUIRE(c2.applied.size() == 2);
  CHECK(c2.applied[0] == 0);
  CHECK(c2.applied[1] == 10);
  CHECK_NOTHROW(validate_schedule(c2));

  CHECK_NOTHROW(validate_schedule(single_step_schedule()));
  CHECK_NOTHROW(validate_schedule(custom_schedule(2, 8)));
}

TEST_CASE("schedule validation rejects malformed schedules") {
  OdeBlockSchedule s = config1_schedule(3);
  s.applied.pop_back();
  CHECK_THROWS(validate_schedule(s));

  s = config1_schedule(3);
  s.applied[2] = 7;
  CHECK_THROWS(validate_schedule(s));

  s = config1_schedule(3);
  s.applied = {0, 2, 1};
  CHECK_THROWS(validate_schedule(s));

  s = config2_schedule(10);
  s.applied = {0, 5};
  CHECK_THROWS(validate_schedule(s));

  s = config2_schedule(10);
  s.n_z = 3;
  s.applied = {0, 5, 10};
  CHECK_THROWS(validate_schedule(s));

  CHECK_THROWS(custom_schedule(3, 10));
}

TEST_CASE("residual_f with zero weights and zero beta returns zeros") {
  Rng rng(11);
  OdeBlock blk = make_resnet_ode_block("blk", 4, config1_schedule(2), rng);
  blk.conv_a.w.zero();
  blk.conv_b.w.zero();
  Tensor4 z = random_input(2, 4, 6, 6, rng);
  Tensor4 f = residual_f(blk, z, blk.conv_a.w, &blk.conv_b.w, 0, true, false,
                         nullptr);
  REQUIRE(f.same_shape(z));
  for (real_t x : f.v) CHECK(x == real_t(0));
}

TEST_CASE("residual_f preserves the ResNet block shape and is deterministic") {
  Rng rng(12);
  OdeBlock blk = make_resnet_ode_block("layer1_1", 16, config1_schedule(2), rng);
  Tensor4 z = random_input(1, 16, 32, 32, rng);
  Tensor4 f1 = residual_f(blk, z, blk.conv_a.w, &blk.conv_b.w, 1, true, false,
                          nullptr);
  Tensor4 f2 = residual_f(blk, z, blk.conv_a.w, &blk.conv_b.w, 1, true, false,
                          nullptr);
  CHECK(f1.n == 1);
  CHECK(f1.c == 16);
  CHECK(f1.h == 32);
  CHECK(f1.w == 32);
  CHECK(bitwise_equal(f1, f2));
}

TEST_CASE("forward with zero kernels leaves a nonnegative state unchanged") {
  Rng rng(13);
  OdeBlock blk = make_resnet_ode_block("blk", 3, config1_schedule(4), rng);
  blk.conv_a.w.zero();
  blk.conv_b.w.zero();
  blk.rda_a = {0, 0, 0, 0};
  blk.rda_b = {0, 0, 0, 0};
  blk.sigma = Act::identity;
  Tensor4 z0 = random_input(1, 3, 5, 5, rng);
  for (real_t& x : z0.v) x = std::abs(x);
  BlockTape tape;
  Tensor4 z1 = ode_block_forward(blk, z0, true, false, TapeMode::full, tape);
  CHECK(bitwise_equal(z0, z1));
}

TEST_CASE("n_z=1 forward is bitwise equal to the plain residual block") {
  Rng rng(14);
  OdeBlock blk = make_resnet_ode_block("blk", 8, single_step_schedule(), rng);
  Tensor4 z0 = random_input(2, 8, 8, 8, rng);
  BlockTape tape;
  Tensor4 z1 =
      ode_block_forward(blk, z0, true, false, TapeMode::checkpoint, tape);
  Tensor4 want = manual_resnet_step(blk, z0, 0, false);
  CHECK(bitwise_equal(z1, want));
}

TEST_CASE("config 2 with p=0 and identity sigma is a 2-step static block") {
  Rng rng(15);
  OdeBlock blk = make_resnet_ode_block("blk", 4, config2_schedule(10), rng);
  blk.rda_a = {0, 0, 0, 0};
  blk.rda_b = {0, 0, 0, 0};
  blk.sigma = Act::identity;
  Tensor4 z0 = random_input(1, 4, 6, 6, rng);
  BlockTape tape;
  Tensor4 z1 =
      ode_block_forward(blk, z0, true, false, TapeMode::checkpoint, tape);

  // Both applied snapshots equal the initial kernels.
  CHECK(bitwise_equal(tape.traj[0][0], tape.traj[0][10]));
  CHECK(bitwise_equal(tape.traj[0][0], blk.conv_a.w));
  CHECK(bitwise_equal(tape.traj[1][0], tape.traj[1][10]));

  Tensor4 z_half = manual_resnet_step(blk, z0, 0, true);
  Tensor4 want = manual_resnet_step(blk, z_half, 1, true);
  CHECK(bitwise_equal(z1, want));
}

TEST_CASE("config 1 with p!=0 applies five distinct weight snapshots") {
  Rng rng(16);
  OdeBlock blk = make_resnet_ode_block("blk", 4, config1_schedule(5), rng);
  blk.rda_a = {real_t(0.05), real_t(0.02), real_t(-0.01), real_t(0.1)};
  blk.rda_b = {real_t(0.03), 0, real_t(0.02), real_t(-0.1)};
  Tensor4 z0 = random_input(1, 4, 6, 6, rng);
  BlockTape tape;
  Tensor4 z1 =
      ode_block_forward(blk, z0, true, false, TapeMode::checkpoint, tape);
  CHECK(all_finite(z1));
  REQUIRE(tape.traj.size() == 2);
  REQUIRE(tape.traj[0].size() == 6);
  for (size_t i = 0; i < 5; ++i)
    for (size_t j = i + 1; j < 5; ++j) {
      CHECK(max_abs_diff(tape.traj[0][i], tape.traj[0][j]) > 0);
      CHECK(max_abs_diff(tape.traj[1][i], tape.traj[1][j]) > 0);
    }
}

TEST_CASE("zero upstream gradient produces zero gradients everywhere") {
  Rng rng(17);
  OdeBlock blk = make_resnet_ode_block("blk", 3, config1_schedule(3), rng);
  blk.rda_a = {real_t(0.02), real_t(0.01), 0, real_t(0.05)};
  Tensor4 z0 = random_input(1, 3, 5, 5, rng);
  BlockTape tape;
  ode_block_forward(blk, z0, true, false, TapeMode::checkpoint, tape);
  blk.zero_grad();
  Tensor4 gz1(1, 3, 5, 5);
  Tensor4 gz0 = ode_block_backward(blk, tape, gz1);
  CHECK(max_abs_diff(gz0, gz1) == 0);
  for (real_t g : blk.conv_a.gw.v) CHECK(g == real_t(0));
  for (real_t g : blk.conv_b.gw.v) CHECK(g == real_t(0));
  for (real_t g : blk.grda_a) CHECK(g == real_t(0));
  for (real_t g : blk.grda_b) CHECK(g == real_t(0));
  for (const auto& bn : blk.bn_a)
    for (size_t e = 0; e < bn.gg.size(); ++e) {
      CHECK(bn.gg[e] == real_t(0));
      CHECK(bn.gb[e] == real_t(0));
    }
}

TEST_CASE("checkpointed backward is bitwise equal to full-storage backward") {
  Rng rng(18);
  OdeBlock proto = make_resnet_ode_block("blk", 4, config1_schedule(3), rng);
  proto.rda_a = {real_t(0.04), real_t(0.02), real_t(-0.03), real_t(0.08)};
  proto.rda_b = {real_t(0.02), real_t(-0.01), real_t(0.01), real_t(-0.05)};
  Tensor4 z0 = random_input(2, 4, 8, 8, rng);
  Tensor4 gz1(2, 4, 8, 8);
  fill_normal(gz1, rng, 1.0);

  OdeBlock full_blk = proto;
  OdeBlock ckpt_blk = proto;

  BlockTape full_tape;
  Tensor4 z1_full =
      ode_block_forward(full_blk, z0, true, false, TapeMode::full, full_tape);
  full_blk.zero_grad();
  Tensor4 gz0_full = ode_block_backward(full_blk, full_tape, gz1);

  BlockTape ckpt_tape;
  Tensor4 z1_ckpt = ode_block_forward(ckpt_blk, z0, true, false,
                                      TapeMode::checkpoint, ckpt_tape);
  ckpt_blk.zero_grad();
  Tensor4 gz0_ckpt = ode_block_backward(ckpt_blk, ckpt_tape, gz1);

  CHECK(bitwise_equal(z1_full, z1_ckpt));
  CHECK(bitwise_equal(gz0_full, gz0_ckpt));
  CHECK(bitwise_equal(full_blk.conv_a.gw, ckpt_blk.conv_a.gw));
  CHECK(bitwise_equal(full_blk.conv_b.gw, ckpt_blk.conv_b.gw));
  for (int q = 0; q < 4; ++q) {
    CHECK(full_blk.grda_a[static_cast<size_t>(q)] ==
          ckpt_blk.grda_a[static_cast<size_t>(q)]);
    CHECK(full_blk.grda_b[static_cast<size_t>(q)] ==
          ckpt_blk.grda_b[static_cast<size_t>(q)]);
  }
  for (size_t s = 0; s < full_blk.bn_a.size(); ++s)
    for (size_t e = 0; e < full_blk.bn_a[s].gg.size(); ++e) {
      CHECK(full_blk.bn_a[s].gg[e] == ckpt_blk.bn_a[s].gg[e]);
      CHECK(full_blk.bn_b[s].gb[e] == ckpt_blk.bn_b[s].gb[e]);
    }
}

TEST_CASE("stored activation count is 1 in checkpoint mode regardless of n_z") {
  Rng rng(19);
  int64_t counts[2];
  int idx = 0;
  for (int64_t n : {3, 9}) {
    OdeBlock blk =
        make_resnet_ode_block("blk", 3, custom_schedule(n, n), rng);
    Tensor4 z0 = random_input(1, 3, 4, 4, rng);
    BlockTape tape;
    ode_block_forward(blk, z0, true, false, TapeMode::checkpoint, tape);
    counts[idx++] = tape.activation_tensors_stored;
  }
  CHECK(counts[0] == 1);
  CHECK(counts[1] == 1);

  // Full-storage mode grows with n_z; checkpoint mode does not.
  OdeBlock blk = make_resnet_ode_block("blk", 3, config1_schedule(3), rng);
  Tensor4 z0 = random_input(1, 3, 4, 4, rng);
  BlockTape tape;
  ode_block_forward(blk, z0, true, false, TapeMode::full, tape);
  CHECK(tape.activation_tensors_stored == 1 + 3 * 5);
}

TEST_CASE("backward leaves running statistics untouched") {
  Rng rng(20);
  OdeBlock blk = make_resnet_ode_block("blk", 3, config1_schedule(3), rng);
  blk.rda_a = {real_t(0.02), 0, 0, real_t(0.03)};
  Tensor4 z0 = random_input(2, 3, 5, 5, rng);
  BlockTape tape;
  ode_block_forward(blk, z0, true, true, TapeMode::checkpoint, tape);
  std::vector<real_t> mean_before = blk.bn_a[1].p.running_mean;
  std::vector<real_t> var_before = blk.bn_b[2].p.running_var;
  Tensor4 gz1(2, 3, 5, 5);
  fill_normal(gz1, rng, 1.0);
  blk.zero_grad();
  ode_block_backward(blk, tape, gz1);
  CHECK(blk.bn_a[1].p.running_mean == mean_before);
  CHECK(blk.bn_b[2].p.running_var == var_before);
}

TEST_CASE("backward rejects an eval-mode tape") {
  Rng rng(21);
  OdeBlock blk = make_resnet_ode_block("blk", 3, config1_schedule(2), rng);
  Tensor4 z0 = random_input(1, 3, 4, 4, rng);
  BlockTape tape;
  ode_block_forward(blk, z0, false, false, TapeMode::checkpoint, tape);
  Tensor4 gz1(1, 3, 4, 4);
  CHECK_THROWS(ode_block_backward(blk, tape, gz1));
}

TEST_CASE("block gradients match finite differences on an 8x8 input") {
  Rng rng(22);
  OdeBlock blk = make_resnet_ode_block("blk", 2, config1_schedule(3), rng);
  blk.rda_a = {real_t(0.3), real_t(0.1), real_t(-0.2), real_t(0.05)};
  blk.rda_b = {real_t(0.1), real_t(-0.05), real_t(0.08), real_t(-0.1)};
  Tensor4 z0 = random_input(1, 2, 8, 8, rng, 0.8);
  Tensor4 r(1, 2, 8, 8);
  fill_normal(r, rng, 0.5);

  BlockTape tape;
  Tensor4 z1 =
      ode_block_forward(blk, z0, true, false, TapeMode::checkpoint, tape);
  blk.zero_grad();
  Tensor4 gr = zeros_like(z1);
  for (size_t e = 0; e < r.v.size(); ++e) gr.v[e] = r.v[e];
  Tensor4 gz0 = ode_block_backward(blk, tape, gr);

  auto loss = [&]() {
    BlockTape t;
    Tensor4 out =
        ode_block_forward(blk, z0, true, false, TapeMode::checkpoint, t);
    return proj_loss(out, r);
  };

  double worst = 0;
  auto check_entry = [&](double analytic, real_t* x) {
    double fd = fd_central(loss, x);
    double err = rel_err(analytic, fd, 1e-3);
    worst = std::max(worst, err);
    CHECK(err <= 1e-6);
  };

  for (size_t e = 0; e < z0.v.size(); ++e)
    check_entry(gz0.v[e], &z0.v[e]);
  for (size_t e = 0; e < blk.conv_a.w.v.size(); ++e)
    check_entry(blk.conv_a.gw.v[e], &blk.conv_a.w.v[e]);
  for (size_t e = 0; e < blk.conv_b.w.v.size(); ++e)
    check_entry(blk.conv_b.gw.v[e], &blk.conv_b.w.v[e]);
  for (size_t q = 0; q < 4; ++q) {
    check_entry(blk.grda_a[q], &blk.rda_a[q]);
    check_entry(blk.grda_b[q], &blk.rda_b[q]);
  }
  for (size_t s = 0; s < blk.bn_a.size(); ++s)
    for (size_t e = 0; e < blk.bn_a[s].gg.size(); ++e) {
      check_entry(blk.bn_a[s].gg[e], &blk.bn_a[s].p.gamma[e]);
      check_entry(blk.bn_a[s].gb[e], &blk.bn_a[s].p.beta[e]);
      check_entry(blk.bn_b[s].gg[e], &blk.bn_b[s].p.gamma[e]);
      check_entry(blk.bn_b[s].gb[e], &blk.bn_b[s].p.beta[e]);
    }
  MESSAGE("worst rel err: ", worst);
}

TEST_CASE("alex-style block gradients match finite differences") {
  Rng rng(23);
  OdeBlock blk = make_alex_ode_block("alex", 3, config2_schedule(4), rng);
  blk.rda_a = {real_t(0.2), real_t(0.05), real_t(-0.1), real_t(0.1)};
  Tensor4 z0 = random_input(1, 3, 6, 6, rng, 0.8);
  Tensor4 r(1, 3, 6, 6);
  fill_normal(r, rng, 0.5);

  BlockTape tape;
  ode_block_forward(blk, z0, true, false, TapeMode::checkpoint, tape);
  blk.zero_grad();
  Tensor4 gr(1, 3, 6, 6);
  for (size_t e = 0; e < r.v.size(); ++e) gr.v[e] = r.v[e];
  Tensor4 gz0 = ode_block_backward(blk, tape, gr);

  auto loss = [&]() {
    BlockTape t;
    Tensor4 out =
        ode_block_forward(blk, z0, true, false, TapeMode::checkpoint, t);
    return proj_loss(out, r);
  };

  auto check_entry = [&](double analytic, real_t* x) {
    double fd = fd_central(loss, x);
    CHECK(rel_err(analytic, fd, 1e-3) <= 1e-6);
  };

  for (size_t e = 0; e < z0.v.size(); e += 7)
    check_entry(gz0.v[e], &z0.v[e]);
  for (size_t e = 0; e < blk.conv_a.w.v.size(); e += 11)
    check_entry(blk.conv_a.gw.v[e], &blk.conv_a.w.v[e]);
  for (size_t e = 0; e < blk.conv_a.gb.size(); ++e)
    check_entry(blk.conv_a.gb[e], &blk.conv_a.b[e]);
  for (size_t q = 0; q < 4; ++q)
    check_entry(blk.grda_a[q], &blk.rda_a[q]);
  for (size_t e = 0; e < blk.bn_a[0].gg.size(); ++e) {
    check_entry(blk.bn_a[0].gg[e], &blk.bn_a[0].p.gamma[e]);
    check_entry(blk.bn_a[1].gb[e], &blk.bn_a[1].p.beta[e]);
  }
}

TEST_CASE("config 2 forward cost stays under 2.2x the baseline block") {
  Rng rng(24);
  OdeBlock blk = make_resnet_ode_block("blk", 16, config2_schedule(10), rng);
  int64_t ode = ode_block_forward_flops(blk, 256, 32, 32);
  int64_t base =
      baseline_block_forward_flops(BlockKind::resnet_basic, 16, 3, 256, 32, 32);
  double ratio = static_cast<double>(ode) / static_cast<double>(base);
  MESSAGE("config-2 / baseline flop ratio: ", ratio);
  CHECK(ratio > 1.5);
  CHECK(ratio <= 2.2);
}

TEST_CASE("parameter views cover kernels, coefficients and per-step BN") {
  Rng rng(25);
  OdeBlock blk = make_resnet_ode_block("layer1_1", 4, config1_schedule(5), rng);
  std::vector<ParamView> views;
  blk.collect_params(views);
  int64_t total = 0;
  int rda_views = 0;
  int bn_views = 0;
  for (const auto& v : views) {
    total += v.count();
    if (v.kind == ParamKind::rda_coeff) ++rda_views;
    if (v.kind == ParamKind::bn_affine) ++bn_views;
  }
  // Two 4*4*3*3 kernels, two coefficient quadruples, 5 BN pairs per branch.
  CHECK(total == 2 * 4 * 4 * 3 * 3 + 2 * 4 + 2 * 5 * 2 * 4);
  CHECK(rda_views == 2);
  CHECK(bn_views == 2 * 5 * 2);
}

}  // TEST_SUITE
