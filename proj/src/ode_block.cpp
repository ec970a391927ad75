#include "anodev2/ode_block.hpp"

#include <cmath>

namespace anodev2 {

namespace {

Tensor4 scaled(const Tensor4& t, real_t s) {
  Tensor4 r = zeros_like(t);
  for (size_t e = 0; e < t.v.size(); ++e) r.v[e] = s * t.v[e];
  return r;
}

Tensor4 euler_update(const Tensor4& z, const Tensor4& f, real_t dt,
                     bool post_relu) {
  check(z.same_shape(f), "ode_block: f shape " + f.shape_str() +
                             " does not match state " + z.shape_str());
  Tensor4 out = zeros_like(z);
  for (size_t e = 0; e < z.v.size(); ++e) out.v[e] = z.v[e] + dt * f.v[e];
  if (post_relu) out = activation(out, Act::relu);
  return out;
}

int64_t nonempty_activations(const StepCache& c) {
  int64_t n = 0;
  for (const Tensor4* t : {&c.z_in, &c.a, &c.ar, &c.b, &c.z_out})
    if (t->size() > 0) ++n;
  return n;
}

}  // namespace

OdeBlockSchedule config1_schedule(int64_t n) {
  OdeBlockSchedule s;
  s.config = 1;
  s.n_z = n;
  s.n_theta = n;
  for (int64_t j = 0; j < n; ++j) s.applied.push_back(j);
  return s;
}

OdeBlockSchedule config2_schedule(int64_t n_theta) {
  OdeBlockSchedule s;
  s.config = 2;
  s.n_z = 2;
  s.n_theta = n_theta;
  s.applied = {0, n_theta};
  return s;
}

OdeBlockSchedule single_step_schedule() {
  OdeBlockSchedule s;
  s.config = 0;
  s.n_z = 1;
  s.n_theta = 1;
  s.applied = {0};
  return s;
}

OdeBlockSchedule custom_schedule(int64_t n_z, int64_t n_theta) {
  check(n_theta % n_z == 0, "custom_schedule: n_theta must be a multiple");
  OdeBlockSchedule s;
  s.config = 0;
  s.n_z = n_z;
  s.n_theta = n_theta;
  for (int64_t j = 0; j < n_z; ++j) s.applied.push_back(j * (n_theta / n_z));
  return s;
}

void validate_schedule(const OdeBlockSchedule& s) {
  check(s.n_z >= 1, "schedule: n_z must be >= 1");
  check(s.n_theta >= 1, "schedule: n_theta must be >= 1");
  check(static_cast<int64_t>(s.applied.size()) == s.n_z,
        "schedule: applied indices must match n_z");
  for (int64_t a : s.applied)
    check(a >= 0 && a <= s.n_theta, "schedule: applied index out of range");
  if (s.config == 1) {
    check(s.n_z == s.n_theta, "config 1 requires n_z == n_theta");
    for (int64_t j = 0; j < s.n_z; ++j)
      check(s.applied[static_cast<size_t>(j)] == j,
            "config 1 applies every trajectory entry in order");
  } else if (s.config == 2) {
    check(s.n_z == 2, "config 2 uses exactly two activation steps");
    check(s.applied.front() == 0 && s.applied.back() == s.n_theta,
          "config 2 applies the trajectory endpoints");
  }
}

void OdeBlock::zero_grad() {
  conv_a.zero_grad();
  if (uses_conv_b()) conv_b.zero_grad();
  for (auto& bn : bn_a) bn.zero_grad();
  for (auto& bn : bn_b) bn.zero_grad();
  grda_a.fill(0);
  grda_b.fill(0);
}

void OdeBlock::collect_params(std::vector<ParamView>& out) {
  conv_a.collect(out);
  out.push_back({name + ".rda_a", {4}, rda_a.data(), grda_a.data(),
                 ParamKind::rda_coeff});
  for (auto& bn : bn_a) bn.collect(out);
  if (uses_conv_b()) {
    conv_b.collect(out);
    out.push_back({name + ".rda_b", {4}, rda_b.data(), grda_b.data(),
                   ParamKind::rda_coeff});
    for (auto& bn : bn_b) bn.collect(out);
  }
}

void OdeBlock::collect_state(std::vector<ParamView>& out) {
  for (auto& bn : bn_a) bn.collect_state(out);
  for (auto& bn : bn_b) bn.collect_state(out);
}

OdeBlock make_resnet_ode_block(const std::string& name, int64_t channels,
                               OdeBlockSchedule sched, Rng& rng) {
  validate_schedule(sched);
  OdeBlock b;
  b.name = name;
  b.kind = BlockKind::resnet_basic;
  b.sched = std::move(sched);
  b.conv_a = ConvLayer(name + ".conv_a", channels, channels, 3, 1, 1, false);
  b.conv_b = ConvLayer(name + ".conv_b", channels, channels, 3, 1, 1, false);
  b.conv_a.init_he(rng);
  b.conv_b.init_he(rng);
  b.rda_a = {real_t(0.01), 0, 0, 0};
  b.rda_b = {real_t(0.01), 0, 0, 0};
  for (int64_t j = 0; j < b.sched.n_z; ++j) {
    b.bn_a.emplace_back(name + ".bn_a" + std::to_string(j), channels);
    b.bn_b.emplace_back(name + ".bn_b" + std::to_string(j), channels);
  }
  return b;
}

OdeBlock make_alex_ode_block(const std::string& name, int64_t channels,
                             OdeBlockSchedule sched, Rng& rng) {
  validate_schedule(sched);
  OdeBlock b;
  b.name = name;
  b.kind = BlockKind::alex_conv_bn;
  b.sched = std::move(sched);
  b.conv_a = ConvLayer(name + ".conv2", channels, channels, 5, 1, 2, true);
  b.conv_a.init_he(rng);
  b.rda_a = {real_t(0.01), 0, 0, 0};
  for (int64_t j = 0; j < b.sched.n_z; ++j)
    b.bn_a.emplace_back(name + ".bn2_" + std::to_string(j), channels);
  return b;
}

OdeBlock make_scalar_block(real_t w0, real_t rho, int64_t n) {
  OdeBlock b;
  b.name = "scalar";
  b.kind = BlockKind::scalar_linear;
  b.sched = custom_schedule(n, n);
  b.sigma = Act::identity;
  b.post_relu = false;
  b.conv_a = ConvLayer("scalar.theta", 1, 1, 1, 1, 0, false);
  b.conv_a.w.v[0] = w0;
  b.rda_a = {0, 0, 0, rho};
  return b;
}

Tensor4 residual_f(OdeBlock& blk, const Tensor4& z, const Tensor4& wa,
                   const Tensor4* wb, int64_t step, bool train,
                   bool update_stats, StepCache* cache) {
  switch (blk.kind) {
    case BlockKind::scalar_linear: {
      return conv2d(z, wa, nullptr, blk.conv_a.stride, blk.conv_a.pad);
    }
    case BlockKind::alex_conv_bn: {
      Tensor4 a = conv2d(z, wa, blk.conv_a.has_bias ? &blk.conv_a.b : nullptr,
                         blk.conv_a.stride, blk.conv_a.pad);
      BnCache tmp;
      BnCache& bc = cache ? cache->bn_a_cache : tmp;
      auto& bn = blk.bn_a[static_cast<size_t>(step)];
      Tensor4 f = train ? batchnorm2d_train(a, bn.p, bc, update_stats)
                        : batchnorm2d_eval(a, bn.p);
      if (cache) cache->a = std::move(a);
      return f;
    }
    case BlockKind::resnet_basic: {
      check(wb != nullptr, "residual_f: resnet block needs both kernels");
      Tensor4 a = conv2d(z, wa, nullptr, blk.conv_a.stride, blk.conv_a.pad);
      BnCache tmpa;
      BnCache& bca = cache ? cache->bn_a_cache : tmpa;
      auto& bna = blk.bn_a[static_cast<size_t>(step)];
      Tensor4 abn = train ? batchnorm2d_train(a, bna.p, bca, update_stats)
                          : batchnorm2d_eval(a, bna.p);
      Tensor4 ar = activation(abn, Act::relu);
      Tensor4 bconv =
          conv2d(ar, *wb, nullptr, blk.conv_b.stride, blk.conv_b.pad);
      BnCache tmpb;
      BnCache& bcb = cache ? cache->bn_b_cache : tmpb;
      auto& bnb = blk.bn_b[static_cast<size_t>(step)];
      Tensor4 f = train ? batchnorm2d_train(bconv, bnb.p, bcb, update_stats)
                        : batchnorm2d_eval(bconv, bnb.p);
      if (cache) {
        cache->a = std::move(a);
        cache->ar = std::move(ar);
        cache->b = std::move(bconv);
      }
      return f;
    }
  }
  fail("residual_f: unknown block kind");
}

Tensor4 ode_block_forward(OdeBlock& blk, const Tensor4& z0, bool train,
                          bool update_stats, TapeMode mode, BlockTape& tape) {
  validate_schedule(blk.sched);
  tape = BlockTape{};
  tape.mode = mode;
  tape.train = train;
  tape.z0 = z0;
  tape.traj.push_back(rda_trajectory(blk.conv_a.w, blk.coeff_a(),
                                     blk.sched.n_theta, blk.sigma));
  if (blk.uses_conv_b())
    tape.traj.push_back(rda_trajectory(blk.conv_b.w, blk.coeff_b(),
                                       blk.sched.n_theta, blk.sigma));

  const real_t dt = real_t(1) / static_cast<real_t>(blk.sched.n_z);
  const bool keep_steps = mode == TapeMode::full && train;
  Tensor4 z = z0;
  for (int64_t j = 0; j < blk.sched.n_z; ++j) {
    const int64_t ti = blk.sched.applied[static_cast<size_t>(j)];
    const Tensor4& wa = tape.traj[0][static_cast<size_t>(ti)];
    const Tensor4* wb =
        blk.uses_conv_b() ? &tape.traj[1][static_cast<size_t>(ti)] : nullptr;
    StepCache* cp = nullptr;
    if (keep_steps) {
      tape.steps.emplace_back();
      cp = &tape.steps.back();
      cp->z_in = z;
    }
    Tensor4 f = residual_f(blk, z, wa, wb, j, train, update_stats, cp);
    Tensor4 znext = euler_update(z, f, dt, blk.post_relu);
    if (cp) cp->z_out = znext;
    z = std::move(znext);
  }

  tape.activation_tensors_stored = 1;  // z0
  for (const StepCache& c : tape.steps)
    tape.activation_tensors_stored += nonempty_activations(c);
  return z;
}

namespace {

// Reverse pass through one f evaluation. Adds parameter gradients to blk and
// kernel gradients to the applied trajectory entries; returns grad wrt z_in.
Tensor4 residual_f_backward(OdeBlock& blk, const StepCache& c, int64_t step,
                            const Tensor4& wa, const Tensor4* wb,
                            const Tensor4& gf,
                            std::vector<std::vector<Tensor4>>& g_traj,
                            int64_t traj_index) {
  switch (blk.kind) {
    case BlockKind::scalar_linear: {
      ConvGrads cg = conv2d_backward(c.z_in, wa, false, blk.conv_a.stride,
                                     blk.conv_a.pad, gf);
      add_into(g_traj[0][static_cast<size_t>(traj_index)], cg.gw);
      return std::move(cg.gx);
    }
    case BlockKind::alex_conv_bn: {
      auto& bn = blk.bn_a[static_cast<size_t>(step)];
      BnGrads bg = batchnorm2d_backward(c.a, bn.p, c.bn_a_cache, gf);
      for (size_t e = 0; e < bn.gg.size(); ++e) {
        bn.gg[e] += bg.ggamma[e];
        bn.gb[e] += bg.gbeta[e];
      }
      ConvGrads cg =
          conv2d_backward(c.z_in, wa, blk.conv_a.has_bias, blk.conv_a.stride,
                          blk.conv_a.pad, bg.gx);
      if (blk.conv_a.has_bias)
        for (size_t e = 0; e < cg.gb.size(); ++e) blk.conv_a.gb[e] += cg.gb[e];
      add_into(g_traj[0][static_cast<size_t>(traj_index)], cg.gw);
      return std::move(cg.gx);
    }
    case BlockKind::resnet_basic: {
      auto& bnb = blk.bn_b[static_cast<size_t>(step)];
      BnGrads bgb = batchnorm2d_backward(c.b, bnb.p, c.bn_b_cache, gf);
      for (size_t e = 0; e < bnb.gg.size(); ++e) {
        bnb.gg[e] += bgb.ggamma[e];
        bnb.gb[e] += bgb.gbeta[e];
      }
      ConvGrads cgb = conv2d_backward(c.ar, *wb, false, blk.conv_b.stride,
                                      blk.conv_b.pad, bgb.gx);
      add_into(g_traj[1][static_cast<size_t>(traj_index)], cgb.gw);
      Tensor4 gar = activation_backward(c.ar, Act::relu, cgb.gx);
      auto& bna = blk.bn_a[static_cast<size_t>(step)];
      BnGrads bga = batchnorm2d_backward(c.a, bna.p, c.bn_a_cache, gar);
      for (size_t e = 0; e < bna.gg.size(); ++e) {
        bna.gg[e] += bga.ggamma[e];
        bna.gb[e] += bga.gbeta[e];
      }
      ConvGrads cga = conv2d_backward(c.z_in, wa, false, blk.conv_a.stride,
                                      blk.conv_a.pad, bga.gx);
      add_into(g_traj[0][static_cast<size_t>(traj_index)], cga.gw);
      return std::move(cga.gx);
    }
  }
  fail("residual_f_backward: unknown block kind");
}

}  // namespace

Tensor4 ode_block_backward(OdeBlock& blk, const BlockTape& tape,
                           const Tensor4& gz1) {
  check(tape.train, "ode_block_backward: tape must come from a training-mode "
                    "forward pass");
  check(!tape.traj.empty(), "ode_block_backward: tape has no trajectory");
  const int64_t n_z = blk.sched.n_z;
  const int64_t n_theta = blk.sched.n_theta;
  const real_t dt = real_t(1) / static_cast<real_t>(n_z);

  std::vector<std::vector<Tensor4>> g_traj(tape.traj.size());
  for (size_t cidx = 0; cidx < tape.traj.size(); ++cidx) {
    g_traj[cidx].reserve(tape.traj[cidx].size());
    for (const Tensor4& t : tape.traj[cidx])
      g_traj[cidx].push_back(zeros_like(t));
  }

  Tensor4 gz = gz1;
  for (int64_t j = n_z - 1; j >= 0; --j) {
    const int64_t ti = blk.sched.applied[static_cast<size_t>(j)];
    const Tensor4& wa = tape.traj[0][static_cast<size_t>(ti)];
    const Tensor4* wb =
        blk.uses_conv_b() ? &tape.traj[1][static_cast<size_t>(ti)] : nullptr;

    StepCache local;
    const StepCache* cache = nullptr;
    if (tape.mode == TapeMode::full) {
      check(static_cast<int64_t>(tape.steps.size()) == n_z,
            "ode_block_backward: full tape is missing step caches");
      cache = &tape.steps[static_cast<size_t>(j)];
    } else {
      // Recompute z_j from the stored block input, then redo step j with
      // caches. Identical op sequence, so values match the full tape bitwise.
      Tensor4 z = tape.z0;
      for (int64_t t = 0; t < j; ++t) {
        const int64_t tti = blk.sched.applied[static_cast<size_t>(t)];
        const Tensor4& twa = tape.traj[0][static_cast<size_t>(tti)];
        const Tensor4* twb =
            blk.uses_conv_b() ? &tape.traj[1][static_cast<size_t>(tti)]
                              : nullptr;
        Tensor4 f = residual_f(blk, z, twa, twb, t, tape.train, false, nullptr);
        z = euler_update(z, f, dt, blk.post_relu);
      }
      local.z_in = std::move(z);
      Tensor4 f =
          residual_f(blk, local.z_in, wa, wb, j, tape.train, false, &local);
      local.z_out = euler_update(local.z_in, f, dt, blk.post_relu);
      cache = &local;
    }

    Tensor4 gpre =
        blk.post_relu ? activation_backward(cache->z_out, Act::relu, gz) : gz;
    Tensor4 gf = scaled(gpre, dt);
    Tensor4 gz_f =
        residual_f_backward(blk, *cache, j, wa, wb, gf, g_traj, ti);
    add_into(gpre, gz_f);
    gz = std::move(gpre);
  }

  // Pull kernel gradients back through the weight trajectory.
  for (size_t cidx = 0; cidx < g_traj.size(); ++cidx) {
    const RDACoefficients p = cidx == 0 ? blk.coeff_a() : blk.coeff_b();
    std::array<real_t, 4>& gp = cidx == 0 ? blk.grda_a : blk.grda_b;
    const double sub_dt = 1.0 / static_cast<double>(n_theta);
    for (int64_t t = n_theta; t >= 1; --t) {
      RdaStepGrads sg = rda_step_backward(
          g_traj[cidx][static_cast<size_t>(t)],
          tape.traj[cidx][static_cast<size_t>(t - 1)], p, sub_dt, blk.sigma);
      add_into(g_traj[cidx][static_cast<size_t>(t - 1)], sg.grad_w);
      for (int q = 0; q < 4; ++q)
        gp[static_cast<size_t>(q)] += static_cast<real_t>(sg.grad_p[static_cast<size_t>(q)]);
    }
    Tensor4& gw = cidx == 0 ? blk.conv_a.gw : blk.conv_b.gw;
    add_into(gw, g_traj[cidx][0]);
  }
  return gz;
}

int64_t conv_flops(int64_t n, int64_t co, int64_t ho, int64_t wo, int64_t ci,
                   int64_t k, bool bias) {
  return n * co * ho * wo * (2 * ci * k * k + (bias ? 1 : 0));
}

int64_t rda_step_flops(int64_t co, int64_t ci, int64_t k) {
  // Two dense k^3 transforms plus the symbol multiply, per slice.
  return co * ci * (2 * 16 * k * k * k + 8 * k * k);
}

namespace {

int64_t bn_train_flops(int64_t n, int64_t c, int64_t h, int64_t w) {
  return 9 * n * c * h * w;
}

int64_t residual_f_flops(BlockKind kind, int64_t channels, int64_t k,
                         int64_t n, int64_t h, int64_t w) {
  switch (kind) {
    case BlockKind::scalar_linear:
      return conv_flops(n, channels, h, w, channels, k, false);
    case BlockKind::alex_conv_bn:
      return conv_flops(n, channels, h, w, channels, k, true) +
             bn_train_flops(n, channels, h, w);
    case BlockKind::resnet_basic:
      return 2 * conv_flops(n, channels, h, w, channels, k, false) +
             2 * bn_train_flops(n, channels, h, w) + n * channels * h * w;
  }
  return 0;
}

}  // namespace

int64_t ode_block_forward_flops(const OdeBlock& blk, int64_t batch, int64_t h,
                                int64_t w) {
  const int64_t c = blk.conv_a.w.n;
  const int64_t k = blk.conv_a.w.h;
  int64_t rda = blk.sched.n_theta * rda_step_flops(c, blk.conv_a.w.c, k);
  if (blk.uses_conv_b())
    rda += blk.sched.n_theta * rda_step_flops(c, c, blk.conv_b.w.h);
  int64_t steps = 0;
  for (int64_t j = 0; j < blk.sched.n_z; ++j) {
    steps += residual_f_flops(blk.kind, c, k, batch, h, w);
    steps += 2 * batch * c * h * w;                      // Euler update
    if (blk.post_relu) steps += batch * c * h * w;       // post-step relu
  }
  return rda + steps;
}

int64_t baseline_block_forward_flops(BlockKind kind, int64_t channels,
                                     int64_t k, int64_t batch, int64_t h,
                                     int64_t w) {
  int64_t f = residual_f_flops(kind, channels, k, batch, h, w);
  f += batch * channels * h * w;      // skip connection add
  f += batch * channels * h * w;      // exit relu
  return f;
}

}  // namespace anodev2
