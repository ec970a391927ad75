#pragma once

#include <array>
#include <vector>

#include "anodev2/params.hpp"
#include "anodev2/spectral.hpp"

namespace anodev2 {

// config 1: weights and activations share n steps; step j applies
// trajectory entry j. config 2: the weights take n_theta substeps and only
// the two endpoints feed the two activation half-steps.
struct OdeBlockSchedule {
  int config = 0;  // 1, 2, or 0 for custom
  int64_t n_z = 1;
  int64_t n_theta = 1;
  std::vector<int64_t> applied;  // trajectory index per z-step, size n_z
};

OdeBlockSchedule config1_schedule(int64_t n = 5);
OdeBlockSchedule config2_schedule(int64_t n_theta = 10);
// n_z = 1, applied = {0}: degenerates to the plain residual block.
OdeBlockSchedule single_step_schedule();
OdeBlockSchedule custom_schedule(int64_t n_z, int64_t n_theta);
void validate_schedule(const OdeBlockSchedule& s);

enum class BlockKind { resnet_basic, alex_conv_bn, scalar_linear };
enum class TapeMode { checkpoint, full };

// resnet_basic: f = conv_a -> BN -> relu -> conv_b -> BN
// alex_conv_bn: f = conv_a(+bias) -> BN
// scalar_linear: f = conv_a (1x1, no BN); used to wrap small ODE systems.
struct OdeBlock {
  std::string name;
  BlockKind kind = BlockKind::resnet_basic;
  OdeBlockSchedule sched;
  Act sigma = Act::tanh_;
  bool post_relu = true;

  ConvLayer conv_a, conv_b;
  std::array<real_t, 4> rda_a{}, rda_b{};    // d, vx, vy, rho
  std::array<real_t, 4> grda_a{}, grda_b{};
  std::vector<BnLayer> bn_a, bn_b;  // one set per z-step

  bool uses_conv_b() const { return kind == BlockKind::resnet_basic; }
  bool uses_bn() const { return kind != BlockKind::scalar_linear; }
  RDACoefficients coeff_a() const {
    return {rda_a[0], rda_a[1], rda_a[2], rda_a[3]};
  }
  RDACoefficients coeff_b() const {
    return {rda_b[0], rda_b[1], rda_b[2], rda_b[3]};
  }

  void zero_grad();
  void collect_params(std::vector<ParamView>& out);
  void collect_state(std::vector<ParamView>& out);
};

OdeBlock make_resnet_ode_block(const std::string& name, int64_t channels,
                               OdeBlockSchedule sched, Rng& rng);
OdeBlock make_alex_ode_block(const std::string& name, int64_t channels,
                             OdeBlockSchedule sched, Rng& rng);
// 1x1x1x1 system dz/dt = theta z with dw/dt evolved by the k=1 spectral
// step (only rho acts on a 1-point grid).
OdeBlock make_scalar_block(real_t w0, real_t rho, int64_t n);

struct StepCache {
  Tensor4 z_in;
  Tensor4 a;  // conv_a output (bn_a input)
  BnCache bn_a_cache;
  Tensor4 ar;  // relu output (conv_b input), resnet only
  Tensor4 b;   // conv_b output (bn_b input), resnet only
  BnCache bn_b_cache;
  Tensor4 z_out;  // step output (after the post-step relu)
};

struct BlockTape {
  TapeMode mode = TapeMode::checkpoint;
  bool train = true;
  Tensor4 z0;
  // traj[0] for conv_a, traj[1] for conv_b; length n_theta + 1 each.
  std::vector<std::vector<Tensor4>> traj;
  std::vector<StepCache> steps;  // full mode only
  int64_t activation_tensors_stored = 0;
};

// One evaluation of f(z; theta_step) using the step's BN set. cache may be
// null (light recomputation). In train mode the BN uses batch statistics;
// running stats move only when update_stats is set.
Tensor4 residual_f(OdeBlock& blk, const Tensor4& z, const Tensor4& wa,
                   const Tensor4* wb, int64_t step, bool train,
                   bool update_stats, StepCache* cache);

Tensor4 ode_block_forward(OdeBlock& blk, const Tensor4& z0, bool train,
                          bool update_stats, TapeMode mode, BlockTape& tape);

// Accumulates parameter gradients into blk and returns grad wrt z0.
// Checkpoint tapes recompute interior activations from z0; the op sequence
// matches the full-storage tape exactly, so results are bitwise equal.
Tensor4 ode_block_backward(OdeBlock& blk, const BlockTape& tape,
                           const Tensor4& gz1);

// Analytic forward-pass FLOP counts (multiply and add each count as one).
int64_t conv_flops(int64_t n, int64_t co, int64_t ho, int64_t wo, int64_t ci,
                   int64_t k, bool bias);
int64_t rda_step_flops(int64_t co, int64_t ci, int64_t k);
int64_t ode_block_forward_flops(const OdeBlock& blk, int64_t batch, int64_t h,
                                int64_t w);
// The plain residual block the ODE block degenerates to at n_z = 1.
int64_t baseline_block_forward_flops(BlockKind kind, int64_t channels,
                                     int64_t k, int64_t batch, int64_t h,
                                     int64_t w);

}  // namespace anodev2
