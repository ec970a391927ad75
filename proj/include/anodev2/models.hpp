#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "anodev2/layers.hpp"
#include "anodev2/ode_block.hpp"
#include "anodev2/params.hpp"
#include "anodev2/rng.hpp"
#include "anodev2/tensor.hpp"

namespace anodev2 {

enum class Architecture { alexnet, resnet4, resnet10 };
enum class Variant { baseline, anodev2_c1, anodev2_c2 };

const char* architecture_name(Architecture a);
const char* variant_name(Variant v);
bool parse_architecture(const std::string& s, Architecture& out);
bool parse_variant(const std::string& s, Variant& out);

struct ModelSpec {
  Architecture arch = Architecture::resnet4;
  Variant variant = Variant::baseline;
  // Desk-scale overrides for gradient checks; 0 keeps the published widths.
  int64_t stem_channels = 0;
  int64_t input_hw = 32;
  // Overrides the variant's n_z (and for config 1 its n_theta with it).
  int64_t override_n_z = 0;
};

// Plain residual block (identity or 1x1 projection shortcut, exit relu).
struct BaselineBlock {
  std::string name;
  BlockKind kind = BlockKind::resnet_basic;
  ConvLayer conv_a, conv_b;
  BnLayer bn_a, bn_b;
  bool has_projection = false;
  ConvLayer proj;
  BnLayer proj_bn;

  void zero_grad();
  void collect_params(std::vector<ParamView>& out);
  void collect_state(std::vector<ParamView>& out);
};

struct BaselineBlockTape {
  Tensor4 x, a, ar, b;
  BnCache bn_a_cache, bn_b_cache;
  Tensor4 proj_out;
  BnCache proj_bn_cache;
  Tensor4 y;  // block output, post exit-relu
};

Tensor4 baseline_block_forward(BaselineBlock& blk, const Tensor4& x,
                               bool train, bool update_stats,
                               BaselineBlockTape& tape);
Tensor4 baseline_block_backward(BaselineBlock& blk,
                                const BaselineBlockTape& tape,
                                const Tensor4& gy);

struct Model {
  ModelSpec spec;

  ConvLayer conv1;
  BnLayer bn1;

  struct Slot {
    bool is_ode = false;
    BaselineBlock base;
    OdeBlock ode;
  };
  std::vector<Slot> blocks;

  // resnets use fc1 only; alexnet uses all three.
  LinearLayer fc1, fc2, fc3;
  int64_t fc_count = 1;

  void zero_grad();
  std::vector<ParamView> params();       // trainable scalars
  std::vector<ParamView> state_views();  // params + BN running stats
};

Model build_model(const ModelSpec& spec, uint64_t seed);

// Sets every ODE block to p = 0 with identity sigma (weights stop moving).
void freeze_ode_blocks(Model& m);

struct ModelTape {
  bool train = false;
  Tensor4 x0;
  Tensor4 conv1_out;
  BnCache bn1_cache;
  Tensor4 stem_relu;
  Tensor4 stem_pool_out;  // alexnet only
  std::vector<BaselineBlockTape> base_tapes;  // parallel to blocks
  std::vector<BlockTape> ode_tapes;
  Tensor4 trunk_pool_in;
  Tensor4 pool_out;
  Tensor4 fc1_in;
  Tensor4 fc1_out_relu, fc2_out_relu;  // alexnet only
};

Tensor4 model_forward(Model& m, const Tensor4& x, bool train,
                      bool update_stats, TapeMode mode, ModelTape& tape);
// Accumulates parameter gradients into the model; returns grad wrt x.
Tensor4 model_backward(Model& m, const ModelTape& tape,
                       const Tensor4& glogits);

struct ParamReport {
  std::vector<std::pair<std::string, int64_t>> per_layer;
  int64_t total = 0;
  std::string to_csv() const;  // header: layer,count
};

ParamReport count_parameters(Model& m);

}  // namespace anodev2
