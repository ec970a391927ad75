#include "anodev2/models.hpp"

#include <algorithm>
#include <sstream>

namespace anodev2 {

namespace {

void acc(std::vector<real_t>& a, const std::vector<real_t>& b) {
  check(a.size() == b.size(), "model: gradient vector size mismatch");
  for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

Tensor4 flatten(const Tensor4& t) {
  Tensor4 f(t.n, t.c * t.h * t.w, 1, 1);
  f.v = t.v;
  return f;
}

Tensor4 unflatten(const Tensor4& flat, const Tensor4& like) {
  check(flat.size() == like.size(), "model: unflatten size mismatch");
  Tensor4 t = zeros_like(like);
  t.v = flat.v;
  return t;
}

Tensor4 bn_apply(const Tensor4& x, BnLayer& bn, bool train, bool update_stats,
                 BnCache& cache) {
  return train ? batchnorm2d_train(x, bn.p, cache, update_stats)
               : batchnorm2d_eval(x, bn.p);
}

}  // namespace

const char* architecture_name(Architecture a) {
  switch (a) {
    case Architecture::alexnet: return "alexnet";
    case Architecture::resnet4: return "resnet4";
    case Architecture::resnet10: return "resnet10";
  }
  return "?";
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::anodev2_c1: return "anodev2_c1";
    case Variant::anodev2_c2: return "anodev2_c2";
  }
  return "?";
}

bool parse_architecture(const std::string& s, Architecture& out) {
  if (s == "alexnet") out = Architecture::alexnet;
  else if (s == "resnet4") out = Architecture::resnet4;
  else if (s == "resnet10") out = Architecture::resnet10;
  else return false;
  return true;
}

bool parse_variant(const std::string& s, Variant& out) {
  if (s == "baseline") out = Variant::baseline;
  else if (s == "anodev2_c1") out = Variant::anodev2_c1;
  else if (s == "anodev2_c2") out = Variant::anodev2_c2;
  else return false;
  return true;
}

void BaselineBlock::zero_grad() {
  conv_a.zero_grad();
  bn_a.zero_grad();
  if (kind == BlockKind::resnet_basic) {
    conv_b.zero_grad();
    bn_b.zero_grad();
  }
  if (has_projection) {
    proj.zero_grad();
    proj_bn.zero_grad();
  }
}

void BaselineBlock::collect_params(std::vector<ParamView>& out) {
  conv_a.collect(out);
  bn_a.collect(out);
  if (kind == BlockKind::resnet_basic) {
    conv_b.collect(out);
    bn_b.collect(out);
  }
  if (has_projection) {
    proj.collect(out);
    proj_bn.collect(out);
  }
}

void BaselineBlock::collect_state(std::vector<ParamView>& out) {
  bn_a.collect_state(out);
  if (kind == BlockKind::resnet_basic) bn_b.collect_state(out);
  if (has_projection) proj_bn.collect_state(out);
}

Tensor4 baseline_block_forward(BaselineBlock& blk, const Tensor4& x,
                               bool train, bool update_stats,
                               BaselineBlockTape& tape) {
  tape.x = x;
  Tensor4 a = conv2d(x, blk.conv_a.w,
                     blk.conv_a.has_bias ? &blk.conv_a.b : nullptr,
                     blk.conv_a.stride, blk.conv_a.pad);
  Tensor4 abn = bn_apply(a, blk.bn_a, train, update_stats, tape.bn_a_cache);
  tape.a = std::move(a);

  Tensor4 f;
  if (blk.kind == BlockKind::resnet_basic) {
    Tensor4 ar = activation(abn, Act::relu);
    Tensor4 b = conv2d(ar, blk.conv_b.w, nullptr, blk.conv_b.stride,
                       blk.conv_b.pad);
    f = bn_apply(b, blk.bn_b, train, update_stats, tape.bn_b_cache);
    tape.ar = std::move(ar);
    tape.b = std::move(b);
  } else {
    f = std::move(abn);
  }

  Tensor4 out;
  if (blk.has_projection) {
    Tensor4 po = conv2d(x, blk.proj.w, nullptr, blk.proj.stride, blk.proj.pad);
    Tensor4 skip =
        bn_apply(po, blk.proj_bn, train, update_stats, tape.proj_bn_cache);
    tape.proj_out = std::move(po);
    check(skip.same_shape(f), "baseline block: projection shape mismatch");
    out = std::move(skip);
    for (size_t e = 0; e < out.v.size(); ++e) out.v[e] += f.v[e];
  } else {
    check(x.same_shape(f), "baseline block: residual shape mismatch");
    out = zeros_like(x);
    for (size_t e = 0; e < out.v.size(); ++e) out.v[e] = x.v[e] + f.v[e];
  }
  out = activation(out, Act::relu);
  tape.y = out;
  return out;
}

Tensor4 baseline_block_backward(BaselineBlock& blk,
                                const BaselineBlockTape& tape,
                                const Tensor4& gy) {
  Tensor4 gsum = activation_backward(tape.y, Act::relu, gy);

  Tensor4 gf;
  if (blk.kind == BlockKind::resnet_basic) {
    BnGrads bgb =
        batchnorm2d_backward(tape.b, blk.bn_b.p, tape.bn_b_cache, gsum);
    acc(blk.bn_b.gg, bgb.ggamma);
    acc(blk.bn_b.gb, bgb.gbeta);
    ConvGrads cgb = conv2d_backward(tape.ar, blk.conv_b.w, false,
                                    blk.conv_b.stride, blk.conv_b.pad, bgb.gx);
    add_into(blk.conv_b.gw, cgb.gw);
    Tensor4 gar = activation_backward(tape.ar, Act::relu, cgb.gx);
    BnGrads bga =
        batchnorm2d_backward(tape.a, blk.bn_a.p, tape.bn_a_cache, gar);
    acc(blk.bn_a.gg, bga.ggamma);
    acc(blk.bn_a.gb, bga.gbeta);
    ConvGrads cga =
        conv2d_backward(tape.x, blk.conv_a.w, blk.conv_a.has_bias,
                        blk.conv_a.stride, blk.conv_a.pad, bga.gx);
    add_into(blk.conv_a.gw, cga.gw);
    if (blk.conv_a.has_bias) acc(blk.conv_a.gb, cga.gb);
    gf = std::move(cga.gx);
  } else {
    BnGrads bg =
        batchnorm2d_backward(tape.a, blk.bn_a.p, tape.bn_a_cache, gsum);
    acc(blk.bn_a.gg, bg.ggamma);
    acc(blk.bn_a.gb, bg.gbeta);
    ConvGrads cg = conv2d_backward(tape.x, blk.conv_a.w, blk.conv_a.has_bias,
                                   blk.conv_a.stride, blk.conv_a.pad, bg.gx);
    add_into(blk.conv_a.gw, cg.gw);
    if (blk.conv_a.has_bias) acc(blk.conv_a.gb, cg.gb);
    gf = std::move(cg.gx);
  }

  if (blk.has_projection) {
    BnGrads bgp = batchnorm2d_backward(tape.proj_out, blk.proj_bn.p,
                                       tape.proj_bn_cache, gsum);
    acc(blk.proj_bn.gg, bgp.ggamma);
    acc(blk.proj_bn.gb, bgp.gbeta);
    ConvGrads cgp = conv2d_backward(tape.x, blk.proj.w, false,
                                    blk.proj.stride, blk.proj.pad, bgp.gx);
    add_into(blk.proj.gw, cgp.gw);
    add_into(gf, cgp.gx);
  } else {
    add_into(gf, gsum);
  }
  return gf;
}

void Model::zero_grad() {
  conv1.zero_grad();
  bn1.zero_grad();
  for (auto& s : blocks) {
    if (s.is_ode) s.ode.zero_grad();
    else s.base.zero_grad();
  }
  fc1.zero_grad();
  if (fc_count == 3) {
    fc2.zero_grad();
    fc3.zero_grad();
  }
}

std::vector<ParamView> Model::params() {
  std::vector<ParamView> out;
  conv1.collect(out);
  bn1.collect(out);
  for (auto& s : blocks) {
    if (s.is_ode) s.ode.collect_params(out);
    else s.base.collect_params(out);
  }
  fc1.collect(out);
  if (fc_count == 3) {
    fc2.collect(out);
    fc3.collect(out);
  }
  return out;
}

std::vector<ParamView> Model::state_views() {
  std::vector<ParamView> out = params();
  bn1.collect_state(out);
  for (auto& s : blocks) {
    if (s.is_ode) s.ode.collect_state(out);
    else s.base.collect_state(out);
  }
  return out;
}

namespace {

BaselineBlock make_baseline_resnet_block(const std::string& name, int64_t cin,
                                         int64_t cout, bool downsample,
                                         Rng& rng) {
  BaselineBlock b;
  b.name = name;
  b.kind = BlockKind::resnet_basic;
  b.conv_a =
      ConvLayer(name + ".conv_a", cout, cin, 3, downsample ? 2 : 1, 1, false);
  b.conv_b = ConvLayer(name + ".conv_b", cout, cout, 3, 1, 1, false);
  b.conv_a.init_he(rng);
  b.conv_b.init_he(rng);
  b.bn_a = BnLayer(name + ".bn_a", cout);
  b.bn_b = BnLayer(name + ".bn_b", cout);
  if (downsample) {
    b.has_projection = true;
    b.proj = ConvLayer(name + ".proj", cout, cin, 1, 2, 0, false);
    b.proj.init_he(rng);
    b.proj_bn = BnLayer(name + ".proj_bn", cout);
  }
  return b;
}

OdeBlockSchedule schedule_for(const ModelSpec& spec) {
  if (spec.variant == Variant::anodev2_c2) return config2_schedule(10);
  return config1_schedule(spec.override_n_z > 0 ? spec.override_n_z : 5);
}

}  // namespace

Model build_model(const ModelSpec& spec, uint64_t seed) {
  Model m;
  m.spec = spec;
  Rng rng(seed);
  const bool evolve = spec.variant != Variant::baseline;
  const OdeBlockSchedule sched = evolve ? schedule_for(spec) : OdeBlockSchedule{};

  auto add_resnet_block = [&](const std::string& name, int64_t c) {
    Model::Slot s;
    if (evolve) {
      s.is_ode = true;
      s.ode = make_resnet_ode_block(name, c, sched, rng);
    } else {
      s.base = make_baseline_resnet_block(name, c, c, false, rng);
    }
    m.blocks.push_back(std::move(s));
  };

  if (spec.arch == Architecture::alexnet) {
    const int64_t ch = spec.stem_channels > 0 ? spec.stem_channels : 64;
    check(spec.input_hw % 4 == 0, "build_model: alexnet input must pool twice");
    m.conv1 = ConvLayer("conv1", ch, 3, 5, 1, 2, true);
    m.conv1.init_he(rng);
    m.bn1 = BnLayer("bn1", ch);
    Model::Slot s;
    if (evolve) {
      s.is_ode = true;
      s.ode = make_alex_ode_block("conv2_block", ch, sched, rng);
    } else {
      s.base.name = "conv2_block";
      s.base.kind = BlockKind::alex_conv_bn;
      s.base.conv_a = ConvLayer("conv2_block.conv2", ch, ch, 5, 1, 2, true);
      s.base.conv_a.init_he(rng);
      s.base.bn_a = BnLayer("conv2_block.bn2", ch);
    }
    m.blocks.push_back(std::move(s));
    const int64_t hw = spec.input_hw / 4;
    m.fc1 = LinearLayer("fc1", ch * hw * hw, 384);
    m.fc2 = LinearLayer("fc2", 384, 192);
    m.fc3 = LinearLayer("fc3", 192, 10);
    m.fc1.init_he(rng);
    m.fc2.init_he(rng);
    m.fc3.init_he(rng);
    m.fc_count = 3;
    return m;
  }

  const int64_t ch = spec.stem_channels > 0 ? spec.stem_channels : 16;
  m.conv1 = ConvLayer("conv1", ch, 3, 3, 1, 1, false);
  m.conv1.init_he(rng);
  m.bn1 = BnLayer("bn1", ch);

  if (spec.arch == Architecture::resnet4) {
    check(spec.input_hw % 8 == 0, "build_model: resnet4 input must pool by 8");
    add_resnet_block("layer1_1", ch);
    const int64_t hw = spec.input_hw / 8;
    m.fc1 = LinearLayer("fc", ch * hw * hw, 10);
    m.fc1.init_he(rng);
  } else {
    check(spec.input_hw % 16 == 0,
          "build_model: resnet10 input must downsample then pool by 8");
    add_resnet_block("layer1_1", ch);
    add_resnet_block("layer1_2", ch);
    Model::Slot down;
    down.base = make_baseline_resnet_block("layer2_1", ch, 2 * ch, true, rng);
    m.blocks.push_back(std::move(down));
    add_resnet_block("layer2_2", 2 * ch);
    const int64_t hw = spec.input_hw / 16;
    m.fc1 = LinearLayer("fc", 2 * ch * hw * hw, 10);
    m.fc1.init_he(rng);
  }
  m.fc_count = 1;
  return m;
}

void freeze_ode_blocks(Model& m) {
  for (auto& s : m.blocks) {
    if (!s.is_ode) continue;
    s.ode.rda_a = {0, 0, 0, 0};
    s.ode.rda_b = {0, 0, 0, 0};
    s.ode.sigma = Act::identity;
  }
}

Tensor4 model_forward(Model& m, const Tensor4& x, bool train,
                      bool update_stats, TapeMode mode, ModelTape& tape) {
  tape = ModelTape{};
  tape.train = train;
  tape.x0 = x;
  const bool alex = m.spec.arch == Architecture::alexnet;

  Tensor4 cur = conv2d(x, m.conv1.w, m.conv1.has_bias ? &m.conv1.b : nullptr,
                       m.conv1.stride, m.conv1.pad);
  tape.conv1_out = cur;
  cur = bn_apply(cur, m.bn1, train, update_stats, tape.bn1_cache);
  cur = activation(cur, Act::relu);
  tape.stem_relu = cur;
  if (alex) {
    cur = maxpool2d(cur, 2, 2);
    tape.stem_pool_out = cur;
  }

  tape.base_tapes.resize(m.blocks.size());
  tape.ode_tapes.resize(m.blocks.size());
  for (size_t i = 0; i < m.blocks.size(); ++i) {
    auto& s = m.blocks[i];
    cur = s.is_ode
              ? ode_block_forward(s.ode, cur, train, update_stats, mode,
                                  tape.ode_tapes[i])
              : baseline_block_forward(s.base, cur, train, update_stats,
                                       tape.base_tapes[i]);
  }

  tape.trunk_pool_in = cur;
  const int64_t pk = alex ? 2 : 8;
  cur = maxpool2d(cur, pk, pk);
  tape.pool_out = cur;
  tape.fc1_in = flatten(cur);

  Tensor4 out = linear(tape.fc1_in, m.fc1.w, m.fc1.b, m.fc1.out);
  if (alex) {
    out = activation(out, Act::relu);
    tape.fc1_out_relu = out;
    out = linear(out, m.fc2.w, m.fc2.b, m.fc2.out);
    out = activation(out, Act::relu);
    tape.fc2_out_relu = out;
    out = linear(out, m.fc3.w, m.fc3.b, m.fc3.out);
  }
  return out;
}

Tensor4 model_backward(Model& m, const ModelTape& tape,
                       const Tensor4& glogits) {
  check(tape.train, "model_backward: tape must come from a training forward");
  const bool alex = m.spec.arch == Architecture::alexnet;

  Tensor4 g = glogits;
  if (alex) {
    LinearGrads l3 = linear_backward(tape.fc2_out_relu, m.fc3.w, m.fc3.out, g);
    acc(m.fc3.gw, l3.gw);
    acc(m.fc3.gb, l3.gb);
    g = activation_backward(tape.fc2_out_relu, Act::relu, l3.gx);
    LinearGrads l2 = linear_backward(tape.fc1_out_relu, m.fc2.w, m.fc2.out, g);
    acc(m.fc2.gw, l2.gw);
    acc(m.fc2.gb, l2.gb);
    g = activation_backward(tape.fc1_out_relu, Act::relu, l2.gx);
  }
  LinearGrads l1 = linear_backward(tape.fc1_in, m.fc1.w, m.fc1.out, g);
  acc(m.fc1.gw, l1.gw);
  acc(m.fc1.gb, l1.gb);

  const int64_t pk = alex ? 2 : 8;
  Tensor4 gp = unflatten(l1.gx, tape.pool_out);
  g = maxpool2d_backward(tape.trunk_pool_in, pk, pk, gp);

  for (size_t i = m.blocks.size(); i-- > 0;) {
    auto& s = m.blocks[i];
    g = s.is_ode ? ode_block_backward(s.ode, tape.ode_tapes[i], g)
                 : baseline_block_backward(s.base, tape.base_tapes[i], g);
  }

  if (alex) g = maxpool2d_backward(tape.stem_relu, 2, 2, g);
  g = activation_backward(tape.stem_relu, Act::relu, g);
  BnGrads bg = batchnorm2d_backward(tape.conv1_out, m.bn1.p, tape.bn1_cache, g);
  acc(m.bn1.gg, bg.ggamma);
  acc(m.bn1.gb, bg.gbeta);
  ConvGrads cg = conv2d_backward(tape.x0, m.conv1.w, m.conv1.has_bias,
                                 m.conv1.stride, m.conv1.pad, bg.gx);
  add_into(m.conv1.gw, cg.gw);
  if (m.conv1.has_bias) acc(m.conv1.gb, cg.gb);
  return cg.gx;
}

ParamReport count_parameters(Model& m) {
  ParamReport r;
  for (const ParamView& v : m.params()) {
    r.per_layer.emplace_back(v.name, v.count());
    r.total += v.count();
  }
  return r;
}

std::string ParamReport::to_csv() const {
  std::ostringstream os;
  os << "layer,count\n";
  for (const auto& [name, count] : per_layer) os << name << ',' << count << '\n';
  os << "total," << total << '\n';
  return os.str();
}

}  // namespace anodev2
