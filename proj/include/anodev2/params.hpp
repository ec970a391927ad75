#pragma once

#include <string>
#include <vector>

#include "anodev2/layers.hpp"
#include "anodev2/rng.hpp"

namespace anodev2 {

enum class ParamKind {
  conv_weight,
  linear_weight,
  bias,
  bn_affine,
  rda_coeff,
  running_stat,
};

// Non-owning handle to one named parameter array.
struct ParamView {
  std::string name;
  std::vector<int64_t> dims;
  real_t* data = nullptr;
  real_t* grad = nullptr;  // null for running stats
  ParamKind kind = ParamKind::conv_weight;

  int64_t count() const {
    int64_t c = 1;
    for (int64_t d : dims) c *= d;
    return c;
  }
};

struct ConvLayer {
  std::string name;
  Tensor4 w;  // (co, ci, k, k)
  std::vector<real_t> b;
  bool has_bias = false;
  int64_t stride = 1, pad = 0;
  Tensor4 gw;
  std::vector<real_t> gb;

  ConvLayer() = default;
  ConvLayer(std::string n, int64_t co, int64_t ci, int64_t k, int64_t stride_,
            int64_t pad_, bool bias)
      : name(std::move(n)), w(co, ci, k, k), b(bias ? co : 0, real_t(0)),
        has_bias(bias), stride(stride_), pad(pad_), gw(co, ci, k, k),
        gb(bias ? co : 0, real_t(0)) {}

  void init_he(Rng& rng) {
    const double fan_in = static_cast<double>(w.c * w.h * w.w);
    const double s = std::sqrt(2.0 / fan_in);
    for (auto& v : w.v) v = static_cast<real_t>(s * rng.normal());
    for (auto& v : b) v = real_t(0);
  }
  void zero_grad() {
    gw.zero();
    std::fill(gb.begin(), gb.end(), real_t(0));
  }
  void collect(std::vector<ParamView>& out) {
    out.push_back({name + ".weight", {w.n, w.c, w.h, w.w}, w.v.data(),
                   gw.v.data(), ParamKind::conv_weight});
    if (has_bias)
      out.push_back({name + ".bias", {static_cast<int64_t>(b.size())},
                     b.data(), gb.data(), ParamKind::bias});
  }
};

struct BnLayer {
  std::string name;
  BnParams p;
  std::vector<real_t> gg, gb;

  BnLayer() = default;
  BnLayer(std::string n, int64_t c)
      : name(std::move(n)), p(c), gg(c, real_t(0)), gb(c, real_t(0)) {}

  void zero_grad() {
    std::fill(gg.begin(), gg.end(), real_t(0));
    std::fill(gb.begin(), gb.end(), real_t(0));
  }
  void collect(std::vector<ParamView>& out) {
    const int64_t c = p.channels();
    out.push_back(
        {name + ".gamma", {c}, p.gamma.data(), gg.data(), ParamKind::bn_affine});
    out.push_back(
        {name + ".beta", {c}, p.beta.data(), gb.data(), ParamKind::bn_affine});
  }
  void collect_state(std::vector<ParamView>& out) {
    const int64_t c = p.channels();
    out.push_back({name + ".running_mean", {c}, p.running_mean.data(), nullptr,
                   ParamKind::running_stat});
    out.push_back({name + ".running_var", {c}, p.running_var.data(), nullptr,
                   ParamKind::running_stat});
  }
};

struct LinearLayer {
  std::string name;
  int64_t in = 0, out = 0;
  std::vector<real_t> w, b, gw, gb;

  LinearLayer() = default;
  LinearLayer(std::string n, int64_t in_, int64_t out_)
      : name(std::move(n)), in(in_), out(out_), w(in_ * out_, real_t(0)),
        b(out_, real_t(0)), gw(in_ * out_, real_t(0)), gb(out_, real_t(0)) {}

  void init_he(Rng& rng) {
    const double s = std::sqrt(2.0 / static_cast<double>(in));
    for (auto& v : w) v = static_cast<real_t>(s * rng.normal());
    for (auto& v : b) v = real_t(0);
  }
  void zero_grad() {
    std::fill(gw.begin(), gw.end(), real_t(0));
    std::fill(gb.begin(), gb.end(), real_t(0));
  }
  void collect(std::vector<ParamView>& outp) {
    out_check();
    outp.push_back({name + ".weight", {out, in}, w.data(), gw.data(),
                    ParamKind::linear_weight});
    outp.push_back(
        {name + ".bias", {out}, b.data(), gb.data(), ParamKind::bias});
  }

 private:
  void out_check() const {
    check(static_cast<int64_t>(w.size()) == in * out,
          "LinearLayer: inconsistent dims");
  }
};

}  // namespace anodev2
