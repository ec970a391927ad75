// Acceptance gate: one line per criterion, exit code = number of failures.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "anodev2/adjoint.hpp"
#include "anodev2/data.hpp"
#include "anodev2/layers.hpp"
#include "anodev2/models.hpp"
#include "anodev2/ode_block.hpp"
#include "anodev2/spectral.hpp"
#include "anodev2/tensor.hpp"
#include "anodev2/trainer.hpp"

using namespace anodev2;

namespace {

int failures = 0;

void report(int num, const std::string& title, bool ok,
            const std::string& detail) {
  std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", num,
              title.c_str(), detail.empty() ? "" : "; ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

double vec_max_diff(const std::vector<real_t>& a, const std::vector<real_t>& b) {
  double m = a.size() == b.size() ? 0.0 : 1.0;
  for (size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) -
                             static_cast<double>(b[i])));
  return m;
}

Tensor4 normal_tensor(int64_t n, int64_t c, int64_t h, int64_t w,
                      uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor4 t(n, c, h, w);
  for (auto& v : t.v) v = static_cast<real_t>(scale * rng.normal());
  return t;
}

// ---------------------------------------------------------------- criterion 1

void criterion_params() {
  struct Target {
    Architecture arch;
    const char* name;
    int64_t total;
  };
  const Target targets[] = {{Architecture::alexnet, "alexnet", 1756682},
                            {Architecture::resnet4, "resnet4", 7706},
                            {Architecture::resnet10, "resnet10", 44186}};
  bool ok = true;
  std::string detail;
  for (const Target& t : targets) {
    ModelSpec spec;
    spec.arch = t.arch;
    spec.variant = Variant::baseline;
    Model base = build_model(spec, 1);
    const int64_t total = count_parameters(base).total;
    if (std::abs(total - t.total) > 10) ok = false;
    detail += std::string(t.name) + "=" + std::to_string(total);

    for (const Variant variant : {Variant::anodev2_c1, Variant::anodev2_c2}) {
      ModelSpec vs = spec;
      vs.variant = variant;
      Model vm = build_model(vs, 1);
      const double overhead =
          static_cast<double>(count_parameters(vm).total - total) /
          static_cast<double>(total);
      const double bound = variant == Variant::anodev2_c1 ? 0.067 : 0.036;
      if (!(overhead >= 0.0 && overhead <= bound)) ok = false;
      detail += (variant == Variant::anodev2_c1 ? " c1+" : " c2+") +
                fmt(overhead * 100.0) + "%";
    }
    detail += "  ";
  }
  report(1, "parameter-count reproduction", ok, detail);
}

// ---------------------------------------------------------------- criterion 2

void criterion_baseline_equivalence() {
  ModelSpec base_spec;
  base_spec.arch = Architecture::resnet4;
  base_spec.variant = Variant::baseline;
  ModelSpec ode_spec = base_spec;
  ode_spec.variant = Variant::anodev2_c1;
  ode_spec.override_n_z = 1;

  Model base = build_model(base_spec, 42);
  Model ode = build_model(ode_spec, 42);
  freeze_ode_blocks(ode);

  const LabeledBatch b = synthetic_blobs(4, 7);
  base.zero_grad();
  ode.zero_grad();
  ModelTape tb, to;
  const Tensor4 lb = model_forward(base, b.images, true, true,
                                   TapeMode::checkpoint, tb);
  const Tensor4 lo = model_forward(ode, b.images, true, true,
                                   TapeMode::checkpoint, to);
  const LossAndGrad gb = softmax_cross_entropy(lb, b.labels);
  const LossAndGrad go = softmax_cross_entropy(lo, b.labels);
  const Tensor4 gxb = model_backward(base, tb, gb.grad);
  const Tensor4 gxo = model_backward(ode, to, go.grad);

  double m = std::abs(static_cast<double>(gb.loss) -
                      static_cast<double>(go.loss));
  m = std::max(m, max_abs_diff(lb, lo));
  m = std::max(m, max_abs_diff(gxb, gxo));
  m = std::max(m, max_abs_diff(base.conv1.gw, ode.conv1.gw));
  m = std::max(m, vec_max_diff(base.bn1.gg, ode.bn1.gg));
  m = std::max(m, vec_max_diff(base.bn1.gb, ode.bn1.gb));
  const auto& bb = base.blocks[0].base;
  const auto& ob = ode.blocks[0].ode;
  m = std::max(m, max_abs_diff(bb.conv_a.gw, ob.conv_a.gw));
  m = std::max(m, max_abs_diff(bb.conv_b.gw, ob.conv_b.gw));
  m = std::max(m, vec_max_diff(bb.bn_a.gg, ob.bn_a[0].gg));
  m = std::max(m, vec_max_diff(bb.bn_a.gb, ob.bn_a[0].gb));
  m = std::max(m, vec_max_diff(bb.bn_b.gg, ob.bn_b[0].gg));
  m = std::max(m, vec_max_diff(bb.bn_b.gb, ob.bn_b[0].gb));
  m = std::max(m, vec_max_diff(base.fc1.gw, ode.fc1.gw));
  m = std::max(m, vec_max_diff(base.fc1.gb, ode.fc1.gb));

  report(2, "baseline equivalence at n_z=1 with frozen weights", m <= 1e-12,
         "max loss/grad diff " + fmt(m) + " (tol 1e-12)");
}

// ---------------------------------------------------------------- criterion 3

double full_fd_max_rel(Variant variant, int64_t override_n_z) {
  ModelSpec spec;
  spec.arch = Architecture::resnet4;
  spec.variant = variant;
  spec.stem_channels = 4;
  spec.input_hw = 8;
  spec.override_n_z = override_n_z;
  Model m = build_model(spec, 13);
  for (auto& slot : m.blocks) {
    if (!slot.is_ode) continue;
    slot.ode.rda_a = {0.3, 0.1, -0.2, 0.05};
    slot.ode.rda_b = {0.1, -0.05, 0.08, -0.1};
  }
  const Tensor4 x = normal_tensor(2, 3, 8, 8, 17);
  const std::vector<int> labels = {1, 8};
  const auto loss = [&]() {
    ModelTape tape;
    const Tensor4 logits =
        model_forward(m, x, true, false, TapeMode::checkpoint, tape);
    return static_cast<double>(softmax_cross_entropy(logits, labels).loss);
  };

  m.zero_grad();
  {
    ModelTape tape;
    const Tensor4 logits =
        model_forward(m, x, true, false, TapeMode::checkpoint, tape);
    model_backward(m, tape, softmax_cross_entropy(logits, labels).grad);
  }

  const double eps = 1e-6;
  double max_rel = 0;
  for (auto& v : m.params()) {
    for (int64_t e = 0; e < v.count(); ++e) {
      const double analytic = static_cast<double>(v.grad[e]);
      const real_t saved = v.data[e];
      v.data[e] = static_cast<real_t>(saved + eps);
      const double fp = loss();
      v.data[e] = static_cast<real_t>(saved - eps);
      const double fm = loss();
      v.data[e] = saved;
      const double fd = (fp - fm) / (2.0 * eps);
      max_rel = std::max(max_rel,
                         std::abs(analytic - fd) /
                             std::max({std::abs(analytic), std::abs(fd), 1e-3}));
    }
  }
  return max_rel;
}

void criterion_gradients() {
  const double c1 = full_fd_max_rel(Variant::anodev2_c1, 3);
  const double c2 = full_fd_max_rel(Variant::anodev2_c2, 0);
  report(3, "full-model DTO gradients vs finite differences",
         c1 <= 1e-5 && c2 <= 1e-5,
         "config1 max rel " + fmt(c1) + ", config2 " + fmt(c2) +
             " (tol 1e-5, every coordinate)");
}

// ---------------------------------------------------------------- criterion 4

void criterion_kkt() {
  const double rho = 0.6931471805599453;  // ln 2
  const ScalarClosedForm closed = scalar_closed_form(1.0, 1.0, rho);
  bool ok = true;
  std::string detail;

  // DTO at n=512 differentiates its own discretization exactly.
  const ScalarDtoResult dto512 = scalar_dto_gradients(1.0, 1.0, rho, 512);
  const std::vector<double> fd512 = finite_difference_gradient(
      [&](const std::vector<double>& q) {
        return scalar_dto_gradients(1.0, q[0], q[1], 512).z1;
      },
      {1.0, rho}, 1e-6);
  const double dto_fd = std::max(rel_diff(dto512.g_w0, fd512[0]),
                                 rel_diff(dto512.g_rho, fd512[1]));
  ok = ok && dto_fd <= 1e-3;
  detail += "dto512-vs-fd " + fmt(dto_fd);

  // The continuous-adjoint oracle at n=4096 against the closed form.
  SmallSystem sys = make_scalar_exp_system(1.0);
  const KktResult kkt4096 = solve_kkt(sys, {1.0}, {rho}, 4096);
  const double kkt_closed = std::max(rel_diff(kkt4096.g_w0[0], closed.g_w0),
                                     rel_diff(kkt4096.g_p[0], closed.g_rho));
  ok = ok && kkt_closed <= 1e-3;
  detail += ", kkt4096-vs-closed " + fmt(kkt_closed);

  // Method agreement on a shared grid (the mixed-grid gap below is pure
  // discretization error and is reported for transparency).
  const ScalarDtoResult dto8k = scalar_dto_gradients(1.0, 1.0, rho, 8192);
  const KktResult kkt8k = solve_kkt(sys, {1.0}, {rho}, 8192);
  const double matched = std::max(rel_diff(dto8k.g_w0, kkt8k.g_w0[0]),
                                  rel_diff(dto8k.g_rho, kkt8k.g_p[0]));
  ok = ok && matched <= 1e-3;
  detail += ", dto-vs-kkt@8192 " + fmt(matched);

  // First-order convergence of both methods toward the closed form.
  const auto dto_err = [&](int64_t n) {
    const ScalarDtoResult r = scalar_dto_gradients(1.0, 1.0, rho, n);
    return std::max(rel_diff(r.g_w0, closed.g_w0),
                    rel_diff(r.g_rho, closed.g_rho));
  };
  const auto kkt_err = [&](int64_t n) {
    const KktResult r = solve_kkt(sys, {1.0}, {rho}, n);
    return std::max(rel_diff(r.g_w0[0], closed.g_w0),
                    rel_diff(r.g_p[0], closed.g_rho));
  };
  bool first_order = true;
  double prev = dto_err(512);
  for (const int64_t n : {2048, 8192}) {
    const double cur = dto_err(n);
    const double ratio = prev / cur;
    first_order = first_order && ratio > 2.8 && ratio < 5.5;
    prev = cur;
  }
  prev = kkt_err(64);
  for (const int64_t n : {256, 1024, 4096}) {
    const double cur = kkt_err(n);
    const double ratio = prev / cur;
    first_order = first_order && ratio > 2.5 && ratio < 6.0;
    prev = cur;
  }
  ok = ok && first_order;
  detail += first_order ? ", first-order convergence holds"
                        : ", first-order convergence BROKEN";

  const double raw_gap = std::max(rel_diff(dto512.g_w0, kkt4096.g_w0[0]),
                                  rel_diff(dto512.g_rho, kkt4096.g_p[0]));
  std::printf(
      "  note: mixed-grid gap dto@512 vs kkt@4096 = %s (dominated by the "
      "O(1/512) state-discretization error; not a pass/fail input)\n",
      fmt(raw_gap).c_str());

  report(4, "KKT oracle agreement on the scalar system", ok, detail);
}

// ---------------------------------------------------------------- criterion 5

void criterion_spectral() {
  bool ok = true;
  std::string detail;

  {  // semigroup on an odd grid with all terms active
    const Tensor4 w = normal_tensor(1, 2, 9, 9, 5);
    const RDACoefficients p{0.01, 0.3, -0.2, 0.15};
    const Tensor4 one = rda_step(w, p, 0.7, Act::identity);
    const Tensor4 two = rda_step(rda_step(w, p, 0.3, Act::identity), p, 0.4,
                                 Act::identity);
    const double m = max_abs_diff(one, two);
    ok = ok && m <= 1e-12;
    detail += "semigroup " + fmt(m);
  }
  {  // realness guard stays quiet on random odd-grid fields
    bool real_ok = true;
    for (uint64_t seed = 0; seed < 4 && real_ok; ++seed) {
      const Tensor4 w = normal_tensor(1, 1, 7, 7, 100 + seed);
      try {
        const Tensor4 out =
            rda_step(w, {0.02, 0.7, -0.4, 0.2}, 0.5, Act::identity);
        real_ok = all_finite(out);
      } catch (const std::exception&) {
        real_ok = false;
      }
    }
    ok = ok && real_ok;
    detail += std::string(", realness ") + (real_ok ? "<1e-9" : "BROKEN");
  }
  {  // mass conservation at rho = 0
    const Tensor4 w = normal_tensor(2, 2, 7, 7, 11);
    const Tensor4 out = rda_step(w, {0.05, 0.4, 0.2, 0}, 1.3, Act::identity);
    double m = 0;
    for (int64_t co = 0; co < 2; ++co)
      for (int64_t ci = 0; ci < 2; ++ci) {
        double s0 = 0, s1 = 0;
        for (int64_t y = 0; y < 7; ++y)
          for (int64_t x = 0; x < 7; ++x) {
            s0 += w.at(co, ci, y, x);
            s1 += out.at(co, ci, y, x);
          }
        m = std::max(m, std::abs(s1 - s0));
      }
    ok = ok && m <= 1e-12;
    detail += ", mass " + fmt(m);
  }
  {  // gaussian variance growth 2 d t
    const int64_t k = 64;
    const double sigma0 = 0.04, d = 0.001, t = 1.0;
    Tensor4 g(1, 1, k, k);
    for (int64_t y = 0; y < k; ++y)
      for (int64_t x = 0; x < k; ++x) {
        const double X = static_cast<double>(x) / k - 0.5;
        const double Y = static_cast<double>(y) / k - 0.5;
        g.at(0, 0, y, x) = static_cast<real_t>(
            std::exp(-(X * X + Y * Y) / (2.0 * sigma0 * sigma0)));
      }
    const Tensor4 out = rda_step(g, {d, 0, 0, 0}, t, Act::identity);
    double sum = 0, mean_x = 0;
    for (int64_t y = 0; y < k; ++y)
      for (int64_t x = 0; x < k; ++x) {
        sum += out.at(0, 0, y, x);
        mean_x += out.at(0, 0, y, x) * (static_cast<double>(x) / k);
      }
    mean_x /= sum;
    double var_x = 0;
    for (int64_t y = 0; y < k; ++y)
      for (int64_t x = 0; x < k; ++x) {
        const double dx = static_cast<double>(x) / k - mean_x;
        var_x += out.at(0, 0, y, x) * dx * dx;
      }
    var_x /= sum;
    const double target = sigma0 * sigma0 + 2.0 * d * t;
    const double rel = std::abs(var_x - target) / target;
    ok = ok && rel <= 0.01;
    detail += ", variance " + fmt(rel);
  }
  {  // integer-cell advection is an exact cyclic shift
    const int64_t k = 16;
    const Tensor4 w = normal_tensor(1, 1, k, k, 21);
    const Tensor4 out = rda_step(w, {0, 1.0, 0, 0}, 1.0 / k, Act::identity);
    double m = 0;
    for (int64_t y = 0; y < k; ++y)
      for (int64_t x = 0; x < k; ++x)
        m = std::max(m, std::abs(static_cast<double>(out.at(0, 0, y, x)) -
                                 static_cast<double>(w.at(0, 0, y, (x + 1) % k))));
    ok = ok && m <= 1e-10;
    detail += ", advection-shift " + fmt(m);
  }
  {  // reaction amplitude
    const Tensor4 w = normal_tensor(1, 1, 5, 5, 31);
    const double rho = 0.3, dt = 1.3;
    const Tensor4 out = rda_step(w, {0, 0, 0, rho}, dt, Act::identity);
    double m = 0;
    for (size_t e = 0; e < w.v.size(); ++e)
      m = std::max(m, std::abs(static_cast<double>(out.v[e]) -
                               std::exp(rho * dt) *
                                   static_cast<double>(w.v[e])));
    ok = ok && m <= 1e-10;
    detail += ", reaction " + fmt(m);
  }
  {  // independent explicit finite-difference oracle
    const int64_t k = 16;
    Tensor4 w(1, 1, k, k);
    const double pi = 3.14159265358979323846;
    for (int64_t y = 0; y < k; ++y)
      for (int64_t x = 0; x < k; ++x)
        w.at(0, 0, y, x) = static_cast<real_t>(
            std::sin(2 * pi * x / k) * std::cos(2 * pi * y / k) + 0.3);
    const RDACoefficients p{1e-6, 2e-6, -1e-6, 0.1};
    const Tensor4 sp = rda_step(w, p, 1.0, Act::identity);
    const Tensor4 ex = rda_explicit_oracle(w, p, 1.0, 10000);
    const double m = max_abs_diff(sp, ex);
    ok = ok && m <= 1e-6;
    detail += ", explicit-oracle " + fmt(m);
  }

  report(5, "spectral-solver physics", ok, detail);
}

// ---------------------------------------------------------------- criterion 6

void criterion_checkpointing() {
  bool ok = true;
  std::string detail;

  Rng rng(3);
  OdeBlock proto = make_resnet_ode_block("blk", 4, config1_schedule(5), rng);
  proto.rda_a = {0.2, 0.1, -0.1, 0.05};
  proto.rda_b = {0.05, -0.02, 0.04, -0.06};
  const Tensor4 z0 = normal_tensor(2, 4, 8, 8, 44);
  const Tensor4 gz1 = normal_tensor(2, 4, 8, 8, 45);

  OdeBlock full_blk = proto;
  OdeBlock ckpt_blk = proto;
  BlockTape full_tape, ckpt_tape;
  const Tensor4 z1f =
      ode_block_forward(full_blk, z0, true, true, TapeMode::full, full_tape);
  const Tensor4 z1c = ode_block_forward(ckpt_blk, z0, true, true,
                                        TapeMode::checkpoint, ckpt_tape);
  const Tensor4 gf = ode_block_backward(full_blk, full_tape, gz1);
  const Tensor4 gc = ode_block_backward(ckpt_blk, ckpt_tape, gz1);

  double m = max_abs_diff(z1f, z1c);
  m = std::max(m, max_abs_diff(gf, gc));
  m = std::max(m, max_abs_diff(full_blk.conv_a.gw, ckpt_blk.conv_a.gw));
  m = std::max(m, max_abs_diff(full_blk.conv_b.gw, ckpt_blk.conv_b.gw));
  for (int i = 0; i < 4; ++i) {
    m = std::max(m, std::abs(static_cast<double>(full_blk.grda_a[i]) -
                             static_cast<double>(ckpt_blk.grda_a[i])));
    m = std::max(m, std::abs(static_cast<double>(full_blk.grda_b[i]) -
                             static_cast<double>(ckpt_blk.grda_b[i])));
  }
  for (size_t s = 0; s < full_blk.bn_a.size(); ++s) {
    m = std::max(m, vec_max_diff(full_blk.bn_a[s].gg, ckpt_blk.bn_a[s].gg));
    m = std::max(m, vec_max_diff(full_blk.bn_b[s].gb, ckpt_blk.bn_b[s].gb));
  }
  ok = ok && m == 0.0;
  detail += "checkpoint-vs-full max grad diff " + fmt(m) + " (bitwise)";

  // Stored activations do not grow with n_z in checkpoint mode.
  std::vector<int64_t> counts;
  for (const int64_t n_z : {3, 9}) {
    Rng r2(3);
    OdeBlock blk = make_resnet_ode_block("blk", 4, config1_schedule(n_z), r2);
    BlockTape tape;
    ode_block_forward(blk, z0, true, true, TapeMode::checkpoint, tape);
    counts.push_back(tape.activation_tensors_stored);
  }
  ok = ok && counts[0] == counts[1] && counts[0] == 1;
  detail += ", stored activations at n_z=3/9: " + std::to_string(counts[0]) +
            "/" + std::to_string(counts[1]) +
            " (full tape at n_z=5 stores " +
            std::to_string(full_tape.activation_tensors_stored) + ")";

  report(6, "checkpointing contract", ok, detail);
}

// ------------------------------------------------- criterion 7 (desk proxy)

void criterion_trainability() {
  const LabeledBatch all = synthetic_blobs(800, 13);
  const LabeledBatch tr = subset(all, 0, 600);
  const LabeledBatch te = subset(all, 600, 200);

  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 128;
  cfg.lr0 = 0.02;
  cfg.seed = 4;
  cfg.augment = false;

  const auto run = [&](Variant variant) {
    ModelSpec spec;
    spec.arch = Architecture::resnet4;
    spec.variant = variant;
    spec.stem_channels = 8;
    Model m = build_model(spec, 31);
    return train(m, tr, te, cfg);
  };

  const TrainResult base1 = run(Variant::baseline);
  const TrainResult base2 = run(Variant::baseline);
  const TrainResult ode = run(Variant::anodev2_c1);

  const auto monotone = [](const TrainResult& r) {
    for (size_t i = 0; i + 1 < r.history.size(); ++i)
      if (!(r.history[i + 1].train_loss < r.history[i].train_loss))
        return false;
    return true;
  };

  const bool ok = base1.history_csv() == base2.history_csv() &&
                  monotone(base1) && monotone(ode) &&
                  base1.history.back().test_acc >= 0.9 &&
                  ode.history.back().test_acc >= 0.9;
  report(7,
         "desk-scale trainability proxy (synthetic data; the CIFAR-10 run "
         "lives in the acceptance_cifar binary)",
         ok,
         "baseline acc " + fmt(base1.history.back().test_acc) +
             ", anodev2_c1 acc " + fmt(ode.history.back().test_acc) +
             ", histories deterministic and losses monotone");
}

}  // namespace

int main() {
  std::printf("ANODEV2 acceptance run\n");
  criterion_params();
  criterion_baseline_equivalence();
  criterion_gradients();
  criterion_kkt();
  criterion_spectral();
  criterion_checkpointing();
  criterion_trainability();
  std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
