#include "anodev2/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "anodev2/adjoint.hpp"
#include "anodev2/data.hpp"
#include "anodev2/layers.hpp"
#include "anodev2/models.hpp"
#include "anodev2/spectral.hpp"
#include "anodev2/trainer.hpp"

namespace anodev2::cli {
namespace {

namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  check(out.good(), "cannot open " + path + " for writing");
  out << text;
  check(out.good(), "short write to " + path);
}

Act parse_sigma(const std::string& s) {
  if (s == "identity") return Act::identity;
  if (s == "tanh") return Act::tanh_;
  fail("unknown sigma '" + s + "' (expected identity or tanh)");
}

// Amplitude-one bump centered on the unit square, or a whitespace-separated
// field file with grid*grid values.
Tensor4 build_init_field(const std::string& init, int64_t grid) {
  Tensor4 f(1, 1, grid, grid);
  const std::string prefix = "gaussian:";
  if (init.rfind(prefix, 0) == 0) {
    double s0 = 0;
    try {
      s0 = std::stod(init.substr(prefix.size()));
    } catch (const std::exception&) {
      fail("bad gaussian width in --init '" + init + "'");
    }
    check(s0 > 0, "gaussian width must be positive");
    for (int64_t y = 0; y < grid; ++y)
      for (int64_t x = 0; x < grid; ++x) {
        const double X = static_cast<double>(x) / static_cast<double>(grid) - 0.5;
        const double Y = static_cast<double>(y) / static_cast<double>(grid) - 0.5;
        f.at(0, 0, y, x) = static_cast<real_t>(
            std::exp(-(X * X + Y * Y) / (2.0 * s0 * s0)));
      }
    return f;
  }
  std::ifstream in(init);
  check(in.good(), "cannot open init field file " + init);
  for (int64_t e = 0; e < grid * grid; ++e) {
    double v;
    check(static_cast<bool>(in >> v),
          "init field file " + init + " ended before " +
              std::to_string(grid * grid) + " values");
    f.v[static_cast<size_t>(e)] = static_cast<real_t>(v);
  }
  return f;
}

struct FieldMoments {
  double sum = 0, mean_x = 0, mean_y = 0, variance = 0;
};

// Intensity-weighted moments in unit-square coordinates; variance is the
// per-axis average, which grows by 2*d*dt per diffusion step.
FieldMoments field_moments(const Tensor4& f) {
  const int64_t k = f.h;
  FieldMoments m;
  for (int64_t y = 0; y < k; ++y)
    for (int64_t x = 0; x < k; ++x) {
      const double v = f.at(0, 0, y, x);
      m.sum += v;
      m.mean_x += v * static_cast<double>(x) / static_cast<double>(k);
      m.mean_y += v * static_cast<double>(y) / static_cast<double>(k);
    }
  m.mean_x /= m.sum;
  m.mean_y /= m.sum;
  double vx = 0, vy = 0;
  for (int64_t y = 0; y < k; ++y)
    for (int64_t x = 0; x < k; ++x) {
      const double v = f.at(0, 0, y, x);
      const double dx = static_cast<double>(x) / static_cast<double>(k) - m.mean_x;
      const double dy = static_cast<double>(y) / static_cast<double>(k) - m.mean_y;
      vx += v * dx * dx;
      vy += v * dy * dy;
    }
  m.variance = 0.5 * (vx + vy) / m.sum;
  return m;
}

struct FrameScale {
  double lo = 0, hi = 0;
};

FrameScale write_pgm(const Tensor4& f, const std::string& path) {
  const int64_t k = f.h;
  FrameScale s{f.v[0], f.v[0]};
  for (const real_t v : f.v) {
    s.lo = std::min(s.lo, static_cast<double>(v));
    s.hi = std::max(s.hi, static_cast<double>(v));
  }
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot open " + path + " for writing");
  out << "P5\n" << k << " " << k << "\n255\n";
  const double span = s.hi - s.lo;
  for (const real_t v : f.v) {
    const double u = span > 0 ? (static_cast<double>(v) - s.lo) / span : 0.0;
    out.put(static_cast<char>(std::lround(255.0 * u)));
  }
  check(out.good(), "short write to " + path);
  return s;
}

std::string frame_name(int64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%03lld.pgm",
                static_cast<long long>(i));
  return buf;
}

LabeledBatch load_train_split(const std::string& data, int64_t subset_n,
                              uint64_t seed) {
  LabeledBatch b = data == "synthetic"
                       ? synthetic_blobs(subset_n > 0 ? subset_n : 1000,
                                         seed ^ 0x5EEDull)
                       : load_cifar10_dir(data, true);
  if (data != "synthetic" && subset_n > 0 && subset_n < b.size())
    b = subset(b, 0, subset_n);
  return b;
}

LabeledBatch load_test_split(const std::string& data, int64_t subset_n,
                             uint64_t seed) {
  LabeledBatch b = data == "synthetic"
                       ? synthetic_blobs(subset_n > 0 ? subset_n : 200,
                                         seed ^ 0x7E57ull)
                       : load_cifar10_dir(data, false);
  if (data != "synthetic" && subset_n > 0 && subset_n < b.size())
    b = subset(b, 0, subset_n);
  return b;
}

ModelSpec parse_spec(const std::string& arch, const std::string& variant) {
  ModelSpec spec;
  check(parse_architecture(arch, spec.arch), "unknown --arch '" + arch + "'");
  check(parse_variant(variant, spec.variant),
        "unknown --variant '" + variant + "'");
  return spec;
}

int64_t baseline_target(Architecture arch) {
  switch (arch) {
    case Architecture::alexnet:
      return 1756682;
    case Architecture::resnet4:
      return 7706;
    case Architecture::resnet10:
      return 44186;
  }
  fail("unreachable architecture");
}

}  // namespace

int cmd_simulate(const SimulateArgs& a) {
  check(a.grid >= 2, "--grid must be at least 2");
  check(a.steps >= 0, "--steps must be non-negative");
  check(a.dt > 0, "--dt must be positive");
  check(!a.out_dir.empty(), "--out directory is required");
  const Act sigma = parse_sigma(a.sigma);
  const RDACoefficients p{static_cast<real_t>(a.d), static_cast<real_t>(a.vx),
                          static_cast<real_t>(a.vy), static_cast<real_t>(a.rho)};

  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  check(!ec, "cannot create output directory " + a.out_dir);

  Tensor4 field = build_init_field(a.init, a.grid);
  std::string frames_csv = "frame,path,min,max\n";
  std::string moments_csv = "step,sum,mean_x,mean_y,variance\n";

  for (int64_t step = 0; step <= a.steps; ++step) {
    if (step > 0) field = rda_step(field, p, a.dt, sigma);
    const std::string name = frame_name(step);
    const FrameScale s = write_pgm(field, (fs::path(a.out_dir) / name).string());
    frames_csv += std::to_string(step) + "," + name + "," + fmt_double(s.lo) +
                  "," + fmt_double(s.hi) + "\n";
    const FieldMoments m = field_moments(field);
    moments_csv += std::to_string(step) + "," + fmt_double(m.sum) + "," +
                   fmt_double(m.mean_x) + "," + fmt_double(m.mean_y) + "," +
                   fmt_double(m.variance) + "\n";
  }
  write_text((fs::path(a.out_dir) / "frames.csv").string(), frames_csv);
  write_text((fs::path(a.out_dir) / "moments.csv").string(), moments_csv);
  std::cout << "wrote " << (a.steps + 1) << " frames to " << a.out_dir << "\n";
  return 0;
}

namespace {

int grad_check_scalar(const GradCheckArgs& a) {
  const double z0 = 1.0, w0 = 1.0;
  const double rho = 0.6931471805599453;  // ln 2
  const int64_t nt = a.nt > 0 ? a.nt : 512;
  const int64_t ntheta = a.ntheta > 0 ? a.ntheta : nt;

  const ScalarDtoResult dto = scalar_dto_gradients(z0, w0, rho, nt);
  SmallSystem sys = make_scalar_exp_system(z0);
  const KktResult kkt = solve_kkt(sys, {w0}, {rho}, ntheta);
  std::vector<double> params = {w0, rho};
  const std::vector<double> fd = finite_difference_gradient(
      [&](const std::vector<double>& q) {
        return scalar_dto_gradients(z0, q[0], q[1], nt).z1;
      },
      params, a.eps);

  const GradComparison cmp = compare_gradients(
      {dto.g_w0, dto.g_rho}, {kkt.g_w0.at(0), kkt.g_p.at(0)}, fd);
  const std::string csv = cmp.to_csv();
  std::cout << csv;
  if (!a.out_csv.empty()) write_text(a.out_csv, csv);

  std::cerr << "scalar-system nt=" << nt << " ntheta=" << ntheta
            << " max_relerr_dto_fd=" << fmt_double(cmp.max_relerr_dto_fd)
            << " max_relerr_kkt_fd=" << fmt_double(cmp.max_relerr_kkt_fd)
            << " dto_vs_kkt=" << fmt_double(cmp.max_relerr_dto_kkt) << "\n";
  if (cmp.max_relerr_dto_fd > 1e-5) {
    std::cerr << "gradient check FAILED: dto vs fd "
              << fmt_double(cmp.max_relerr_dto_fd) << " > 1e-5\n";
    return 1;
  }
  return 0;
}

int grad_check_tiny(const GradCheckArgs& a) {
  check(a.config == 1 || a.config == 2, "--config must be 1 or 2");
  ModelSpec spec;
  spec.arch = Architecture::resnet4;
  spec.variant = a.config == 1 ? Variant::anodev2_c1 : Variant::anodev2_c2;
  spec.stem_channels = 4;
  spec.input_hw = 8;
  if (a.config == 1) spec.override_n_z = a.nt > 0 ? a.nt : 3;
  Model m = build_model(spec, 13);

  // Generic coefficients so every RDA gradient component is live.
  for (auto& slot : m.blocks) {
    if (!slot.is_ode) continue;
    slot.ode.rda_a = {0.3, 0.1, -0.2, 0.05};
    slot.ode.rda_b = {0.1, -0.05, 0.08, -0.1};
  }

  Rng rng(17);
  Tensor4 x(2, 3, 8, 8);
  for (auto& v : x.v) v = static_cast<real_t>(rng.normal());
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
    const LossAndGrad lg = softmax_cross_entropy(logits, labels);
    model_backward(m, tape, lg.grad);
  }

  auto views = m.params();
  int64_t total = 0;
  for (const auto& v : views) total += v.count();
  const int64_t stride = std::max<int64_t>(1, total / 96);

  // A lost perturbation (solver overflow at absurd eps) counts as a failed
  // finite difference, not a usage error.
  const auto probe = [&]() {
    try {
      return loss();
    } catch (const std::exception&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  std::string csv = "index,name,analytic,fd,rel_err\n";
  double max_rel = 0;
  bool all_ok = true;
  int64_t index = 0;
  for (auto& v : views) {
    for (int64_t e = 0; e < v.count(); ++e, ++index) {
      if (index % stride != 0) continue;
      const double analytic = static_cast<double>(v.grad[e]);
      const real_t saved = v.data[e];
      v.data[e] = static_cast<real_t>(saved + a.eps);
      const double fp = probe();
      v.data[e] = static_cast<real_t>(saved - a.eps);
      const double fm = probe();
      v.data[e] = saved;
      const double fd = (fp - fm) / (2.0 * a.eps);
      const double rel =
          std::abs(analytic - fd) /
          std::max({std::abs(analytic), std::abs(fd), 1e-3});
      if (!(rel <= 1e-5)) all_ok = false;
      if (std::isfinite(rel)) max_rel = std::max(max_rel, rel);
      csv += std::to_string(index) + "," + v.name + "[" + std::to_string(e) +
             "]," + fmt_double(analytic) + "," + fmt_double(fd) + "," +
             fmt_double(rel) + "\n";
    }
  }
  std::cout << csv;
  if (!a.out_csv.empty()) write_text(a.out_csv, csv);

  std::cerr << "tiny-resnet4 config=" << a.config
            << " sampled_every=" << stride << " of " << total
            << " params, max_rel_err=" << fmt_double(max_rel) << "\n";
  if (!all_ok) {
    std::cerr << "gradient check FAILED: max rel err " << fmt_double(max_rel)
              << " > 1e-5 (eps=" << fmt_double(a.eps) << ")\n";
    return 1;
  }
  return 0;
}

}  // namespace

int cmd_grad_check(const GradCheckArgs& a) {
  if (a.model == "scalar-system") return grad_check_scalar(a);
  if (a.model == "tiny-resnet4") return grad_check_tiny(a);
  fail("unknown --model '" + a.model +
       "' (expected tiny-resnet4 or scalar-system)");
}

int cmd_train(const TrainArgs& a) {
  check(!a.out_dir.empty(), "--out directory is required");
  const ModelSpec spec = parse_spec(a.arch, a.variant);
  const LabeledBatch tr = load_train_split(a.data, a.subset_n, a.seed);
  const LabeledBatch te = load_test_split(a.data, a.test_subset_n, a.seed);

  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  check(!ec, "cannot create output directory " + a.out_dir);

  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.lr0 = a.lr0;
  cfg.decay_epochs = a.decay_epochs;
  cfg.seed = a.seed;
  cfg.augment = !a.no_augment;
  cfg.checkpoint_path = (fs::path(a.out_dir) / "best.anv2").string();

  Model m = build_model(spec, a.seed);
  const TrainResult r = train(m, tr, te, cfg);
  write_text((fs::path(a.out_dir) / "history.csv").string(), r.history_csv());

  const double final_acc = r.history.empty() ? 0.0 : r.history.back().test_acc;
  std::cout << "final_test_acc," << fmt_double(final_acc) << "\n";
  std::cout << "best_test_acc," << fmt_double(r.best_acc) << "\n";
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  const ModelSpec spec = parse_spec(a.arch, a.variant);
  Model m = build_model(spec, a.seed);
  if (!a.checkpoint.empty()) load_checkpoint(m, a.checkpoint);
  const LabeledBatch te = load_test_split(a.data, a.subset_n, a.seed);
  std::cout << "accuracy," << fmt_double(evaluate(m, te)) << "\n";
  return 0;
}

int cmd_count_params(const CountParamsArgs& a) {
  const ModelSpec spec = parse_spec(a.arch, a.variant);
  Model m = build_model(spec, 1);
  const ParamReport report = count_parameters(m);
  const std::string csv = report.to_csv();
  std::cout << csv;
  if (!a.out_csv.empty()) write_text(a.out_csv, csv);

  const int64_t target = baseline_target(spec.arch);
  if (spec.variant == Variant::baseline) {
    std::cerr << "total=" << report.total << " target=" << target << "\n";
    if (std::abs(report.total - target) > 10) {
      std::cerr << "parameter count check FAILED\n";
      return 1;
    }
    return 0;
  }

  ModelSpec base_spec = spec;
  base_spec.variant = Variant::baseline;
  Model base = build_model(base_spec, 1);
  const int64_t base_total = count_parameters(base).total;
  const double overhead =
      static_cast<double>(report.total - base_total) /
      static_cast<double>(base_total);
  const double bound = spec.variant == Variant::anodev2_c1 ? 0.067 : 0.036;
  std::cerr << "total=" << report.total << " baseline=" << base_total
            << " overhead=" << fmt_double(overhead * 100.0) << "%\n";
  if (!(overhead >= 0.0 && overhead <= bound)) {
    std::cerr << "parameter overhead check FAILED\n";
    return 1;
  }
  return 0;
}

}  // namespace anodev2::cli
