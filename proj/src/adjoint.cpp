#include "anodev2/adjoint.hpp"

#include <cmath>
#include <sstream>

#include "anodev2/ode_block.hpp"
#include "anodev2/tensor.hpp"

namespace anodev2 {

namespace {

using Vec = std::vector<double>;

bool finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// y = A^T x for row-major A (rows x cols); y has cols entries.
Vec mat_t_vec(const Vec& a, int64_t rows, int64_t cols, const Vec& x) {
  Vec y(static_cast<size_t>(cols), 0.0);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      y[static_cast<size_t>(c)] +=
          a[static_cast<size_t>(r * cols + c)] * x[static_cast<size_t>(r)];
  return y;
}

void axpy(Vec& y, double s, const Vec& x) {
  for (size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

}  // namespace

KktResult solve_kkt(const SmallSystem& sys, const std::vector<double>& w0,
                    const std::vector<double>& p, int64_t grid_n) {
  check(grid_n >= 2, "solve_kkt: grid must have at least 2 steps");
  check(static_cast<int64_t>(sys.z0.size()) == sys.nz &&
            static_cast<int64_t>(w0.size()) == sys.nw &&
            static_cast<int64_t>(p.size()) == sys.np,
        "solve_kkt: state/parameter dimensions do not match the system");
  const int64_t n = grid_n;
  const double dt = 1.0 / static_cast<double>(n);
  const auto N = static_cast<size_t>(n);

  // Forward: weights first, then activations, both explicit Euler.
  std::vector<Vec> w(N + 1), z(N + 1);
  w[0] = w0;
  for (size_t i = 0; i < N; ++i) {
    w[i + 1] = w[i];
    axpy(w[i + 1], dt, sys.q(w[i], p));
    check(finite(w[i + 1]),
          "solve_kkt: non-finite weight state (grid too coarse or stiff)");
  }
  z[0] = sys.z0;
  for (size_t i = 0; i < N; ++i) {
    z[i + 1] = z[i];
    axpy(z[i + 1], dt, sys.f(z[i], w[i]));
    check(finite(z[i + 1]),
          "solve_kkt: non-finite activation state (grid too coarse or stiff)");
  }

  KktResult res;
  res.z1 = z[N];
  res.objective = sys.loss(z[N]);
  if (sys.reg) res.objective += sys.reg(w0, p);

  // alpha(1) = -dJ/dz1, marched backward with dalpha/dt = -(df/dz)^T alpha.
  res.alpha.assign(N + 1, Vec());
  res.alpha[N] = sys.dloss(z[N]);
  for (double& x : res.alpha[N]) x = -x;
  for (size_t i = N; i-- > 0;) {
    Vec a = res.alpha[i + 1];
    Vec jt = mat_t_vec(sys.df_dz(z[i], w[i]), sys.nz, sys.nz, res.alpha[i + 1]);
    axpy(a, dt, jt);
    check(finite(a), "solve_kkt: non-finite alpha (grid too coarse or stiff)");
    res.alpha[i] = std::move(a);
  }

  // gamma(t) = (df/dtheta)^T alpha(t), sampled on every node.
  res.gamma.assign(N + 1, Vec());
  for (size_t i = 0; i <= N; ++i)
    res.gamma[i] = mat_t_vec(sys.df_dw(z[i], w[i]), sys.nz, sys.nw,
                             res.alpha[i]);

  // beta(1) = 0, marched backward with dbeta/dt = -(dq/dw)^T beta - gamma.
  res.beta.assign(N + 1, Vec());
  res.beta[N].assign(static_cast<size_t>(sys.nw), 0.0);
  for (size_t i = N; i-- > 0;) {
    Vec b = res.beta[i + 1];
    Vec jt = mat_t_vec(sys.dq_dw(w[i], p), sys.nw, sys.nw, res.beta[i + 1]);
    axpy(b, dt, jt);
    axpy(b, dt, res.gamma[i + 1]);
    check(finite(b), "solve_kkt: non-finite beta (grid too coarse or stiff)");
    res.beta[i] = std::move(b);
  }

  // g_w0 = dR/dw0 - beta(0).
  res.g_w0.assign(static_cast<size_t>(sys.nw), 0.0);
  if (sys.dreg_dw0) res.g_w0 = sys.dreg_dw0(w0, p);
  axpy(res.g_w0, -1.0, res.beta[0]);

  // g_p = dR/dp - trapezoid of (dq/dp)^T beta over the grid.
  res.g_p.assign(static_cast<size_t>(sys.np), 0.0);
  if (sys.dreg_dp) res.g_p = sys.dreg_dp(w0, p);
  for (size_t i = 0; i <= N; ++i) {
    const double wgt = (i == 0 || i == N) ? 0.5 * dt : dt;
    Vec qp = mat_t_vec(sys.dq_dp(w[i], p), sys.nw, sys.np, res.beta[i]);
    axpy(res.g_p, -wgt, qp);
  }
  return res;
}

std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& loss,
    std::vector<double> params, double eps) {
  std::vector<double> g(params.size(), 0.0);
  for (size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + eps;
    const double lp = loss(params);
    params[i] = saved - eps;
    const double lm = loss(params);
    params[i] = saved;
    check(std::isfinite(lp) && std::isfinite(lm),
          "finite_difference_gradient: loss is not finite");
    g[i] = (lp - lm) / (2.0 * eps);
  }
  return g;
}

double rel_diff(double a, double b) {
  const double den = std::max({std::fabs(a), std::fabs(b), 1e-12});
  return std::fabs(a - b) / den;
}

GradComparison compare_gradients(const std::vector<double>& dto,
                                 const std::vector<double>& kkt,
                                 const std::vector<double>& fd) {
  check(dto.size() == kkt.size() && kkt.size() == fd.size(),
        "compare_gradients: vectors must have equal length");
  GradComparison cmp;
  for (size_t i = 0; i < dto.size(); ++i) {
    GradComparison::Row row;
    row.index = static_cast<int64_t>(i);
    row.dto = dto[i];
    row.kkt = kkt[i];
    row.fd = fd[i];
    row.relerr_dto_fd = rel_diff(dto[i], fd[i]);
    row.relerr_kkt_fd = rel_diff(kkt[i], fd[i]);
    cmp.max_relerr_dto_fd = std::max(cmp.max_relerr_dto_fd, row.relerr_dto_fd);
    cmp.max_relerr_kkt_fd = std::max(cmp.max_relerr_kkt_fd, row.relerr_kkt_fd);
    cmp.max_relerr_dto_kkt =
        std::max(cmp.max_relerr_dto_kkt, rel_diff(dto[i], kkt[i]));
    cmp.rows.push_back(row);
  }
  return cmp;
}

std::string GradComparison::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "index,dto,kkt,fd,relerr_dto_fd,relerr_kkt_fd\n";
  for (const Row& r : rows)
    os << r.index << ',' << r.dto << ',' << r.kkt << ',' << r.fd << ','
       << r.relerr_dto_fd << ',' << r.relerr_kkt_fd << '\n';
  return os.str();
}

SmallSystem make_scalar_exp_system(double z0) {
  SmallSystem s;
  s.nz = s.nw = s.np = 1;
  s.z0 = {z0};
  s.f = [](const Vec& z, const Vec& w) { return Vec{w[0] * z[0]}; };
  s.q = [](const Vec& w, const Vec& p) { return Vec{p[0] * w[0]}; };
  s.df_dz = [](const Vec&, const Vec& w) { return Vec{w[0]}; };
  s.df_dw = [](const Vec& z, const Vec&) { return Vec{z[0]}; };
  s.dq_dw = [](const Vec&, const Vec& p) { return Vec{p[0]}; };
  s.dq_dp = [](const Vec& w, const Vec&) { return Vec{w[0]}; };
  s.loss = [](const Vec& z1) { return z1[0]; };
  s.dloss = [](const Vec& z1) { return Vec(z1.size(), 1.0); };
  return s;
}

ScalarClosedForm scalar_closed_form(double z0, double w0, double rho) {
  const double er = std::exp(rho);
  const double a = (er - 1.0) / rho;                    // int_0^1 e^{rho t} dt
  const double z1 = z0 * std::exp(w0 * a);
  const double da = (rho * er - (er - 1.0)) / (rho * rho);
  return {z1, z1 * a, z1 * w0 * da};
}

ScalarDtoResult scalar_dto_gradients(double z0v, double w0, double rho,
                                     int64_t n) {
  OdeBlock blk = make_scalar_block(static_cast<real_t>(w0),
                                   static_cast<real_t>(rho), n);
  Tensor4 z0(1, 1, 1, 1);
  z0.v[0] = static_cast<real_t>(z0v);
  BlockTape tape;
  Tensor4 z1 = ode_block_forward(blk, z0, true, false, TapeMode::full, tape);
  blk.zero_grad();
  Tensor4 g1(1, 1, 1, 1);
  g1.v[0] = 1;
  ode_block_backward(blk, tape, g1);
  return {static_cast<double>(z1.v[0]),
          static_cast<double>(blk.conv_a.gw.v[0]),
          static_cast<double>(blk.grda_a[3])};
}

}  // namespace anodev2
