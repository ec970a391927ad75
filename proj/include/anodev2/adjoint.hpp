#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace anodev2 {

// Desk-scale coupled system for gradient cross-checks:
//   dz/dt = f(z, theta(t)),  dw/dt = q(w, p),  theta(t) = w(t),
// integrated over [0,1], objective J(z(1)) + R(w0, p). Dimensions stay
// tiny (<= 8); everything is dense row-major and double precision.
struct SmallSystem {
  using Vec = std::vector<double>;
  using Fn2 = std::function<Vec(const Vec&, const Vec&)>;

  int64_t nz = 1, nw = 1, np = 1;
  Vec z0;

  Fn2 f;      // f(z, w) -> nz
  Fn2 q;      // q(w, p) -> nw
  Fn2 df_dz;  // (z, w) -> nz x nz
  Fn2 df_dw;  // (z, w) -> nz x nw
  Fn2 dq_dw;  // (w, p) -> nw x nw
  Fn2 dq_dp;  // (w, p) -> nw x np

  std::function<double(const Vec&)> loss;  // J(z1)
  std::function<Vec(const Vec&)> dloss;    // dJ/dz1 -> nz

  // Regularizer R(w0, p); null members mean R = 0.
  std::function<double(const Vec&, const Vec&)> reg;
  Fn2 dreg_dw0;  // (w0, p) -> nw
  Fn2 dreg_dp;   // (w0, p) -> np
};

// Continuous KKT adjoint solve on a uniform grid with N Euler steps.
// Gradients are of the objective J + R (ascent direction).
struct KktResult {
  std::vector<double> g_w0, g_p;
  double objective = 0;
  std::vector<double> z1;
  // Node samples (N+1 rows) for the adjoint trajectories.
  std::vector<std::vector<double>> alpha, beta, gamma;
};

KktResult solve_kkt(const SmallSystem& sys, const std::vector<double>& w0,
                    const std::vector<double>& p, int64_t grid_n);

// Central differences per coordinate. params is copied and restored.
std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& loss,
    std::vector<double> params, double eps = 1e-5);

// Per-coordinate relative error with a safe denominator.
double rel_diff(double a, double b);

struct GradComparison {
  struct Row {
    int64_t index;
    double dto, kkt, fd;
    double relerr_dto_fd, relerr_kkt_fd;
  };
  std::vector<Row> rows;
  double max_relerr_dto_fd = 0;
  double max_relerr_kkt_fd = 0;
  double max_relerr_dto_kkt = 0;
  std::string to_csv() const;
};

GradComparison compare_gradients(const std::vector<double>& dto,
                                 const std::vector<double>& kkt,
                                 const std::vector<double>& fd);

// The closed-form benchmark: f = theta*z, q = rho*w, J = z(1), R = 0.
SmallSystem make_scalar_exp_system(double z0);

struct ScalarClosedForm {
  double z1, g_w0, g_rho;
};
ScalarClosedForm scalar_closed_form(double z0, double w0, double rho);

// The same scalar system pushed through the production DTO path: the
// weight is a 1x1x1x1 kernel evolved by the reaction term, the state
// takes n forward-Euler steps, and the backward pass is the block's.
struct ScalarDtoResult {
  double z1, g_w0, g_rho;
};
ScalarDtoResult scalar_dto_gradients(double z0, double w0, double rho,
                                     int64_t n);

}  // namespace anodev2
