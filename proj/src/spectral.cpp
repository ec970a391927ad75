#include "anodev2/spectral.hpp"

#include <cmath>

namespace anodev2 {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kImagTol = 1e-9;

void check_square_field(const Tensor4& f, const char* who) {
  check(f.h == f.w && f.h >= 1,
        std::string(who) + ": field slices must be square, got " +
            f.shape_str());
}

std::vector<double> slice_of(const Tensor4& f, int64_t co, int64_t ci) {
  const int64_t k = f.h;
  std::vector<double> g(static_cast<size_t>(k * k));
  const real_t* p = &f.v[static_cast<size_t>(f.idx(co, ci, 0, 0))];
  for (int64_t e = 0; e < k * k; ++e) g[static_cast<size_t>(e)] = p[e];
  return g;
}

void slice_into(Tensor4& f, int64_t co, int64_t ci,
                const std::vector<double>& g) {
  const int64_t k = f.h;
  real_t* p = &f.v[static_cast<size_t>(f.idx(co, ci, 0, 0))];
  for (int64_t e = 0; e < k * k; ++e)
    p[e] = static_cast<real_t>(g[static_cast<size_t>(e)]);
}

bool is_zero(const RDACoefficients& p) {
  return p.d == 0.0 && p.vx == 0.0 && p.vy == 0.0 && p.rho == 0.0;
}

}  // namespace

int64_t freq_of_bin(int64_t m, int64_t k) { return m <= k / 2 ? m : m - k; }

CGrid dft2(const std::vector<double>& g, int64_t k) {
  check(k >= 1, "dft2: k must be >= 1");
  check(static_cast<int64_t>(g.size()) == k * k, "dft2: grid size mismatch");
  // Row-column decomposition: O(k^3) instead of O(k^4); exact same sums.
  std::vector<std::complex<double>> twiddle(static_cast<size_t>(k * k));
  for (int64_t m = 0; m < k; ++m)
    for (int64_t x = 0; x < k; ++x) {
      const double a = -kTwoPi * static_cast<double>(m * x) /
                       static_cast<double>(k);
      twiddle[static_cast<size_t>(m * k + x)] = {std::cos(a), std::sin(a)};
    }
  // Transform rows.
  std::vector<std::complex<double>> rows(static_cast<size_t>(k * k));
  for (int64_t y = 0; y < k; ++y)
    for (int64_t mx = 0; mx < k; ++mx) {
      std::complex<double> acc = 0;
      for (int64_t x = 0; x < k; ++x)
        acc += g[static_cast<size_t>(y * k + x)] *
               twiddle[static_cast<size_t>(mx * k + x)];
      rows[static_cast<size_t>(y * k + mx)] = acc;
    }
  // Transform columns.
  CGrid out(k);
  for (int64_t my = 0; my < k; ++my)
    for (int64_t mx = 0; mx < k; ++mx) {
      std::complex<double> acc = 0;
      for (int64_t y = 0; y < k; ++y)
        acc += rows[static_cast<size_t>(y * k + mx)] *
               twiddle[static_cast<size_t>(my * k + y)];
      out.at(my, mx) = acc;
    }
  return out;
}

std::vector<double> idft2(const CGrid& G) {
  const int64_t k = G.k;
  check(k >= 1, "idft2: k must be >= 1");
  std::vector<std::complex<double>> twiddle(static_cast<size_t>(k * k));
  for (int64_t m = 0; m < k; ++m)
    for (int64_t x = 0; x < k; ++x) {
      const double a = kTwoPi * static_cast<double>(m * x) /
                       static_cast<double>(k);
      twiddle[static_cast<size_t>(m * k + x)] = {std::cos(a), std::sin(a)};
    }
  std::vector<std::complex<double>> rows(static_cast<size_t>(k * k));
  for (int64_t my = 0; my < k; ++my)
    for (int64_t x = 0; x < k; ++x) {
      std::complex<double> acc = 0;
      for (int64_t mx = 0; mx < k; ++mx)
        acc += G.at(my, mx) * twiddle[static_cast<size_t>(x * k + mx)];
      rows[static_cast<size_t>(my * k + x)] = acc;
    }
  const double norm = 1.0 / static_cast<double>(k * k);
  std::vector<double> out(static_cast<size_t>(k * k));
  for (int64_t y = 0; y < k; ++y)
    for (int64_t x = 0; x < k; ++x) {
      std::complex<double> acc = 0;
      for (int64_t my = 0; my < k; ++my)
        acc += rows[static_cast<size_t>(my * k + x)] *
               twiddle[static_cast<size_t>(y * k + my)];
      acc *= norm;
      if (std::abs(acc.imag()) >= kImagTol)
        fail("idft2: imaginary residue " + std::to_string(std::abs(acc.imag())) +
             " at (" + std::to_string(y) + "," + std::to_string(x) +
             ") exceeds 1e-9; Hermitian symmetry is broken");
      out[static_cast<size_t>(y * k + x)] = acc.real();
    }
  return out;
}

SpectralSymbol rda_symbol(const RDACoefficients& p, int64_t k, double dt) {
  check(k >= 1, "rda_symbol: k must be >= 1");
  check(dt > 0, "rda_symbol: dt must be positive");
  SpectralSymbol sym;
  sym.k = k;
  sym.dt = dt;
  sym.s.resize(static_cast<size_t>(k * k));
  for (int64_t my = 0; my < k; ++my) {
    const double ky = kTwoPi * static_cast<double>(freq_of_bin(my, k));
    for (int64_t mx = 0; mx < k; ++mx) {
      const double kx = kTwoPi * static_cast<double>(freq_of_bin(mx, k));
      const double re = dt * (-p.d * (kx * kx + ky * ky) + p.rho);
      const double im = dt * (kx * p.vx + ky * p.vy);
      sym.s[static_cast<size_t>(my * k + mx)] =
          std::exp(re) * std::complex<double>(std::cos(im), std::sin(im));
    }
  }
  return sym;
}

Tensor4 rda_step(const Tensor4& field, const RDACoefficients& p, double dt,
                 Act sigma) {
  check_square_field(field, "rda_step");
  check(sigma != Act::relu, "rda_step: sigma must be tanh or identity");
  // Zero coefficients make the symbol identically 1; skip the transforms so
  // the step is an exact identity (before sigma), not one up to roundtrip
  // rounding.
  if (is_zero(p)) return activation(field, sigma);
  const int64_t k = field.h;
  const SpectralSymbol sym = rda_symbol(p, k, dt);
  Tensor4 out = zeros_like(field);
  for (int64_t co = 0; co < field.n; ++co)
    for (int64_t ci = 0; ci < field.c; ++ci) {
      CGrid W = dft2(slice_of(field, co, ci), k);
      for (size_t e = 0; e < W.v.size(); ++e) W.v[e] *= sym.s[e];
      std::vector<double> u = idft2(W);
      if (sigma == Act::tanh_)
        for (double& x : u) x = std::tanh(x);
      slice_into(out, co, ci, u);
    }
  return out;
}

std::vector<Tensor4> rda_trajectory(const Tensor4& w0,
                                    const RDACoefficients& p, int64_t n,
                                    Act sigma) {
  check(n >= 1, "rda_trajectory: need at least one substep");
  std::vector<Tensor4> traj;
  traj.reserve(static_cast<size_t>(n + 1));
  traj.push_back(w0);
  const double dt = 1.0 / static_cast<double>(n);
  for (int64_t j = 0; j < n; ++j)
    traj.push_back(rda_step(traj.back(), p, dt, sigma));
  return traj;
}

RdaStepGrads rda_step_backward(const Tensor4& grad_out, const Tensor4& w_in,
                               const RDACoefficients& p, double dt,
                               Act sigma) {
  check_square_field(w_in, "rda_step_backward");
  check(grad_out.same_shape(w_in), "rda_step_backward: grad shape " +
                                       grad_out.shape_str() +
                                       " does not match field " +
                                       w_in.shape_str());
  const int64_t k = w_in.h;
  const SpectralSymbol sym = rda_symbol(p, k, dt);
  RdaStepGrads g;
  g.grad_w = zeros_like(w_in);
  const double norm = 1.0 / static_cast<double>(k * k);

  const bool zero_p = is_zero(p);
  for (int64_t co = 0; co < w_in.n; ++co)
    for (int64_t ci = 0; ci < w_in.c; ++ci) {
      // Recompute the pre-sigma state U = idft2(S . Fw); with zero
      // coefficients the forward skipped the transforms, so match it.
      CGrid Fw = dft2(slice_of(w_in, co, ci), k);
      std::vector<double> u;
      if (zero_p) {
        u = slice_of(w_in, co, ci);
      } else {
        CGrid SFw(k);
        for (size_t e = 0; e < Fw.v.size(); ++e)
          SFw.v[e] = sym.s[e] * Fw.v[e];
        u = idft2(SFw);
      }

      // Chain through sigma.
      std::vector<double> gu = slice_of(grad_out, co, ci);
      if (sigma == Act::tanh_)
        for (size_t e = 0; e < gu.size(); ++e) {
          const double t = std::tanh(u[e]);
          gu[e] *= 1.0 - t * t;
        }

      CGrid Fgu = dft2(gu, k);

      // Field gradient: adjoint of the linear step is the conjugated symbol.
      if (zero_p) {
        slice_into(g.grad_w, co, ci, gu);
      } else {
        CGrid back(k);
        for (size_t e = 0; e < Fgu.v.size(); ++e)
          back.v[e] = std::conj(sym.s[e]) * Fgu.v[e];
        slice_into(g.grad_w, co, ci, idft2(back));
      }

      // Coefficient gradients via dL = Re[(1/k^2) sum conj(Fgu) dS Fw].
      for (int64_t my = 0; my < k; ++my) {
        const double ky = kTwoPi * static_cast<double>(freq_of_bin(my, k));
        for (int64_t mx = 0; mx < k; ++mx) {
          const double kx = kTwoPi * static_cast<double>(freq_of_bin(mx, k));
          const std::complex<double> base =
              std::conj(Fgu.at(my, mx)) * sym.s[static_cast<size_t>(my * k + mx)] *
              Fw.at(my, mx) * norm;
          const double k2 = kx * kx + ky * ky;
          g.grad_p[0] += (-dt * k2 * base).real();
          g.grad_p[1] += (std::complex<double>(0, kx * dt) * base).real();
          g.grad_p[2] += (std::complex<double>(0, ky * dt) * base).real();
          g.grad_p[3] += (dt * base).real();
        }
      }
    }
  return g;
}

Tensor4 rda_explicit_oracle(const Tensor4& field, const RDACoefficients& p,
                            double dt, int64_t substeps, Act sigma) {
  check_square_field(field, "rda_explicit_oracle");
  check(substeps >= 1, "rda_explicit_oracle: substeps must be >= 1");
  const int64_t k = field.h;
  const double h = 1.0 / static_cast<double>(k);
  const double tau = dt / static_cast<double>(substeps);
  if (p.d * tau / (h * h) > 0.25)
    fail("rda_explicit_oracle: CFL violation, d*tau/h^2 = " +
         std::to_string(p.d * tau / (h * h)) + " > 0.25");
  const double vmax = std::max(std::abs(p.vx), std::abs(p.vy));
  if (vmax * tau / h > 0.5)
    fail("rda_explicit_oracle: CFL violation, |v|*tau/h = " +
         std::to_string(vmax * tau / h) + " > 0.5");

  Tensor4 out = zeros_like(field);
  for (int64_t co = 0; co < field.n; ++co)
    for (int64_t ci = 0; ci < field.c; ++ci) {
      std::vector<double> w = slice_of(field, co, ci);
      std::vector<double> rhs(w.size());
      for (int64_t s = 0; s < substeps; ++s) {
        for (int64_t y = 0; y < k; ++y) {
          const int64_t yp = (y + 1) % k, ym = (y + k - 1) % k;
          for (int64_t x = 0; x < k; ++x) {
            const int64_t xp = (x + 1) % k, xm = (x + k - 1) % k;
            const double c = w[static_cast<size_t>(y * k + x)];
            const double lap =
                (w[static_cast<size_t>(y * k + xp)] +
                 w[static_cast<size_t>(y * k + xm)] +
                 w[static_cast<size_t>(yp * k + x)] +
                 w[static_cast<size_t>(ym * k + x)] - 4.0 * c) /
                (h * h);
            const double gx = (w[static_cast<size_t>(y * k + xp)] -
                               w[static_cast<size_t>(y * k + xm)]) /
                              (2.0 * h);
            const double gy = (w[static_cast<size_t>(yp * k + x)] -
                               w[static_cast<size_t>(ym * k + x)]) /
                              (2.0 * h);
            double r = p.d * lap + p.vx * gx + p.vy * gy + p.rho * c;
            if (sigma == Act::tanh_) r = std::tanh(r);
            rhs[static_cast<size_t>(y * k + x)] = r;
          }
        }
        for (size_t e = 0; e < w.size(); ++e) w[e] += tau * rhs[e];
      }
      slice_into(out, co, ci, w);
    }
  return out;
}

}  // namespace anodev2
