#pragma once

#include <array>
#include <complex>
#include <vector>

#include "anodev2/layers.hpp"
#include "anodev2/tensor.hpp"

namespace anodev2 {

// One (d, vx, vy, rho) set per evolved convolution layer, shared across all
// out_ch x in_ch kernel slices of that layer.
struct RDACoefficients {
  real_t d = 0;
  real_t vx = 0;
  real_t vy = 0;
  real_t rho = 0;
};

struct CGrid {
  int64_t k = 0;
  std::vector<std::complex<double>> v;
  CGrid() = default;
  explicit CGrid(int64_t k_) : k(k_), v(static_cast<size_t>(k_ * k_)) {}
  std::complex<double>& at(int64_t y, int64_t x) {
    return v[static_cast<size_t>(y * k + x)];
  }
  const std::complex<double>& at(int64_t y, int64_t x) const {
    return v[static_cast<size_t>(y * k + x)];
  }
};

struct SpectralSymbol {
  int64_t k = 0;
  double dt = 0;
  std::vector<std::complex<double>> s;  // row-major (my, mx)
};

// Integer frequency for bin m on a k-point grid: m if m <= k/2, else m - k.
int64_t freq_of_bin(int64_t m, int64_t k);

// Unnormalized forward transform of a real k*k row-major grid.
CGrid dft2(const std::vector<double>& g, int64_t k);
// Inverse (divides by k^2). Errors if any imaginary residue is >= 1e-9.
std::vector<double> idft2(const CGrid& G);

SpectralSymbol rda_symbol(const RDACoefficients& p, int64_t k, double dt);

// field: (out_ch, in_ch, k, k). Every slice is multiplied by the same symbol
// in frequency space, then sigma (tanh or identity) is applied pointwise.
Tensor4 rda_step(const Tensor4& field, const RDACoefficients& p, double dt,
                 Act sigma);

// trajectory[0] = w0; trajectory[j] = rda_step(trajectory[j-1], p, 1/n);
// length n+1 covering [0,1].
std::vector<Tensor4> rda_trajectory(const Tensor4& w0,
                                    const RDACoefficients& p, int64_t n,
                                    Act sigma);

struct RdaStepGrads {
  Tensor4 grad_w;
  std::array<double, 4> grad_p{};  // d, vx, vy, rho
};

// DTO adjoint of one step. w_in is the step's input field; the pre-sigma
// state is recomputed internally (two extra small DFTs).
RdaStepGrads rda_step_backward(const Tensor4& grad_out, const Tensor4& w_in,
                               const RDACoefficients& p, double dt, Act sigma);

// Forward-Euler integrator of dw/dt = sigma(d Lap w + v . grad w + rho w)
// with centered differences on the periodic unit square. Independent of the
// spectral path; identity-sigma results converge to rda_step.
Tensor4 rda_explicit_oracle(const Tensor4& field, const RDACoefficients& p,
                            double dt, int64_t substeps,
                            Act sigma = Act::identity);

}  // namespace anodev2
