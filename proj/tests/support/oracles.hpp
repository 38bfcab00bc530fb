#pragma once

// Independent oracles used by the unit and acceptance suites. Everything in
// here recomputes expectations from first principles and must stay clear of
// the library's fast paths (tape, radix FFT, trapezoid AUC, ...).

#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "fadet/tensor.hpp"

namespace oracles {

// Central-difference gradient of `loss` w.r.t. every element of `param`.
// `loss` must rebuild the forward pass from current parameter data.
inline std::vector<double> fd_gradient(const std::function<double()>& loss,
                                       fadet::Tensor param, double h = 1e-5) {
  std::vector<double> grad(param.numel());
  auto& data = param.mutable_data();
  for (int64_t i = 0; i < param.numel(); ++i) {
    double saved = data[i];
    data[i] = saved + h;
    double up = loss();
    data[i] = saved - h;
    double down = loss();
    data[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

struct GradCheck {
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline double rel_err(double a, double b) {
  double denom = std::max({std::fabs(a), std::fabs(b), 1e-4});
  return std::fabs(a - b) / denom;
}

// Compares tape gradients against central differences for one parameter.
// The forward builder must return a scalar loss tensor over fresh graph
// nodes; parameters are reused across calls.
inline GradCheck grad_check(const std::function<fadet::Tensor()>& forward,
                            fadet::Tensor param, double h = 1e-5) {
  fadet::Tensor loss = forward();
  param.zero_grad();
  fadet::backward(loss);
  std::vector<double> analytic = param.grad();
  auto numeric = fd_gradient([&] { return forward().item(); }, param, h);
  GradCheck result;
  for (int64_t i = 0; i < param.numel(); ++i) {
    double e = rel_err(analytic[i], numeric[i]);
    if (e > result.max_rel_err) {
      result.max_rel_err = e;
      result.worst_index = i;
      result.analytic = analytic[i];
      result.numeric = numeric[i];
    }
  }
  return result;
}

// Naive O(N^2) centered 2-D DFT, the reference for the fast transform.
// Input is a real H x W image; output indexed so DC sits at (H/2, W/2).
inline std::vector<std::complex<double>> dft2_centered(
    const std::vector<double>& img, int64_t h, int64_t w) {
  std::vector<std::complex<double>> out(static_cast<size_t>(h * w));
  const double two_pi = 2.0 * M_PI;
  for (int64_t ku = 0; ku < h; ++ku) {
    for (int64_t kv = 0; kv < w; ++kv) {
      std::complex<double> acc(0.0, 0.0);
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          double angle = -two_pi * (static_cast<double>(ku * y) / h +
                                    static_cast<double>(kv * x) / w);
          acc += img[y * w + x] * std::complex<double>(std::cos(angle),
                                                       std::sin(angle));
        }
      }
      // shift: frequency (ku,kv) lands at centered position
      int64_t cy = (ku + h / 2) % h;
      int64_t cx = (kv + w / 2) % w;
      out[cy * w + cx] = acc;
    }
  }
  return out;
}

}  // namespace oracles
