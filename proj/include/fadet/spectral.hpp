#pragma once

#include <complex>
#include <vector>

#include "fadet/rng.hpp"
#include "fadet/tensor.hpp"

namespace fadet {

/// Complex-valued tensor as a (real, imag) pair of equally shaped tensors.
struct ComplexTensor {
  Tensor real;
  Tensor imag;
};

/// Recover (magnitude, phase) from a complex tensor. Bins with magnitude
/// below 1e-12 report phase 0 and propagate no gradient, so spectra zeroed
/// by filtering never produce NaN.
ComplexTensor complex_to_polar(const ComplexTensor& z);
ComplexTensor polar_to_complex(const ComplexTensor& polar);

/// Centered 2-D frequency representation of an image, one spectrum per
/// channel. DC sits at (H/2, W/2); centered index i runs over
/// ceil(-W/2) .. floor((W-1)/2).
struct Spectrum {
  ComplexTensor coeffs;  // [H, W, C]
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;
};

/// Forward transform of a real [H,W,C] image, unscaled, centered output.
/// Linear, with the adjoint registered on the tape. Radix-2 for powers of
/// two, Bluestein otherwise. Requires H, W >= 2.
Spectrum fft2(const Tensor& image);

/// Inverse of fft2 (scaled by 1/(H*W)).
ComplexTensor ifft2(const Spectrum& spec);

/// Inverse transform keeping only the real plane.
Tensor ifft2_real(const Spectrum& spec);

/// Binary stop-band mask: 0 exactly where |i| < alpha*W and |j| < alpha*H in
/// centered coordinates, 1 elsewhere.
struct HighPassMask {
  double alpha = 0.0;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> values;  // [H,W] row-major

  static HighPassMask make(int64_t height, int64_t width, double alpha);
  double at(int64_t row, int64_t col) const { return values[row * width + col]; }
};

/// Zeroes spectrum coefficients inside the centered alpha box. Idempotent.
Spectrum highpass(const Spectrum& spec, double alpha);

/// Parameters of the frequency-feature generator: one small conv stack for
/// the amplitude plane, one for the phase plane (3x3 conv, ReLU, 3x3 conv,
/// channel-preserving).
struct FfgParams {
  Tensor amp_w1, amp_b1, amp_w2, amp_b2;
  Tensor ph_w1, ph_b1, ph_w2, ph_b2;
  bool passthrough = false;    // bypass both stacks (identity transforms)
  bool log_amplitude = true;   // condition the amplitude path on log1p

  static FfgParams identity();
  static FfgParams init(int64_t channels, Rng& rng);
  std::vector<std::pair<std::string, Tensor>> named_params(
      const std::string& prefix) const;
};

/// Full frequency-feature generation over a real image:
/// high-pass-filtered reconstruction, second transform, separate amplitude
/// and phase processing, inverse transform back to the pixel grid.
Tensor ffg_forward(const Tensor& image, double alpha, const FfgParams& params);

/// Radial profile of a centered map (e.g. mean log-magnitude): `bins` equal
/// slices of normalized radius, each reporting the mean of its pixels.
struct RadialHistogram {
  std::vector<double> bin_centers;
  std::vector<double> density;
};
RadialHistogram radial_histogram(const std::vector<double>& centered_map,
                                 int64_t height, int64_t width, int bins = 64);

namespace detail {
/// 1-D DFT, sign=-1 forward kernel, sign=+1 inverse kernel (unscaled).
void dft_1d(std::vector<std::complex<double>>& values, int sign);
}  // namespace detail

}  // namespace fadet
