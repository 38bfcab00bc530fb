#include "fadet/spectral.hpp"

#include <algorithm>
#include <cmath>

namespace fadet {

namespace {

// Bins with magnitude below this are treated as zero: phase 0, no gradient.
constexpr double kZeroMagnitude = 1e-12;

bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_pow2(std::vector<std::complex<double>>& a, int sign) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double angle = sign * 2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Chirp-z for arbitrary lengths, reduced to power-of-two transforms.
void bluestein(std::vector<std::complex<double>>& x, int sign) {
  const int64_t n = static_cast<int64_t>(x.size());
  int64_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  std::vector<std::complex<double>> w(n);
  for (int64_t k = 0; k < n; ++k) {
    // angle of e^{sign * i * pi * k^2 / n}, k^2 folded mod 2n for accuracy
    int64_t k2 = (k * k) % (2 * n);
    double angle = sign * M_PI * static_cast<double>(k2) / static_cast<double>(n);
    w[k] = {std::cos(angle), std::sin(angle)};
  }
  std::vector<std::complex<double>> a(m, {0.0, 0.0});
  std::vector<std::complex<double>> b(m, {0.0, 0.0});
  for (int64_t k = 0; k < n; ++k) a[k] = x[k] * w[k];
  for (int64_t k = 0; k < n; ++k) {
    std::complex<double> c = std::conj(w[k]);
    b[k] = c;
    if (k) b[m - k] = c;
  }
  fft_pow2(a, -1);
  fft_pow2(b, -1);
  for (int64_t k = 0; k < m; ++k) a[k] *= b[k];
  fft_pow2(a, +1);
  double inv_m = 1.0 / static_cast<double>(m);
  for (int64_t k = 0; k < n; ++k) x[k] = a[k] * inv_m * w[k];
}

// Raw 2-D transform on interleaved [H,W,C,2] data. `sign` selects the
// kernel, `unshift_input` reads a centered layout, `shift_output` writes
// one, `scale` is applied last.
std::vector<double> fft2_raw(const std::vector<double>& in, int64_t H,
                             int64_t W, int64_t C, int sign,
                             bool unshift_input, bool shift_output,
                             double scale) {
  std::vector<double> out(in.size());
  std::vector<std::complex<double>> row(W), col(H);
  std::vector<std::complex<double>> grid(static_cast<size_t>(H * W));
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        int64_t sy = unshift_input ? (y + H / 2) % H : y;
        int64_t sx = unshift_input ? (x + W / 2) % W : x;
        size_t at = (static_cast<size_t>(sy * W + sx) * C + c) * 2;
        grid[y * W + x] = {in[at], in[at + 1]};
      }
    }
    for (int64_t y = 0; y < H; ++y) {
      std::copy_n(grid.begin() + y * W, W, row.begin());
      detail::dft_1d(row, sign);
      std::copy_n(row.begin(), W, grid.begin() + y * W);
    }
    for (int64_t x = 0; x < W; ++x) {
      for (int64_t y = 0; y < H; ++y) col[y] = grid[y * W + x];
      detail::dft_1d(col, sign);
      for (int64_t y = 0; y < H; ++y) grid[y * W + x] = col[y];
    }
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        int64_t dy = shift_output ? (y + H / 2) % H : y;
        int64_t dx = shift_output ? (x + W / 2) % W : x;
        size_t at = (static_cast<size_t>(dy * W + dx) * C + c) * 2;
        std::complex<double> v = grid[y * W + x] * scale;
        out[at] = v.real();
        out[at + 1] = v.imag();
      }
    }
  }
  return out;
}

}  // namespace

namespace detail {

void dft_1d(std::vector<std::complex<double>>& values, int sign) {
  if (values.size() <= 1) return;
  if (is_pow2(static_cast<int64_t>(values.size()))) {
    fft_pow2(values, sign);
  } else {
    bluestein(values, sign);
  }
}

}  // namespace detail

namespace {

// Differentiable transform node over interleaved complex data. The map is
// real-linear, so the backward pass applies the adjoint transform.
Tensor make_transform_node(const Tensor& interleaved, bool inverse) {
  const Shape& s = interleaved.shape();
  if (s.size() != 4 || s[3] != 2) {
    throw ShapeError("transform expects [H,W,C,2], got " + shape_str(s));
  }
  int64_t H = s[0], W = s[1], C = s[2];
  if (H < 2 || W < 2) {
    throw ContractError("transform needs H, W >= 2, got " + shape_str(s));
  }
  double inv_hw = 1.0 / static_cast<double>(H * W);
  std::vector<double> values =
      inverse ? fft2_raw(interleaved.data(), H, W, C, +1, true, false, inv_hw)
              : fft2_raw(interleaved.data(), H, W, C, -1, false, true, 1.0);
  auto parent = interleaved.impl();
  auto impl = std::make_shared<TensorImpl>(s, std::move(values));
  if (parent->requires_grad) {
    impl->requires_grad = true;
    impl->parents = {parent};
    impl->backward_fn = [parent, H, W, C, inverse, inv_hw](TensorImpl& node) {
      parent->ensure_grad();
      std::vector<double> g =
          inverse ? fft2_raw(node.grad, H, W, C, -1, false, true, inv_hw)
                  : fft2_raw(node.grad, H, W, C, +1, true, false, 1.0);
      for (size_t i = 0; i < g.size(); ++i) parent->grad[i] += g[i];
    };
  }
  return Tensor(std::move(impl));
}

Tensor interleave(const ComplexTensor& z) {
  Shape s = z.real.shape();
  Shape col = s;
  col.push_back(1);
  return concat({reshape(z.real, col), reshape(z.imag, col)},
                static_cast<int>(s.size()));
}

ComplexTensor deinterleave(const Tensor& packed) {
  Shape s = packed.shape();
  int rank = static_cast<int>(s.size());
  std::vector<int64_t> offsets(rank, 0), sizes(s.begin(), s.end());
  sizes[rank - 1] = 1;
  Shape plane(s.begin(), s.end() - 1);
  Tensor re = reshape(slice(packed, offsets, sizes), plane);
  offsets[rank - 1] = 1;
  Tensor im = reshape(slice(packed, offsets, sizes), plane);
  return {re, im};
}

}  // namespace

ComplexTensor complex_to_polar(const ComplexTensor& z) {
  if (z.real.shape() != z.imag.shape()) {
    throw ShapeError("complex tensor planes disagree: " +
                     shape_str(z.real.shape()) + " vs " +
                     shape_str(z.imag.shape()));
  }
  const auto& re = z.real.data();
  const auto& im = z.imag.data();
  std::vector<double> mag(re.size()), ph(re.size());
  for (size_t i = 0; i < re.size(); ++i) {
    double r = std::hypot(re[i], im[i]);
    mag[i] = r;
    ph[i] = r < kZeroMagnitude ? 0.0 : std::atan2(im[i], re[i]);
  }
  auto ri = z.real.impl();
  auto ii = z.imag.impl();
  bool rg = ri->requires_grad || ii->requires_grad;

  auto mag_impl = std::make_shared<TensorImpl>(z.real.shape(), std::move(mag));
  if (rg) {
    mag_impl->requires_grad = true;
    mag_impl->parents = {ri, ii};
    mag_impl->backward_fn = [ri, ii](TensorImpl& node) {
      if (ri->requires_grad) ri->ensure_grad();
      if (ii->requires_grad) ii->ensure_grad();
      for (size_t i = 0; i < node.grad.size(); ++i) {
        double r = node.data[i];
        if (r < kZeroMagnitude) continue;
        double g = node.grad[i];
        if (ri->requires_grad) ri->grad[i] += g * ri->data[i] / r;
        if (ii->requires_grad) ii->grad[i] += g * ii->data[i] / r;
      }
    };
  }
  auto ph_impl = std::make_shared<TensorImpl>(z.real.shape(), std::move(ph));
  if (rg) {
    ph_impl->requires_grad = true;
    ph_impl->parents = {ri, ii};
    ph_impl->backward_fn = [ri, ii](TensorImpl& node) {
      if (ri->requires_grad) ri->ensure_grad();
      if (ii->requires_grad) ii->ensure_grad();
      for (size_t i = 0; i < node.grad.size(); ++i) {
        double a = ri->data[i], b = ii->data[i];
        double r2 = a * a + b * b;
        if (r2 < kZeroMagnitude * kZeroMagnitude) continue;
        double g = node.grad[i];
        if (ri->requires_grad) ri->grad[i] -= g * b / r2;
        if (ii->requires_grad) ii->grad[i] += g * a / r2;
      }
    };
  }
  return {Tensor(std::move(mag_impl)), Tensor(std::move(ph_impl))};
}

ComplexTensor polar_to_complex(const ComplexTensor& polar) {
  const Tensor& magnitude = polar.real;
  const Tensor& phase = polar.imag;
  return {mul(magnitude, cos(phase)), mul(magnitude, sin(phase))};
}

Spectrum fft2(const Tensor& image) {
  if (image.rank() != 3) {
    throw ShapeError("fft2 expects [H,W,C], got " + shape_str(image.shape()));
  }
  int64_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  if (H < 2 || W < 2) {
    throw ContractError("fft2 needs H, W >= 2, got " + shape_str(image.shape()));
  }
  Tensor zeros = Tensor::zeros({H, W, C});
  Tensor packed = make_transform_node(interleave({image, zeros}), false);
  Spectrum spec;
  spec.coeffs = deinterleave(packed);
  spec.height = H;
  spec.width = W;
  spec.channels = C;
  return spec;
}

ComplexTensor ifft2(const Spectrum& spec) {
  Tensor packed = make_transform_node(interleave(spec.coeffs), true);
  return deinterleave(packed);
}

Tensor ifft2_real(const Spectrum& spec) { return ifft2(spec).real; }

HighPassMask HighPassMask::make(int64_t height, int64_t width, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) {
    throw ContractError("high-pass alpha must lie in [0,1], got " +
                        std::to_string(alpha));
  }
  HighPassMask mask;
  mask.alpha = alpha;
  mask.height = height;
  mask.width = width;
  mask.values.assign(static_cast<size_t>(height * width), 1.0);
  for (int64_t r = 0; r < height; ++r) {
    double cj = static_cast<double>(r - height / 2);
    for (int64_t c = 0; c < width; ++c) {
      double ci = static_cast<double>(c - width / 2);
      if (std::fabs(ci) < alpha * static_cast<double>(width) &&
          std::fabs(cj) < alpha * static_cast<double>(height)) {
        mask.values[r * width + c] = 0.0;
      }
    }
  }
  return mask;
}

Spectrum highpass(const Spectrum& spec, double alpha) {
  HighPassMask mask = HighPassMask::make(spec.height, spec.width, alpha);
  Tensor m = Tensor::from_data({spec.height, spec.width, 1}, mask.values);
  Spectrum out;
  out.coeffs = {mul(spec.coeffs.real, m), mul(spec.coeffs.imag, m)};
  out.height = spec.height;
  out.width = spec.width;
  out.channels = spec.channels;
  return out;
}

FfgParams FfgParams::identity() {
  FfgParams p;
  p.passthrough = true;
  p.log_amplitude = false;
  return p;
}

FfgParams FfgParams::init(int64_t channels, Rng& rng) {
  FfgParams p;
  double std1 = std::sqrt(2.0 / static_cast<double>(9 * channels));
  auto conv = [&] { return rng.gaussian_tensor({channels, 3, 3, channels}, std1); };
  // conv biases start slightly off zero: filtered spectra contain exact
  // zeros and a bias at the ReLU kink is not differentiable there
  auto bias = [&] { return Tensor::full({channels}, 0.01, true); };
  p.amp_w1 = conv();
  p.amp_b1 = bias();
  p.amp_w2 = conv();
  p.amp_b2 = bias();
  p.ph_w1 = conv();
  p.ph_b1 = bias();
  p.ph_w2 = conv();
  p.ph_b2 = bias();
  return p;
}

std::vector<std::pair<std::string, Tensor>> FfgParams::named_params(
    const std::string& prefix) const {
  if (passthrough) return {};
  return {{prefix + ".amp_w1", amp_w1}, {prefix + ".amp_b1", amp_b1},
          {prefix + ".amp_w2", amp_w2}, {prefix + ".amp_b2", amp_b2},
          {prefix + ".ph_w1", ph_w1},   {prefix + ".ph_b1", ph_b1},
          {prefix + ".ph_w2", ph_w2},   {prefix + ".ph_b2", ph_b2}};
}

namespace {

Tensor conv_stack(const Tensor& x, const Tensor& w1, const Tensor& b1,
                  const Tensor& w2, const Tensor& b2) {
  return conv2d(relu(conv2d(x, w1, b1)), w2, b2);
}

}  // namespace

Tensor ffg_forward(const Tensor& image, double alpha, const FfgParams& params) {
  Spectrum first = fft2(image);
  Spectrum filtered = highpass(first, alpha);
  Tensor reconstructed = ifft2_real(filtered);
  Spectrum second = fft2(reconstructed);
  ComplexTensor polar = complex_to_polar(second.coeffs);
  Tensor amp = polar.real;
  Tensor phase = polar.imag;
  if (params.log_amplitude) amp = log1p(amp);
  if (!params.passthrough) {
    amp = conv_stack(amp, params.amp_w1, params.amp_b1, params.amp_w2,
                     params.amp_b2);
    phase = conv_stack(phase, params.ph_w1, params.ph_b1, params.ph_w2,
                       params.ph_b2);
  }
  if (params.log_amplitude) amp = expm1(amp);
  Spectrum rebuilt;
  rebuilt.coeffs = polar_to_complex({amp, phase});
  rebuilt.height = second.height;
  rebuilt.width = second.width;
  rebuilt.channels = second.channels;
  return ifft2_real(rebuilt);
}

RadialHistogram radial_histogram(const std::vector<double>& centered_map,
                                 int64_t height, int64_t width, int bins) {
  RadialHistogram hist;
  hist.bin_centers.resize(bins);
  hist.density.assign(bins, 0.0);
  std::vector<int64_t> counts(bins, 0);
  for (int b = 0; b < bins; ++b) {
    hist.bin_centers[b] = (b + 0.5) / static_cast<double>(bins);
  }
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int64_t r = 0; r < height; ++r) {
    double fy = 2.0 * static_cast<double>(r - height / 2) / height;
    for (int64_t c = 0; c < width; ++c) {
      double fx = 2.0 * static_cast<double>(c - width / 2) / width;
      double radius = std::sqrt(fx * fx + fy * fy) * inv_sqrt2;
      int b = std::min(static_cast<int>(radius * bins), bins - 1);
      hist.density[b] += centered_map[r * width + c];
      counts[b]++;
    }
  }
  for (int b = 0; b < bins; ++b) {
    if (counts[b] > 0) hist.density[b] /= static_cast<double>(counts[b]);
  }
  return hist;
}

}  // namespace fadet
