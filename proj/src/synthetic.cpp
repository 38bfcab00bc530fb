#include "fadet/synthetic.hpp"

#include <cmath>

#include "fadet/rng.hpp"
#include "fadet/spectral.hpp"

namespace fadet {

namespace {

uint64_t hash_string(const std::string& s) {
  uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : s) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

// smooth subject texture: a handful of low-frequency waves
void add_live_texture(std::vector<double>& img, int64_t h, int64_t w,
                      const SyntheticDataSpec& spec,
                      const std::string& subject_id, uint64_t index) {
  Rng subject_rng(mix_seed(spec.seed, hash_string(subject_id)));
  Rng image_rng(mix_seed(spec.seed, index));
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < 3; ++k) {
    waves.push_back({subject_rng.uniform(0.5, 2.0), subject_rng.uniform(0.5, 2.0),
                     subject_rng.uniform(0.0, 2.0 * M_PI),
                     subject_rng.uniform(0.15, 0.3)});
  }
  // per-image variation stays low-frequency
  waves.push_back({image_rng.uniform(0.5, 1.5), image_rng.uniform(0.5, 1.5),
                   image_rng.uniform(0.0, 2.0 * M_PI),
                   image_rng.uniform(0.05, 0.12)});
  double brightness = 0.5 + image_rng.uniform(-0.03, 0.03);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double v = brightness;
      for (const auto& wv : waves) {
        v += wv.amp * std::sin(2.0 * M_PI * (wv.fy * y / h + wv.fx * x / w) +
                               wv.phase);
      }
      img[y * w + x] += v;
    }
  }
}

void add_physical_artifact(std::vector<double>& img, int64_t h, int64_t w,
                           const SyntheticDataSpec& spec, Rng& rng) {
  // random field shifted to the top of the band by the alternating carrier
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double carrier = ((y + x) % 2 == 0) ? 1.0 : -1.0;
      img[y * w + x] += spec.physical_noise * carrier * rng.uniform(0.7, 1.1);
    }
  }
}

void add_advanced_artifact(std::vector<double>& img, int64_t h, int64_t w,
                           const SyntheticDataSpec& spec, Rng& rng) {
  double amp = spec.advanced_checker * rng.uniform(0.9, 1.2);
  double phase_y = rng.uniform_int(0, 1);
  double phase_x = rng.uniform_int(0, 1);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double grid = (((y + static_cast<int64_t>(phase_y)) % 2) ^
                     ((x + static_cast<int64_t>(phase_x)) % 2))
                        ? 1.0
                        : -1.0;
      img[y * w + x] += amp * grid;
    }
  }
}

// Every sample carries a fine sensor grain above the high-pass box. Live
// samples keep it coherent; deepfakes flip its sign inside a blended patch.
// Global energy and rectified statistics match the live grain exactly, so
// the artifact is visible only as localized spectral structure.
void add_grain(std::vector<double>& img, int64_t h, int64_t w,
               const SyntheticDataSpec& spec, Rng& rng, bool flip_patch) {
  double amp = spec.deepfake_edge * rng.uniform(0.95, 1.05);
  double fy = rng.uniform(0.30, 0.45) * h, fx = rng.uniform(0.30, 0.45) * w;
  double phase = rng.uniform(0.0, 2.0 * M_PI);
  // patch corners sit mid-token so the sign discontinuity lands inside
  // tokens, where it smears the local grain spectrum
  int64_t oy = 2 + 4 * rng.uniform_int(0, std::max<int64_t>(h / 8 - 2, 0));
  int64_t ox = 2 + 4 * rng.uniform_int(0, std::max<int64_t>(w / 8 - 2, 0));
  int64_t ph = h / 2, pw = w / 2;
  double seam = 0.1 * rng.uniform(0.9, 1.1);  // faint blending luminance step
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double grain =
          amp * std::sin(2.0 * M_PI * (fy * y / h + fx * x / w) + phase);
      bool inside = flip_patch && y >= oy && y < oy + ph && x >= ox && x < ox + pw;
      img[y * w + x] += inside ? seam - grain : grain;
    }
  }
}

}  // namespace

Tensor synthesize_image(const SyntheticDataSpec& spec,
                        const std::string& subject_id, uint64_t index,
                        AttackType type) {
  int64_t h = spec.height, w = spec.width, c = spec.channels;
  std::vector<double> plane(static_cast<size_t>(h * w), 0.0);
  add_live_texture(plane, h, w, spec, subject_id, index);
  Rng artifact_rng(mix_seed(spec.seed ^ 0x5eed5eedULL, index));
  add_grain(plane, h, w, spec, artifact_rng, type == AttackType::deepfake);
  switch (type) {
    case AttackType::physical:
      add_physical_artifact(plane, h, w, spec, artifact_rng);
      break;
    case AttackType::advanced:
      add_advanced_artifact(plane, h, w, spec, artifact_rng);
      break;
    default:
      break;
  }
  std::vector<double> data(static_cast<size_t>(h * w * c));
  for (int64_t i = 0; i < h * w; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) data[i * c + ch] = plane[i];
  }
  return Tensor::from_data({h, w, c}, std::move(data));
}

Tensor synthesize_entry(const SyntheticDataSpec& spec,
                        const ManifestEntry& entry) {
  const std::string scheme = "syn://";
  if (entry.path.rfind(scheme, 0) != 0) {
    throw DataError("entry " + entry.sample_id +
                    " does not use the syn:// path scheme: " + entry.path);
  }
  uint64_t index = std::stoull(entry.path.substr(scheme.size()));
  return synthesize_image(spec, entry.subject_id, index, entry.attack_type);
}

double highband_energy_fraction(const Tensor& image, double alpha) {
  Spectrum spec = fft2(image);
  Spectrum high = highpass(spec, alpha);
  auto energy = [](const Spectrum& s) {
    double e = 0.0;
    for (double v : s.coeffs.real.data()) e += v * v;
    for (double v : s.coeffs.imag.data()) e += v * v;
    return e;
  };
  double total = energy(spec);
  return total == 0.0 ? 0.0 : energy(high) / total;
}

}  // namespace fadet
