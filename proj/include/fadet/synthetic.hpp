#pragma once

#include <cstdint>
#include <string>

#include "fadet/protocols.hpp"
#include "fadet/tensor.hpp"

namespace fadet {

/// Deterministic stand-in imagery. Live faces are smooth low-frequency
/// textures tied to the subject; fakes reuse the subject texture plus a
/// type-specific artifact concentrated in the upper frequency bands, so the
/// live/fake gap is measurable in the spectrum by construction.
struct SyntheticDataSpec {
  uint64_t seed = 7;
  int64_t height = 16;
  int64_t width = 16;
  int64_t channels = 1;
  double physical_noise = 0.40;   // modulated noise band
  double advanced_checker = 0.35; // alternating grid
  double deepfake_edge = 0.50;    // grain amplitude; deepfakes flip it in a patch
  double min_highband_margin = 1.3;  // expected fake/live high-band ratio
};

/// Pure function of (spec.seed, subject, index, type).
Tensor synthesize_image(const SyntheticDataSpec& spec,
                        const std::string& subject_id, uint64_t index,
                        AttackType type);

/// Resolves a manifest entry whose path uses the syn://<index> scheme.
Tensor synthesize_entry(const SyntheticDataSpec& spec, const ManifestEntry& entry);

/// Fraction of spectral energy outside the centered alpha box.
double highband_energy_fraction(const Tensor& image, double alpha);

}  // namespace fadet
