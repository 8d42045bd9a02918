#pragma once

#include "useg/clahe.hpp"
#include "useg/image.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace useg {

/// Appearance and placement statistics of one class's blobs.
struct BlobStyle {
  int min_count = 0;
  int max_count = 0;
  /// Blob radius bounds as fractions of min(height, width).
  double min_radius = 0.05;
  double max_radius = 0.2;
  std::array<double, 3> color{128, 128, 128};
  /// Per-blob uniform color jitter, in 8-bit levels.
  double color_jitter = 10.0;
  /// Amplitude of low-frequency texture, in 8-bit levels.
  double texture = 10.0;
  /// Boundary irregularity; 0 gives ellipses.
  double irregularity = 0.25;
};

struct SynthConfig {
  Index height = 64;
  Index width = 64;
  ClassTaxonomy taxonomy;
  /// Fraction of all pixels per class; the remainder is occluded (invalid).
  std::vector<double> target_fractions{0.50, 0.12, 0.07, 0.03, 0.06, 0.05};
  /// Per class; entry 0 styles the background coating.
  std::vector<BlobStyle> blobs = default_blob_styles();
  /// Share of all pixels annotated as low-confidence corroded (resolved by taxonomy policy).
  double noisy_corroded_fraction = 0.0;
  /// Per-pixel speckle noise standard deviation, in 8-bit levels.
  double noise_level = 10.0;
  /// Expected number of label-free bright dust streaks per image.
  double dust_streak_rate = 2.0;
  /// Range of the global illumination gain.
  double min_gain = 0.65;
  double max_gain = 1.1;
  std::uint64_t seed = 0;

  static std::vector<BlobStyle> default_blob_styles();
  Index num_classes() const { return taxonomy.size(); }
  void validate() const;
};

/// Renders one scene with an exact ground-truth mask.
LabeledSample generate_scene(const SynthConfig& config);

}  // namespace useg
