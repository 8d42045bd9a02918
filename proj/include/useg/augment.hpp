#pragma once

#include "useg/image.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <utility>

namespace useg {

/// Each op fires independently with its probability; magnitudes are drawn uniformly.
struct AugmentConfig {
  double rotation_min_degrees = -15.0;
  double rotation_max_degrees = 15.0;
  double rotation_probability = 0.5;
  /// Up to this many rows/columns are cropped away, then the image is zero-padded back.
  Index crop_pixels = 8;
  double crop_probability = 0.5;
  double gamma_min = 0.7;
  double gamma_max = 1.4;
  double gamma_probability = 0.5;
  double brightness_levels = 25.0;
  double brightness_probability = 0.5;
  double color_shift_levels = 10.0;
  double color_probability = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  /// A config whose every probability is zero.
  static AugmentConfig disabled();
};

/// The concrete random choices of one augmentation draw for a given image size.
struct AugmentPlan {
  Index height = 0, width = 0;
  std::optional<double> rotation_degrees;
  bool crop = false;
  Index crop_top = 0, crop_left = 0, crop_height = 0, crop_width = 0;
  Index pad_top = 0, pad_left = 0;
  std::optional<double> gamma;
  std::optional<double> brightness;
  std::optional<std::array<double, 3>> color_shift;

  /// Continuous source coordinates (y, x) of output pixel (y, x), or nullopt when the
  /// pixel falls outside the transformed image.
  std::optional<std::pair<double, double>> source_of(Index y, Index x) const;
};

AugmentPlan draw_augment_plan(const AugmentConfig& config, std::uint64_t draw, Index height,
                              Index width);

/// Geometric ops move image (bilinear) and labels/validity (nearest) together; pixels with no
/// source become invalid. Photometric ops touch the image only.
LabeledSample apply_augment_plan(const LabeledSample& sample, const AugmentPlan& plan);

/// Deterministic in (config.seed, draw).
LabeledSample augment(const LabeledSample& sample, const AugmentConfig& config, std::uint64_t draw);

}  // namespace useg
