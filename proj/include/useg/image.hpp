#pragma once

#include "useg/loss.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace useg {

/// 8-bit interleaved image (height x width x channels).
struct Image {
  Index height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(Index h, Index w, Index c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h * w * c), fill) {}

  std::uint8_t& at(Index y, Index x, Index c = 0) {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t at(Index y, Index x, Index c = 0) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  bool empty() const { return pixels.empty(); }
  bool operator==(const Image&) const = default;
};

/// Mask byte for pixels excluded from loss and metrics.
inline constexpr std::uint8_t kInvalidLabel = 255;
/// Raw annotation byte for low-confidence corroded regions, resolved by ClassTaxonomy.
inline constexpr std::uint8_t kNoisyCorrodedLabel = 254;

/// RGB image with per-pixel class index and validity.
struct LabeledSample {
  Image image;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> valid;

  Index height() const { return image.height; }
  Index width() const { return image.width; }
  Index valid_count() const;
  /// Pixel counts per class over valid pixels.
  std::vector<std::int64_t> class_histogram(Index num_classes) const;
  /// Mask encoding: class index, or kInvalidLabel where invalid.
  Image mask_image() const;
  void check() const;
  bool operator==(const LabeledSample&) const = default;
};

enum class NoisyCorrodedPolicy { merge_to_corroded, mark_invalid };

struct ClassTaxonomy {
  std::vector<std::string> names{"coating", "wet_coating", "corroded", "rivet", "water", "others"};
  NoisyCorrodedPolicy noisy_corroded_policy = NoisyCorrodedPolicy::merge_to_corroded;

  Index size() const { return static_cast<Index>(names.size()); }
  int index_of(const std::string& name) const;
  void validate() const;
};

/// Replaces kNoisyCorrodedLabel entries according to the taxonomy policy.
void resolve_noisy_labels(LabeledSample& sample, const ClassTaxonomy& taxonomy);

/// Marks pixels where `mask` (single channel) is zero as invalid.
LabeledSample apply_occlusion_mask(LabeledSample sample, const Image& mask);

/// Samples from an 8-bit RGB image and a class-index mask (kInvalidLabel = invalid).
LabeledSample sample_from_mask(Image image, const Image& mask);

/// Scales 8-bit values to [0, 1]; returns 1 x channels x height x width.
Tensor<double> image_to_tensor(const Image& image);

struct Batch {
  Tensor<double> images;
  PixelTargets targets;
};

Batch make_batch(std::span<const LabeledSample* const> samples);

}  // namespace useg
