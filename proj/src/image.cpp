#include "useg/image.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace useg {

Index LabeledSample::valid_count() const {
  return std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; });
}

std::vector<std::int64_t> LabeledSample::class_histogram(Index num_classes) const {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (valid[i] && labels[i] < num_classes) ++counts[labels[i]];
  }
  return counts;
}

Image LabeledSample::mask_image() const {
  Image mask(height(), width(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) mask.pixels[i] = valid[i] ? labels[i] : kInvalidLabel;
  return mask;
}

void LabeledSample::check() const {
  const auto n = static_cast<std::size_t>(height() * width());
  if (image.channels != 3 || image.pixels.size() != n * 3 || labels.size() != n || valid.size() != n) {
    throw ShapeError("LabeledSample: image, labels and validity must cover the same RGB raster");
  }
}

int ClassTaxonomy::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("unknown class name: " + name);
  return static_cast<int>(it - names.begin());
}

void ClassTaxonomy::validate() const {
  if (names.size() < 2 || names.size() > 254) {
    throw std::invalid_argument("ClassTaxonomy: need between 2 and 254 classes");
  }
  if (std::set<std::string>(names.begin(), names.end()).size() != names.size()) {
    throw std::invalid_argument("ClassTaxonomy: class names must be unique");
  }
}

void resolve_noisy_labels(LabeledSample& sample, const ClassTaxonomy& taxonomy) {
  const bool merge = taxonomy.noisy_corroded_policy == NoisyCorrodedPolicy::merge_to_corroded;
  const auto corroded = static_cast<std::uint8_t>(merge ? taxonomy.index_of("corroded") : 0);
  for (std::size_t i = 0; i < sample.labels.size(); ++i) {
    if (sample.labels[i] != kNoisyCorrodedLabel) continue;
    if (merge) {
      sample.labels[i] = corroded;
    } else {
      sample.labels[i] = 0;
      sample.valid[i] = 0;
    }
  }
}

LabeledSample apply_occlusion_mask(LabeledSample sample, const Image& mask) {
  if (mask.channels != 1 || mask.height != sample.height() || mask.width != sample.width()) {
    throw ShapeError("apply_occlusion_mask: mask must be single-channel and match the image");
  }
  for (std::size_t i = 0; i < sample.valid.size(); ++i) {
    if (mask.pixels[i] == 0) sample.valid[i] = 0;
  }
  return sample;
}

LabeledSample sample_from_mask(Image image, const Image& mask) {
  if (image.channels != 3 || mask.channels != 1 || mask.height != image.height ||
      mask.width != image.width) {
    throw ShapeError("sample_from_mask: need an RGB image and a matching single-channel mask");
  }
  LabeledSample sample;
  sample.image = std::move(image);
  sample.labels.resize(mask.pixels.size());
  sample.valid.resize(mask.pixels.size());
  for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
    const bool ok = mask.pixels[i] != kInvalidLabel;
    sample.labels[i] = ok ? mask.pixels[i] : 0;
    sample.valid[i] = ok ? 1 : 0;
  }
  return sample;
}

Tensor<double> image_to_tensor(const Image& image) {
  Tensor<double> t({1, image.channels, image.height, image.width});
  for (Index y = 0; y < image.height; ++y) {
    for (Index x = 0; x < image.width; ++x) {
      for (Index c = 0; c < image.channels; ++c) t(0, c, y, x) = image.at(y, x, c) / 255.0;
    }
  }
  return t;
}

Batch make_batch(std::span<const LabeledSample* const> samples) {
  if (samples.empty()) throw std::invalid_argument("make_batch: no samples");
  const Index h = samples.front()->height(), w = samples.front()->width();
  const auto n = static_cast<Index>(samples.size());
  Batch batch{Tensor<double>({n, 3, h, w}), PixelTargets(n, h, w)};
  for (Index i = 0; i < n; ++i) {
    const LabeledSample& s = *samples[static_cast<std::size_t>(i)];
    s.check();
    if (s.height() != h || s.width() != w) throw ShapeError("make_batch: samples differ in size");
    const Tensor<double> t = image_to_tensor(s.image);
    batch.images.item(i) = t.item(0);
    for (Index p = 0; p < h * w; ++p) {
      const auto at = static_cast<std::size_t>(i * h * w + p);
      batch.targets.labels[at] = s.labels[static_cast<std::size_t>(p)];
      batch.targets.valid[at] = s.valid[static_cast<std::size_t>(p)];
    }
  }
  return batch;
}

}  // namespace useg
