#include "useg/evaluate.hpp"

#include <stdexcept>

namespace useg {

namespace {

PixelTargets targets_of(const LabeledSample& sample) {
  PixelTargets t(1, sample.height(), sample.width());
  for (std::size_t i = 0; i < sample.labels.size(); ++i) {
    t.labels[i] = sample.labels[i];
    t.valid[i] = sample.valid[i];
  }
  return t;
}

}  // namespace

ConfusionCounts evaluate_sample(const UNet<double>& model, const LabeledSample& sample, int target_class) {
  const auto pred = predict_labels(model.predict(image_to_tensor(sample.image)));
  ConfusionCounts counts;
  accumulate(pred, targets_of(sample), target_class, counts);
  return counts;
}

MetricsReport evaluate(const UNet<double>& model, const Dataset& data, const MetricsConfig& config) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const Index classes = model.config().num_classes;
  config.validate(classes);
  ConfusionCounts counts;
  std::vector<std::int64_t> class_pixels(static_cast<std::size_t>(classes), 0);
  std::vector<std::int64_t> class_correct(static_cast<std::size_t>(classes), 0);
  for (const LabeledSample& sample : data) {
    const auto pred = predict_labels(model.predict(image_to_tensor(sample.image)));
    const PixelTargets truth = targets_of(sample);
    accumulate(pred, truth, config.target_class, counts);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (!truth.valid[i]) continue;
      const auto label = static_cast<std::size_t>(truth.labels[i]);
      ++class_pixels[label];
      if (pred[i] == truth.labels[i]) ++class_correct[label];
    }
  }
  MetricsReport report = MetricsReport::from_counts(counts, config);
  report.class_pixels = class_pixels;
  for (std::size_t c = 0; c < class_pixels.size(); ++c) {
    report.class_accuracy.push_back(class_pixels[c] == 0 ? std::nullopt
                                                          : std::optional<double>(static_cast<double>(class_correct[c]) /
                                                                                  static_cast<double>(class_pixels[c])));
  }
  return report;
}

}  // namespace useg
